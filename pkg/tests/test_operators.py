import numpy as np
import pytest

from nonext.operators import (
    DensityMatrix,
    DomainError,
    HermitianOperator,
    ValidationError,
    diagonal_state,
    identity,
    matrix_power,
    maximally_mixed,
    pure_state,
    random_density,
    random_hermitian,
    random_unitary,
    spectral_decompose,
    tensor_product,
    trace,
)


class TestHermitianOperator:
    def test_rejects_non_hermitian_and_names_entry(self):
        A = np.array([[1.0, 2.0], [0.0, 1.0]])
        with pytest.raises(ValidationError, match=r"\(0, 1\)"):
            HermitianOperator(A)

    def test_rejects_non_square(self):
        with pytest.raises(ValidationError):
            HermitianOperator(np.zeros((2, 3)))

    def test_rejects_nan(self):
        A = np.eye(2)
        A[1, 1] = np.nan
        with pytest.raises(ValidationError, match=r"\(1, 1\)"):
            HermitianOperator(A)

    def test_matrix_is_read_only(self):
        H = HermitianOperator(np.eye(2))
        with pytest.raises(ValueError):
            H.matrix[0, 0] = 5.0

    def test_tiny_asymmetry_within_tolerance_accepted(self):
        A = np.array([[1.0, 0.5 + 1e-13], [0.5, 0.0]])
        assert HermitianOperator(A).dim == 2


class TestDensityMatrix:
    def test_clamps_small_negative_eigenvalue(self):
        rho = DensityMatrix(np.diag([1.0 + 5e-13, -5e-13]))
        assert rho.probabilities.min() == 0.0
        assert rho.rank == 1

    def test_rejects_negative_eigenvalue(self):
        with pytest.raises(ValidationError, match="negative eigenvalue"):
            DensityMatrix(np.diag([1.1, -0.1]))

    def test_rejects_bad_trace(self):
        with pytest.raises(ValidationError, match="trace"):
            DensityMatrix(np.diag([0.5, 0.4]))

    def test_from_spectrum_keeps_tiny_probabilities(self):
        rho = DensityMatrix.from_spectrum([1 - 1e-20, 1e-20], np.eye(2))
        assert rho.probabilities[0] == 1e-20

    def test_pure_state_rank_one(self, rng):
        psi = rng.standard_normal(4) + 1j * rng.standard_normal(4)
        rho = pure_state(psi)
        assert rho.rank == 1
        P = np.outer(psi, psi.conj()) / np.vdot(psi, psi).real
        assert np.abs(rho.matrix - P).max() < 1e-12

    def test_random_pure_state_from_matrix_has_exact_zeros(self, rng):
        psi = rng.standard_normal(5) + 1j * rng.standard_normal(5)
        psi /= np.linalg.norm(psi)
        rho = DensityMatrix(np.outer(psi, psi.conj()))
        assert rho.rank == 1


class TestSpectralDecompose:
    def test_identity(self):
        assert np.allclose(spectral_decompose(identity(3)).eigenvalues, [1, 1, 1])

    def test_diagonal_sorted_ascending(self):
        w = spectral_decompose(np.diag([2.0, 0.0, 1.0])).eigenvalues
        assert list(w) == [0.0, 1.0, 2.0]

    def test_non_hermitian_rejected(self):
        with pytest.raises(ValidationError):
            spectral_decompose(np.array([[0, 1], [0, 0]]))

    @pytest.mark.parametrize("seed", range(100))
    def test_reconstruction_and_orthonormality(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(1, 9))
        H = random_hermitian(n, rng)
        decomp = spectral_decompose(H)
        assert np.abs(decomp.reconstruct() - H.matrix).max() < 1e-10
        V = decomp.eigenvectors
        assert np.abs(V.conj().T @ V - np.eye(n)).max() < 1e-10
        assert np.all(np.diff(decomp.eigenvalues) >= 0)

    def test_phase_convention(self, rng):
        decomp = spectral_decompose(random_hermitian(5, rng))
        for k in range(5):
            col = decomp.eigenvectors[:, k]
            first = col[np.flatnonzero(np.abs(col) > 1e-10)[0]]
            assert abs(first.imag) < 1e-15 and first.real > 0

    def test_degenerate_cluster_is_deterministic(self, rng):
        U = random_unitary(4, rng)
        H = U @ np.diag([0.0, 1.0, 1.0, 2.0]) @ U.conj().T
        a = spectral_decompose(H)
        b = spectral_decompose(np.array(H))
        assert np.array_equal(a.eigenvectors, b.eigenvectors)
        assert np.abs(a.reconstruct() - H).max() < 1e-10


class TestMatrixPower:
    def test_maximally_mixed_sqrt(self):
        out = matrix_power(maximally_mixed(2), 0.5)
        assert np.allclose(out.matrix, 2**-0.5 * np.eye(2), atol=1e-15)

    def test_power_one_is_identity_map(self, rng):
        rho = random_density(4, rng)
        assert np.abs(matrix_power(rho, 1.0).matrix - rho.matrix).max() < 1e-14

    def test_projector_fixed(self):
        P = diagonal_state([1.0, 0.0])
        assert np.array_equal(matrix_power(P, 0.3).matrix, P.matrix)

    @pytest.mark.parametrize("s", [0.0, -0.5])
    def test_nonpositive_exponent_rejected(self, s):
        with pytest.raises(DomainError):
            matrix_power(maximally_mixed(2), s)

    @pytest.mark.parametrize("seed", range(20))
    def test_spectrum_is_powered(self, seed):
        rng = np.random.default_rng(seed)
        rho = random_density(int(rng.integers(2, 7)), rng)
        s = float(rng.uniform(0.1, 3.0))
        got = np.linalg.eigvalsh(matrix_power(rho, s).matrix)
        assert np.abs(np.sort(got) - np.sort(rho.probabilities**s)).max() < 1e-10

    @pytest.mark.parametrize("seed", range(20))
    def test_semigroup_on_support(self, seed):
        rng = np.random.default_rng(seed)
        rho = random_density(5, rng, rank=3)
        s1, s2 = rng.uniform(0.1, 2.0, size=2)
        lhs = matrix_power(rho, s1 + s2).matrix
        rhs = matrix_power(rho, s1).matrix @ matrix_power(rho, s2).matrix
        assert np.abs(lhs - rhs).max() < 1e-10


class TestTraceAndTensor:
    def test_trace_identity(self):
        assert trace(identity(4)) == 4.0

    def test_trace_of_state(self, rng):
        assert abs(trace(random_density(5, rng)) - 1.0) < 1e-12

    def test_trace_of_square(self):
        rho = diagonal_state([0.2, 0.3, 0.5])
        # 0.04 + 0.09 + 0.25
        assert abs(trace(rho.matrix @ rho.matrix) - 0.38) < 1e-15

    def test_mixed_product(self):
        out = tensor_product(maximally_mixed(2), maximally_mixed(2))
        assert out.dim == 4
        assert np.allclose(out.matrix, np.eye(4) / 4, atol=1e-15)

    def test_pure_product_rank_one(self, rng):
        a = pure_state(rng.standard_normal(2) + 1j * rng.standard_normal(2))
        b = pure_state(rng.standard_normal(3))
        out = tensor_product(a, b)
        assert out.rank == 1
        assert np.abs(out.matrix - np.kron(a.matrix, b.matrix)).max() < 1e-12

    @pytest.mark.parametrize("seed", range(10))
    def test_eigenvalues_are_pairwise_products(self, seed):
        rng = np.random.default_rng(seed)
        a, b = random_density(3, rng), random_density(2, rng)
        out = tensor_product(a, b)
        brute = np.sort([x * y for x in a.probabilities for y in b.probabilities])
        assert np.abs(np.sort(np.linalg.eigvalsh(out.matrix)) - brute).max() < 1e-12
        assert abs(trace(out) - trace(a) * trace(b)) < 1e-12
