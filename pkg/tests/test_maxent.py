import math

import numpy as np
import pytest
from scipy.optimize import brentq

from nonext.entropy import (
    INFINITE_DIVERGENCE,
    escort_expectation,
    escort_normalization,
    q_kl_divergence,
    tsallis_entropy_normalized,
)
from nonext.maxent import (
    ConvergenceError,
    OverflowGuardError,
    SolverConfig,
    _original_relation_defect,
    gibbs_state,
    maxent_relation_defect,
    multistart_equilibrium,
    solve_equilibrium,
)
from nonext.operators import (
    DensityMatrix,
    diagonal_state,
    maximally_mixed,
    random_density,
    random_hermitian,
    trace_distance,
)

# root of the two-level self-consistency equation for E = (0, 1), beta = 1, q = 0.5
TWO_LEVEL_P0 = 0.8307189138830738


def _two_level_residual(p0, q=0.5, beta=1.0):
    p1 = 1 - p0
    c = p0**q + p1**q
    U = p1**q / c
    b0, b1 = 1 + (1 - q) * beta * c * U, 1 - (1 - q) * beta * c * (1 - U)
    return (p0 / p1) ** (1 - q) - b0 / b1


def _check_invariants(eq, H, tol=1e-8):
    assert eq.partition_identity_defect < tol
    assert abs(escort_expectation(eq.rho_eq, H, eq.q) - eq.U_q) < tol
    assert abs(escort_normalization(eq.rho_eq, eq.q) - eq.c_q) < tol


class TestGibbs:
    def test_logistic(self):
        eq = gibbs_state(np.diag([0.0, 1.0]), 1.0)
        p0 = 1 / (1 + math.exp(-1))
        assert np.allclose(eq.rho_eq.matrix, np.diag([p0, 1 - p0]), atol=1e-15)
        assert p0 == pytest.approx(0.731059, abs=1e-6)

    def test_zero_beta(self, rng):
        eq = gibbs_state(random_hermitian(4, rng), 0.0)
        assert np.allclose(eq.rho_eq.matrix, np.eye(4) / 4, atol=1e-15)

    def test_scalar_hamiltonian(self):
        eq = gibbs_state(2.5 * np.eye(3), 7.0)
        assert np.allclose(eq.rho_eq.matrix, np.eye(3) / 3, atol=1e-15)

    @pytest.mark.parametrize("beta", [-3.0, 0.5, 4.0])
    def test_matches_matrix_exponential(self, rng, beta):
        from scipy.linalg import expm

        H = random_hermitian(4, rng)
        W = expm(-beta * H.matrix)
        eq = gibbs_state(H, beta)
        assert np.abs(eq.rho_eq.matrix - W / np.trace(W)).max() < 1e-12
        assert eq.c_q == 1.0 and eq.q.q == 1.0
        assert eq.U_q == pytest.approx(np.trace(eq.rho_eq.matrix @ H.matrix).real, abs=1e-14)

    def test_partition_function_includes_energy_shift(self, rng):
        H = random_hermitian(3, rng)
        eq = gibbs_state(H, 1.3)
        Z_textbook = np.sum(np.exp(-1.3 * np.linalg.eigvalsh(H.matrix)))
        assert eq.Z_q == pytest.approx(Z_textbook * math.exp(1.3 * eq.U_q), rel=1e-12)

    def test_overflow_guard(self):
        with pytest.raises(OverflowGuardError):
            gibbs_state(np.diag([0.0, 1.0]), 701.0)
        gibbs_state(np.diag([0.0, 1.0]), 699.0)


class TestSolver:
    def test_two_level_oracle(self):
        root = brentq(_two_level_residual, 0.5, 1 - 1e-12, xtol=1e-15)
        assert root == pytest.approx(TWO_LEVEL_P0, abs=1e-13)
        eq = solve_equilibrium(np.diag([0.0, 1.0]), 1.0, 0.5)
        assert abs(eq.rho_eq.probabilities[1] - TWO_LEVEL_P0) < 1e-8
        _check_invariants(eq, np.diag([0.0, 1.0]))

    @pytest.mark.parametrize("q", [0.2, 0.5, 0.9, 1.5])
    def test_zero_beta(self, rng, q):
        H = random_hermitian(4, rng)
        eq = solve_equilibrium(H, 0.0, q)
        assert np.allclose(eq.rho_eq.matrix, np.eye(4) / 4, atol=1e-12)
        assert eq.Z_q == pytest.approx(4.0, rel=1e-12)
        assert eq.U_q == pytest.approx(np.trace(H.matrix).real / 4, abs=1e-12)

    @pytest.mark.parametrize("beta", [-2.0, 1.0, 10.0])
    def test_scalar_hamiltonian(self, beta):
        eq = solve_equilibrium(-1.5 * np.eye(3), beta, 0.4)
        assert np.allclose(eq.rho_eq.matrix, np.eye(3) / 3, atol=1e-12)

    def test_q_one_redirects_to_gibbs(self, rng):
        H = random_hermitian(3, rng)
        a, b = solve_equilibrium(H, 0.8, 1.0), gibbs_state(H, 0.8)
        assert np.array_equal(a.rho_eq.matrix, b.rho_eq.matrix)

    @pytest.mark.parametrize("seed", range(25))
    def test_invariants_random(self, seed):
        rng = np.random.default_rng(seed)
        H = random_hermitian(int(rng.integers(2, 7)), rng)
        q, beta = float(rng.uniform(0.1, 0.95)), float(rng.uniform(-2, 5))
        eq = solve_equilibrium(H, beta, q)
        assert eq.residual < 1e-10
        _check_invariants(eq, H)

    @pytest.mark.parametrize("q", [1 - 1e-4, 1 + 1e-4])
    def test_continuity_in_q(self, rng, q):
        for _ in range(10):
            H, beta = random_hermitian(4, rng), float(rng.uniform(0.1, 3))
            assert trace_distance(solve_equilibrium(H, beta, q).rho_eq, gibbs_state(H, beta).rho_eq) < 1e-3

    def test_cutoff(self):
        H = np.diag([0.0, 1.0, 10.0])
        eq = solve_equilibrium(H, 5.0, 0.5)
        assert eq.support_size < 3
        assert eq.rho_eq.probabilities.min() == 0.0
        assert any("cutoff" in w for w in eq.warnings)
        _check_invariants(eq, H)

    def test_negative_beta_inverts_population(self):
        eq = solve_equilibrium(np.diag([0.0, 1.0]), -1.0, 0.5)
        assert eq.rho_eq.matrix[1, 1].real > eq.rho_eq.matrix[0, 0].real

    def test_q_above_one_best_effort(self, rng):
        H = random_hermitian(3, rng)
        eq = solve_equilibrium(H, 1.0, 1.5)
        _check_invariants(eq, H)

    def test_deterministic(self, rng):
        H = random_hermitian(5, rng)
        a, b = solve_equilibrium(H, 2.0, 0.6), solve_equilibrium(H, 2.0, 0.6)
        assert np.array_equal(a.rho_eq.matrix, b.rho_eq.matrix)
        assert (a.Z_q, a.c_q, a.U_q, a.iterations, a.residual) == (b.Z_q, b.c_q, b.U_q, b.iterations, b.residual)

    def test_convergence_error_carries_diagnostics(self, rng):
        H = random_hermitian(4, rng)
        with pytest.raises(ConvergenceError) as info:
            solve_equilibrium(H, 3.0, 0.3, SolverConfig(max_iter=1))
        err = info.value
        assert err.iterations == 1 and err.residual > 1e-10
        assert isinstance(err.iterate, DensityMatrix)

    @pytest.mark.parametrize("init", ["maximally_mixed", "custom"])
    def test_initializations_agree(self, rng, init):
        H = random_hermitian(4, rng)
        start = random_density(4, rng) if init == "custom" else init
        a = solve_equilibrium(H, 1.5, 0.7)
        b = solve_equilibrium(H, 1.5, 0.7, SolverConfig(init=start))
        assert trace_distance(a.rho_eq, b.rho_eq) < 1e-8

    def test_custom_init_dimension_mismatch(self):
        with pytest.raises(ValueError):
            solve_equilibrium(np.diag([0.0, 1.0]), 1.0, 0.5, SolverConfig(init=maximally_mixed(3)))

    @pytest.mark.parametrize(
        "kwargs", [{"tol": 0.0}, {"damping": 0.0}, {"damping": 1.5}, {"max_iter": 0}, {"init": "zero"}]
    )
    def test_config_validation(self, kwargs):
        with pytest.raises(ValueError):
            SolverConfig(**kwargs)

    def test_multistart(self, rng):
        H = random_hermitian(4, rng)
        state, dist, consistent = multistart_equilibrium(H, 2.0, 0.5)
        assert consistent and dist < 1e-6
        assert state.residual < 1e-10


def _full_support_instance(rng, dim_range=(2, 7), min_support=2):
    while True:
        n = int(rng.integers(*dim_range))
        H = random_hermitian(n, rng)
        q, beta = float(rng.uniform(0.1, 0.95)), float(rng.uniform(-2, 4))
        eq = solve_equilibrium(H, beta, q)
        if eq.support_size >= min_support:
            return H, eq


def _state_in_support(eq, rng):
    k, V = eq.support_size, eq.rho_eq.eigenvectors
    P = V[:, eq.rho_eq.probabilities > 0]
    sub = random_density(k, rng)
    return DensityMatrix(P @ sub.matrix @ P.conj().T)


class TestRelation:
    def test_equilibrium_itself(self, rng):
        H = random_hermitian(3, rng)
        eq = solve_equilibrium(H, 2.0, 0.7)
        defect, K = maxent_relation_defect(eq.rho_eq, eq)
        assert abs(defect) < 1e-12 and abs(K) < 1e-12

    def test_zero_beta_reduces_to_entropy_gap(self, rng):
        eq = solve_equilibrium(random_hermitian(3, rng), 0.0, 0.6)
        rho = random_density(3, rng)
        _, K = maxent_relation_defect(rho, eq)
        gap = tsallis_entropy_normalized(maximally_mixed(3), 0.6) - tsallis_entropy_normalized(rho, 0.6)
        assert K == pytest.approx(gap, abs=1e-12) and K >= 0

    def test_three_level_example(self, rng):
        H = random_hermitian(3, rng, scale=0.2)
        eq = solve_equilibrium(H, 2.0, 0.7)
        assert eq.support_size == 3
        for _ in range(10):
            defect, K = maxent_relation_defect(random_density(3, rng), eq)
            assert abs(defect) < 1e-9 and K >= -1e-10

    def test_random_instances(self, rng):
        for _ in range(100):
            _, eq = _full_support_instance(rng, min_support=1)
            defect, K = maxent_relation_defect(_state_in_support(eq, rng), eq)
            assert abs(defect) < 1e-9
            assert K >= -1e-10

    def test_gibbs_relation(self, rng):
        for _ in range(20):
            H = random_hermitian(4, rng)
            eq = gibbs_state(H, float(rng.uniform(-2, 3)))
            defect, K = maxent_relation_defect(random_density(4, rng), eq)
            assert abs(defect) < 1e-9 and K >= -1e-10

    def test_support_violation(self):
        eq = solve_equilibrium(np.diag([0.0, 1.0, 10.0]), 5.0, 0.5)
        assert eq.support_size < 3
        defect, _ = maxent_relation_defect(maximally_mixed(3), eq)
        assert defect == INFINITE_DIVERGENCE

    def test_divergence_zero_only_at_equilibrium(self, rng):
        for _ in range(50):
            _, eq = _full_support_instance(rng)
            rho = _state_in_support(eq, rng)
            K = q_kl_divergence(rho, eq.rho_eq, eq.q)
            if K < 1e-12:
                assert trace_distance(rho, eq.rho_eq) < 1e-8

    def test_unnormalized_forms_break_the_relation(self, rng):
        broken = 0
        for _ in range(50):
            _, eq = _full_support_instance(rng)
            rho = _state_in_support(eq, rng)
            assert abs(maxent_relation_defect(rho, eq)[0]) < 1e-9
            broken += abs(_original_relation_defect(rho, eq)) > 1e-3
        assert broken >= 45


def test_variational_maximum(rng):
    eps, done = 1e-4, 0
    while done < 200:
        n = int(rng.integers(2, 6))
        H = random_hermitian(n, rng)
        q, beta = float(rng.uniform(0.2, 0.9)), float(rng.uniform(0.2, 2.0))
        eq = solve_equilibrium(H, beta, q)
        p, V = eq.rho_eq.probabilities, eq.rho_eq.eigenvectors
        if p.min() < 1e-2:
            continue
        E = np.einsum("ia,ij,ja->a", V.conj(), H.matrix, V).real
        # diagonal part orthogonal to the trace and to the first-order escort-energy change
        basis = np.linalg.qr(np.stack([np.ones(n), p ** (q - 1) * (E - eq.U_q)], axis=1))[0]
        d = rng.standard_normal(n)
        d -= basis @ (basis.T @ d)
        X = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
        X = X + X.conj().T
        np.fill_diagonal(X, 0)
        D = np.diag(d) + X
        D /= np.linalg.norm(D)
        rho = DensityMatrix(eq.rho_eq.matrix + eps * V @ D @ V.conj().T)
        assert tsallis_entropy_normalized(rho, q) <= eq.entropy + 1e-8
        done += 1
