"""Dense Hermitian operators and density matrices.

Everything downstream works on the spectral decomposition, so a
:class:`DensityMatrix` computes (and canonicalizes) its eigensystem once at
construction and keeps it.  Instances are immutable: the stored arrays are
flagged read-only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

HERMITIAN_TOL = 1e-12
EIGEN_CLAMP_TOL = 1e-12
TRACE_TOL = 1e-12
UNITARY_TOL = 1e-10
PHASE_TOL = 1e-10
DEGENERACY_TOL = 1e-10

_EPS = np.finfo(float).eps


class ValidationError(ValueError):
    """Input does not satisfy an operator invariant."""


class DomainError(ValueError):
    """Argument outside the domain of a spectral function."""


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=complex if np.iscomplexobj(a) else float, copy=True)
    a.setflags(write=False)
    return a


def _noise_floor(dim: int) -> float:
    # eigh on a rank-deficient state returns |lambda| of a few ulps
    return 8.0 * dim * _EPS


@dataclass(frozen=True, eq=False)
class SpectralDecomposition:
    """Eigenvalues (ascending) with orthonormal eigenvectors as columns."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "eigenvalues", _readonly(self.eigenvalues))
        object.__setattr__(self, "eigenvectors", _readonly(self.eigenvectors))

    def __len__(self) -> int:
        return len(self.eigenvalues)

    def reconstruct(self, values: np.ndarray | None = None) -> np.ndarray:
        """Return sum_a f_a |a><a| with f_a = ``values`` (default: eigenvalues)."""
        f = self.eigenvalues if values is None else np.asarray(values)
        V = self.eigenvectors
        return (V * f) @ V.conj().T


def _fix_phases(V: np.ndarray) -> np.ndarray:
    V = np.array(V, dtype=complex)
    for k in range(V.shape[1]):
        col = V[:, k]
        nz = np.flatnonzero(np.abs(col) > PHASE_TOL)
        if nz.size:
            z = col[nz[0]]
            V[:, k] = col * (abs(z) / z)
    return V


def _column_key(col: np.ndarray) -> tuple:
    return tuple(x for z in np.round(col, 12) for x in (z.real, z.imag))


def canonicalize(eigenvalues, eigenvectors) -> SpectralDecomposition:
    """Sort ascending, fix phases and order degenerate clusters deterministically.

    Each eigenvector's first component above ``PHASE_TOL`` is made real
    positive; columns inside a cluster of equal eigenvalues are sorted
    lexicographically on their (real, imag) entries.
    """
    w = np.asarray(eigenvalues, dtype=float)
    order = np.argsort(w, kind="stable")
    w = np.array(w[order])
    V = _fix_phases(np.asarray(eigenvectors)[:, order])
    tol = DEGENERACY_TOL * max(1.0, float(np.max(np.abs(w))) if w.size else 1.0)
    i, n = 0, len(w)
    while i < n:
        j = i + 1
        while j < n and w[j] - w[j - 1] <= tol:
            j += 1
        if j - i > 1:
            # permute (value, vector) pairs together; clusters may be only
            # numerically degenerate
            cols = sorted(range(i, j), key=lambda k: _column_key(V[:, k]))
            w[i:j] = w[cols]
            V[:, i:j] = V[:, cols]
        i = j
    return SpectralDecomposition(w, V)


class HermitianOperator:
    """A dense complex self-adjoint matrix.

    Raises :class:`ValidationError` if the input is not square, not finite or
    deviates from its conjugate transpose by more than ``atol`` anywhere; the
    message names the worst element.
    """

    __slots__ = ("_matrix", "_spectrum")

    def __init__(self, matrix, *, atol: float = HERMITIAN_TOL):
        A = np.asarray(matrix, dtype=complex)
        if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] < 1:
            raise ValidationError(f"expected a square matrix, got shape {A.shape}")
        bad = np.argwhere(~np.isfinite(A))
        if bad.size:
            i, j = bad[0]
            raise ValidationError(f"entry ({i}, {j}) is not finite")
        dev = np.abs(A - A.conj().T)
        if dev.max() > atol:
            i, j = np.unravel_index(np.argmax(dev), dev.shape)
            raise ValidationError(
                f"matrix is not Hermitian: entries ({i}, {j}) and ({j}, {i}) "
                f"differ from conjugates by {dev[i, j]:.3e}"
            )
        self._matrix = _readonly((A + A.conj().T) / 2)
        self._spectrum = None

    @property
    def matrix(self) -> np.ndarray:
        return self._matrix

    @property
    def dim(self) -> int:
        return self._matrix.shape[0]

    @property
    def spectrum(self) -> SpectralDecomposition:
        if self._spectrum is None:
            w, V = np.linalg.eigh(self._matrix)
            self._spectrum = canonicalize(w, V)
        return self._spectrum

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self._matrix, dtype=dtype)

    def __repr__(self) -> str:
        return f"{type(self).__name__}(dim={self.dim})"


class DensityMatrix(HermitianOperator):
    """Positive semi-definite, unit-trace Hermitian operator.

    Eigenvalues in ``[-EIGEN_CLAMP_TOL, 0)`` are clamped to zero, as are
    eigensolver round-off values below a few ulps; anything more negative is
    rejected.  ``probabilities`` and ``eigenvectors`` give the canonical
    spectral decomposition.
    """

    __slots__ = ()

    def __init__(self, matrix, *, atol: float = HERMITIAN_TOL, trace_tol: float = TRACE_TOL):
        super().__init__(matrix, atol=atol)
        decomp = self.spectrum
        p = np.array(decomp.eigenvalues)
        if p[0] < -EIGEN_CLAMP_TOL:
            raise ValidationError(f"negative eigenvalue {p[0]:.3e} (state is not positive semi-definite)")
        tr = float(np.trace(self._matrix).real)
        if abs(tr - 1.0) > trace_tol:
            raise ValidationError(f"trace is {tr!r}, expected 1")
        snapped = np.abs(p) <= _noise_floor(self.dim)
        clamped = (p < 0) | snapped
        p[clamped] = 0.0
        p /= p.sum()
        self._spectrum = canonicalize(p, decomp.eigenvectors)
        if clamped.any() or abs(tr - 1.0) > TRACE_TOL:
            self._matrix = _readonly(self._spectrum.reconstruct())

    @classmethod
    def from_spectrum(cls, probabilities, eigenvectors) -> DensityMatrix:
        """Build a state from known eigenvalues and an orthonormal basis.

        The given spectrum is kept as is (no re-diagonalization), so exact
        zeros and tiny probabilities survive.
        """
        p = np.asarray(probabilities, dtype=float)
        V = np.asarray(eigenvectors, dtype=complex)
        n = len(p)
        if V.shape != (n, n):
            raise ValidationError(f"eigenvector matrix has shape {V.shape}, expected {(n, n)}")
        if np.abs(V.conj().T @ V - np.eye(n)).max() > UNITARY_TOL:
            raise ValidationError("eigenvectors are not orthonormal")
        if p.min() < -EIGEN_CLAMP_TOL:
            raise ValidationError(f"negative eigenvalue {p.min():.3e}")
        if abs(p.sum() - 1.0) > TRACE_TOL:
            raise ValidationError(f"probabilities sum to {p.sum()!r}, expected 1")
        p = np.where(p < 0, 0.0, p)
        decomp = canonicalize(p / p.sum(), V)
        self = object.__new__(cls)
        self._spectrum = decomp
        self._matrix = _readonly(decomp.reconstruct())
        return self

    @property
    def probabilities(self) -> np.ndarray:
        return self.spectrum.eigenvalues

    @property
    def eigenvectors(self) -> np.ndarray:
        return self.spectrum.eigenvectors

    @property
    def rank(self) -> int:
        return int(np.count_nonzero(self.probabilities))

    def support_projector(self) -> np.ndarray:
        return self.spectrum.reconstruct((self.probabilities > 0).astype(float))


def _as_operator(A) -> HermitianOperator:
    return A if isinstance(A, HermitianOperator) else HermitianOperator(A)


def spectral_decompose(A) -> SpectralDecomposition:
    """Canonical eigendecomposition of a Hermitian operator (or raw array)."""
    return _as_operator(A).spectrum


def matrix_power(rho: DensityMatrix, s: float) -> HermitianOperator:
    """rho**s via the spectrum, with 0**s = 0."""
    if not s > 0:
        raise DomainError(f"matrix_power needs s > 0, got {s!r}")
    return HermitianOperator(rho.spectrum.reconstruct(rho.probabilities**s))


def trace(A) -> float:
    m = np.asarray(A.matrix if isinstance(A, HermitianOperator) else A)
    t = np.trace(m)
    if abs(t.imag) >= 1e-12:
        raise ValidationError(f"trace has imaginary part {t.imag:.3e}")
    return float(t.real)


def tensor_product(A: DensityMatrix, B: DensityMatrix) -> DensityMatrix:
    """Kronecker product of two states, spectrum built from the factors."""
    p = np.kron(A.probabilities, B.probabilities)
    V = np.kron(A.eigenvectors, B.eigenvectors)
    return DensityMatrix.from_spectrum(p, V)


def trace_distance(rho, sigma) -> float:
    D = np.asarray(rho) - np.asarray(sigma)
    return 0.5 * float(np.abs(np.linalg.eigvalsh((D + D.conj().T) / 2)).sum())


def identity(n: int) -> HermitianOperator:
    return HermitianOperator(np.eye(n))


def maximally_mixed(n: int) -> DensityMatrix:
    return DensityMatrix.from_spectrum(np.full(n, 1.0 / n), np.eye(n))


def diagonal_state(p) -> DensityMatrix:
    p = np.asarray(p, dtype=float)
    return DensityMatrix.from_spectrum(p, np.eye(len(p)))


def pure_state(psi) -> DensityMatrix:
    psi = np.asarray(psi, dtype=complex)
    psi = psi / np.linalg.norm(psi)
    # complete psi to an orthonormal basis
    Q, _ = np.linalg.qr(np.column_stack([psi, np.eye(len(psi))]))
    Q[:, 0] = psi
    p = np.zeros(len(psi))
    p[0] = 1.0
    return DensityMatrix.from_spectrum(p, Q[:, : len(psi)])


def random_unitary(n: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-random unitary (QR of a Ginibre matrix with phase correction)."""
    Z = (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) / np.sqrt(2)
    Q, R = np.linalg.qr(Z)
    d = np.diag(R)
    return Q * (d / np.abs(d))


def random_hermitian(n: int, rng: np.random.Generator, scale: float = 1.0) -> HermitianOperator:
    Z = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return HermitianOperator(scale * (Z + Z.conj().T) / 2)


def random_density(n: int, rng: np.random.Generator, rank: int | None = None) -> DensityMatrix:
    """Ginibre-ensemble state; full rank unless ``rank`` is given."""
    k = n if rank is None else rank
    G = rng.standard_normal((n, k)) + 1j * rng.standard_normal((n, k))
    R = G @ G.conj().T
    return DensityMatrix(R / np.trace(R).real)


def random_probabilities(n: int, rng: np.random.Generator, alpha: float = 1.0) -> np.ndarray:
    """Dirichlet sample; ``alpha < 1`` favours points near the simplex boundary."""
    return rng.dirichlet(np.full(n, alpha))
