"""q-deformed entropies, divergences and escort expectations.

All functionals are evaluated on the spectral decomposition of the states.
Divergences between non-commuting states use the overlap matrix
``|<a|b>|**2`` between the two eigenbases, which turns operator traces such
as ``Tr[rho**q f(sigma)]`` into exact double sums.

Functions that take an entropic index accept either a float or an
:class:`EntropicIndex`; the near-one branch is decided by
:attr:`EntropicIndex.near_one` only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from nonext.operators import (
    DensityMatrix,
    DomainError,
    HermitianOperator,
    ValidationError,
    matrix_power,
    tensor_product,
    trace,
)

NEAR_ONE_TOL = 1e-6
SUPPORT_TOL = 1e-12
CLOSED_FORM_TOL = 1e-12

#: Returned (never raised) when the first state leaves the support of the second.
INFINITE_DIVERGENCE = math.inf

_EPS = np.finfo(float).eps


@dataclass(frozen=True)
class EntropicIndex:
    """The nonextensivity parameter ``q > 0``."""

    q: float

    def __post_init__(self):
        q = float(self.q)
        if not (math.isfinite(q) and q > 0):
            raise DomainError(f"entropic index must be a positive finite number, got {self.q!r}")
        object.__setattr__(self, "q", q)

    @property
    def near_one(self) -> bool:
        return abs(self.q - 1.0) < NEAR_ONE_TOL

    def __float__(self) -> float:
        return self.q


def as_index(q) -> EntropicIndex:
    return q if isinstance(q, EntropicIndex) else EntropicIndex(q)


def is_infinite(value: float) -> bool:
    return value == INFINITE_DIVERGENCE


def ln_q(x, q):
    """q-logarithm ``(x**(q-1) - 1) / (q - 1)``.

    Works elementwise on arrays.  Near ``q = 1`` the second-order series
    ``ln x + (q-1) ln(x)**2 / 2`` is used; elsewhere ``expm1`` keeps the
    numerator accurate.  ``x = inf`` is allowed and gives the limit
    ``1/(1-q)`` for ``q < 1``.
    """
    idx = as_index(q)
    xa = np.asarray(x, dtype=float)
    if np.any(~(xa > 0)):
        raise DomainError("ln_q is defined for x > 0 only")
    d = idx.q - 1.0
    with np.errstate(invalid="ignore", over="ignore"):
        if idx.near_one:
            L = np.log(xa)
            out = L if d == 0 else L + d * L * L / 2
            if d < 0:
                out = np.where(np.isinf(xa), -1.0 / d, out)
        else:
            out = np.expm1(d * np.log(xa)) / d
    return out if out.ndim else float(out)


def _positive(rho: DensityMatrix) -> np.ndarray:
    p = rho.probabilities
    return p[p > 0]


def escort_normalization(rho: DensityMatrix, q) -> float:
    """``Tr(rho**q)``; the normalization that defines escort averages."""
    return float(np.sum(_positive(rho) ** as_index(q).q))


def von_neumann_entropy(rho: DensityMatrix) -> float:
    p = _positive(rho)
    return float(-np.sum(p * np.log(p)))


def _tsallis_unnormalized(rho: DensityMatrix, idx: EntropicIndex) -> float:
    p = _positive(rho)
    return float(np.sum(p**idx.q * ln_q(1.0 / p, idx)))


def tsallis_entropy_normalized(rho: DensityMatrix, q) -> float:
    """Tsallis entropy divided by ``Tr(rho**q)``.

    Computed as ``sum p**q Ln_q(1/p) / sum p**q`` over the nonzero spectrum
    and cross-checked against ``(1 - 1/c_q) / (1 - q)``.
    """
    idx = as_index(q)
    c = escort_normalization(rho, idx)
    s = _tsallis_unnormalized(rho, idx) / c
    if not idx.near_one:
        closed = (1.0 - 1.0 / c) / (1.0 - idx.q)
        # the closed form loses ~eps/|1-q| to cancellation
        tol = CLOSED_FORM_TOL + 8 * rho.dim * _EPS / abs(1.0 - idx.q)
        if abs(s - closed) > tol:
            raise ArithmeticError(f"spectral sum {s!r} disagrees with closed form {closed!r}")
    return s


def _same_dim(rho, sigma):
    if rho.dim != sigma.dim:
        raise ValidationError(f"dimension mismatch: {rho.dim} vs {sigma.dim}")


def _overlaps(rho: DensityMatrix, sigma: DensityMatrix) -> np.ndarray:
    if rho is sigma:
        return np.eye(rho.dim)
    M = rho.eigenvectors.conj().T @ sigma.eigenvectors
    return (M * M.conj()).real


def _divergence_sum(rho, sigma, idx: EntropicIndex) -> float:
    """``Tr[rho**q (Ln_q sigma**-1 - Ln_q rho**-1)]`` (not normalized)."""
    _same_dim(rho, sigma)
    p, s = rho.probabilities, sigma.probabilities
    O = _overlaps(rho, sigma)[p > 0]
    p = p[p > 0]
    off = s == 0
    if off.any() and idx.q >= 1.0:
        leak = float(p @ O[:, off].sum(axis=1))
        if leak > SUPPORT_TOL:
            return INFINITE_DIVERGENCE
        O = O[:, ~off]
        s = s[~off]
    with np.errstate(divide="ignore"):
        inv_s = np.where(s > 0, 1.0 / np.where(s > 0, s, 1.0), np.inf)
    L_sigma = ln_q(inv_s, idx)
    L_rho = ln_q(1.0 / p, idx)
    gap = L_sigma[None, :] - L_rho[:, None]
    return float(np.sum((p**idx.q)[:, None] * O * gap))


def kl_divergence(rho: DensityMatrix, sigma: DensityMatrix) -> float:
    """Quantum relative entropy ``Tr[rho (ln rho - ln sigma)]``.

    Returns :data:`INFINITE_DIVERGENCE` if ``rho`` has weight outside the
    support of ``sigma``.
    """
    _same_dim(rho, sigma)
    p, s = rho.probabilities, sigma.probabilities
    O = _overlaps(rho, sigma)[p > 0]
    p = p[p > 0]
    off = s == 0
    if off.any():
        if float(p @ O[:, off].sum(axis=1)) > SUPPORT_TOL:
            return INFINITE_DIVERGENCE
        O, s = O[:, ~off], s[~off]
    gap = np.log(p)[:, None] - np.log(s)[None, :]
    return float(np.sum(p[:, None] * O * gap))


def q_kl_divergence(rho: DensityMatrix, sigma: DensityMatrix, q) -> float:
    """Normalized q-divergence of ``rho`` from ``sigma``.

    For ``q < 1`` the value stays finite when supports differ (the
    ``sigma**(1-q)`` factor kills those terms); for ``q >= 1`` a support
    violation gives :data:`INFINITE_DIVERGENCE`.
    """
    idx = as_index(q)
    k = _divergence_sum(rho, sigma, idx)
    return k if is_infinite(k) else k / escort_normalization(rho, idx)


def escort_expectation(rho: DensityMatrix, A, q) -> float:
    """Normalized q-expectation ``Tr(rho**q A) / Tr(rho**q)``."""
    idx = as_index(q)
    A = A if isinstance(A, HermitianOperator) else HermitianOperator(A)
    _same_dim(rho, A)
    return _q_expectation_unnormalized(rho, A, idx) / escort_normalization(rho, idx)


def _q_expectation_unnormalized(rho, A, idx: EntropicIndex) -> float:
    V = rho.eigenvectors
    diag = np.einsum("ia,ij,ja->a", V.conj(), A.matrix, V).real
    w = np.where(rho.probabilities > 0, rho.probabilities, 0.0) ** idx.q
    return float(w @ diag)


def pseudo_additivity_defect(rho_a: DensityMatrix, rho_b: DensityMatrix, q) -> float:
    """``S[A x B] - S[A] - S[B] - (q-1) S[A] S[B]`` for the normalized entropy."""
    idx = as_index(q)
    sa = tsallis_entropy_normalized(rho_a, idx)
    sb = tsallis_entropy_normalized(rho_b, idx)
    sab = tsallis_entropy_normalized(tensor_product(rho_a, rho_b), idx)
    return sab - sa - sb - (idx.q - 1.0) * sa * sb


def _inverse_power_trace(rho: DensityMatrix, x: float) -> float:
    return 1.0 / trace(matrix_power(rho, x))


def jackson_q_derivative_entropy(rho: DensityMatrix, q) -> float:
    """Jackson q-derivative of ``f(x) = 1/Tr(rho**x)`` at ``x = 1``.

    ``[f(q x) - f(x)] / (q x - x)`` at ``x = 1``; in the near-one branch the
    ordinary derivative ``f'(1) = -sum p ln p`` is returned.
    """
    idx = as_index(q)
    if idx.near_one:
        p = _positive(rho)
        return float(-np.sum(p * np.log(p)) / np.sum(p) ** 2)
    return (_inverse_power_trace(rho, idx.q) - _inverse_power_trace(rho, 1.0)) / (idx.q - 1.0)


def jackson_basic_number(a: float, q) -> float:
    """``[a]_q = (q**a - 1) / (q - 1)``; equals ``a`` in the near-one branch."""
    idx = as_index(q)
    if idx.near_one:
        return float(a)
    return math.expm1(a * math.log(idx.q)) / (idx.q - 1.0)


def basic_number_identity_defect(a: float, b: float, q) -> float:
    idx = as_index(q)
    ja, jb = jackson_basic_number(a, idx), jackson_basic_number(b, idx)
    return jackson_basic_number(a + b, idx) - ja - jb - (idx.q - 1.0) * ja * jb


def concavity_gap(rho1: DensityMatrix, rho2: DensityMatrix, lam: float, q) -> float:
    """``S(lam rho1 + (1-lam) rho2) - lam S(rho1) - (1-lam) S(rho2)``.

    Non-negative wherever the normalized entropy is concave along the chord.
    """
    idx = as_index(q)
    mix = DensityMatrix(lam * rho1.matrix + (1.0 - lam) * rho2.matrix)
    return tsallis_entropy_normalized(mix, idx) - (
        lam * tsallis_entropy_normalized(rho1, idx) + (1.0 - lam) * tsallis_entropy_normalized(rho2, idx)
    )


# Forms without the division by Tr(rho**q).  Not public API: they exist so the
# tests can show the maximum-entropy relation breaks without the normalization.


def _tsallis_entropy_original(rho: DensityMatrix, q) -> float:
    return _tsallis_unnormalized(rho, as_index(q))


def _q_kl_divergence_original(rho: DensityMatrix, sigma: DensityMatrix, q) -> float:
    return _divergence_sum(rho, sigma, as_index(q))


def _q_expectation_original(rho: DensityMatrix, A, q) -> float:
    A = A if isinstance(A, HermitianOperator) else HermitianOperator(A)
    return _q_expectation_unnormalized(rho, A, as_index(q))
