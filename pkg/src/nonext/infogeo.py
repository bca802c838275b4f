"""Metric on one-parameter families of density matrices.

A :class:`StateCurve` samples ``rho(alpha)`` on a uniform grid.
:func:`build_eigencurve` follows each eigenvalue branch along the grid and
fixes the eigenvector phases so that neighbouring kets have real, positive
overlap.  The metric coefficient at an interior grid point splits into a
classical part (derivatives of the probabilities) and a quantum part
(rotation of the eigenbasis); both are computed by central differences.

:func:`metric_from_divergence` gives the same coefficient from the
symmetrized divergence between nearby states.  It shares no code with the
eigencurve route and is used to cross-check it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from nonext.entropy import as_index, ln_q, q_kl_divergence
from nonext.maxent import gibbs_state
from nonext.operators import DEGENERACY_TOL, DensityMatrix, HermitianOperator, ValidationError

P_FLOOR = 1e-12
CONTINUITY_MIN = 0.9
AMBIGUITY_GAP = 0.1
SPACING_RTOL = 1e-9


class SingularMetricError(ValueError):
    """A probability branch is too close to zero for the classical part."""


class DegeneracyError(ValueError):
    """Branch tracking was ambiguous and strict mode was requested."""


@dataclass(frozen=True, eq=False)
class StateCurve:
    """States on a uniform parameter grid.

    ``generator`` (optional) evaluates the family off the grid; the built-in
    families provide one.
    """

    alphas: np.ndarray
    states: tuple
    family: str | None = None
    generator: Callable[[float], DensityMatrix] | None = None

    def __post_init__(self):
        a = np.array(self.alphas, dtype=float)
        a.setflags(write=False)
        object.__setattr__(self, "alphas", a)
        object.__setattr__(self, "states", tuple(self.states))
        if a.ndim != 1 or len(a) < 3:
            raise ValidationError("a state curve needs at least 3 grid points")
        if len(self.states) != len(a):
            raise ValidationError(f"{len(a)} grid points but {len(self.states)} states")
        steps = np.diff(a)
        if not np.all(steps > 0):
            raise ValidationError("grid must be strictly increasing")
        if np.abs(steps - steps.mean()).max() > SPACING_RTOL * steps.mean():
            raise ValidationError("grid must be uniformly spaced")
        dims = {s.dim for s in self.states}
        if len(dims) != 1:
            raise ValidationError(f"states have different dimensions: {sorted(dims)}")

    @property
    def h(self) -> float:
        return float((self.alphas[-1] - self.alphas[0]) / (len(self.alphas) - 1))

    @property
    def dim(self) -> int:
        return self.states[0].dim

    def __len__(self) -> int:
        return len(self.alphas)

    def state_at(self, alpha: float) -> DensityMatrix:
        if self.generator is not None:
            return self.generator(alpha)
        i = int(round((alpha - self.alphas[0]) / self.h))
        if 0 <= i < len(self) and abs(self.alphas[i] - alpha) <= SPACING_RTOL * self.h:
            return self.states[i]
        raise ValidationError(f"alpha = {alpha!r} is not on the grid of a sampled curve")


def _family(name, generator, alphas) -> StateCurve:
    alphas = np.asarray(alphas, dtype=float)
    return StateCurve(alphas, tuple(generator(a) for a in alphas), name, generator)


def constant_curve(rho: DensityMatrix, alphas) -> StateCurve:
    return _family("constant", lambda a: rho, alphas)


def classical_diagonal_curve(alphas) -> StateCurve:
    """``diag(alpha, 1 - alpha)``: commuting, only the classical part is nonzero."""
    return _family("classical_diagonal", lambda a: DensityMatrix.from_spectrum([a, 1.0 - a], np.eye(2)), alphas)


_SX = np.array([[0, 1], [1, 0]], dtype=complex)
_SZ = np.array([[1, 0], [0, -1]], dtype=complex)


def rotating_qubit(r: float, alpha: float) -> DensityMatrix:
    """``(I + r (cos(alpha) sigma_z + sin(alpha) sigma_x)) / 2``."""
    c, s = math.cos(alpha / 2), math.sin(alpha / 2)
    basis = np.array([[-s, c], [c, s]], dtype=complex)
    return DensityMatrix.from_spectrum([(1 - r) / 2, (1 + r) / 2], basis)


def rotating_qubit_curve(r: float, alphas) -> StateCurve:
    """Fixed purity ``r``, rotating Bloch vector: only the quantum part is nonzero."""
    if not 0 <= r < 1:
        raise ValidationError(f"rotating qubit needs 0 <= r < 1, got {r!r}")
    return _family("rotating_qubit", lambda a: rotating_qubit(r, a), alphas)


def thermal_curve(H, alphas) -> StateCurve:
    """Gibbs states of ``H`` with the inverse temperature as parameter."""
    H = H if isinstance(H, HermitianOperator) else HermitianOperator(H)
    return _family("thermal", lambda a: gibbs_state(H, a).rho_eq, alphas)


@dataclass(frozen=True, eq=False)
class EigenCurve:
    """Tracked spectral decomposition along a curve.

    ``probabilities[i, k]`` and ``bases[i][:, k]`` belong to branch ``k`` at
    grid point ``i``.  ``ambiguous`` lists grid points where tracking was
    not clear-cut (near-equal overlaps or a weak continuation); ``clusters``
    lists grid points with degenerate eigenvalues, where the basis inside a
    cluster is arbitrary.
    """

    alphas: np.ndarray
    probabilities: np.ndarray
    bases: np.ndarray
    ambiguous: tuple = ()
    clusters: tuple = ()

    @property
    def h(self) -> float:
        return float((self.alphas[-1] - self.alphas[0]) / (len(self.alphas) - 1))

    @property
    def degenerate(self) -> bool:
        return bool(self.ambiguous or self.clusters)

    def flagged(self, i: int) -> bool:
        return i in self.ambiguous or i in self.clusters


def _match_branches(prev: np.ndarray, new: np.ndarray):
    """Greedy maximal-overlap assignment; returns (perm, overlaps, ambiguous)."""
    O = np.abs(prev.conj().T @ new) ** 2
    n = O.shape[0]
    ambiguous = False
    for row in O:
        top = np.sort(row)[::-1]
        if n > 1 and top[0] - top[1] < AMBIGUITY_GAP:
            ambiguous = True
    perm = np.full(n, -1)
    taken = np.zeros(n, dtype=bool)
    for flat in np.argsort(-O, axis=None, kind="stable"):
        a, b = divmod(int(flat), n)
        if perm[a] < 0 and not taken[b]:
            perm[a] = b
            taken[b] = True
    return perm, O[np.arange(n), perm], ambiguous


def build_eigencurve(curve: StateCurve, strict: bool = False) -> EigenCurve:
    """Track eigenvalue branches and align eigenvector phases along ``curve``.

    Raises :class:`DegeneracyError` on ambiguous tracking when ``strict``.
    Degenerate eigenvalues alone are recorded but never raise: the metric
    does not depend on the basis chosen inside a cluster.
    """
    first = curve.states[0]
    P = [np.array(first.probabilities)]
    B = [np.array(first.eigenvectors)]
    ambiguous = []
    for i, rho in enumerate(curve.states[1:], start=1):
        perm, overlaps, amb = _match_branches(B[-1], rho.eigenvectors)
        if amb or np.sqrt(overlaps).min() <= CONTINUITY_MIN:
            ambiguous.append(i)
            if strict:
                raise DegeneracyError(f"ambiguous branch tracking at grid point {i} (alpha = {curve.alphas[i]!r})")
        V = np.array(rho.eigenvectors[:, perm])
        inner = np.einsum("ik,ik->k", B[-1].conj(), V)
        mag = np.abs(inner)
        V *= np.where(mag > 0, inner.conj() / np.where(mag > 0, mag, 1.0), 1.0)
        P.append(np.array(rho.probabilities[perm]))
        B.append(V)
    P = np.array(P)
    gaps = np.diff(np.sort(P, axis=1), axis=1)
    clusters = tuple(int(i) for i in np.flatnonzero((gaps < DEGENERACY_TOL).any(axis=1)))
    return EigenCurve(curve.alphas, P, np.array(B), tuple(ambiguous), clusters)


def _check_interior(ec: EigenCurve, i: int):
    if not 0 < i < len(ec.alphas) - 1:
        raise IndexError(f"grid index {i} is not interior (grid has {len(ec.alphas)} points)")


def _probability_derivative(ec: EigenCurve, i: int):
    _check_interior(ec, i)
    return ec.probabilities[i], (ec.probabilities[i + 1] - ec.probabilities[i - 1]) / (2 * ec.h)


def connection_matrix(ec: EigenCurve, i: int) -> np.ndarray:
    """``X[a', a] = <a'(alpha)| d/dalpha |a(alpha)>`` by central differences.

    Only the anti-Hermitian part is kept, which is what the exact matrix is
    for an orthonormal basis; it also makes ``|X[a', a]| == |X[a, a']|``.
    """
    _check_interior(ec, i)
    dV = (ec.bases[i + 1] - ec.bases[i - 1]) / (2 * ec.h)
    X = ec.bases[i].conj().T @ dV
    return (X - X.conj().T) / 2


def classical_metric(ec: EigenCurve, i: int, q) -> float:
    """``q / sum p**q * sum (dp)**2 / p`` at grid point ``i``."""
    idx = as_index(q)
    p, dp = _probability_derivative(ec, i)
    low = np.flatnonzero(p < P_FLOOR)
    if low.size:
        k = int(low[0])
        raise SingularMetricError(f"branch {k} has probability {p[k]:.3e} < {P_FLOOR} at alpha = {ec.alphas[i]!r}")
    return float(idx.q * np.sum(dp**2 / p) / np.sum(p**idx.q))


def fisher_metric(ec: EigenCurve, i: int) -> float:
    """Classical part at ``q = 1``: ``sum (dp)**2 / p``."""
    p, dp = _probability_derivative(ec, i)
    low = np.flatnonzero(p < P_FLOOR)
    if low.size:
        k = int(low[0])
        raise SingularMetricError(f"branch {k} has probability {p[k]:.3e} < {P_FLOOR} at alpha = {ec.alphas[i]!r}")
    return float(np.sum(dp**2 / p))


def _pair_sum(W: np.ndarray, weights: np.ndarray, L: np.ndarray) -> float:
    # sum_{a, a'} W[a', a] weights[a] (L[a'] - L[a]); terms with W == 0 vanish
    # even where L is infinite
    gap = L[:, None] - L[None, :]
    terms = np.where(W > 0, W * weights[None, :] * np.where(W > 0, gap, 0.0), 0.0)
    return float(terms.sum())


def quantum_metric(ec: EigenCurve, i: int, q) -> float:
    """``2 / sum p**q * sum |<a'|da>|**2 p_a**q [Ln_q(1/p_a') - Ln_q(1/p_a)]``."""
    idx = as_index(q)
    W = np.abs(connection_matrix(ec, i)) ** 2
    p = ec.probabilities[i]
    with np.errstate(divide="ignore"):
        inv = np.where(p > 0, 1.0 / np.where(p > 0, p, 1.0), np.inf)
    L = ln_q(inv, idx)
    w = np.where(p > 0, p, 0.0) ** idx.q
    return 2.0 * _pair_sum(W, w, L) / float(w.sum())


def quantum_metric_q1(ec: EigenCurve, i: int) -> float:
    """Quantum part at ``q = 1``, written with the natural logarithm."""
    W = np.abs(connection_matrix(ec, i)) ** 2
    p = ec.probabilities[i]
    with np.errstate(divide="ignore"):
        L = -np.log(p)
    return 2.0 * _pair_sum(W, p, L)


def _symmetrized(curve: StateCurve, alpha: float, step: float, idx) -> float:
    rho0, rho1 = curve.state_at(alpha), curve.state_at(alpha + step)
    return (q_kl_divergence(rho1, rho0, idx) + q_kl_divergence(rho0, rho1, idx)) / step**2


def metric_from_divergence(curve: StateCurve, i: int, q, h: float | None = None, richardson: bool = False) -> float:
    """Metric coefficient from the symmetrized divergence.

    Returns ``[K(rho(a+h), rho(a)) + K(rho(a), rho(a+h))] / h**2`` at
    ``a = alphas[i]``, whose error is O(h).  With ``richardson`` the O(h)
    term is removed: from steps ``h`` and ``h/2`` when the curve can be
    evaluated off-grid, otherwise by averaging the forward and backward
    steps ``+h`` and ``-h``.  Both leave an O(h**2) error.
    """
    idx = as_index(q)
    h = curve.h if h is None else float(h)
    alpha = float(curve.alphas[i])
    if not richardson:
        return _symmetrized(curve, alpha, h, idx)
    if curve.generator is not None:
        return 2.0 * _symmetrized(curve, alpha, h / 2, idx) - _symmetrized(curve, alpha, h, idx)
    return 0.5 * (_symmetrized(curve, alpha, h, idx) + _symmetrized(curve, alpha, -h, idx))


@dataclass(frozen=True)
class MetricSample:
    """Metric coefficients at one grid point: ``ds**2 = g_total * dalpha**2``."""

    alpha: float
    g_cl: float
    g_qu: float
    q: float
    oracle: float = math.nan
    degenerate: bool = False
    error: str | None = None

    @property
    def g_total(self) -> float:
        return self.g_cl + self.g_qu

    @property
    def deviation(self) -> float:
        return abs(self.g_total - self.oracle)


def metric_sample(curve: StateCurve, ec: EigenCurve, i: int, q, h=None, richardson=False) -> MetricSample:
    """Classical part, quantum part and divergence oracle at grid point ``i``."""
    idx = as_index(q)
    alpha = float(curve.alphas[i])
    degenerate = any(ec.flagged(j) for j in (i - 1, i, i + 1))
    errors = []
    try:
        g_cl = classical_metric(ec, i, idx)
    except SingularMetricError as exc:
        g_cl = math.nan
        errors.append(str(exc))
    g_qu = quantum_metric(ec, i, idx)
    try:
        oracle = metric_from_divergence(curve, i, idx, h=h, richardson=richardson)
    except ValidationError as exc:
        oracle = math.nan
        errors.append(str(exc))
    return MetricSample(alpha, g_cl, g_qu, idx.q, oracle, degenerate, "; ".join(errors) or None)


def metric_profile(curve: StateCurve, q, h=None, richardson=False, strict=False) -> list[MetricSample]:
    """:func:`metric_sample` at every interior grid point, in grid order."""
    ec = build_eigencurve(curve, strict=strict)
    return [metric_sample(curve, ec, i, q, h, richardson) for i in range(1, len(curve) - 1)]
