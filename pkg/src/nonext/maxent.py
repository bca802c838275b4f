"""Nonextensive maximum-entropy equilibrium states.

The equilibrium density matrix is a deformed exponential of the Hamiltonian,

    rho = [1 - (1-q) beta c_q (H - U_q)]_+ ** (1/(1-q)) / Z_q,

where ``U_q`` is the escort energy and ``c_q = Tr(rho**q)`` of the state
itself.  Both are unknown until the state is known, so :func:`solve_equilibrium`
iterates on the pair ``(U_q, c_q)`` with damping.  Everything happens in the
eigenbasis of ``H``, where the map is diagonal.

Negative arguments of the bracket are clamped to zero (the usual Tsallis
cutoff); levels beyond the cutoff get probability zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from nonext.entropy import (
    INFINITE_DIVERGENCE,
    SUPPORT_TOL,
    EntropicIndex,
    _q_expectation_original,
    _q_kl_divergence_original,
    _tsallis_entropy_original,
    as_index,
    escort_expectation,
    escort_normalization,
    kl_divergence,
    q_kl_divergence,
    tsallis_entropy_normalized,
    von_neumann_entropy,
)
from nonext.operators import DensityMatrix, HermitianOperator, trace_distance

OVERFLOW_GUARD = 700.0
INIT_CHOICES = ("gibbs_q1", "maximally_mixed")


class ConvergenceError(RuntimeError):
    """The fixed-point iteration did not reach the tolerance."""

    def __init__(self, message: str, residual: float, iterate: DensityMatrix, iterations: int):
        super().__init__(message)
        self.residual = residual
        self.iterate = iterate
        self.iterations = iterations


class OverflowGuardError(OverflowError):
    pass


@dataclass(frozen=True)
class SolverConfig:
    tol: float = 1e-10
    max_iter: int = 10000
    damping: float = 0.5
    init: str | DensityMatrix = "gibbs_q1"

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError(f"tol must be positive, got {self.tol!r}")
        if not 0 < self.damping <= 1:
            raise ValueError(f"damping must lie in (0, 1], got {self.damping!r}")
        if self.max_iter < 1:
            raise ValueError(f"max_iter must be at least 1, got {self.max_iter!r}")
        if not isinstance(self.init, DensityMatrix) and self.init not in INIT_CHOICES:
            raise ValueError(f"init must be one of {INIT_CHOICES} or a DensityMatrix, got {self.init!r}")


@dataclass(frozen=True, eq=False)
class EquilibriumState:
    """Solved equilibrium with its partition function and escort data."""

    rho_eq: DensityMatrix
    hamiltonian: HermitianOperator
    beta: float
    q: EntropicIndex
    Z_q: float
    c_q: float
    U_q: float
    iterations: int = 0
    residual: float = 0.0
    warnings: tuple = field(default=())

    @property
    def support_size(self) -> int:
        return self.rho_eq.rank

    @property
    def partition_identity_defect(self) -> float:
        """Relative deviation ``|c_q - Z_q**(1-q)| / c_q``."""
        return abs(self.c_q - math.exp((1.0 - self.q.q) * math.log(self.Z_q))) / self.c_q

    @property
    def entropy(self) -> float:
        return tsallis_entropy_normalized(self.rho_eq, self.q)


def _as_hamiltonian(H) -> HermitianOperator:
    return H if isinstance(H, HermitianOperator) else HermitianOperator(H)


def _gibbs_probabilities(E: np.ndarray, beta: float) -> np.ndarray:
    spread = float(E.max() - E.min())
    if abs(beta) * spread > OVERFLOW_GUARD:
        raise OverflowGuardError(
            f"beta * spread(H) = {abs(beta) * spread:.6g} exceeds {OVERFLOW_GUARD}; weights underflow"
        )
    x = -beta * E
    w = np.exp(x - x.max())
    return w / w.sum()


def gibbs_state(H, beta: float) -> EquilibriumState:
    """Boltzmann-Gibbs state ``exp(-beta (H - U)) / Z`` built on the spectrum of ``H``.

    ``Z`` includes the energy shift by ``U = Tr(rho H)``, so it differs from
    the textbook partition function by ``exp(beta U)``.
    """
    H = _as_hamiltonian(H)
    E, V = H.spectrum.eigenvalues, H.spectrum.eigenvectors
    p = _gibbs_probabilities(E, beta)
    U = float(p @ E)
    x = -beta * (E - U)
    m = float(x.max())
    Z = math.exp(m) * float(np.exp(x - m).sum())
    rho = DensityMatrix.from_spectrum(p, V)
    return EquilibriumState(rho, H, float(beta), EntropicIndex(1.0), Z, 1.0, U)


def _deformed_state(E, beta, q, U, c):
    """Probabilities and log Z_q for given (U, c); zero weight past the cutoff."""
    b = 1.0 - (1.0 - q) * beta * c * (E - U)
    with np.errstate(divide="ignore"):
        logw = np.where(b > 0, np.log(np.where(b > 0, b, 1.0)), -np.inf) / (1.0 - q)
    m = float(logw.max())
    w = np.exp(logw - m)
    s = float(w.sum())
    return w / s, m + math.log(s)


def _escort(p, E, q):
    w = np.where(p > 0, p, 0.0) ** q
    c = float(w.sum())
    return float(w @ E) / c, c


def _initial_point(H, E, V, beta, idx, cfg):
    n = len(E)
    if isinstance(cfg.init, DensityMatrix):
        rho = cfg.init
        if rho.dim != n:
            raise ValueError(f"initial state has dim {rho.dim}, Hamiltonian has {n}")
        p0 = np.einsum("ia,ij,ja->a", V.conj(), rho.matrix, V).real
        return escort_expectation(rho, H, idx), escort_normalization(rho, idx), p0
    if cfg.init == "maximally_mixed":
        p0 = np.full(n, 1.0 / n)
    else:
        p0 = _gibbs_probabilities(E, beta)
    U, c = _escort(p0, E, idx.q)
    return U, c, p0


def solve_equilibrium(H, beta: float, q, cfg: SolverConfig | None = None) -> EquilibriumState:
    """Self-consistent nonextensive equilibrium for Hamiltonian ``H`` at ``beta``.

    Parameters
    ----------
    H : HermitianOperator or array_like
        Hamiltonian.
    beta : float
        Inverse temperature; negative values are allowed.
    q : float or EntropicIndex
        Entropic index.  ``q == 1`` returns :func:`gibbs_state`.
    cfg : SolverConfig, optional
        Tolerance, iteration cap, damping and initialization.

    Returns
    -------
    EquilibriumState

    Raises
    ------
    ConvergenceError
        If the residual ``max(|dU|, |dc|, trace distance)`` stays above
        ``cfg.tol`` after ``cfg.max_iter`` iterations.
    """
    cfg = cfg or SolverConfig()
    idx = as_index(q)
    H = _as_hamiltonian(H)
    if idx.q == 1.0:
        return gibbs_state(H, beta)
    E, V = H.spectrum.eigenvalues, H.spectrum.eigenvectors
    qv, d = idx.q, cfg.damping
    U, c, p_old = _initial_point(H, E, V, beta, idx, cfg)

    residual = math.inf
    for it in range(1, cfg.max_iter + 1):
        p, logZ = _deformed_state(E, beta, qv, U, c)
        U_new, c_new = _escort(p, E, qv)
        residual = max(abs(U_new - U), abs(c_new - c), 0.5 * float(np.abs(p - p_old).sum()))
        if residual < cfg.tol:
            break
        U += d * (U_new - U)
        c += d * (c_new - c)
        p_old = p
    else:
        raise ConvergenceError(
            f"no convergence after {cfg.max_iter} iterations (residual {residual:.3e})",
            residual,
            DensityMatrix.from_spectrum(p, V),
            cfg.max_iter,
        )

    rho = DensityMatrix.from_spectrum(p, V)
    warnings = ()
    if rho.rank < len(E):
        warnings = (f"cutoff: {len(E) - rho.rank} of {len(E)} levels carry zero probability",)
    return EquilibriumState(
        rho, H, float(beta), idx, math.exp(logZ), c_new, U_new, it, residual, warnings
    )


def multistart_equilibrium(H, beta: float, q, cfg: SolverConfig | None = None, threshold: float = 1e-6):
    """Solve from both standard initializations and compare.

    Returns ``(state, distance, consistent)`` where ``state`` is the solution
    from ``cfg.init`` (default ``gibbs_q1``), ``distance`` the trace distance
    between the two solutions and ``consistent`` whether it is within
    ``threshold``.
    """
    cfg = cfg or SolverConfig()
    first = solve_equilibrium(H, beta, q, cfg)
    other_init = "maximally_mixed" if cfg.init == "gibbs_q1" else "gibbs_q1"
    other = solve_equilibrium(
        H, beta, q, SolverConfig(cfg.tol, cfg.max_iter, cfg.damping, other_init)
    )
    dist = trace_distance(first.rho_eq, other.rho_eq)
    return first, dist, dist <= threshold


def _outside_support(rho: DensityMatrix, eq: EquilibriumState) -> bool:
    P = eq.rho_eq.support_projector()
    return 1.0 - float(np.trace(rho.matrix @ P).real) > SUPPORT_TOL


def maxent_relation_defect(rho: DensityMatrix, eq: EquilibriumState) -> tuple[float, float]:
    """Check the maximum-entropy relation for ``rho`` against ``eq``.

    Returns ``(defect, K)`` with ``K`` the divergence of ``rho`` from the
    equilibrium state and

        defect = K - [S(rho_eq) - S(rho) + beta (<H>_q(rho) - U_q)].

    At ``q == 1`` the von Neumann forms are used.  If ``rho`` leaves the
    equilibrium support the relation does not apply and the defect is
    :data:`INFINITE_DIVERGENCE`.
    """
    q = eq.q
    if q.q == 1.0:
        K = kl_divergence(rho, eq.rho_eq)
        s_eq, s_rho = von_neumann_entropy(eq.rho_eq), von_neumann_entropy(rho)
        energy = float(np.trace(rho.matrix @ eq.hamiltonian.matrix).real)
    else:
        K = q_kl_divergence(rho, eq.rho_eq, q)
        s_eq, s_rho = tsallis_entropy_normalized(eq.rho_eq, q), tsallis_entropy_normalized(rho, q)
        energy = escort_expectation(rho, eq.hamiltonian, q)
    if K == INFINITE_DIVERGENCE or _outside_support(rho, eq):
        return INFINITE_DIVERGENCE, K
    return K - (s_eq - s_rho + eq.beta * (energy - eq.U_q)), K


def _original_relation_defect(rho: DensityMatrix, eq: EquilibriumState) -> float:
    # same relation, with every quantity missing its division by Tr(rho**q)
    q = eq.q
    K = _q_kl_divergence_original(rho, eq.rho_eq, q)
    s_eq, s_rho = _tsallis_entropy_original(eq.rho_eq, q), _tsallis_entropy_original(rho, q)
    energy = _q_expectation_original(rho, eq.hamiltonian, q)
    U = _q_expectation_original(eq.rho_eq, eq.hamiltonian, q)
    return K - (s_eq - s_rho + eq.beta * (energy - U))
