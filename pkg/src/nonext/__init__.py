"""Nonextensive (q-deformed) quantum statistics on finite-dimensional density matrices."""

from nonext.entropy import (
    INFINITE_DIVERGENCE,
    EntropicIndex,
    escort_expectation,
    jackson_basic_number,
    jackson_q_derivative_entropy,
    kl_divergence,
    ln_q,
    pseudo_additivity_defect,
    q_kl_divergence,
    tsallis_entropy_normalized,
    von_neumann_entropy,
)
from nonext.maxent import (
    ConvergenceError,
    EquilibriumState,
    SolverConfig,
    gibbs_state,
    maxent_relation_defect,
    solve_equilibrium,
)
from nonext.operators import (
    DensityMatrix,
    HermitianOperator,
    ValidationError,
    matrix_power,
    spectral_decompose,
    tensor_product,
    trace,
)

__version__ = "0.1.0"
