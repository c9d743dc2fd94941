"""Generalized ADMM with semi-proximal terms.

A first-order convex solver library: the relaxed two-block scheme and its
step-length variant, symmetric Gauss-Seidel and full-Jacobi multi-block
realizations, and a doubly-non-negative SDP front-end solved through its
dual, with the convergence diagnostics exposed at runtime.
"""

from .blockvec import BlockVec, vdot, vnorm
from .dnnsdp import (
    Box,
    ConstraintStack,
    DnnSdpProblem,
    DualIterate,
    ResidualSet,
    build_dual_multiblock,
    choose_alpha,
    dual_objective,
    kkt_residuals,
    primal_objective,
    prox_support_negated,
    solve_dnnsdp,
)
from .errors import (
    ConfigError,
    GadmmError,
    InputError,
    NumericalError,
    ParseError,
    UnsupportedFormatError,
    UnsupportedOperationError,
)
from .linalg import (
    EigenDecomposition,
    box_support,
    project_box,
    project_psd,
    spectral_norm_estimate,
    sym_eig,
    weighted_norm_sq,
)
from .multiblock import (
    MultiBlockProblem,
    MultiBlockSide,
    jacobi_step,
    run_multiblock,
    sgs_main_step,
    sgs_y_sweep,
    sgs_z_sweep,
)
from .operators import (
    BlockMap,
    BlockQuadratic,
    LinearMap,
    MatrixMap,
    SemiProximalPair,
    build_jacobi_pair,
    build_sgs_operator,
    choose_default_jacobi_blocks,
)
from .solver import (
    ConvergenceReport,
    IterateState,
    QuadraticBlock,
    SolverConfig,
    Status,
    TwoBlockProblem,
    augmented_lagrangian,
    gadmm_step,
    kkt_residual_twoblock,
    lyapunov,
    run,
    scheme12_step,
    spadmm_step,
)

__version__ = "0.1.0"
