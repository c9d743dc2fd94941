"""Two-block first-order solvers built around an augmented Lagrangian.

Three iteration schemes share the problem structure

    min f(y) + g(z)   subject to   A* y + B* z = c,

with prox oracles for f and g:

* ``gadmm_step``   - semi-proximal scheme with a relaxation step: y-update,
  multiplier update, z-update, then ``w~ <- w~ + rho (w - w~)``.
* ``spadmm_step``  - semi-proximal ADMM with step length tau, multiplier
  updated last.
* ``scheme12_step``- the relaxed multiplier scheme without proximal terms,
  kept for equivalence testing against the relaxation form.
"""

from __future__ import annotations

import enum
import weakref
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .blockvec import all_finite, copy_vec, vdot, vnorm, zeros_like
from .errors import ConfigError, InputError, UnsupportedOperationError
from .linalg import (
    DenseWeight,
    ScaledIdentity,
    WeightOperator,
    ZeroWeight,
    weight_to_dense,
    wscale,
    wsum,
)
from .operators import LinearMap, SemiProximalPair

__all__ = [
    "ConvexBlock",
    "QuadraticBlock",
    "LinearBlock",
    "ZeroBlock",
    "TwoBlockProblem",
    "swap_problem",
    "SolverConfig",
    "IterateState",
    "initial_state",
    "zero_state",
    "Status",
    "ConvergenceReport",
    "augmented_lagrangian",
    "gadmm_step",
    "spadmm_step",
    "scheme12_step",
    "run",
    "lyapunov",
    "kkt_residual_twoblock",
]

GOLDEN_RATIO = 1.6180339888  # admissible open upper bound for the sPADMM step length


class ConvexBlock:
    """One convex block with an exact prox oracle.

    ``prox(q, W)`` returns ``argmin_u f(u) - <q, u> + 0.5 <u, W u>`` for a
    positive-definite weight W.  ``curvature`` is a PSD lower bound on the
    curvature of f (zero for merely convex blocks).  ``value`` is optional
    and only needed for objective reporting.
    """

    curvature: WeightOperator = ZeroWeight()

    def prox(self, q, weight: WeightOperator):
        raise NotImplementedError

    def value(self, u) -> float:
        raise UnsupportedOperationError(f"{type(self).__name__} has no value oracle")

    def zero(self):
        raise UnsupportedOperationError(f"{type(self).__name__} has no canonical zero")


class QuadraticBlock(ConvexBlock):
    """f(u) = 0.5 u^T H u + lin^T u + const on a flat vector space."""

    def __init__(self, hessian=None, linear=None, constant=0.0, dim=None):
        if hessian is None and linear is None and dim is None:
            raise InputError("QuadraticBlock needs a Hessian, a linear term, or a dim")
        if dim is None:
            dim = len(linear) if linear is not None else np.asarray(hessian).shape[0]
        self.dim = int(dim)
        self.hessian = None if hessian is None else np.asarray(hessian, dtype=float)
        self.linear = np.zeros(self.dim) if linear is None else np.asarray(linear, dtype=float)
        self.constant = float(constant)
        self._factors = {}

    @property
    def curvature(self) -> WeightOperator:
        return ZeroWeight() if self.hessian is None else DenseWeight(self.hessian)

    def value(self, u) -> float:
        val = float(self.linear @ u) + self.constant
        if self.hessian is not None:
            val += 0.5 * float(u @ (self.hessian @ u))
        return val

    def grad(self, u):
        g = self.linear.copy()
        if self.hessian is not None:
            g = g + self.hessian @ u
        return g

    def _system(self, weight: WeightOperator):
        key = id(weight)
        entry = self._factors.get(key)
        if entry is None:
            dense = weight_to_dense(weight, np.zeros(self.dim))
            mat = dense if self.hessian is None else dense + self.hessian
            # strong reference to `weight` pins its id for the cache lifetime
            entry = (weight, DenseWeight(mat))
            self._factors[key] = entry
        return entry[1]

    def prox(self, q, weight: WeightOperator):
        return self._system(weight).solve(q - self.linear)

    def zero(self):
        return np.zeros(self.dim)


class LinearBlock(QuadraticBlock):
    """f(u) = lin^T u; the prox reduces to a single weighted solve."""

    def __init__(self, linear):
        super().__init__(hessian=None, linear=linear)

    def prox(self, q, weight: WeightOperator):
        try:
            return weight.solve(q - self.linear)
        except ConfigError:
            return super().prox(q, weight)


class ZeroBlock(ConvexBlock):
    """f = 0 on an arbitrary space; prox is a plain weighted solve."""

    def __init__(self, template):
        self.template = copy_vec(template)

    def value(self, u) -> float:
        return 0.0

    def prox(self, q, weight: WeightOperator):
        return weight.solve(q)

    def zero(self):
        return zeros_like(self.template)


@dataclass(eq=False)
class TwoBlockProblem:
    """min f(y) + g(z) s.t. A* y + B* z = c with A: X->Y, B: X->Z."""

    f: ConvexBlock
    g: ConvexBlock
    A: LinearMap
    B: LinearMap
    c: object

    def __post_init__(self):
        self.c = copy_vec(self.c)

    def primal_residual_vec(self, y, z):
        return self.A.adjoint_apply(y) + self.B.adjoint_apply(z) - self.c


def swap_problem(p: TwoBlockProblem) -> TwoBlockProblem:
    """Exchange the roles of the two blocks (f <-> g, A <-> B)."""
    return TwoBlockProblem(f=p.g, g=p.f, A=p.B, B=p.A, c=p.c)


@dataclass
class SolverConfig:
    """Penalty, relaxation/step-length, proximal pair, and termination control."""

    sigma: float = 1.0
    rho: float = 1.0
    tau: float = 1.0
    S: WeightOperator | None = None
    T: WeightOperator | None = None
    tol: float = 1e-6
    max_iter: int = 500_000
    check_every: int = 1
    tau1: float | None = None  # Jacobi bounds, used by the multi-block schemes
    tau2: float | None = None
    adaptive_sigma: bool = False

    def __post_init__(self):
        if self.S is None:
            self.S = ZeroWeight()
        if self.T is None:
            self.T = ZeroWeight()
        self.validate()

    def validate(self):
        if not self.sigma > 0:
            raise ConfigError(f"sigma must be positive, got {self.sigma}")
        if not 0 < self.rho < 2:
            raise ConfigError(f"rho must lie strictly in (0, 2), got {self.rho}")
        if not 0 < self.tau < GOLDEN_RATIO:
            raise ConfigError(f"tau must lie in (0, {GOLDEN_RATIO}), got {self.tau}")
        if self.max_iter < 0 or self.check_every < 1:
            raise ConfigError("max_iter must be >= 0 and check_every >= 1")

    def pair(self) -> SemiProximalPair:
        return SemiProximalPair(self.S, self.T)


@dataclass(frozen=True)
class IterateState:
    """Current main iterate w = (x, y, z), the relaxed point consumed by the
    next step (x_t, y_t, z_t), and the relaxed point that produced w
    (x_tp, y_tp, z_tp)."""

    x: object
    y: object
    z: object
    x_t: object
    y_t: object
    z_t: object
    x_tp: object
    y_tp: object
    z_tp: object
    k: int = 0


def initial_state(x0, y0, z0) -> IterateState:
    x0, y0, z0 = copy_vec(x0), copy_vec(y0), copy_vec(z0)
    return IterateState(x0, y0, z0, x0, y0, z0, x0, y0, z0, k=0)


def zero_state(problem: TwoBlockProblem) -> IterateState:
    return initial_state(zeros_like(problem.c), problem.f.zero(), problem.g.zero())


class Status(enum.Enum):
    CONVERGED = "converged"
    MAX_ITER = "max_iter"
    DIVERGED = "diverged"


@dataclass
class ConvergenceReport:
    iterations: int
    status: Status
    primal_residual: float
    residual: float
    history: list = field(default_factory=list)
    lyapunov_history: list | None = None
    sigma_final: float | None = None


def augmented_lagrangian(problem: TwoBlockProblem, sigma, x, y, z) -> float:
    """f(y) + g(z) - <x, A*y + B*z - c> + (sigma/2) ||A*y + B*z - c||^2."""
    r = problem.primal_residual_vec(y, z)
    return (
        problem.f.value(y)
        + problem.g.value(z)
        - vdot(x, r)
        + 0.5 * sigma * vdot(r, r)
    )


# ---------------------------------------------------------------------------
# step operators (cached per problem/config)

_step_cache: "weakref.WeakKeyDictionary" = weakref.WeakKeyDictionary()


def _step_ops(problem: TwoBlockProblem, config: SolverConfig):
    per_problem = _step_cache.setdefault(problem, {})
    key = (config.sigma, id(config.S), id(config.T))
    ops = per_problem.get(key)
    if ops is None:
        wy = wsum(wscale(config.sigma, problem.A.gram()), config.S)
        wz = wsum(wscale(config.sigma, problem.B.gram()), config.T)
        ops = (wy, wz, config.S, config.T)
        per_problem[key] = ops
    return ops


def _relax(state_vals, new_vals, rho):
    if rho == 1.0:
        return tuple(copy_vec(v) for v in new_vals)
    return tuple(t + rho * (w - t) for t, w in zip(state_vals, new_vals))


def _safe_prox(block, q, weight):
    # non-finite inputs propagate as-is so the loop reports divergence instead
    # of a low-level linear-algebra failure
    if not all_finite(q):
        return q
    return block.prox(q, weight)


def gadmm_step(problem: TwoBlockProblem, config: SolverConfig, state: IterateState) -> IterateState:
    """One relaxed semi-proximal step consuming the relaxed point of ``state``.

    Order: y-minimization against (z~, x~), multiplier update with the stale
    z~, z-minimization against the fresh (y, x), then the relaxation
    ``w~ <- w~ + rho (w - w~)``.  Exactly one prox call per block.
    """
    wy, wz, S, T = _step_ops(problem, config)
    sigma = config.sigma
    xt, yt, zt = state.x_t, state.y_t, state.z_t

    bz = problem.B.adjoint_apply(zt) - problem.c
    qy = problem.A.apply(xt) - sigma * problem.A.apply(bz) + S.apply(yt)
    y = _safe_prox(problem.f, qy, wy)

    x = xt - sigma * (problem.A.adjoint_apply(y) + bz)

    ay = problem.A.adjoint_apply(y) - problem.c
    qz = problem.B.apply(x) - sigma * problem.B.apply(ay) + T.apply(zt)
    z = _safe_prox(problem.g, qz, wz)

    xt2, yt2, zt2 = _relax((xt, yt, zt), (x, y, z), config.rho)
    return IterateState(x, y, z, xt2, yt2, zt2, xt, yt, zt, k=state.k + 1)


def spadmm_step(problem: TwoBlockProblem, config: SolverConfig, state: IterateState) -> IterateState:
    """Semi-proximal ADMM step: sequential y and z prox updates from
    (y, z, x), then the multiplier moves by tau * sigma times the fresh
    residual.  The relaxed slots simply mirror the main iterate."""
    wy, wz, S, T = _step_ops(problem, config)
    sigma = config.sigma
    x0, y0, z0 = state.x, state.y, state.z

    bz = problem.B.adjoint_apply(z0) - problem.c
    qy = problem.A.apply(x0) - sigma * problem.A.apply(bz) + S.apply(y0)
    y = _safe_prox(problem.f, qy, wy)

    ay = problem.A.adjoint_apply(y) - problem.c
    qz = problem.B.apply(x0) - sigma * problem.B.apply(ay) + T.apply(z0)
    z = _safe_prox(problem.g, qz, wz)

    x = x0 - config.tau * sigma * (problem.A.adjoint_apply(y) + problem.B.adjoint_apply(z) - problem.c)
    return IterateState(x, y, z, x, y, z, x0, y0, z0, k=state.k + 1)


def scheme12_step(problem: TwoBlockProblem, config: SolverConfig, state: IterateState) -> IterateState:
    """Relaxed-multiplier scheme without proximal terms.

    y minimizes the plain augmented Lagrangian; the z-subproblem and the
    multiplier update both use the rho-weighted residual
    ``rho A*y - (1 - rho) B*z_old - rho c``.  Requires S = T = 0.
    """
    if not (config.S.is_zero and config.T.is_zero):
        raise ConfigError("this scheme admits no proximal terms; S and T must be zero")
    sigma, rho = config.sigma, config.rho
    wy = wsum(wscale(sigma, problem.A.gram()))
    wz = wsum(wscale(sigma, problem.B.gram()))
    x0, z0 = state.x, state.z

    bz = problem.B.adjoint_apply(z0) - problem.c
    qy = problem.A.apply(x0) - sigma * problem.A.apply(bz)
    y = _safe_prox(problem.f, qy, wy)

    rhat = rho * problem.A.adjoint_apply(y) - (1.0 - rho) * problem.B.adjoint_apply(z0) - rho * problem.c
    qz = problem.B.apply(x0) - sigma * problem.B.apply(rhat)
    z = _safe_prox(problem.g, qz, wz)

    x = x0 - sigma * (rhat + problem.B.adjoint_apply(z))
    return IterateState(x, y, z, x, y, z, x0, state.y, z0, k=state.k + 1)


_METHOD_STEPS = {
    "gadmm": gadmm_step,
    "spadmm": spadmm_step,
    "scheme12": scheme12_step,
}


def kkt_residual_twoblock(problem: TwoBlockProblem, state: IterateState) -> float:
    """Max of the normalized primal residual and the two block optimality
    residuals measured through unit-weight prox fixed points."""
    x, y, z = state.x, state.y, state.z
    r = problem.primal_residual_vec(y, z)
    prim = vnorm(r) / (1.0 + vnorm(problem.c))
    eye = ScaledIdentity(1.0)
    ry = vnorm(y - problem.f.prox(y + problem.A.apply(x), eye)) / (1.0 + vnorm(y))
    rz = vnorm(z - problem.g.prox(z + problem.B.apply(x), eye)) / (1.0 + vnorm(z))
    return max(prim, ry, rz)


def _validate_pd_preconditions(problem, config, nsamples=8):
    """Sampled check that curvature + S + A A* (and the z-side mirror) are PD."""
    rng = np.random.default_rng(20240406)
    from .blockvec import ravel_vec, unravel_like

    for name, block, amap, W in (
        ("y", problem.f, problem.A, config.S),
        ("z", problem.g, problem.B, config.T),
    ):
        try:
            template = block.zero()
        except UnsupportedOperationError:
            continue
        size = ravel_vec(template).size
        for _ in range(nsamples):
            v = unravel_like(rng.standard_normal(size), template)
            av = amap.adjoint_apply(v)
            total = block.curvature.quad(v) + W.quad(v) + vdot(av, av)
            if total <= 1e-12 * vdot(v, v):
                raise ConfigError(
                    f"{name}-side operator curvature + proximal weight + A A* is not "
                    "positive definite (sampled); add a proximal term"
                )


def _state_finite(state: IterateState) -> bool:
    return all(all_finite(v) for v in (state.x, state.y, state.z))


def _adapt_sigma(problem, config, state, prev_z, last_change, k):
    """Double/halve sigma when the primal/dual residual ratio exceeds 10.

    Disabled unless ``config.adaptive_sigma`` is set; never fires more than
    once per 50 iterations.
    """
    if not config.adaptive_sigma or k - last_change < 50:
        return config, last_change
    r = vnorm(problem.primal_residual_vec(state.y, state.z))
    s = config.sigma * vnorm(problem.A.apply(problem.B.adjoint_apply(state.z - prev_z)))
    if r > 10.0 * s and s > 0:
        return replace(config, sigma=config.sigma * 2.0), k
    if s > 10.0 * r and r >= 0:
        return replace(config, sigma=config.sigma / 2.0), k
    return config, last_change


def run(
    problem: TwoBlockProblem,
    config: SolverConfig,
    method: str = "gadmm",
    init: IterateState | None = None,
    callbacks: Sequence[Callable] = (),
    residual_fn: Callable | None = None,
    step_fn: Callable | None = None,
    saddle=None,
    record_history: bool = False,
) -> tuple[IterateState, ConvergenceReport]:
    """Iterate one of the step schemes until the primal residual and the
    residual metric both fall below ``config.tol`` or ``max_iter`` is hit.

    Parameters
    ----------
    method : one of ``gadmm``, ``spadmm``, ``scheme12`` (ignored when
        ``step_fn`` is given).
    callbacks : callables invoked as ``cb(state, k, primal, metric)`` every
        ``check_every`` iterations with a read-only view of the state.
    residual_fn : replacement residual metric ``fn(problem, state) -> float``;
        defaults to :func:`kkt_residual_twoblock`.
    saddle : optional known saddle point (x, y, z); when given, the descent
        quantity of :func:`lyapunov` is recorded each check.

    Returns the final state and a :class:`ConvergenceReport`.
    """
    config.validate()
    if step_fn is None:
        try:
            step_fn = _METHOD_STEPS[method]
        except KeyError:
            raise ConfigError(f"unknown method {method!r}") from None
        if isinstance(problem, TwoBlockProblem):
            _validate_pd_preconditions(problem, config)
    if residual_fn is None:
        residual_fn = kkt_residual_twoblock
    state = init if init is not None else zero_state(problem)

    report = ConvergenceReport(0, Status.MAX_ITER, np.inf, np.inf)
    if saddle is not None:
        report.lyapunov_history = []

    def check(state, k):
        r = problem.primal_residual_vec(state.y, state.z)
        prim = vnorm(r) / (1.0 + vnorm(problem.c))
        metric = residual_fn(problem, state)
        if record_history:
            report.history.append((k, prim, metric))
        if saddle is not None and k > 0:
            report.lyapunov_history.append(lyapunov(problem, state, saddle, config))
        for cb in callbacks:
            cb(state, k, prim, metric)
        return prim, metric

    prim, metric = check(state, 0)
    if max(prim, metric) < config.tol:
        report.iterations = 0
        report.status = Status.CONVERGED
        report.primal_residual, report.residual = prim, metric
        report.sigma_final = config.sigma
        return state, report

    last_sigma_change = 0
    prev_z = state.z
    for k in range(1, config.max_iter + 1):
        new_state = step_fn(problem, config, state)
        if not _state_finite(new_state):
            report.iterations = k
            report.status = Status.DIVERGED
            report.primal_residual, report.residual = np.inf, np.inf
            report.sigma_final = config.sigma
            return new_state, report
        config, last_sigma_change = _adapt_sigma(
            problem, config, new_state, prev_z, last_sigma_change, k
        )
        prev_z = state.z
        state = new_state
        if k % config.check_every == 0 or k == config.max_iter:
            prim, metric = check(state, k)
            if max(prim, metric) < config.tol:
                report.iterations = k
                report.status = Status.CONVERGED
                report.primal_residual, report.residual = prim, metric
                report.sigma_final = config.sigma
                return state, report

    report.iterations = config.max_iter
    report.status = Status.MAX_ITER
    report.primal_residual, report.residual = prim, metric
    report.sigma_final = config.sigma
    return state, report


def lyapunov(problem: TwoBlockProblem, state: IterateState, saddle, config: SolverConfig) -> float:
    """Descent quantity driving the relaxed scheme's convergence.

    Evaluated after the relaxation step of an iteration: it consumes the
    main iterate w, the relaxed point that produced it, and the freshly
    relaxed point.  Monotonically non-increasing along the iteration for
    any rho in (0, 2).
    """
    if saddle is None:
        raise UnsupportedOperationError("a saddle point is required")
    xbar, ybar, zbar = saddle
    sigma, rho = config.sigma, config.rho
    S, T = config.S, config.T

    xe = state.x - xbar
    aye = problem.A.adjoint_apply(state.y - ybar)
    drift = xe + (sigma * (1.0 - rho)) * aye
    val = vdot(drift, drift) / (sigma * rho)
    val += (S.quad(state.y_t - ybar) + T.quad(state.z_tp - zbar)) / rho
    val += (2.0 - rho) * (S.quad(state.y - state.y_tp) + sigma * vdot(aye, aye))
    return val
