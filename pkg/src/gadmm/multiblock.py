"""Multi-block schemes that reduce to two-block steps with induced weights.

A :class:`MultiBlockProblem` carries two sides, each a list of convex blocks
coupled by a shared quadratic and a stack of maps into the constraint space.
Two realizations of the two-block step are provided:

* symmetric Gauss-Seidel sweeps (backward half-sweep, exact first block,
  forward sweep), equivalent to a two-block step with the induced weight
  ``sigma * (E + M D^{-1} M*)``;
* a full-Jacobi parallel update, equivalent to a two-block step with
  ``S = sigma[(1+tau1) E - A A*]`` (all block solves independent).
"""

from __future__ import annotations

import weakref
from dataclasses import dataclass, field

import numpy as np

from .blockvec import BlockVec, copy_vec, vdot, vnorm, zeros_like
from .errors import ConfigError, InputError
from .linalg import (
    BlockDiagWeight,
    DenseWeight,
    ScaledIdentity,
    WeightOperator,
    ZeroWeight,
    weight_to_dense,
    wscale,
    wsum,
)
from .operators import (
    BlockMap,
    BlockQuadratic,
    FuncMap,
    JacobiWeight,
    LinearMap,
    SemiProximalPair,
    SgsWeight,
    build_jacobi_pair,
    build_sgs_operator,
    choose_default_jacobi_blocks,
    map_to_dense,
)
from .solver import (
    ConvexBlock,
    IterateState,
    QuadraticBlock,
    SolverConfig,
    TwoBlockProblem,
    initial_state,
)
from . import solver as _solver

__all__ = [
    "MultiBlockSide",
    "MultiBlockProblem",
    "sgs_y_sweep",
    "sgs_z_sweep",
    "sgs_main_step",
    "sgs_spadmm_step",
    "jacobi_step",
    "induced_sgs_pair",
    "induced_sgs_pair_dense",
    "to_explicit_two_block",
    "kkt_residual_multiblock",
    "zero_state_multiblock",
    "run_multiblock",
]


@dataclass(eq=False)
class MultiBlockSide:
    """One side of the coupled problem.

    blocks : per-block convex functions (block 0 may be nonsmooth; the
        Gauss-Seidel schedule solves it exactly, without an extra term).
    maps : per-block maps A_i from the constraint space into each block
        space (the constraint reads ``sum_i A_i* y_i + ... = c``).
    quad : optional shared quadratic coupling across the blocks.
    extra_prox : per-block extra proximal weights E_i used by the
        Gauss-Seidel sweeps; entry 0 must be None or zero.
    """

    blocks: list
    maps: list
    quad: BlockQuadratic | None = None
    extra_prox: list | None = None

    def __post_init__(self):
        if len(self.blocks) != len(self.maps):
            raise InputError("blocks and maps must have equal length")
        if self.extra_prox is None:
            self.extra_prox = [None] * len(self.blocks)
        if len(self.extra_prox) != len(self.blocks):
            raise InputError("extra_prox must match the number of blocks")
        if self.quad is not None and self.quad.nblocks != len(self.blocks):
            raise InputError("quad grid size must match the number of blocks")

    @property
    def nblocks(self) -> int:
        return len(self.blocks)

    def zero(self) -> BlockVec:
        return BlockVec([b.zero() for b in self.blocks])

    def adjoint_apply(self, v: BlockVec):
        out = self.maps[0].adjoint_apply(v.parts[0])
        for m, part in zip(self.maps[1:], v.parts[1:]):
            out = out + m.adjoint_apply(part)
        return out

    def as_blockmap(self) -> BlockMap:
        return BlockMap(self.maps)

    def linear_part(self, i):
        if self.quad is not None and self.quad.linear is not None:
            return self.quad.linear.parts[i]
        return None


@dataclass(eq=False)
class MultiBlockProblem:
    y_side: MultiBlockSide
    z_side: MultiBlockSide
    c: object

    def __post_init__(self):
        self.c = copy_vec(self.c)

    def primal_residual_vec(self, y: BlockVec, z: BlockVec):
        return self.y_side.adjoint_apply(y) + self.z_side.adjoint_apply(z) - self.c


def zero_state_multiblock(problem: MultiBlockProblem) -> IterateState:
    return initial_state(zeros_like(problem.c), problem.y_side.zero(), problem.z_side.zero())


# ---------------------------------------------------------------------------
# compiled per-solve data (cached weakly per problem)

_compile_cache: "weakref.WeakKeyDictionary" = weakref.WeakKeyDictionary()


def _extra_weight(e) -> WeightOperator:
    return ZeroWeight() if e is None else e


def _compile_sgs_side(side: MultiBlockSide, sigma: float, name: str):
    e0 = _extra_weight(side.extra_prox[0])
    if not e0.is_zero:
        raise ConfigError(
            f"{name} block 0 carries an extra proximal weight; the first block "
            "is solved exactly and must not have one"
        )
    weights = []
    for i in range(side.nblocks):
        gram = side.maps[i].gram()
        extra = _extra_weight(side.extra_prox[i])
        w = wsum(wscale(sigma, wsum(gram, extra)))
        if side.quad is not None:
            w = wsum(w, side.quad.diag_weight(i))
        # certify positive definiteness up front so failures name the block;
        # block 0 may instead draw its curvature from its own function, so
        # its certificate comes from the prox solve itself
        if i > 0:
            try:
                if isinstance(w, DenseWeight):
                    w.factor()
                elif isinstance(w, ScaledIdentity) and w.scale <= 0:
                    raise ConfigError("zero diagonal operator")
                elif w.is_zero:
                    raise ConfigError("zero diagonal operator")
            except ConfigError as exc:
                raise ConfigError(
                    f"{name} block {i}: diagonal operator is not PD ({exc})"
                ) from exc
        weights.append(w)
    return weights


def _sgs_compiled(problem: MultiBlockProblem, sigma: float):
    per_problem = _compile_cache.setdefault(problem, {})
    key = ("sgs", sigma)
    data = per_problem.get(key)
    if data is None:
        data = (
            _compile_sgs_side(problem.y_side, sigma, "y-side"),
            _compile_sgs_side(problem.z_side, sigma, "z-side"),
        )
        per_problem[key] = data
    return data


def _default_jacobi_tau(nblocks: int) -> float:
    # p - 1 keeps the induced weight PSD once p >= 2; a single block needs
    # tau(1 + tau) >= 1, so fall back to 1 there
    return float(nblocks - 1) if nblocks > 1 else 1.0


def _jacobi_compiled(problem: MultiBlockProblem, config: SolverConfig, extras=None):
    p, q = problem.y_side.nblocks, problem.z_side.nblocks
    tau1 = config.tau1 if config.tau1 is not None else _default_jacobi_tau(p)
    tau2 = config.tau2 if config.tau2 is not None else _default_jacobi_tau(q)
    if tau1 < p - 1:
        raise ConfigError(f"tau1 = {tau1} below the bound p - 1 = {p - 1}")
    if tau2 < q - 1:
        raise ConfigError(f"tau2 = {tau2} below the bound q - 1 = {q - 1}")
    for side, name in ((problem.y_side, "y-side"), (problem.z_side, "z-side")):
        if side.quad is not None and any(
            blk is not None for row in side.quad.hessian_blocks for blk in row
        ):
            raise ConfigError(f"the Jacobi scheme requires a separable {name} (no quadratic coupling)")
    per_problem = _compile_cache.setdefault(problem, {})
    key = ("jacobi", config.sigma, tau1, tau2, id(extras))
    data = per_problem.get(key)
    if data is None:
        if extras is None:
            E = choose_default_jacobi_blocks(problem.y_side.as_blockmap(), tau1)
            H = choose_default_jacobi_blocks(problem.z_side.as_blockmap(), tau2)
        else:
            E, H = extras
            E = E if isinstance(E, BlockDiagWeight) else BlockDiagWeight(E)
            H = H if isinstance(H, BlockDiagWeight) else BlockDiagWeight(H)
        wy = [wscale(config.sigma * (1.0 + tau1), e) for e in E.ops]
        wz = [wscale(config.sigma * (1.0 + tau2), h) for h in H.ops]
        data = (tau1, tau2, E, H, wy, wz, extras)
        per_problem[key] = data
    return data[:6]


# ---------------------------------------------------------------------------
# Gauss-Seidel sweeps


def _solve_block(side, i, phase, xmul, sigma, r_other, center, current, weight):
    """One block subproblem: prox against q = A_i x - sigma A_i r + ..."""
    q = side.maps[i].apply(xmul) - sigma * side.maps[i].apply(r_other)
    extra = _extra_weight(side.extra_prox[i])
    if not extra.is_zero:
        q = q + sigma * extra.apply(center.parts[i])
    if side.quad is not None:
        q = q - side.quad.cross_apply(i, current)
        lin = side.linear_part(i)
        if lin is not None:
            q = q - lin
    try:
        return side.blocks[i].prox(q, weight)
    except Exception as exc:
        raise type(exc)(f"block {i} ({phase} phase): {exc}") from exc


def _sweep(side: MultiBlockSide, sigma, xmul, center: BlockVec, offset, weights):
    """Backward half-sweep (i = p-1 .. 1), exact first block, forward sweep.

    ``offset`` is the constraint contribution of everything outside this
    side (other side minus right-hand side).  Returns the updated BlockVec.
    """
    p = side.nblocks
    ycur = center.copy()
    r = side.adjoint_apply(ycur) + offset

    def update(ycur, r, i, phase):
        contrib = side.maps[i].adjoint_apply(ycur.parts[i])
        r_other = r - contrib
        yi = _solve_block(side, i, phase, xmul, sigma, r_other, center, ycur, weights[i])
        parts = list(ycur.parts)
        parts[i] = yi
        return BlockVec(parts), r_other + side.maps[i].adjoint_apply(yi)

    for i in range(p - 1, 0, -1):
        ycur, r = update(ycur, r, i, "backward")
    ycur, r = update(ycur, r, 0, "exact")
    for i in range(1, p):
        ycur, r = update(ycur, r, i, "forward")
    return ycur


def sgs_y_sweep(problem: MultiBlockProblem, sigma, x_t, y_t: BlockVec, z_t: BlockVec) -> BlockVec:
    """Gauss-Seidel update of the first side from the relaxed point."""
    wy, _ = _sgs_compiled(problem, sigma)
    offset = problem.z_side.adjoint_apply(z_t) - problem.c
    return _sweep(problem.y_side, sigma, x_t, y_t, offset, wy)


def sgs_z_sweep(problem: MultiBlockProblem, sigma, x, y: BlockVec, z_t: BlockVec) -> BlockVec:
    """Gauss-Seidel update of the second side given the fresh (x, y)."""
    _, wz = _sgs_compiled(problem, sigma)
    offset = problem.y_side.adjoint_apply(y) - problem.c
    return _sweep(problem.z_side, sigma, x, z_t, offset, wz)


def sgs_main_step(problem: MultiBlockProblem, config: SolverConfig, state: IterateState) -> IterateState:
    """Relaxed step realized by sweeps: y-sweep, multiplier update with the
    stale second side, z-sweep, then relaxation."""
    sigma = config.sigma
    xt, yt, zt = state.x_t, state.y_t, state.z_t
    y = sgs_y_sweep(problem, sigma, xt, yt, zt)
    x = xt - sigma * (problem.y_side.adjoint_apply(y) + problem.z_side.adjoint_apply(zt) - problem.c)
    z = sgs_z_sweep(problem, sigma, x, y, zt)
    xt2, yt2, zt2 = _solver._relax((xt, yt, zt), (x, y, z), config.rho)
    return IterateState(x, y, z, xt2, yt2, zt2, xt, yt, zt, k=state.k + 1)


def sgs_spadmm_step(problem: MultiBlockProblem, config: SolverConfig, state: IterateState) -> IterateState:
    """Step-length variant: both sweeps run against the same multiplier,
    which then moves by tau * sigma times the fresh residual."""
    sigma = config.sigma
    x0, y0, z0 = state.x, state.y, state.z
    y = sgs_y_sweep(problem, sigma, x0, y0, z0)
    z = sgs_z_sweep(problem, sigma, x0, y, z0)
    x = x0 - config.tau * sigma * (
        problem.y_side.adjoint_apply(y) + problem.z_side.adjoint_apply(z) - problem.c
    )
    return IterateState(x, y, z, x, y, z, x0, y0, z0, k=state.k + 1)


def jacobi_step(
    problem: MultiBlockProblem,
    config: SolverConfig,
    state: IterateState,
    extras=None,
) -> IterateState:
    """Parallel block update equivalent to the two-block step with the
    full-Jacobi pair.

    Every block of a side is solved independently from the relaxed point
    with weight ``sigma (1 + tau) E_i``; the result does not depend on the
    order the blocks are visited.  ``extras`` optionally supplies the
    (E, H) block-diagonal weights; the defaults come from
    :func:`choose_default_jacobi_blocks`.
    """
    tau1, tau2, E, H, wy, wz = _jacobi_compiled(problem, config, extras)
    sigma = config.sigma
    xt, yt, zt = state.x_t, state.y_t, state.z_t

    def parallel(side, extras, weights, tau, xmul, center, offset):
        r_full = side.adjoint_apply(center) + offset
        parts = []
        for i in range(side.nblocks):
            q = side.maps[i].apply(xmul) - sigma * side.maps[i].apply(r_full)
            q = q + sigma * (1.0 + tau) * extras.ops[i].apply(center.parts[i])
            parts.append(side.blocks[i].prox(q, weights[i]))
        return BlockVec(parts)

    offset_y = problem.z_side.adjoint_apply(zt) - problem.c
    y = parallel(problem.y_side, E, wy, tau1, xt, yt, offset_y)
    x = xt - sigma * (problem.y_side.adjoint_apply(y) + problem.z_side.adjoint_apply(zt) - problem.c)
    offset_z = problem.y_side.adjoint_apply(y) - problem.c
    z = parallel(problem.z_side, H, wz, tau2, x, zt, offset_z)
    xt2, yt2, zt2 = _solver._relax((xt, yt, zt), (x, y, z), config.rho)
    return IterateState(x, y, z, xt2, yt2, zt2, xt, yt, zt, k=state.k + 1)


# ---------------------------------------------------------------------------
# induced operators and the explicit two-block reduction


class _OffdiagMap(LinearMap):
    """The coupling block sigma^{-1} P_ij + A_i A_j* between block spaces."""

    def __init__(self, map_i, map_j, pij, sigma):
        self.map_i = map_i
        self.map_j = map_j
        self.pij = pij  # callable pair (apply, adjoint) or None
        self.sigma = sigma
        self.domain_template = zeros_like(map_j.codomain_template)
        self.codomain_template = zeros_like(map_i.codomain_template)

    def apply(self, v):
        out = self.map_i.apply(self.map_j.adjoint_apply(v))
        if self.pij is not None:
            out = out + self.pij[0](v) / self.sigma
        return out

    def adjoint_apply(self, u):
        out = self.map_j.apply(self.map_i.adjoint_apply(u))
        if self.pij is not None:
            out = out + self.pij[1](u) / self.sigma
        return out


def _quad_block_callables(quad: BlockQuadratic | None, i, j):
    if quad is None:
        return None
    blk = quad.hessian_blocks[i][j]
    mirror = quad.hessian_blocks[j][i]
    if blk is None and mirror is None:
        return None
    if blk is not None:
        if isinstance(blk, LinearMap):
            return (blk.apply, blk.adjoint_apply)
        mat = np.asarray(blk, dtype=float)
        return (lambda v: mat @ v, lambda u: mat.T @ u)
    if isinstance(mirror, LinearMap):
        return (mirror.adjoint_apply, mirror.apply)
    mmat = np.asarray(mirror, dtype=float)
    return (lambda v: mmat.T @ v, lambda u: mmat @ u)


def _induced_side_weight(side: MultiBlockSide, sigma: float) -> WeightOperator:
    """sigma * (E + M D^{-1} M*) for one side."""
    p = side.nblocks
    diag_ops = []
    for i in range(p):
        d = wsum(
            side.maps[i].gram(),
            _extra_weight(side.extra_prox[i]),
            wscale(1.0 / sigma, side.quad.diag_weight(i)) if side.quad is not None else None,
        )
        diag_ops.append(d)
    upper = {}
    for i in range(p):
        for j in range(i + 1, p):
            upper[(i, j)] = _OffdiagMap(
                side.maps[i], side.maps[j], _quad_block_callables(side.quad, i, j), sigma
            )
    sgs = build_sgs_operator(diag_ops, upper)
    extras = BlockDiagWeight([_extra_weight(e) for e in side.extra_prox])
    return wsum(wscale(sigma, sgs), wscale(sigma, extras))


def induced_sgs_pair(problem: MultiBlockProblem, sigma: float) -> SemiProximalPair:
    """The semi-proximal pair whose two-block step the sweeps reproduce."""
    return SemiProximalPair(
        _induced_side_weight(problem.y_side, sigma),
        _induced_side_weight(problem.z_side, sigma),
    )


def _induced_side_dense(side: MultiBlockSide, sigma: float) -> np.ndarray:
    """Brute-force dense assembly of sigma * (E + M D^{-1} M*)."""
    p = side.nblocks
    templates = [b.zero() for b in side.blocks]
    dims = [np.size(t) for t in templates]
    off = np.concatenate([[0], np.cumsum(dims)])
    n = off[-1]
    dmat = np.zeros((n, n))
    emat = np.zeros((n, n))
    mmat = np.zeros((n, n))
    for i in range(p):
        sl = slice(off[i], off[i + 1])
        gram = weight_to_dense(side.maps[i].gram(), templates[i])
        extra = weight_to_dense(_extra_weight(side.extra_prox[i]), templates[i])
        pii = (
            weight_to_dense(side.quad.diag_weight(i), templates[i]) / sigma
            if side.quad is not None
            else 0.0
        )
        dmat[sl, sl] = gram + extra + pii
        emat[sl, sl] = extra
        for j in range(i + 1, p):
            m = _OffdiagMap(side.maps[i], side.maps[j], _quad_block_callables(side.quad, i, j), sigma)
            mmat[off[i] : off[i + 1], off[j] : off[j + 1]] = map_to_dense(m)
    s = mmat @ np.linalg.solve(dmat, mmat.T)
    return sigma * (emat + s)


def induced_sgs_pair_dense(problem: MultiBlockProblem, sigma: float):
    """Dense (flattened) version of :func:`induced_sgs_pair` for small problems."""
    return (
        _induced_side_dense(problem.y_side, sigma),
        _induced_side_dense(problem.z_side, sigma),
    )


def _flatten_side(side: MultiBlockSide) -> QuadraticBlock:
    """Collapse a side of quadratic/linear blocks into one dense block."""
    templates = [b.zero() for b in side.blocks]
    dims = [np.size(t) for t in templates]
    off = np.concatenate([[0], np.cumsum(dims)])
    n = off[-1]
    hess = np.zeros((n, n))
    lin = np.zeros(n)
    const = 0.0
    for i, blk in enumerate(side.blocks):
        if not isinstance(blk, QuadraticBlock):
            raise ConfigError(
                "the explicit two-block reduction needs quadratic or linear blocks"
            )
        sl = slice(off[i], off[i + 1])
        if blk.hessian is not None:
            hess[sl, sl] += blk.hessian
        lin[sl] += blk.linear
        const += blk.constant
    if side.quad is not None:
        for i in range(side.nblocks):
            for j in range(side.nblocks):
                cal = _quad_block_callables(side.quad, i, j) if i <= j else None
                if i > j:
                    continue
                if cal is None:
                    continue
                blkmat = np.empty((dims[i], dims[j]))
                basis = np.zeros(dims[j])
                for col in range(dims[j]):
                    basis[col] = 1.0
                    blkmat[:, col] = cal[0](basis.reshape(np.shape(templates[j]))).ravel()
                    basis[col] = 0.0
                hess[off[i] : off[i + 1], off[j] : off[j + 1]] += blkmat
                if i != j:
                    hess[off[j] : off[j + 1], off[i] : off[i + 1]] += blkmat.T
        if side.quad.linear is not None:
            lin += np.concatenate([np.ravel(p) for p in side.quad.linear.parts])
        const += side.quad.constant
    return QuadraticBlock(hessian=hess, linear=lin, constant=const)


def to_explicit_two_block(problem: MultiBlockProblem, sigma: float):
    """Flatten a quadratic multi-block problem into a plain two-block one
    together with the dense induced pair.  Serves as the reference path the
    sweep implementations are tested against."""
    from .operators import MatrixMap

    f = _flatten_side(problem.y_side)
    g = _flatten_side(problem.z_side)
    a_mat = np.vstack([map_to_dense(m) for m in problem.y_side.maps])
    b_mat = np.vstack([map_to_dense(m) for m in problem.z_side.maps])
    two = TwoBlockProblem(f=f, g=g, A=MatrixMap(a_mat), B=MatrixMap(b_mat), c=problem.c)
    s_dense, t_dense = induced_sgs_pair_dense(problem, sigma)
    pair = SemiProximalPair(DenseWeight(s_dense), DenseWeight(t_dense))
    return two, pair


def kkt_residual_multiblock(problem: MultiBlockProblem, state: IterateState) -> float:
    """Primal residual plus per-block prox fixed-point optimality residuals."""
    x, y, z = state.x, state.y, state.z
    r = problem.primal_residual_vec(y, z)
    worst = vnorm(r) / (1.0 + vnorm(problem.c))
    eye = ScaledIdentity(1.0)
    for side, v in ((problem.y_side, y), (problem.z_side, z)):
        for i in range(side.nblocks):
            g = side.maps[i].apply(x)
            if side.quad is not None:
                g = g - side.quad.cross_apply(i, v)
                g = g - side.quad.diag_weight(i).apply(v.parts[i])
                lin = side.linear_part(i)
                if lin is not None:
                    g = g - lin
            res = vnorm(v.parts[i] - side.blocks[i].prox(v.parts[i] + g, eye))
            worst = max(worst, res / (1.0 + vnorm(v.parts[i])))
    return worst


_MB_STEPS = {
    "gadmm": sgs_main_step,
    "spadmm": sgs_spadmm_step,
    "jacobi": jacobi_step,
}


def run_multiblock(
    problem: MultiBlockProblem,
    config: SolverConfig,
    method: str = "gadmm",
    init: IterateState | None = None,
    callbacks=(),
    residual_fn=None,
    record_history: bool = False,
    jacobi_extras=None,
):
    """Drive the shared iteration loop with a multi-block step function.

    ``method`` is ``gadmm`` (sweeps + relaxation), ``spadmm`` (sweeps +
    step length) or ``jacobi`` (parallel blocks + relaxation).
    """
    try:
        step = _MB_STEPS[method]
    except KeyError:
        raise ConfigError(f"unknown multi-block method {method!r}") from None
    if method == "jacobi" and jacobi_extras is not None:
        step = lambda pr, cfg, st: jacobi_step(pr, cfg, st, extras=jacobi_extras)
    if init is None:
        init = zero_state_multiblock(problem)
    if residual_fn is None:
        residual_fn = kkt_residual_multiblock
    return _solver.run(
        problem,
        config,
        init=init,
        callbacks=callbacks,
        residual_fn=residual_fn,
        step_fn=step,
        record_history=record_history,
    )
