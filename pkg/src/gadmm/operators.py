"""Linear maps with adjoints, block maps, and semi-proximal operator builders.

The two semi-proximal constructions shipped here are

* the symmetric Gauss-Seidel composition ``v -> M D^{-1} M* v`` induced by a
  backward/forward block sweep, and
* the full-Jacobi pair ``S = sigma[(1+tau1) E - A A*]`` (and mirrored ``T``)
  that turns a parallel block update into a plain two-block step.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .blockvec import BlockVec, ravel_vec, unravel_like, vdot, vnorm, zeros_like
from .errors import ConfigError, InputError
from .linalg import (
    BlockDiagWeight,
    DenseWeight,
    GramWeight,
    ScaledIdentity,
    WeightOperator,
    ZeroWeight,
    symmetrize,
)

__all__ = [
    "LinearMap",
    "MatrixMap",
    "FuncMap",
    "ZeroMap",
    "BlockMap",
    "BlockQuadratic",
    "SemiProximalPair",
    "SgsWeight",
    "JacobiWeight",
    "build_sgs_operator",
    "build_jacobi_pair",
    "choose_default_jacobi_blocks",
    "map_to_dense",
    "check_adjoint",
]


class LinearMap:
    """A: X -> V with an adjoint A*: V -> X.

    ``domain_template`` / ``codomain_template`` are zero elements of the two
    spaces; they drive dense materialization and the power method.
    """

    def apply(self, x):
        raise NotImplementedError

    def adjoint_apply(self, v):
        raise NotImplementedError

    domain_template = None
    codomain_template = None

    def gram(self) -> WeightOperator:
        """The PSD action v -> A(A*(v)) on the codomain."""
        return GramWeight(self)


class MatrixMap(LinearMap):
    """Dense matrix map between flat vector spaces."""

    def __init__(self, matrix):
        self.matrix = np.asarray(matrix, dtype=float)
        if self.matrix.ndim != 2:
            raise InputError("MatrixMap needs a 2-d matrix")

    def apply(self, x):
        return self.matrix @ x

    def adjoint_apply(self, v):
        return self.matrix.T @ v

    @property
    def domain_template(self):
        return np.zeros(self.matrix.shape[1])

    @property
    def codomain_template(self):
        return np.zeros(self.matrix.shape[0])

    def gram(self) -> WeightOperator:
        return DenseWeight(self.matrix @ self.matrix.T)


class FuncMap(LinearMap):
    """Linear map defined by a pair of callables."""

    def __init__(self, apply, adjoint, domain_template, codomain_template, gram_op=None):
        self._apply = apply
        self._adjoint = adjoint
        self.domain_template = domain_template
        self.codomain_template = codomain_template
        self._gram = gram_op

    def apply(self, x):
        return self._apply(x)

    def adjoint_apply(self, v):
        return self._adjoint(v)

    def gram(self) -> WeightOperator:
        return self._gram if self._gram is not None else GramWeight(self)


class ZeroMap(LinearMap):
    def __init__(self, domain_template, codomain_template):
        self.domain_template = domain_template
        self.codomain_template = codomain_template

    def apply(self, x):
        return zeros_like(self.codomain_template)

    def adjoint_apply(self, v):
        return zeros_like(self.domain_template)

    def gram(self) -> WeightOperator:
        return ZeroWeight()


class BlockMap(LinearMap):
    """Stack of maps A_i: X -> V_i sharing the domain X.

    ``apply`` produces a BlockVec; the adjoint sums the per-block adjoints:
    A* v = sum_i A_i* v_i.
    """

    def __init__(self, blocks):
        self.blocks = list(blocks)
        if not self.blocks:
            raise InputError("BlockMap needs at least one block")

    def apply(self, x) -> BlockVec:
        return BlockVec([b.apply(x) for b in self.blocks])

    def adjoint_apply(self, v: BlockVec):
        out = self.blocks[0].adjoint_apply(v.parts[0])
        for b, part in zip(self.blocks[1:], v.parts[1:]):
            out = out + b.adjoint_apply(part)
        return out

    @property
    def domain_template(self):
        return self.blocks[0].domain_template

    @property
    def codomain_template(self):
        return BlockVec([zeros_like(b.codomain_template) for b in self.blocks])


@dataclass
class BlockQuadratic:
    """Convex quadratic over a product space: 0.5 <y, P y> + <linear, y> + constant.

    ``hessian_blocks`` is a p x p grid of blocks P_ij; entry (i, j) maps part
    j to part i and may be None, an ndarray, or a LinearMap.  Only the upper
    triangle plus diagonal need to be given; missing lower blocks use the
    transpose of the mirror entry.
    """

    hessian_blocks: list
    linear: BlockVec | None = None
    constant: float = 0.0

    def __post_init__(self):
        p = len(self.hessian_blocks)
        for row in self.hessian_blocks:
            if len(row) != p:
                raise InputError("hessian_blocks must be a square grid")

    @property
    def nblocks(self) -> int:
        return len(self.hessian_blocks)

    def _block_apply(self, i, j, part):
        blk = self.hessian_blocks[i][j]
        if blk is None:
            mirror = self.hessian_blocks[j][i]
            if mirror is None:
                return None
            if isinstance(mirror, LinearMap):
                return mirror.adjoint_apply(part)
            return np.asarray(mirror, dtype=float).T @ part
        if isinstance(blk, LinearMap):
            return blk.apply(part)
        return np.asarray(blk, dtype=float) @ part

    def apply_hessian(self, y: BlockVec) -> BlockVec:
        out = []
        for i in range(self.nblocks):
            acc = zeros_like(y.parts[i])
            for j in range(self.nblocks):
                term = self._block_apply(i, j, y.parts[j])
                if term is not None:
                    acc = acc + term
            out.append(acc)
        return BlockVec(out)

    def cross_apply(self, i, y: BlockVec):
        """sum_{j != i} P_ij y_j, the coupling seen by block i."""
        acc = zeros_like(y.parts[i])
        for j in range(self.nblocks):
            if j == i:
                continue
            term = self._block_apply(i, j, y.parts[j])
            if term is not None:
                acc = acc + term
        return acc

    def diag_weight(self, i) -> WeightOperator:
        blk = self.hessian_blocks[i][i]
        if blk is None:
            return ZeroWeight()
        if isinstance(blk, LinearMap):
            raise ConfigError("diagonal Hessian blocks must be dense for block solves")
        return DenseWeight(blk)

    def value(self, y: BlockVec) -> float:
        val = 0.5 * vdot(y, self.apply_hessian(y)) + self.constant
        if self.linear is not None:
            val += vdot(self.linear, y)
        return val


@dataclass
class SemiProximalPair:
    """The (S, T) proximal weights attached to the two block updates."""

    S: WeightOperator
    T: WeightOperator


def _as_solver(op, index):
    """Normalize a per-block PD action into an object with a .solve method."""
    if isinstance(op, np.ndarray):
        op = DenseWeight(op)
    if isinstance(op, (DenseWeight, ScaledIdentity, BlockDiagWeight)):
        try:
            if isinstance(op, DenseWeight):
                op.factor()
            elif isinstance(op, ScaledIdentity) and op.scale <= 0:
                raise ConfigError("scale must be positive")
        except ConfigError as exc:
            raise ConfigError(f"block {index}: diagonal operator is not PD ({exc})") from exc
        return op
    raise ConfigError(f"block {index}: unsupported diagonal operator type {type(op).__name__}")


def _as_map(blk):
    if blk is None:
        return None
    if isinstance(blk, np.ndarray):
        return MatrixMap(blk)
    if isinstance(blk, LinearMap):
        return blk
    raise InputError(f"unsupported off-diagonal block type {type(blk).__name__}")


class SgsWeight(WeightOperator):
    """The composition v -> M D^{-1} M* v for a strictly upper block grid M."""

    def __init__(self, diag_solvers, upper):
        self.diag = diag_solvers
        self.upper = upper  # dict (i, j) -> LinearMap, i < j
        self.p = len(diag_solvers)

    def apply(self, v: BlockVec) -> BlockVec:
        # t = M* v (strictly lower action), u = D^{-1} t, out = M u
        t = []
        for j in range(self.p):
            acc = zeros_like(v.parts[j])
            for i in range(j):
                m = self.upper.get((i, j))
                if m is not None:
                    acc = acc + m.adjoint_apply(v.parts[i])
            t.append(acc)
        u = [self.diag[j].solve(t[j]) for j in range(self.p)]
        out = []
        for i in range(self.p):
            acc = zeros_like(v.parts[i])
            for j in range(i + 1, self.p):
                m = self.upper.get((i, j))
                if m is not None:
                    acc = acc + m.apply(u[j])
            out.append(acc)
        return BlockVec(out)

    @property
    def is_zero(self) -> bool:
        return not self.upper


def build_sgs_operator(diag_ops, offdiag) -> SgsWeight:
    """Compose the Gauss-Seidel-induced weight M D^{-1} M* from its pieces.

    Parameters
    ----------
    diag_ops : per-block positive-definite actions D_i (ndarray, DenseWeight,
        or ScaledIdentity).  Each is factorized once here; a failure raises
        :class:`ConfigError` naming the block.
    offdiag : dict ``(i, j) -> block`` for i < j, or a p x p grid with the
        strict upper triangle filled.  Blocks may be ndarrays or LinearMaps;
        None entries are treated as zero.
    """
    solvers = [_as_solver(op, i) for i, op in enumerate(diag_ops)]
    p = len(solvers)
    upper = {}
    if isinstance(offdiag, dict):
        items = offdiag.items()
    else:
        items = (((i, j), offdiag[i][j]) for i in range(p) for j in range(i + 1, p))
    for (i, j), blk in items:
        if not 0 <= i < j < p:
            raise InputError(f"off-diagonal index ({i}, {j}) is not strictly upper")
        m = _as_map(blk)
        if m is not None:
            upper[(i, j)] = m
    return SgsWeight(solvers, upper)


class JacobiWeight(WeightOperator):
    """sigma * [(1 + tau) E - A A*] acting on the stacked block space."""

    def __init__(self, sigma, tau, extra: BlockDiagWeight, blockmap: BlockMap):
        self.sigma = float(sigma)
        self.tau = float(tau)
        self.extra = extra
        self.blockmap = blockmap

    def apply(self, v: BlockVec) -> BlockVec:
        ev = self.extra.apply(v)
        gv = self.blockmap.apply(self.blockmap.adjoint_apply(v))
        return self.sigma * ((1.0 + self.tau) * ev - gv)


def _sample_min_quad(op_quad, template, rng, nsamples=50):
    worst = np.inf
    for _ in range(nsamples):
        v = unravel_like(rng.standard_normal(ravel_vec(template).size), template)
        n2 = vdot(v, v)
        if n2 == 0:
            continue
        worst = min(worst, op_quad(v) / n2)
    return worst


def _validate_dominance(extra_ops, blockmap, tau, side_name, rng):
    """Sampled check of E_i >= tau * A_i A_i* per block."""
    for i, (e_op, amap) in enumerate(zip(extra_ops, blockmap.blocks)):
        template = zeros_like(amap.codomain_template)

        def gap(v):
            av = amap.adjoint_apply(v)
            return e_op.quad(v) - tau * vdot(av, av)

        worst = _sample_min_quad(lambda v: gap(v), template, rng)
        if worst < -1e-8:
            raise ConfigError(
                f"{side_name} block {i}: extra proximal operator does not dominate "
                f"tau * A A* (sampled gap {worst:.3e})"
            )


def build_jacobi_pair(E, H, A: BlockMap, B: BlockMap, tau1, tau2, sigma) -> SemiProximalPair:
    """Assemble the full-Jacobi semi-proximal pair.

    S = sigma[(1+tau1) E - A A*] and T = sigma[(1+tau2) H - B B*], requiring
    tau1 >= p-1, tau2 >= q-1 and the block dominance E_i >= tau1 A_i A_i*
    (validated by sampled quadratic forms).
    """
    if sigma <= 0:
        raise ConfigError("sigma must be positive")
    p, q = len(A.blocks), len(B.blocks)
    if tau1 < p - 1:
        raise ConfigError(f"tau1 = {tau1} violates the bound tau1 >= p - 1 = {p - 1}")
    if tau2 < q - 1:
        raise ConfigError(f"tau2 = {tau2} violates the bound tau2 >= q - 1 = {q - 1}")
    E = BlockDiagWeight(E) if not isinstance(E, BlockDiagWeight) else E
    H = BlockDiagWeight(H) if not isinstance(H, BlockDiagWeight) else H
    rng = np.random.default_rng(1234)
    _validate_dominance(E.ops, A, tau1, "first side", rng)
    _validate_dominance(H.ops, B, tau2, "second side", rng)
    return SemiProximalPair(JacobiWeight(sigma, tau1, E, A), JacobiWeight(sigma, tau2, H, B))


def choose_default_jacobi_blocks(A: BlockMap, tau1) -> BlockDiagWeight:
    """Scaled-identity extras E_i = (tau1 * lmax(A_i A_i*) + eps) I.

    The eps = 1e-8 (1 + lmax) shift keeps every block operator strictly
    positive definite even for zero maps.
    """
    from .linalg import spectral_norm_estimate

    ops = []
    for blk in A.blocks:
        nrm = spectral_norm_estimate(blk)
        lmax = nrm * nrm
        eps = 1e-8 * (1.0 + lmax)
        ops.append(ScaledIdentity(tau1 * lmax + eps))
    return BlockDiagWeight(ops)


def map_to_dense(linmap: LinearMap, domain_template=None, codomain_template=None) -> np.ndarray:
    """Materialize a linear map as a dense matrix by probing basis vectors."""
    dom = linmap.domain_template if domain_template is None else domain_template
    cod = linmap.codomain_template if codomain_template is None else codomain_template
    n = ravel_vec(dom).size
    m = ravel_vec(cod).size
    out = np.empty((m, n))
    basis = np.zeros(n)
    for j in range(n):
        basis[j] = 1.0
        out[:, j] = ravel_vec(linmap.apply(unravel_like(basis, dom)))
        basis[j] = 0.0
    return out


def check_adjoint(linmap: LinearMap, rng, nsamples: int = 10, tol: float = 1e-10) -> float:
    """Largest relative defect of <A x, v> = <x, A* v> over random samples."""
    worst = 0.0
    dom = linmap.domain_template
    cod = linmap.codomain_template
    for _ in range(nsamples):
        x = unravel_like(rng.standard_normal(ravel_vec(dom).size), dom)
        v = unravel_like(rng.standard_normal(ravel_vec(cod).size), cod)
        lhs = vdot(linmap.apply(x), v)
        rhs = vdot(x, linmap.adjoint_apply(v))
        scale = max(1.0, abs(lhs), abs(rhs))
        worst = max(worst, abs(lhs - rhs) / scale)
    if worst > tol:
        raise InputError(f"adjoint identity violated: relative defect {worst:.3e}")
    return worst
