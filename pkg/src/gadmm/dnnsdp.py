"""Doubly-non-negative SDP front-end solved through its dual.

The primal problem is

    min <C, X>   s.t.  A_E X = b_E,  A_I X >= b_I,  X PSD and inside a box N.

Its dual is reformulated with a slack variable and a scaled coupling
``alpha (v - y_I) = 0`` so that every block subproblem has a closed form
(PSD projection, box-support prox via the Moreau identity, linear solves,
nonnegative clamps).  The multiplier of the stacked equality recovers the
primal matrix.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse

from .blockvec import BlockVec, vdot, vnorm, zeros_like
from .errors import ConfigError, InputError, UnsupportedOperationError
from .linalg import (
    DenseWeight,
    ScaledIdentity,
    box_support,
    project_box,
    project_psd,
    spectral_norm_estimate,
    symmetrize,
)
from .multiblock import (
    MultiBlockProblem,
    MultiBlockSide,
    kkt_residual_multiblock,
    run_multiblock,
    zero_state_multiblock,
)
from .operators import FuncMap, LinearMap
from .solver import ConvergenceReport, ConvexBlock, IterateState, LinearBlock, SolverConfig

__all__ = [
    "Box",
    "ConstraintStack",
    "DnnSdpProblem",
    "DualIterate",
    "ResidualSet",
    "PsdConeBlock",
    "NegBoxSupportBlock",
    "NonnegBlock",
    "prox_support_negated",
    "solve_block_yE",
    "build_dual_multiblock",
    "choose_alpha",
    "kkt_residuals",
    "primal_objective",
    "dual_objective",
    "recover_iterate",
    "solve_dnnsdp",
]


@dataclass
class Box:
    """Entrywise box {lower <= X <= upper}; None bounds mean unbounded."""

    lower: object = 0.0
    upper: object = None

    def project(self, m):
        return project_box(m, self.lower, self.upper)

    def support(self, y) -> float:
        return box_support(y, self.lower, self.upper)


class ConstraintStack:
    """m symmetric constraint matrices stored as one sparse (m, n*n) block.

    apply(X)[i] = <G_i, X>; adjoint(y) = sum_i y_i G_i.
    """

    def __init__(self, matrices, n=None):
        mats = list(matrices)
        if not mats and n is None:
            raise InputError("empty constraint stack needs an explicit dimension")
        self.n = int(n if n is not None else np.asarray(mats[0]).shape[0])
        rows = []
        for k, g in enumerate(mats):
            if scipy.sparse.issparse(g):
                g = g.toarray()
            g = np.asarray(g, dtype=float)
            if g.shape != (self.n, self.n):
                raise InputError(f"constraint {k} has shape {g.shape}, expected {(self.n, self.n)}")
            if np.abs(g - g.T).max() > 1e-10 * max(1.0, np.abs(g).max()):
                raise InputError(f"constraint {k} is not symmetric")
            rows.append(scipy.sparse.csr_matrix(g.reshape(1, -1)))
        if rows:
            self.mat = scipy.sparse.vstack(rows, format="csr")
        else:
            self.mat = scipy.sparse.csr_matrix((0, self.n * self.n))

    @classmethod
    def from_triplets(cls, n, triplet_rows):
        """Each row is an iterable of (i, j, value) with symmetric fill-in."""
        mats = []
        for trips in triplet_rows:
            g = np.zeros((n, n))
            for i, j, v in trips:
                g[i, j] += v
                if i != j:
                    g[j, i] += v
            mats.append(g)
        return cls(mats, n=n)

    def __len__(self):
        return self.mat.shape[0]

    def apply(self, x: np.ndarray) -> np.ndarray:
        return self.mat @ np.ravel(x)

    def adjoint(self, y: np.ndarray) -> np.ndarray:
        return (self.mat.T @ np.asarray(y, dtype=float)).reshape(self.n, self.n)

    def gram_dense(self) -> np.ndarray:
        return np.asarray((self.mat @ self.mat.T).todense())

    def row_matrix(self, i) -> np.ndarray:
        return np.asarray(self.mat[i].todense()).reshape(self.n, self.n)

    def as_linear_map(self) -> LinearMap:
        return FuncMap(
            self.apply,
            self.adjoint,
            domain_template=np.zeros((self.n, self.n)),
            codomain_template=np.zeros(len(self)),
        )


@dataclass(eq=False)
class DnnSdpProblem:
    """Data (C, A_E, b_E, A_I, b_I, N) of the primal problem."""

    C: np.ndarray
    A_E: ConstraintStack
    b_E: np.ndarray
    A_I: ConstraintStack | None = None
    b_I: np.ndarray | None = None
    box: Box = field(default_factory=Box)

    def __post_init__(self):
        self.C = symmetrize(np.asarray(self.C, dtype=float))
        self.b_E = np.asarray(self.b_E, dtype=float)
        if len(self.A_E) != self.b_E.size:
            raise InputError("b_E length does not match the equality stack")
        if self.A_I is not None and len(self.A_I) == 0:
            self.A_I = None
        if self.A_I is None:
            self.b_I = None
        else:
            self.b_I = np.asarray(self.b_I, dtype=float)
            if len(self.A_I) != self.b_I.size:
                raise InputError("b_I length does not match the inequality stack")
            if self.A_I.n != self.n:
                raise InputError("inequality stack dimension mismatch")

    @property
    def n(self) -> int:
        return self.C.shape[0]

    @property
    def m_E(self) -> int:
        return len(self.A_E)

    @property
    def m_I(self) -> int:
        return 0 if self.A_I is None else len(self.A_I)


@dataclass
class DualIterate:
    """One dual point plus the recovered primal multipliers X and u."""

    Z: np.ndarray
    S: np.ndarray
    y_E: np.ndarray
    y_I: np.ndarray | None
    v: np.ndarray | None
    X: np.ndarray
    u: np.ndarray | None


@dataclass
class ResidualSet:
    """The six normalized optimality residuals; ``worst`` is their max."""

    dual: float
    box: float
    box_complement: float
    primal: float
    psd: float
    inequality: float

    @property
    def worst(self) -> float:
        return max(
            self.dual, self.box, self.box_complement, self.primal, self.psd, self.inequality
        )

    def as_dict(self) -> dict:
        return {
            "dual": self.dual,
            "box": self.box,
            "box_complement": self.box_complement,
            "primal": self.primal,
            "psd": self.psd,
            "inequality": self.inequality,
            "worst": self.worst,
        }


# ---------------------------------------------------------------------------
# dual block functions


class PsdConeBlock(ConvexBlock):
    """Indicator of the PSD cone; prox is a shifted projection."""

    def __init__(self, n):
        self.n = int(n)

    def prox(self, q, weight):
        if not isinstance(weight, ScaledIdentity):
            raise ConfigError("the cone block needs a scaled-identity weight")
        return project_psd(q / weight.scale)

    def value(self, u) -> float:
        w = np.linalg.eigvalsh(symmetrize(u))
        return 0.0 if w.min() >= -1e-9 * (1.0 + abs(w.max())) else float("inf")

    def zero(self):
        return np.zeros((self.n, self.n))


class NegBoxSupportBlock(ConvexBlock):
    """f(Z) = support function of the box evaluated at -Z."""

    def __init__(self, n, box: Box):
        self.n = int(n)
        self.box = box

    def prox(self, q, weight):
        if not isinstance(weight, ScaledIdentity):
            raise ConfigError("the box-support block needs a scaled-identity weight")
        w = weight.scale
        return (q + self.box.project(-q)) / w

    def value(self, u) -> float:
        return self.box.support(-u)

    def zero(self):
        return np.zeros((self.n, self.n))


class NonnegBlock(ConvexBlock):
    """Indicator of the nonnegative orthant; prox is a clamp."""

    def __init__(self, dim):
        self.dim = int(dim)

    def prox(self, q, weight):
        if not isinstance(weight, ScaledIdentity):
            raise ConfigError("the orthant block needs a scaled-identity weight")
        return np.maximum(q / weight.scale, 0.0)

    def value(self, u) -> float:
        return 0.0 if np.min(u, initial=0.0) >= -1e-12 else float("inf")

    def zero(self):
        return np.zeros(self.dim)


def prox_support_negated(w: np.ndarray, sigma: float, box: Box) -> np.ndarray:
    """argmin_Z  support_N(-Z) + (sigma/2) ||Z - w||_F^2.

    Computed through the Moreau identity with the box projection:
    the minimizer is ``w + P_N(-sigma w) / sigma``.
    """
    if sigma <= 0:
        raise InputError("sigma must be positive")
    w = np.asarray(w, dtype=float)
    return w + box.project(-sigma * w) / sigma


def solve_block_yE(rhs: np.ndarray, gram_factor) -> np.ndarray:
    """Exact solve of a linear block subproblem against a factored Gram matrix.

    ``gram_factor`` is the (cho_factor) factorization of A_E A_E* (plus any
    extra proximal term).  A singular Gram never reaches here; building the
    dual adds an eps-identity regularizer when the factorization fails.
    """
    return scipy.linalg.cho_solve(gram_factor, rhs)


# ---------------------------------------------------------------------------
# dual assembly


class _MatrixRowMap(LinearMap):
    """Picks the matrix component of the stacked multiplier space."""

    def __init__(self, n, m_i):
        self.n, self.m_i = n, m_i
        self.codomain_template = np.zeros((n, n))
        self.domain_template = (
            BlockVec([np.zeros((n, n)), np.zeros(m_i)]) if m_i else np.zeros((n, n))
        )

    def apply(self, x):
        return x.parts[0] if self.m_i else x

    def adjoint_apply(self, s):
        if self.m_i:
            return BlockVec([s, np.zeros(self.m_i)])
        return np.asarray(s, dtype=float)

    def gram(self):
        return ScaledIdentity(1.0)


class _EqualityMap(LinearMap):
    """x -> A_E(X-part); adjoint embeds A_E* y into the matrix row."""

    def __init__(self, stack: ConstraintStack, m_i, gram_weight):
        self.stack = stack
        self.m_i = m_i
        self.codomain_template = np.zeros(len(stack))
        n = stack.n
        self.domain_template = (
            BlockVec([np.zeros((n, n)), np.zeros(m_i)]) if m_i else np.zeros((n, n))
        )
        self._gram = gram_weight

    def apply(self, x):
        return self.stack.apply(x.parts[0] if self.m_i else x)

    def adjoint_apply(self, y):
        mat = self.stack.adjoint(y)
        if self.m_i:
            return BlockVec([mat, np.zeros(self.m_i)])
        return mat

    def gram(self):
        return self._gram


class _InequalityMap(LinearMap):
    """x -> A_I(X-part) - alpha * u-part; adjoint fills both rows."""

    def __init__(self, stack: ConstraintStack, alpha):
        self.stack = stack
        self.alpha = float(alpha)
        m_i = len(stack)
        self.codomain_template = np.zeros(m_i)
        self.domain_template = BlockVec([np.zeros((stack.n, stack.n)), np.zeros(m_i)])
        self._gram = DenseWeight(stack.gram_dense() + self.alpha**2 * np.eye(m_i))

    def apply(self, x):
        return self.stack.apply(x.parts[0]) - self.alpha * x.parts[1]

    def adjoint_apply(self, y):
        y = np.asarray(y, dtype=float)
        return BlockVec([self.stack.adjoint(y), -self.alpha * y])

    def gram(self):
        return self._gram


class _SlackMap(LinearMap):
    """v -> alpha * u-part of the multiplier space."""

    def __init__(self, n, m_i, alpha):
        self.alpha = float(alpha)
        self.codomain_template = np.zeros(m_i)
        self.domain_template = BlockVec([np.zeros((n, n)), np.zeros(m_i)])

    def apply(self, x):
        return self.alpha * x.parts[1]

    def adjoint_apply(self, v):
        mat_shape = self.domain_template.parts[0].shape
        return BlockVec([np.zeros(mat_shape), self.alpha * np.asarray(v, dtype=float)])

    def gram(self):
        return ScaledIdentity(self.alpha**2)


def _regularized_gram(stack: ConstraintStack) -> DenseWeight:
    """Gram of an equality stack, with an eps-identity shift only if singular."""
    gram = stack.gram_dense()
    w = DenseWeight(gram)
    try:
        w.factor()
        return w
    except ConfigError:
        eps = 1e-8 * (1.0 + float(np.abs(gram).max(initial=0.0)))
        return DenseWeight(gram + eps * np.eye(gram.shape[0]))


def build_dual_multiblock(problem: DnnSdpProblem, alpha: float | None = None) -> MultiBlockProblem:
    """Assemble the dual as a multi-block problem.

    First side: (cone slack S, equality multipliers y_E, inequality
    multipliers y_I); second side: (box-support variable Z, orthant slack v).
    Constraint rows: ``Z + S + A_E* y_E + A_I* y_I = C`` stacked with
    ``alpha (v - y_I) = 0``.  With no inequalities the slack blocks and the
    second row are omitted and ``alpha`` is ignored.
    """
    n, m_i = problem.n, problem.m_I
    if m_i:
        if alpha is None:
            alpha = choose_alpha(problem)
        if alpha <= 0:
            raise ConfigError("alpha must be positive")
    gram_e = _regularized_gram(problem.A_E)

    if m_i == 0:
        y_side = MultiBlockSide(
            blocks=[PsdConeBlock(n), LinearBlock(-problem.b_E)],
            maps=[_MatrixRowMap(n, 0), _EqualityMap(problem.A_E, 0, gram_e)],
        )
        z_side = MultiBlockSide(
            blocks=[NegBoxSupportBlock(n, problem.box)],
            maps=[_MatrixRowMap(n, 0)],
        )
        return MultiBlockProblem(y_side, z_side, problem.C.copy())

    y_side = MultiBlockSide(
        blocks=[PsdConeBlock(n), LinearBlock(-problem.b_E), LinearBlock(-problem.b_I)],
        maps=[
            _MatrixRowMap(n, m_i),
            _EqualityMap(problem.A_E, m_i, gram_e),
            _InequalityMap(problem.A_I, alpha),
        ],
    )
    z_side = MultiBlockSide(
        blocks=[NegBoxSupportBlock(n, problem.box), NonnegBlock(m_i)],
        maps=[_MatrixRowMap(n, m_i), _SlackMap(n, m_i, alpha)],
    )
    c = BlockVec([problem.C.copy(), np.zeros(m_i)])
    return MultiBlockProblem(y_side, z_side, c)


def choose_alpha(problem: DnnSdpProblem) -> float:
    """Scaling of the slack constraint: sqrt of the inequality map norm, halved."""
    if problem.m_I == 0:
        raise UnsupportedOperationError("no inequality constraints, alpha is undefined")
    nrm = spectral_norm_estimate(problem.A_I.as_linear_map())
    return float(np.sqrt(nrm) / 2.0)


# ---------------------------------------------------------------------------
# residuals and objectives


def kkt_residuals(problem: DnnSdpProblem, it: DualIterate) -> ResidualSet:
    """The six normalized residuals certifying a candidate solution."""
    C, X, Z, S = problem.C, it.X, it.Z, it.S
    norm_c = vnorm(C)
    norm_x = vnorm(X)
    norm_z = vnorm(Z)
    norm_s = vnorm(S)

    dual_vec = problem.A_E.adjoint(it.y_E) + S + Z - C
    if problem.m_I:
        dual_vec = dual_vec + problem.A_I.adjoint(it.y_I)
    dual = vnorm(dual_vec) / (1.0 + norm_c)

    box = vnorm(X - problem.box.project(X)) / (1.0 + norm_x)
    box_complement = vnorm(X - problem.box.project(X - Z)) / (1.0 + norm_x + norm_z)
    primal = vnorm(problem.A_E.apply(X) - problem.b_E) / (1.0 + vnorm(problem.b_E))
    psd = max(
        vnorm(X - project_psd(X)) / (1.0 + norm_x),
        abs(vdot(X, S)) / (1.0 + norm_x + norm_s),
    )

    if problem.m_I:
        slack = problem.A_I.apply(X) - problem.b_I
        y_i = it.y_I
        inequality = max(
            vnorm(np.minimum(0.0, y_i)) / (1.0 + vnorm(y_i)),
            vnorm(np.minimum(0.0, slack)) / (1.0 + vnorm(problem.b_I)),
            abs(float(slack @ y_i)) / (1.0 + vnorm(slack) + vnorm(y_i)),
        )
    else:
        inequality = 0.0
    return ResidualSet(dual, box, box_complement, primal, psd, inequality)


def primal_objective(problem: DnnSdpProblem, it: DualIterate) -> float:
    return vdot(problem.C, it.X)


def dual_objective(problem: DnnSdpProblem, it: DualIterate) -> float:
    """Objective of the dual in max form: <b_E, y_E> + <b_I, y_I> - support."""
    val = float(problem.b_E @ it.y_E) - problem.box.support(-it.Z)
    if problem.m_I:
        val += float(problem.b_I @ it.y_I)
    return val


def recover_iterate(problem: DnnSdpProblem, state: IterateState) -> DualIterate:
    """Unpack a solver state into named dual variables.

    The stacked multiplier converges to the negated primal pair, so the
    recovery flips its sign: X = -x_matrix, u = -x_slack.
    """
    if problem.m_I:
        s_mat, y_e, y_i = state.y.parts
        z_mat, v = state.z.parts
        x_mat, x_u = state.x.parts
        return DualIterate(
            Z=z_mat, S=s_mat, y_E=y_e, y_I=y_i, v=v, X=symmetrize(-x_mat), u=-x_u
        )
    s_mat, y_e = state.y.parts
    z_mat = state.z.parts[0]
    return DualIterate(
        Z=z_mat, S=s_mat, y_E=y_e, y_I=None, v=None, X=symmetrize(-state.x), u=None
    )


def solve_dnnsdp(
    problem: DnnSdpProblem,
    method: str = "gadmm",
    config: SolverConfig | None = None,
    alpha: float | None = None,
    callbacks=(),
    record_history: bool = False,
) -> tuple[DualIterate, ResidualSet, ConvergenceReport]:
    """Solve the primal through its dual with Gauss-Seidel sweeps.

    Terminates when the worst of the six residuals (and the dual equality
    residual) drops below ``config.tol``, or at ``config.max_iter``.
    ``alpha`` overrides the automatic slack scaling.
    """
    if config is None:
        config = SolverConfig(rho=1.8 if method == "gadmm" else 1.0)
    if method == "scheme12":
        raise ConfigError(
            "the relaxed-multiplier scheme needs exactly solvable coupled "
            "subproblems, which this dual does not provide; use gadmm or spadmm"
        )
    if method not in ("gadmm", "spadmm"):
        raise ConfigError(f"unknown method {method!r}")
    mb = build_dual_multiblock(problem, alpha=alpha)

    def residual_fn(_mb, state):
        return kkt_residuals(problem, recover_iterate(problem, state)).worst

    state, report = run_multiblock(
        mb,
        config,
        method=method,
        callbacks=callbacks,
        residual_fn=residual_fn,
        record_history=record_history,
    )
    it = recover_iterate(problem, state)
    res = kkt_residuals(problem, it)
    return it, res, report
