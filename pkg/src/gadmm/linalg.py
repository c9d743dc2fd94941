"""Dense symmetric linear algebra, cone/box projections, and weighted norms.

Conventions: symmetric matrices are plain ``(n, n)`` float ndarrays;
inner products are Frobenius/Euclidean.  Weight operators are self-adjoint
positive-semidefinite actions used both as proximal weights and as the
quadratic metric in weighted norms.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np
import scipy.linalg

from .blockvec import BlockVec, ravel_vec, unravel_like, vdot, vnorm, zeros_like
from .errors import ConfigError, InputError, NumericalError

__all__ = [
    "EigenDecomposition",
    "sym_eig",
    "symmetrize",
    "project_psd",
    "project_box",
    "box_support",
    "WeightOperator",
    "ZeroWeight",
    "ScaledIdentity",
    "DiagonalWeight",
    "DenseWeight",
    "SumWeight",
    "ScaledWeight",
    "GramWeight",
    "BlockDiagWeight",
    "wsum",
    "wscale",
    "weighted_norm_sq",
    "weight_to_dense",
    "spectral_norm_estimate",
]


class EigenDecomposition(NamedTuple):
    """Spectral factorization M = V diag(w) V^T with eigenvalues descending."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


def symmetrize(m: np.ndarray) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    return 0.5 * (m + m.T)


def _check_square_symmetric(m, what="matrix"):
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise InputError(f"{what} must be square, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise InputError(f"{what} has non-finite entries")
    scale = max(1.0, float(np.abs(m).max()))
    if np.abs(m - m.T).max() > 1e-8 * scale:
        raise InputError(f"{what} is not symmetric")
    return m


def sym_eig(m: np.ndarray) -> EigenDecomposition:
    """Full spectral decomposition of a symmetric matrix, eigenvalues descending.

    Backed by LAPACK's symmetric eigensolver (deterministic for a given
    input).  Raises :class:`InputError` for non-finite or asymmetric input
    and :class:`NumericalError` if the iteration fails.
    """
    m = _check_square_symmetric(m)
    try:
        w, v = np.linalg.eigh(symmetrize(m))
    except np.linalg.LinAlgError as exc:  # pragma: no cover - hard to trigger
        raise NumericalError(f"symmetric eigendecomposition failed: {exc}") from exc
    return EigenDecomposition(w[::-1].copy(), v[:, ::-1].copy())


def project_psd(m: np.ndarray) -> np.ndarray:
    """Nearest (Frobenius) positive-semidefinite matrix: clamp eigenvalues at 0."""
    w, v = sym_eig(m)
    pos = np.maximum(w, 0.0)
    return symmetrize((v * pos) @ v.T)


def project_box(m: np.ndarray, lower=None, upper=None) -> np.ndarray:
    """Entrywise clamp of ``m`` into [lower, upper].

    ``lower``/``upper`` may be scalars, arrays broadcastable to ``m``, or
    ``None`` for minus/plus infinity.  Raises :class:`InputError` when the
    bounds cross.
    """
    m = np.asarray(m, dtype=float)
    lo = -np.inf if lower is None else np.asarray(lower, dtype=float)
    hi = np.inf if upper is None else np.asarray(upper, dtype=float)
    if np.any(np.broadcast_to(lo, m.shape) > np.broadcast_to(hi, m.shape)):
        raise InputError("box bounds cross: lower > upper at some entry")
    return np.clip(m, lo, hi)


def box_support(y: np.ndarray, lower=None, upper=None) -> float:
    """Support function of the box {lower <= X <= upper} evaluated at y.

    Returns +inf when y pushes against an unbounded side.
    """
    y = np.asarray(y, dtype=float)
    lo = np.broadcast_to(-np.inf if lower is None else np.asarray(lower, float), y.shape)
    hi = np.broadcast_to(np.inf if upper is None else np.asarray(upper, float), y.shape)
    total = 0.0
    pos = y > 0
    neg = y < 0
    if np.any(pos & np.isinf(hi)) or np.any(neg & np.isinf(lo)):
        return float("inf")
    total += float(np.sum(hi[pos] * y[pos]))
    total += float(np.sum(lo[neg] * y[neg]))
    return total


# ---------------------------------------------------------------------------
# weight operators


class WeightOperator:
    """Self-adjoint PSD linear action.  Subclasses implement ``apply``."""

    def apply(self, v):
        raise NotImplementedError

    def quad(self, v) -> float:
        """Quadratic form <v, G v>."""
        return vdot(v, self.apply(v))

    def solve(self, rhs):
        raise ConfigError(f"{type(self).__name__} does not support solves")

    @property
    def is_zero(self) -> bool:
        return False


class ZeroWeight(WeightOperator):
    def apply(self, v):
        return zeros_like(v)

    def quad(self, v) -> float:
        return 0.0

    @property
    def is_zero(self) -> bool:
        return True


class ScaledIdentity(WeightOperator):
    def __init__(self, scale: float):
        if scale < 0:
            raise ConfigError("ScaledIdentity scale must be nonnegative")
        self.scale = float(scale)

    def apply(self, v):
        return self.scale * v

    def quad(self, v) -> float:
        return self.scale * vdot(v, v)

    def solve(self, rhs):
        if self.scale <= 0:
            raise ConfigError("cannot solve against a zero identity weight")
        return rhs / self.scale

    @property
    def is_zero(self) -> bool:
        return self.scale == 0.0


class DiagonalWeight(WeightOperator):
    def __init__(self, diag):
        self.diag = np.asarray(diag, dtype=float)
        if np.any(self.diag < 0):
            raise ConfigError("diagonal weight must be entrywise nonnegative")

    def apply(self, v):
        return self.diag * v

    def solve(self, rhs):
        if np.any(self.diag <= 0):
            raise ConfigError("diagonal weight is singular")
        return rhs / self.diag


class DenseWeight(WeightOperator):
    """Dense symmetric PSD weight with a cached Cholesky factor for solves."""

    def __init__(self, matrix):
        self.matrix = symmetrize(matrix)
        self._factor = None

    def apply(self, v):
        return self.matrix @ v

    def factor(self):
        if self._factor is None:
            try:
                self._factor = scipy.linalg.cho_factor(self.matrix)
            except scipy.linalg.LinAlgError as exc:
                raise ConfigError(f"weight matrix is not positive definite: {exc}") from exc
        return self._factor

    def solve(self, rhs):
        return scipy.linalg.cho_solve(self.factor(), rhs)


class SumWeight(WeightOperator):
    def __init__(self, ops):
        self.ops = [op for op in ops if not op.is_zero]

    def apply(self, v):
        out = zeros_like(v)
        for op in self.ops:
            out = out + op.apply(v)
        return out


class ScaledWeight(WeightOperator):
    def __init__(self, scale: float, op: WeightOperator):
        if scale < 0:
            raise ConfigError("weight scale must be nonnegative")
        self.scale = float(scale)
        self.op = op

    def apply(self, v):
        return self.scale * self.op.apply(v)

    @property
    def is_zero(self) -> bool:
        return self.scale == 0.0 or self.op.is_zero


class GramWeight(WeightOperator):
    """v -> A(A*(v)) for a linear map A: X -> V."""

    def __init__(self, linmap):
        self.linmap = linmap

    def apply(self, v):
        return self.linmap.apply(self.linmap.adjoint_apply(v))


class BlockDiagWeight(WeightOperator):
    """Independent weights acting on the parts of a BlockVec."""

    def __init__(self, ops):
        self.ops = list(ops)

    def apply(self, v: BlockVec) -> BlockVec:
        return BlockVec([op.apply(p) for op, p in zip(self.ops, v.parts)])

    def solve(self, rhs: BlockVec) -> BlockVec:
        return BlockVec([op.solve(p) for op, p in zip(self.ops, rhs.parts)])


def wscale(scale: float, op: WeightOperator | None) -> WeightOperator:
    """scale * op with structural simplifications."""
    if op is None or op.is_zero or scale == 0.0:
        return ZeroWeight()
    if isinstance(op, ScaledIdentity):
        return ScaledIdentity(scale * op.scale)
    if isinstance(op, DiagonalWeight):
        return DiagonalWeight(scale * op.diag)
    if isinstance(op, DenseWeight):
        return DenseWeight(scale * op.matrix)
    return ScaledWeight(scale, op)


def wsum(*ops) -> WeightOperator:
    """Sum of weights with structural simplifications (identity/dense folds)."""
    flat = []
    for op in ops:
        if op is None or op.is_zero:
            continue
        if isinstance(op, SumWeight):
            flat.extend(op.ops)
        else:
            flat.append(op)
    if not flat:
        return ZeroWeight()
    ident = sum(op.scale for op in flat if isinstance(op, ScaledIdentity))
    dense = [op for op in flat if isinstance(op, DenseWeight)]
    rest = [op for op in flat if not isinstance(op, (ScaledIdentity, DenseWeight))]
    if dense and not rest:
        total = sum(op.matrix for op in dense)
        if ident:
            total = total + ident * np.eye(total.shape[0])
        return DenseWeight(total)
    if not dense and not rest:
        return ScaledIdentity(ident)
    if ident:
        flat = [op for op in flat if not isinstance(op, ScaledIdentity)]
        flat.append(ScaledIdentity(ident))
    if len(flat) == 1:
        return flat[0]
    return SumWeight(flat)


def weighted_norm_sq(v, g: WeightOperator) -> float:
    """<v, G v> for a PSD weight G.  Raises on dimension mismatch."""
    try:
        return g.quad(v)
    except (ValueError, TypeError) as exc:
        raise InputError(f"weighted_norm_sq: dimension mismatch ({exc})") from exc


def weight_to_dense(op: WeightOperator, template) -> np.ndarray:
    """Materialize a weight operator as a dense matrix by probing basis vectors."""
    flat = ravel_vec(template)
    n = flat.size
    cols = np.empty((n, n))
    basis = np.zeros(n)
    for j in range(n):
        basis[j] = 1.0
        cols[:, j] = ravel_vec(op.apply(unravel_like(basis, template)))
        basis[j] = 0.0
    return cols


def spectral_norm_estimate(linmap, max_iter: int = 200, tol: float = 1e-8) -> float:
    """Power-method estimate of the spectral norm of a linear map.

    Iterates v <- A*(A v) on the domain until the Rayleigh quotient changes
    by less than ``tol`` (relative), with a fixed iteration cap.  Returns 0
    for the zero map.  Deterministic: the start vector comes from a fixed
    seed.
    """
    template = getattr(linmap, "domain_template", None)
    if template is None:
        raise InputError("linear map must expose a domain_template for the power method")
    rng = np.random.default_rng(0)
    flat = rng.standard_normal(ravel_vec(template).size)
    v = unravel_like(flat, template)
    nrm = vnorm(v)
    if nrm == 0:
        return 0.0
    v = v / nrm
    lam = 0.0
    for _ in range(max_iter):
        av = linmap.apply(v)
        w = linmap.adjoint_apply(av)
        lam_new = vdot(v, w)
        wn = vnorm(w)
        if wn == 0.0:
            return 0.0
        v = w / wn
        if abs(lam_new - lam) <= tol * max(1.0, abs(lam_new)):
            lam = lam_new
            break
        lam = lam_new
    return float(np.sqrt(max(lam, 0.0)))
