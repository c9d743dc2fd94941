"""Instance generation and file ingestion/emission.

Formats handled here:

* the BIQ text format: header ``n m`` then ``m`` lines ``i j value``
  (1-indexed); diagonal triples are linear costs, off-diagonal triples fill
  both symmetric halves of Q so that ``0.5 <Q, xx^T> + <c, x>`` reproduces
  the file's quadratic form;
* a single-block subset of the SDPA sparse ``.dat-s`` grammar;
* a versioned JSON snapshot of assembled problems, for fixtures.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .dnnsdp import Box, ConstraintStack, DnnSdpProblem
from .errors import InputError, NumericalError, ParseError, UnsupportedFormatError
from .operators import MatrixMap
from .solver import QuadraticBlock, TwoBlockProblem

__all__ = [
    "BiqData",
    "biq_objective",
    "gen_random_biq",
    "biq_to_dnnsdp",
    "read_biq_file",
    "write_biq_file",
    "read_sdpa_sparse",
    "write_snapshot",
    "read_snapshot",
    "gen_random_dnnsdp",
    "gen_known_saddle_twoblock",
]

SNAPSHOT_FORMAT = "dnnsdp-snapshot"
SNAPSHOT_VERSION = 1


@dataclass
class BiqData:
    """Binary quadratic program data: min 0.5 x^T Q x + c^T x over binary x."""

    n_vars: int
    Q: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        self.Q = np.asarray(self.Q, dtype=float)
        self.c = np.asarray(self.c, dtype=float)
        if self.Q.shape != (self.n_vars, self.n_vars):
            raise InputError("Q shape does not match n_vars")
        if np.abs(self.Q - self.Q.T).max(initial=0.0) > 0:
            raise InputError("Q must be symmetric")
        if self.c.shape != (self.n_vars,):
            raise InputError("c shape does not match n_vars")


def biq_objective(data: BiqData, x: np.ndarray) -> float:
    x = np.asarray(x, dtype=float)
    return 0.5 * float(x @ (data.Q @ x)) + float(data.c @ x)


def gen_random_biq(n_vars: int, seed: int, density: float = 1.0, scale: float = 5.0) -> BiqData:
    """Random symmetric Q (off-diagonal) and linear cost, deterministic in seed."""
    rng = np.random.default_rng(seed)
    q = np.zeros((n_vars, n_vars))
    for i in range(n_vars):
        for j in range(i + 1, n_vars):
            if rng.random() < density:
                v = rng.uniform(-scale, scale)
                q[i, j] = q[j, i] = v
    c = rng.uniform(-scale, scale, size=n_vars)
    return BiqData(n_vars, q, c)


def biq_to_dnnsdp(data: BiqData, with_inequalities: bool = True) -> DnnSdpProblem:
    """Lift a binary quadratic program to its doubly-non-negative relaxation.

    The matrix variable is the (n_vars+1) x (n_vars+1) lift [[Xbar, x],
    [x^T, 1]].  Equalities: diag(Xbar) = x (one row per variable) plus the
    corner normalization, so m_E = n_vars + 1.  With ``with_inequalities``
    the three cut families are added for every variable pair i < j.
    """
    if data.n_vars < 2:
        raise InputError("need at least two binary variables")
    nv = data.n_vars
    n = nv + 1
    last = nv  # index of the homogenization row/column

    c_mat = np.zeros((n, n))
    c_mat[:nv, :nv] = 0.5 * data.Q
    c_mat[:nv, last] = 0.5 * data.c
    c_mat[last, :nv] = 0.5 * data.c

    eq_rows = []
    for i in range(nv):
        eq_rows.append([(i, i, 1.0), (i, last, -0.5)])
    eq_rows.append([(last, last, 1.0)])
    a_e = ConstraintStack.from_triplets(n, eq_rows)
    b_e = np.zeros(nv + 1)
    b_e[-1] = 1.0

    a_i = None
    b_i = None
    if with_inequalities:
        ineq_rows = []
        vals = []
        for i in range(nv):
            for j in range(i + 1, nv):
                ineq_rows.append([(i, last, 0.5), (i, j, -0.5)])  # x_i - Xbar_ij >= 0
                vals.append(0.0)
                ineq_rows.append([(j, last, 0.5), (i, j, -0.5)])  # x_j - Xbar_ij >= 0
                vals.append(0.0)
                ineq_rows.append(
                    [(i, j, 0.5), (i, last, -0.5), (j, last, -0.5)]
                )  # Xbar_ij - x_i - x_j >= -1
                vals.append(-1.0)
        a_i = ConstraintStack.from_triplets(n, ineq_rows)
        b_i = np.asarray(vals)

    return DnnSdpProblem(C=c_mat, A_E=a_e, b_E=b_e, A_I=a_i, b_I=b_i, box=Box(lower=0.0))


# ---------------------------------------------------------------------------
# BIQ text format


def read_biq_file(path) -> BiqData:
    """Parse the BIQ text format; malformed input raises with a line number."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    idx = 0
    while idx < len(lines) and not lines[idx].strip():
        idx += 1
    if idx >= len(lines):
        raise ParseError("empty file")
    header = lines[idx].split()
    if len(header) != 2:
        raise ParseError("header must be 'n m'", line=idx + 1)
    try:
        n_vars, m = int(header[0]), int(header[1])
    except ValueError:
        raise ParseError("header fields must be integers", line=idx + 1) from None
    if n_vars < 1 or m < 0:
        raise ParseError("header values out of range", line=idx + 1)
    q = np.zeros((n_vars, n_vars))
    c = np.zeros(n_vars)
    seen = 0
    for lineno in range(idx + 1, len(lines)):
        raw = lines[lineno].strip()
        if not raw:
            continue
        fields = raw.split()
        if len(fields) != 3:
            raise ParseError("expected 'i j value'", line=lineno + 1)
        try:
            i, j = int(fields[0]), int(fields[1])
            val = float(fields[2])
        except ValueError:
            raise ParseError("malformed triple", line=lineno + 1) from None
        if not (1 <= i <= n_vars and 1 <= j <= n_vars):
            raise ParseError(f"index out of range (n = {n_vars})", line=lineno + 1)
        if not np.isfinite(val):
            raise ParseError("non-finite value", line=lineno + 1)
        if i == j:
            c[i - 1] += val
        else:
            q[i - 1, j - 1] += val
            q[j - 1, i - 1] += val
        seen += 1
    if seen != m:
        raise ParseError(f"header announced {m} entries, found {seen}")
    return BiqData(n_vars, q, c)


def write_biq_file(data: BiqData, path):
    entries = []
    for i in range(data.n_vars):
        if data.c[i] != 0.0:
            entries.append((i + 1, i + 1, data.c[i]))
        for j in range(i + 1, data.n_vars):
            if data.Q[i, j] != 0.0:
                entries.append((i + 1, j + 1, data.Q[i, j]))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{data.n_vars} {len(entries)}\n")
        for i, j, v in entries:
            fh.write(f"{i} {j} {float(v)!r}\n")


# ---------------------------------------------------------------------------
# SDPA sparse subset


def read_sdpa_sparse(path, nonneg_box: bool = True) -> DnnSdpProblem:
    """Read a single-block SDPA sparse file as an equality-constrained problem.

    The file's dual data (max <F0, X> s.t. <F_i, X> = c_i, X PSD) maps to
    min <C, X> with C = -F0.  Multi-block files (including LP/diagonal
    blocks) are rejected.  The nonnegativity box is attached by the caller's
    flag, not by anything in the file.
    """
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()

    data_lines = []  # (lineno, text)
    for lineno, raw in enumerate(lines, start=1):
        s = raw.strip()
        if not s or s.startswith('"') or s.startswith("*"):
            continue
        data_lines.append((lineno, s))
    if len(data_lines) < 4:
        raise ParseError("file too short for the SDPA sparse grammar")

    def ints(text, lineno, count=None):
        toks = text.replace(",", " ").replace("{", " ").replace("}", " ")
        toks = toks.replace("(", " ").replace(")", " ").split()
        try:
            vals = [int(float(t)) for t in toks]
        except ValueError:
            raise ParseError("expected integers", line=lineno) from None
        if count is not None and len(vals) < count:
            raise ParseError(f"expected {count} integers", line=lineno)
        return vals

    lineno, text = data_lines[0]
    m = ints(text, lineno, 1)[0]
    if m < 1:
        raise ParseError("empty constraint list", line=lineno)
    lineno, text = data_lines[1]
    nblocks = ints(text, lineno, 1)[0]
    if nblocks != 1:
        raise UnsupportedFormatError(
            f"only single-block files are supported, got {nblocks} blocks"
        )
    lineno, text = data_lines[2]
    block_size = ints(text, lineno, 1)[0]
    if block_size < 1:
        raise UnsupportedFormatError("diagonal/LP blocks are not supported")
    n = block_size

    lineno, text = data_lines[3]
    toks = text.replace(",", " ").split()
    if len(toks) != m:
        raise ParseError(f"expected {m} right-hand-side values", line=lineno)
    try:
        b_e = np.array([float(t) for t in toks])
    except ValueError:
        raise ParseError("malformed right-hand side", line=lineno) from None

    f0 = np.zeros((n, n))
    mats = [np.zeros((n, n)) for _ in range(m)]
    for lineno, text in data_lines[4:]:
        fields = text.split()
        if len(fields) != 5:
            raise ParseError("expected 'matno block i j value'", line=lineno)
        try:
            k, blk, i, j = (int(float(f)) for f in fields[:4])
            val = float(fields[4])
        except ValueError:
            raise ParseError("malformed entry", line=lineno) from None
        if blk != 1:
            raise UnsupportedFormatError(f"entry for block {blk}; only block 1 exists")
        if not (0 <= k <= m):
            raise ParseError(f"matrix index {k} out of range", line=lineno)
        if not (1 <= i <= n and 1 <= j <= n):
            raise ParseError("entry index out of range", line=lineno)
        target = f0 if k == 0 else mats[k - 1]
        target[i - 1, j - 1] = val
        target[j - 1, i - 1] = val

    return DnnSdpProblem(
        C=-f0,
        A_E=ConstraintStack(mats, n=n),
        b_E=b_e,
        box=Box(lower=0.0) if nonneg_box else Box(lower=None, upper=None),
    )


# ---------------------------------------------------------------------------
# JSON snapshot


def _stack_to_json(stack: ConstraintStack | None):
    if stack is None:
        return None
    rows = []
    for k in range(len(stack)):
        g = stack.row_matrix(k)
        ii, jj = np.nonzero(np.triu(g != 0))
        rows.append(
            {"i": ii.tolist(), "j": jj.tolist(), "v": [float(g[a, b]) for a, b in zip(ii, jj)]}
        )
    return rows


def _stack_from_json(rows, n):
    if rows is None:
        return None
    trip_rows = [list(zip(r["i"], r["j"], r["v"])) for r in rows]
    return ConstraintStack.from_triplets(n, trip_rows)


def write_snapshot(problem: DnnSdpProblem, path):
    """Emit a problem as a versioned JSON snapshot (exact float round trip)."""
    box = problem.box
    payload = {
        "format": SNAPSHOT_FORMAT,
        "version": SNAPSHOT_VERSION,
        "n": problem.n,
        "C": problem.C.tolist(),
        "A_E": _stack_to_json(problem.A_E),
        "b_E": problem.b_E.tolist(),
        "A_I": _stack_to_json(problem.A_I),
        "b_I": None if problem.b_I is None else problem.b_I.tolist(),
        "box_lower": None if box.lower is None else float(np.asarray(box.lower).ravel()[0]),
        "box_upper": None if box.upper is None else float(np.asarray(box.upper).ravel()[0]),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)


def read_snapshot(path) -> DnnSdpProblem:
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("format") != SNAPSHOT_FORMAT:
        raise UnsupportedFormatError("not a problem snapshot")
    if payload.get("version") != SNAPSHOT_VERSION:
        raise UnsupportedFormatError(f"unsupported snapshot version {payload.get('version')}")
    n = payload["n"]
    return DnnSdpProblem(
        C=np.array(payload["C"], dtype=float),
        A_E=_stack_from_json(payload["A_E"], n),
        b_E=np.array(payload["b_E"], dtype=float),
        A_I=_stack_from_json(payload["A_I"], n),
        b_I=None if payload["b_I"] is None else np.array(payload["b_I"], dtype=float),
        box=Box(lower=payload["box_lower"], upper=payload["box_upper"]),
    )


# ---------------------------------------------------------------------------
# random generators


def gen_random_dnnsdp(n: int, m_e: int, seed: int):
    """Random equality-constrained instance with a built-in feasible witness.

    The witness X0 = D D^T / ||D D^T|| + 0.01 I with entrywise nonnegative D
    is PSD and nonnegative; b_E := A_E(X0) makes it feasible by construction.
    The cost is drawn as C = A_E^*(y0) + S0 + Z0 with S0 PSD and Z0
    entrywise nonnegative, which certifies a feasible dual point; a plain
    random symmetric C leaves the primal unbounded along recession
    directions of the cone with high probability.  Returns (problem, X0).
    """
    if m_e > n * (n + 1) // 2:
        raise InputError("too many equality constraints for the dimension")
    rng = np.random.default_rng(seed)
    mats = []
    for _ in range(m_e):
        g = np.zeros((n, n))
        nnz = max(1, rng.integers(1, max(2, n)))
        for _ in range(nnz):
            i, j = rng.integers(0, n, size=2)
            v = rng.normal()
            g[i, j] += v
            g[j, i] += v if i != j else 0.0
        mats.append(0.5 * (g + g.T))
    stack = ConstraintStack(mats, n=n)
    d = np.abs(rng.normal(size=(n, n)))
    w = d @ d.T
    x0 = w / np.linalg.norm(w) + 0.01 * np.eye(n)
    b_e = stack.apply(x0)
    y0 = rng.normal(size=m_e)
    s0 = rng.normal(size=(n, n))
    s0 = s0 @ s0.T / n
    z0 = np.abs(rng.normal(size=(n, n)))
    z0 = 0.5 * (z0 + z0.T)
    c = stack.adjoint(y0) + s0 + z0
    problem = DnnSdpProblem(C=c, A_E=stack, b_E=b_e, box=Box(lower=0.0))
    return problem, x0


def gen_known_saddle_twoblock(dims, seed: int, max_tries: int = 5):
    """Strongly convex quadratic two-block instance with its saddle point.

    ``dims`` is (nx, ny, nz).  The saddle is computed by a direct solve of
    the first-order system; instances whose system is near-singular are
    resampled.  Returns (problem, (xbar, ybar, zbar)).
    """
    nx, ny, nz = dims
    rng = np.random.default_rng(seed)
    for _ in range(max_tries):
        hf = rng.normal(size=(ny, ny))
        hf = hf @ hf.T + np.eye(ny)
        hg = rng.normal(size=(nz, nz))
        hg = hg @ hg.T + np.eye(nz)
        af = rng.normal(size=ny)
        ag = rng.normal(size=nz)
        a = rng.normal(size=(ny, nx))
        b = rng.normal(size=(nz, nx))
        c = rng.normal(size=nx)

        # first-order system: Hf y + af = A x, Hg z + ag = B x, A^T y + B^T z = c
        kkt = np.zeros((ny + nz + nx, ny + nz + nx))
        kkt[:ny, :ny] = hf
        kkt[:ny, ny + nz :] = -a
        kkt[ny : ny + nz, ny : ny + nz] = hg
        kkt[ny : ny + nz, ny + nz :] = -b
        kkt[ny + nz :, :ny] = a.T
        kkt[ny + nz :, ny : ny + nz] = b.T
        rhs = np.concatenate([-af, -ag, c])
        try:
            sol = np.linalg.solve(kkt, rhs)
        except np.linalg.LinAlgError:
            continue
        ybar, zbar, xbar = sol[:ny], sol[ny : ny + nz], sol[ny + nz :]
        res = max(
            np.abs(hf @ ybar + af - a @ xbar).max(),
            np.abs(hg @ zbar + ag - b @ xbar).max(),
            np.abs(a.T @ ybar + b.T @ zbar - c).max(),
        )
        if not np.isfinite(res) or res > 1e-10 * (1.0 + np.abs(sol).max()):
            continue
        problem = TwoBlockProblem(
            f=QuadraticBlock(hessian=hf, linear=af),
            g=QuadraticBlock(hessian=hg, linear=ag),
            A=MatrixMap(a),
            B=MatrixMap(b),
            c=c,
        )
        return problem, (xbar, ybar, zbar)
    raise NumericalError("could not draw a well-conditioned saddle instance")
