import numpy as np
import pytest
from numpy.testing import assert_allclose

from gadmm.blockvec import BlockVec, ravel_vec, unravel_like, vdot
from gadmm.errors import ConfigError, InputError
from gadmm.linalg import BlockDiagWeight, DenseWeight, ScaledIdentity, weight_to_dense
from gadmm.operators import (
    BlockMap,
    BlockQuadratic,
    MatrixMap,
    ZeroMap,
    build_jacobi_pair,
    build_sgs_operator,
    check_adjoint,
    choose_default_jacobi_blocks,
    map_to_dense,
)


def test_matrix_map_adjoint(rng):
    a = MatrixMap(rng.normal(size=(4, 6)))
    check_adjoint(a, rng)


def test_block_map_adjoint_and_sum(rng):
    nx = 5
    blocks = [MatrixMap(rng.normal(size=(d, nx))) for d in (2, 3, 4)]
    bm = BlockMap(blocks)
    check_adjoint(bm, rng)
    v = BlockVec([rng.normal(size=d) for d in (2, 3, 4)])
    expected = sum(b.adjoint_apply(p) for b, p in zip(blocks, v.parts))
    assert_allclose(bm.adjoint_apply(v), expected, atol=1e-12)


def test_map_to_dense(rng):
    mat = rng.normal(size=(3, 5))
    assert_allclose(map_to_dense(MatrixMap(mat)), mat)


# ---------------------------------------------------------------------------
# Gauss-Seidel composition


def test_sgs_single_block_is_zero():
    op = build_sgs_operator([np.eye(3)], {})
    v = BlockVec([np.ones(3)])
    assert np.all(op.apply(v).parts[0] == 0.0)
    assert op.is_zero


def test_sgs_two_block_hand_expansion():
    # M_{01} = I, D = I: M D^{-1} M^* acts as [[I, 0], [0, 0]]
    op = build_sgs_operator([np.eye(2), np.eye(2)], {(0, 1): np.eye(2)})
    v = BlockVec([np.array([1.0, 2.0]), np.array([3.0, 4.0])])
    out = op.apply(v)
    assert_allclose(out.parts[0], [1.0, 2.0])
    assert_allclose(out.parts[1], [0.0, 0.0])


def test_sgs_psd_on_samples(rng):
    dims = [3, 2, 4]
    diags = []
    for d in dims:
        m = rng.normal(size=(d, d))
        diags.append(m @ m.T + np.eye(d))
    upper = {
        (i, j): rng.normal(size=(dims[i], dims[j]))
        for i in range(3)
        for j in range(i + 1, 3)
    }
    op = build_sgs_operator(diags, upper)
    for _ in range(100):
        v = BlockVec([rng.normal(size=d) for d in dims])
        assert op.quad(v) >= -1e-10 * vdot(v, v)


def test_sgs_matches_dense_assembly(rng):
    # brute-force oracle: assemble M D^{-1} M^T densely and compare actions
    dims = [4, 3, 5, 2]
    offs = np.concatenate([[0], np.cumsum(dims)])
    diags, dmats = [], []
    for d in dims:
        m = rng.normal(size=(d, d))
        dm = m @ m.T + np.eye(d)
        diags.append(dm)
        dmats.append(dm)
    upper = {}
    mdense = np.zeros((offs[-1], offs[-1]))
    ddense = np.zeros_like(mdense)
    for i in range(4):
        ddense[offs[i] : offs[i + 1], offs[i] : offs[i + 1]] = dmats[i]
        for j in range(i + 1, 4):
            blk = rng.normal(size=(dims[i], dims[j]))
            upper[(i, j)] = blk
            mdense[offs[i] : offs[i + 1], offs[j] : offs[j + 1]] = blk
    oracle = mdense @ np.linalg.solve(ddense, mdense.T)
    op = build_sgs_operator(diags, upper)
    template = BlockVec([np.zeros(d) for d in dims])
    assert_allclose(weight_to_dense(op, template), oracle, atol=1e-10)


def test_sgs_rejects_indefinite_diagonal():
    with pytest.raises(ConfigError, match="block 1"):
        build_sgs_operator([np.eye(2), -np.eye(2)], {(0, 1): np.eye(2)})


# ---------------------------------------------------------------------------
# Jacobi pair


def _block_map(rng, dims, nx):
    return BlockMap([MatrixMap(rng.normal(size=(d, nx))) for d in dims])


def test_jacobi_pair_forced_cancellation(rng):
    # p = 1, tau = 0, E = A A*: S action collapses to zero
    a = rng.normal(size=(3, 5))
    bm = BlockMap([MatrixMap(a)])
    pair = build_jacobi_pair(
        [DenseWeight(a @ a.T)], [DenseWeight(a @ a.T)], bm, bm, 0.0, 0.0, sigma=1.3
    )
    v = BlockVec([rng.normal(size=3)])
    assert np.abs(ravel_vec(pair.S.apply(v))).max() <= 1e-12


def test_jacobi_pair_psd_sampled(rng):
    dims = (2, 4)
    a = _block_map(rng, dims, 6)
    b = _block_map(rng, (3,), 6)
    tau1 = 1.0
    e_ops = [DenseWeight(tau1 * map_to_dense(m) @ map_to_dense(m).T) for m in a.blocks]
    h = choose_default_jacobi_blocks(b, 0.0)
    pair = build_jacobi_pair(e_ops, h, a, b, tau1, 0.0, sigma=0.8)
    worst = 0.0
    for _ in range(100):
        v = BlockVec([rng.normal(size=d) for d in dims])
        worst = min(worst, pair.S.quad(v) / vdot(v, v))
    assert worst >= -1e-8


def test_jacobi_pair_linear_in_sigma(rng):
    dims = (2, 3)
    a = _block_map(rng, dims, 5)
    b = _block_map(rng, (2,), 5)
    e = choose_default_jacobi_blocks(a, 1.0)
    h = choose_default_jacobi_blocks(b, 0.0)
    p1 = build_jacobi_pair(e, h, a, b, 1.0, 0.0, sigma=1.0)
    p2 = build_jacobi_pair(e, h, a, b, 1.0, 0.0, sigma=2.0)
    v = BlockVec([rng.normal(size=d) for d in dims])
    assert_allclose(ravel_vec(p2.S.apply(v)), 2.0 * ravel_vec(p1.S.apply(v)), atol=1e-12)


def test_jacobi_pair_validates_bounds_and_dominance(rng):
    a = _block_map(rng, (2, 3, 2), 5)
    b = _block_map(rng, (2,), 5)
    e = choose_default_jacobi_blocks(a, 2.0)
    h = choose_default_jacobi_blocks(b, 0.0)
    with pytest.raises(ConfigError, match="tau1"):
        build_jacobi_pair(e, h, a, b, 1.0, 0.0, sigma=1.0)
    # dominance violated: tiny E against a nonzero map
    small = BlockDiagWeight([ScaledIdentity(1e-12)] * 3)
    with pytest.raises(ConfigError, match="dominate"):
        build_jacobi_pair(small, h, a, b, 2.0, 0.0, sigma=1.0)


def test_choose_default_blocks(rng):
    ident = BlockMap([MatrixMap(np.eye(4))])
    e = choose_default_jacobi_blocks(ident, 1.0)
    assert e.ops[0].scale == pytest.approx(1.0, abs=1e-6)

    zero = BlockMap([ZeroMap(np.zeros(3), np.zeros(2))])
    e0 = choose_default_jacobi_blocks(zero, 1.0)
    assert e0.ops[0].scale == pytest.approx(1e-8)

    a = BlockMap([MatrixMap(rng.normal(size=(3, 6))), MatrixMap(rng.normal(size=(2, 6)))])
    tau1 = 1.0
    e = choose_default_jacobi_blocks(a, tau1)
    for op, blk in zip(e.ops, a.blocks):
        mat = map_to_dense(blk)
        gap = op.scale * np.eye(mat.shape[0]) - tau1 * mat @ mat.T
        for _ in range(50):
            v = rng.normal(size=mat.shape[0])
            assert v @ gap @ v >= -1e-6 * (v @ v)


# ---------------------------------------------------------------------------
# block quadratic


def test_block_quadratic_self_adjoint_psd(rng):
    dims = [3, 2]
    big = rng.normal(size=(5, 5))
    big = big @ big.T
    grid = [[big[:3, :3], big[:3, 3:]], [None, big[3:, 3:]]]
    q = BlockQuadratic(grid)
    for _ in range(20):
        u = BlockVec([rng.normal(size=d) for d in dims])
        v = BlockVec([rng.normal(size=d) for d in dims])
        lhs = vdot(u, q.apply_hessian(v))
        rhs = vdot(q.apply_hessian(u), v)
        assert abs(lhs - rhs) <= 1e-10 * max(1.0, abs(lhs))
        assert q.apply_hessian(v) is not None
        assert vdot(v, q.apply_hessian(v)) >= -1e-10


def test_block_quadratic_value_matches_dense(rng):
    big = rng.normal(size=(5, 5))
    big = big @ big.T
    grid = [[big[:3, :3], big[:3, 3:]], [None, big[3:, 3:]]]
    lin = BlockVec([rng.normal(size=3), rng.normal(size=2)])
    q = BlockQuadratic(grid, linear=lin, constant=0.7)
    y = BlockVec([rng.normal(size=3), rng.normal(size=2)])
    yf = ravel_vec(y)
    expected = 0.5 * yf @ big @ yf + ravel_vec(lin) @ yf + 0.7
    assert q.value(y) == pytest.approx(expected)
