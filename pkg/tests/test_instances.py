import itertools

import numpy as np
import pytest
from numpy.testing import assert_allclose

from gadmm.dnnsdp import kkt_residuals, solve_dnnsdp
from gadmm.errors import InputError, ParseError, UnsupportedFormatError
from gadmm.instances import (
    BiqData,
    biq_objective,
    biq_to_dnnsdp,
    gen_known_saddle_twoblock,
    gen_random_biq,
    gen_random_dnnsdp,
    read_biq_file,
    read_sdpa_sparse,
    read_snapshot,
    write_biq_file,
    write_snapshot,
)
from gadmm.solver import SolverConfig, Status


def lift_binary(x):
    """The rank-one lift [[x x^T, x], [x^T, 1]] of a binary vector."""
    v = np.concatenate([x, [1.0]])
    return np.outer(v, v)


# ---------------------------------------------------------------------------
# BIQ lifting


def test_biq_to_dnnsdp_counts():
    data = gen_random_biq(4, seed=0)
    with_cuts = biq_to_dnnsdp(data, with_inequalities=True)
    assert with_cuts.n == 5
    assert with_cuts.m_E == 5
    assert with_cuts.m_I == 3 * 6
    without = biq_to_dnnsdp(data, with_inequalities=False)
    assert without.m_I == 0


def test_biq_to_dnnsdp_rejects_tiny():
    with pytest.raises(InputError):
        biq_to_dnnsdp(BiqData(1, np.zeros((1, 1)), np.zeros(1)))


def test_biq_hand_built_three_by_three():
    # n_vars = 2: equality matrices written out entry by entry
    data = BiqData(2, np.array([[0.0, 3.0], [3.0, 0.0]]), np.array([1.0, -2.0]))
    prob = biq_to_dnnsdp(data, with_inequalities=True)
    assert prob.m_E == 3

    g1 = np.array([[1.0, 0.0, -0.5], [0.0, 0.0, 0.0], [-0.5, 0.0, 0.0]])
    g2 = np.array([[0.0, 0.0, 0.0], [0.0, 1.0, -0.5], [0.0, -0.5, 0.0]])
    g3 = np.zeros((3, 3))
    g3[2, 2] = 1.0
    for k, oracle in enumerate([g1, g2, g3]):
        assert_allclose(prob.A_E.row_matrix(k), oracle, atol=1e-14)
    assert_allclose(prob.b_E, [0.0, 0.0, 1.0])

    m1 = np.array([[0.0, -0.5, 0.5], [-0.5, 0.0, 0.0], [0.5, 0.0, 0.0]])
    m2 = np.array([[0.0, -0.5, 0.0], [-0.5, 0.0, 0.5], [0.0, 0.5, 0.0]])
    m3 = np.array([[0.0, 0.5, -0.5], [0.5, 0.0, -0.5], [-0.5, -0.5, 0.0]])
    for k, oracle in enumerate([m1, m2, m3]):
        assert_allclose(prob.A_I.row_matrix(k), oracle, atol=1e-14)
    assert_allclose(prob.b_I, [0.0, 0.0, -1.0])

    # objective embedding: <C, lift(x)> reproduces the quadratic form
    for x in itertools.product([0.0, 1.0], repeat=2):
        x = np.array(x)
        assert np.tensordot(prob.C, lift_binary(x)) == pytest.approx(biq_objective(data, x))


def test_biq_binary_lift_feasible_exhaustive():
    data = gen_random_biq(6, seed=9)
    prob = biq_to_dnnsdp(data, with_inequalities=True)
    for bits in itertools.product([0.0, 1.0], repeat=6):
        x = np.array(bits)
        lift = lift_binary(x)
        assert np.abs(prob.A_E.apply(lift) - prob.b_E).max() <= 1e-12
        assert np.min(prob.A_I.apply(lift) - prob.b_I) >= -1e-12
        assert np.min(lift) >= 0.0
        assert np.tensordot(prob.C, lift) == pytest.approx(biq_objective(data, x), rel=1e-12)


# ---------------------------------------------------------------------------
# BIQ text format


def test_read_biq_offdiagonal(tmp_path):
    path = tmp_path / "a.biq"
    path.write_text("2 1\n1 2 3.0\n")
    data = read_biq_file(path)
    assert data.Q[0, 1] == data.Q[1, 0] == 3.0
    assert_allclose(data.c, 0.0)


def test_read_biq_diagonal_to_linear(tmp_path):
    path = tmp_path / "b.biq"
    path.write_text("2 1\n1 1 5.0\n")
    data = read_biq_file(path)
    assert data.c[0] == 5.0
    assert np.all(data.Q == 0.0)


def test_biq_round_trip(tmp_path):
    data = gen_random_biq(5, seed=33, density=0.7)
    path = tmp_path / "c.biq"
    write_biq_file(data, path)
    back = read_biq_file(path)
    assert np.array_equal(back.Q, data.Q)
    assert np.array_equal(back.c, data.c)


@pytest.mark.parametrize(
    "content, lineno",
    [
        ("2\n", 1),
        ("2 1\n1 2\n", 2),
        ("2 1\n1 3 1.0\n", 2),
        ("2 1\n1 2 xyz\n", 2),
        ("2 2\n1 2 1.0\n", None),  # count mismatch reported at file level
    ],
)
def test_read_biq_malformed(tmp_path, content, lineno):
    path = tmp_path / "bad.biq"
    path.write_text(content)
    with pytest.raises(ParseError) as err:
        read_biq_file(path)
    if lineno is not None:
        assert err.value.line == lineno


# ---------------------------------------------------------------------------
# SDPA sparse subset

SDPA_TOY = '''" toy trace problem
1
1
2
1.0
0 1 1 1 -1.0
0 1 2 2 -1.0
1 1 1 1 1.0
1 1 2 2 1.0
'''


def test_read_sdpa_toy(tmp_path):
    path = tmp_path / "toy.dat-s"
    path.write_text(SDPA_TOY)
    prob = read_sdpa_sparse(path)
    assert prob.n == 2 and prob.m_E == 1 and prob.m_I == 0
    assert_allclose(prob.C, np.eye(2))
    assert_allclose(prob.A_E.row_matrix(0), np.eye(2))
    assert_allclose(prob.b_E, [1.0])
    assert prob.box.lower == 0.0
    # comments (both styles) are skipped
    path2 = tmp_path / "toy2.dat-s"
    path2.write_text("* leading comment\n" + SDPA_TOY)
    prob2 = read_sdpa_sparse(path2)
    assert_allclose(prob2.C, prob.C)


def test_read_sdpa_box_flag(tmp_path):
    path = tmp_path / "toy.dat-s"
    path.write_text(SDPA_TOY)
    free = read_sdpa_sparse(path, nonneg_box=False)
    assert free.box.lower is None and free.box.upper is None


def test_read_sdpa_empty_constraints(tmp_path):
    path = tmp_path / "empty.dat-s"
    path.write_text("0\n1\n2\n\n")
    with pytest.raises(ParseError):
        read_sdpa_sparse(path)


def test_read_sdpa_multiblock_rejected(tmp_path):
    path = tmp_path / "multi.dat-s"
    path.write_text("1\n2\n2 3\n1.0\n0 1 1 1 1.0\n")
    with pytest.raises(UnsupportedFormatError):
        read_sdpa_sparse(path)


def test_read_sdpa_lp_block_rejected(tmp_path):
    path = tmp_path / "lp.dat-s"
    path.write_text("1\n1\n-3\n1.0\n1 1 1 1 1.0\n")
    with pytest.raises(UnsupportedFormatError):
        read_sdpa_sparse(path)


def test_sdpa_toy_solves_to_one(tmp_path):
    path = tmp_path / "toy.dat-s"
    path.write_text(SDPA_TOY)
    prob = read_sdpa_sparse(path)
    it, res, rep = solve_dnnsdp(prob, config=SolverConfig(rho=1.8, tol=1e-7, max_iter=50_000))
    assert rep.status == Status.CONVERGED
    assert np.tensordot(prob.C, it.X) == pytest.approx(1.0, abs=1e-5)


# ---------------------------------------------------------------------------
# snapshots


def test_snapshot_round_trip(tmp_path):
    data = gen_random_biq(4, seed=2)
    prob = biq_to_dnnsdp(data, with_inequalities=True)
    path = tmp_path / "inst.json"
    write_snapshot(prob, path)
    back = read_snapshot(path)
    assert_allclose(back.C, prob.C, atol=0)
    assert_allclose(np.asarray(back.A_E.mat.todense()), np.asarray(prob.A_E.mat.todense()))
    assert_allclose(np.asarray(back.A_I.mat.todense()), np.asarray(prob.A_I.mat.todense()))
    assert_allclose(back.b_E, prob.b_E)
    assert_allclose(back.b_I, prob.b_I)


def test_snapshot_rejects_other_json(tmp_path):
    path = tmp_path / "x.json"
    path.write_text('{"hello": 1}')
    with pytest.raises(UnsupportedFormatError):
        read_snapshot(path)


# ---------------------------------------------------------------------------
# generators


def test_gen_random_dnnsdp_witness():
    prob, x0 = gen_random_dnnsdp(6, 5, seed=4)
    assert np.abs(prob.A_E.apply(x0) - prob.b_E).max() <= 1e-12
    assert np.linalg.eigvalsh(x0).min() >= 0.0
    assert x0.min() >= 0.0


def test_gen_random_dnnsdp_deterministic():
    p1, x1 = gen_random_dnnsdp(5, 4, seed=7)
    p2, x2 = gen_random_dnnsdp(5, 4, seed=7)
    assert np.array_equal(p1.C, p2.C)
    assert np.array_equal(np.asarray(p1.A_E.mat.todense()), np.asarray(p2.A_E.mat.todense()))
    assert np.array_equal(x1, x2)


def test_gen_random_dnnsdp_solves():
    prob, _ = gen_random_dnnsdp(6, 5, seed=12)
    it, res, rep = solve_dnnsdp(prob, config=SolverConfig(rho=1.8, tol=1e-6, max_iter=100_000))
    assert rep.status == Status.CONVERGED
    assert res.worst < 1e-6
    assert kkt_residuals(prob, it).worst < 1e-6


def test_known_saddle_residual():
    problem, (xb, yb, zb) = gen_known_saddle_twoblock((4, 5, 3), seed=6)
    r1 = problem.f.grad(yb) - problem.A.apply(xb)
    r2 = problem.g.grad(zb) - problem.B.apply(xb)
    r3 = problem.primal_residual_vec(yb, zb)
    scale = 1.0 + max(np.abs(xb).max(), np.abs(yb).max(), np.abs(zb).max())
    assert max(np.abs(r1).max(), np.abs(r2).max(), np.abs(r3).max()) <= 1e-10 * scale


def test_known_saddle_scalar_matches_closed_form():
    # the scalar worked instance: f = .5 y^2, g = .5 z^2, A = B = 1, c = 2 has
    # the saddle (1, 1, 1); feed the same direct solve with that data
    problem, _ = gen_known_saddle_twoblock((1, 1, 1), seed=0)
    from gadmm.operators import MatrixMap
    from gadmm.solver import QuadraticBlock, TwoBlockProblem

    kkt = np.array([[1.0, 0.0, -1.0], [0.0, 1.0, -1.0], [1.0, 1.0, 0.0]])
    sol = np.linalg.solve(kkt, np.array([0.0, 0.0, 2.0]))
    assert_allclose(sol, [1.0, 1.0, 1.0], atol=1e-14)


def test_known_saddle_deterministic():
    p1, s1 = gen_known_saddle_twoblock((3, 4, 2), seed=5)
    p2, s2 = gen_known_saddle_twoblock((3, 4, 2), seed=5)
    assert np.array_equal(p1.c, p2.c)
    for a, b in zip(s1, s2):
        assert np.array_equal(a, b)
