import numpy as np
import pytest

from gadmm.blockvec import BlockVec
from gadmm.linalg import DenseWeight
from gadmm.multiblock import MultiBlockProblem, MultiBlockSide
from gadmm.operators import BlockQuadratic, MatrixMap
from gadmm.solver import QuadraticBlock


def random_psd(rng, n, shift=0.0):
    m = rng.normal(size=(n, n))
    return m @ m.T + shift * np.eye(n)


def random_quadratic_side(rng, p, nx, with_quad=True, with_extra=True, max_dim=6,
                          strong_blocks=False):
    """One side of a multi-block instance: quadratic/linear blocks, random
    maps, optional quadratic coupling, optional extra proximal weights on
    blocks past the first.  ``strong_blocks`` gives every block its own
    curvature so the instance has a saddle point."""
    dims = [int(rng.integers(2, max_dim + 1)) for _ in range(p)]
    blocks, maps, extras = [], [], []
    for i, d in enumerate(dims):
        if i == 0:
            blocks.append(QuadraticBlock(hessian=random_psd(rng, d, 1.0), linear=rng.normal(size=d)))
            extras.append(None)
        elif strong_blocks:
            blocks.append(QuadraticBlock(hessian=random_psd(rng, d, 1.0), linear=rng.normal(size=d)))
            extras.append(None)
        else:
            blocks.append(QuadraticBlock(dim=d, linear=rng.normal(size=d)))
            if with_extra and rng.random() < 0.5:
                extras.append(DenseWeight(random_psd(rng, d, 0.1)))
            else:
                extras.append(None)
        maps.append(MatrixMap(rng.normal(size=(d, nx))))
    quad = None
    if with_quad:
        total = sum(dims)
        big = random_psd(rng, total)
        offs = np.concatenate([[0], np.cumsum(dims)])
        grid = [[None] * p for _ in range(p)]
        for i in range(p):
            for j in range(i, p):
                grid[i][j] = big[offs[i] : offs[i + 1], offs[j] : offs[j + 1]]
        quad = BlockQuadratic(grid, linear=BlockVec([rng.normal(size=d) for d in dims]))
    return MultiBlockSide(blocks=blocks, maps=maps, quad=quad, extra_prox=extras)


def random_multiblock(rng, p, q, nx, **kw):
    return MultiBlockProblem(
        random_quadratic_side(rng, p, nx, **kw),
        random_quadratic_side(rng, q, nx, **kw),
        rng.normal(size=nx),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)
