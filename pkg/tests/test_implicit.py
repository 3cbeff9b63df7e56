import numpy as np
import pytest

from chemostab import Field, Grid, laplacian_neumann
from chemostab.implicit import axis_laplacian_matrix, solve_shifted


def apply_operator(grid, a, b, x):
    lap = laplacian_neumann(Field(grid, x, check=False)).values
    return a * x - b * lap


class TestAxisMatrix:
    def test_matches_stencil_action(self):
        grid = Grid((1.0,), (7,))
        mat = axis_laplacian_matrix(grid, 0)
        rng = np.random.default_rng(0)
        x = rng.uniform(-1, 1, 7)
        assert np.allclose(mat @ x, laplacian_neumann(Field(grid, x)).values, rtol=1e-13)

    def test_rows_annihilate_constants(self):
        grid = Grid((2.0,), (9,))
        mat = axis_laplacian_matrix(grid, 0)
        assert np.allclose(mat @ np.ones(9), 0.0, atol=1e-12)


class TestSolveShifted:
    @pytest.mark.parametrize("a,b", [(1.0, 0.01), (1.7, 0.3), (1.0, 0.0)])
    def test_1d_residual(self, a, b):
        grid = Grid((1.0,), (23,))
        rng = np.random.default_rng(1)
        rhs = rng.uniform(-1, 1, 23)
        x = solve_shifted(grid, a, b, rhs)
        assert np.allclose(apply_operator(grid, a, b, x), rhs, rtol=1e-11, atol=1e-12)

    @pytest.mark.parametrize("a,b", [(1.0, 0.05), (2.3, 0.4)])
    def test_2d_residual(self, a, b):
        grid = Grid((1.0, 2.0), (9, 13))
        rng = np.random.default_rng(2)
        rhs = rng.uniform(-1, 1, grid.counts)
        x = solve_shifted(grid, a, b, rhs)
        assert np.allclose(apply_operator(grid, a, b, x), rhs, rtol=1e-10, atol=1e-11)

    def test_m_matrix_preserves_positivity(self):
        # the inverse of an M-matrix is entrywise nonnegative
        grid = Grid((1.0,), (15,))
        rng = np.random.default_rng(3)
        rhs = rng.uniform(0.1, 1.0, 15)
        x = solve_shifted(grid, 1.0, 0.5, rhs)
        assert np.all(x > 0.0)
        grid2 = Grid((1.0, 1.0), (7, 7))
        rhs2 = rng.uniform(0.1, 1.0, (7, 7))
        x2 = solve_shifted(grid2, 1.0, 0.5, rhs2)
        assert np.all(x2 > 0.0)

    def test_conserves_weighted_sum(self):
        # weights are a left null vector of the Laplacian part
        grid = Grid((1.0,), (21,))
        rng = np.random.default_rng(4)
        rhs = rng.uniform(-1, 1, 21)
        x = solve_shifted(grid, 1.0, 0.7, rhs)
        assert np.sum(grid.weights * x) == pytest.approx(
            np.sum(grid.weights * rhs), abs=1e-13)

    def test_invalid_shift_rejected(self):
        grid = Grid((1.0,), (5,))
        with pytest.raises(ValueError):
            solve_shifted(grid, 0.0, 0.1, np.ones(5))
        with pytest.raises(ValueError):
            solve_shifted(grid, 1.0, -0.1, np.ones(5))
