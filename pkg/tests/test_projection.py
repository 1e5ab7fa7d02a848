import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from apollo_optim.errors import ConfigError, DimensionError
from apollo_optim.projection import (
    COLS_SMALL,
    ROWS_SMALL,
    ProjectorKind,
    ProjectorState,
    apply_scaling,
    back_project,
    orientation_of,
    project,
    refresh_if_due,
)
from apollo_optim.rng import Rng
from apollo_optim.theory import check_norm_preservation


def fresh(kind="random", rank=2, period=200, shape=(4, 6), **kw):
    st_ = ProjectorState(ProjectorKind(kind), rank, period, shape, **kw)
    refresh_if_due(st_, 0, np.ones(shape))
    return st_


def test_refresh_at_step_zero_and_period():
    s = ProjectorState(ProjectorKind.RANDOM_GAUSSIAN, 2, 200, (4, 6))
    assert s.P is None
    refresh_if_due(s, 0, np.ones((4, 6)))
    assert s.refresh_count == 1 and s.P.shape == (2, 4)
    first = s.P.copy()

    refresh_if_due(s, 201, np.ones((4, 6)))
    assert s.refresh_count == 1 and np.array_equal(s.P, first)

    refresh_if_due(s, 200, np.ones((4, 6)))
    assert s.refresh_count == 2 and not np.array_equal(s.P, first)


def test_seed_depends_on_param_id():
    a = fresh(param_id=0)
    b = fresh(param_id=1)
    assert not np.array_equal(a.P, b.P)
    assert np.array_equal(a.P, fresh(param_id=0).P)


def test_top_singular_of_diagonal():
    G = np.zeros((3, 5))
    G[0, 0], G[1, 1], G[2, 2] = 3.0, 2.0, 1.0
    s = ProjectorState(ProjectorKind.TOP_SINGULAR, 2, 10, G.shape)
    refresh_if_due(s, 0, G)
    np.testing.assert_allclose(s.P, [[1, 0, 0], [0, 1, 0]], atol=1e-12)


def test_top_singular_sign_convention():
    G = Rng(4).normal((5, 8))
    s = ProjectorState(ProjectorKind.TOP_SINGULAR, 3, 10, G.shape)
    refresh_if_due(s, 0, G)
    for row in s.P:
        assert row[np.argmax(np.abs(row))] > 0
    np.testing.assert_allclose(s.P @ s.P.T, np.eye(3), atol=1e-12)


def test_identity_projection_is_exact():
    G = Rng(1).normal((4, 6))
    s = fresh("identity", rank=4)
    assert np.array_equal(project(s, G), G)


def test_identity_requires_full_rank():
    with pytest.raises(ConfigError):
        ProjectorState(ProjectorKind.IDENTITY, 2, 10, (4, 6))


@pytest.mark.parametrize("rank", [0, 5])
def test_rank_outside_small_dim_rejected(rank):
    with pytest.raises(ConfigError):
        ProjectorState(ProjectorKind.RANDOM_GAUSSIAN, rank, 10, (4, 6))


def test_project_is_deterministic():
    G = Rng(2).normal((4, 6))
    s = fresh()
    assert np.array_equal(project(s, G), project(s, G))


def test_tall_matrix_compresses_columns():
    G = Rng(3).normal((6, 4))
    s = fresh(shape=(6, 4))
    assert orientation_of(G.shape) == COLS_SMALL
    R = project(s, G)
    assert R.shape == (2, 6)
    np.testing.assert_allclose(R, s.P @ G.T, rtol=1e-15)


def test_orientation_symmetry():
    G = Rng(5).normal((4, 7))
    wide = fresh(shape=(4, 7), base_seed=9)
    tall = fresh(shape=(7, 4), base_seed=9)
    assert np.array_equal(wide.P, tall.P)
    assert np.array_equal(project(wide, G), project(tall, G.T))


def test_project_shape_mismatch():
    s = fresh()
    with pytest.raises(DimensionError):
        project(s, np.ones((6, 4)))


def test_back_project_shape():
    s = fresh(shape=(6, 4))
    N = np.ones((2, 6))
    assert back_project(s, N).shape == (6, 4)


def test_apply_scaling_examples():
    G = Rng(6).normal((3, 5))
    assert np.array_equal(apply_scaling(G, np.ones(5), ROWS_SMALL), G)
    np.testing.assert_array_equal(apply_scaling(np.eye(2), np.array([2.0, 3.0]), ROWS_SMALL), np.diag([2.0, 3.0]))
    assert np.array_equal(apply_scaling(G, 0.0, ROWS_SMALL), np.zeros_like(G))


def test_apply_scaling_tall_scales_rows():
    G = np.ones((3, 2))
    out = apply_scaling(G, np.array([1.0, 2.0, 3.0]), COLS_SMALL)
    np.testing.assert_array_equal(out, [[1, 1], [2, 2], [3, 3]])


def test_apply_scaling_length_mismatch():
    with pytest.raises(DimensionError):
        apply_scaling(np.ones((3, 5)), np.ones(3), ROWS_SMALL)


def test_norm_preservation_expected_value():
    rep = check_norm_preservation(32, 64, 0.5, 2000, seed=3)
    mean = rep.stats["mean_sq_norm_ratio"]
    se = rep.stats["mean_sq_norm_ratio_se"]
    assert abs(mean - 1.0) <= 3 * se


def test_norm_preservation_vacuous_and_zero_cases():
    rep = check_norm_preservation(8, 16, 0.01, 200, seed=0)
    assert rep.bound == pytest.approx(1.9998, abs=1e-4) and rep.passed
    zero = check_norm_preservation(16, 16, 0.5, 200, seed=0, x=np.zeros(16))
    assert zero.empirical_failure_rate == 0.0


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 8), st.integers(2, 8), st.integers(0, 2**32))
def test_projection_is_linear(m, n, seed):
    rng = Rng(seed)
    s = fresh(rank=1, shape=(m, n), base_seed=seed)
    A, B = rng.normal((m, n)), rng.normal((m, n))
    lhs = project(s, 2.0 * A - B)
    rhs = 2.0 * project(s, A) - project(s, B)
    assert np.allclose(lhs, rhs, rtol=1e-12, atol=1e-12 * (1 + np.abs(rhs).max()))


def test_random_projection_variance():
    s = fresh(rank=64, shape=(100, 200))
    assert abs(s.P.var() - 1 / 64) < 0.1 / 64
    assert math.isclose(float(s.P.mean()), 0.0, abs_tol=0.01)
