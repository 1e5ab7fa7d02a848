import math

import numpy as np
import pytest

from apollo_optim import theory
from apollo_optim.optimizers import AdamWState, OptimizerConfig, adamw_step, apollo_step, init_apollo_state
from apollo_optim.rng import Rng


def test_bound_helpers():
    assert theory.jl_failure_bound(128, 0.5) == pytest.approx(2 * math.exp(-4))
    assert theory.rank_for_bound(0.5, 10, 0.1) == 170
    assert theory.binomial_slack(0.05, 2000) == pytest.approx(3 * math.sqrt(0.05 * 0.95 / 2000))


def test_first_moment_identity_small():
    assert theory.check_first_moment_identity(32, 64, 8, 20, seed=7) <= 1e-10
    assert theory.check_first_moment_identity(48, 16, 4, 20, seed=1) <= 1e-10


def _fixed_p_cfg(beta1=0.9, beta2=0.999, rank=3):
    return OptimizerConfig("apollo", rank=rank, beta1=beta1, beta2=beta2, period=10**6, bias_correction=False, gamma=None)


def test_single_step_first_moment():
    cfg = _fixed_p_cfg()
    G = Rng(1).normal((5, 8))
    st_ = init_apollo_state(G.shape, cfg)
    apollo_step(np.zeros_like(G), G, st_, cfg)
    np.testing.assert_allclose(st_.M_R, 0.1 * st_.projector.P @ G, rtol=1e-14)


def test_memoryless_first_moment():
    cfg = _fixed_p_cfg(beta1=0.0)
    st_ = init_apollo_state((5, 8), cfg)
    rng = Rng(2)
    for _ in range(4):
        G = rng.normal((5, 8))
        apollo_step(np.zeros_like(G), G, st_, cfg)
    np.testing.assert_allclose(st_.M_R, st_.projector.P @ G, rtol=1e-14)


def test_second_moment_l1_identity_small():
    assert theory.check_second_moment_identity(32, 64, 8, 20, seed=3) <= 1e-10


def test_identity_projection_second_moment_equal():
    cfg = OptimizerConfig("apollo", rank=4, projector="identity", bias_correction=False, gamma=None)
    st_, full = init_apollo_state((4, 6), cfg), AdamWState.zeros((4, 6))
    rng = Rng(3)
    for _ in range(5):
        G = rng.normal((4, 6))
        apollo_step(np.zeros_like(G), G, st_, cfg)
        adamw_step(np.zeros_like(G), G, full, OptimizerConfig("adamw", bias_correction=False))
    np.testing.assert_allclose(st_.V_R, full.V, rtol=1e-15)


def test_second_moment_bound_small_is_deterministic():
    a = theory.check_second_moment_bound(64, 8, None, 10, 0.5, 100, seed=4)
    b = theory.check_second_moment_bound(64, 8, None, 10, 0.5, 100, seed=4)
    assert a.to_dict() == b.to_dict()
    assert a.params["r"] == 170 and a.passed
    assert a.warnings


def test_norm_check_deterministic_with_widened_slack():
    a = theory.check_norm_preservation(64, 32, 0.5, 100, seed=5)
    b = theory.check_norm_preservation(64, 32, 0.5, 100, seed=5)
    big = theory.check_norm_preservation(64, 32, 0.5, 1000, seed=5)
    assert a.to_dict() == b.to_dict()
    assert a.slack > big.slack and a.warnings and not big.warnings


def test_ratio_identity_projection_is_exactly_one():
    raw = theory.scale_ratio_samples(6, 10, 6, 8, trials=2, seed=0, burn_in=2, projector="identity")
    np.testing.assert_allclose(raw, 1.0, rtol=1e-12)


def test_ratio_scale_invariance():
    base = theory.scale_ratio_samples(8, 16, 2, 8, trials=2, seed=1, burn_in=2)
    scaled = theory.scale_ratio_samples(8, 16, 2, 8, trials=2, seed=1, burn_in=2, scale=37.5)
    np.testing.assert_allclose(scaled, base, rtol=1e-9)


def test_ratio_rank_one_positive_finite():
    raw = theory.scale_ratio_samples(8, 16, 1, 8, trials=3, seed=2, burn_in=2)
    assert np.all(np.isfinite(raw)) and np.all(raw > 0)


def test_ratio_report_small():
    rep = theory.check_ratio_bound(16, 64, 4, steps=10, trials=5, seed=3)
    assert rep.samples == 5 * 5 * 64
    assert 0.5 <= rep.median <= 2.0
    assert rep.to_dict()["pass"] == rep.passed


def test_identity_oracle_small():
    assert theory.check_identity_oracle(seeds=range(3)) <= 1e-9
