"""Executable checks of the random-projection guarantees behind APOLLO.

Two kinds of check live here:

* exact algebraic identities (projected first moment equals the projection of
  the full first moment; the l1 norm of a projected second-moment channel is a
  discounted sum of projected gradient norms) -- these must hold to rounding;
* Monte-Carlo tail-bound checks, which compare an empirical failure rate with
  a theoretical bound plus three binomial standard errors.

Every report is deterministic given its seed and trial count; trial ``k`` draws
its projection from a stream derived from ``(seed, k)``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .linalg import col_norms, gaussian_matrix, l1_norm_cols
from .optimizers import (
    AdamWState,
    OptimizerConfig,
    apollo_step,
    init_apollo_state,
    adamw_step,
    structured_adamw_reference,
)
from .projection import oriented
from .rng import Rng, derive_seed

SLACK_SIGMAS = 3.0
MIN_TRIALS = 1000

_SALT_DATA = 0xD47A
_SALT_TRIAL = 0x7121A1


@dataclass
class BoundCheckReport:
    name: str
    params: dict
    trials: int
    epsilon: float
    bound: float
    empirical_failure_rate: float
    slack: float
    passed: bool
    stats: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["pass"] = d.pop("passed")
        return d


def binomial_slack(p: float, trials: int) -> float:
    p = min(max(p, 0.0), 1.0)
    return SLACK_SIGMAS * math.sqrt(p * (1.0 - p) / trials)


def jl_failure_bound(r: int, eps: float) -> float:
    return 2.0 * math.exp(-r * eps * eps / 8.0)


def rank_for_bound(eps: float, t: int, delta: float) -> int:
    """Smallest rank with ``r >= (8 / eps^2) log(2 t / delta)``."""
    return int(math.ceil(8.0 / eps**2 * math.log(2.0 * t / delta)))


def _trial_projection(seed: int, trial: int, r: int, m: int) -> np.ndarray:
    return gaussian_matrix(derive_seed(seed, _SALT_TRIAL, trial), r, m, 1.0 / r)


def _low_trial_warning(trials: int) -> list:
    if trials < MIN_TRIALS:
        return [f"only {trials} trials (< {MIN_TRIALS}); slack widened accordingly"]
    return []


def check_norm_preservation(r: int, m: int, eps: float, trials: int, seed: int, x=None) -> BoundCheckReport:
    """Fixed ``x``, fresh Gaussian ``P`` (variance ``1/r``) per trial; a trial
    fails when ``| |Px|^2 - |x|^2 | > eps |x|^2``."""
    if x is None:
        x = Rng(derive_seed(seed, _SALT_DATA)).normal(m)
    x = np.asarray(x, dtype=np.float64)
    x2 = float(x @ x)
    ratios = np.empty(trials)
    failures = 0
    for k in range(trials):
        px = _trial_projection(seed, k, r, m) @ x
        p2 = float(px @ px)
        if abs(p2 - x2) > eps * x2:
            failures += 1
        ratios[k] = p2 / x2 if x2 > 0 else 1.0
    rate = failures / trials
    bound = jl_failure_bound(r, eps)
    slack = binomial_slack(bound, trials)
    mean = float(ratios.mean())
    se = float(ratios.std(ddof=1) / math.sqrt(trials)) if trials > 1 else float("inf")
    return BoundCheckReport(
        name="norm-preservation",
        params={"r": r, "m": m, "seed": seed},
        trials=trials,
        epsilon=eps,
        bound=bound,
        empirical_failure_rate=rate,
        slack=slack,
        passed=rate <= bound + slack,
        stats={"mean_sq_norm_ratio": mean, "mean_sq_norm_ratio_se": se},
        warnings=_low_trial_warning(trials),
    )


def _gradient_stream(seed: int, shape, steps: int):
    rng = Rng(derive_seed(seed, _SALT_DATA))
    return [rng.normal(shape) for _ in range(steps)]


def _fixed_projection_cfg(steps: int, seed: int, rank: int, **kw) -> OptimizerConfig:
    # period longer than the run keeps P fixed
    return OptimizerConfig(
        "apollo", lr=1e-3, rank=rank, period=steps + 1, seed=seed, bias_correction=False, gamma=None, **kw
    )


def check_first_moment_identity(m: int, n: int, r: int, steps: int, seed: int, beta1: float = 0.9) -> float:
    """Max over steps of ``|M_R - P M|_F / |P M|_F`` with a fixed projection."""
    cfg = _fixed_projection_cfg(steps, seed, r, beta1=beta1)
    apollo = init_apollo_state((m, n), cfg)
    full = AdamWState.zeros((m, n))
    W = np.zeros((m, n))
    worst = 0.0
    for G in _gradient_stream(seed, (m, n), steps):
        apollo_step(W, G, apollo, cfg)
        adamw_step(W, G, full, cfg)
        P = apollo.projector.P
        ref = P @ oriented(full.M, apollo.projector.orientation)
        denom = np.linalg.norm(ref)
        err = np.linalg.norm(apollo.M_R - ref) / denom if denom > 0 else np.linalg.norm(apollo.M_R)
        worst = max(worst, float(err))
    return worst


def check_second_moment_identity(m: int, n: int, r: int, steps: int, seed: int, beta2: float = 0.999) -> float:
    """Max relative error between ``|V_R[:, j]|_1`` and the explicit discounted
    sum ``(1 - beta2) sum_k beta2^k |R_{t-k}[:, j]|^2`` over all steps."""
    cfg = _fixed_projection_cfg(steps, seed, r, beta2=beta2)
    state = init_apollo_state((m, n), cfg)
    W = np.zeros((m, n))
    history = []
    worst = 0.0
    for G in _gradient_stream(seed, (m, n), steps):
        apollo_step(W, G, state, cfg)
        R = state.projector.P @ oriented(G, state.projector.orientation)
        history.append(col_norms(R) ** 2)
        t = len(history)
        expected = (1.0 - beta2) * sum(beta2**k * history[t - 1 - k] for k in range(t))
        got = l1_norm_cols(state.V_R)
        worst = max(worst, float(np.max(np.abs(got - expected) / expected)))
    return worst


def check_second_moment_bound(
    m: int,
    n: int,
    r,
    steps: int,
    eps: float,
    trials: int,
    seed: int,
    delta: float = 0.1,
    beta2: float = 0.999,
) -> BoundCheckReport:
    """Per-channel l1 preservation of the second moment at step ``steps``.

    The gradient stream is fixed; each trial draws a fresh projection.
    ``r=None`` picks the smallest rank satisfying the union-bound condition.
    The empirical per-channel failure rate is compared with ``delta / 2``.
    """
    if r is None:
        r = rank_for_bound(eps, steps, delta)
    stream = _gradient_stream(seed, (m, n), steps)
    weights = (1.0 - beta2) * beta2 ** np.arange(steps)[::-1]
    V_l1 = sum(w * col_norms(G) ** 2 for w, G in zip(weights, stream))
    stacked = np.concatenate(stream, axis=1)
    failures = 0
    ratios = np.empty((trials, n))
    for k in range(trials):
        R = _trial_projection(seed, k, r, m) @ stacked
        sq = col_norms(R) ** 2
        VR_l1 = (weights[:, None] * sq.reshape(steps, n)).sum(axis=0)
        ratio = VR_l1 / V_l1
        ratios[k] = ratio
        failures += int(np.count_nonzero((ratio < 1.0 - eps) | (ratio > 1.0 + eps)))
    rate = failures / (trials * n)
    target = delta / 2.0
    # channels share P within a trial, so count trials (not trial x channel) in the error
    slack = binomial_slack(target, trials)
    return BoundCheckReport(
        name="second-moment-bound",
        params={"m": m, "n": n, "r": r, "steps": steps, "delta": delta, "beta2": beta2, "seed": seed},
        trials=trials,
        epsilon=eps,
        bound=target,
        empirical_failure_rate=rate,
        slack=slack,
        passed=rate <= target + slack,
        stats={
            "ratio_min": float(ratios.min()),
            "ratio_max": float(ratios.max()),
            "ratio_mean": float(ratios.mean()),
            "per_step_jl_bound": jl_failure_bound(r, eps),
        },
        warnings=_low_trial_warning(trials),
    )


def _structured_stream(rng: Rng, m: int, n: int, steps: int, noise: float = 1.0):
    # persistent per-channel signal, channel magnitudes spread over two decades
    base = rng.normal((m, n))
    scales = 10.0 ** (2.0 * rng.uniform(n) - 1.0)
    return [(base + noise * rng.normal((m, n))) * scales[None, :] for _ in range(steps)]


@dataclass
class RatioReport:
    params: dict
    samples: int
    median: float
    p05: float
    p95: float
    frac_in_band: float
    band: tuple
    median_band: tuple
    passed: bool
    uncompensated_median: float
    alt_factor_median: float
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["pass"] = d.pop("passed")
        d["name"] = "ratio-bound"
        return d


def scale_ratio_samples(
    m: int, n: int, r: int, steps: int, trials: int, seed: int, burn_in: int = 5, projector: str = "random", scale: float = 1.0
) -> np.ndarray:
    """Raw ``s_R / s`` samples, shape ``(trials, steps - burn_in, channels)``.

    APOLLO and the full-space channel-wise reference see identical gradient
    streams with bias correction off, no limiter and ``eps = 0``.
    """
    out = []
    for k in range(trials):
        tseed = derive_seed(seed, _SALT_TRIAL, k)
        cfg = OptimizerConfig(
            "apollo", lr=1e-3, rank=r, period=steps + 1, seed=tseed, bias_correction=False,
            gamma=None, eps=0.0, projector=projector,
        )
        apollo = init_apollo_state((m, n), cfg)
        full = AdamWState.zeros((m, n))
        W = np.zeros((m, n))
        rows = []
        for t, G in enumerate(_structured_stream(Rng(tseed), m, n, steps)):
            G = scale * G
            apollo_step(W, G, apollo, cfg)
            structured_adamw_reference(W, G, full, cfg)
            if t >= burn_in:
                rows.append(apollo.last_scale / full.last_scale)
        out.append(rows)
    return np.asarray(out)


def check_ratio_bound(
    m: int = 64,
    n: int = 256,
    r: int = 16,
    steps: int = 20,
    trials: int = 50,
    seed: int = 0,
    burn_in: int = 5,
    band=(0.25, 4.0),
    median_band=(0.5, 2.0),
    min_frac: float = 0.9,
) -> RatioReport:
    """Distribution of the compensated ratio ``sqrt(d_small / r) * s_R / s``.

    The variance-averaging step divides the l1 norm of each full-space channel
    by the number of its entries, which is the compressed dimension
    ``d_small``; the alternative ``sqrt(d_large / r)`` uses the channel count.
    Both are reported, the contract uses ``d_small``.
    """
    raw = scale_ratio_samples(m, n, r, steps, trials, seed, burn_in).ravel()
    d_small, d_large = min(m, n), max(m, n)
    comp = math.sqrt(d_small / r) * raw
    lo, hi = band
    frac = float(np.mean((comp >= lo) & (comp <= hi)))
    med = float(np.median(comp))
    passed = median_band[0] <= med <= median_band[1] and frac >= min_frac and bool(np.all(np.isfinite(comp)))
    return RatioReport(
        params={"m": m, "n": n, "r": r, "steps": steps, "trials": trials, "seed": seed, "burn_in": burn_in},
        samples=int(comp.size),
        median=med,
        p05=float(np.percentile(comp, 5)),
        p95=float(np.percentile(comp, 95)),
        frac_in_band=frac,
        band=tuple(band),
        median_band=tuple(median_band),
        passed=passed,
        uncompensated_median=float(np.median(raw)),
        alt_factor_median=float(np.median(math.sqrt(d_large / r) * raw)),
        notes=[
            "compensation factor sqrt(d_small/r); alt_factor_median uses sqrt(d_large/r)",
        ],
    )


def check_identity_oracle(shapes=((8, 12), (12, 8), (10, 10)), steps: int = 10, seeds=range(20)) -> float:
    """Max relative deviation between APOLLO with an identity projection and the
    full-space channel-wise reference, over random runs."""
    worst = 0.0
    for seed in seeds:
        for shape in shapes:
            cfg = OptimizerConfig("apollo", lr=1e-2, projector="identity", rank=min(shape), seed=seed)
            rng = Rng(derive_seed(seed, _SALT_DATA, *shape))
            W0 = rng.normal(shape)
            Wa, Wr = W0.copy(), W0.copy()
            sa, sr = init_apollo_state(shape, cfg), AdamWState.zeros(shape)
            for _ in range(steps):
                G = rng.normal(shape)
                Wa, _ = apollo_step(Wa, G, sa, cfg)
                Wr, _ = structured_adamw_reference(Wr, G, sr, cfg)
                worst = max(worst, float(np.max(np.abs(Wa - Wr)) / np.max(np.abs(Wr))))
    return worst
