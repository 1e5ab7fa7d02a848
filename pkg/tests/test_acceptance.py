"""Acceptance criteria, one test each. Every test prints a single
``PASS``/``FAIL`` line (also repeated in the pytest terminal summary) and then
asserts, so a red criterion stays red.

Run alone with ``pytest tests/test_acceptance.py -v -s``.
"""

import math
import time

import numpy as np

from apollo_optim import cli, harness, memory, theory
from apollo_optim.optimizers import OptimizerConfig, state_element_count
from apollo_optim.rng import Rng

from conftest import ACCEPTANCE_LINES

IDENTITY_GRID = ((32, 64, 8), (64, 64, 16), (128, 32, 4))
LR_SWEEP = (1e-3, 3e-3, 1e-2, 3e-2)


def report(number: int, title: str, ok: bool, detail: str, elapsed: float, limit: float) -> None:
    ok = ok and elapsed < limit
    line = f"[{'PASS' if ok else 'FAIL'}] {number:>2}. {title}: {detail} ({elapsed:.2f}s < {limit:g}s)"
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert ok, line


def test_01_first_moment_identity():
    t0 = time.perf_counter()
    err = max(theory.check_first_moment_identity(m, n, r, 20, seed) for m, n, r in IDENTITY_GRID for seed in range(20))
    report(1, "first-moment identity", err <= 1e-8, f"max rel err {err:.2e} <= 1e-8", time.perf_counter() - t0, 5)


def test_02_second_moment_identity_and_bound():
    t0 = time.perf_counter()
    err = max(theory.check_second_moment_identity(m, n, r, 20, seed) for m, n, r in IDENTITY_GRID for seed in range(20))
    r = theory.rank_for_bound(0.5, 10, 0.1)
    rep = theory.check_second_moment_bound(256, 16, r, 10, 0.5, 2000, seed=0, delta=0.1)
    ok = err <= 1e-8 and r == 170 and rep.passed and rep.trials >= 2000
    detail = (
        f"l1 identity err {err:.2e}; r={r}, failure rate {rep.empirical_failure_rate:.4f} "
        f"<= {rep.bound:.3f} + {rep.slack:.4f}"
    )
    report(2, "second-moment identity + bound", ok, detail, time.perf_counter() - t0, 60)


def test_03_jl_tail_bound():
    t0 = time.perf_counter()
    rep = theory.check_norm_preservation(128, 256, 0.5, 10_000, seed=0)
    detail = f"failure rate {rep.empirical_failure_rate:.4f} <= {rep.bound:.4f} + {rep.slack:.4f}"
    ok = rep.passed and abs(rep.bound - 2 * math.exp(-4)) < 1e-12
    report(3, "JL tail bound", ok, detail, time.perf_counter() - t0, 30)


def test_04_identity_projection_oracle():
    t0 = time.perf_counter()
    err = theory.check_identity_oracle(steps=10, seeds=range(20))
    report(4, "identity-projection oracle", err <= 1e-9, f"max rel err {err:.2e} <= 1e-9", time.perf_counter() - t0, 5)


def test_05_ratio_bound_distribution():
    t0 = time.perf_counter()
    rep = theory.check_ratio_bound(m=64, n=256, r=16, steps=20, trials=50, seed=0, burn_in=5)
    detail = f"median {rep.median:.3f} in [0.5, 2]; {100 * rep.frac_in_band:.1f}% in [0.25, 4] (>= 90%)"
    ok = 0.5 <= rep.median <= 2.0 and rep.frac_in_band >= 0.9
    report(5, "ratio-bound distribution", ok, detail, time.perf_counter() - t0, 60)


def test_06_norm_growth_limiter():
    t0 = time.perf_counter()
    rng = Rng(6)
    grads = [rng.normal((32, 64)) for _ in range(60)]
    grads[50] = 100.0 * grads[50]
    cfg = OptimizerConfig("apollo", lr=1e-3, rank=8, gamma=1.01)
    norms = harness.replay_gradients(grads, cfg)
    prev, spike = norms[49][0], norms[50][0]
    rel = (spike - 1.01 * prev) / (1.01 * prev)
    ok = norms[50][1] and rel <= 1e-12
    report(6, "norm-growth limiter", ok, f"spike/prev = {spike / prev:.12f} (<= 1.01, rel {rel:+.1e})", time.perf_counter() - t0, 1)


def _literal_state_count(variant: str, m: int, n: int, r: int) -> int:
    # literal formulas, independent of the implementation
    return {"adamw": 2 * m * n, "apollo": 2 * n * r + 2, "apollo-mini": 2 * n + 2, "galore-rp": m * r + 2 * n * r, "sgd": 0}[variant]


def test_07_memory_reproduction():
    t0 = time.perf_counter()
    arch = memory.llama_arch("llama60m")
    targets = {"adamw": (None, 0.36), "apollo": (arch.hidden // 4, 0.24), "apollo-mini": (1, 0.12)}
    parts, ok = [], True
    for variant, (rank, target) in targets.items():
        rep = memory.estimate(arch, variant, rank)
        rel = (rep.total_gib - target) / target
        ok &= abs(rel) <= 0.15
        parts.append(f"{variant} {rep.total_gib:.3f} GiB ({rel:+.0%})")
    rng = np.random.default_rng(7)
    mismatches = 0
    for _ in range(10):
        m, extra = int(rng.integers(2, 4096)), int(rng.integers(0, 4096))
        n, r = m + extra, int(rng.integers(1, m + 1))
        for v in ("adamw", "apollo", "apollo-mini", "galore-rp", "sgd"):
            mismatches += state_element_count(v, m, n, r) != _literal_state_count(v, m, n, r)
    ok &= mismatches == 0
    parts.append(f"state-count mismatches {mismatches}/50")
    report(7, "memory reproduction", ok, "; ".join(parts), time.perf_counter() - t0, 1)


def _best(task, cfg, steps):
    rows = harness.compare({"t": task}, {"o": cfg}, steps, seed=0, lrs=LR_SWEEP)
    ok = [r for r in rows if r.status == "ok"]
    best = min(ok, key=lambda r: r.final_loss)
    return best.initial_loss, best.final_loss, best.lr


def test_08_convergence():
    t0 = time.perf_counter()
    quad = harness.make_quadratic(64, 1000.0, 0)
    _, adam, _ = _best(quad, OptimizerConfig("adamw"), 2000)
    parts, ok = [f"quad AdamW best {adam:.3g}"], True
    for name, cfg in (("APOLLO r16", OptimizerConfig("apollo", rank=16)), ("Mini", OptimizerConfig("apollo-mini"))):
        init, final, lr = _best(quad, cfg, 2000)
        reduction, vs_adam = init / final, final / adam
        ok &= reduction >= 1000 and vs_adam <= 10
        parts.append(f"{name} {reduction:.0f}x reduction, {vs_adam:.2f}x AdamW (lr {lr:g})")
    mlp = harness.make_mlp(16, 32, 5, 512, 0)
    _, mlp_adam, _ = _best(mlp, OptimizerConfig("adamw"), 1000)
    _, mlp_apollo, _ = _best(mlp, OptimizerConfig("apollo", rank=4), 1000)
    ok &= mlp_apollo <= 1.2 * mlp_adam
    parts.append(f"MLP APOLLO/AdamW = {mlp_apollo / mlp_adam:.3f} (<= 1.2)")
    report(8, "convergence", ok, "; ".join(parts), time.perf_counter() - t0, 180)


def test_09_gradient_checks():
    t0 = time.perf_counter()
    tasks = {
        "quad": harness.make_quadratic(64, 1000.0, 0),
        "linreg": harness.make_linreg(32, 8, 512, 0),
        "mlp": harness.make_mlp(16, 32, 5, 512, 0),
    }
    errs = {k: harness.check_gradients(t, points=10, seed=9) for k, t in tasks.items()}
    ok = max(errs.values()) <= 1e-5
    detail = ", ".join(f"{k} {v:.1e}" for k, v in errs.items()) + " <= 1e-5"
    report(9, "gradient checks", ok, detail, time.perf_counter() - t0, 10)


def test_10_cli_determinism(tmp_path, capsys):
    t0 = time.perf_counter()
    flags = ["train", "--task", "quad", "--dim", "64", "--kappa", "1000", "--opt", "apollo", "--rank", "16",
             "--lr", "1e-2", "--steps", "2000", "--seed", "1"]
    codes = [cli.main(flags + ["--out", str(tmp_path / f"{k}.csv")]) for k in "ab"]
    capsys.readouterr()
    a, b = (tmp_path / "a.csv").read_bytes(), (tmp_path / "b.csv").read_bytes()
    rows = a.count(b"\n") - 1
    ok = codes == [0, 0] and a == b and rows == 2000
    report(10, "CLI determinism", ok, f"{rows} rows, byte-identical={a == b}", time.perf_counter() - t0, 10)
