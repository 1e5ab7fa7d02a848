"""Command-line entry point: ``train``, ``compare``, ``verify``, ``memory``.

Exit codes: 0 success, 1 verification failure, 2 usage/config error,
3 divergence. Output files default to ``$APOLLO_OPTIM_OUTPUT_DIR`` (or the
current directory) and are written atomically.

Any flag may also come from ``--config FILE`` (JSON or YAML, keys are flag
names with dashes or underscores); flags on the command line win.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import warnings

from . import harness, memory, theory
from .errors import ConfigError, DivergenceError
from .optimizers import OptimizerConfig, Variant

OUTPUT_ENV = "APOLLO_OPTIM_OUTPUT_DIR"

EXIT_OK, EXIT_VERIFY, EXIT_USAGE, EXIT_DIVERGED = 0, 1, 2, 3

VERIFY_CHECKS = ("norm", "first-moment", "second-moment", "ratio", "oracle", "gradient")
FIRST_MOMENT_GRID = ((32, 64, 8), (64, 64, 16), (128, 32, 4))


def _default_path(name: str) -> str:
    return os.path.join(os.environ.get(OUTPUT_ENV, "."), name)


def _add_optimizer_flags(p: argparse.ArgumentParser, multi: bool = False) -> None:
    choices = [v.value for v in Variant]
    if multi:
        p.add_argument("--opt", action="append", choices=choices, help="optimizer (repeatable)")
    else:
        p.add_argument("--opt", choices=choices, default="apollo")
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--rank", type=int, default=None)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--beta1", type=float, default=0.9)
    p.add_argument("--beta2", type=float, default=0.999)
    p.add_argument("--eps", type=float, default=1e-8)
    p.add_argument("--weight-decay", type=float, default=0.0)
    p.add_argument("--gamma", type=float, default=1.01, help="norm-growth limit factor")
    p.add_argument("--no-limiter", action="store_true")
    p.add_argument("--period", type=int, default=200, help="projection refresh period T")
    p.add_argument("--projector", choices=["random", "svd"], default="random")
    p.add_argument("--no-bias-correction", action="store_true")
    p.add_argument("--schedule", choices=["constant", "cosine"], default="constant")


def _add_task_flags(p: argparse.ArgumentParser, multi: bool = False) -> None:
    if multi:
        p.add_argument("--task", action="append", choices=["quad", "linreg", "mlp"])
    else:
        p.add_argument("--task", choices=["quad", "linreg", "mlp"])
    p.add_argument("--dim", type=int, default=64)
    p.add_argument("--kappa", type=float, default=1000.0)
    p.add_argument("--cols", type=int, default=None)
    p.add_argument("--in-dim", type=int, default=32)
    p.add_argument("--out-dim", type=int, default=8)
    p.add_argument("--samples", type=int, default=512)
    p.add_argument("--input-dim", type=int, default=16)
    p.add_argument("--hidden", type=int, default=32)
    p.add_argument("--classes", type=int, default=5)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="apollo-optim", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    tr = sub.add_parser("train", help="train one optimizer on one task, write a CSV trace")
    _add_task_flags(tr)
    _add_optimizer_flags(tr)
    tr.add_argument("--steps", type=int, default=1000)
    tr.add_argument("--seed", type=int, default=0)
    tr.add_argument("--out", default=None)
    tr.add_argument("--config", default=None)

    cp = sub.add_parser("compare", help="task x optimizer x lr table")
    _add_task_flags(cp, multi=True)
    _add_optimizer_flags(cp, multi=True)
    cp.add_argument("--lrs", default=None, help="comma-separated lr sweep")
    cp.add_argument("--steps", type=int, default=1000)
    cp.add_argument("--seed", type=int, default=0)
    cp.add_argument("--out", default=None)
    cp.add_argument("--format", choices=["csv", "json"], default="csv")
    cp.add_argument("--config", default=None)

    vf = sub.add_parser("verify", help="run theory, oracle and gradient checks")
    vf.add_argument("--only", action="append", choices=VERIFY_CHECKS)
    vf.add_argument("--trials", type=int, default=None, help="override Monte-Carlo trial counts")
    vf.add_argument("--seed", type=int, default=0)
    vf.add_argument("--out", default=None)
    vf.add_argument("--config", default=None)

    mm = sub.add_parser("memory", help="analytic weight + optimizer-state memory")
    mm.add_argument("--arch", default="llama60m")
    mm.add_argument("--arch-config", default=None, help="JSON/YAML architecture file")
    mm.add_argument("--opt", choices=[v.value for v in Variant], default="apollo")
    mm.add_argument("--rank", type=int, default=None)
    mm.add_argument("--bytes", type=int, default=2, dest="bytes_per_elem")
    mm.add_argument("--vocab", type=int, default=32000)
    mm.add_argument("--all-matrices-low-rank", action="store_true", help="also compress embeddings and head")
    mm.add_argument("--breakdown", action="store_true", help="include per-tensor rows")
    mm.add_argument("--out", default=None)
    mm.add_argument("--config", default=None)
    return parser


def _load_config(path: str) -> dict:
    with open(path) as fh:
        if path.endswith((".yaml", ".yml")):
            import yaml

            data = yaml.safe_load(fh) or {}
        else:
            data = json.load(fh)
    return {k.replace("-", "_"): v for k, v in data.items()}


def parse_args(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "config", None):
        try:
            file_cfg = _load_config(args.config)
        except (OSError, ValueError) as exc:
            parser.error(f"cannot read config {args.config}: {exc}")
        sub = parser._subparsers._group_actions[0].choices[args.command]
        known = {a.dest for a in sub._actions}
        unknown = set(file_cfg) - known
        if unknown:
            parser.error(f"unknown config keys: {sorted(unknown)}")
        sub.set_defaults(**file_cfg)
        args = parser.parse_args(argv)
    return parser, args


def _optimizer_config(args, variant: str) -> OptimizerConfig:
    rank = args.rank
    if variant == Variant.APOLLO_MINI.value and rank not in (None, 1):
        print(f"warning: apollo-mini forces rank 1 (ignoring --rank {rank})", file=sys.stderr)
        rank = None
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return OptimizerConfig(
            variant,
            lr=args.lr,
            alpha=args.alpha,
            beta1=args.beta1,
            beta2=args.beta2,
            eps=args.eps,
            weight_decay=args.weight_decay,
            gamma=None if args.no_limiter else args.gamma,
            rank=rank,
            period=args.period,
            bias_correction=not args.no_bias_correction,
            projector=args.projector,
            seed=args.seed,
        )


def _make_task(kind: str, args):
    if kind == "quad":
        return harness.make_quadratic(args.dim, args.kappa, args.seed, args.cols)
    if kind == "linreg":
        return harness.make_linreg(args.in_dim, args.out_dim, args.samples, args.seed)
    return harness.make_mlp(args.input_dim, args.hidden, args.classes, args.samples, args.seed)


def cmd_train(args, parser) -> int:
    if not args.task:
        parser.error("train requires --task")
    task = _make_task(args.task, args)
    cfg = _optimizer_config(args, args.opt)
    try:
        trace = harness.train(task, cfg, args.steps, args.seed, args.schedule)
    except DivergenceError as exc:
        print(f"diverged at step {exc.step} (loss={exc.loss!r})", file=sys.stderr)
        return EXIT_DIVERGED
    out = args.out or _default_path("trace.csv")
    trace.write(out)
    print(f"final_loss {trace.final_loss!r}")
    return EXIT_OK


def cmd_compare(args, parser) -> int:
    if not args.task:
        parser.error("compare requires at least one --task")
    opts = args.opt or ["adamw", "apollo"]
    tasks = {k: _make_task(k, args) for k in dict.fromkeys(args.task)}
    configs = {o: _optimizer_config(args, o) for o in dict.fromkeys(opts)}
    lrs = [float(x) for x in args.lrs.split(",")] if args.lrs else None
    rows = harness.compare(tasks, configs, args.steps, args.seed, lrs=lrs, schedule=args.schedule)
    if args.format == "json":
        text = json.dumps([r.to_dict() for r in rows], indent=2, sort_keys=True) + "\n"
    else:
        text = harness.rows_to_csv(rows)
    out = args.out or _default_path(f"compare.{args.format}")
    harness.atomic_write(out, text)
    sys.stdout.write(text)
    return EXIT_OK


def run_verify(only=None, trials=None, seed: int = 0) -> dict:
    """Run the selected checks; returns a JSON-ready report."""
    selected = only or list(VERIFY_CHECKS)
    results = []
    if "norm" in selected:
        rep = theory.check_norm_preservation(128, 256, 0.5, trials or 10000, seed)
        results.append(rep.to_dict())
    if "first-moment" in selected:
        err = max(theory.check_first_moment_identity(m, n, r, 20, seed + s) for m, n, r in FIRST_MOMENT_GRID for s in range(20))
        results.append({"name": "first-moment", "max_rel_error": err, "tolerance": 1e-8, "pass": err <= 1e-8})
    if "second-moment" in selected:
        err = max(theory.check_second_moment_identity(m, n, r, 20, seed + s) for m, n, r in FIRST_MOMENT_GRID for s in range(20))
        results.append({"name": "second-moment-l1-identity", "max_rel_error": err, "tolerance": 1e-8, "pass": err <= 1e-8})
        rep = theory.check_second_moment_bound(256, 16, None, 10, 0.5, trials or 2000, seed, delta=0.1)
        results.append(rep.to_dict())
    if "ratio" in selected:
        results.append(theory.check_ratio_bound(seed=seed).to_dict())
    if "oracle" in selected:
        err = theory.check_identity_oracle(seeds=range(seed, seed + 20))
        results.append({"name": "identity-oracle", "max_rel_error": err, "tolerance": 1e-9, "pass": err <= 1e-9})
    if "gradient" in selected:
        tasks = {
            "quad": harness.make_quadratic(16, 100.0, seed),
            "linreg": harness.make_linreg(8, 3, 64, seed),
            "mlp": harness.make_mlp(6, 10, 4, 64, seed),
        }
        errs = {k: harness.check_gradients(t, 10, seed) for k, t in tasks.items()}
        worst = max(errs.values())
        results.append({"name": "gradient", "max_rel_error": errs, "tolerance": 1e-5, "pass": worst <= 1e-5})
    return {"seed": seed, "checks": results, "pass": all(r["pass"] for r in results)}


def _json_default(o):
    if isinstance(o, float) and not math.isfinite(o):
        return repr(o)
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(f"not serialisable: {type(o)}")


def cmd_verify(args, parser) -> int:
    report = run_verify(args.only, args.trials, args.seed)
    text = json.dumps(report, indent=2, default=_json_default) + "\n"
    if args.out:
        harness.atomic_write(args.out, text)
    sys.stdout.write(text)
    failed = [r["name"] for r in report["checks"] if not r["pass"]]
    if failed:
        print("failed checks: " + ", ".join(failed), file=sys.stderr)
        return EXIT_VERIFY
    return EXIT_OK


def cmd_memory(args, parser) -> int:
    if args.arch_config:
        arch = memory.load_arch(args.arch_config)
    else:
        arch = memory.llama_arch(args.arch, args.vocab, args.bytes_per_elem)
    rank = args.rank
    if rank is None and args.opt in (Variant.APOLLO.value, Variant.GALORE_RP.value):
        rank = max(1, (arch.hidden or 4) // 4)
    full_rank = () if args.all_matrices_low_rank else None
    report = memory.estimate(arch, args.opt, rank, args.bytes_per_elem, full_rank=full_rank)
    text = json.dumps(report.to_dict(breakdown=args.breakdown), indent=2) + "\n"
    if args.out:
        harness.atomic_write(args.out, text)
    sys.stdout.write(text)
    return EXIT_OK


COMMANDS = {"train": cmd_train, "compare": cmd_compare, "verify": cmd_verify, "memory": cmd_memory}


def main(argv=None) -> int:
    parser, args = parse_args(argv)
    try:
        return COMMANDS[args.command](args, parser)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
