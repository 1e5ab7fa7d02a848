"""Desk-scale training tasks with analytic gradients, a training loop and
trace capture.

Parameters are plain lists of ndarrays. Each task exposes ``shapes``,
``init_params(seed)``, ``loss(params)`` and ``loss_and_grad(params)``.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .errors import ConfigError, DivergenceError
from .optimizers import OptimizerConfig, Optimizer, apollo_step, init_apollo_state
from .rng import Rng, derive_seed

CSV_HEADER = ("step", "loss", "grad_norm", "mean_scale", "limited")
DIVERGENCE_LOSS = 1e12


def _orthogonal(rng: Rng, n: int) -> np.ndarray:
    q, r = np.linalg.qr(rng.normal((n, n)))
    return q * np.sign(np.diag(r))[None, :]


class QuadraticBowl:
    """``f(W) = 0.5 |A W - B|_F^2`` with singular values of ``A`` log-spaced
    in ``[1, kappa]`` and ``B = A W*``."""

    kind = "quad"

    def __init__(self, dim: int, kappa: float, seed: int, cols: Optional[int] = None):
        if dim < 2:
            raise ConfigError(f"dim must be >= 2, got {dim}")
        if not kappa >= 1.0:
            raise ConfigError(f"kappa must be >= 1, got {kappa}")
        self.dim, self.kappa, self.seed = dim, float(kappa), seed
        self.cols = dim if cols is None else cols
        rng = Rng(derive_seed(seed, 0x9A4D))
        U, V = _orthogonal(rng, dim), _orthogonal(rng, dim)
        self.sigma = np.logspace(0.0, math.log10(self.kappa), dim)
        self.A = (U * self.sigma[None, :]) @ V.T
        self.W_star = rng.normal((dim, self.cols))
        self.B = self.A @ self.W_star
        self.shapes = [(dim, self.cols)]

    @property
    def sigma_max(self) -> float:
        return float(self.sigma[-1])

    def init_params(self, seed: int = 0):
        return [np.zeros((self.dim, self.cols))]

    def loss_and_grad(self, params):
        resid = self.A @ params[0] - self.B
        return 0.5 * float(np.sum(resid * resid)), [self.A.T @ resid]

    def loss(self, params) -> float:
        return self.loss_and_grad(params)[0]

    def describe(self) -> dict:
        return {"kind": self.kind, "dim": self.dim, "cols": self.cols, "kappa": self.kappa, "seed": self.seed}


class LinearRegression:
    """Least squares ``0.5/N |X W + b - Y|^2`` on seeded synthetic data."""

    kind = "linreg"

    def __init__(self, in_dim: int, out_dim: int, samples: int, seed: int, noise: float = 0.1):
        if min(in_dim, out_dim, samples) < 1:
            raise ConfigError("linreg dimensions must be positive")
        self.in_dim, self.out_dim, self.samples, self.seed = in_dim, out_dim, samples, seed
        rng = Rng(derive_seed(seed, 0x11E6))
        self.X = rng.normal((samples, in_dim))
        W_true = rng.normal((in_dim, out_dim)) / math.sqrt(in_dim)
        b_true = rng.normal(out_dim)
        self.Y = self.X @ W_true + b_true + noise * rng.normal((samples, out_dim))
        self.shapes = [(in_dim, out_dim), (out_dim,)]

    def init_params(self, seed: int = 0):
        rng = Rng(derive_seed(seed, 0x1417))
        return [0.01 * rng.normal((self.in_dim, self.out_dim)), np.zeros(self.out_dim)]

    def loss_and_grad(self, params):
        W, b = params
        resid = self.X @ W + b - self.Y
        n = self.samples
        return 0.5 * float(np.sum(resid * resid)) / n, [self.X.T @ resid / n, resid.sum(axis=0) / n]

    def loss(self, params) -> float:
        return self.loss_and_grad(params)[0]

    def describe(self) -> dict:
        return {"kind": self.kind, "in_dim": self.in_dim, "out_dim": self.out_dim, "samples": self.samples, "seed": self.seed}


class MlpClassifier:
    """affine -> tanh -> affine -> softmax cross-entropy, on Gaussian clusters.

    Parameters: ``W1 (hidden, input)``, ``b1 (hidden,)``, ``W2 (classes, hidden)``,
    ``b2 (classes,)``.
    """

    kind = "mlp"

    def __init__(self, input_dim: int, hidden: int, classes: int, samples: int, seed: int, spread: float = 1.5):
        if min(input_dim, hidden, classes, samples) < 1:
            raise ConfigError("mlp dimensions must be positive")
        self.input_dim, self.hidden, self.classes, self.samples, self.seed = input_dim, hidden, classes, samples, seed
        rng = Rng(derive_seed(seed, 0x3A9))
        centers = spread * rng.normal((classes, input_dim))
        self.y = np.arange(samples) % classes
        self.X = centers[self.y] + rng.normal((samples, input_dim))
        self.shapes = [(hidden, input_dim), (hidden,), (classes, hidden), (classes,)]

    def with_labels(self, y: np.ndarray) -> "MlpClassifier":
        clone = object.__new__(MlpClassifier)
        clone.__dict__.update(self.__dict__)
        clone.y = np.asarray(y)
        return clone

    def init_params(self, seed: int = 0):
        rng = Rng(derive_seed(seed, 0x3A9, 1))
        return [
            rng.normal((self.hidden, self.input_dim)) / math.sqrt(self.input_dim),
            np.zeros(self.hidden),
            rng.normal((self.classes, self.hidden)) / math.sqrt(self.hidden),
            np.zeros(self.classes),
        ]

    def loss_and_grad(self, params):
        W1, b1, W2, b2 = params
        n = self.samples
        H = np.tanh(self.X @ W1.T + b1)
        logits = H @ W2.T + b2
        logits = logits - logits.max(axis=1, keepdims=True)
        logz = np.log(np.exp(logits).sum(axis=1))
        loss = float(np.mean(logz - logits[np.arange(n), self.y]))
        probs = np.exp(logits - logz[:, None])
        probs[np.arange(n), self.y] -= 1.0
        d_logits = probs / n
        dW2 = d_logits.T @ H
        db2 = d_logits.sum(axis=0)
        dZ = (d_logits @ W2) * (1.0 - H * H)
        dW1 = dZ.T @ self.X
        db1 = dZ.sum(axis=0)
        return loss, [dW1, db1, dW2, db2]

    def loss(self, params) -> float:
        return self.loss_and_grad(params)[0]

    def describe(self) -> dict:
        return {
            "kind": self.kind,
            "input_dim": self.input_dim,
            "hidden": self.hidden,
            "classes": self.classes,
            "samples": self.samples,
            "seed": self.seed,
        }


def make_quadratic(dim: int, kappa: float, seed: int, cols: Optional[int] = None) -> QuadraticBowl:
    return QuadraticBowl(dim, kappa, seed, cols)


def make_linreg(in_dim: int, out_dim: int, samples: int, seed: int, noise: float = 0.1) -> LinearRegression:
    return LinearRegression(in_dim, out_dim, samples, seed, noise)


def make_mlp(input_dim: int, hidden: int, classes: int, samples: int, seed: int) -> MlpClassifier:
    return MlpClassifier(input_dim, hidden, classes, samples, seed)


def check_gradients(task, points: int = 10, seed: int = 0, h: float = 1e-6, max_coords: int = 256) -> float:
    """Worst relative gap between the analytic gradient and central finite
    differences, over ``points`` random parameter vectors.

    At most ``max_coords`` coordinates per point are probed (sampled without
    replacement when the parameter count is larger).
    """
    rng = Rng(derive_seed(seed, 0x6C))
    worst = 0.0
    for _ in range(points):
        params = [p + 0.5 * rng.normal(np.shape(p)).reshape(np.shape(p)) for p in task.init_params(seed)]
        _, grads = task.loss_and_grad(params)
        flat_index = [(i, j) for i, p in enumerate(params) for j in range(np.size(p))]
        if len(flat_index) > max_coords:
            order = np.argsort(rng.uniform(len(flat_index)), kind="stable")[:max_coords]
            flat_index = [flat_index[k] for k in order]
        fd = np.empty(len(flat_index))
        an = np.empty(len(flat_index))
        for k, (i, j) in enumerate(flat_index):
            p = params[i].reshape(-1)
            orig = p[j]
            p[j] = orig + h
            up = task.loss(params)
            p[j] = orig - h
            down = task.loss(params)
            p[j] = orig
            fd[k] = (up - down) / (2.0 * h)
            an[k] = grads[i].reshape(-1)[j]
        denom = max(np.linalg.norm(an), np.linalg.norm(fd), 1e-30)
        worst = max(worst, float(np.linalg.norm(fd - an) / denom))
    return worst


# --------------------------------------------------------------------------
# training
# --------------------------------------------------------------------------


@dataclass
class TraceRecord:
    step: int
    loss: float
    grad_norm: float
    mean_scale: float
    limited: bool
    update_norm: float = float("nan")


@dataclass
class TrainTrace:
    records: list
    config: dict
    task: dict
    seed: int
    schedule: str = "constant"
    final_loss: float = float("nan")
    wall_time: float = 0.0

    @property
    def losses(self) -> np.ndarray:
        return np.array([r.loss for r in self.records])

    def csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in self.records:
            w.writerow([r.step, repr(float(r.loss)), repr(float(r.grad_norm)), repr(float(r.mean_scale)), int(r.limited)])
        return buf.getvalue()

    def snapshot(self) -> dict:
        return {
            "optimizer": self.config,
            "task": self.task,
            "seed": self.seed,
            "schedule": self.schedule,
            "steps": len(self.records),
            "final_loss": self.final_loss,
            "wall_time": self.wall_time,
        }

    def write(self, csv_path, json_path=None) -> None:
        """CSV trace plus a JSON config snapshot (default: same stem, ``.json``)."""
        csv_path = os.fspath(csv_path)
        if json_path is None:
            json_path = os.path.splitext(csv_path)[0] + ".json"
        atomic_write(csv_path, self.csv_text())
        atomic_write(json_path, json.dumps(self.snapshot(), indent=2, sort_keys=True) + "\n")


def read_trace_csv(path) -> list:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [
        TraceRecord(int(r["step"]), float(r["loss"]), float(r["grad_norm"]), float(r["mean_scale"]), r["limited"] == "1")
        for r in rows
    ]


def atomic_write(path, text: str) -> None:
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def lr_schedule(name: str, base_lr: float, steps: int) -> Callable[[int], float]:
    """``constant`` or ``cosine``: linear warm-up over the first 10% of steps,
    then cosine decay to 10% of ``base_lr``."""
    if name == "constant":
        return lambda step: base_lr
    if name != "cosine":
        raise ConfigError(f"unknown schedule {name!r}")
    warm = max(1, steps // 10)

    def cosine(step: int) -> float:
        if step < warm:
            return base_lr * (step + 1) / warm
        frac = (step - warm) / max(1, steps - warm)
        return base_lr * (0.1 + 0.9 * 0.5 * (1.0 + math.cos(math.pi * frac)))

    return cosine


def train(task, cfg: OptimizerConfig, steps: int, seed: int = 0, schedule: str = "constant") -> TrainTrace:
    if steps < 1:
        raise ConfigError(f"steps must be >= 1, got {steps}")
    started = time.perf_counter()
    params = task.init_params(seed)
    opt = Optimizer(cfg, task.shapes)
    lr_at = lr_schedule(schedule, cfg.lr, steps)
    records = []
    for step in range(steps):
        loss, grads = task.loss_and_grad(params)
        if not math.isfinite(loss) or loss > DIVERGENCE_LOSS:
            raise DivergenceError(step, loss)
        gnorm = math.sqrt(sum(float(np.sum(g * g)) for g in grads))
        params, info = opt.step(params, grads, lr_at(step))
        records.append(TraceRecord(step, loss, gnorm, info.mean_scale, info.limited, info.update_norm))
    final = task.loss(params)
    if not math.isfinite(final) or final > DIVERGENCE_LOSS:
        raise DivergenceError(steps, final)
    return TrainTrace(
        records=records,
        config=cfg.to_dict(),
        task=task.describe(),
        seed=seed,
        schedule=schedule,
        final_loss=final,
        wall_time=time.perf_counter() - started,
    )


def replay_gradients(grads, cfg: OptimizerConfig, shape=None):
    """Feed a fixed gradient sequence through ``apollo_step`` (weights start at
    zero) and return per-step ``(update_norm, limited)`` pairs, where the norm
    is that of the limited, alpha-scaled update."""
    shape = tuple(grads[0].shape) if shape is None else tuple(shape)
    state = init_apollo_state(shape, cfg, rank=min(cfg.rank, min(shape)))
    W = np.zeros(shape)
    out = []
    for G in grads:
        W, _ = apollo_step(W, G, state, cfg)
        out.append((state.prev_scaled_norm, state.limited))
    return out


@dataclass
class CompareRow:
    task: str
    optimizer: str
    lr: float
    status: str
    initial_loss: float
    final_loss: float
    checkpoints: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "task": self.task,
            "optimizer": self.optimizer,
            "lr": self.lr,
            "status": self.status,
            "initial_loss": self.initial_loss,
            "final_loss": self.final_loss,
            "checkpoints": {str(k): v for k, v in self.checkpoints.items()},
        }


def compare(tasks: dict, configs: dict, steps: int, seed: int = 0, checkpoints=None, lrs=None, schedule: str = "constant") -> list:
    """Run every (task, optimizer[, lr]) combination.

    ``tasks`` and ``configs`` map display names to tasks / configs. With
    ``lrs`` each config is additionally swept over those learning rates.
    Divergent runs become rows with ``status="diverged@<step>"``.
    """
    if checkpoints is None:
        checkpoints = sorted({steps // 4, steps // 2, (3 * steps) // 4} - {0})
    rows = []
    for tname, task in tasks.items():
        for oname, cfg in configs.items():
            for lr in (lrs if lrs else [cfg.lr]):
                run_cfg = replace(cfg, lr=lr)
                try:
                    trace = train(task, run_cfg, steps, seed, schedule)
                except DivergenceError as exc:
                    rows.append(CompareRow(tname, oname, lr, f"diverged@{exc.step}", float("nan"), float("nan")))
                    continue
                losses = trace.losses
                rows.append(
                    CompareRow(
                        tname,
                        oname,
                        lr,
                        "ok",
                        float(losses[0]),
                        trace.final_loss,
                        {c: float(losses[c]) for c in checkpoints if c < len(losses)},
                    )
                )
    return rows


def best_rows(rows) -> dict:
    """Best finished run per ``(task, optimizer)``."""
    best = {}
    for row in rows:
        if row.status != "ok":
            continue
        key = (row.task, row.optimizer)
        if key not in best or row.final_loss < best[key].final_loss:
            best[key] = row
    return best


def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["task", "optimizer", "lr", "status", "initial_loss", "final_loss"])
    for r in rows:
        w.writerow([r.task, r.optimizer, repr(r.lr), r.status, repr(r.initial_loss), repr(r.final_loss)])
    return buf.getvalue()
