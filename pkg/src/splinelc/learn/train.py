"""Minibatch Adam training with decoupled weight decay and checkpoint hooks."""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .. import __version__
from ..adversarial import cross_entropy, robust_accuracy_sweep
from ..exceptions import DivergenceError, InputError
from ..lcprobe import batch_lc
from ..netcore import backward, bn_batch_stats, forward

logger = logging.getLogger(__name__)

__all__ = [
    "TrainConfig",
    "Adam",
    "TrajectoryLog",
    "train",
    "log_checkpoints",
    "config_hash",
    "refresh_bn_statistics",
    "evaluate",
    "LCHook",
    "PGDHook",
    "SliceSnapshotHook",
]


def log_checkpoints(steps, n=60):
    """Up to ``n`` log-spaced integer steps in ``[1, steps]`` (denser early), always ending at ``steps``."""
    if steps < 1:
        return []
    pts = np.unique(np.round(np.logspace(0.0, math.log10(steps), int(n))).astype(np.int64))
    return sorted(set(pts.tolist()) | {int(steps)})


def config_hash(obj):
    """Short stable hash of a JSON-serializable object."""
    text = json.dumps(obj, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(text.encode()).hexdigest()[:16]


@dataclass
class TrainConfig:
    steps: int = 1000
    batch_size: int = 200
    lr: float = 1e-3
    weight_decay: float = 0.0
    betas: tuple = (0.9, 0.999)
    eps: float = 1e-8
    seed: int = 0
    checkpoints: Optional[list] = None
    n_checkpoints: int = 60
    loss: str = "cross_entropy"
    weight_decay_mode: str = "decoupled"

    def __post_init__(self):
        if self.steps < 0:
            raise InputError("steps must be >= 0")
        if self.batch_size < 1:
            raise InputError("batch_size must be >= 1")
        if not (self.lr >= 0 and math.isfinite(self.lr)):
            raise InputError("lr must be finite and >= 0")
        if not self.weight_decay >= 0:
            raise InputError("weight_decay must be >= 0")
        b1, b2 = self.betas
        if not (0 <= b1 < 1 and 0 <= b2 < 1):
            raise InputError("Adam betas must lie in [0, 1)")
        if self.weight_decay_mode not in ("decoupled", "l2"):
            raise InputError(f"weight_decay_mode must be decoupled or l2, got {self.weight_decay_mode!r}")
        if self.loss not in ("cross_entropy", "mse"):
            raise InputError(f"loss must be cross_entropy or mse, got {self.loss!r}")
        self.betas = tuple(float(b) for b in self.betas)

    def schedule(self):
        if self.checkpoints is not None:
            return sorted({int(s) for s in self.checkpoints if 1 <= int(s) <= self.steps})
        return log_checkpoints(self.steps, self.n_checkpoints)

    def to_dict(self):
        d = asdict(self)
        d["betas"] = list(self.betas)
        return d


class Adam:
    """Bias-corrected Adam.

    ``decoupled=True`` shrinks the parameters by ``1 - lr * weight_decay``
    outside the moments; ``decoupled=False`` adds ``weight_decay * p`` to the
    gradient instead (classic L2 regularization, rescaled by the moments).
    """

    def __init__(self, params, lr=1e-3, betas=(0.9, 0.999), eps=1e-8, weight_decay=0.0, decoupled=True):
        self.params = list(params)
        self.lr, self.eps, self.weight_decay = lr, eps, weight_decay
        self.decoupled = decoupled
        self.beta1, self.beta2 = betas
        self.m = [np.zeros_like(p) for p in self.params]
        self.v = [np.zeros_like(p) for p in self.params]
        self.t = 0

    def step(self, grads):
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            if self.weight_decay:
                if self.decoupled:
                    p *= 1.0 - self.lr * self.weight_decay
                else:
                    g = g + self.weight_decay * p
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def _loss_and_grad(output, target, kind):
    n = output.shape[0]
    if kind == "cross_entropy":
        loss, g = cross_entropy(output, target)
        return loss, g / n
    with np.errstate(over="ignore", invalid="ignore"):  # divergence is detected by the caller
        diff = output - target
        return float(np.mean(diff * diff)), 2.0 * diff / diff.size


def refresh_bn_statistics(net, X):
    """Set every BN layer's stored mean/std to the statistics of ``X`` propagated through the network."""
    H = np.asarray(X, dtype=np.float64)
    for layer in net.layers:
        raw = H @ layer.weight.T + layer.bias
        if layer.bn is not None:
            mu, sigma = bn_batch_stats(raw)
            layer.bn.mu = mu
            layer.bn.sigma = np.maximum(sigma, layer.bn.epsilon_stab)
            raw = layer.bn.gamma * (raw - layer.bn.mu) / layer.bn.sigma + layer.bn.beta
        H = layer.activation(raw)


def evaluate(net, ds, loss="cross_entropy", batch_size=5000):
    """``(accuracy, loss)`` on ``ds``; accuracy is ``nan`` for regression."""
    if len(ds) == 0:
        return float("nan"), float("nan")
    total, correct = 0.0, 0
    for s in range(0, len(ds), batch_size):
        out = forward(net, ds.inputs[s : s + batch_size]).output
        tgt = ds.labels[s : s + batch_size]
        l, _ = _loss_and_grad(out, tgt, loss)
        total += l * out.shape[0]
        if loss == "cross_entropy":
            correct += int(np.sum(out.argmax(axis=1) == tgt))
    acc = correct / len(ds) if loss == "cross_entropy" else float("nan")
    return acc, total / len(ds)


_LEAD = ["step", "train_acc", "test_acc", "train_loss"]
_LC = ["lc_train_mean", "lc_train_ci", "lc_test_mean", "lc_test_ci", "lc_rand_mean", "lc_rand_ci"]
_TAIL = ["wall_clock", "config_hash"]


@dataclass
class TrajectoryLog:
    config_hash: str
    rows: list = field(default_factory=list)
    details: list = field(default_factory=list)  # per-checkpoint structured hook output for JSON
    meta: dict = field(default_factory=dict)

    def columns(self):
        keys = set()
        for row in self.rows:
            keys.update(row)
        adv = sorted((k for k in keys if k.startswith("adv_acc_eps_")), key=lambda k: float(k[len("adv_acc_eps_"):]))
        fixed = set(_LEAD) | set(_LC) | set(_TAIL) | set(adv)
        extra = sorted(keys - fixed)
        return _LEAD + adv + _LC + extra + _TAIL

    def column(self, name):
        return np.array([row.get(name, np.nan) for row in self.rows], dtype=np.float64)

    @property
    def steps(self):
        return [row["step"] for row in self.rows]

    def to_csv(self, path, wall_clock=True):
        cols = self.columns() if self.rows else _LEAD + _LC + _TAIL
        if not wall_clock:
            cols = [c for c in cols if c != "wall_clock"]
        with open(path, "w", newline="") as f:
            f.write(f"# splinelc {__version__} config_hash={self.config_hash}\n")
            w = csv.writer(f)
            w.writerow(cols)
            for row in self.rows:
                w.writerow([_fmt(row.get(c, "")) for c in cols])

    def to_json(self, path):
        doc = {
            "tool": f"splinelc {__version__}",
            "config_hash": self.config_hash,
            "meta": self.meta,
            "columns": self.columns() if self.rows else _LEAD + _LC + _TAIL,
            "rows": self.rows,
            "details": self.details,
        }
        Path(path).write_text(json.dumps(doc, indent=1, default=_json_default))

    @classmethod
    def from_json(cls, path):
        doc = json.loads(Path(path).read_text())
        return cls(doc["config_hash"], doc["rows"], doc.get("details", []), doc.get("meta", {}))


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(type(o))


def train(net, ds_train, ds_test=None, tcfg=None, hooks=(), run_hash=None):
    """Train ``net`` in place and return the :class:`TrajectoryLog`.

    At every scheduled checkpoint each hook is called as ``hook(step, frozen)``
    with a deep copy of the network and may return a dict of extra columns.
    """
    tcfg = tcfg or TrainConfig()
    n = len(ds_train)
    if n == 0:
        raise InputError("training set is empty")
    if tcfg.batch_size > n:
        raise InputError(f"batch_size={tcfg.batch_size} exceeds training set size {n}")
    if ds_train.dim != net.input_dim:
        raise InputError(f"training inputs have {ds_train.dim} features, network expects {net.input_dim}")
    classification = tcfg.loss == "cross_entropy"
    if classification and not ds_train.is_classification:
        raise InputError("cross_entropy loss needs class labels")
    run_hash = run_hash or config_hash({"train": tcfg.to_dict(), "widths": net.widths, "n": n})
    log = TrajectoryLog(run_hash, meta={"train_config": tcfg.to_dict()})
    schedule = tcfg.schedule()
    has_bn = any(layer.bn is not None for layer in net.layers)
    opt = Adam(net.parameters(), tcfg.lr, tcfg.betas, tcfg.eps, tcfg.weight_decay, tcfg.weight_decay_mode == "decoupled")
    rng = np.random.default_rng(tcfg.seed)
    perm, pos = rng.permutation(n), 0
    t0 = time.perf_counter()
    next_ck = 0
    for step in range(1, tcfg.steps + 1):
        if pos + tcfg.batch_size > n:
            perm, pos = rng.permutation(n), 0
        idx = perm[pos : pos + tcfg.batch_size]
        pos += tcfg.batch_size
        xb, yb = ds_train.inputs[idx], ds_train.labels[idx]
        trace = forward(net, xb, training=has_bn)
        loss, g = _loss_and_grad(trace.output, yb, tcfg.loss)
        if not math.isfinite(loss):
            raise DivergenceError(f"non-finite training loss at step {step}", log=log, step=step)
        _, grads = backward(net, xb, g, trace=trace, training=has_bn)
        opt.step([a for lg in grads for a in lg.arrays()])
        if next_ck < len(schedule) and step == schedule[next_ck]:
            next_ck += 1
            if has_bn:
                refresh_bn_statistics(net, ds_train.inputs)
            row, detail = _checkpoint(net, step, ds_train, ds_test, tcfg.loss, hooks)
            row["wall_clock"] = round(time.perf_counter() - t0, 3)
            row["config_hash"] = run_hash
            if not math.isfinite(row["train_loss"]):
                raise DivergenceError(f"non-finite training loss at checkpoint {step}", log=log, step=step)
            log.rows.append(row)
            log.details.append(detail)
            logger.info("step %d train_acc=%.4f test_acc=%.4f loss=%.4g", step, row["train_acc"], row["test_acc"], row["train_loss"])
    if has_bn:
        refresh_bn_statistics(net, ds_train.inputs)
    return log


def _checkpoint(net, step, ds_train, ds_test, loss, hooks):
    frozen = net.copy()
    train_acc, train_loss = evaluate(frozen, ds_train, loss)
    test_acc, test_loss = evaluate(frozen, ds_test, loss) if ds_test is not None else (float("nan"), float("nan"))
    row = {"step": step, "train_acc": train_acc, "test_acc": test_acc, "train_loss": train_loss, "test_loss": test_loss}
    detail = {"step": step}
    for hook in hooks:
        out = hook(step, frozen)
        if out:
            row.update({k: v for k, v in out.items() if not isinstance(v, (dict, list, np.ndarray))})
            detail.update({k: v for k, v in out.items() if isinstance(v, (dict, list, np.ndarray))})
    return row, detail


_CLASS_KEY = {"train": "train", "test": "test", "random": "rand"}


class LCHook:
    """Batch LC at fixed probe points for each point class (``train``, ``test``, ``random``)."""

    def __init__(self, points, cfg, n_jobs=1):
        self.points = {k: np.asarray(v, dtype=np.float64) for k, v in points.items()}
        self.cfg = cfg
        self.n_jobs = n_jobs

    def __call__(self, step, net):
        out = {}
        for cls, X in self.points.items():
            agg = batch_lc(net, X, self.cfg, cls, n_jobs=self.n_jobs)
            key = _CLASS_KEY[cls]
            out[f"lc_{key}_mean"] = agg.mean
            out[f"lc_{key}_ci"] = agg.ci_half_width
            out[f"lc_{key}_layers"] = agg.layer_means().tolist()
        return out


class PGDHook:
    """Robust accuracy for a list of attack configs, with nested budgets."""

    def __init__(self, X, y, configs):
        self.X = np.asarray(X, dtype=np.float64)
        self.y = np.asarray(y)
        self.configs = list(configs)

    def __call__(self, step, net):
        accs = robust_accuracy_sweep(net, self.X, self.y, self.configs)
        return {f"adv_acc_eps_{eps:g}": acc for eps, acc in accs.items()}


class SliceSnapshotHook:
    """Exact partition of a slice written as JSON + SVG at chosen checkpoints."""

    def __init__(self, slc, out_dir, steps=None, extra=None, header=None):
        self.slice = slc
        self.out_dir = Path(out_dir)
        self.steps = None if steps is None else set(int(s) for s in steps)
        self.extra = extra or {}
        self.header = header

    def __call__(self, step, net):
        if self.steps is not None and step not in self.steps:
            return {}
        from ..slicegeom import argmax_boundary, compute_partition, emit

        part = compute_partition(net, self.slice)
        part.boundary_segments = argmax_boundary(part) if net.output_dim >= 2 else []
        self.out_dir.mkdir(parents=True, exist_ok=True)
        stem = self.out_dir / f"slice_step{step:08d}"
        emit(part, stem.with_suffix(".json"), "json", extra=self.extra)
        emit(part, stem.with_suffix(".svg"), "svg", header=self.header)
        return {"slice_regions": part.region_count}
