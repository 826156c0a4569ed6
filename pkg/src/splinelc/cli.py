"""Command line entry point: ``splinelc {train,lc,slice,attack,validate}``.

Exit codes: 0 success, 1 internal error (or a failed validation), 2 input or
configuration error, 3 unsupported feature.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import shutil
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import __version__
from .adversarial import AttackConfig, robust_accuracy_sweep
from .exceptions import ConfigError, InputError, SplineLCError
from .lcprobe import Z_99, ProbeConfig, _batch_counts, random_box_points
from .learn.datasets import (
    Dataset,
    load_mnist_idx,
    make_modular_addition,
    make_piecewise_regression,
    make_xor_clusters,
    randomize_labels,
    read_idx_images,
    read_idx_labels,
)
from .learn.train import LCHook, PGDHook, SliceSnapshotHook, TrainConfig, config_hash, train
from .netcore import init_network, load_weights, save_weights
from .slicegeom import Slice, argmax_boundary, boundary_density, compute_partition, emit, slice_through

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - exercised on 3.10 only
    import tomli as tomllib

logger = logging.getLogger("splinelc")

# --------------------------------------------------------------------------
# experiment configuration

_SECTIONS = {
    "": {"seed", "output_dir", "arch", "data", "train", "probe", "attack", "slice"},
    "arch": {"widths", "activation", "init_scale"},
    "data": {"source", "train_images", "train_labels", "test_images", "test_labels", "n_train", "n_test",
             "label_noise", "class_filter", "p", "train_fraction", "spread"},
    "train": {"steps", "batch_size", "lr", "weight_decay", "weight_decay_mode", "betas", "eps",
              "n_checkpoints", "checkpoints", "loss"},
    "probe": {"P", "r", "n_points", "classes"},
    "attack": {"epsilon", "alpha", "steps", "random_start", "n_points", "data_range"},
    "slice": {"anchors", "margin", "steps"},
}
_SOURCES = ("mnist", "piecewise", "xor", "modular")


def _check_keys(table, section):
    if not isinstance(table, dict):
        raise ConfigError(f"[{section}] must be a table", section)
    unknown = sorted(set(table) - _SECTIONS[section])
    if unknown:
        name = f"{section}.{unknown[0]}" if section else unknown[0]
        raise ConfigError("unknown field", name)


def _get(table, key, section, kind, default):
    """Typed lookup; the error names ``section.key``."""
    name = f"{section}.{key}" if section else key
    if key not in table:
        if default is _REQUIRED:
            raise ConfigError("required field is missing", name)
        return default
    value = table[key]
    ok = {
        int: isinstance(value, int) and not isinstance(value, bool),
        float: isinstance(value, (int, float)) and not isinstance(value, bool),
        str: isinstance(value, str),
        bool: isinstance(value, bool),
        list: isinstance(value, list),
    }[kind]
    if not ok:
        raise ConfigError(f"must be {kind.__name__}, got {value!r}", name)
    return float(value) if kind is float else value


_REQUIRED = object()


def load_config(path, overrides=None):
    """Parse a TOML experiment file into a fully resolved, validated dict."""
    path = Path(path)
    try:
        raw = tomllib.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}", "path") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}", "syntax") from None
    overrides = overrides or {}
    _check_keys(raw, "")
    seed = overrides.get("seed", _get(raw, "seed", "", int, 0))
    base = path.parent

    arch = raw.get("arch", {})
    _check_keys(arch, "arch")
    widths = _get(arch, "widths", "arch", list, [200, 200, 200, 200])
    if not widths or not all(isinstance(w, int) and w >= 1 for w in widths):
        raise ConfigError("arch.widths must be a non-empty list of positive integers", "arch.widths")
    cfg = {
        "seed": seed,
        "output_dir": overrides.get("out") or _get(raw, "output_dir", "", str, "runs/experiment"),
        "arch": {
            "widths": widths,
            "activation": _get(arch, "activation", "arch", str, "relu"),
            "init_scale": _get(arch, "init_scale", "arch", float, 1.0),
        },
    }

    data = raw.get("data", {})
    _check_keys(data, "data")
    source = _get(data, "source", "data", str, _REQUIRED)
    if source not in _SOURCES:
        raise ConfigError(f"data.source must be one of {', '.join(_SOURCES)}, got {source!r}", "data.source")
    dcfg = {"source": source, "label_noise": _get(data, "label_noise", "data", float, 0.0)}
    if not 0.0 <= dcfg["label_noise"] <= 1.0:
        raise ConfigError("data.label_noise must lie in [0, 1]", "data.label_noise")
    if source == "mnist":
        for key in ("train_images", "train_labels", "test_images", "test_labels"):
            p = _get(data, key, "data", str, _REQUIRED if key.startswith("train") else None)
            dcfg[key] = None if p is None else str(p if Path(p).is_absolute() else base / p)
        dcfg["n_train"] = _get(data, "n_train", "data", int, None)
        dcfg["n_test"] = _get(data, "n_test", "data", int, None)
        dcfg["class_filter"] = _get(data, "class_filter", "data", list, None)
    elif source == "modular":
        dcfg["p"] = _get(data, "p", "data", int, 13)
        dcfg["train_fraction"] = _get(data, "train_fraction", "data", float, 1.0)
        if not 0.0 < dcfg["train_fraction"] <= 1.0:
            raise ConfigError("data.train_fraction must lie in (0, 1]", "data.train_fraction")
    else:
        dcfg["n_train"] = _get(data, "n_train", "data", int, 4096 if source == "piecewise" else 1000)
        dcfg["n_test"] = _get(data, "n_test", "data", int, 1000)
        if source == "xor":
            dcfg["spread"] = _get(data, "spread", "data", float, 0.15)
    cfg["data"] = dcfg

    tr = raw.get("train", {})
    _check_keys(tr, "train")
    default_loss = "mse" if source == "piecewise" else "cross_entropy"
    cfg["train"] = {
        "steps": overrides.get("steps", _get(tr, "steps", "train", int, 1000)),
        "batch_size": _get(tr, "batch_size", "train", int, 200),
        "lr": _get(tr, "lr", "train", float, 1e-3),
        "weight_decay": _get(tr, "weight_decay", "train", float, 0.0),
        "weight_decay_mode": _get(tr, "weight_decay_mode", "train", str, "decoupled"),
        "betas": _get(tr, "betas", "train", list, [0.9, 0.999]),
        "eps": _get(tr, "eps", "train", float, 1e-8),
        "n_checkpoints": _get(tr, "n_checkpoints", "train", int, 60),
        "checkpoints": _get(tr, "checkpoints", "train", list, None),
        "loss": _get(tr, "loss", "train", str, default_loss),
    }

    if "probe" in raw:
        pr = raw["probe"]
        _check_keys(pr, "probe")
        classes = _get(pr, "classes", "probe", list, ["train", "test", "random"])
        bad = [c for c in classes if c not in ("train", "test", "random")]
        if bad:
            raise ConfigError(f"probe.classes has unknown class {bad[0]!r}", "probe.classes")
        cfg["probe"] = {
            "P": _get(pr, "P", "probe", int, 25),
            "r": _get(pr, "r", "probe", float, 0.005),
            "n_points": _get(pr, "n_points", "probe", int, 1000),
            "classes": classes,
        }

    attacks = raw.get("attack", [])
    if isinstance(attacks, dict):
        attacks = [attacks]
    cfg["attack"] = []
    for i, at in enumerate(attacks):
        _check_keys(at, "attack")
        eps = _get(at, "epsilon", "attack", float, _REQUIRED)
        cfg["attack"].append({
            "epsilon": eps,
            "alpha": _get(at, "alpha", "attack", float, min(0.0156, eps) if eps > 0 else 0.0156),
            "steps": _get(at, "steps", "attack", int, 100),
            "random_start": _get(at, "random_start", "attack", bool, True),
            "n_points": _get(at, "n_points", "attack", int, 1000),
            "data_range": _get(at, "data_range", "attack", list, None),
        })

    if "slice" in raw:
        sl = raw["slice"]
        _check_keys(sl, "slice")
        anchors = _get(sl, "anchors", "slice", list, _REQUIRED)
        if len(anchors) != 3 or not all(isinstance(a, int) and a >= 0 for a in anchors):
            raise ConfigError("slice.anchors must be three training-set indices", "slice.anchors")
        cfg["slice"] = {
            "anchors": anchors,
            "margin": _get(sl, "margin", "slice", float, 0.1),
            "steps": _get(sl, "steps", "slice", list, None),
        }
    return cfg


def build_datasets(dcfg, seed):
    """``(train, test_or_None)`` for a resolved data section."""
    source = dcfg["source"]
    if source == "mnist":
        train_ds = load_mnist_idx(dcfg["train_images"], dcfg["train_labels"], dcfg["n_train"], dcfg["class_filter"], "train")
        test_ds = None
        if dcfg["test_images"] and dcfg["test_labels"]:
            test_ds = load_mnist_idx(dcfg["test_images"], dcfg["test_labels"], dcfg["n_test"], dcfg["class_filter"], "test")
    elif source == "piecewise":
        train_ds = make_piecewise_regression(dcfg["n_train"], seed)
        test_ds = make_piecewise_regression(dcfg["n_test"], seed + 1, "test")
    elif source == "xor":
        train_ds = make_xor_clusters(dcfg["n_train"], seed, dcfg["spread"])
        test_ds = make_xor_clusters(dcfg["n_test"], seed + 1, dcfg["spread"], "test")
    else:
        full = make_modular_addition(dcfg["p"])
        if dcfg["train_fraction"] < 1.0:
            perm = np.random.default_rng(seed).permutation(len(full))
            k = max(1, int(round(dcfg["train_fraction"] * len(full))))
            train_ds, test_ds = full.subset(np.sort(perm[:k])), full.subset(np.sort(perm[k:]), "test")
        else:
            train_ds, test_ds = full, None
    if len(train_ds) == 0:
        raise ConfigError("training set is empty", "data")
    if dcfg["label_noise"] > 0:
        if not train_ds.is_classification:
            raise ConfigError("data.label_noise needs a classification source", "data.label_noise")
        train_ds = randomize_labels(train_ds, dcfg["label_noise"], seed=seed)
    return train_ds, test_ds


def _train_config(cfg):
    t = dict(cfg["train"])
    t["betas"] = tuple(t["betas"])
    try:
        return TrainConfig(seed=cfg["seed"], **t)
    except InputError as exc:
        raise ConfigError(str(exc), "train") from None


def _header_line(run_hash):
    return f"splinelc {__version__} config_hash={run_hash}"


def _stage_dir(out):
    out = Path(out)
    if out.exists():
        raise InputError(f"output directory already exists: {out}")
    out.parent.mkdir(parents=True, exist_ok=True)
    return Path(tempfile.mkdtemp(prefix=f".{out.name}.", dir=out.parent))


def run_experiment(cfg, n_jobs=1):
    """Train with the configured hooks and write every artifact into ``cfg['output_dir']`` atomically."""
    # where the run is written does not change what it computes
    run_hash = config_hash({k: v for k, v in cfg.items() if k != "output_dir"})
    train_ds, test_ds = build_datasets(cfg["data"], cfg["seed"])
    tcfg = _train_config(cfg)
    if tcfg.loss == "cross_entropy" and not train_ds.is_classification:
        raise ConfigError("cross_entropy loss needs a classification source", "train.loss")
    if tcfg.batch_size > len(train_ds):
        raise ConfigError(f"train.batch_size={tcfg.batch_size} exceeds the {len(train_ds)} training samples", "train.batch_size")
    out_dim = train_ds.num_classes if train_ds.is_classification else train_ds.labels.shape[1]
    arch = [train_ds.dim, *cfg["arch"]["widths"], out_dim]
    try:
        net = init_network(arch, cfg["arch"]["activation"], seed=cfg["seed"], scale=cfg["arch"]["init_scale"])
    except InputError as exc:
        raise ConfigError(str(exc), "arch") from None

    hooks = []
    if "probe" in cfg:
        pc = cfg["probe"]
        if pc["P"] > train_ds.dim:
            raise ConfigError(f"probe.P={pc['P']} exceeds the input dimension {train_ds.dim}", "probe.P")
        try:
            probe = ProbeConfig(pc["P"], pc["r"], cfg["seed"])
        except InputError as exc:
            raise ConfigError(str(exc), "probe") from None
        n = pc["n_points"]
        pools = {"train": train_ds.inputs, "test": None if test_ds is None else test_ds.inputs}
        points = {}
        for cls in pc["classes"]:
            if cls == "random":
                points[cls] = random_box_points(train_ds.inputs, n, seed=cfg["seed"] + 1)
            elif pools[cls] is not None and len(pools[cls]) >= 2:
                points[cls] = pools[cls][:n]
        hooks.append(LCHook(points, probe, n_jobs=n_jobs))
    if cfg["attack"]:
        if not train_ds.is_classification:
            raise ConfigError("attacks need a classification source", "attack")
        eval_ds = test_ds if test_ds is not None and len(test_ds) else train_ds
        box = (float(train_ds.inputs.min()), float(train_ds.inputs.max()))
        configs, n_pts = [], max(a["n_points"] for a in cfg["attack"])
        for a in cfg["attack"]:
            rng_ = tuple(a["data_range"]) if a["data_range"] else ((0.0, 1.0) if cfg["data"]["source"] in ("mnist", "modular") else box)
            try:
                configs.append(AttackConfig(a["epsilon"], a["alpha"], a["steps"], cfg["seed"], rng_, a["random_start"]))
            except InputError as exc:
                raise ConfigError(str(exc), "attack") from None
        hooks.append(PGDHook(eval_ds.inputs[:n_pts], eval_ds.labels[:n_pts], configs))

    stage = _stage_dir(cfg["output_dir"])
    try:
        if "slice" in cfg:
            sc = cfg["slice"]
            if max(sc["anchors"]) >= len(train_ds):
                raise ConfigError("slice.anchors index beyond the training set", "slice.anchors")
            slc = slice_through(*train_ds.inputs[sc["anchors"]], margin=sc["margin"])
            steps = sc["steps"] if sc["steps"] is not None else [tcfg.steps]
            hooks.append(SliceSnapshotHook(slc, stage / "slices", steps, extra={"config_hash": run_hash, "tool": f"splinelc {__version__}"},
                                           header=_header_line(run_hash)))
        save_weights(net, stage / "weights_init.spln")
        log = train(net, train_ds, test_ds, tcfg, hooks, run_hash=run_hash)
        log.meta["config"] = cfg
        log.to_csv(stage / "trajectory.csv")
        log.to_json(stage / "trajectory.json")
        save_weights(net, stage / "weights.spln")
        manifest = {
            "tool": f"splinelc {__version__}",
            "config_hash": run_hash,
            "config": cfg,
            "files": sorted(str(p.relative_to(stage)) for p in stage.rglob("*") if p.is_file()),
        }
        (stage / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True))
        os.rename(stage, cfg["output_dir"])
    except BaseException:
        shutil.rmtree(stage, ignore_errors=True)
        raise
    return Path(cfg["output_dir"]), log


# --------------------------------------------------------------------------
# point and label sources for the single-shot subcommands


def _load_matrix(path):
    path = Path(path)
    if not path.exists():
        raise InputError(f"no such file: {path}")
    if path.suffix == ".npy":
        return np.load(path)
    return np.loadtxt(path, delimiter="," if path.suffix == ".csv" else None, ndmin=2)


def _points_from_args(args, net):
    if args.points:
        X = _load_matrix(args.points)
    elif args.images:
        X = read_idx_images(args.images).reshape(-1, net.input_dim).astype(np.float64) / 255.0
    elif args.random:
        lo, hi = args.box
        X = random_box_points(np.array([[lo] * net.input_dim, [hi] * net.input_dim]), args.random, seed=args.seed)
    else:
        raise InputError("give one of --points, --images or --random")
    if args.limit is not None:
        X = X[: args.limit]
    return np.asarray(X, dtype=np.float64)


def _write_csv(rows, header, path, comment):
    buf = io.StringIO()
    buf.write(f"# {comment}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    if path in (None, "-"):
        sys.stdout.write(buf.getvalue())
    else:
        Path(path).write_text(buf.getvalue())


def _ci(values):
    values = np.asarray(values, dtype=np.float64)
    mean = float(values.mean())
    half = Z_99 * float(values.std(ddof=1)) / math.sqrt(len(values)) if len(values) > 1 else 0.0
    return mean, mean - half, mean + half


# --------------------------------------------------------------------------
# subcommands


def cmd_train(args):
    overrides = {k: v for k, v in (("seed", args.seed), ("out", args.out), ("steps", args.steps)) if v is not None}
    cfg = load_config(args.config, overrides)
    out, log = run_experiment(cfg, n_jobs=args.threads)
    last = log.rows[-1] if log.rows else None
    summary = f"wrote {out} ({len(log.rows)} checkpoints)"
    if last is not None:
        summary += f"; final train_acc={last['train_acc']:.4f} train_loss={last['train_loss']:.4g}"
    print(summary)
    return 0


def cmd_lc(args):
    net = load_weights(args.weights)
    cfg = ProbeConfig(args.P, args.r, args.seed or 0)
    if cfg.P > net.input_dim:
        raise InputError(f"-P {cfg.P} exceeds the network input dimension {net.input_dim}")
    X = _points_from_args(args, net)
    if X.ndim != 2 or X.shape[1] != net.input_dim:
        raise InputError(f"points must have {net.input_dim} columns, got shape {X.shape}")
    if X.shape[0] < 2:
        raise InputError("need at least 2 points")
    counts = _batch_counts(net, X, cfg, range(X.shape[0]))
    point_class = args.point_class or ("random" if args.random else "train")
    rows = []
    for k in range(counts.shape[1]):
        rows.append([k, point_class, *(repr(v) for v in _ci(counts[:, k]))])
    rows.append(["total", point_class, *(repr(v) for v in _ci(counts.sum(axis=1)))])
    run_hash = config_hash({"weights": Path(args.weights).name, "P": cfg.P, "r": cfg.r, "seed": cfg.seed, "n": X.shape[0]})
    _write_csv(rows, ["layer", "class", "mean", "ci_lo", "ci_hi"], args.out, _header_line(run_hash))
    if args.json:
        doc = {"tool": f"splinelc {__version__}", "config_hash": run_hash, "class": point_class,
               "totals": counts.sum(axis=1).tolist(), "per_layer": counts.tolist()}
        Path(args.json).write_text(json.dumps(doc))
    return 0


def _slice_from_args(args, net):
    if args.anchors:
        A = _load_matrix(args.anchors)
        if A.shape != (3, net.input_dim):
            raise InputError(f"--anchors needs 3 rows of {net.input_dim} values, got shape {A.shape}")
        return slice_through(*A, margin=args.margin)
    if net.input_dim < 2:
        raise InputError("slices need at least 2 input dimensions")
    basis = np.eye(net.input_dim)[:, :2]
    return Slice(np.zeros(net.input_dim), basis, tuple(args.bounds))


def cmd_slice(args):
    net = load_weights(args.weights)
    slc = _slice_from_args(args, net)
    part = compute_partition(net, slc)
    part.boundary_segments = argmax_boundary(part) if net.output_dim >= 2 else []
    dens = boundary_density(part, part.boundary_segments)
    run_hash = config_hash({"weights": Path(args.weights).name, "bounds": list(slc.bounds), "origin": slc.origin.tolist()})
    prefix = Path(args.out or "slice")
    prefix.parent.mkdir(parents=True, exist_ok=True)
    emit(part, prefix.with_suffix(".json"), "json", extra={"config_hash": run_hash, "tool": f"splinelc {__version__}"})
    emit(part, prefix.with_suffix(".svg"), "svg", color=args.color, seed=args.seed or 0, header=_header_line(run_hash))
    print(f"regions: {part.region_count}")
    print(f"near-boundary density: {dens['near']:.6g}")
    print(f"far-from-boundary density: {dens['far']:.6g}")
    return 0


def cmd_attack(args):
    net = load_weights(args.weights)
    if args.images:
        X = read_idx_images(args.images).reshape(-1, net.input_dim).astype(np.float64) / 255.0
        if not args.labels:
            raise InputError("--images needs --labels")
        y = read_idx_labels(args.labels).astype(np.int64)
    elif args.points:
        X = _load_matrix(args.points)
        if not args.labels:
            raise InputError("--points needs --labels")
        y = _load_matrix(args.labels).reshape(-1).astype(np.int64)
    else:
        raise InputError("give --images/--labels or --points/--labels")
    if len(X) != len(y):
        raise InputError(f"{len(X)} inputs but {len(y)} labels")
    if args.limit is not None:
        X, y = X[: args.limit], y[: args.limit]
    configs = []
    for eps in args.epsilon:
        alpha = args.alpha if eps == 0 else min(args.alpha, eps)
        configs.append(AttackConfig(eps, alpha, args.steps, args.seed or 0, tuple(args.range), not args.no_random_start))
    clean = float(np.mean(net.predict(X) == y))
    accs = robust_accuracy_sweep(net, X, y, configs)
    rows = [[repr(c.epsilon), repr(c.alpha), c.steps, repr(clean), repr(accs[c.epsilon])] for c in sorted(configs, key=lambda c: c.epsilon)]
    run_hash = config_hash({"weights": Path(args.weights).name, "eps": args.epsilon, "alpha": args.alpha, "steps": args.steps, "seed": args.seed or 0, "n": len(X)})
    _write_csv(rows, ["epsilon", "alpha", "steps", "clean_acc", "robust_acc"], args.out, _header_line(run_hash))
    return 0


def cmd_validate(args):
    from .validation import CHECKS, run_validation

    names = args.check or None
    if names:
        unknown = [n for n in names if n not in CHECKS]
        if unknown:
            raise InputError(f"unknown check {unknown[0]!r}; choose from {', '.join(CHECKS)}")
    report = run_validation(names)
    for r in report["checks"]:
        print(f"{'PASS' if r['passed'] else 'FAIL'} {r['name']} ({r['seconds']:.2f}s)", file=sys.stderr)
    text = json.dumps(report, indent=1)
    if args.out:
        Path(args.out).write_text(text)
    else:
        print(text)
    return 0 if report["passed"] else 1


# --------------------------------------------------------------------------
# argument parsing


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="global seed (overrides the config)")
    common.add_argument("--threads", type=_positive_int, default=os.cpu_count() or 1, help="worker threads for LC probes")
    common.add_argument("--out", default=None, help="output directory (train), file (lc, attack, validate) or prefix (slice)")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")

    parser = argparse.ArgumentParser(prog="splinelc", description="Local complexity, exact slices and robustness of ReLU MLPs.")
    parser.add_argument("--version", action="version", version=f"splinelc {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", parents=[common], help="train with LC / PGD / slice checkpoints from a TOML config")
    p.add_argument("config", help="experiment TOML file")
    p.add_argument("--steps", type=int, default=None, help="override train.steps")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("lc", parents=[common], help="local complexity with 99%% CI per layer")
    p.add_argument("weights", help="weights file (.spln)")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--points", help="points as .npy, .csv or whitespace text")
    src.add_argument("--images", help="IDX image file (pixels scaled to [0, 1])")
    src.add_argument("--random", type=_positive_int, help="number of uniform random points in --box")
    p.add_argument("--box", type=float, nargs=2, default=(0.0, 1.0), metavar=("LO", "HI"))
    p.add_argument("--limit", type=int, default=None)
    p.add_argument("-P", type=_positive_int, default=25, help="neighborhood dimensionality")
    p.add_argument("-r", type=float, default=0.005, help="neighborhood radius")
    p.add_argument("--class", dest="point_class", choices=("train", "test", "random"), default=None,
                   help="label for the rows (default: random for --random, else train)")
    p.add_argument("--json", help="also write per-point totals as JSON")
    p.set_defaults(func=cmd_lc)

    p = sub.add_parser("slice", parents=[common], help="exact partition of a 2D slice (SVG + JSON)")
    p.add_argument("weights")
    p.add_argument("--anchors", help="3 x D points (.npy/.csv) the slice passes through")
    p.add_argument("--margin", type=float, default=0.1)
    p.add_argument("--bounds", type=float, nargs=4, default=(-1.0, 1.0, -1.0, 1.0), metavar=("U0", "U1", "V0", "V1"),
                   help="box on the first two input axes when no anchors are given")
    p.add_argument("--color", choices=("slope", "random"), default="slope")
    p.set_defaults(func=cmd_slice)

    p = sub.add_parser("attack", parents=[common], help="PGD robust accuracy per epsilon")
    p.add_argument("weights")
    p.add_argument("--images")
    p.add_argument("--points")
    p.add_argument("--labels")
    p.add_argument("--limit", type=int, default=None)
    p.add_argument("--epsilon", type=float, nargs="+", default=[0.06, 0.10, 0.13, 0.16, 0.20])
    p.add_argument("--alpha", type=float, default=0.0156)
    p.add_argument("--steps", type=_positive_int, default=100)
    p.add_argument("--range", type=float, nargs=2, default=(0.0, 1.0), metavar=("LO", "HI"))
    p.add_argument("--no-random-start", action="store_true")
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("validate", parents=[common], help="run the built-in validation battery")
    p.add_argument("--check", action="append", help="run only this check (repeatable)")
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except SplineLCError as exc:
        print(f"splinelc {args.command}: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except Exception as exc:  # pragma: no cover - last-resort guard
        logger.debug("internal error", exc_info=True)
        print(f"splinelc {args.command}: internal error: {exc!r}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
