"""Built-in self-checks of the probe and partition machinery.

Each check builds its own fixture, compares against an independent reference
and reports ``{"name", "passed", "detail", "seconds"}``.  The battery is what
``splinelc validate`` runs.
"""

from __future__ import annotations

import time

import numpy as np

from . import __version__
from . import lcprobe
from .netcore import Layer, Network, bn_distance_check, forward, init_network
from .slicegeom import Slice, compute_partition

__all__ = [
    "check_zero_bias_recovery",
    "check_shift_sweep",
    "check_eccentricity",
    "check_bn_identity",
    "check_partition_oracle",
    "grid_pattern_count",
    "run_validation",
    "CHECKS",
]


def zero_bias_linear_mlp(width=400, depth=50, input_dim=784, seed=0):
    """Identity-activation MLP with zero biases: every hyperplane passes through the origin."""
    rng = np.random.default_rng(seed)
    dims = [input_dim] + [width] * depth
    layers = [Layer(rng.standard_normal((b, a)) / np.sqrt(a), np.zeros(b), "identity") for a, b in zip(dims[:-1], dims[1:])]
    # a final logit layer, which LC does not count
    layers.append(Layer(rng.standard_normal((10, width)) / np.sqrt(width), np.zeros(10), "identity"))
    return Network(layers)


def check_zero_bias_recovery(width=400, depth=50, input_dim=784, radii=(1e-4, 1e-3, 1e-2, 0.1, 1.0, 10.0), dims=(2, 10, 25, 50, 100, 200), seed=0):
    net = zero_bias_linear_mlp(width, depth, input_dim, seed)
    x = np.zeros(input_dim)
    failures = []
    for r in radii:
        for P in dims:
            rep = lcprobe.local_complexity(net, x, lcprobe.ProbeConfig(P, r, seed))
            if not np.all(rep.per_layer == width):
                failures.append({"r": r, "P": P, "min_layer_count": int(rep.per_layer.min())})
    return not failures, {"cases": len(radii) * len(dims), "failures": failures}


def check_shift_sweep(width=100, depth=18, input_dim=784, slope=0.01, radii=(0.1, 5.0), dims=(10, 20), n_probes=32, seed=0):
    net = init_network([input_dim] + [width] * depth + [10], f"leaky_relu:{slope}", seed=seed)
    start, end = np.zeros(input_dim), np.full(input_dim, 10.0)
    cases = []
    for r in radii:
        for P in dims:
            sweep = lcprobe.shift_sweep(net, start, end, 2, lcprobe.ProbeConfig(P, r, seed), n_probes=n_probes)
            cases.append({"r": r, "P": P, "lc_start": sweep[0].mean, "lc_end": sweep[-1].mean})
    return all(c["lc_start"] > c["lc_end"] for c in cases), {"cases": cases}


def check_eccentricity(dims=(2, 3, 10, 25), radius=0.05, input_dim=32, seed=0, tol=1e-10):
    expected = 2.0 * np.sqrt(2.0) * radius
    worst = 0.0
    random_net = init_network([input_dim, 16, 16, 2], "relu", seed=seed)
    identity_net = Network([Layer(np.eye(input_dim), np.zeros(input_dim), "identity") for _ in range(3)])
    for P in dims:
        cfg = lcprobe.ProbeConfig(P, radius, seed + P)
        x = np.random.default_rng(seed + P).standard_normal(input_dim)
        rep = lcprobe.deformation(random_net, x, cfg)
        worst = max(worst, abs(rep.eccentricity[0] - expected), abs(rep.diameter[0] - expected))
        ident = lcprobe.deformation(identity_net, x, cfg)
        worst = max(worst, float(np.max(np.abs(ident.eccentricity - expected))), float(np.max(np.abs(ident.diameter - expected))))
    return worst < tol, {"expected": expected, "max_abs_error": worst}


def check_bn_identity(instances=100, input_dim=20, width=8, batch=64, seed=0, tol=1e-10):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for i in range(instances):
        W = rng.standard_normal((width, input_dim)) * rng.uniform(0.1, 5.0)
        net = Network([Layer(W, rng.standard_normal(width), "relu")])
        pts = rng.standard_normal((batch, input_dim)) * rng.uniform(0.1, 3.0) + rng.standard_normal(input_dim)
        lhs, rhs = bn_distance_check(net, 0, i % width, pts)
        worst = max(worst, abs(lhs - rhs) / rhs)
    return worst < tol, {"instances": instances, "max_rel_error": worst}


def grid_pattern_count(net, slc, n=2000, chunk=250_000):
    """Distinct joint activation patterns of the nonlinear hidden neurons on an ``n x n`` grid of cell centres."""
    u0, u1, v0, v1 = slc.bounds
    us = u0 + (np.arange(n) + 0.5) * (u1 - u0) / n
    vs = v0 + (np.arange(n) + 0.5) * (v1 - v0) / n
    uu, vv = np.meshgrid(us, vs)
    U = np.column_stack([uu.ravel(), vv.ravel()])
    seen = set()
    for s in range(0, U.shape[0], chunk):
        tr = forward(net, slc.to_input(U[s : s + chunk]))
        bits = np.concatenate([z > 0 for z, layer in zip(tr.preacts, net.layers) if layer.activation.kind != "identity"], axis=1)
        packed = np.ascontiguousarray(np.packbits(bits, axis=1))
        seen.update(np.unique(packed.view(np.dtype((np.void, packed.shape[1]))).ravel()).tolist())
    return len(seen)


def random_two_layer_net(seed, max_neurons=32):
    rng = np.random.default_rng(seed)
    w1 = int(rng.integers(4, max_neurons // 2 + 1))
    w2 = int(rng.integers(4, max_neurons - w1 + 1))
    return init_network([2, w1, w2, 2], "relu", seed=seed, scale=2.0)


def check_partition_oracle(n_nets=20, grid=2000, tol=0.02, points_per_region=100, seed=0):
    slc = Slice(np.zeros(2), np.eye(2), (-1.0, 1.0, -1.0, 1.0))
    rng = np.random.default_rng(seed)
    cases, worst_affine = [], 0.0
    for i in range(n_nets):
        net = random_two_layer_net(seed + i)
        part = compute_partition(net, slc)
        oracle = grid_pattern_count(net, slc, grid)
        for reg in part.regions:
            w = rng.dirichlet(np.ones(reg.polygon.shape[0]), size=points_per_region)
            U = w @ reg.polygon
            err = np.abs(U @ reg.A.T + reg.c - net(slc.to_input(U))).max()
            worst_affine = max(worst_affine, float(err))
        cases.append({"regions": part.region_count, "grid_patterns": oracle, "rel_diff": abs(part.region_count - oracle) / oracle})
    ok = all(c["rel_diff"] <= tol for c in cases) and worst_affine < 1e-8
    return ok, {"cases": cases, "max_affine_error": worst_affine}


CHECKS = {
    "zero_bias_recovery": check_zero_bias_recovery,
    "shift_sweep": check_shift_sweep,
    "eccentricity": check_eccentricity,
    "bn_identity": check_bn_identity,
    "partition_oracle": lambda: check_partition_oracle(n_nets=5, grid=1000),
}


def run_validation(names=None):
    """Run the named checks (default: all) and return a JSON-ready report."""
    names = list(CHECKS) if names is None else list(names)
    results = []
    for name in names:
        t0 = time.perf_counter()
        passed, detail = CHECKS[name]()
        results.append({"name": name, "passed": bool(passed), "detail": detail, "seconds": round(time.perf_counter() - t0, 3)})
    return {"tool": f"splinelc {__version__}", "passed": all(r["passed"] for r in results), "checks": results}
