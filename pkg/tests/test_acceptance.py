"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Criteria 7 to 9 train networks and are marked ``slow``; criterion 8 runs for
roughly fifteen minutes on a single core.
"""

import time
from pathlib import Path

import numpy as np
import pytest
from _report import report
from sklearn.datasets import make_moons

from splinelc import validation
from splinelc.adversarial import AttackConfig, pgd_attack_batch
from splinelc.lcprobe import ProbeConfig, batch_lc, local_complexity, neighborhood_from_directions
from splinelc.learn import LCHook, PGDHook, TrainConfig, load_mnist_idx, make_piecewise_regression, train
from splinelc.learn.datasets import Dataset
from splinelc.netcore import Layer, Network, backward, forward, init_network
from splinelc.slicegeom import Slice, argmax_boundary, compute_partition, crossing_count_in_disk, square_slice

MNIST = Path(__file__).resolve().parents[1] / "data" / "mnist"
PLANE = Slice(np.zeros(2), np.eye(2), (-1.0, 1.0, -1.0, 1.0))


def test_criterion_01_zero_bias_recovery():
    t0 = time.perf_counter()
    ok, detail = validation.check_zero_bias_recovery()
    seconds = time.perf_counter() - t0
    passed = ok and seconds < 60
    report(1, passed, f"{detail['cases']} (r, P) cases, {len(detail['failures'])} mismatches, {seconds:.1f}s (limit 60s)")
    assert passed, detail


def test_criterion_02_shift_sweep():
    t0 = time.perf_counter()
    ok, detail = validation.check_shift_sweep()
    seconds = time.perf_counter() - t0
    passed = ok and seconds < 120
    pairs = ", ".join(f"r={c['r']} P={c['P']}: {c['lc_start']:.1f}>{c['lc_end']:.1f}" for c in detail["cases"])
    report(2, passed, f"mean LC t=0 vs t=1 [{pairs}], {seconds:.1f}s (limit 120s)")
    assert passed, detail


def test_criterion_03_eccentricity_closed_form():
    ok, detail = validation.check_eccentricity(dims=(2, 3, 10, 25, 64), input_dim=64, tol=1e-10)
    report(3, ok, f"max |eccentricity - 2*sqrt(2)*r| = {detail['max_abs_error']:.2e} (tol 1e-10)")
    assert ok, detail


def test_criterion_04_bn_identity():
    ok, detail = validation.check_bn_identity(instances=100, tol=1e-10)
    report(4, ok, f"100 instances, max relative error {detail['max_rel_error']:.2e} (tol 1e-10)")
    assert ok, detail


def test_criterion_05_partition_oracle():
    t0 = time.perf_counter()
    ok, detail = validation.check_partition_oracle(n_nets=20, grid=2000, tol=0.02, points_per_region=100)
    seconds = time.perf_counter() - t0
    passed = ok and seconds < 300
    worst = max(c["rel_diff"] for c in detail["cases"])
    report(5, passed, f"20 nets, max region-count deviation {100 * worst:.2f}% (tol 2%), "
                      f"max affine error {detail['max_affine_error']:.1e} (tol 1e-8), {seconds:.0f}s (limit 300s)")
    assert passed, detail


def test_criterion_06_lc_slice_cross_check():
    mismatches, checked = 0, 0
    for seed in range(20):
        net = validation.random_two_layer_net(seed)
        part = compute_partition(net, PLANE)
        rng = np.random.default_rng(100 + seed)
        for _ in range(25):
            theta = rng.uniform(0, np.pi / 2)
            frame = np.array([[np.cos(theta), np.sin(theta)], [-np.sin(theta), np.cos(theta)]])
            c = rng.uniform(-0.7, 0.7, 2)
            r = rng.uniform(0.01, 0.3)
            probe = local_complexity(net, c, ProbeConfig(2, r), neighborhood=neighborhood_from_directions(c, frame, r))
            exact = crossing_count_in_disk(part, c, r, norm="l1", frame=frame, layer=0)
            mismatches += int(probe.per_layer[0] != exact)
            checked += 1
    passed = mismatches == 0
    report(6, passed, f"{checked} probes on the criterion-5 nets, {mismatches} layer-1 mismatches (exact equality)")
    assert passed


@pytest.mark.slow
def test_criterion_07_curvature_tracking():
    t0 = time.perf_counter()
    ds = make_piecewise_regression(4096, seed=0)
    net = init_network([2, 64, 64, 64, 1], "relu", seed=0)
    log = train(net, ds, None, TrainConfig(steps=10_000, batch_size=256, lr=3e-3, loss="mse", n_checkpoints=5, seed=0))
    mse = log.rows[-1]["train_loss"]
    X = ds.inputs
    cfg = ProbeConfig(2, 0.005, 0)
    lc_left = batch_lc(net, X[X[:, 0] < -1], cfg).mean
    lc_right = batch_lc(net, X[X[:, 0] > 1], cfg).mean
    lc_ratio = lc_left / lc_right
    two_pi = 2 * np.pi
    part = compute_partition(net, Slice(np.zeros(2), np.eye(2), (-two_pi, two_pi, -two_pi, two_pi)))
    C = part.centroids()
    side_area = (two_pi - 1) * 2 * two_pi
    dens_left = np.count_nonzero(C[:, 0] < -1) / side_area
    dens_right = np.count_nonzero(C[:, 0] > 1) / side_area
    dens_ratio = dens_left / dens_right
    seconds = time.perf_counter() - t0
    passed = mse < 0.02 and lc_ratio >= 1.5 and dens_ratio >= 1.5 and seconds < 900
    report(7, passed, f"train MSE {mse:.4f} (<0.02), LC x1<-1 / x1>1 = {lc_left:.3f}/{lc_right:.3f} = {lc_ratio:.2f} (>=1.5), "
                      f"region density ratio {dens_ratio:.2f} (>=1.5), {seconds:.0f}s (limit 900s)")
    assert passed


@pytest.fixture(scope="module")
def mnist_trajectory():
    if not (MNIST / "train-images-idx3-ubyte").exists():
        pytest.skip("MNIST IDX files not present under data/mnist")
    tr = load_mnist_idx(MNIST / "train-images-idx3-ubyte", MNIST / "train-labels-idx1-ubyte")
    te = load_mnist_idx(MNIST / "test-images-idx3-ubyte", MNIST / "test-labels-idx1-ubyte", split="test")
    net = init_network([784, 200, 200, 200, 200, 10], "relu", seed=0)
    hooks = [
        LCHook({"train": tr.inputs}, ProbeConfig(25, 0.005, 0)),
        PGDHook(te.inputs[:1000], te.labels[:1000], [AttackConfig(0.06, 0.0156, 100, seed=0)]),
    ]
    tcfg = TrainConfig(steps=30_000, batch_size=200, lr=1e-3, weight_decay=0.01, weight_decay_mode="l2", n_checkpoints=40, seed=0)
    t0 = time.perf_counter()
    log = train(net, tr, te, tcfg, hooks)
    return log, time.perf_counter() - t0


@pytest.mark.slow
def test_criterion_08_double_descent_and_delayed_robustness(mnist_trajectory):
    log, seconds = mnist_trajectory
    steps = np.asarray(log.steps)
    acc = log.column("train_acc")
    lc = log.column("lc_train_mean")
    adv = log.column("adv_acc_eps_0.06")

    perfect = np.flatnonzero(acc >= 1.0)
    interp = int(perfect[0]) if perfect.size else None
    ok_a = interp is not None and steps[interp] < 10_000

    peak = 1 + int(np.argmax(lc[1:-1]))
    trough = int(np.argmin(lc[: peak + 1]))
    ok_b = lc[peak] >= 1.2 * lc[trough] and lc[peak] >= 1.2 * lc[-1]

    gain = adv[-1] - adv[interp] if interp is not None else float("nan")
    ok_c = interp is not None and gain >= 0.15

    passed = ok_a and ok_b and ok_c
    interp_text = f"step {steps[interp]}" if interp is not None else "never"
    report(8, passed,
           f"(a) {'ok' if ok_a else 'no'}: 100% train acc at {interp_text} (<10000); "
           f"(b) {'ok' if ok_b else 'no'}: LC min {lc[trough]:.2f}@{steps[trough]}, peak {lc[peak]:.2f}@{steps[peak]}, final {lc[-1]:.2f} (peak >= 1.2x both); "
           f"(c) {'ok' if ok_c else 'no'}: PGD acc {adv[interp] if interp is not None else float('nan'):.3f} -> {adv[-1]:.3f}, gain {gain:+.3f} (>= +0.15); "
           f"{seconds:.0f}s")
    assert ok_a, "train accuracy did not reach 100% before step 10^4"
    assert ok_b, "train LC trajectory lacks a 20% interior maximum"
    assert ok_c, "robust accuracy gain after interpolation below 15 points"


@pytest.mark.slow
def test_criterion_09_region_migration_density():
    X, y = make_moons(1000, noise=0.1, random_state=0)
    ds = Dataset(X, y, num_classes=2)
    net = init_network([2, 64, 64, 64, 2], "relu", seed=0)
    train(net, ds, None, TrainConfig(steps=20_000, batch_size=100, lr=1e-3, weight_decay=0.01, n_checkpoints=2, seed=0))
    lo, hi = X.min(axis=0) - 0.5, X.max(axis=0) + 0.5
    part = compute_partition(net, Slice(np.zeros(2), np.eye(2), (lo[0], hi[0], lo[1], hi[1])))
    mids = np.array([(np.asarray(p) + np.asarray(q)) / 2 for p, q in argmax_boundary(part)])
    dist = np.min(np.linalg.norm(X[:, None, :] - mids[None, :, :], axis=2), axis=1)

    half = 0.2  # every domain is a 0.4 x 0.4 square
    far_points = np.argsort(dist)[::-1][:5]
    near_centres = mids[[np.argmin(np.linalg.norm(mids - X[i], axis=1)) for i in np.random.default_rng(0).choice(len(X), 5, replace=False)]]
    count = lambda c: compute_partition(net, square_slice(c, np.eye(2), half)).region_count
    near = sum(count(c) for c in near_centres)
    far = sum(count(X[i]) for i in far_points)
    ratio = near / far
    passed = ratio >= 2.0
    report(9, passed, f"two-moons toy: {near} regions in 5 boundary squares vs {far} in 5 squares on the training points "
                      f"farthest from the boundary, ratio {ratio:.2f} (>=2)")
    assert passed


def test_criterion_10_pgd_contracts():
    rng = np.random.default_rng(0)
    net = init_network([12, 32, 32, 5], "relu", seed=0)
    X = rng.uniform(0, 1, (200, 12))
    y = rng.integers(0, 5, 200)
    violations = 0
    for eps in (0.01, 0.06, 0.13, 0.3):
        Xa = pgd_attack_batch(net, X, y, AttackConfig(eps, min(0.0156, eps), 30, seed=1))
        violations += int(np.count_nonzero(np.abs(Xa - X) > eps))
        violations += int(np.count_nonzero((Xa < 0) | (Xa > 1)))

    W = np.array([[1.0, -2.0, 0.5, 0.0], [-1.0, 1.0, 0.2, 3.0]])
    b = np.array([2.0, 0.0])
    lin = Network([Layer(W, b, "identity")])
    x = np.array([0.5, 0.2, 0.9, 0.05])
    fgsm = pgd_attack_batch(lin, x[None], [0], AttackConfig(0.1, 0.1, 1, random_start=False))[0]
    closed = np.clip(x + 0.1 * np.sign(W[1] - W[0]), 0.0, 1.0)
    fgsm_err = float(np.max(np.abs(fgsm - closed)))
    passed = violations == 0 and fgsm_err <= 1e-12
    report(10, passed, f"{violations} ball/range violations over 800 attacks, FGSM closed-form error {fgsm_err:.1e} (tol 1e-12)")
    assert passed


def test_criterion_11_gradient_correctness():
    h = 1e-5
    worst = 0.0
    for act in ("relu", "leaky_relu:0.1", "identity"):
        for depth in (1, 2, 3, 4):
            rng = np.random.default_rng(depth)
            net = init_network([5] + [7] * (depth - 1) + [3], act, seed=depth)
            X = rng.normal(size=(4, 5))
            cot = rng.normal(size=(4, 3))
            _, grads = backward(net, X, cot)
            loss = lambda: float(np.sum(forward(net, X).output * cot))
            for layer, g in zip(net.layers, grads):
                for param, analytic in ((layer.weight, g.weight), (layer.bias, g.bias)):
                    for idx in np.ndindex(param.shape):
                        old = param[idx]
                        param[idx] = old + h
                        up = loss()
                        param[idx] = old - h
                        down = loss()
                        param[idx] = old
                        fd = (up - down) / (2 * h)
                        worst = max(worst, abs(analytic[idx] - fd) / max(abs(fd), 1e-3))
    passed = worst < 1e-5
    report(11, passed, f"relu, leaky_relu, identity at depth 1-4: max relative gradient error {worst:.1e} (tol 1e-5)")
    assert passed
