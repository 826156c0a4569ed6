"""Independent reference computations shared by the unit and acceptance suites."""

import numpy as np

from splinelc.netcore import forward


def grid_points(bounds, n):
    u0, u1, v0, v1 = bounds
    # cell centres, so no sample sits exactly on the box edge
    us = u0 + (np.arange(n) + 0.5) * (u1 - u0) / n
    vs = v0 + (np.arange(n) + 0.5) * (v1 - v0) / n
    uu, vv = np.meshgrid(us, vs)
    return np.column_stack([uu.ravel(), vv.ravel()])


def activation_patterns(net, X):
    """Packed joint sign pattern (pre-activation > 0) of every nonlinear hidden neuron."""
    tr = forward(net, X)
    bits = [z > 0 for z, layer in zip(tr.preacts, net.layers) if layer.activation.kind != "identity"]
    return np.packbits(np.concatenate(bits, axis=1), axis=1)


def grid_region_count(net, slc, n=2000, chunk=250_000):
    """Number of distinct activation patterns on an ``n x n`` grid over the slice."""
    U = grid_points(slc.bounds, n)
    seen = set()
    for s in range(0, U.shape[0], chunk):
        pats = np.ascontiguousarray(activation_patterns(net, slc.to_input(U[s : s + chunk])))
        rows = pats.view(np.dtype((np.void, pats.shape[1]))).ravel()
        seen.update(np.unique(rows).tolist())
    return len(seen)


def interior_points(polygon, k, rng):
    """``k`` random strictly interior points of a convex polygon (Dirichlet weights on its vertices)."""
    w = rng.dirichlet(np.ones(polygon.shape[0]), size=k)
    return w @ polygon


def sampled_disk_count(net, slc, center, radius, layer=0, n_angles=4096, n_rings=64, frame=None, norm="l2"):
    """Neurons of ``layer`` whose pre-activation sign varies over a dense sample of a disk or diamond."""
    t = np.linspace(0.0, 2 * np.pi, n_angles, endpoint=False)
    rho = np.linspace(0.0, 1.0, n_rings + 1)
    if norm == "l2":
        dirs = np.column_stack([np.cos(t), np.sin(t)])
    else:
        F = np.eye(2) if frame is None else np.asarray(frame)
        c, s = np.cos(t), np.sin(t)
        scale = 1.0 / (np.abs(c) + np.abs(s))
        dirs = (c * scale)[:, None] * F[0] + (s * scale)[:, None] * F[1]
    U = center + radius * (rho[:, None, None] * dirs[None]).reshape(-1, 2)
    Z = forward(net, slc.to_input(U)).preacts[layer]
    return int(np.sum(~(np.all(Z > 0, axis=0) | np.all(Z < 0, axis=0))))
