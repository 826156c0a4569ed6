"""Local complexity probes.

A probe around ``x`` is the cross-polytope with vertices ``x +/- r v_p`` for
``P`` random orthonormal directions ``v_p``.  The vertices are pushed through
the network one layer at a time; at each layer we count the neurons whose
pre-activation sign is not constant over the (embedded) vertex set.  Those
are the neuron hyperplanes cutting the neighborhood.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import as_matrix, as_vector, check_positive
from .exceptions import DimensionError, InputError, NonFiniteError
from .netcore import Network, bn_apply

__all__ = [
    "ProbeConfig",
    "Neighborhood",
    "LCReport",
    "LCAggregate",
    "DeformationReport",
    "SweepPoint",
    "make_neighborhood",
    "neighborhood_from_directions",
    "layer_crossings",
    "embed_neighborhood",
    "local_complexity",
    "batch_lc",
    "shift_sweep",
    "deformation",
    "derive_seed",
    "random_box_points",
    "LocalComplexity",
    "Z_99",
]

Z_99 = 2.5758293035489004  # two-sided 99% normal quantile


@dataclass(frozen=True)
class ProbeConfig:
    P: int = 25
    r: float = 0.005
    seed: int = 0

    def __post_init__(self):
        if int(self.P) != self.P or self.P < 1:
            raise InputError(f"P must be a positive integer, got {self.P}")
        check_positive(self.r, "r")


@dataclass
class Neighborhood:
    center: np.ndarray
    directions: np.ndarray  # P x D, orthonormal rows
    radius: float
    vertices: np.ndarray = field(init=False)  # 2P x D, rows 2p / 2p+1 = x +/- r v_p

    def __post_init__(self):
        step = self.radius * self.directions
        v = np.empty((2 * step.shape[0], step.shape[1]))
        v[0::2] = self.center + step
        v[1::2] = self.center - step
        self.vertices = v

    @property
    def P(self):
        return self.directions.shape[0]


@dataclass
class LCReport:
    per_layer: np.ndarray
    total: int
    config: ProbeConfig
    center: np.ndarray


@dataclass
class LCAggregate:
    point_class: str
    mean: float
    stderr: float
    ci_lo: float
    ci_hi: float
    totals: np.ndarray  # per point
    per_layer: np.ndarray  # n_points x n_layers

    @property
    def ci_half_width(self):
        return self.ci_hi - self.mean

    def layer_means(self):
        return self.per_layer.mean(axis=0)

    def to_dict(self):
        return {
            "class": self.point_class,
            "mean": self.mean,
            "stderr": self.stderr,
            "ci_lo": self.ci_lo,
            "ci_hi": self.ci_hi,
            "totals": self.totals.tolist(),
            "per_layer": self.per_layer.tolist(),
        }


@dataclass
class DeformationReport:
    eccentricity: np.ndarray  # mean eccentricity per embedded layer, index 0 = input space
    diameter: np.ndarray


class SweepPoint(NamedTuple):
    t: float
    mean: float
    stderr: float
    ci_lo: float
    ci_hi: float


def derive_seed(seed, index):
    """Per-point seed; depends only on ``(seed, index)`` so batches are order-stable."""
    return int(np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, int(index)]).generate_state(1)[0])


def _orthonormal_directions(rng, dim, P):
    while True:
        G = rng.standard_normal((dim, P))
        Q, R = np.linalg.qr(G)
        diag = np.abs(np.diag(R))
        if diag.min() > 1e-10 * max(diag.max(), 1.0):
            return Q.T.copy()


def make_neighborhood(x, cfg):
    """Cross-polytope frame around ``x`` with ``cfg.P`` random orthonormal directions."""
    x = as_vector(x)
    if cfg.P > x.shape[0]:
        raise DimensionError(f"P={cfg.P} exceeds input dimension {x.shape[0]}")
    rng = np.random.default_rng(cfg.seed)
    return Neighborhood(x, _orthonormal_directions(rng, x.shape[0], cfg.P), float(cfg.r))


def neighborhood_from_directions(x, directions, r):
    """Frame with caller-chosen directions (rows are orthonormalized)."""
    x = as_vector(x)
    d = np.atleast_2d(np.asarray(directions, dtype=np.float64))
    if d.shape[1] != x.shape[0]:
        raise DimensionError("direction length does not match x")
    if d.shape[0] > x.shape[0]:
        raise DimensionError("more directions than input dimensions")
    Q, R = np.linalg.qr(d.T)
    if np.abs(np.diag(R)).min() <= 1e-12:
        raise InputError("directions are linearly dependent")
    # keep the caller's orientation: QR may flip signs
    Q = Q * np.sign(np.diag(R))
    return Neighborhood(x, Q.T.copy(), check_positive(r, "r"))


def layer_crossings(preacts_at_vertices):
    """Number of columns whose entries are not all strictly positive or all strictly negative."""
    Z = np.asarray(preacts_at_vertices)
    all_pos = np.all(Z > 0, axis=0)
    all_neg = np.all(Z < 0, axis=0)
    return int(Z.shape[1] - np.count_nonzero(all_pos) - np.count_nonzero(all_neg))


def _crossings_per_group(Z, group):
    """Vectorized :func:`layer_crossings` for ``Z`` stacked as ``n_groups * group`` rows."""
    Z = Z.reshape(-1, group, Z.shape[-1])
    all_pos = np.all(Z > 0, axis=1)
    all_neg = np.all(Z < 0, axis=1)
    return Z.shape[2] - all_pos.sum(axis=1) - all_neg.sum(axis=1)


def _layer_preacts(layer, H):
    with np.errstate(over="ignore", invalid="ignore"):  # overflow is reported by _check_finite
        z = H @ layer.weight.T + layer.bias
    if layer.bn is not None:
        z = bn_apply(layer, z)
    return z


def _check_finite(Z, k):
    if not np.all(np.isfinite(Z)):
        raise NonFiniteError(f"non-finite activations at layer {k}", layer=k)


def embed_neighborhood(net, vertices):
    """Images of ``vertices`` at the input of every layer, plus the output of the last hidden layer."""
    H = np.asarray(vertices, dtype=np.float64)
    out = [H]
    for k, layer in enumerate(net.hidden_layers):
        Z = _layer_preacts(layer, H)
        _check_finite(Z, k)
        H = layer.activation(Z)
        _check_finite(H, k)
        out.append(H)
    return out


def local_complexity(net, x, cfg, neighborhood=None):
    """Per-layer count of neuron hyperplanes crossing the probe around ``x``.

    The final (logit) layer is not counted.
    """
    x = as_vector(x, net.input_dim)
    nb = neighborhood if neighborhood is not None else make_neighborhood(x, cfg)
    H = nb.vertices
    counts = []
    for k, layer in enumerate(net.hidden_layers):
        Z = _layer_preacts(layer, H)
        _check_finite(Z, k)
        counts.append(layer_crossings(Z))
        H = layer.activation(Z)
    per_layer = np.asarray(counts, dtype=np.int64)
    return LCReport(per_layer, int(per_layer.sum()), cfg, x)


def _batch_counts(net, X, cfg, indices):
    """Per-layer crossing counts for the rows of ``X`` (point ``i`` uses seed ``derive_seed(cfg.seed, indices[i])``)."""
    D = net.input_dim
    V = np.empty((X.shape[0], 2 * cfg.P, D))
    for j, (x, idx) in enumerate(zip(X, indices)):
        rng = np.random.default_rng(derive_seed(cfg.seed, idx))
        step = cfg.r * _orthonormal_directions(rng, D, cfg.P)
        V[j, 0::2] = x + step
        V[j, 1::2] = x - step
    H = V.reshape(-1, D)
    out = np.zeros((X.shape[0], len(net.hidden_layers)), dtype=np.int64)
    for k, layer in enumerate(net.hidden_layers):
        Z = _layer_preacts(layer, H)
        _check_finite(Z, k)
        # the module-level predicate is looked up at call time so validation can swap it
        if layer_crossings is _DEFAULT_CROSSINGS:
            out[:, k] = _crossings_per_group(Z, 2 * cfg.P)
        else:
            G = Z.reshape(X.shape[0], 2 * cfg.P, -1)
            out[:, k] = [layer_crossings(g) for g in G]
        H = layer.activation(Z)
    return out


_DEFAULT_CROSSINGS = layer_crossings


def _aggregate(point_class, per_layer):
    totals = per_layer.sum(axis=1).astype(np.float64)
    n = totals.shape[0]
    mean = float(totals.mean())
    stderr = float(totals.std(ddof=1) / math.sqrt(n))
    half = Z_99 * stderr
    return LCAggregate(point_class, mean, stderr, mean - half, mean + half, totals, per_layer)


def batch_lc(net, points, cfg, point_class="train", n_jobs=1, chunk_rows=40000):
    """LC for each row of ``points`` with an independent probe per point; mean and 99% CI of totals.

    Work is split into chunks that may run on ``n_jobs`` threads; chunks are
    reduced in point order, so the result does not depend on ``n_jobs``.
    """
    if point_class not in ("train", "test", "random"):
        raise InputError(f"point_class must be train/test/random, got {point_class!r}")
    X = as_matrix(points, net.input_dim, name="points")
    if X.shape[0] < 2:
        raise InputError("batch_lc needs at least 2 points")
    if cfg.P > net.input_dim:
        raise DimensionError(f"P={cfg.P} exceeds input dimension {net.input_dim}")
    per_chunk = max(1, chunk_rows // (2 * cfg.P))
    starts = range(0, X.shape[0], per_chunk)
    job = lambda s: _batch_counts(net, X[s : s + per_chunk], cfg, range(s, min(s + per_chunk, X.shape[0])))
    if n_jobs is None or n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            parts = list(pool.map(job, starts))
    else:
        parts = [job(s) for s in starts]
    return _aggregate(point_class, np.concatenate(parts, axis=0))


def shift_sweep(net, start, end, steps, cfg, n_probes=8, n_jobs=1):
    """Mean LC at centers ``(1-t) start + t end`` on a uniform grid of ``t`` in [0, 1].

    Each center gets ``n_probes`` independent neighborhoods.
    """
    start = as_vector(start, net.input_dim, "start")
    end = as_vector(end, net.input_dim, "end")
    if steps < 2:
        raise InputError("steps must be >= 2")
    if n_probes < 2:
        raise InputError("n_probes must be >= 2")
    out = []
    for t in np.linspace(0.0, 1.0, int(steps)):
        center = (1.0 - t) * start + t * end
        agg = batch_lc(net, np.repeat(center[None], n_probes, axis=0), cfg, "random", n_jobs=n_jobs)
        out.append(SweepPoint(float(t), agg.mean, agg.stderr, agg.ci_lo, agg.ci_hi))
    return out


def _cross_polytope_distances(V):
    """All-pairs shortest paths on the cross-polytope graph with Euclidean edge weights."""
    n = V.shape[0]
    sq = np.sum(V * V, axis=1)
    W = np.sqrt(np.maximum(sq[:, None] + sq[None, :] - 2.0 * V @ V.T, 0.0))
    idx = np.arange(0, n, 2)
    W[idx, idx + 1] = np.inf  # antipodal pairs share no edge
    W[idx + 1, idx] = np.inf
    np.fill_diagonal(W, 0.0)
    for k in range(n):
        np.minimum(W, W[:, k, None] + W[None, k, :], out=W)
    return W


def deformation(net, x, cfg, neighborhood=None):
    """Mean eccentricity and diameter of the embedded probe graph at every layer input.

    Index 0 is the input space, index ``l`` the output of hidden layer ``l``.
    """
    x = as_vector(x, net.input_dim)
    nb = neighborhood if neighborhood is not None else make_neighborhood(x, cfg)
    ecc, diam = [], []
    for V in embed_neighborhood(net, nb.vertices):
        e = _cross_polytope_distances(V).max(axis=1)
        ecc.append(e.mean())
        diam.append(e.max())
    return DeformationReport(np.asarray(ecc), np.asarray(diam))


def random_box_points(reference, n, seed=0):
    """``n`` points uniform in the per-dimension min/max box of ``reference``."""
    R = as_matrix(reference, name="reference")
    lo, hi = R.min(axis=0), R.max(axis=0)
    rng = np.random.default_rng(seed)
    return lo + (hi - lo) * rng.random((int(n), R.shape[1]))


class LocalComplexity(TransformerMixin, BaseEstimator):
    """Transformer mapping each sample to its local complexity under ``network``.

    ``network`` may be a :class:`~splinelc.netcore.Network` or any fitted
    estimator exposing ``network_``.  ``transform`` returns per-layer crossing
    counts (``per_layer=True``) or a single total column.
    """

    def __init__(self, network=None, n_directions=25, radius=0.005, random_state=0, per_layer=False, n_jobs=1):
        self.network = network
        self.n_directions = n_directions
        self.radius = radius
        self.random_state = random_state
        self.per_layer = per_layer
        self.n_jobs = n_jobs

    def _net(self):
        net = getattr(self.network, "network_", self.network)
        if not isinstance(net, Network):
            raise InputError("network must be a Network or a fitted estimator with network_")
        return net

    def fit(self, X, y=None):
        net = self._net()
        X = as_matrix(X, net.input_dim)
        self.config_ = ProbeConfig(int(self.n_directions), float(self.radius), int(self.random_state or 0))
        if self.config_.P > net.input_dim:
            raise DimensionError(f"n_directions={self.n_directions} exceeds input dimension {net.input_dim}")
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "config_")
        net = self._net()
        X = as_matrix(X, net.input_dim)
        counts = _batch_counts(net, X, self.config_, range(X.shape[0]))
        return counts if self.per_layer else counts.sum(axis=1, keepdims=True)

    def aggregate(self, X, point_class="train"):
        check_is_fitted(self, "config_")
        return batch_lc(self._net(), X, self.config_, point_class, n_jobs=self.n_jobs)
