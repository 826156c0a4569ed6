"""Exact spline partition of a piecewise-linear network on a 2D affine slice.

The slice ``{origin + basis @ u : u in bounds}`` starts as one convex polygon.
Layer by layer, every polygon carries the affine map from slice coordinates to
that layer's input; each neuron's zero set is then a straight line inside the
polygon and the polygon is cut along it.  After a layer, each piece fixes its
activation slopes at its vertex centroid and the affine map is pushed through.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from ._validation import as_vector, check_positive
from .exceptions import DimensionError, InputError, UnsupportedActivationError
from .netcore import IDENTITY

__all__ = [
    "Slice",
    "Region",
    "CutSet",
    "SlicePartition",
    "RegionStats",
    "slice_through",
    "square_slice",
    "compute_partition",
    "region_stats",
    "decision_boundary",
    "argmax_boundary",
    "crossing_count_in_disk",
    "boundary_density",
    "emit",
    "load_partition_json",
    "polygon_area",
]

SIGNED_DISTANCE_EPS = 1e-12
AREA_EPS_REL = 1e-12


def polygon_area(poly):
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


@dataclass
class Slice:
    origin: np.ndarray
    basis: np.ndarray  # D x 2, orthonormal columns
    bounds: tuple  # (u_min, u_max, v_min, v_max)

    def __post_init__(self):
        self.origin = as_vector(self.origin, name="origin")
        self.basis = np.asarray(self.basis, dtype=np.float64)
        if self.basis.shape != (self.origin.shape[0], 2):
            raise DimensionError(f"basis must be {self.origin.shape[0]} x 2, got {self.basis.shape}")
        if not np.allclose(self.basis.T @ self.basis, np.eye(2), atol=1e-10, rtol=0):
            raise InputError("slice basis columns must be orthonormal")
        u0, u1, v0, v1 = (float(b) for b in self.bounds)
        if not (u1 > u0 and v1 > v0):
            raise InputError(f"empty slice bounds {self.bounds}")
        self.bounds = (u0, u1, v0, v1)

    @property
    def dim(self):
        return self.origin.shape[0]

    @property
    def area(self):
        u0, u1, v0, v1 = self.bounds
        return (u1 - u0) * (v1 - v0)

    def box(self):
        u0, u1, v0, v1 = self.bounds
        return np.array([[u0, v0], [u1, v0], [u1, v1], [u0, v1]], dtype=np.float64)

    def to_input(self, U):
        return self.origin + np.asarray(U, dtype=np.float64) @ self.basis.T

    def project(self, X):
        return (np.asarray(X, dtype=np.float64) - self.origin) @ self.basis

    def contains(self, U, tol=0.0):
        U = np.atleast_2d(U)
        u0, u1, v0, v1 = self.bounds
        return (U[:, 0] >= u0 - tol) & (U[:, 0] <= u1 + tol) & (U[:, 1] >= v0 - tol) & (U[:, 1] <= v1 + tol)


def slice_through(p0, p1, p2, margin=0.0):
    """Slice through three anchor points: centroid origin, bounding box of the anchors plus ``margin``."""
    p0, p1, p2 = (as_vector(p, name=f"p{i}") for i, p in enumerate((p0, p1, p2)))
    if not (p0.shape == p1.shape == p2.shape):
        raise DimensionError("anchors must share one dimension")
    if margin < 0:
        raise InputError("margin must be >= 0")
    e1 = p1 - p0
    n1 = np.linalg.norm(e1)
    e2 = p2 - p0
    scale = max(n1, np.linalg.norm(e2), 1e-300)
    if n1 <= 1e-12 * scale:
        raise InputError("anchors are collinear")
    e1 = e1 / n1
    e2 = e2 - e1 * np.dot(e1, e2)
    e2 = e2 - e1 * np.dot(e1, e2)  # second pass keeps orthogonality at 1e-16
    n2 = np.linalg.norm(e2)
    if n2 <= 1e-9 * scale:
        raise InputError("anchors are collinear")
    basis = np.stack([e1, e2 / n2], axis=1)
    origin = (p0 + p1 + p2) / 3.0
    U = (np.stack([p0, p1, p2]) - origin) @ basis
    lo, hi = U.min(axis=0) - margin, U.max(axis=0) + margin
    return Slice(origin, basis, (lo[0], hi[0], lo[1], hi[1]))


def square_slice(center, basis, half_width):
    """Square slice of side ``2 * half_width`` centered (in input space) on ``center``."""
    h = check_positive(half_width, "half_width")
    return Slice(center, basis, (-h, h, -h, h))


@dataclass
class Region:
    polygon: np.ndarray  # k x 2, counter-clockwise
    pattern: tuple  # per processed layer: int8 signs (+1 / -1) of the pre-activations
    A: np.ndarray  # out x 2
    c: np.ndarray  # out

    @property
    def area(self):
        return polygon_area(self.polygon)

    @property
    def centroid(self):
        return self.polygon.mean(axis=0)

    @property
    def slope_fro(self):
        return float(np.linalg.norm(self.A))

    def pattern_key(self):
        return b"".join(np.asarray(p, dtype=np.int8).tobytes() for p in self.pattern)


@dataclass
class CutSet:
    """Neuron zero-set pieces recorded while cutting: segment ``p[i]-q[i]`` belongs to neuron ``(layer[i], neuron[i])``."""

    layer: np.ndarray
    neuron: np.ndarray
    p: np.ndarray
    q: np.ndarray

    def __len__(self):
        return self.layer.shape[0]


@dataclass
class SlicePartition:
    slice: Slice
    regions: list
    layer_count_used: int
    complete: bool  # every layer processed, so A/c map to the network output
    cuts: CutSet
    boundary_segments: list = field(default_factory=list)

    @property
    def region_count(self):
        return len(self.regions)

    def areas(self):
        return np.array([r.area for r in self.regions])

    def slope_norms(self):
        return np.array([r.slope_fro for r in self.regions])

    def centroids(self):
        return np.array([r.centroid for r in self.regions]).reshape(-1, 2)

    def locate(self, U):
        """Index of the region containing each point (-1 if none), by half-plane tests."""
        U = np.atleast_2d(np.asarray(U, dtype=np.float64))
        out = np.full(U.shape[0], -1, dtype=np.int64)
        for i, reg in enumerate(self.regions):
            P = reg.polygon
            E = np.roll(P, -1, axis=0) - P
            cross = E[None, :, 0] * (U[:, None, 1] - P[None, :, 1]) - E[None, :, 1] * (U[:, None, 0] - P[None, :, 0])
            inside = np.all(cross >= -1e-12, axis=1) & (out < 0)
            out[inside] = i
        return out

    def evaluate(self, U, index=None):
        """Affine-map evaluation ``A u + c`` using the containing region."""
        U = np.atleast_2d(np.asarray(U, dtype=np.float64))
        index = self.locate(U) if index is None else np.asarray(index)
        if np.any(index < 0):
            raise InputError("point outside the partition")
        return np.stack([self.regions[i].A @ u + self.regions[i].c for u, i in zip(U, index)])


def _split(poly, d, eps):
    """Cut a convex polygon by the line where the signed distance ``d`` vanishes.

    Returns ``(negative_side, positive_side, points_on_line)``.
    """
    n = poly.shape[0]
    neg, pos, on = [], [], []
    for i in range(n):
        p, dp = poly[i], d[i]
        j = i + 1 if i + 1 < n else 0
        dq = d[j]
        if dp > eps:
            pos.append(p)
        elif dp < -eps:
            neg.append(p)
        else:
            pos.append(p)
            neg.append(p)
            on.append(p)
        if (dp > eps and dq < -eps) or (dp < -eps and dq > eps):
            x = p + (dp / (dp - dq)) * (poly[j] - p)
            pos.append(x)
            neg.append(x)
            on.append(x)
    return np.array(neg), np.array(pos), on


def _segment_from_points(on):
    if len(on) < 2:
        return None
    P = np.array(on)
    if len(on) == 2:
        return P[0], P[1]
    # collinear points: keep the two extremes
    axis = P[-1] - P[0] if np.any(P[-1] != P[0]) else P[1] - P[0]
    t = P @ axis
    return P[np.argmin(t)], P[np.argmax(t)]


def _cut_polygon(poly, PA, pc, eps, area_eps, layer_idx, cuts):
    """All pieces of ``poly`` after cutting by every neuron line ``PA[i] . u + pc[i] = 0``."""
    norms = np.linalg.norm(PA, axis=1)
    live = np.flatnonzero(norms > 0)
    if live.size == 0:
        return [poly]
    G = PA[live] / norms[live, None]
    h = pc[live] / norms[live]
    done = []
    stack = [(poly, np.arange(live.size))]
    while stack:
        piece, cand = stack.pop()
        while cand.size:
            D = piece @ G[cand].T + h[cand]
            crossing = (D.max(axis=0) > eps) & (D.min(axis=0) < -eps)
            cand = cand[crossing]
            if cand.size == 0:
                break
            j = cand[0]
            d = D[:, np.flatnonzero(crossing)[0]]
            cand = cand[1:]
            neg, pos, on = _split(piece, d, eps)
            if len(neg) < 3 or len(pos) < 3:
                continue
            if polygon_area(neg) < area_eps or polygon_area(pos) < area_eps:
                continue  # sliver: keep the piece whole
            seg = _segment_from_points(on)
            if seg is not None:
                cuts.append((layer_idx, int(live[j]), seg[0], seg[1]))
            stack.append((pos, cand))
            piece = neg
        done.append(piece)
    return done


def compute_partition(net, slc, up_to_layer=None, area_eps=None):
    """Exact partition of ``net`` restricted to ``slc``.

    ``up_to_layer=k`` cuts with the first ``k`` layers only; region maps then
    send slice coordinates to the post-activation output of layer ``k``.
    """
    if slc.dim != net.input_dim:
        raise DimensionError(f"slice lives in {slc.dim} dims, network expects {net.input_dim}")
    n_layers = len(net.layers) if up_to_layer is None else int(up_to_layer)
    if not 1 <= n_layers <= len(net.layers):
        raise InputError(f"up_to_layer must be in [1, {len(net.layers)}]")
    for k, layer in enumerate(net.layers[:n_layers]):
        if not layer.activation.is_piecewise_linear:
            raise UnsupportedActivationError(f"layer {k} uses {layer.activation}; exact slices need piecewise-linear activations")
    eps = SIGNED_DISTANCE_EPS
    area_eps = AREA_EPS_REL * slc.area if area_eps is None else area_eps
    cuts = []
    current = [(slc.box(), slc.basis, slc.origin, ())]
    for k, layer in enumerate(net.layers[:n_layers]):
        W, b = layer.folded()
        act = layer.activation
        nxt = []
        for poly, A, c, pattern in current:
            PA = W @ A
            pc = W @ c + b
            if act.kind == IDENTITY:
                nxt.append((poly, PA, pc, pattern + (np.ones(W.shape[0], dtype=np.int8),)))
                continue
            for piece in _cut_polygon(poly, PA, pc, eps, area_eps, k, cuts):
                signs = np.where(PA @ piece.mean(axis=0) + pc > 0, 1, -1).astype(np.int8)
                s = act.slopes(signs)
                nxt.append((piece, s[:, None] * PA, s * pc, pattern + (signs,)))
        current = nxt
    regions = [Region(poly, pattern, A, c) for poly, A, c, pattern in current]
    if cuts:
        cutset = CutSet(
            np.array([x[0] for x in cuts], dtype=np.int64),
            np.array([x[1] for x in cuts], dtype=np.int64),
            np.array([x[2] for x in cuts]),
            np.array([x[3] for x in cuts]),
        )
    else:
        cutset = CutSet(np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros((0, 2)), np.zeros((0, 2)))
    return SlicePartition(slc, regions, n_layers, n_layers == len(net.layers), cutset)


@dataclass
class RegionStats:
    region_count: int
    areas: np.ndarray
    slope_norms: np.ndarray
    density: np.ndarray  # grid[v, u]: region centroids per unit area
    grid_edges: tuple  # (u_edges, v_edges)


def region_stats(part, grid=(32, 32)):
    """Counts, areas, Frobenius slope norms and a centroid density map on a ``grid`` of cells."""
    nu, nv = grid
    u0, u1, v0, v1 = part.slice.bounds
    ue, ve = np.linspace(u0, u1, nu + 1), np.linspace(v0, v1, nv + 1)
    C = part.centroids()
    H, _, _ = np.histogram2d(C[:, 1], C[:, 0], bins=[ve, ue]) if len(C) else (np.zeros((nv, nu)), None, None)
    cell = (u1 - u0) * (v1 - v0) / (nu * nv)
    return RegionStats(part.region_count, part.areas(), part.slope_norms(), H / cell, (ue, ve))


def _clip_line_to_polygon(poly, g, h, eps=SIGNED_DISTANCE_EPS):
    n = np.linalg.norm(g)
    if n == 0:
        return None
    d = (poly @ g + h) / n
    if d.max() < -eps or d.min() > eps:
        return None
    _, _, on = _split(poly, d, eps)
    seg = _segment_from_points(on)
    if seg is None or np.allclose(seg[0], seg[1], rtol=0, atol=1e-15):
        return None
    return seg


def _require_complete(net, part):
    if not part.complete:
        raise InputError("decision boundaries need a partition computed through every layer")
    if net.output_dim < 2:
        raise InputError("decision boundaries need at least 2 outputs")


def decision_boundary(net, part, class_a, class_b):
    """Segments where logits ``class_a`` and ``class_b`` are equal, clipped region by region."""
    _require_complete(net, part)
    for cls in (class_a, class_b):
        if not 0 <= int(cls) < net.output_dim:
            raise InputError(f"class index {cls} out of range [0, {net.output_dim})")
    segs = []
    for reg in part.regions:
        seg = _clip_line_to_polygon(reg.polygon, reg.A[class_a] - reg.A[class_b], reg.c[class_a] - reg.c[class_b])
        if seg is not None:
            segs.append(seg)
    return segs


def _clip_halfplane(poly, g, h, eps=SIGNED_DISTANCE_EPS):
    """Part of ``poly`` where ``g . u + h >= 0``."""
    n = np.linalg.norm(g)
    if n == 0:
        return poly if h >= 0 else None
    d = (poly @ g + h) / n
    if d.min() >= -eps:
        return poly
    if d.max() <= eps:
        return None
    _, pos, _ = _split(poly, d, eps)
    return pos if len(pos) >= 3 else None


def argmax_boundary(part):
    """Segments where the predicted class changes (the multi-class decision boundary)."""
    if not part.complete:
        raise InputError("decision boundaries need a partition computed through every layer")
    segs = []
    for reg in part.regions:
        L = reg.polygon @ reg.A.T + reg.c  # logits at the vertices
        top = L.max(axis=1)
        cand = np.flatnonzero(L.max(axis=0) >= top.min())
        if cand.size < 2:
            continue
        for ia in range(cand.size):
            for ib in range(ia + 1, cand.size):
                a, b = cand[ia], cand[ib]
                poly = reg.polygon
                for k in cand:
                    if k in (a, b) or poly is None:
                        continue
                    poly = _clip_halfplane(poly, reg.A[a] - reg.A[k], reg.c[a] - reg.c[k])
                if poly is None:
                    continue
                seg = _clip_line_to_polygon(poly, reg.A[a] - reg.A[b], reg.c[a] - reg.c[b])
                if seg is not None:
                    segs.append(seg)
    return segs


def _segments_near_disk(P, Q, center, radius):
    d = Q - P
    dd = np.einsum("ij,ij->i", d, d)
    t = np.where(dd > 0, np.einsum("ij,ij->i", center - P, d) / np.where(dd > 0, dd, 1.0), 0.0)
    t = np.clip(t, 0.0, 1.0)
    closest = P + t[:, None] * d
    return np.linalg.norm(closest - center, axis=1) <= radius


def _segments_hit_diamond(P, Q, center, radius, frame):
    """Closed-set intersection of segments with ``{center + a f1 + b f2 : |a| + |b| <= radius}`` (separating axes)."""
    f1, f2 = frame
    axes = [(f1 + f2) / np.sqrt(2.0), (f1 - f2) / np.sqrt(2.0)]
    hit = np.ones(P.shape[0], dtype=bool)
    for w in axes:
        c = center @ w
        half = radius * max(abs(f1 @ w), abs(f2 @ w))
        a, b = P @ w, Q @ w
        hit &= (np.maximum(a, b) >= c - half) & (np.minimum(a, b) <= c + half)
    d = Q - P
    nrm = np.stack([-d[:, 1], d[:, 0]], axis=1)
    s = np.einsum("ij,ij->i", P, nrm)
    verts = np.stack([center + radius * f1, center - radius * f1, center + radius * f2, center - radius * f2])
    proj = verts @ nrm.T  # 4 x n
    hit &= (proj.max(axis=0) >= s) & (proj.min(axis=0) <= s)
    return hit


def crossing_count_in_disk(part, center_u, radius, norm="l2", frame=None, layer=None):
    """Number of distinct neurons whose zero set meets the disk around ``center_u``.

    ``norm="l1"`` uses the 2D cross-polytope ``|a| + |b| <= radius`` in the
    orthonormal ``frame`` (rows, slice coordinates; default the slice axes),
    which is exactly the in-slice LC probe.  ``layer`` (0-based) restricts the
    count to one layer's neurons.
    """
    center = as_vector(center_u, 2, "center_u")
    radius = check_positive(radius, "radius")
    if not part.slice.contains(center[None], tol=0)[0]:
        raise InputError("disk center outside the slice bounds")
    cuts = part.cuts
    mask = np.ones(len(cuts), dtype=bool) if layer is None else cuts.layer == layer
    P, Q = cuts.p[mask], cuts.q[mask]
    if norm == "l2":
        hit = _segments_near_disk(P, Q, center, radius)
    elif norm == "l1":
        F = np.eye(2) if frame is None else np.asarray(frame, dtype=np.float64)
        if F.shape != (2, 2) or not np.allclose(F @ F.T, np.eye(2), atol=1e-10):
            raise InputError("frame must be a 2 x 2 orthonormal matrix")
        hit = _segments_hit_diamond(P, Q, center, radius, F)
    else:
        raise InputError(f"norm must be 'l1' or 'l2', got {norm!r}")
    ids = set(zip(cuts.layer[mask][hit].tolist(), cuts.neuron[mask][hit].tolist()))
    return len(ids)


def _point_segment_distance(U, P, Q, chunk=2048):
    out = np.full(U.shape[0], np.inf)
    if P.shape[0] == 0:
        return out
    d = Q - P
    dd = np.maximum(np.einsum("ij,ij->i", d, d), 1e-300)
    for s in range(0, U.shape[0], chunk):
        u = U[s : s + chunk, None, :]
        t = np.clip(np.einsum("nkj,kj->nk", u - P[None], d) / dd, 0.0, 1.0)
        closest = P[None] + t[..., None] * d[None]
        out[s : s + chunk] = np.linalg.norm(u - closest, axis=2).min(axis=1)
    return out


def boundary_density(part, segments=None, near_fraction=0.1):
    """Region density (regions per unit area) near and far from the decision boundary.

    A region is "near" when its centroid lies within ``near_fraction`` of the
    shorter slice side from a boundary segment.
    """
    segs = argmax_boundary(part) if segments is None else segments
    u0, u1, v0, v1 = part.slice.bounds
    thresh = near_fraction * min(u1 - u0, v1 - v0)
    areas = part.areas()
    if segs:
        P = np.array([s[0] for s in segs])
        Q = np.array([s[1] for s in segs])
        dist = _point_segment_distance(part.centroids(), P, Q)
    else:
        dist = np.full(part.region_count, np.inf)
    near = dist <= thresh
    dens = lambda m: float(m.sum() / areas[m].sum()) if m.any() else 0.0
    return {"near": dens(near), "far": dens(~near), "near_regions": int(near.sum()), "far_regions": int((~near).sum())}


# ---------------------------------------------------------------------------
# output

_VIRIDIS = np.array(
    [
        [0.267, 0.005, 0.329],
        [0.283, 0.141, 0.458],
        [0.254, 0.265, 0.530],
        [0.207, 0.372, 0.553],
        [0.164, 0.471, 0.558],
        [0.128, 0.567, 0.551],
        [0.135, 0.659, 0.518],
        [0.267, 0.749, 0.441],
        [0.478, 0.821, 0.318],
        [0.741, 0.873, 0.150],
        [0.993, 0.906, 0.144],
    ]
)


def _colormap(t):
    t = np.clip(np.asarray(t, dtype=np.float64), 0.0, 1.0) * (len(_VIRIDIS) - 1)
    i = np.minimum(t.astype(int), len(_VIRIDIS) - 2)
    f = (t - i)[:, None]
    return (1 - f) * _VIRIDIS[i] + f * _VIRIDIS[i + 1]


def _hex(rgb):
    r, g, b = (int(round(255 * x)) for x in rgb)
    return f"#{r:02x}{g:02x}{b:02x}"


def _to_json(part, boundary, include_patterns, extra):
    doc = {
        "bounds": list(part.slice.bounds),
        "basis": part.slice.basis.tolist(),
        "origin": part.slice.origin.tolist(),
        "layer_count_used": part.layer_count_used,
        "region_count": part.region_count,
        "regions": [],
        "boundary": [[s[0].tolist(), s[1].tolist()] for s in boundary],
    }
    for reg in part.regions:
        item = {"polygon": reg.polygon.tolist(), "slope_fro": reg.slope_fro}
        if include_patterns:
            item["pattern"] = [p.tolist() for p in reg.pattern]
        doc["regions"].append(item)
    if extra:
        doc.update(extra)
    return doc


def _to_svg(part, boundary, color, seed, edges, header):
    u0, u1, v0, v1 = part.slice.bounds
    w, h = u1 - u0, v1 - v0
    if color == "slope":
        s = part.slope_norms()
        span = s.max() - s.min() if s.size else 0.0
        fills = _colormap((s - s.min()) / span if span > 0 else np.zeros_like(s))
    elif color == "random":
        fills = np.random.default_rng(seed).uniform(0.25, 1.0, size=(part.region_count, 3))
    else:
        raise InputError(f"color must be 'slope' or 'random', got {color!r}")
    stroke = ' stroke="#000000" stroke-width="0.5" vector-effect="non-scaling-stroke"' if edges else ""
    lines = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        *([f"<!-- {header.replace('--', '-')} -->"] if header else []),
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="{u0!r} {v0!r} {w!r} {h!r}" width="800" height="{800 * h / w:.0f}">',
        f'<g transform="matrix(1 0 0 -1 0 {v0 + v1!r})">',
    ]
    for reg, fill in zip(part.regions, fills):
        pts = " ".join(f"{x:.9g},{y:.9g}" for x, y in reg.polygon)
        lines.append(f'<polygon points="{pts}" fill="{_hex(fill)}"{stroke}/>')
    d = " ".join(f"M{a[0]:.9g},{a[1]:.9g} L{b[0]:.9g},{b[1]:.9g}" for a, b in boundary)
    lines.append(f'<path d="{d}" fill="none" stroke="#ff0000" stroke-width="2" vector-effect="non-scaling-stroke"/>')
    lines += ["</g>", "</svg>", ""]
    return "\n".join(lines)


def emit(part, path, format="json", boundary=None, color="slope", seed=0, include_patterns=False, edges=True, extra=None, header=None):
    """Write ``part`` as JSON or SVG.  ``boundary`` defaults to ``part.boundary_segments``.

    ``extra`` adds top-level JSON keys; ``header`` becomes an XML comment in the SVG.
    """
    segs = part.boundary_segments if boundary is None else boundary
    path = Path(path)
    if format == "json":
        text = json.dumps(_to_json(part, segs, include_patterns, extra))
    elif format == "svg":
        text = _to_svg(part, segs, color, seed, edges, header)
    else:
        raise InputError(f"format must be 'json' or 'svg', got {format!r}")
    path.write_text(text)
    return path


def load_partition_json(path):
    doc = json.loads(Path(path).read_text())
    for reg in doc["regions"]:
        reg["polygon"] = np.array(reg["polygon"], dtype=np.float64)
    doc["basis"] = np.array(doc["basis"], dtype=np.float64)
    doc["origin"] = np.array(doc["origin"], dtype=np.float64)
    return doc
