"""Dense piecewise-linear networks: evaluation, gradients, init and weight files.

A :class:`Network` is a list of affine layers ``z = W x + b`` followed by an
optional batch-norm ``gamma * (z - mu) / sigma + beta`` and an element-wise
activation.  Everything runs in float64.
"""

from __future__ import annotations

import copy as _copy
import io
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.special import erf

from ._validation import as_matrix, check_positive
from .exceptions import DimensionError, InputError, NonFiniteError, WeightFileError

__all__ = [
    "Activation",
    "BNParams",
    "Layer",
    "Network",
    "ForwardTrace",
    "LayerGrad",
    "forward",
    "backward",
    "init_network",
    "bn_apply",
    "bn_batch_stats",
    "bn_distance_check",
    "save_weights",
    "load_weights",
    "dump_weights",
    "parse_weights",
]

_SQRT_HALF = np.sqrt(0.5)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)

RELU, LEAKY_RELU, GELU, IDENTITY = "relu", "leaky_relu", "gelu", "identity"
_TAGS = {RELU: 0, LEAKY_RELU: 1, GELU: 2, IDENTITY: 3}
_KINDS = {v: k for k, v in _TAGS.items()}


@dataclass(frozen=True)
class Activation:
    """Element-wise nonlinearity.

    ``slope`` is the negative-side slope and is only meaningful for
    ``leaky_relu``.
    """

    kind: str = RELU
    slope: float = 0.0

    def __post_init__(self):
        if self.kind not in _TAGS:
            raise InputError(f"unknown activation kind {self.kind!r}")
        if self.kind == LEAKY_RELU:
            if not np.isfinite(self.slope) or self.slope < 0:
                raise InputError(f"LeakyReLU slope must be finite and >= 0, got {self.slope}")
        elif self.slope != 0.0:
            object.__setattr__(self, "slope", 0.0)

    @classmethod
    def relu(cls):
        return cls(RELU)

    @classmethod
    def leaky_relu(cls, slope=0.01):
        return cls(LEAKY_RELU, float(slope))

    @classmethod
    def gelu(cls):
        return cls(GELU)

    @classmethod
    def identity(cls):
        return cls(IDENTITY)

    @classmethod
    def parse(cls, spec):
        """Build from ``"relu"``, ``"gelu"``, ``"identity"``, ``"leaky_relu"`` or ``"leaky_relu:0.2"``."""
        if isinstance(spec, Activation):
            return spec
        name, _, arg = str(spec).strip().lower().partition(":")
        name = {"leakyrelu": LEAKY_RELU, "leaky": LEAKY_RELU, "linear": IDENTITY}.get(name, name)
        if name == LEAKY_RELU:
            return cls.leaky_relu(float(arg) if arg else 0.01)
        if arg:
            raise InputError(f"activation {name!r} takes no argument")
        return cls(name)

    @property
    def is_piecewise_linear(self):
        return self.kind != GELU

    def __str__(self):
        return f"{self.kind}:{self.slope:g}" if self.kind == LEAKY_RELU else self.kind

    def __call__(self, z):
        if self.kind == RELU:
            return np.maximum(z, 0.0)
        if self.kind == LEAKY_RELU:
            return np.where(z > 0, z, self.slope * z)
        if self.kind == GELU:
            return 0.5 * z * (1.0 + erf(z * _SQRT_HALF))
        return z

    def derivative(self, z):
        # Subgradient at exactly 0: 0 for ReLU, the negative slope for LeakyReLU.
        if self.kind == RELU:
            return (z > 0).astype(np.float64)
        if self.kind == LEAKY_RELU:
            return np.where(z > 0, 1.0, self.slope)
        if self.kind == GELU:
            return 0.5 * (1.0 + erf(z * _SQRT_HALF)) + z * _INV_SQRT_2PI * np.exp(-0.5 * z * z)
        return np.ones_like(z)

    def slopes(self, signs):
        """Local slope of a piecewise-linear activation given pre-activation signs (+1/-1)."""
        if self.kind == GELU:
            raise InputError("GeLU has no constant local slope")
        if self.kind == IDENTITY:
            return np.ones(np.shape(signs))
        neg = self.slope if self.kind == LEAKY_RELU else 0.0
        return np.where(np.asarray(signs) > 0, 1.0, neg)


@dataclass
class BNParams:
    mu: np.ndarray
    sigma: np.ndarray
    gamma: np.ndarray
    beta: np.ndarray
    epsilon_stab: float = 1e-5

    def __post_init__(self):
        for name in ("mu", "sigma", "gamma", "beta"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=np.float64).reshape(-1))
        n = self.mu.shape[0]
        if any(getattr(self, k).shape[0] != n for k in ("sigma", "gamma", "beta")):
            raise DimensionError("BN parameter vectors must share one length")
        check_positive(self.epsilon_stab, "epsilon_stab")
        if np.any(~(self.sigma >= self.epsilon_stab)):
            raise InputError("BN sigma entries must be >= epsilon_stab")

    @classmethod
    def identity(cls, size, epsilon_stab=1e-5):
        return cls(np.zeros(size), np.ones(size), np.ones(size), np.zeros(size), epsilon_stab)

    @property
    def size(self):
        return self.mu.shape[0]

    def fold(self):
        """Eval-mode BN as ``scale * z + shift``."""
        scale = self.gamma / self.sigma
        return scale, self.beta - scale * self.mu


@dataclass
class Layer:
    weight: np.ndarray
    bias: np.ndarray
    activation: Activation = field(default_factory=Activation.relu)
    bn: Optional[BNParams] = None

    def __post_init__(self):
        self.weight = np.array(self.weight, dtype=np.float64, ndmin=2)
        self.bias = np.array(self.bias, dtype=np.float64).reshape(-1)
        if not isinstance(self.activation, Activation):
            self.activation = Activation.parse(self.activation)
        if self.weight.ndim != 2 or min(self.weight.shape) < 1:
            raise DimensionError(f"weight must be a non-empty matrix, got shape {self.weight.shape}")
        if self.bias.shape[0] != self.weight.shape[0]:
            raise DimensionError(
                f"bias length {self.bias.shape[0]} does not match weight rows {self.weight.shape[0]}"
            )
        if self.bn is not None and self.bn.size != self.weight.shape[0]:
            raise DimensionError("BN parameter length does not match layer width")

    @property
    def d_in(self):
        return self.weight.shape[1]

    @property
    def d_out(self):
        return self.weight.shape[0]

    def folded(self):
        """Return ``(W, b)`` of the affine pre-activation map with eval-mode BN absorbed."""
        if self.bn is None:
            return self.weight, self.bias
        scale, shift = self.bn.fold()
        return scale[:, None] * self.weight, scale * self.bias + shift


@dataclass
class Network:
    layers: list
    input_dim: Optional[int] = None

    def __post_init__(self):
        self.layers = list(self.layers)
        if not self.layers:
            raise InputError("a network needs at least one layer")
        if self.input_dim is None:
            self.input_dim = self.layers[0].d_in
        if self.layers[0].d_in != self.input_dim:
            raise DimensionError(f"layer 0 expects {self.layers[0].d_in} inputs, input_dim is {self.input_dim}")
        for k in range(1, len(self.layers)):
            if self.layers[k].d_in != self.layers[k - 1].d_out:
                raise DimensionError(
                    f"layer {k} expects {self.layers[k].d_in} inputs but layer {k - 1} emits "
                    f"{self.layers[k - 1].d_out}"
                )

    @property
    def output_dim(self):
        return self.layers[-1].d_out

    @property
    def widths(self):
        return [layer.d_out for layer in self.layers]

    @property
    def hidden_layers(self):
        """Layers that carry non-linearities for probing: all but the final (logit) layer."""
        return self.layers[:-1]

    def parameters(self):
        """Flat list of parameter arrays (views), in layer order."""
        params = []
        for layer in self.layers:
            params += [layer.weight, layer.bias]
            if layer.bn is not None:
                params += [layer.bn.gamma, layer.bn.beta]
        return params

    def copy(self):
        return _copy.deepcopy(self)

    def __call__(self, X):
        return forward(self, X).output

    def predict(self, X):
        return np.argmax(self(X), axis=1)


@dataclass
class ForwardTrace:
    inputs: list  # input to each layer
    raw: list  # W x + b, before BN
    preacts: list  # after BN when present, before activation
    output: np.ndarray
    bn_stats: list  # (mu, sigma, xhat) per layer in training mode, else None


@dataclass
class LayerGrad:
    weight: np.ndarray
    bias: np.ndarray
    gamma: Optional[np.ndarray] = None
    beta: Optional[np.ndarray] = None

    def arrays(self):
        out = [self.weight, self.bias]
        if self.gamma is not None:
            out += [self.gamma, self.beta]
        return out


def bn_batch_stats(raw):
    """Per-channel batch mean and (population) standard deviation of ``raw``."""
    raw = np.asarray(raw, dtype=np.float64)
    if raw.shape[0] < 2:
        raise InputError("training-mode batch norm needs a batch of at least 2")
    mu = raw.mean(axis=0)
    sigma = np.sqrt(((raw - mu) ** 2).mean(axis=0))
    return mu, sigma


def bn_apply(layer, preact_raw, training=False):
    """Normalize raw pre-activations of a BN layer.

    In training mode the statistics come from the batch itself; in eval mode
    the stored ``mu``/``sigma`` are used.
    """
    if layer.bn is None:
        raise InputError("layer has no batch norm")
    z = np.asarray(preact_raw, dtype=np.float64)
    bn = layer.bn
    if training:
        mu, sigma = bn_batch_stats(z)
        sigma = np.maximum(sigma, bn.epsilon_stab)
    else:
        mu, sigma = bn.mu, bn.sigma
    return bn.gamma * (z - mu) / sigma + bn.beta


def forward(net, batch, training=False):
    """Evaluate ``net`` on the rows of ``batch`` and record every pre-activation."""
    h = as_matrix(batch, net.input_dim, name="batch")
    inputs, raws, preacts, stats = [], [], [], []
    for k, layer in enumerate(net.layers):
        inputs.append(h)
        raw = h @ layer.weight.T + layer.bias
        if layer.bn is None:
            z, st = raw, None
        elif training:
            mu, sigma = bn_batch_stats(raw)
            sigma = np.maximum(sigma, layer.bn.epsilon_stab)
            xhat = (raw - mu) / sigma
            z, st = layer.bn.gamma * xhat + layer.bn.beta, (mu, sigma, xhat)
        else:
            z, st = bn_apply(layer, raw), None
        h = layer.activation(z)
        if not np.all(np.isfinite(h)):
            raise NonFiniteError(f"non-finite activations at layer {k}", layer=k)
        raws.append(raw)
        preacts.append(z)
        stats.append(st)
    return ForwardTrace(inputs, raws, preacts, h, stats)


def backward(net, x, output_cotangent, trace=None, training=False):
    """Reverse-mode gradients of ``<output_cotangent, net(x)>``.

    ``x`` may be a single vector or a batch; input gradients keep the batch
    shape while parameter gradients are summed over the batch.
    """
    single = np.ndim(x) == 1
    X = as_matrix(x, net.input_dim, name="x")
    g = np.asarray(output_cotangent, dtype=np.float64)
    if g.ndim == 1:
        g = g[None, :]
    if g.shape != (X.shape[0], net.output_dim):
        raise DimensionError(f"cotangent shape {g.shape} does not match output ({X.shape[0]}, {net.output_dim})")
    if trace is None:
        trace = forward(net, X, training=training)
    grads = [None] * len(net.layers)
    for k in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[k]
        gz = g * layer.activation.derivative(trace.preacts[k])
        ggamma = gbeta = None
        if layer.bn is not None:
            bn = layer.bn
            gbeta = gz.sum(axis=0)
            if trace.bn_stats[k] is not None:
                _, sigma, xhat = trace.bn_stats[k]
                ggamma = (gz * xhat).sum(axis=0)
                gxhat = gz * bn.gamma
                graw = (gxhat - gxhat.mean(axis=0) - xhat * (gxhat * xhat).mean(axis=0)) / sigma
            else:
                ggamma = (gz * (trace.raw[k] - bn.mu) / bn.sigma).sum(axis=0)
                graw = gz * (bn.gamma / bn.sigma)
        else:
            graw = gz
        grads[k] = LayerGrad(graw.T @ trace.inputs[k], graw.sum(axis=0), ggamma, gbeta)
        g = graw @ layer.weight
    return (g[0] if single else g), grads


def init_network(arch, activation="relu", seed=0, scale=1.0, output_activation="identity"):
    """Fan-in uniform initialization, then every parameter multiplied by ``scale``.

    ``arch`` is ``[input_dim, hidden_1, ..., output_dim]``.  Weights and biases
    of a layer with fan-in ``n`` are drawn from ``U(-1/sqrt(n), 1/sqrt(n))``.
    """
    arch = [int(a) for a in arch]
    if len(arch) < 2:
        raise InputError("architecture needs at least an input and an output size")
    if min(arch) < 1:
        raise InputError("layer sizes must be positive")
    scale = check_positive(scale, "scale")
    act = Activation.parse(activation)
    out_act = Activation.parse(output_activation)
    rng = np.random.default_rng(seed)
    layers = []
    for k, (d_in, d_out) in enumerate(zip(arch[:-1], arch[1:])):
        bound = 1.0 / np.sqrt(d_in)
        w = rng.uniform(-bound, bound, size=(d_out, d_in))
        b = rng.uniform(-bound, bound, size=d_out)
        a = out_act if k == len(arch) - 2 else act
        layers.append(Layer(w * scale, b * scale, a))
    return Network(layers)


def bn_distance_check(net, layer_index, k, points):
    """Compare the mean squared distance of ``points`` to neuron ``k``'s hyperplane with ``sigma^2/||w||^2``.

    ``points`` live in the input space of layer ``layer_index``.  The hyperplane
    offset is the batch mean of ``<w, v>``, as batch norm sets it, and
    ``sigma`` is the matching batch standard deviation.
    Returns ``(lhs, rhs)``.
    """
    layer = net.layers[layer_index]
    V = as_matrix(points, layer.d_in, name="points")
    w = layer.weight[k]
    norm = np.linalg.norm(w)
    if norm == 0:
        raise InputError(f"weight row {k} of layer {layer_index} has zero norm")
    proj = V @ w
    mu = proj.mean()
    sigma2 = ((proj - mu) ** 2).mean()
    dist = np.abs(proj - mu) / norm
    return float(np.mean(dist**2)), float(sigma2 / norm**2)


# ---------------------------------------------------------------------------
# weight files

MAGIC = b"SPLN"
FORMAT_VERSION = 1


def dump_weights(net):
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<II", FORMAT_VERSION, len(net.layers)))
    for layer in net.layers:
        act = layer.activation
        buf.write(struct.pack("<IIB", layer.d_out, layer.d_in, _TAGS[act.kind]))
        if act.kind == LEAKY_RELU:
            buf.write(struct.pack("<d", act.slope))
        buf.write(struct.pack("<B", 0 if layer.bn is None else 1))
        if layer.bn is not None:
            for vec in (layer.bn.mu, layer.bn.sigma, layer.bn.gamma, layer.bn.beta):
                buf.write(vec.astype("<f8").tobytes())
        buf.write(np.ascontiguousarray(layer.weight).astype("<f8").tobytes())
        buf.write(layer.bias.astype("<f8").tobytes())
    return buf.getvalue()


def save_weights(net, path):
    Path(path).write_bytes(dump_weights(net))


class _Reader:
    def __init__(self, data):
        self.data = data
        self.pos = 0

    def take(self, n, what):
        if self.pos + n > len(self.data):
            raise WeightFileError(
                f"truncated: need {n} bytes at offset {self.pos}, {len(self.data) - self.pos} left", what
            )
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt, what):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))

    def floats(self, count, what):
        return np.frombuffer(self.take(8 * count, what), dtype="<f8").astype(np.float64)


def parse_weights(data):
    r = _Reader(bytes(data))
    if r.take(4, "magic") != MAGIC:
        raise WeightFileError("bad magic, expected b'SPLN'", "magic")
    (version,) = r.unpack("<I", "version")
    if version != FORMAT_VERSION:
        raise WeightFileError(f"unsupported format version {version}", "version")
    (n_layers,) = r.unpack("<I", "layer_count")
    if n_layers == 0:
        raise WeightFileError("file declares zero layers", "layer_count")
    layers = []
    for i in range(n_layers):
        pfx = f"layer[{i}]"
        d_out, d_in, tag = r.unpack("<IIB", f"{pfx}.header")
        if d_out == 0 or d_in == 0:
            raise WeightFileError("zero dimension", f"{pfx}.dims")
        if tag not in _KINDS:
            raise WeightFileError(f"unknown activation tag {tag}", f"{pfx}.activation")
        slope = r.unpack("<d", f"{pfx}.slope")[0] if tag == 1 else 0.0
        (bn_flag,) = r.unpack("<B", f"{pfx}.bn_flag")
        if bn_flag not in (0, 1):
            raise WeightFileError(f"bn flag must be 0 or 1, got {bn_flag}", f"{pfx}.bn_flag")
        bn = None
        if bn_flag:
            vecs = [r.floats(d_out, f"{pfx}.bn.{name}") for name in ("mu", "sigma", "gamma", "beta")]
            try:
                bn = BNParams(*vecs)
            except InputError as exc:
                raise WeightFileError(str(exc), f"{pfx}.bn") from None
        if layers and layers[-1].d_out != d_in:
            raise WeightFileError(f"D_in={d_in} does not chain with previous D_out={layers[-1].d_out}", f"{pfx}.dims")
        w = r.floats(d_out * d_in, f"{pfx}.weight").reshape(d_out, d_in)
        b = r.floats(d_out, f"{pfx}.bias")
        try:
            layers.append(Layer(w, b, Activation(_KINDS[tag], slope), bn))
        except InputError as exc:
            raise WeightFileError(str(exc), f"{pfx}") from None
    if r.pos != len(r.data):
        raise WeightFileError(f"{len(r.data) - r.pos} trailing bytes", "eof")
    return Network(layers)


def load_weights(path):
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise WeightFileError(f"cannot read {path}: {exc.strerror}", "path") from None
    return parse_weights(data)
