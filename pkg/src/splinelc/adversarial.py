"""L-infinity PGD attacks and robust accuracy."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._validation import as_labels, as_matrix, check_positive
from .exceptions import InputError, NonFiniteError
from .netcore import backward, forward

__all__ = [
    "AttackConfig",
    "cross_entropy",
    "pgd_attack",
    "pgd_attack_batch",
    "robust_accuracy",
    "robust_accuracy_sweep",
]


@dataclass(frozen=True)
class AttackConfig:
    epsilon: float
    alpha: float = 0.0156
    steps: int = 100
    seed: int = 0
    data_range: tuple = (0.0, 1.0)
    random_start: bool = True

    def __post_init__(self):
        check_positive(self.epsilon, "epsilon", strict=False)
        check_positive(self.alpha, "alpha")
        if self.epsilon > 0 and self.alpha > self.epsilon:
            raise InputError(f"alpha={self.alpha} must not exceed epsilon={self.epsilon}")
        if int(self.steps) != self.steps or self.steps < 1:
            raise InputError("steps must be a positive integer")
        lo, hi = self.data_range
        if not lo < hi:
            raise InputError(f"data_range lower bound must be below upper bound, got {self.data_range}")


def cross_entropy(logits, labels):
    """Mean cross-entropy and its gradient w.r.t. the logits (per sample, not averaged)."""
    z = logits - logits.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(z).sum(axis=1))
    n = logits.shape[0]
    loss = float(np.mean(logsum - z[np.arange(n), labels]))
    p = np.exp(z - logsum[:, None])
    p[np.arange(n), labels] -= 1.0
    return loss, p


def _project(X, X0, eps, lo, hi):
    X = np.clip(np.clip(X, X0 - eps, X0 + eps), lo, hi)
    # X0 +/- eps may round outward; step back so the ball test holds exactly
    over = X - X0 > eps
    while np.any(over):
        X[over] = np.nextafter(X[over], X0[over])
        over = X - X0 > eps
    under = X0 - X > eps
    while np.any(under):
        X[under] = np.nextafter(X[under], X0[under])
        under = X0 - X > eps
    return X


def pgd_attack_batch(net, X, y, cfg):
    """Attack every row of ``X``.

    Each returned row is the final PGD iterate, except that the clean input is
    returned instead when it is misclassified and the iterate is not.
    """
    X0 = as_matrix(X, net.input_dim)
    y = as_labels(y, X0.shape[0], net.output_dim)
    lo, hi = cfg.data_range
    eps = float(cfg.epsilon)
    Xa = X0.copy()
    if cfg.random_start and eps > 0:
        rng = np.random.default_rng(cfg.seed)
        Xa = _project(Xa + rng.uniform(-eps, eps, size=Xa.shape), X0, eps, lo, hi)
    for step in range(int(cfg.steps)):
        trace = forward(net, Xa)
        _, g_logits = cross_entropy(trace.output, y)
        grad, _ = backward(net, Xa, g_logits, trace=trace)
        if not np.all(np.isfinite(grad)):
            raise NonFiniteError(f"non-finite input gradient at PGD step {step}", step=step)
        Xa = _project(Xa + cfg.alpha * np.sign(grad), X0, eps, lo, hi)
    adv_wrong = net.predict(Xa) != y
    clean_wrong = net.predict(X0) != y
    use_clean = clean_wrong & ~adv_wrong
    Xa[use_clean] = X0[use_clean]
    return Xa


def pgd_attack(net, x, label, cfg):
    return pgd_attack_batch(net, np.asarray(x, dtype=np.float64)[None], [label], cfg)[0]


def _robust_mask(net, X, y, cfg, batch_size):
    ok = np.empty(X.shape[0], dtype=bool)
    for s in range(0, X.shape[0], batch_size):
        Xa = pgd_attack_batch(net, X[s : s + batch_size], y[s : s + batch_size], cfg)
        ok[s : s + batch_size] = net.predict(Xa) == y[s : s + batch_size]
    return ok


def robust_accuracy(net, X, y, cfg, batch_size=1000):
    """Fraction of samples still classified correctly after the attack."""
    X = as_matrix(X, net.input_dim, allow_empty=True)
    if X.shape[0] == 0:
        raise InputError("robust_accuracy needs a non-empty dataset")
    y = as_labels(y, X.shape[0], net.output_dim)
    return float(_robust_mask(net, X, y, cfg, batch_size).mean())


def robust_accuracy_sweep(net, X, y, configs, batch_size=1000):
    """Robust accuracy for several budgets, keeping the stronger attack across nested budgets.

    A sample broken at budget ``e1`` stays broken for every ``e2 >= e1``: the
    ``e1`` adversarial point is feasible in the larger ball.  Returns
    ``{epsilon: accuracy}``.
    """
    X = as_matrix(X, net.input_dim)
    y = as_labels(y, X.shape[0], net.output_dim)
    broken = np.zeros(X.shape[0], dtype=bool)
    out = {}
    for cfg in sorted(configs, key=lambda c: c.epsilon):
        broken |= ~_robust_mask(net, X, y, cfg, batch_size)
        out[cfg.epsilon] = float(1.0 - broken.mean())
    return out
