"""Deterministic (mini-batch) gradient descent with weight decay for ``DeepNet``.

The objective is ``mean((h(x_i) - y_i)^2) + weight_decay * (||a||^2 + sum ||W_i||_F^2)``;
biases are not decayed, so the penalty is ``L * weight_decay * C_L``.
Samples are columns of ``X`` (shape ``(d, n)``).
"""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import numkernel as nk
from .exceptions import DivergenceError, InvalidInputError, InvalidParameterError
from .netmodel import DeepNet, collapse, cost

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    """Hyperparameters.

    ``widths`` lists the output size of each of the ``L - 1`` linear layers
    (the last one is the ReLU width ``K``); a single int means "all equal".
    ``batch = 0`` selects full-batch descent.
    """

    L: int = 3
    widths: list | int = 40
    lr: float = 0.05
    weight_decay: float = 3e-4
    epochs: int = 15000
    batch: int = 0
    seed: int = 0
    target_loss: float = 1e-4
    init_scale: float = 0.2
    momentum: float = 0.9
    log_every: int = 0

    def __post_init__(self):
        if self.L < 2:
            raise InvalidParameterError("L must be >= 2")
        if self.lr <= 0:
            raise InvalidParameterError("lr must be positive")
        if self.weight_decay < 0:
            raise InvalidParameterError("weight_decay must be nonnegative")
        if self.target_loss <= 0:
            raise InvalidParameterError("target_loss must be positive")
        if not (0 <= self.momentum < 1):
            raise InvalidParameterError("momentum must lie in [0, 1)")

    @property
    def layer_widths(self) -> list:
        if isinstance(self.widths, int):
            return [self.widths] * (self.L - 1)
        w = list(self.widths)
        if len(w) != self.L - 1:
            raise InvalidParameterError(f"need {self.L - 1} widths for L={self.L}, got {len(w)}")
        return w

    @classmethod
    def from_dict(cls, d) -> "TrainConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise InvalidParameterError(f"unknown training options: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrainResult:
    net: DeepNet
    final_loss: float
    cost: float
    effective_W: np.ndarray
    sv_ratio: float
    epochs_run: int
    interpolated: bool
    history: list = field(default_factory=list, repr=False)

    def history_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["epoch", "mse", "cost", "sv_ratio"])
        w.writerows(self.history)
        return buf.getvalue()


def init_params(cfg: TrainConfig, d: int) -> DeepNet:
    """Uniform ``[-s, s]`` entries with ``s = init_scale / sqrt(fan_in)``; ``c = 0``."""
    rng = np.random.default_rng(cfg.seed)
    layers = []
    fan_in = d
    for m in cfg.layer_widths:
        s = cfg.init_scale / math.sqrt(fan_in)
        layers.append(rng.uniform(-s, s, size=(m, fan_in)))
        fan_in = m
    K = fan_in
    s = cfg.init_scale / math.sqrt(K)
    a = rng.uniform(-s, s, size=K)
    b = rng.uniform(-s, s, size=K)
    return DeepNet(tuple(layers), a, b, 0.0)


def _unpack(net: DeepNet):
    return [W.copy() for W in net.layers] + [net.a.copy(), net.b.copy(), np.array([net.c])]


def _pack(params) -> DeepNet:
    *layers, a, b, c = params
    return DeepNet(tuple(layers), a, b, float(c[0]))


def loss_and_grads(params, X, y, weight_decay):
    """Objective value and gradients for the flat parameter list
    ``[W_1, ..., W_{L-1}, a, b, c]``. ``X`` is ``(d, n)``."""
    *layers, a, b, c = params
    n = X.shape[1]
    H = [X.T]
    for W in layers:
        H.append(H[-1] @ W.T)
    Z = H[-1] + b
    A = np.maximum(Z, 0.0)
    out = A @ a + c[0]
    r = out - y
    mse = float(r @ r) / n if n else 0.0
    penalty = float(a @ a) + sum(float(np.sum(W * W)) for W in layers)
    obj = mse + weight_decay * penalty

    dout = 2.0 * r / n if n else r
    ga = A.T @ dout + 2 * weight_decay * a
    gc = np.array([dout.sum()])
    dZ = np.outer(dout, a) * (Z > 0)
    gb = dZ.sum(axis=0)
    gW = [None] * len(layers)
    dH = dZ
    for i in range(len(layers) - 1, -1, -1):
        gW[i] = dH.T @ H[i] + 2 * weight_decay * layers[i]
        dH = dH @ layers[i]
    return obj, mse, gW + [ga, gb, gc]


def mse(net, X, y) -> float:
    X = nk.as_matrix(X, "X")
    r = net(X.T) - np.asarray(y, dtype=float)
    return float(np.mean(r * r))


def rank_metrics(net):
    """``(sigma_2 / sigma_1, singular values)`` of the effective inner weight matrix."""
    s = nk.singular_values(collapse(net).W)
    if s[0] == 0.0 or s.size < 2:
        return 0.0, s
    return float(s[1] / s[0]), s


def train(X, y, cfg: TrainConfig, init: DeepNet | None = None) -> TrainResult:
    """Run ``cfg.epochs`` passes of (mini-batch) gradient descent with momentum."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or not np.all(np.isfinite(X)):
        raise InvalidInputError("X must be a finite (d, n) matrix")
    y = np.asarray(y, dtype=float).reshape(-1)
    d, n = X.shape
    if y.size != n:
        raise InvalidInputError(f"X has {n} samples but y has {y.size}")
    net = init if init is not None else init_params(cfg, d)
    if net.depth != cfg.L:
        raise InvalidInputError(f"initial net has depth {net.depth}, config says L={cfg.L}")
    params = _unpack(net)
    velocity = [np.zeros_like(p) for p in params]
    rng = np.random.default_rng(cfg.seed + 7919)
    batch = n if cfg.batch <= 0 or cfg.batch >= n else cfg.batch
    history = []
    last_mse = float("nan")
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n) if batch < n else np.arange(n)
        for start in range(0, max(n, 1), max(batch, 1)):
            idx = order[start : start + batch]
            with np.errstate(over="ignore", invalid="ignore"):
                obj, last_mse, grads = loss_and_grads(params, X[:, idx], y[idx], cfg.weight_decay)
            if not math.isfinite(obj):
                raise DivergenceError(
                    f"loss became non-finite at epoch {epoch} (lr={cfg.lr}, "
                    f"weight_decay={cfg.weight_decay}, last mse={last_mse})"
                )
            for p, v, g in zip(params, velocity, grads):
                v *= cfg.momentum
                v -= cfg.lr * g
                p += v
        if cfg.log_every and (epoch % cfg.log_every == 0 or epoch == cfg.epochs):
            cur = _pack(params)
            history.append((epoch, mse(cur, X, y) if n else 0.0, cost(cur), rank_metrics(cur)[0]))
    net = _pack(params)
    if not all(np.all(np.isfinite(p)) for p in params):
        raise DivergenceError("parameters became non-finite")
    final = mse(net, X, y) if n else 0.0
    ratio, _ = rank_metrics(net)
    return TrainResult(
        net=net,
        final_loss=final,
        cost=cost(net),
        effective_W=collapse(net).W,
        sv_ratio=ratio,
        epochs_run=cfg.epochs,
        interpolated=final <= cfg.target_loss,
        history=history,
    )


def grid_eval(net, bounds=((-3.0, 3.0), (-3.0, 3.0)), resolution=41) -> np.ndarray:
    """Evaluate a 2-input network on a ``resolution x resolution`` grid.

    Returns rows ``(x1, x2, f)`` with ``x1`` varying slowest.
    """
    shallow = collapse(net)
    if shallow.input_dim != 2:
        raise InvalidInputError("surface mode needs a 2-input network")
    (x0, x1), (y0, y1) = bounds
    g1 = np.linspace(x0, x1, resolution)
    g2 = np.linspace(y0, y1, resolution)
    P = np.array([(u, v) for u in g1 for v in g2])
    return np.column_stack([P, shallow(P)])
