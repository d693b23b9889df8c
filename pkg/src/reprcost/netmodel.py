"""Two-layer ReLU networks with optional stacks of linear input layers.

A :class:`ShallowNet` computes ``a @ relu(W @ x + b) + c``. A
:class:`DeepNet` replaces ``W`` by a product ``W_{L-1} ... W_1`` of
``L - 1`` linear layers; ``layers[0]`` is applied first.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import numkernel as nk
from .exceptions import InvalidInputError, InvalidParameterError


def relu(t):
    return np.maximum(t, 0.0)


@dataclass(frozen=True)
class ShallowNet:
    W: np.ndarray
    a: np.ndarray
    b: np.ndarray
    c: float = 0.0

    def __post_init__(self):
        W = nk.as_matrix(self.W, "W")
        a = nk.as_vector(self.a, "a")
        b = nk.as_vector(self.b, "b")
        if not (W.shape[0] == a.size == b.size):
            raise InvalidInputError(
                f"inconsistent widths: W has {W.shape[0]} rows, len(a)={a.size}, len(b)={b.size}"
            )
        if not np.isfinite(self.c):
            raise InvalidInputError("c must be finite")
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c", float(self.c))

    @property
    def width(self) -> int:
        return self.W.shape[0]

    @property
    def input_dim(self) -> int:
        return self.W.shape[1]

    def __call__(self, X):
        return evaluate(self, X)

    def to_dict(self) -> dict:
        return {"W": self.W.tolist(), "a": self.a.tolist(), "b": self.b.tolist(), "c": self.c}


@dataclass(frozen=True)
class DeepNet:
    layers: tuple
    a: np.ndarray
    b: np.ndarray
    c: float = 0.0

    def __post_init__(self):
        if len(self.layers) < 1:
            raise InvalidInputError("a DeepNet needs at least one linear layer")
        layers = tuple(nk.as_matrix(Wi, f"layers[{i}]") for i, Wi in enumerate(self.layers))
        for i in range(1, len(layers)):
            if layers[i].shape[1] != layers[i - 1].shape[0]:
                raise InvalidInputError(
                    f"layers[{i}] expects {layers[i].shape[1]} inputs, "
                    f"layers[{i - 1}] emits {layers[i - 1].shape[0]}"
                )
        a = nk.as_vector(self.a, "a")
        b = nk.as_vector(self.b, "b")
        K = layers[-1].shape[0]
        if not (K == a.size == b.size):
            raise InvalidInputError(f"inconsistent widths: K={K}, len(a)={a.size}, len(b)={b.size}")
        if not np.isfinite(self.c):
            raise InvalidInputError("c must be finite")
        object.__setattr__(self, "layers", layers)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c", float(self.c))

    @property
    def depth(self) -> int:
        """Number of layers ``L`` (linear layers plus the ReLU layer)."""
        return len(self.layers) + 1

    @property
    def input_dim(self) -> int:
        return self.layers[0].shape[1]

    @property
    def width(self) -> int:
        return self.a.size

    def effective_weight(self) -> np.ndarray:
        W = self.layers[0]
        for Wi in self.layers[1:]:
            W = Wi @ W
        return W

    def __call__(self, X):
        return evaluate(self, X)

    def to_dict(self) -> dict:
        return {
            "layers": [Wi.tolist() for Wi in self.layers],
            "a": self.a.tolist(),
            "b": self.b.tolist(),
            "c": self.c,
        }


def _pre_activation(net, X: np.ndarray) -> np.ndarray:
    if isinstance(net, ShallowNet):
        return X @ net.W.T + net.b
    H = X
    for Wi in net.layers:
        H = H @ Wi.T
    return H + net.b


def evaluate(net, x):
    """Evaluate ``net`` at one point (1-D ``x``) or at the rows of a 2-D array.

    Returns a float for a single point, else an array of shape ``(n,)``.
    """
    X = np.asarray(x, dtype=float)
    single = X.ndim <= 1
    X = np.atleast_2d(X.reshape(1, -1) if single else X)
    if X.shape[1] != net.input_dim:
        raise InvalidInputError(f"input has dimension {X.shape[1]}, network expects {net.input_dim}")
    out = relu(_pre_activation(net, X)) @ net.a + net.c
    return float(out[0]) if single else out


def collapse(net: DeepNet) -> ShallowNet:
    """Multiply out the linear layers."""
    if isinstance(net, ShallowNet):
        return net
    return ShallowNet(net.effective_weight(), net.a.copy(), net.b.copy(), net.c)


def as_deep(net: ShallowNet) -> DeepNet:
    """View a two-layer net as a ``DeepNet`` with ``L = 2``."""
    return DeepNet((net.W.copy(),), net.a.copy(), net.b.copy(), net.c)


def cost(net) -> float:
    """``C_L = (||a||^2 + sum_i ||W_i||_F^2) / L``; biases are excluded."""
    if isinstance(net, ShallowNet):
        net = as_deep(net)
    total = float(net.a @ net.a) + sum(float(np.sum(Wi * Wi)) for Wi in net.layers)
    return total / net.depth


def rescale_units(net: ShallowNet, lam) -> ShallowNet:
    """Apply the positive rescaling ``(D W, a D^{-1}, D b, c)`` with ``D = diag(lam)``.

    The represented function is unchanged because ReLU is positively
    1-homogeneous.
    """
    lam = nk.as_vector(lam, "lambda")
    if lam.size != net.width:
        raise InvalidInputError(f"lambda has length {lam.size}, net has width {net.width}")
    if np.any(lam <= 0):
        raise InvalidParameterError("rescaling factors must be strictly positive")
    return ShallowNet(net.W * lam[:, None], net.a / lam, net.b * lam, net.c)


def balanced_factorization(net: ShallowNet, L: int) -> DeepNet:
    """Split ``W`` into ``L - 1`` factors of minimal total squared Frobenius norm.

    With the thin SVD ``W = U S V^T`` of rank ``r`` and ``p = 1 / (L - 1)``
    the chain is ``S^p V^T``, then ``L - 3`` copies of ``S^p`` (``r x r``),
    then ``U S^p``.  Each factor has squared norm ``sum(s ** (2p))`` so the
    total equals ``(L - 1) * ||W||_{S^q}^q`` with ``q = 2 / (L - 1)``.
    """
    L = int(L)
    if L < 2:
        raise InvalidParameterError(f"L must be >= 2, got {L}")
    if L == 2:
        return as_deep(net)
    res = nk.svd(net.W).truncated()
    if res.sigma.size == 0:
        # W = 0: a single zero channel keeps the chain well formed.
        K, d = net.W.shape
        layers = [np.zeros((1, d))] + [np.zeros((1, 1))] * (L - 3) + [np.zeros((K, 1))]
        return DeepNet(tuple(layers), net.a.copy(), net.b.copy(), net.c)
    root = res.sigma ** (1.0 / (L - 1))
    first = root[:, None] * res.V.T
    middle = [np.diag(root) for _ in range(L - 3)]
    last = res.U * root
    return DeepNet(tuple([first, *middle, last]), net.a.copy(), net.b.copy(), net.c)


def factor_cost_sum(net: DeepNet) -> float:
    return sum(float(np.sum(Wi * Wi)) for Wi in net.layers)


# JSON ---------------------------------------------------------------------


def net_from_dict(d: dict):
    """Build a network from the shared JSON schema.

    ``{"W", "a", "b", "c"}`` yields a :class:`ShallowNet`,
    ``{"layers", "a", "b", "c"}`` a :class:`DeepNet`. ``b`` defaults to zeros
    and ``c`` to 0.
    """
    a = d["a"]
    b = d.get("b", [0.0] * len(a))
    c = d.get("c", 0.0)
    if "layers" in d:
        return DeepNet(tuple(np.asarray(Wi, dtype=float) for Wi in d["layers"]), a, b, c)
    if "W" in d:
        return ShallowNet(np.asarray(d["W"], dtype=float), a, b, c)
    raise InvalidInputError("network JSON needs either 'W' or 'layers'")


def load_net(path):
    with open(path) as fh:
        return net_from_dict(json.load(fh))


def dump_net(net, path=None):
    text = json.dumps(net.to_dict())
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text


def random_shallow(rng: np.random.Generator, K: int, d: int, unit_rows=False) -> ShallowNet:
    """Random Gaussian network, handy for tests and verification suites."""
    W = rng.standard_normal((K, d))
    if unit_rows:
        W /= np.linalg.norm(W, axis=1, keepdims=True)
    return ShallowNet(W, rng.standard_normal(K), rng.standard_normal(K), float(rng.standard_normal()))


__all__ = [
    "ShallowNet",
    "DeepNet",
    "evaluate",
    "collapse",
    "as_deep",
    "cost",
    "rescale_units",
    "balanced_factorization",
    "factor_cost_sum",
    "net_from_dict",
    "load_net",
    "dump_net",
    "random_shallow",
    "relu",
]
