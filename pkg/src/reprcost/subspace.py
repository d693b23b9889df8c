"""Projecting a shallow net's units onto a subspace while keeping its fit.

Sample matrices here follow the column convention ``X`` of shape
``(d, n)``: column ``i`` is the feature vector ``x_i``. Probe points passed to
:func:`project_data_check` are rows, as for :func:`reprcost.netmodel.evaluate`.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import numkernel as nk
from .exceptions import (
    AgreementViolatedError,
    ConstructionInfeasibleError,
    InvalidInputError,
)
from .netmodel import ShallowNet, collapse, evaluate, relu
from .repcost import SolverOptions, phi_numeric

log = logging.getLogger(__name__)

TIE_TOL = 1e-12


@dataclass(frozen=True)
class ProjectionSpec:
    """Subspace ``S`` given by an orthonormal basis (``d x s``)."""

    basis: np.ndarray

    def __post_init__(self):
        B = nk.as_matrix(self.basis, "basis")
        d, s = B.shape
        if s > d:
            raise InvalidInputError(f"basis has {s} columns in dimension {d}")
        if np.max(np.abs(B.T @ B - np.eye(s))) > 1e-10:
            raise InvalidInputError("basis columns are not orthonormal")
        object.__setattr__(self, "basis", B)

    @classmethod
    def from_span(cls, vectors) -> "ProjectionSpec":
        """Orthonormal basis for the column span of ``vectors`` (``d x m``), rank taken from the SVD."""
        A = nk.as_matrix(vectors, "vectors")
        res = nk.svd(A).truncated()
        if res.sigma.size == 0:
            raise InvalidInputError("cannot span a subspace with zero vectors")
        Q, _ = np.linalg.qr(res.U)
        return cls(Q)

    @classmethod
    def full(cls, d: int) -> "ProjectionSpec":
        return cls(np.eye(d))

    @property
    def dim(self) -> int:
        return self.basis.shape[1]

    @property
    def ambient_dim(self) -> int:
        return self.basis.shape[0]

    @property
    def projector(self) -> np.ndarray:
        return self.basis @ self.basis.T

    def project(self, X) -> np.ndarray:
        """Project the rows of ``X``."""
        X = np.asarray(X, dtype=float)
        return X @ self.projector


def _samples(X, d) -> np.ndarray:
    X = nk.as_matrix(X, "X")
    if X.shape[0] != d:
        raise InvalidInputError(f"samples have dimension {X.shape[0]}, expected {d} (X is d x n)")
    return X


def project_data_check(net, S: ProjectionSpec, probes, offset=None) -> float:
    """``max |f(x) - f(P_S x)|`` over the probe rows.

    ``offset`` handles affine subspaces ``v + S`` with ``v`` orthogonal to
    ``S``: the comparison point becomes ``P_S x + v``.
    """
    P = np.atleast_2d(np.asarray(probes, dtype=float))
    proj = S.project(P)
    if offset is not None:
        proj = proj + np.asarray(offset, dtype=float)
    return float(np.max(np.abs(evaluate(net, P) - evaluate(net, proj))))


def pre_activations(net: ShallowNet, X) -> np.ndarray:
    """``(K, n)`` matrix of ``w_k^T x_i + b_k``."""
    X = _samples(X, net.input_dim)
    return net.W @ X + net.b[:, None]


def active_sets(net: ShallowNet, X, return_ties=False):
    """Per unit, the indices of samples with strictly positive pre-activation.

    Samples within ``1e-12`` of the hinge are left out; with
    ``return_ties=True`` they are returned as a second list.
    """
    Z = pre_activations(collapse(net), X)
    sets = [np.flatnonzero(z > TIE_TOL) for z in Z]
    if return_ties:
        ties = [np.flatnonzero(np.abs(z) <= TIE_TOL) for z in Z]
        for k, t in enumerate(ties):
            if t.size:
                log.info("unit %d: %d samples on the hinge excluded from its active set", k, t.size)
        return sets, ties
    return sets


def rk_qk(net: ShallowNet, X, S: ProjectionSpec):
    """Data-alignment factors ``r_k`` and ``q_k = r_k ||P_S w_k||``.

    ``q_k = w_k^T C_k P_S w_k / (w_k^T C_k w_k)`` with ``C_k = X_k X_k^T`` the
    second-moment matrix of the samples active at unit ``k``.
    """
    X = _samples(X, net.input_dim)
    P = S.projector
    sets = active_sets(net, X)
    r = np.empty(net.width)
    q = np.empty(net.width)
    for k, (w, idx) in enumerate(zip(net.W, sets)):
        if idx.size == 0:
            raise ConstructionInfeasibleError(f"unit {k} has an empty active set", unit=k)
        Pw = P @ w
        pnorm = float(np.linalg.norm(Pw))
        if pnorm <= 1e-10:
            raise ConstructionInfeasibleError(f"unit {k}: projected weight vanishes", unit=k)
        proj = w @ X[:, idx]  # w^T x_i over active samples
        den = float(proj @ proj)
        if den <= 1e-12:
            raise ConstructionInfeasibleError(f"unit {k}: w^T C_k w is degenerate", unit=k)
        num = float(proj @ (Pw @ X[:, idx]))
        q[k] = num / den
        r[k] = q[k] / pnorm
    return r, q


@dataclass(frozen=True)
class GsConstruction:
    g: ShallowNet
    r: np.ndarray
    q: np.ndarray
    source: ShallowNet
    S: ProjectionSpec


def build_g(net: ShallowNet, X, S: ProjectionSpec, atol=1e-8) -> GsConstruction:
    """Move every unit into ``S`` and rescale it so the training fit is kept.

    ``w~ = P_S w / ||P_S w||``, ``a~ = a / r``, ``b~ = r b``.  The per-unit
    identity ``a [w^T x + b]_+ = a~ [w~^T x + b~]_+`` is checked on every
    sample; it can fail when projection changes which samples a unit sees.
    """
    net = collapse(net)
    X = _samples(X, net.input_dim)
    r, q = rk_qk(net, X, S)
    bad = np.flatnonzero(np.abs(r) <= 1e-8)
    if bad.size:
        raise ConstructionInfeasibleError(f"r_k vanishes at unit {bad[0]}", unit=int(bad[0]))
    PW = net.W @ S.projector
    Wt = PW / np.linalg.norm(PW, axis=1, keepdims=True)
    at = net.a / r
    bt = net.b * r
    g = ShallowNet(Wt, at, bt, net.c)

    before = net.a[:, None] * relu(net.W @ X + net.b[:, None])
    after = at[:, None] * relu(Wt @ X + bt[:, None])
    err = np.abs(before - after)
    tol = atol * np.maximum(1.0, np.abs(before))
    if np.any(err > tol):
        k, i = np.unravel_index(int(np.argmax(err - tol)), err.shape)
        raise AgreementViolatedError(
            f"unit {k} disagrees with its projection at sample {i} (gap {err[k, i]:.3e})",
            unit=int(k),
            gap=float(err[k, i]),
        )
    return GsConstruction(g=g, r=r, q=q, source=net, S=S)


def r2_condition(net: ShallowNet, X, S: ProjectionSpec) -> np.ndarray:
    """Per-unit flags ``|q_k| <= ||P_S w_k||`` (equivalently ``|r_k| <= 1``).

    When every flag holds and the rows of ``net.W`` have unit norm, the path
    norm of ``net`` does not exceed that of the projected network.
    """
    r, q = rk_qk(net, X, S)
    pnorm = np.linalg.norm(net.W @ S.projector, axis=1)
    return np.abs(q) <= pnorm * (1 + 1e-12)


def phi3_tilde(net: ShallowNet, X, S: ProjectionSpec, opts=None, return_both=False, rtol=1e-3):
    """``Phi_3`` of the projected network, computed as
    ``inf ||D_q^{-1} (D_lam^{-1} D_a W) P_S||_*^{2/3}``.

    The same quantity is also computed directly from the constructed
    network; a disagreement beyond ``rtol`` is logged.  With
    ``return_both=True`` both estimates are returned.
    """
    opts = SolverOptions.from_dict(opts)
    cons = build_g(net, X, S)
    M = (cons.source.a / cons.q)[:, None] * (cons.source.W @ S.projector)
    via_q = phi_numeric(M, np.ones(net.width), 3, opts)
    direct = phi_numeric(cons.g.W, cons.g.a, 3, opts)
    gap = abs(via_q.value - direct.value) / max(direct.value, 1e-300)
    if gap > rtol:
        log.warning("phi3_tilde: q-form %.10g vs direct %.10g (rel gap %.2e)", via_q.value, direct.value, gap)
    return (via_q, direct) if return_both else via_q
