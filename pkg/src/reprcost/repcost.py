"""Rescaling-invariant cost ``Phi_L(W, a)`` of a two-layer ReLU parameterization.

``Phi_L(W, a) = inf ||D_lam^{-1} D_a W||_{S^q}^{2/L}`` over positive unit-norm
``lam`` with ``q = 2 / (L - 1)``.  Closed forms exist for ``L = 2`` (path
norm) and for grouped orthonormal rows; everything else goes through the
multi-start solver :func:`phi_numeric`.  For ``L = 3`` the value is bracketed
by a dual lower bound (:func:`phi3_dual_ascent`) and an SVD upper bound
(:func:`phi3_upper_svd`).
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import numkernel as nk
from .exceptions import InvalidInputError, InvalidParameterError, StructureAbsentError

log = logging.getLogger(__name__)

ROW_TOL = 1e-12


@dataclass
class SolverOptions:
    """Knobs for :func:`phi_numeric` and :func:`phi3_dual_ascent`."""

    restarts: int = 20
    max_iters: int = 5000
    rtol: float = 1e-10
    patience: int = 20
    seed: int = 0
    lambda_floor: float = 1e-6
    dual_restarts: int = 10
    dual_iters: int = 2000
    dual_step: float = 0.1

    @classmethod
    def from_dict(cls, d=None) -> "SolverOptions":
        if d is None:
            return cls()
        if isinstance(d, SolverOptions):
            return d
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise InvalidParameterError(f"unknown solver options: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class PhiEstimate:
    value: float
    lambda_opt: np.ndarray
    converged: bool
    restarts_used: int
    best_restart_gap: float
    at_floor: bool = False
    iterations: int = 0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["lambda_opt"] = self.lambda_opt.tolist()
        return d


@dataclass
class PhiBounds:
    lower: float
    estimate: float
    upper: float
    Q_cert: np.ndarray
    estimate_detail: PhiEstimate | None = field(default=None, repr=False)

    @property
    def ordered(self) -> bool:
        return self.lower <= self.estimate + 1e-6 and self.estimate <= self.upper + 1e-6

    def to_dict(self) -> dict:
        return {
            "lower": self.lower,
            "estimate": self.estimate,
            "upper": self.upper,
            "ordered": self.ordered,
            "Q_cert": self.Q_cert.tolist(),
        }


def _check_pair(W, a):
    W = nk.as_matrix(W, "W")
    a = nk.as_vector(a, "a")
    if W.shape[0] != a.size:
        raise InvalidInputError(f"W has {W.shape[0]} rows but a has {a.size} entries")
    return W, a


def _check_depth(L) -> int:
    if int(L) != L or L < 2:
        raise InvalidParameterError(f"L must be an integer >= 2, got {L}")
    return int(L)


def _active_units(W, a):
    """Indices of units with nonzero outer weight and nonzero row."""
    norms = np.linalg.norm(W, axis=1)
    scale = max(float(norms.max()), 1.0) if norms.size else 1.0
    return np.flatnonzero((np.abs(a) > 0) & (norms > ROW_TOL * scale))


# closed forms ----------------------------------------------------------------


def phi2(W, a) -> float:
    """Path norm ``sum_k |a_k| ||w_k||_2``."""
    W, a = _check_pair(W, a)
    return float(np.sum(np.abs(a) * np.linalg.norm(W, axis=1)))


def group_rows(W, tol=1e-8):
    """Cluster the nonzero rows of ``W`` by direction up to sign.

    Returns ``(directions, labels, signs)``: one unit vector per cluster,
    the cluster index of every row (``-1`` for zero rows), and the sign
    relating each row to its cluster direction.
    """
    W = nk.as_matrix(W, "W")
    norms = np.linalg.norm(W, axis=1)
    dirs: list[np.ndarray] = []
    labels = np.full(W.shape[0], -1)
    signs = np.zeros(W.shape[0])
    for k, (w, n) in enumerate(zip(W, norms)):
        if n <= ROW_TOL:
            continue
        u = w / n
        for j, v in enumerate(dirs):
            cos = float(u @ v)
            if abs(cos) > 1.0 - tol:
                labels[k] = j
                signs[k] = math.copysign(1.0, cos)
                break
        else:
            labels[k] = len(dirs)
            signs[k] = 1.0
            dirs.append(u)
    return dirs, labels, signs


def phi_grouped(W, a, L) -> float:
    """Group-sparsity closed form ``sum_j ||a_j||_1^{2/L}``.

    Valid when the rows of ``W`` are scalar multiples of ``±v_1, ..., ±v_m``
    with orthonormal ``v_j``.  Rows need not be unit norm: a row of norm
    ``n`` carries weight ``|a_k| n`` (the value is rescaling invariant).
    """
    W, a = _check_pair(W, a)
    L = _check_depth(L)
    dirs, labels, _ = group_rows(W)
    if not dirs:
        return 0.0
    V = np.array(dirs)
    G = V @ V.T
    if np.max(np.abs(G - np.eye(len(dirs)))) > 1e-8:
        raise StructureAbsentError(
            f"rows cluster into {len(dirs)} directions that are not mutually orthogonal"
        )
    weights = np.abs(a) * np.linalg.norm(W, axis=1)
    group_l1 = np.array([weights[labels == j].sum() for j in range(len(dirs))])
    return float(np.sum(group_l1 ** (2.0 / L)))


def _tied_blocks(sigma, rtol=1e-8):
    blocks, start = [], 0
    for j in range(1, sigma.size + 1):
        if j == sigma.size or sigma[j] < sigma[start] * (1.0 - rtol):
            blocks.append((start, j))
            start = j
    return blocks


def _svd_candidates(W):
    """Thin SVDs of ``W`` that differ only inside repeated singular values.

    numpy returns an arbitrary orthonormal basis of each tied right singular
    subspace.  When the rows projected into such a block fall into as many
    mutually orthogonal directions as the block has dimensions, that basis
    is offered as a second candidate; it is the one for which the SVD bound
    is tight on grouped rows.
    """
    res = nk.svd(W).truncated()
    out = [res]
    if res.sigma.size < 2:
        return out
    V = res.V.copy()
    changed = False
    for lo, hi in _tied_blocks(res.sigma):
        if hi - lo < 2:
            continue
        Vb = res.V[:, lo:hi]
        dirs, _, _ = group_rows(W @ Vb)
        if len(dirs) != hi - lo:
            continue
        D = np.array(dirs)
        if np.max(np.abs(D @ D.T - np.eye(len(dirs)))) > 1e-8:
            continue
        V[:, lo:hi] = Vb @ D.T
        changed = True
    if changed:
        U = (W @ V) / res.sigma
        out.append(nk.SvdResult(U, res.sigma.copy(), V, res.rank_tol))
    return out


def phi3_upper_svd(W, a) -> float:
    """Upper bound ``sum_j (sigma_j sum_k |a_k u_kj|)^{2/3}`` from a thin SVD of ``W``.

    Every thin SVD gives a valid bound; the smallest over the candidates of
    :func:`_svd_candidates` is returned.
    """
    W, a = _check_pair(W, a)
    best = math.inf
    for res in _svd_candidates(W):
        col = res.sigma * np.sum(np.abs(a[:, None] * res.U), axis=0)
        best = min(best, float(np.sum(col ** (2.0 / 3.0))))
    return best


def lpq_norm_form(W, a) -> float:
    """``||B||_{1,2/3}^{2/3}`` with ``B = D_a W V``.

    Same number as :func:`phi3_upper_svd` but computed from the projections
    ``<w_k, v_j>`` instead of the left singular vectors.
    """
    W, a = _check_pair(W, a)
    best = math.inf
    for res in _svd_candidates(W):
        col_l1 = np.sum(np.abs((a[:, None] * W) @ res.V), axis=0)
        best = min(best, float(np.sum(col_l1 ** (2.0 / 3.0))))
    return best


# numerical minimization over lambda --------------------------------------------


def _log_objective(M, u, q):
    """``log(||lam|| * ||D_lam^{-1} M||_{S^q})`` and its gradient in ``u = log lam``.

    With ``N = D_lam^{-1} M = U S V^T`` the derivative of ``sum_i s_i^q``
    with respect to ``log lam_k`` is ``-q sum_i s_i^q U_ki^2``, which stays
    bounded at rank drops, so no smoothing is needed.
    """
    lam = np.exp(u - u.max())
    N = M / lam[:, None]
    U, s, _ = np.linalg.svd(N, full_matrices=False)
    keep = s > nk.RANK_RTOL * s[0]
    s = s[keep]
    U = U[:, keep]
    sq = s**q
    S = float(sq.sum())
    lam2 = lam * lam
    val = 0.5 * math.log(float(lam2.sum())) + math.log(S) / q
    grad = lam2 / lam2.sum() - (U * U) @ sq / S
    return val, grad


def _log_value(M, lam, q):
    N = M / lam[:, None]
    s = np.linalg.svd(N, compute_uv=False)
    s = s[s > nk.RANK_RTOL * s[0]]
    return math.log(float(np.linalg.norm(lam))) + math.log(float(np.sum(s**q))) / q


def _clamp(u, floor):
    lam = np.exp(u - u.max())
    lam /= np.linalg.norm(lam)
    if lam.min() >= floor:
        return u
    return np.log(np.maximum(lam, floor))


def _descend(M, u0, q, opts: SolverOptions):
    """Gradient descent on ``u = log lam`` with Barzilai-Borwein trial steps and
    Armijo backtracking. Returns ``(log value, u, converged, iterations)``."""
    u = _clamp(np.array(u0, dtype=float), opts.lambda_floor)
    f, g = _log_objective(M, u, q)
    step = 1.0
    stall = 0
    u_prev = g_prev = None
    for it in range(1, opts.max_iters + 1):
        if u_prev is not None:
            du, dg = u - u_prev, g - g_prev
            denom = float(du @ dg)
            if denom > 1e-300:
                step = float(du @ du) / denom
        step = min(max(step, 1e-8), 1e4)
        gg = float(g @ g)
        if gg < 1e-30:
            return f, u, True, it
        while True:
            u_new = _clamp(u - step * g, opts.lambda_floor)
            f_new, g_new = _log_objective(M, u_new, q)
            if f_new <= f - 1e-4 * step * gg or step < 1e-14:
                break
            step *= 0.5
        if f_new > f:
            # Line search exhausted without decrease: stationary to working precision.
            return f, u, True, it
        decrease = (f - f_new) / max(abs(f), 1e-300)
        u_prev, g_prev = u, g
        u, f, g = u_new, f_new, g_new
        stall = stall + 1 if decrease < opts.rtol else 0
        if stall >= opts.patience:
            return f, u, True, it
    return f, u, False, opts.max_iters


def _initial_points(M, a_abs, row_norms, opts: SolverOptions, rng):
    K = M.shape[0]
    starts = [np.zeros(K), 0.5 * np.log(a_abs), 0.5 * np.log(a_abs * row_norms)]
    while len(starts) < opts.restarts:
        starts.append(np.log(np.abs(rng.standard_normal(K)) + 0.05))
    return starts[: max(opts.restarts, 1)]


def phi_objective(W, a, L, lam) -> float:
    """``||D_lam^{-1} D_a W||_{S^q}^{2/L}`` at a given positive unit-norm ``lam``."""
    W, a = _check_pair(W, a)
    L = _check_depth(L)
    lam = nk.as_vector(lam, "lambda")
    if lam.size != a.size or np.any(lam <= 0):
        raise InvalidParameterError("lambda must be positive with one entry per unit")
    q = 2.0 / (L - 1)
    N = (a / lam)[:, None] * W
    s = np.linalg.svd(N, compute_uv=False)
    if s[0] == 0.0:
        return 0.0
    s = s[s > nk.RANK_RTOL * s[0]]
    return float(np.sum(s**q) ** (2.0 / (q * L)))


def phi_numeric(W, a, L, opts=None) -> PhiEstimate:
    """Minimize ``||D_lam^{-1} D_a W||_{S^q}^{2/L}`` over positive unit ``lam``.

    Zero rows and zero outer weights are dropped first (they contribute
    nothing); for ``L = 2`` the minimum is the path norm and is returned in
    closed form.  Units are processed in a canonical (lexicographic) order
    so the result does not depend on how they are indexed.
    """
    W, a = _check_pair(W, a)
    L = _check_depth(L)
    opts = SolverOptions.from_dict(opts)
    K = a.size
    idx = _active_units(W, a)
    lam_full = np.full(K, opts.lambda_floor)

    def finish(lam_active, **kw):
        lam_full[idx] = lam_active
        lam = lam_full / np.linalg.norm(lam_full)
        value = phi_objective(W, a, L, lam) if idx.size else 0.0
        return PhiEstimate(value=value, lambda_opt=lam, **kw)

    if idx.size == 0:
        lam_full[:] = 1.0
        return finish(np.ones(0), converged=True, restarts_used=0, best_restart_gap=0.0)

    M = a[idx, None] * W[idx]
    row_norms = np.linalg.norm(M, axis=1)
    if L == 2:
        return finish(np.sqrt(row_norms), converged=True, restarts_used=0, best_restart_gap=0.0)

    order = np.lexsort(M.T[::-1])
    Mc = M[order]
    q = 2.0 / (L - 1)
    rng = np.random.default_rng(opts.seed)
    starts = _initial_points(Mc, np.abs(a[idx][order]), np.linalg.norm(W[idx][order], axis=1), opts, rng)
    results = [_descend(Mc, u0, q, opts) for u0 in starts]
    vals = np.array([r[0] for r in results])
    best = int(np.argmin(vals))
    f_best, u_best, conv, iters = results[best]
    lam_c = np.exp(u_best - u_best.max())
    lam_c /= np.linalg.norm(lam_c)
    lam_active = np.empty_like(lam_c)
    lam_active[order] = lam_c
    # Spread of restart optima, in the reported (Phi) scale.
    phis = np.exp((2.0 / L) * vals)
    gap = float(phis.max() - phis.min())
    at_floor = bool(lam_c.min() < 10 * opts.lambda_floor)
    if at_floor:
        log.warning("phi_numeric: optimum reached the lambda floor (%.1e)", opts.lambda_floor)
    return finish(
        lam_active,
        converged=bool(conv),
        restarts_used=len(starts),
        best_restart_gap=gap,
        at_floor=at_floor,
        iterations=int(iters),
    )


# brute-force oracle ------------------------------------------------------------


def simplex_grid(K: int, resolution: int, chunk: int = 250_000):
    """Yield batches of ``lam`` with ``lam_k^2 = t_k`` on the simplex grid.

    ``t`` ranges over ``{i / resolution : sum(i) = resolution}`` with zero
    entries raised to ``1 / resolution**2``; rows are not renormalized (every
    objective used with this grid is evaluated scale-free or renormalizes).
    """
    if K == 1:
        yield np.ones((1, 1))
        return
    n = resolution + K - 1
    combos = itertools.combinations(range(n), K - 1)
    floor = 1.0 / resolution**2
    while True:
        block = np.fromiter(
            itertools.chain.from_iterable(itertools.islice(combos, chunk)), dtype=np.int64
        ).reshape(-1, K - 1)
        if block.size == 0:
            return
        bars = np.hstack([np.full((block.shape[0], 1), -1), block, np.full((block.shape[0], 1), n)])
        counts = np.diff(bars, axis=1) - 1
        t = np.maximum(counts / resolution, floor)
        yield np.sqrt(t)


def grid_minimize(batch_objective, K: int, resolution: int):
    """Minimize a vectorized objective over :func:`simplex_grid`.

    ``batch_objective`` maps an ``(B, K)`` array of unit-normalized ``lam``
    to ``(B,)`` values.  Returns ``(value, lam)``.
    """
    best_val, best_lam = np.inf, None
    for lam in simplex_grid(K, resolution):
        lam = lam / np.linalg.norm(lam, axis=1, keepdims=True)
        vals = batch_objective(lam)
        i = int(np.argmin(vals))
        if vals[i] < best_val:
            best_val, best_lam = float(vals[i]), lam[i].copy()
    return best_val, best_lam


def oracle_grid_lambda(W, a, L, grid_resolution=200, return_lambda=False):
    """Brute-force ``Phi_L`` by exhaustive search over a simplex grid of ``lam**2``."""
    W, a = _check_pair(W, a)
    L = _check_depth(L)
    K = a.size
    if K > 6:
        raise InvalidParameterError(f"grid oracle is exponential in K; K={K} > 6")
    q = 2.0 / (L - 1)
    M = a[:, None] * W

    def objective(lam):
        N = M[None, :, :] / lam[:, :, None]
        s = np.linalg.svd(N, compute_uv=False)
        s = np.where(s > nk.RANK_RTOL * s[:, :1], s, 0.0)
        return np.sum(s**q, axis=1) ** (2.0 / (q * L))

    val, lam = grid_minimize(objective, K, int(grid_resolution))
    return (val, lam) if return_lambda else val


# L = 3 duality bounds -------------------------------------------------------------


def phi3_dual_value(W, a, Q) -> float:
    """``sum_k |a_k <q_k, w_k>|^{2/3}``, a lower bound on ``Phi_3`` when ``||Q||_2 <= 1``."""
    W, a = _check_pair(W, a)
    Q = nk.as_matrix(Q, "Q")
    if Q.shape != W.shape:
        raise InvalidInputError(f"Q has shape {Q.shape}, W has shape {W.shape}")
    if nk.spectral_norm(Q) > 1.0 + 1e-9:
        raise InvalidParameterError(f"Q is infeasible: spectral norm {nk.spectral_norm(Q):.12g} > 1")
    return _dual_value(W, a, Q)


def _dual_value(W, a, Q):
    t = np.abs(a * np.einsum("kd,kd->k", Q, W))
    return float(np.sum(t ** (2.0 / 3.0)))


def _dual_grad(W, a, Q):
    t = np.einsum("kd,kd->k", Q, W)
    coef = np.zeros_like(t)
    nz = t != 0.0
    coef[nz] = (2.0 / 3.0) * np.abs(a[nz]) ** (2.0 / 3.0) * np.sign(t[nz]) * np.abs(t[nz]) ** (-1.0 / 3.0)
    return coef[:, None] * W


def primal_certificate(W, a, lam) -> np.ndarray:
    """``U V^T`` from the SVD of ``D_lam^{-1} D_a W`` (the nuclear-norm subgradient)."""
    W, a = _check_pair(W, a)
    res = nk.svd((a / lam)[:, None] * W).truncated()
    if res.sigma.size == 0:
        return np.zeros_like(W)
    return nk.project_spectral_ball(res.U @ res.V.T)


def phi3_dual_ascent(W, a, opts=None, warm_starts=()):
    """Projected gradient ascent of the dual objective over the spectral-norm ball.

    Every iterate is projected, so the returned value is a valid lower bound
    whether or not the ascent converged.  Returns ``(value, Q)``.
    """
    W, a = _check_pair(W, a)
    opts = SolverOptions.from_dict(opts)
    rng = np.random.default_rng(opts.seed + 1)
    Wnorm = nk.spectral_norm(W)
    if Wnorm == 0.0 or not np.any(a):
        return 0.0, np.zeros_like(W)
    step = opts.dual_step / Wnorm
    starts = [nk.project_spectral_ball(np.asarray(Q, dtype=float)) for Q in warm_starts]
    starts.append(W / Wnorm)
    rn = np.linalg.norm(W, axis=1, keepdims=True)
    Wr = np.divide(W, rn, out=np.zeros_like(W), where=rn > 0)
    starts.append(Wr / nk.spectral_norm(Wr))
    while len(starts) < opts.dual_restarts + len(warm_starts):
        starts.append(nk.project_spectral_ball(rng.standard_normal(W.shape)))

    best_val, best_Q = -np.inf, None
    for Q in starts:
        val = _dual_value(W, a, Q)
        local_best, local_Q = val, Q
        stall = 0
        for _ in range(opts.dual_iters):
            Q = nk.project_spectral_ball(Q + step * _dual_grad(W, a, Q))
            val = _dual_value(W, a, Q)
            if val > local_best * (1 + 1e-12):
                local_best, local_Q = val, Q
                stall = 0
            else:
                stall += 1
                if stall >= 50:
                    break
        if local_best > best_val:
            best_val, best_Q = local_best, local_Q
    # The projection is exact up to rounding; report the value at the stored certificate.
    return _dual_value(W, a, best_Q), best_Q


def phi3_bounds(W, a, opts=None) -> PhiBounds:
    """Sandwich ``lower <= Phi_3 estimate <= upper`` for one parameterization."""
    W, a = _check_pair(W, a)
    opts = SolverOptions.from_dict(opts)
    est = phi_numeric(W, a, 3, opts)
    upper = phi3_upper_svd(W, a)
    warm = [primal_certificate(W, a, est.lambda_opt)] if np.any(a) and np.any(W) else []
    lower, Q = phi3_dual_ascent(W, a, opts, warm_starts=warm)
    bounds = PhiBounds(lower=lower, estimate=est.value, upper=upper, Q_cert=Q, estimate_detail=est)
    if not bounds.ordered:
        log.warning(
            "phi3_bounds out of order: lower=%.10g estimate=%.10g upper=%.10g",
            lower, est.value, upper,
        )
    return bounds
