"""Samples on two rays: per-ray interpolant ``f`` versus the aligned interpolant ``g``.

Rays ``w1`` and ``w2`` are unit vectors separated by ``psi`` in
``(pi/2, pi)``; the analysis uses the acute angle ``theta = pi - psi``
between the two lines, so that ``|w_j^T w0| = cos(theta / 2)`` for
``w0 = (w1 - w2) / ||w1 - w2||``.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import numkernel as nk
from .exceptions import (
    AgreementViolatedError,
    ConstructionInfeasibleError,
    InvalidInputError,
    InvalidParameterError,
    ReprCostError,
)
from .netmodel import ShallowNet, evaluate
from .repcost import PhiBounds, SolverOptions, phi2, phi3_bounds, phi_numeric

log = logging.getLogger(__name__)

FIG3_DIRECTION = (2.0, 1.0)

CSV_COLUMNS = [
    "theta",
    "psi",
    "R2_f",
    "R2_g",
    "phi3_f_lower",
    "phi3_f_est",
    "phi3_f_upper",
    "phi3_g_closed",
    "phi3_g_est",
    "cond_holds",
    "status",
]


@dataclass
class RaysConfig:
    """Two-ray dataset description.

    ``radii`` / ``labels`` may be given explicitly (ray-1 samples first);
    otherwise they are drawn from ``seed``.  ``direction`` is ``w1`` before
    normalization; ``w2`` is ``w1`` rotated by ``psi`` in the first two
    coordinates.
    """

    psi: float
    n1: int = 4
    n2: int = 4
    d: int = 2
    radii: list | None = None
    labels: list | None = None
    direction: tuple = FIG3_DIRECTION
    seed: int = 0
    radius_range: tuple = (0.5, 3.0)

    def __post_init__(self):
        if not (math.pi / 2 < self.psi < math.pi):
            raise InvalidParameterError(f"psi must lie in (pi/2, pi), got {self.psi}")
        if self.d < 2:
            raise InvalidParameterError("rays live in dimension d >= 2")
        if self.n1 < 1 or self.n2 < 1:
            raise InvalidParameterError("each ray needs at least one sample")
        n = self.n1 + self.n2
        for name in ("radii", "labels"):
            v = getattr(self, name)
            if v is not None and len(v) != n:
                raise InvalidParameterError(f"{name} must have n1 + n2 = {n} entries")
        if self.radii is not None and min(self.radii) <= 0:
            raise InvalidParameterError("radii must be positive")

    @property
    def theta(self) -> float:
        return math.pi - self.psi

    def with_psi(self, psi) -> "RaysConfig":
        d = dict(self.__dict__)
        d["psi"] = psi
        return RaysConfig(**d)


def ray_directions(cfg: RaysConfig):
    base = np.zeros(cfg.d)
    base[: len(cfg.direction[:2])] = cfg.direction[:2]
    w1 = base / np.linalg.norm(base)
    c, s = math.cos(cfg.psi), math.sin(cfg.psi)
    w2 = w1.copy()
    w2[0] = c * w1[0] - s * w1[1]
    w2[1] = s * w1[0] + c * w1[1]
    return w1, w2


def default_labels(radii, ray, rng):
    """Smooth per-ray profile in ``[-1, 1]`` with a seeded phase."""
    phase = rng.uniform(0, 2 * math.pi)
    return np.sin(1.3 * np.asarray(radii) + phase + 0.7 * ray)


def gen_rays(cfg: RaysConfig, seed=None):
    """Return ``(X, y, w1, w2)`` with ``X`` of shape ``(d, n1 + n2)``."""
    rng = np.random.default_rng(cfg.seed if seed is None else seed)
    w1, w2 = ray_directions(cfg)
    if cfg.radii is None:
        lo, hi = cfg.radius_range
        r1 = np.sort(rng.uniform(lo, hi, cfg.n1))
        r2 = np.sort(rng.uniform(lo, hi, cfg.n2))
    else:
        radii = np.asarray(cfg.radii, dtype=float)
        r1, r2 = radii[: cfg.n1], radii[cfg.n1 :]
    if cfg.labels is None:
        y = np.concatenate([default_labels(r1, 0, rng), default_labels(r2, 1, rng)])
    else:
        y = np.asarray(cfg.labels, dtype=float)
    X = np.hstack([np.outer(w1, r1), np.outer(w2, r2)])
    return X, y, w1, w2


def fit_univariate_minnorm(t, y, origin_value=0.0) -> ShallowNet:
    """Connect-the-dots ReLU interpolant through ``(0, origin_value)`` and ``(t_i, y_i)``.

    Knots sit at ``0`` and at every sample but the last; beyond the last
    knot the final segment is extended linearly. Units with a zero slope
    change are omitted, so ``K <= n``.
    """
    t = nk.as_vector(t, "t")
    y = nk.as_vector(y, "y")
    if t.size != y.size:
        raise InvalidInputError("t and y must have the same length")
    if np.any(t <= 0):
        raise InvalidInputError("knots must be strictly positive")
    order = np.argsort(t)
    t, y = t[order], y[order]
    if np.any(np.diff(t) <= 0):
        raise InvalidInputError("duplicate knots")
    pts = np.concatenate([[0.0], t])
    vals = np.concatenate([[origin_value], y])
    slopes = np.diff(vals) / np.diff(pts)
    changes = np.diff(slopes, prepend=0.0)
    knots = pts[:-1]
    keep = np.abs(changes) > 1e-14 * max(1.0, float(np.max(np.abs(slopes))))
    if not np.any(keep):
        # Constant target: keep one inert unit so the net is well formed.
        return ShallowNet(np.ones((1, 1)), [0.0], [0.0], origin_value)
    return ShallowNet(np.ones((int(keep.sum()), 1)), changes[keep], -knots[keep], origin_value)


def split_by_ray(X, w1, w2, tol=1e-9):
    """Radii of the samples on each ray plus their column indices."""
    X = nk.as_matrix(X, "X")
    c1 = w1 @ X
    c2 = w2 @ X
    on1 = (c1 > 0) & (np.linalg.norm(X - np.outer(w1, c1), axis=0) <= tol * np.maximum(1, np.abs(c1)))
    on2 = (c2 > 0) & (np.linalg.norm(X - np.outer(w2, c2), axis=0) <= tol * np.maximum(1, np.abs(c2)))
    if np.any(on1 & on2) or not np.all(on1 | on2):
        raise InvalidInputError("every sample must lie on exactly one of the two rays")
    return np.flatnonzero(on1), c1[on1], np.flatnonzero(on2), c2[on2]


def build_f_per_ray(X, y, w1, w2, atol=1e-8) -> ShallowNet:
    """Interpolant whose units on ray ``j`` all point along ``w_j``.

    Each ray gets a 1-D connect-the-dots fit in its radial coordinate with
    value 0 at the origin; all biases are nonpositive, so since
    ``w1^T w2 < 0`` a unit never fires on the other ray.
    """
    w1 = nk.as_vector(w1, "w1")
    w2 = nk.as_vector(w2, "w2")
    y = nk.as_vector(y, "y")
    i1, t1, i2, t2 = split_by_ray(X, w1, w2)
    h1 = fit_univariate_minnorm(t1, y[i1])
    h2 = fit_univariate_minnorm(t2, y[i2])
    W = np.vstack([np.outer(np.ones(h1.width), w1), np.outer(np.ones(h2.width), w2)])
    f = ShallowNet(W, np.concatenate([h1.a, h2.a]), np.concatenate([h1.b, h2.b]), 0.0)

    Z1 = f.W[: h1.width] @ X[:, i2] + f.b[: h1.width, None]
    Z2 = f.W[h1.width :] @ X[:, i1] + f.b[h1.width :, None]
    if np.any(Z1 > 0) or np.any(Z2 > 0):
        raise ConstructionInfeasibleError("a ray unit activates on the opposite ray")
    resid = np.max(np.abs(evaluate(f, X.T) - y))
    if resid > atol * max(1.0, float(np.max(np.abs(y)))):
        raise AgreementViolatedError(f"per-ray interpolant misses the data by {resid:.3e}", gap=float(resid))
    return f


def split_outer_weights(f: ShallowNet, w1, w2):
    """Outer weights of the units along ``w1`` and along ``w2``."""
    on1 = np.abs(f.W @ w1 - 1.0) < 1e-9
    on2 = np.abs(f.W @ w2 - 1.0) < 1e-9
    return f.a[on1], f.a[on2]


def aligned_direction(w1, w2) -> np.ndarray:
    d = np.asarray(w1, dtype=float) - np.asarray(w2, dtype=float)
    return d / np.linalg.norm(d)


def build_g_w0(f: ShallowNet, w1, w2, X=None, y=None, atol=1e-8) -> ShallowNet:
    """Replace every ray unit by ``±w0`` and rescale it to keep the fit.

    Units on ray ``j`` get ``a / |w_j^T w0|`` and ``|w_j^T w0| b``. If data
    is supplied the result is checked to interpolate it.
    """
    w1 = nk.as_vector(w1, "w1")
    w2 = nk.as_vector(w2, "w2")
    w0 = aligned_direction(w1, w2)
    on1 = np.abs(f.W @ w1 - 1.0) < 1e-9
    on2 = np.abs(f.W @ w2 - 1.0) < 1e-9
    if not np.all(on1 | on2):
        raise InvalidInputError("f has units not aligned with either ray")
    c = np.where(on1, abs(w1 @ w0), abs(w2 @ w0))
    W = np.where(on1[:, None], w0, -w0)
    g = ShallowNet(W, f.a / c, f.b * c, f.c)
    if X is not None:
        target = f(np.asarray(X).T) if y is None else np.asarray(y, dtype=float)
        resid = float(np.max(np.abs(g(np.asarray(X).T) - target)))
        if resid > atol * max(1.0, float(np.max(np.abs(target)))):
            raise AgreementViolatedError(f"aligned network misses the data by {resid:.3e}", gap=resid)
    return g


def phi3_g_closed(theta, a_l1) -> float:
    """``(||a||_1 / cos(theta / 2)) ** (2/3)``: ``Phi_3`` of the aligned network."""
    if not (0 < theta <= math.pi / 2):
        raise InvalidParameterError(f"theta must lie in (0, pi/2], got {theta}")
    if not a_l1 > 0:
        raise InvalidParameterError("a_l1 must be positive")
    return (a_l1 / math.cos(theta / 2)) ** (2.0 / 3.0)


def phi3_f_lower_closed(theta, a1_l1, a2_l1) -> float:
    """Closed-form lower bound ``(||a||_1^2 + 4 ||a1||_1 ||a2||_1 |sin theta|)^{1/3}`` on ``Phi_3(f)``."""
    total = a1_l1 + a2_l1
    return (total**2 + 4 * a1_l1 * a2_l1 * abs(math.sin(theta))) ** (1.0 / 3.0)


def theta_condition(theta, a1_l1, a2_l1) -> bool:
    """Sufficient condition for the aligned network to have the smaller ``Phi_3``."""
    if not (0 < theta <= math.pi / 2):
        raise InvalidParameterError(f"theta must lie in (0, pi/2], got {theta}")
    if a1_l1 <= 0 or a2_l1 <= 0:
        raise InvalidParameterError("group l1 norms must be positive")
    lhs = 1.0 / math.cos(theta / 2) ** 2
    rhs = 1.0 + 4.0 * a1_l1 * a2_l1 / (a1_l1 + a2_l1) ** 2 * abs(math.sin(theta))
    return lhs <= rhs + 1e-12


@dataclass
class RaysAnalysis:
    theta: float
    psi: float
    R2_f: float
    R2_g: float
    phi3_f: PhiBounds
    phi3_g_closed: float
    phi3_g_est: float
    condition_holds: bool
    a1_norm: float
    a2_norm: float
    f: ShallowNet = field(repr=False, default=None)
    g: ShallowNet = field(repr=False, default=None)

    @property
    def phi3_f_lower_closed(self) -> float:
        return phi3_f_lower_closed(self.theta, self.a1_norm, self.a2_norm)

    @property
    def status(self) -> str:
        if not self.condition_holds:
            return "no-claim"
        if self.phi3_g_closed < self.phi3_f.lower:
            return "certified"
        if self.phi3_g_closed < self.phi3_f.estimate:
            return "estimate-only"
        return "violated"

    def row(self) -> dict:
        return {
            "theta": self.theta,
            "psi": self.psi,
            "R2_f": self.R2_f,
            "R2_g": self.R2_g,
            "phi3_f_lower": self.phi3_f.lower,
            "phi3_f_est": self.phi3_f.estimate,
            "phi3_f_upper": self.phi3_f.upper,
            "phi3_g_closed": self.phi3_g_closed,
            "phi3_g_est": self.phi3_g_est,
            "cond_holds": int(self.condition_holds),
            "status": self.status,
        }


def analyze_rays(cfg: RaysConfig, opts=None) -> RaysAnalysis:
    opts = SolverOptions.from_dict(opts)
    X, y, w1, w2 = gen_rays(cfg)
    f = build_f_per_ray(X, y, w1, w2)
    g = build_g_w0(f, w1, w2, X, y)
    a1, a2 = split_outer_weights(f, w1, w2)
    n1, n2 = float(np.abs(a1).sum()), float(np.abs(a2).sum())
    theta = cfg.theta
    if n1 == 0 or n2 == 0:
        raise ConstructionInfeasibleError("one ray has all-zero outer weights")
    return RaysAnalysis(
        theta=theta,
        psi=cfg.psi,
        R2_f=phi2(f.W, f.a),
        R2_g=phi2(g.W, g.a),
        phi3_f=phi3_bounds(f.W, f.a, opts),
        phi3_g_closed=phi3_g_closed(theta, n1 + n2),
        phi3_g_est=phi_numeric(g.W, g.a, 3, opts).value,
        condition_holds=theta_condition(theta, n1, n2),
        a1_norm=n1,
        a2_norm=n2,
        f=f,
        g=g,
    )


def _sweep_point(args):
    template, psi, opts = args
    try:
        return analyze_rays(template.with_psi(float(psi)), opts).row()
    except ReprCostError as exc:
        log.warning("sweep point psi=%.6g failed: %s", psi, exc)
        row = {k: float("nan") for k in CSV_COLUMNS}
        row.update(theta=math.pi - psi, psi=float(psi), cond_holds=0, status=f"error: {exc}")
        return row


def sweep_theta(template: RaysConfig, psi_grid, opts=None, workers=1) -> list[dict]:
    """One CSV row per separation angle; failures become rows with an error status.

    Points are independent, so ``workers > 1`` maps them over a process
    pool; rows always come back in grid order.
    """
    jobs = [(template, float(psi), opts) for psi in psi_grid]
    if workers <= 1 or len(jobs) < 2:
        return [_sweep_point(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_sweep_point, jobs))


def rows_to_csv(rows, columns=CSV_COLUMNS) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
    return buf.getvalue()
