"""Numerical checks of the structural results, runnable as named suites.

Each suite returns a :class:`SuiteResult` holding the measured gaps and a
pass flag; failures are data, never exceptions.
"""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import datasets
from .netmodel import ShallowNet, balanced_factorization, collapse, factor_cost_sum
from .numkernel import schatten_qnorm_pow
from .rays import RaysConfig, analyze_rays, phi3_f_lower_closed, sweep_theta
from .repcost import (
    grid_minimize,
    oracle_grid_lambda,
    phi2,
    phi3_bounds,
    phi_grouped,
    phi_numeric,
)
from .subspace import ProjectionSpec, project_data_check
from .trainer import TrainConfig, _unpack, init_params, loss_and_grads, train


@dataclass
class SuiteResult:
    name: str
    passed: bool
    metrics: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)
    seconds: float = 0.0

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        shown = ", ".join(f"{k}={_fmt(v)}" for k, v in self.metrics.items() if not isinstance(v, (list, dict)))
        return f"[{status}] {self.name}: {shown} ({self.seconds:.1f}s)"

    def to_dict(self) -> dict:
        return asdict(self)


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.3g}"
    return str(v)


def _timed(fn):
    def wrapper(*args, **kwargs):
        t0 = time.perf_counter()
        res = fn(*args, **kwargs)
        res.seconds = time.perf_counter() - t0
        return res

    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


# instance generators --------------------------------------------------------------


def random_orthonormal(rng, d, m):
    """``m`` orthonormal vectors in ``R^d`` as rows."""
    Q, R = np.linalg.qr(rng.standard_normal((d, d)))
    return (Q * np.sign(np.diag(R)))[:, :m].T


def grouped_instance(rng, d=None, m=None, K=None, unit_rows=True):
    """Rows drawn from ``±v_1..±v_m`` (orthonormal); every group is nonempty."""
    d = d or int(rng.integers(2, 6))
    m = m or int(rng.integers(1, d + 1))
    K = K or int(rng.integers(m, m + 5))
    V = random_orthonormal(rng, d, m)
    labels = np.concatenate([np.arange(m), rng.integers(0, m, K - m)])
    signs = rng.choice([-1.0, 1.0], K)
    W = signs[:, None] * V[labels]
    if not unit_rows:
        W *= rng.uniform(0.3, 3.0, K)[:, None]
    a = rng.standard_normal(K)
    return W, a


def rank_one_instance(rng, K, d):
    v = rng.standard_normal(d)
    v /= np.linalg.norm(v)
    W = rng.choice([-1.0, 1.0], K)[:, None] * v
    return W, rng.standard_normal(K)


# suites -----------------------------------------------------------------------------


@_timed
def univariate(n_nets=50, K_max=8, depths=(2, 3, 4, 5), seed=0, tol=1e-3, opts=None):
    """Univariate inputs: ``Phi_L = (path norm)^{2/L}``."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    failures = []
    for i in range(n_nets):
        K = int(rng.integers(1, K_max + 1))
        W = rng.standard_normal((K, 1))
        a = rng.standard_normal(K)
        base = phi2(W, a)
        for L in depths:
            est = phi_numeric(W, a, L, opts).value
            gap = abs(est / base ** (2.0 / L) - 1.0)
            worst = max(worst, gap)
            if gap >= tol:
                failures.append(f"net {i}, L={L}: rel gap {gap:.3e}")
    return SuiteResult("univariate", not failures, {"max_rel_gap": worst, "instances": n_nets}, failures)


@_timed
def grouped(n_instances=30, depths=(3, 4), seed=1, tol=1e-3, opts=None):
    """Grouped orthonormal rows: closed form versus the numerical minimum."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    failures = []
    for i in range(n_instances):
        W, a = grouped_instance(rng, unit_rows=(i % 2 == 0))
        for L in depths:
            closed = phi_grouped(W, a, L)
            est = phi_numeric(W, a, L, opts).value
            gap = abs(est - closed) / closed
            worst = max(worst, gap)
            if gap >= tol:
                failures.append(f"instance {i}, L={L}: rel gap {gap:.3e}")
    return SuiteResult("grouped", not failures, {"max_rel_gap": worst, "instances": n_instances}, failures)


@_timed
def sandwich(n_random=100, n_structured=20, K_max=8, d_max=5, seed=2, slack=1e-6, agree_tol=1e-4, opts=None):
    """Dual lower bound <= estimate <= SVD upper bound; equality on grouped rows."""
    rng = np.random.default_rng(seed)
    failures = []
    worst_order = -np.inf
    for i in range(n_random):
        K = int(rng.integers(1, K_max + 1))
        d = int(rng.integers(1, d_max + 1))
        W = rng.standard_normal((K, d))
        a = rng.standard_normal(K)
        b = phi3_bounds(W, a, opts)
        viol = max(b.lower - b.estimate, b.estimate - b.upper)
        worst_order = max(worst_order, viol)
        if viol > slack:
            failures.append(f"random {i}: lower={b.lower:.10g} est={b.estimate:.10g} upper={b.upper:.10g}")
    worst_agree = 0.0
    for i in range(n_structured):
        W, a = grouped_instance(rng)
        b = phi3_bounds(W, a, opts)
        spread = (max(b.lower, b.estimate, b.upper) - min(b.lower, b.estimate, b.upper)) / b.estimate
        worst_agree = max(worst_agree, spread)
        if spread > agree_tol:
            failures.append(f"structured {i}: lower={b.lower:.10g} est={b.estimate:.10g} upper={b.upper:.10g}")
    return SuiteResult(
        "sandwich",
        not failures,
        {"max_order_violation": float(worst_order), "max_structured_spread": worst_agree},
        failures,
    )


@_timed
def oracle(n_instances=20, K_max=4, resolution=200, depths=(3, 4, 5), seed=3, tol=1e-3, opts=None):
    """Solver versus exhaustive grid search over ``lambda``."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    failures = []
    for i in range(n_instances):
        K = int(rng.integers(2, K_max + 1))
        d = int(rng.integers(2, 4))
        W = rng.standard_normal((K, d))
        W /= np.linalg.norm(W, axis=1, keepdims=True)
        a = rng.standard_normal(K)
        L = depths[i % len(depths)]
        est = phi_numeric(W, a, L, opts).value
        ref = oracle_grid_lambda(W, a, L, resolution)
        gap = abs(est - ref) / ref
        worst = max(worst, gap)
        if gap >= tol:
            failures.append(f"instance {i} (K={K}, L={L}): solver {est:.8g} vs grid {ref:.8g}")
    return SuiteResult("oracle", not failures, {"max_rel_gap": worst, "resolution": resolution}, failures)


@_timed
def lambda_lemmas(resolution=200, K_values=(2, 3, 4), n_weight_vectors=3, seed=4):
    """Grid argmins of the two auxiliary ``lambda`` problems.

    ``sum a_k^2 / lam_k^2`` is minimized at ``lam_k ∝ sqrt|a_k|`` with value
    ``||a||_1^2``; ``prod 1 / lam_k^2`` at the uniform vector with value
    ``K^K``.  Locations are compared in ``t = lam^2`` coordinates with a
    tolerance of one grid step; values with a relative tolerance of one grid
    step.
    """
    rng = np.random.default_rng(seed)
    step = 1.0 / resolution
    failures = []
    worst_loc = worst_val = 0.0
    for K in K_values:
        for j in range(n_weight_vectors):
            a = rng.uniform(0.2, 2.0, K) * rng.choice([-1, 1], K)
            val, lam = grid_minimize(lambda L_: np.sum(a**2 / L_**2, axis=1), K, resolution)
            t_star = np.abs(a) / np.abs(a).sum()
            loc = float(np.max(np.abs(lam**2 - t_star)))
            rel = abs(val - np.abs(a).sum() ** 2) / np.abs(a).sum() ** 2
            worst_loc, worst_val = max(worst_loc, loc), max(worst_val, rel)
            if loc > step or rel > step:
                failures.append(f"weighted K={K}: location error {loc:.2e}, value error {rel:.2e}")
        val, lam = grid_minimize(lambda L_: np.prod(1.0 / L_**2, axis=1), K, resolution)
        loc = float(np.max(np.abs(lam**2 - 1.0 / K)))
        rel = abs(val - K**K) / K**K
        worst_loc, worst_val = max(worst_loc, loc), max(worst_val, rel)
        if loc > step or rel > step:
            failures.append(f"product K={K}: location error {loc:.2e}, value error {rel:.2e}")
    return SuiteResult(
        "lambda_lemmas",
        not failures,
        {"max_location_error": worst_loc, "max_value_error": worst_val, "grid_step": step},
        failures,
    )


def rank_pair(rng, K=None, d=None):
    """``(W_f, a_f, W_g, a_g)``: unit rows, equal ``||a||_1``, ``rank W_f > 1 = rank W_g``."""
    K = K or int(rng.integers(2, 7))
    d = d or int(rng.integers(2, 5))
    while True:
        Wf = rng.standard_normal((K, d))
        Wf /= np.linalg.norm(Wf, axis=1, keepdims=True)
        if np.linalg.matrix_rank(Wf, tol=1e-6) > 1:
            break
    af = rng.standard_normal(K)
    Wg, ag = rank_one_instance(rng, int(rng.integers(1, 7)), d)
    ag *= np.abs(af).sum() / np.abs(ag).sum()
    return Wf, af, Wg, ag


@_timed
def rank_one_preferred(n_pairs=20, seed=5, opts=None):
    """Equal path norm, unit rows: the rank-one network has the smaller ``Phi_3``."""
    rng = np.random.default_rng(seed)
    failures = []
    margins = []
    certified = 0
    for i in range(n_pairs):
        Wf, af, Wg, ag = rank_pair(rng)
        bf = phi3_bounds(Wf, af, opts)
        g_val = phi_numeric(Wg, ag, 3, opts).value
        margin = bf.estimate - g_val
        margins.append(margin)
        certified += int(bf.lower > g_val)
        if not margin > 0:
            failures.append(f"pair {i}: Phi3(f)={bf.estimate:.10g} Phi3(g)={g_val:.10g}")
    return SuiteResult(
        "rank_one_preferred",
        not failures,
        {"min_margin": float(min(margins)), "certified_by_dual": certified, "pairs": n_pairs},
        failures,
    )


@_timed
def two_rays(points=45, psi_min=0.51 * math.pi, psi_max=0.95 * math.pi, n_per_ray=4, seed=6, tol=1e-3, opts=None):
    """Two-rays sweep: path-norm ordering, threshold claim, and the closed-form lower bound."""
    template = RaysConfig(psi=psi_min, n1=n_per_ray, n2=n_per_ray, seed=seed)
    rows = sweep_theta(template, np.linspace(psi_min, psi_max, points), opts)
    failures = []
    n_cond = 0
    worst_lb = -np.inf
    for r in rows:
        if r["status"].startswith("error"):
            failures.append(f"psi={r['psi']:.4f}: {r['status']}")
            continue
        if not r["R2_f"] < r["R2_g"]:
            failures.append(f"psi={r['psi']:.4f}: R2_f={r['R2_f']:.8g} >= R2_g={r['R2_g']:.8g}")
        if r["cond_holds"]:
            n_cond += 1
            if not r["phi3_g_closed"] < r["phi3_f_est"]:
                failures.append(f"psi={r['psi']:.4f}: condition holds but Phi3(g) >= Phi3(f)")
    # the closed-form lower bound needs per-ray l1 norms, so re-analyze a subsample
    for psi in np.linspace(psi_min, psi_max, points)[:: max(1, points // 9)]:
        an = analyze_rays(template.with_psi(float(psi)), opts)
        lb = phi3_f_lower_closed(an.theta, an.a1_norm, an.a2_norm)
        worst_lb = max(worst_lb, lb - an.phi3_f.estimate)
        if an.phi3_f.estimate < lb - tol:
            failures.append(f"psi={psi:.4f}: estimate {an.phi3_f.estimate:.8g} below closed-form bound {lb:.8g}")
    return SuiteResult(
        "two_rays",
        not failures,
        {"points": len(rows), "condition_points": n_cond, "max_lower_bound_excess": float(worst_lb)},
        failures,
    )


@_timed
def factorization(n_matrices=30, depths=(3, 4, 5), seed=7, tol=1e-9):
    """Balanced factors attain ``(L-1) ||W||_{S^q}^q`` and multiply back to ``W``."""
    rng = np.random.default_rng(seed)
    worst_cost = worst_rec = 0.0
    failures = []
    for i in range(n_matrices):
        K, d = int(rng.integers(1, 8)), int(rng.integers(1, 6))
        net = ShallowNet(rng.standard_normal((K, d)), rng.standard_normal(K), np.zeros(K), 0.0)
        for L in depths:
            deep = balanced_factorization(net, L)
            target = (L - 1) * schatten_qnorm_pow(net.W, 2.0 / (L - 1))
            c_gap = abs(factor_cost_sum(deep) - target) / target
            r_gap = np.linalg.norm(collapse(deep).W - net.W) / np.linalg.norm(net.W)
            worst_cost, worst_rec = max(worst_cost, c_gap), max(worst_rec, r_gap)
            if c_gap > tol or r_gap > tol:
                failures.append(f"matrix {i}, L={L}: cost gap {c_gap:.2e}, reconstruction {r_gap:.2e}")
    return SuiteResult(
        "factorization",
        not failures,
        {"max_cost_rel_gap": worst_cost, "max_reconstruction_rel_gap": float(worst_rec)},
        failures,
    )


COLINEAR_CONFIG = dict(L=3, widths=40, lr=0.05, weight_decay=3e-4, epochs=15000, init_scale=0.2, momentum=0.9)
DEPTH_TREND_CONFIG = dict(widths=40, lr=0.05, weight_decay=3e-4, epochs=15000, init_scale=0.2, momentum=0.9)


@_timed
def colinear_training(seeds=range(5), mse_tol=1e-4, ratio_tol=0.05, invariance_tol=1e-2, n_probes=100):
    """Weight decay on colinear data: rank-one effective weights, invariance off the line."""
    ratios, invariance, losses = [], [], []
    for seed in seeds:
        X, y, u = datasets.colinear(seed)
        res = train(X, y, TrainConfig(seed=seed, **COLINEAR_CONFIG))
        probes = np.random.default_rng(1000 + seed).uniform(-3, 3, (n_probes, X.shape[0]))
        gap = project_data_check(res.net, ProjectionSpec(u[:, None]), probes)
        ratios.append(res.sv_ratio)
        invariance.append(gap / np.max(np.abs(y)))
        losses.append(res.final_loss)
    med = {
        "median_mse": float(np.median(losses)),
        "max_mse": float(np.max(losses)),
        "median_sv_ratio": float(np.median(ratios)),
        "median_invariance_gap": float(np.median(invariance)),
    }
    failures = []
    if med["max_mse"] > mse_tol:
        failures.append(f"training MSE {med['max_mse']:.2e} > {mse_tol}")
    if med["median_sv_ratio"] >= ratio_tol:
        failures.append(f"median sv ratio {med['median_sv_ratio']:.3g} >= {ratio_tol}")
    if med["median_invariance_gap"] > invariance_tol:
        failures.append(f"median invariance gap {med['median_invariance_gap']:.3g} > {invariance_tol}")
    return SuiteResult("colinear_training", not failures, med, failures)


@_timed
def depth_trend(seeds=range(5), depths=(2, 3, 4)):
    """Two-rays data: median ``sigma_2 / sigma_1`` of the trained effective weights falls with depth."""
    medians = {}
    for L in depths:
        ratios = []
        for seed in seeds:
            X, y = datasets.two_rays(seed)
            ratios.append(train(X, y, TrainConfig(L=L, seed=seed, **DEPTH_TREND_CONFIG)).sv_ratio)
        medians[f"L{L}_median_sv_ratio"] = float(np.median(ratios))
    vals = list(medians.values())
    ok = all(x > y for x, y in zip(vals, vals[1:]))
    return SuiteResult("depth_trend", ok, medians, [] if ok else [f"not strictly decreasing: {vals}"])


def finite_difference_check(params, X, y, weight_decay, h=1e-5):
    """Relative error ``||g - g_fd|| / ||g||`` of the analytic gradient."""
    _, _, grads = loss_and_grads(params, X, y, weight_decay)
    g = np.concatenate([gr.ravel() for gr in grads])
    fd = []
    for p in params:
        for idx in np.ndindex(p.shape):
            old = p[idx]
            p[idx] = old + h
            fp = loss_and_grads(params, X, y, weight_decay)[0]
            p[idx] = old - h
            fm = loss_and_grads(params, X, y, weight_decay)[0]
            p[idx] = old
            fd.append((fp - fm) / (2 * h))
    fd = np.array(fd)
    return float(np.linalg.norm(g - fd) / max(np.linalg.norm(g), 1e-300))


@_timed
def gradient(n_nets=10, seed=8, tol=1e-4, hinge_margin=1e-3):
    """Analytic gradients of MSE + weight decay against central differences.

    Sample sets with any pre-activation within ``hinge_margin`` of zero are
    redrawn so the finite-difference stencil never crosses a ReLU kink.
    """
    rng = np.random.default_rng(seed)
    worst = 0.0
    failures = []
    for i in range(n_nets):
        L = int(rng.integers(2, 5))
        d = int(rng.integers(1, 4))
        cfg = TrainConfig(L=L, widths=int(rng.integers(2, 6)), seed=int(rng.integers(1 << 30)), init_scale=1.0)
        net = init_params(cfg, d)
        while True:
            X = rng.standard_normal((d, 7))
            Z = collapse(net).W @ X + net.b[:, None]
            if np.min(np.abs(Z)) > hinge_margin:
                break
        y = rng.standard_normal(7)
        err = finite_difference_check(_unpack(net), X, y, weight_decay=0.01)
        worst = max(worst, err)
        if err > tol:
            failures.append(f"net {i} (L={L}): relative gradient error {err:.2e}")
    return SuiteResult("gradient", not failures, {"max_rel_error": worst, "nets": n_nets}, failures)


SUITES = {
    "univariate": univariate,
    "grouped": grouped,
    "sandwich": sandwich,
    "oracle": oracle,
    "lambda_lemmas": lambda_lemmas,
    "rank_one_preferred": rank_one_preferred,
    "two_rays": two_rays,
    "factorization": factorization,
    "colinear_training": colinear_training,
    "depth_trend": depth_trend,
    "gradient": gradient,
}

_SOLVER_SUITES = {"univariate", "grouped", "sandwich", "oracle", "rank_one_preferred", "two_rays"}


def verify_suites(names=None, opts=None) -> list:
    """Run the named suites (all by default) in a fixed order."""
    names = list(SUITES) if names in (None, "all") else list(names)
    unknown = [n for n in names if n not in SUITES]
    if unknown:
        raise KeyError(f"unknown suites: {unknown}; available: {sorted(SUITES)}")
    results = []
    for n in names:
        kwargs = {"opts": opts} if opts is not None and n in _SOLVER_SUITES else {}
        results.append(SUITES[n](**kwargs))
    return results
