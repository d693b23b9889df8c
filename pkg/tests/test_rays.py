import csv
import io
import math

import numpy as np
import pytest

from reprcost.exceptions import InvalidInputError, InvalidParameterError
from reprcost.netmodel import evaluate
from reprcost.rays import (
    CSV_COLUMNS,
    RaysConfig,
    aligned_direction,
    analyze_rays,
    build_f_per_ray,
    build_g_w0,
    fit_univariate_minnorm,
    gen_rays,
    phi3_f_lower_closed,
    phi3_g_closed,
    ray_directions,
    rows_to_csv,
    split_outer_weights,
    sweep_theta,
    theta_condition,
)
from reprcost.repcost import SolverOptions, phi2, phi_numeric

FAST = SolverOptions(restarts=6, dual_restarts=4)


def test_config_validation():
    for psi in (math.pi / 2, math.pi, 1.0):
        with pytest.raises(InvalidParameterError):
            RaysConfig(psi=psi)
    with pytest.raises(InvalidParameterError):
        RaysConfig(psi=2.0, n1=1, n2=1, radii=[1.0, -1.0])
    cfg = RaysConfig(psi=2 * math.pi / 3)
    assert cfg.theta == pytest.approx(math.pi / 3)
    assert cfg.with_psi(2.5).psi == 2.5 and cfg.with_psi(2.5).n1 == cfg.n1


def test_gen_rays_unit_radii():
    cfg = RaysConfig(psi=2.0, n1=1, n2=1, radii=[1.0, 1.0], labels=[0.5, -0.5])
    X, y, w1, w2 = gen_rays(cfg)
    assert np.allclose(X, np.column_stack([w1, w2]))
    assert np.allclose(y, [0.5, -0.5])


def test_gen_rays_fig_setup_and_determinism():
    cfg = RaysConfig(psi=2 * math.pi / 3, seed=3)
    X, y, w1, w2 = gen_rays(cfg)
    assert np.allclose(w1, np.array([2.0, 1.0]) / math.sqrt(5))
    assert w1 @ w2 == pytest.approx(math.cos(2 * math.pi / 3))
    X2, y2, _, _ = gen_rays(cfg)
    assert np.array_equal(X, X2) and np.array_equal(y, y2)
    # separation: ray-1 samples on the negative side of w2 and vice versa
    assert np.all(w2 @ X[:, : cfg.n1] < 0) and np.all(w1 @ X[:, cfg.n1 :] < 0)


def test_gen_rays_higher_dimension():
    X, _, w1, w2 = gen_rays(RaysConfig(psi=2.2, d=4, seed=1))
    assert X.shape == (4, 8) and np.allclose(X[2:], 0.0)
    assert np.linalg.norm(w2) == pytest.approx(1.0)


def test_angle_identity():
    for psi in np.linspace(0.51 * math.pi, 0.99 * math.pi, 9):
        w1, w2 = ray_directions(RaysConfig(psi=psi))
        w0 = aligned_direction(w1, w2)
        c = math.cos((math.pi - psi) / 2)
        assert abs(w1 @ w0) == pytest.approx(c, abs=1e-12)
        assert abs(w2 @ w0) == pytest.approx(c, abs=1e-12)


def test_univariate_fit_examples(rng):
    one = fit_univariate_minnorm([1.0], [3.0])
    assert one.width == 1 and one.a[0] == pytest.approx(3.0) and one.b[0] == 0.0
    two = fit_univariate_minnorm([1.0, 2.0], [1.0, 1.0])
    assert two.width == 2
    assert evaluate(two, np.array([[1.0], [2.0]])) == pytest.approx([1.0, 1.0], abs=1e-10)
    t = np.sort(rng.uniform(0.1, 5, 7))
    y = rng.standard_normal(7)
    net = fit_univariate_minnorm(t, y)
    assert net.width <= 7
    assert np.max(np.abs(evaluate(net, t[:, None]) - y)) < 1e-10
    # linear extrapolation beyond the last knot
    s = (y[-1] - y[-2]) / (t[-1] - t[-2])
    assert evaluate(net, np.array([t[-1] + 1.0])) == pytest.approx(y[-1] + s)


def test_univariate_fit_rejects_duplicates():
    with pytest.raises(InvalidInputError):
        fit_univariate_minnorm([1.0, 1.0], [0.0, 1.0])
    with pytest.raises(InvalidInputError):
        fit_univariate_minnorm([0.0, 1.0], [0.0, 1.0])


def test_f_one_sample_per_ray():
    r = 1.7
    X, y, w1, w2 = gen_rays(RaysConfig(psi=2.0, n1=1, n2=1, radii=[r, r], labels=[1.0, 1.0]))
    f = build_f_per_ray(X, y, w1, w2)
    assert f.width == 2 and np.allclose(f.a, 1 / r)


def test_f_and_g_interpolate():
    X, y, w1, w2 = gen_rays(RaysConfig(psi=2 * math.pi / 3, seed=5))
    f = build_f_per_ray(X, y, w1, w2)
    assert np.max(np.abs(evaluate(f, X.T) - y)) < 1e-8
    a1, a2 = split_outer_weights(f, w1, w2)
    assert np.abs(a1).sum() > 0 and np.abs(a2).sum() > 0
    g = build_g_w0(f, w1, w2, X, y)
    assert np.max(np.abs(evaluate(g, X.T) - y)) < 1e-8
    assert np.linalg.matrix_rank(g.W) == 1
    c = math.cos(math.pi / 6)
    assert phi2(g.W, g.a) == pytest.approx(np.abs(f.a).sum() / c)
    assert phi2(f.W, f.a) < phi2(g.W, g.a)


def test_closed_form_examples():
    assert phi3_g_closed(math.pi / 2, 2.0) == pytest.approx(2.0)
    assert phi3_g_closed(1e-8, 1.0) == pytest.approx(1.0)
    vals = [phi3_g_closed(t, 1.5) for t in np.linspace(0.05, math.pi / 2, 20)]
    assert all(x < y for x, y in zip(vals, vals[1:]))
    with pytest.raises(InvalidParameterError):
        phi3_g_closed(2.0, 1.0)
    assert phi3_f_lower_closed(math.pi / 2, 1.0, 1.0) == pytest.approx(8 ** (1 / 3))


def test_theta_condition_examples():
    assert theta_condition(math.pi / 2, 1.0, 1.0)
    assert theta_condition(math.pi / 3, 1.0, 1.0)
    assert not theta_condition(math.pi / 2, 1.0, 1e-9)
    with pytest.raises(InvalidParameterError):
        theta_condition(0.0, 1.0, 1.0)


def test_g_closed_matches_solver():
    X, y, w1, w2 = gen_rays(RaysConfig(psi=0.6 * math.pi, seed=2))
    f = build_f_per_ray(X, y, w1, w2)
    g = build_g_w0(f, w1, w2)
    theta = 0.4 * math.pi
    assert phi_numeric(g.W, g.a, 3, FAST).value == pytest.approx(
        phi3_g_closed(theta, np.abs(f.a).sum()), rel=1e-3
    )


def test_analysis_record():
    an = analyze_rays(RaysConfig(psi=0.7 * math.pi, seed=1), FAST)
    assert an.R2_f < an.R2_g
    assert an.phi3_f.ordered
    assert an.phi3_f.estimate >= an.phi3_f_lower_closed - 1e-3
    assert an.phi3_g_closed == pytest.approx(phi3_g_closed(an.theta, an.a1_norm + an.a2_norm), abs=1e-12)
    if an.condition_holds:
        assert an.status in ("certified", "estimate-only")
        assert an.phi3_g_closed < an.phi3_f.estimate
    row = an.row()
    assert list(row) == CSV_COLUMNS


def test_sweep_csv_schema_and_order():
    grid = np.linspace(0.55 * math.pi, 0.9 * math.pi, 4)
    rows = sweep_theta(RaysConfig(psi=grid[0], seed=0), grid, FAST)
    text = rows_to_csv(rows)
    parsed = list(csv.DictReader(io.StringIO(text)))
    assert list(parsed[0]) == CSV_COLUMNS
    assert [float(r["psi"]) for r in parsed] == pytest.approx(list(grid))
    assert all(float(r["R2_f"]) < float(r["R2_g"]) for r in parsed)
    assert rows_to_csv(sweep_theta(RaysConfig(psi=grid[0], seed=0), grid, FAST)) == text


def test_sweep_parallel_matches_serial():
    grid = np.linspace(0.6 * math.pi, 0.8 * math.pi, 3)
    tmpl = RaysConfig(psi=grid[0], seed=4)
    assert rows_to_csv(sweep_theta(tmpl, grid, FAST, workers=2)) == rows_to_csv(sweep_theta(tmpl, grid, FAST))


def test_sweep_records_errors_and_continues():
    # labels that are zero on ray 2 leave that ray without units
    tmpl = RaysConfig(psi=2.0, n1=2, n2=2, radii=[1.0, 2.0, 1.0, 2.0], labels=[1.0, -1.0, 0.0, 0.0])
    rows = sweep_theta(tmpl, [2.0, 2.2], FAST)
    assert len(rows) == 2 and all(r["status"].startswith("error") for r in rows)
    assert "nan" in rows_to_csv(rows)
