import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from reprcost.exceptions import InvalidInputError, InvalidParameterError, StructureAbsentError
from reprcost.numkernel import spectral_norm
from reprcost.repcost import (
    PhiBounds,
    SolverOptions,
    grid_minimize,
    lpq_norm_form,
    oracle_grid_lambda,
    phi2,
    phi3_bounds,
    phi3_dual_ascent,
    phi3_dual_value,
    phi3_upper_svd,
    phi_grouped,
    phi_numeric,
    phi_objective,
    simplex_grid,
)
from reprcost.verify import grouped_instance, rank_one_instance

FAST = SolverOptions(restarts=6, dual_restarts=4)


# closed forms --------------------------------------------------------------------------


def test_phi2_examples(rng):
    W = rng.standard_normal((5, 3))
    W /= np.linalg.norm(W, axis=1, keepdims=True)
    a = rng.standard_normal(5)
    assert phi2(W, a) == pytest.approx(np.abs(a).sum())
    assert phi2([[0.6, 0.8]], [2.0]) == pytest.approx(2.0)
    assert phi2([[1.0, 0.0], [0.0, 0.5]], [1.0, -2.0]) == pytest.approx(2.0)


def test_phi2_shape_mismatch():
    with pytest.raises(InvalidInputError):
        phi2(np.eye(2), [1.0])


@pytest.mark.parametrize("L", [2, 3, 4, 6])
def test_grouped_rank_one(rng, L):
    W, a = rank_one_instance(rng, 5, 3)
    assert phi_grouped(W, a, L) == pytest.approx(np.abs(a).sum() ** (2 / L))


def test_grouped_examples():
    assert phi_grouped(np.eye(2), [1.0, 1.0], 3) == pytest.approx(2.0)
    W = np.array([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    a = np.array([1.0, 2.0, 1.0])
    assert phi_grouped(W, a, 3) == pytest.approx(3 ** (2 / 3) + 1, abs=1e-4)
    assert phi_numeric(W, a, 3, FAST).value == pytest.approx(3.0801, abs=1e-4)


def test_grouped_rejects_unstructured():
    with pytest.raises(StructureAbsentError):
        phi_grouped(np.array([[1.0, 0.0], [1.0, 1.0]]), [1.0, 1.0], 3)


def test_grouped_ignores_zero_rows():
    W = np.array([[1.0, 0.0], [0.0, 0.0], [0.0, 2.0]])
    assert phi_grouped(W, [1.0, 5.0, 1.0], 3) == pytest.approx(1 + 2 ** (2 / 3))


# numerical solver -------------------------------------------------------------------------


def test_numeric_examples():
    assert phi_numeric([[1.0], [1.0]], [1.0, 1.0], 3, FAST).value == pytest.approx(2 ** (2 / 3), rel=1e-6)
    est = phi_numeric(np.eye(2), [1.0, 1.0], 3, FAST)
    assert est.value == pytest.approx(2.0, rel=1e-8)
    assert est.converged


def test_numeric_matches_oracle_random(rng):
    W = rng.standard_normal((4, 3))
    W /= np.linalg.norm(W, axis=1, keepdims=True)
    a = rng.standard_normal(4)
    est = phi_numeric(W, a, 3, FAST).value
    assert est == pytest.approx(oracle_grid_lambda(W, a, 3, 200), rel=1e-3)


def test_numeric_estimate_invariants(rng):
    W = rng.standard_normal((5, 3))
    a = rng.standard_normal(5)
    for L in (3, 4):
        est = phi_numeric(W, a, L, FAST)
        lam = est.lambda_opt
        assert np.linalg.norm(lam) == pytest.approx(1.0, abs=1e-10)
        assert np.all(lam >= FAST.lambda_floor)
        assert est.value == pytest.approx(phi_objective(W, a, L, lam), rel=1e-10)
        assert est.best_restart_gap >= 0


def test_numeric_l2_equals_path_norm(rng):
    W = rng.standard_normal((6, 4))
    a = rng.standard_normal(6)
    assert phi_numeric(W, a, 2).value == pytest.approx(phi2(W, a), rel=1e-12)


def test_numeric_drops_dead_units():
    est = phi_numeric(np.array([[1.0, 0.0], [0.0, 0.0], [0.0, 1.0]]), [1.0, 3.0, 0.0], 3, FAST)
    assert est.value == pytest.approx(1.0, rel=1e-8)
    assert phi_numeric(np.zeros((2, 2)), [1.0, 1.0], 3).value == 0.0


def test_numeric_rejects_bad_depth():
    with pytest.raises(InvalidParameterError):
        phi_numeric(np.eye(2), [1.0, 1.0], 1)


def test_rescaling_invariance(rng):
    W = rng.standard_normal((4, 3))
    a = rng.standard_normal(4)
    mu = rng.uniform(0.2, 5.0, 4)
    base = phi_numeric(W, a, 3, FAST).value
    scaled = phi_numeric(mu[:, None] * W, a / mu, 3, FAST).value
    assert scaled == pytest.approx(base, rel=1e-3)


def test_permutation_invariance(rng):
    W = rng.standard_normal((5, 3))
    a = rng.standard_normal(5)
    perm = rng.permutation(5)
    for L in (3, 4):
        assert phi_numeric(W[perm], a[perm], L, FAST).value == pytest.approx(
            phi_numeric(W, a, L, FAST).value, rel=1e-10
        )


def test_depth_monotone_on_rank_one(rng):
    W, a = rank_one_instance(rng, 4, 3)
    a *= 2.0 / np.abs(a).sum() + 1.0
    vals = [phi_numeric(W, a, L, FAST).value for L in (2, 3, 4, 5)]
    assert all(x > y for x, y in zip(vals, vals[1:]))


@settings(max_examples=15, deadline=None)
@given(st.integers(1, 6), st.integers(0, 10_000))
def test_univariate_collapse_property(K, seed):
    rng = np.random.default_rng(seed)
    W = rng.standard_normal((K, 1))
    a = rng.standard_normal(K)
    for L in (3, 4):
        assert phi_numeric(W, a, L, FAST).value == pytest.approx(phi2(W, a) ** (2 / L), rel=1e-3)


def test_solver_options_roundtrip():
    opts = SolverOptions.from_dict({"restarts": 3, "seed": 9})
    assert SolverOptions.from_dict(opts.to_dict()) == opts
    with pytest.raises(InvalidParameterError):
        SolverOptions.from_dict({"restart": 3})


# grid oracle ---------------------------------------------------------------------------------


def test_oracle_examples():
    assert oracle_grid_lambda([[3.0, 4.0]], [2.0], 3, 50) == pytest.approx((2 * 5) ** (2 / 3))
    assert oracle_grid_lambda(np.eye(2), [1.0, 1.0], 3, 200) == pytest.approx(2.0, abs=1e-3)
    W = np.array([[1.0, 0.0], [-1.0, 0.0], [1.0, 0.0]])
    a = np.array([1.0, 2.0, 0.5])
    assert oracle_grid_lambda(W, a, 3, 200) == pytest.approx(3.5 ** (2 / 3), abs=1e-3)


def test_oracle_rejects_large_k():
    with pytest.raises(InvalidParameterError):
        oracle_grid_lambda(np.ones((7, 2)), np.ones(7), 3)


def test_simplex_grid_points():
    t = np.vstack(list(simplex_grid(3, 10))) ** 2
    assert len(t) == math.comb(12, 2)
    assert t.min() == pytest.approx(1 / 100)
    interior = t[np.all(t > 0.05, axis=1)]
    assert np.allclose(interior.sum(axis=1), 1.0)


def test_grid_minimize_uniform_product():
    val, lam = grid_minimize(lambda L: np.prod(1.0 / L**2, axis=1), 3, 60)
    assert np.allclose(lam, 1 / math.sqrt(3), atol=1e-12)
    assert val == pytest.approx(27.0)


# dual side and bounds ---------------------------------------------------------------------------


def test_dual_value_examples():
    assert phi3_dual_value(np.eye(2), [1.0, 1.0], np.eye(2)) == pytest.approx(2.0)
    Q = np.full((2, 1), 1 / math.sqrt(2))
    assert phi3_dual_value([[1.0], [1.0]], [1.0, 1.0], Q) == pytest.approx(2 ** (2 / 3))
    assert phi3_dual_value(np.eye(2), [1.0, 1.0], np.zeros((2, 2))) == 0.0


def test_dual_value_rejects_infeasible():
    with pytest.raises(InvalidParameterError):
        phi3_dual_value(np.eye(2), [1.0, 1.0], 1.1 * np.eye(2))


def test_dual_ascent_tight_cases(rng):
    val, Q = phi3_dual_ascent(np.eye(2), [1.0, 1.0], FAST)
    assert val >= 2 - 1e-6 and spectral_norm(Q) <= 1 + 1e-9
    W, a = rank_one_instance(rng, 4, 3)
    val, _ = phi3_dual_ascent(W, a, FAST)
    assert val >= np.abs(a).sum() ** (2 / 3) - 1e-6


def test_upper_svd_examples(rng):
    assert phi3_upper_svd(np.eye(2), [1.0, 1.0]) == pytest.approx(2.0)
    assert phi3_upper_svd([[1.0], [1.0]], [1.0, 1.0]) == pytest.approx(2 ** (2 / 3))
    assert lpq_norm_form(np.eye(3), [1.0, 0.0, 0.0]) == pytest.approx(1.0)
    W, a = rank_one_instance(rng, 5, 2)
    assert lpq_norm_form(W, a) == pytest.approx(np.abs(a).sum() ** (2 / 3))


def test_lpq_matches_upper_svd(rng):
    for _ in range(20):
        K, d = rng.integers(1, 7, size=2)
        W, a = rng.standard_normal((K, d)), rng.standard_normal(K)
        assert lpq_norm_form(W, a) == pytest.approx(phi3_upper_svd(W, a), rel=1e-10)


def test_upper_svd_tight_with_tied_singular_values(rng):
    # two groups of equal size give a repeated singular value
    W = np.array([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.0, -1.0]])
    R, _ = np.linalg.qr(rng.standard_normal((2, 2)))
    a = np.array([1.0, 2.0, 0.5, 1.5])
    assert phi3_upper_svd(W @ R, a) == pytest.approx(phi_grouped(W @ R, a, 3), rel=1e-10)


def test_bounds_examples(rng):
    b = phi3_bounds(np.eye(2), [1.0, 1.0], FAST)
    assert isinstance(b, PhiBounds)
    assert (b.lower, b.estimate, b.upper) == pytest.approx((2, 2, 2), abs=1e-4)
    W, a = grouped_instance(rng)
    b = phi3_bounds(W, a, FAST)
    assert b.lower == pytest.approx(b.upper, rel=1e-4) and b.estimate == pytest.approx(b.upper, rel=1e-4)
    for _ in range(3):
        b = phi3_bounds(rng.standard_normal((5, 3)), rng.standard_normal(5), FAST)
        assert b.ordered
        assert b.lower <= b.estimate + 1e-6 <= b.upper + 2e-6
        assert spectral_norm(b.Q_cert) <= 1 + 1e-9
