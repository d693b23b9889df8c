import json

import pytest

from reprcost import verify
from reprcost.repcost import SolverOptions

FAST = SolverOptions(restarts=6, dual_restarts=4)


def test_suite_result_shape():
    r = verify.factorization(n_matrices=3)
    assert r.passed and r.name == "factorization"
    assert json.dumps(r.to_dict())
    assert r.line().startswith("[PASS] factorization")


@pytest.mark.parametrize(
    "fn, kwargs",
    [
        (verify.univariate, dict(n_nets=5)),
        (verify.grouped, dict(n_instances=4)),
        (verify.sandwich, dict(n_random=4, n_structured=3)),
        (verify.oracle, dict(n_instances=3, resolution=60)),
        (verify.lambda_lemmas, dict(resolution=60, K_values=(2, 3))),
        (verify.rank_one_preferred, dict(n_pairs=4)),
        (verify.two_rays, dict(points=4)),
        (verify.gradient, dict(n_nets=3)),
    ],
)
def test_small_suites_pass(fn, kwargs):
    if "opts" in fn.__code__.co_varnames:
        kwargs = {**kwargs, "opts": FAST}
    r = fn(**kwargs)
    assert r.passed, r.failures


def test_failures_are_data():
    r = verify.univariate(n_nets=3, tol=0.0)
    assert isinstance(r.failures, list)
    assert r.passed == (not r.failures)


def test_unknown_suite():
    with pytest.raises(KeyError):
        verify.verify_suites(["nope"])
