import json

import numpy as np
import pytest

from reprcost.exceptions import InvalidInputError, InvalidParameterError
from reprcost.netmodel import (
    DeepNet,
    ShallowNet,
    as_deep,
    balanced_factorization,
    collapse,
    cost,
    dump_net,
    evaluate,
    factor_cost_sum,
    load_net,
    net_from_dict,
    random_shallow,
    rescale_units,
)
from reprcost.numkernel import schatten_qnorm_pow


def unit_net():
    return ShallowNet(np.array([[1.0, 0.0]]), [1.0], [0.0], 0.0)


def test_eval_examples():
    net = unit_net()
    assert evaluate(net, np.array([2.0, -5.0])) == 2.0
    assert evaluate(net, np.array([-2.0, 7.0])) == 0.0


def test_eval_dimension_mismatch():
    with pytest.raises(InvalidInputError):
        evaluate(unit_net(), np.array([1.0, 2.0, 3.0]))


def test_shape_validation():
    with pytest.raises(InvalidInputError):
        ShallowNet(np.ones((2, 3)), [1.0], [0.0, 0.0], 0.0)
    with pytest.raises(InvalidInputError):
        DeepNet((np.ones((2, 3)), np.ones((2, 4))), [1.0, 1.0], [0.0, 0.0], 0.0)


def test_collapse_matches_deep(rng):
    layers = (rng.standard_normal((5, 3)), rng.standard_normal((4, 5)), rng.standard_normal((6, 4)))
    deep = DeepNet(layers, rng.standard_normal(6), rng.standard_normal(6), 0.3)
    shallow = collapse(deep)
    X = rng.standard_normal((100, 3))
    assert np.max(np.abs(evaluate(deep, X) - evaluate(shallow, X))) < 1e-12


def test_collapse_trivial_cases():
    W = np.array([[1.0, 2.0], [3.0, 4.0]])
    two = DeepNet((W,), [1.0, 1.0], [0.0, 0.0], 0.0)
    assert np.array_equal(collapse(two).W, W)
    three = DeepNet((np.eye(2), W), [1.0, 1.0], [0.0, 0.0], 0.0)
    assert np.allclose(collapse(three).W, W)


def test_cost_examples():
    assert cost(as_deep(unit_net())) == pytest.approx(1.0)
    zero = DeepNet((np.zeros((1, 2)),), [0.0], [0.5], 2.0)
    assert cost(zero) == 0.0
    three = DeepNet((np.eye(2), np.array([[1.0, 0.0]])), [1.0], [0.0], 0.0)
    assert cost(three) == pytest.approx(4 / 3)


def test_rescale_units_examples(rng):
    net = unit_net()
    same = rescale_units(net, [1.0])
    assert np.array_equal(same.W, net.W) and np.array_equal(same.a, net.a)
    one = ShallowNet(np.array([[1.5]]), [2.0], [0.5], 0.1)
    r = rescale_units(one, [2.0])
    assert r.W[0, 0] == 3.0 and r.a[0] == 1.0 and r.b[0] == 1.0
    assert evaluate(r, np.array([1.0])) == pytest.approx(evaluate(one, np.array([1.0])))
    big = random_shallow(rng, 6, 3)
    lam = rng.uniform(0.1, 5, 6)
    X = rng.standard_normal((100, 3))
    assert np.max(np.abs(evaluate(rescale_units(big, lam), X) - evaluate(big, X))) < 1e-12
    # function unchanged, cost changes
    assert cost(as_deep(rescale_units(big, lam))) != pytest.approx(cost(as_deep(big)))


@pytest.mark.parametrize("lam", [[0.0, 1.0], [-1.0, 1.0]])
def test_rescale_rejects_nonpositive(lam):
    net = ShallowNet(np.eye(2), [1.0, 1.0], [0.0, 0.0], 0.0)
    with pytest.raises(InvalidParameterError):
        rescale_units(net, lam)


def test_balanced_factorization_examples(rng):
    W = rng.standard_normal((3, 2))
    net = ShallowNet(W, rng.standard_normal(3), np.zeros(3), 0.0)
    two = balanced_factorization(net, 2)
    assert two.depth == 2 and factor_cost_sum(two) == pytest.approx(np.sum(W**2))

    r1 = ShallowNet(np.outer([0.6, 0.8], [1.0, 0.0]), [1.0, 1.0], [0.0, 0.0], 0.0)
    deep = balanced_factorization(r1, 3)
    assert [np.sum(Wi**2) for Wi in deep.layers] == pytest.approx([1.0, 1.0])

    four = balanced_factorization(net, 4)
    assert factor_cost_sum(four) == pytest.approx(3 * schatten_qnorm_pow(W, 2 / 3), rel=1e-9)


@pytest.mark.parametrize("L", [2, 3, 4, 5, 6])
def test_factorization_invariants(rng, L):
    for _ in range(5):
        K, d = rng.integers(1, 7, size=2)
        net = ShallowNet(rng.standard_normal((K, d)), rng.standard_normal(K), rng.standard_normal(K), 0.2)
        deep = balanced_factorization(net, L)
        assert deep.depth == L
        assert np.linalg.norm(collapse(deep).W - net.W) <= 1e-9 * np.linalg.norm(net.W)
        q = 2 / (L - 1)
        if L > 2:
            expected = (np.sum(net.a**2) + (L - 1) * schatten_qnorm_pow(net.W, q)) / L
            assert cost(deep) == pytest.approx(expected, rel=1e-9)


def test_factorization_zero_matrix():
    net = ShallowNet(np.zeros((2, 3)), [1.0, 1.0], [0.0, 0.0], 0.0)
    deep = balanced_factorization(net, 3)
    assert np.allclose(collapse(deep).W, 0.0)
    assert factor_cost_sum(deep) == 0.0


def test_json_roundtrip(tmp_path, rng):
    net = random_shallow(rng, 3, 2)
    path = tmp_path / "net.json"
    dump_net(net, path)
    back = load_net(path)
    assert np.array_equal(back.W, net.W) and back.c == net.c
    deep = balanced_factorization(net, 3)
    again = net_from_dict(json.loads(dump_net(deep)))
    assert isinstance(again, DeepNet) and again.depth == 3


def test_json_requires_weights():
    with pytest.raises(InvalidInputError):
        net_from_dict({"a": [1.0]})
