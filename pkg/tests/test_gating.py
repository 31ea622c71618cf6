import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from moeapprox import (
    EqualCovGaussianGating,
    GaussianGating,
    SoftmaxGating,
    equalcov_gaussian_to_softmax,
    eval_gaussian_gates,
    eval_softmax_gates,
    gate_argmax_cells,
    sharp_gates,
    softmax_to_gaussian,
)
from moeapprox.errors import InvalidArgumentError
from moeapprox.gating import conditioned_scale, gating_from_dict, gating_to_dict

XS = np.linspace(-2, 2, 41).reshape(-1, 1)


def test_symmetric_softmax():
    g = SoftmaxGating([0.0, 0.0], [[0.0], [0.0]])
    np.testing.assert_allclose(eval_softmax_gates(g, XS), 0.5, rtol=1e-15)


def test_softmax_intercepts():
    g = SoftmaxGating([0.0, math.log(3.0)], [[0.0], [0.0]])
    np.testing.assert_allclose(eval_softmax_gates(g, 0.7), [0.25, 0.75], rtol=1e-14)


def test_softmax_extreme_slopes_do_not_overflow():
    g = SoftmaxGating([0.0, 0.0], [[500.0], [-500.0]])
    with np.errstate(all="raise"):
        out = eval_softmax_gates(g, 1.0)
    assert out[0] == 1.0
    assert out[1] == pytest.approx(0.0, abs=1e-300)


def test_softmax_rejects_bad_input():
    with pytest.raises(InvalidArgumentError):
        SoftmaxGating([0.0, float("inf")], [[0.0], [0.0]])
    with pytest.raises(InvalidArgumentError):
        SoftmaxGating([0.0], [[0.0], [1.0]])
    g = SoftmaxGating([0.0, 0.0], [[1.0], [2.0]])
    with pytest.raises(InvalidArgumentError):
        g(float("nan"))
    with pytest.raises(InvalidArgumentError):
        g(np.zeros((3, 2)))


def test_identical_gaussian_components():
    g = GaussianGating([0.5, 0.5], [[0.3], [0.3]], [[[2.0]], [[2.0]]])
    np.testing.assert_allclose(eval_gaussian_gates(g, XS), 0.5, rtol=1e-14)


def test_single_gaussian_component():
    g = GaussianGating([1.0], [[0.0, 1.0]], [np.eye(2)])
    np.testing.assert_allclose(g(np.random.default_rng(0).normal(size=(10, 2))), 1.0)


def test_gaussian_midpoint_symmetry():
    g = GaussianGating([0.5, 0.5], [0.0, 1.0], [1.0, 1.0])
    np.testing.assert_allclose(g(0.5), [0.5, 0.5], rtol=1e-14)


def test_gaussian_rejects_non_spd_at_construction():
    with pytest.raises(InvalidArgumentError):
        GaussianGating([1.0], [[0.0, 0.0]], [[[1.0, 2.0], [2.0, 1.0]]])
    with pytest.raises(InvalidArgumentError):
        GaussianGating([1.0], [[0.0, 0.0]], [[[1.0, 0.5], [0.0, 1.0]]])
    with pytest.raises(InvalidArgumentError):
        EqualCovGaussianGating([0.5, 0.5], [0.0, 1.0], [[-1.0]])
    with pytest.raises(InvalidArgumentError):
        GaussianGating([0.6, 0.6], [0.0, 1.0], [1.0, 1.0])


def test_softmax_to_gaussian_single_gate():
    g = softmax_to_gaussian(SoftmaxGating([1.7], [[2.0, -1.0]]))
    np.testing.assert_allclose(g.pi, [1.0])
    np.testing.assert_allclose(g.nu, [[2.0, -1.0]])
    np.testing.assert_allclose(g.Sigma[0], np.eye(2))
    np.testing.assert_allclose(g(np.zeros((4, 2))), 1.0)


def test_softmax_to_gaussian_worked_example():
    g = softmax_to_gaussian(SoftmaxGating([0.0, 0.0], [[0.0], [1.0]]))
    e = math.exp(0.5)
    np.testing.assert_allclose(g.pi, [1 / (1 + e), e / (1 + e)], rtol=1e-14)
    np.testing.assert_allclose(g.pi, [0.37754, 0.62246], atol=1e-5)
    np.testing.assert_allclose(g.nu.ravel(), [0.0, 1.0])


def test_equalcov_to_softmax_single():
    s = equalcov_gaussian_to_softmax(EqualCovGaussianGating([1.0], [[0.0]], [[1.0]]))
    np.testing.assert_allclose(s.a, [0.0])
    np.testing.assert_allclose(s.b, [[0.0]])
    np.testing.assert_allclose(s(XS), 1.0)


def test_equalcov_to_softmax_worked_example():
    s = equalcov_gaussian_to_softmax(EqualCovGaussianGating([0.5, 0.5], [0.0, 1.0], [[1.0]]))
    np.testing.assert_allclose(s.a, [math.log(0.5), math.log(0.5) - 0.5], rtol=1e-14)
    np.testing.assert_allclose(s.b.ravel(), [0.0, 1.0])


def test_round_trip_softmax_gaussian_softmax():
    rng = np.random.default_rng(3)
    g = SoftmaxGating(rng.normal(size=4), rng.normal(size=(4, 2)))
    gg = softmax_to_gaussian(g)
    back = equalcov_gaussian_to_softmax(EqualCovGaussianGating(nu=gg.nu, Sigma=gg.Sigma[0], log_pi=gg.log_pi))
    xs = np.stack(np.meshgrid(np.linspace(-2, 2, 21), np.linspace(-2, 2, 21)), -1).reshape(-1, 2)
    np.testing.assert_allclose(back(xs), g(xs), atol=1e-10)
    np.testing.assert_allclose(back.b, g.b, atol=1e-12)
    shift = back.a - g.a
    np.testing.assert_allclose(shift, shift[0], atol=1e-12)


def test_conditioned_scale_keeps_steep_gates_exact():
    g = sharp_gates(8, 2000.0)
    xs = np.linspace(0, 1, 1001).reshape(-1, 1)
    good = np.max(np.abs(softmax_to_gaussian(g, conditioned_scale(g))(xs) - g(xs)))
    literal = np.max(np.abs(softmax_to_gaussian(g)(xs) - g(xs)))
    assert good <= 1e-10
    # unit covariance makes tau ~ |b|^2 ~ 1e8 and cancellation costs ~8 digits
    assert literal > good
    assert conditioned_scale(g) == pytest.approx(1 / 16000)


gate_params = st.integers(1, 6).flatmap(
    lambda K: st.integers(1, 3).flatmap(
        lambda d: st.tuples(
            arrays(np.float64, K, elements=st.floats(-5, 5)),
            arrays(np.float64, (K, d), elements=st.floats(-5, 5)),
        )
    )
)


@settings(max_examples=60, deadline=None)
@given(gate_params)
def test_softmax_gates_on_simplex_and_convert(params):
    a, b = params
    g = SoftmaxGating(a, b)
    xs = np.random.default_rng(0).uniform(-2, 2, (50, g.d))
    G = g(xs)
    assert np.all(G >= 0)
    np.testing.assert_allclose(G.sum(axis=1), 1.0, atol=1e-14)
    np.testing.assert_allclose(softmax_to_gaussian(g)(xs), G, atol=1e-10)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 5), st.integers(1, 3), st.integers(0, 2**32 - 1))
def test_equalcov_conversion_property(K, d, seed):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(d, d))
    g = EqualCovGaussianGating(rng.dirichlet(np.ones(K) * 2), rng.normal(size=(K, d)), A @ A.T + 0.3 * np.eye(d))
    xs = rng.uniform(-3, 3, (50, d))
    np.testing.assert_allclose(equalcov_gaussian_to_softmax(g)(xs), g(xs), atol=1e-10)


def test_sharp_gates_zero_sharpness():
    np.testing.assert_allclose(sharp_gates(5, 0.0)(np.linspace(0, 1, 7)), 0.2, rtol=1e-15)


@pytest.mark.parametrize("l", [0.0, 1.0, 50.0, 1e4])
def test_sharp_gates_tie_at_midpoint(l):
    np.testing.assert_allclose(sharp_gates(2, l)(0.5), [0.5, 0.5], rtol=1e-14)


def test_sharp_gates_inside_first_cell():
    assert sharp_gates(2, 50.0)(0.25)[0] >= 1 - 1e-5


def test_sharp_gates_parameters():
    g = sharp_gates(3, 10.0)
    np.testing.assert_allclose(g.b.ravel(), [10.0, 20.0, 30.0])
    np.testing.assert_allclose(g.a, [0.0, -20.0 / 6, -60.0 / 6])


def test_sharp_gates_invalid():
    with pytest.raises(InvalidArgumentError):
        sharp_gates(0, 1.0)
    with pytest.raises(InvalidArgumentError):
        sharp_gates(2, -1.0)


def test_argmax_cells_match():
    assert gate_argmax_cells(1) == [(0, 0)]
    assert gate_argmax_cells(4) == [(0, 0), (1, 1), (2, 2), (3, 3)]
    assert all(i == j for i, j in gate_argmax_cells(13))


def test_printed_centers_mismatch():
    pairs = gate_argmax_cells(8, printed_centers=True)
    assert any(i != j for i, j in pairs)


@pytest.mark.parametrize("kind", ["softmax", "gaussian", "equalcov"])
def test_json_round_trip(kind):
    rng = np.random.default_rng(7)
    if kind == "softmax":
        g = SoftmaxGating(rng.normal(size=3), rng.normal(size=(3, 2)))
    elif kind == "gaussian":
        g = softmax_to_gaussian(sharp_gates(4, 1000.0), 1e-3)
    else:
        g = EqualCovGaussianGating(rng.dirichlet(np.ones(3)), rng.normal(size=(3, 2)), np.diag([1.0, 2.0]))
    doc = json.loads(json.dumps(gating_to_dict(g)))
    assert doc["type"] == kind
    h = gating_from_dict(doc)
    xs = rng.uniform(0, 1, (30, g.d))
    np.testing.assert_array_equal(h(xs), g(xs))


def test_json_pi_only_document():
    h = gating_from_dict({"type": "gaussian", "pi": [0.5, 0.5], "nu": [[0.0], [1.0]], "sigma": [[[1.0]], [[1.0]]]})
    np.testing.assert_allclose(h(0.5), [0.5, 0.5])
    with pytest.raises(InvalidArgumentError):
        gating_from_dict({"type": "gaussian", "pi": [1.0]})
    with pytest.raises(InvalidArgumentError):
        gating_from_dict({"type": "other"})
