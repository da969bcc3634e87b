"""Candidate-function library construction.

Covers the column layout (constant, monomials by total degree, then
sin/cos blocks), the zero-state fingerprint, sample-wise evaluation,
term-count consistency, and constructor validation.
"""

import numpy as np
import pytest

from gridid import MAX_POLY_ORDER, FunctionLibrary


def test_zero_state_fingerprint():
    # at x = 0 every monomial vanishes, sin terms are 0 and cos terms are 1
    lib = FunctionLibrary(poly_order=2, include_trig=True, trig_frequencies=(1.0, 3.0))
    out = lib.fit_transform(np.zeros((1, 2)))
    names = lib.get_feature_names_out(("x", "y"))
    expected = np.zeros(len(names))
    expected[0] = 1.0  # constant
    for i, name in enumerate(names):
        if name.startswith("cos"):
            expected[i] = 1.0
    assert np.array_equal(out[0], expected)


def test_feature_names_order():
    lib = FunctionLibrary(poly_order=2)
    lib.fit(np.zeros((1, 2)))
    assert list(lib.get_feature_names_out(("x", "y"))) == ["1", "x", "y", "x^2", "x*y", "y^2"]


def test_poly_values_small_case():
    lib = FunctionLibrary(poly_order=3)
    out = lib.fit_transform(np.array([[2.0]]))
    assert np.allclose(out[0], [1.0, 2.0, 4.0, 8.0])


def test_transform_is_sample_wise():
    rng = np.random.default_rng(7)
    V = rng.standard_normal((50, 3))
    perm = rng.permutation(50)
    lib = FunctionLibrary(poly_order=3, include_trig=True)
    a = lib.fit_transform(V)
    b = lib.transform(V[perm])
    assert np.array_equal(a[perm], b)


@pytest.mark.parametrize("order", [1, 2, 3, 4])
@pytest.mark.parametrize("n_states", [1, 2, 4])
@pytest.mark.parametrize("trig", [False, True])
def test_term_count_matches_width(order, n_states, trig):
    lib = FunctionLibrary(poly_order=order, include_trig=trig, trig_frequencies=(1.0, 2.0))
    out = lib.fit_transform(np.ones((6, n_states)))
    assert lib.term_count(n_states) == out.shape[1]
    assert len(lib.get_feature_names_out()) == out.shape[1]


def test_include_constant_false_drops_leading_one():
    lib = FunctionLibrary(poly_order=2, include_constant=False)
    out = lib.fit_transform(np.array([[3.0]]))
    assert np.allclose(out[0], [3.0, 9.0])
    assert list(lib.get_feature_names_out(("v",))) == ["v", "v^2"]


def test_trig_frequency_tagging():
    lib = FunctionLibrary(poly_order=1, include_trig=True, trig_frequencies=(2.0,))
    lib.fit(np.zeros((1, 1)))
    names = list(lib.get_feature_names_out(("v",)))
    assert "sin(2*v)" in names and "cos(2*v)" in names
    theta = lib.transform(np.array([[0.5]]))
    i_sin = names.index("sin(2*v)")
    assert theta[0, i_sin] == pytest.approx(np.sin(1.0))


def test_non_finite_states_pass_through():
    # integrators probe candidate terms on diverging trajectories; the
    # library must not reject them
    lib = FunctionLibrary(poly_order=2)
    lib.fit(np.ones((2, 1)))
    out = lib.transform(np.array([[np.inf]]))
    assert np.isinf(out[0, 1])


def test_poly_order_zero_gives_constant_only_library():
    lib = FunctionLibrary(poly_order=0)
    out = lib.fit_transform(np.array([[5.0], [7.0]]))
    assert out.shape == (2, 1)
    assert np.array_equal(out[:, 0], [1.0, 1.0])


def test_constructor_validation():
    with pytest.raises(ValueError):
        FunctionLibrary(poly_order=-1).fit(np.ones((2, 1)))
    with pytest.raises(ValueError):
        FunctionLibrary(poly_order=MAX_POLY_ORDER + 1).fit(np.ones((2, 1)))
    with pytest.raises(ValueError):
        FunctionLibrary(poly_order=True).fit(np.ones((2, 1)))
    with pytest.raises(ValueError):
        FunctionLibrary(include_trig=True, trig_frequencies=()).fit(np.ones((2, 1)))


def test_transform_before_fit_errors():
    lib = FunctionLibrary()
    with pytest.raises(Exception):
        lib.transform(np.ones((2, 1)))


def test_sklearn_param_round_trip():
    lib = FunctionLibrary(poly_order=2, include_trig=True)
    params = lib.get_params()
    clone = FunctionLibrary(**params)
    assert clone.get_params() == params
