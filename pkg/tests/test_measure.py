import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ipn.errors import ConfigError, DomainError
from ipn.measure import (
    AtomicMeasure,
    apportion,
    discretize,
    gaps,
    measure_from_config,
    stieltjes,
    stieltjes_derivative,
)

HALF = AtomicMeasure.from_atoms([[1, 0.5], [3, 0.5]])


@st.composite
def measures(draw):
    k = draw(st.integers(1, 6))
    locs = draw(st.lists(st.floats(0, 10), min_size=k, max_size=k, unique=True))
    w = draw(st.lists(st.floats(0.05, 1), min_size=k, max_size=k))
    return AtomicMeasure.from_atoms(zip(locs, w), normalize=True)


def test_stieltjes_examples():
    d0 = AtomicMeasure.dirac(0)
    assert stieltjes(d0, 2.0) == 0.5
    assert stieltjes(d0, 1j) == pytest.approx(-1j)
    assert stieltjes(HALF, 2.0) == 0.0


def test_stieltjes_derivative_examples():
    d0 = AtomicMeasure.dirac(0)
    assert stieltjes_derivative(d0, 2.0) == -0.25
    assert stieltjes_derivative(d0, 1.0) == -1.0
    assert stieltjes_derivative(HALF, 2.0) == -1.0


def test_evaluation_at_atom_is_domain_error():
    with pytest.raises(DomainError):
        stieltjes(HALF, 3.0)
    with pytest.raises(DomainError):
        stieltjes_derivative(HALF, 1.0)


@given(measures(), st.floats(-20, 20), st.floats(1e-3, 50))
def test_stieltjes_upper_half_plane(m, re, im):
    z = complex(re, im)
    g = stieltjes(m, z)
    assert g.imag < 0
    assert abs(g) <= 1 / im * (1 + 1e-12)
    assert stieltjes(m, z.conjugate()) == pytest.approx(g.conjugate(), rel=1e-14)


@given(measures())
def test_stieltjes_normalisation_at_infinity(m):
    z = 1e6j
    assert abs(z * stieltjes(m, z) - 1) < 1e-5


@given(measures(), st.floats(11, 100))
def test_derivative_matches_finite_difference(m, x):
    h = 1e-5 * (1 + abs(x))
    fd = (stieltjes(m, x + h) - stieltjes(m, x - h)) / (2 * h)
    d = stieltjes_derivative(m, x)
    assert d < 0
    assert fd == pytest.approx(d, rel=1e-6)


def test_discretize_examples():
    m = discretize("uniform", 2, a=0, b=1)
    np.testing.assert_allclose(m.locations, [0.25, 0.75])
    np.testing.assert_allclose(m.weights, [0.5, 0.5])
    m = discretize("uniform", 4, a=0, b=1)
    np.testing.assert_allclose(m.locations, [0.125, 0.375, 0.625, 0.875])
    m = discretize("dirac", 17, at=0.0)
    assert m.size == 1 and m.weights[0] == pytest.approx(1.0)


def test_discretize_two_point_mixture():
    m = discretize("two-point-mixture", 10, x1=1.0, x2=4.0, p=0.3)
    np.testing.assert_allclose(m.locations, [1.0, 4.0])
    np.testing.assert_allclose(m.weights, [0.3, 0.7])


@given(st.floats(0, 5), st.floats(0.01, 5), st.integers(1, 300))
def test_discretize_uniform_mean(a, width, m):
    b = a + width
    meas = discretize("uniform", m, a=a, b=b)
    assert abs(meas.mean() - (a + b) / 2) <= (b - a) / (2 * m) + 1e-12
    assert meas.min_atom >= a and meas.max_atom <= b


def test_discretize_rejects_bad_parameters():
    with pytest.raises(ConfigError):
        discretize("uniform", 4, a=1, b=1)
    with pytest.raises(ConfigError):
        discretize("uniform", 0, a=0, b=1)
    with pytest.raises(ConfigError):
        discretize("lognormal", 4)


def test_construction_invariants():
    with pytest.raises(ConfigError):
        AtomicMeasure.from_atoms([[-1, 1]])
    with pytest.raises(ConfigError):
        AtomicMeasure(np.array([1.0, 2.0]), np.array([0.5, 0.6]))
    with pytest.raises(ConfigError):
        AtomicMeasure(np.array([2.0, 1.0]), np.array([0.5, 0.5]))
    merged = AtomicMeasure.from_atoms([[1, 0.25], [1 + 1e-13, 0.25], [2, 0.5]])
    assert merged.size == 2
    np.testing.assert_allclose(merged.weights, [0.5, 0.5])


def test_gaps():
    assert gaps(AtomicMeasure.dirac(0)) == [(-10.0, 0.0), (0.0, math.inf)]
    assert gaps(HALF, (-4.0, math.inf)) == [(-4.0, 1.0), (1.0, 3.0), (3.0, math.inf)]
    u = discretize("uniform", 1000, a=0, b=1)
    assert gaps(u)[-1][0] == pytest.approx(0.9995)


def test_json_round_trip():
    m = discretize("uniform", 5, a=0.5, b=2)
    assert AtomicMeasure.from_json(m.to_json()) == m
    assert measure_from_config({"atoms": [[1, 0.5], [3, 0.5]]}) == HALF
    assert measure_from_config({"family": "uniform", "a": 0, "b": 1, "m": 2}).size == 2


@given(measures(), st.integers(0, 500))
def test_apportion(m, extra):
    count = m.size + extra
    copies = apportion(m, count)
    assert copies.sum() == count
    assert np.all(np.abs(copies - m.weights * count) < 1 + 1e-9)


def test_apportion_infeasible():
    with pytest.raises(ConfigError):
        apportion(HALF, 1)
