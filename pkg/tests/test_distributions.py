import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from boundedauction.distributions import (
    TableDistribution,
    Uniform,
    VirtualTransform,
    conditional_mean,
    parse_distribution,
)
from boundedauction.errors import NotRegularError

TRI = TableDistribution.from_cdf(lambda v: v * v, 0.0, 1.0)
unit = st.floats(0.0, 1.0, allow_nan=False)


def test_uniform_closed_forms():
    d = Uniform(2.0, 4.0)
    assert d.cdf(3.0) == 0.5
    assert d.mass(2.5, 3.5) == 0.5
    assert d.partial_expectation(2.0, 4.0) == pytest.approx(3.0)
    assert d.quantile(0.25) == 2.5
    assert d.virtual_value(3.0) == pytest.approx(2.0)
    assert d.virtual_inverse(2.0) == pytest.approx(3.0)


def test_uniform_rejects_empty_support():
    with pytest.raises(ValueError):
        Uniform(1.0, 1.0)


def test_linear_table_matches_uniform():
    t = TableDistribution.from_cdf(lambda v: v, 0.0, 1.0, points=17)
    for lo, hi in ((0.0, 1.0), (0.1, 0.37), (0.5, 0.5)):
        assert t.mass(lo, hi) == pytest.approx(Uniform().mass(lo, hi))
        assert t.partial_expectation(lo, hi) == pytest.approx(Uniform().partial_expectation(lo, hi))


def test_table_partial_expectation_matches_integral():
    # the interpolated table tracks ∫ 2v·v dv up to the O(h²) interpolation error
    lo, hi = 0.13, 0.91
    assert TRI.partial_expectation(lo, hi) == pytest.approx(2 / 3 * (hi ** 3 - lo ** 3), abs=1e-6)
    x = np.linspace(lo, hi, 400_001)
    mid = 0.5 * (x[1:] + x[:-1])
    riemann = float(np.sum(mid * TRI.pdf(mid)) * (x[1] - x[0]))
    assert TRI.partial_expectation(lo, hi) == pytest.approx(riemann, abs=1e-7)


@given(unit, unit, unit)
def test_mass_is_additive(a, b, c):
    a, b, c = sorted((a, b, c))
    for d in (Uniform(), TRI):
        assert d.mass(a, c) == pytest.approx(d.mass(a, b) + d.mass(b, c), abs=1e-12)
        assert d.partial_expectation(a, c) == pytest.approx(
            d.partial_expectation(a, b) + d.partial_expectation(b, c), abs=1e-12)


@given(st.floats(0.0, 1.0))
def test_quantile_inverts_cdf(q):
    for d in (Uniform(), TRI):
        assert d.cdf(d.quantile(q)) == pytest.approx(q, abs=1e-9)


@given(st.floats(0.001, 0.999), st.floats(0.001, 0.999))
def test_conditional_mean_inside_interval(a, b):
    lo, hi = min(a, b), max(a, b)
    if hi - lo < 1e-6:
        return
    m = conditional_mean(TRI, lo, hi)
    assert lo - 1e-12 <= m <= hi + 1e-12


@settings(max_examples=50)
@given(st.floats(0.0, 1.0))
def test_virtual_inverse_round_trip(v):
    for d in (Uniform(), TRI):
        c = float(d.virtual_value(v))
        assert float(d.virtual_inverse(c)) == pytest.approx(v, abs=1e-9)


def test_virtual_partial_matches_integral():
    want, _ = integrate.quad(lambda v: (2 * v - 1), 0.2, 0.7)
    assert Uniform().virtual_partial(0.2, 0.7) == pytest.approx(want)


def test_regularity_detection():
    assert VirtualTransform(TRI).regular
    # a bimodal table: mass piles up at both ends
    bimodal = TableDistribution([0.0, 0.1, 0.9, 1.0], [0.0, 0.45, 0.55, 1.0])
    assert not VirtualTransform(bimodal).regular
    with pytest.raises(NotRegularError):
        VirtualTransform(bimodal).inverse(0.0)


def test_parse_distribution(tmp_path):
    assert parse_distribution("uniform:0,2") == Uniform(0, 2)
    f = tmp_path / "cdf.csv"
    f.write_text("value,cdf\n0,0\n0.5,0.25\n1,1\n")
    d = parse_distribution(f"table:{f}")
    assert d.cdf(0.5) == pytest.approx(0.25)
    for bad in ("uniform:1", "normal:0,1", "table:"):
        with pytest.raises(ValueError):
            parse_distribution(bad)


def test_table_rejects_bad_cdf():
    with pytest.raises(ValueError):
        TableDistribution([0.0, 0.5, 1.0], [0.0, 0.7, 0.6])


def test_sampling_follows_cdf():
    u = np.random.default_rng(3).random(200_000)
    x = np.asarray(TRI.sample(u))
    assert np.mean(x <= 0.5) == pytest.approx(0.25, abs=5e-3)
