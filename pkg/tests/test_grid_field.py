import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from picard_operator.grid_field import (
    Field,
    NormSpec,
    SpaceTimeGrid,
    conjugate_exponent,
    initial_profile,
    mixed_norm,
    pointwise_apply,
    sample_initial_data,
)

# sqrt( int_0^1 e^{-2 pi^2 t} dt * int_0^1 sin^2(pi x) dx ), mpmath at 30 digits
DECAYING_MODE_NORM = 0.15915494287900267

EXPONENTS = st.sampled_from([1.0, 1.5, 2.0, 3.0, 4.0, math.inf])


def decaying_mode(t, x):
    return np.exp(-np.pi**2 * t) * np.sin(np.pi * x)


def test_grid_nodes():
    g = SpaceTimeGrid(5, 3, 2.0)
    np.testing.assert_allclose(g.t, [0, 0.5, 1.0, 1.5, 2.0])
    np.testing.assert_allclose(g.x, [0.25, 0.5, 0.75])
    r = g.refined()
    assert (r.nt, r.nx) == (9, 7)
    np.testing.assert_allclose(r.t[::2], g.t)
    np.testing.assert_allclose(r.x[1::2], g.x)


@pytest.mark.parametrize("args", [(1, 4, 1.0), (4, 1, 1.0), (4, 4, 0.0), (4, 4, -1.0), (4, 4, math.inf)])
def test_grid_rejects_degenerate(args):
    with pytest.raises(ValueError):
        SpaceTimeGrid(*args)


def test_field_rejects_nonfinite_and_bad_shape():
    g = SpaceTimeGrid(3, 3, 1.0)
    with pytest.raises(ValueError):
        Field(g, np.full((3, 3), np.nan))
    with pytest.raises(ValueError):
        Field(g, np.zeros((3, 4)))


def test_field_is_read_only():
    g = SpaceTimeGrid(3, 3, 1.0)
    f = Field.zeros(g)
    with pytest.raises(ValueError):
        f.values[0, 0] = 1.0
    with pytest.raises(AttributeError):
        f.values = np.ones((3, 3))


def test_conjugates():
    assert conjugate_exponent(2) == 2
    assert conjugate_exponent(1) == math.inf
    assert conjugate_exponent(math.inf) == 1
    assert NormSpec(4, 4).r_conj == pytest.approx(4 / 3)


def test_normspec_rejects_below_one():
    with pytest.raises(ValueError):
        NormSpec(0.5, 2)


def test_constant_field_has_exact_boundary_biased_norm():
    # interior points each carry dx; the zero boundary trims one cell
    g = SpaceTimeGrid(128, 128, 1.0)
    val = mixed_norm(Field(g, np.ones(g.shape)), NormSpec(2, 2))
    assert val == pytest.approx(math.sqrt(128 / 129), rel=1e-14)


def test_constant_field_norm_within_2e3_at_128():
    # the zero-boundary bias 1 - sqrt(128/129) = 3.9e-3 exceeds this tolerance
    g = SpaceTimeGrid(128, 128, 1.0)
    val = mixed_norm(Field(g, np.ones(g.shape)), NormSpec(2, 2))
    assert abs(val - 1.0) <= 2e-3


def test_constant_field_norm_finer_grid():
    g = SpaceTimeGrid(256, 256, 1.0)
    val = mixed_norm(Field(g, np.ones(g.shape)), NormSpec(2, 2))
    assert abs(val - 1.0) <= 2e-3


def test_sup_of_sine_hits_one_at_midpoint():
    g = SpaceTimeGrid(4, 9, 1.0)  # x = 5/10 is a node
    f = Field.from_function(g, lambda t, x: np.sin(np.pi * x) + 0 * t)
    assert mixed_norm(f, NormSpec(math.inf, math.inf)) == 1.0
    g2 = SpaceTimeGrid(4, 8, 1.0)
    f2 = Field.from_function(g2, lambda t, x: np.sin(np.pi * x) + 0 * t)
    assert mixed_norm(f2, NormSpec(math.inf, math.inf)) == pytest.approx(np.max(np.sin(np.pi * g2.x)))


def test_decaying_mode_norm_against_high_precision_value():
    g = SpaceTimeGrid(128, 128, 1.0)
    val = mixed_norm(Field.from_function(g, decaying_mode), NormSpec(2, 2))
    assert abs(val - DECAYING_MODE_NORM) < 2e-4


@pytest.mark.parametrize("n", [16, 32, 64])
def test_refinement_is_second_order(n):
    coarse = mixed_norm(Field.from_function(SpaceTimeGrid(n, n, 1.0), decaying_mode), NormSpec(2, 2))
    fine = mixed_norm(Field.from_function(SpaceTimeGrid(2 * n, 2 * n, 1.0), decaying_mode), NormSpec(2, 2))
    assert abs(coarse - DECAYING_MODE_NORM) >= 3 * abs(fine - DECAYING_MODE_NORM)


def test_inf_exponents_are_sample_max():
    g = SpaceTimeGrid(3, 4, 1.0)
    vals = np.arange(12.0).reshape(3, 4) - 6
    f = Field(g, vals)
    assert mixed_norm(f, NormSpec(math.inf, math.inf)) == 6.0


def _random_field(seed, nt=12, nx=10, T=0.7):
    g = SpaceTimeGrid(nt, nx, T)
    return Field(g, np.random.default_rng(seed).standard_normal(g.shape))


# scalars below 1e-30 underflow when raised to the fourth power
SCALARS = st.one_of(st.just(0.0), st.floats(1e-30, 50), st.floats(-50, -1e-30))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000), SCALARS, EXPONENTS, EXPONENTS)
def test_homogeneity(seed, alpha, r, s):
    f = _random_field(seed)
    spec = NormSpec(r, s)
    lhs = mixed_norm(f * alpha, spec)
    assert lhs == pytest.approx(abs(alpha) * mixed_norm(f, spec), rel=1e-12, abs=1e-300)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000), st.integers(0, 10_000), EXPONENTS, EXPONENTS)
def test_triangle_inequality(s1, s2, r, s):
    f, g = _random_field(s1), _random_field(s2)
    spec = NormSpec(r, s)
    lhs = mixed_norm(f + g, spec)
    rhs = mixed_norm(f, spec) + mixed_norm(g, spec)
    assert lhs <= rhs * (1 + 1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_holder_monotone_on_unit_box(seed):
    f = _random_field(seed, T=1.0)
    # unit box: L^2 L^2 is at most the sup up to the boundary-trim bias, which only lowers L^2
    assert mixed_norm(f, NormSpec(2, 2)) <= mixed_norm(f, NormSpec(math.inf, math.inf)) + 1e-12


def test_property_suite_at_128():
    g = SpaceTimeGrid(128, 128, 1.0)
    rng = np.random.default_rng(3)
    f = Field(g, rng.standard_normal(g.shape))
    h = Field.from_function(g, decaying_mode)
    for spec in (NormSpec(2, 2), NormSpec(4, 3), NormSpec(math.inf, 2), NormSpec(1, math.inf)):
        assert mixed_norm(f * -3.5, spec) == pytest.approx(3.5 * mixed_norm(f, spec), rel=1e-12)
        assert mixed_norm(f + h, spec) <= (mixed_norm(f, spec) + mixed_norm(h, spec)) * (1 + 1e-12)


def test_pointwise_apply():
    g = SpaceTimeGrid(3, 9, 1.0)
    zero = Field.zeros(g)
    out = pointwise_apply(zero, lambda z: z * np.abs(z))
    assert np.all(out.values == 0)
    c = Field(g, np.full(g.shape, 0.3))
    assert np.array_equal(pointwise_apply(c, lambda z: z).values, c.values)
    s = Field.from_function(g, lambda t, x: np.sin(np.pi * x) + 0 * t)
    sq = pointwise_apply(s, lambda z: z * np.abs(z))
    assert sq.values[1, 4] == 1.0
    assert sq.grid == g


def test_pointwise_apply_rejects_nonfinite():
    g = SpaceTimeGrid(3, 3, 1.0)
    with pytest.raises(ValueError), np.errstate(divide="ignore"):
        pointwise_apply(Field.zeros(g), lambda z: 1.0 / z)


def test_eigenmode_initial_data():
    u = sample_initial_data(0.1, 63, kind="eigenmode", k=1)
    np.testing.assert_allclose(u, 0.1 * np.sin(np.pi * np.arange(1, 64) / 64))
    assert np.max(np.abs(u)) == pytest.approx(0.1)


def test_random_initial_data_is_deterministic():
    a = sample_initial_data(1.0, 50, seed=7, kind="random-trig")
    b = sample_initial_data(1.0, 50, seed=7, kind="random-trig")
    assert np.array_equal(a, b)
    assert not np.array_equal(a, sample_initial_data(1.0, 50, seed=8, kind="random-trig"))


@settings(max_examples=50, deadline=None)
@given(st.floats(1e-3, 10), st.integers(0, 1000), st.sampled_from(["eigenmode", "random-trig", "bump"]),
       st.integers(2, 200))
def test_initial_data_in_ball(R, seed, kind, nx):
    u = sample_initial_data(R, nx, seed, kind)
    g = SpaceTimeGrid(2, nx, 1.0)
    assert mixed_norm(Field.constant_in_time(g, u), NormSpec(math.inf, math.inf)) <= R


def test_initial_profile_consistent_across_grids():
    prof = initial_profile(0.5, 11, "bump")
    coarse = sample_initial_data(0.5, 15, 11, "bump")
    np.testing.assert_array_equal(prof(np.arange(1, 16) / 16), coarse)


def test_initial_data_rejects_bad_radius():
    with pytest.raises(ValueError):
        sample_initial_data(0.0, 10)
    with pytest.raises(ValueError):
        sample_initial_data(1.0, 10, kind="square")
