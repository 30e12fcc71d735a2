import dataclasses
import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from picard_operator.grid_field import NormSpec
from picard_operator.semigroup_kernel import (
    OperatorSpec,
    TruncationError,
    build_expansion,
    expansion_eval,
    export_expansion,
    fourier_full_cutoff,
    green_eval,
    import_expansion,
    semigroup_apply,
    spectral_tail_envelope,
    spectral_tail_reference,
    tabulate_expansion,
    tail_bound,
    truncation_errors,
    verify_smoothing,
)

SPEC = OperatorSpec()
L2 = NormSpec(2, 2)
T = 0.1
G4 = 32

# regression values at T = 0.1, grid4 = 32, r = s = 2
HAAR_TABLE = {
    0: (0.061861921069827429, 0.23858987537066845),
    1: (0.055759649011928598, 0.22087897031634177),
    2: (0.045107663799520505, 0.18050397170396265),
    3: (0.032816782086714021, 0.13502616995210315),
    4: (0.020200519029522322, 0.084230606122162141),
}
FOURIER_TABLE = {
    1: (0.056365612334174947, 0.20608190812260044),
    2: (0.045243076698577994, 0.18395420425733908),
    4: (0.036049026486585548, 0.16484129809008113),
    8: (0.026804330394485761, 0.13978908615149274),
    16: (0.018768287105166932, 0.10707740338224897),
    32: (0.011420313444373243, 0.058178742233877263),
}


def green_partial_sum(t, x, y, K=50):
    """Independent high-precision oracle for the kernel series."""
    mp.mp.dps = 30
    return float(mp.fsum(2 * mp.e ** (-(k * mp.pi) ** 2 * t) * mp.sin(k * mp.pi * x) * mp.sin(k * mp.pi * y)
                         for k in range(1, K + 1)))


def zero_extended_table(t, x, t_min):
    """Kernel samples on the grid t x t x x x x, zero for tau > t, lags floored at t_min."""
    n = len(t)
    lag_idx = np.subtract.outer(np.arange(n), np.arange(n))
    step = t[1] - t[0]
    lags = np.maximum(np.arange(n) * step, t_min)
    rows = green_eval(SPEC, lags[:, None, None], x[None, :, None], x[None, None, :])
    out = np.zeros((n, n, len(x), len(x)))
    mask = lag_idx >= 0
    out[mask] = rows[lag_idx[mask]]
    return out


# -- kernel evaluation


def test_green_at_unit_time_centre():
    val = green_eval(SPEC, 1.0, 0.5, 0.5)
    assert val == pytest.approx(green_partial_sum(1.0, 0.5, 0.5), rel=1e-13)
    assert val == pytest.approx(1.03446e-4, rel=1e-5)


@settings(max_examples=40, deadline=None)
@given(st.floats(1e-3, 2.0), st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_green_symmetry(t, x, y):
    # series terms reach O(t^-1/2) and cancel, so rounding is absolute at that scale
    scale = 2 * sum(math.exp(-(k * math.pi) ** 2 * t) for k in range(1, 200))
    assert green_eval(SPEC, t, x, y) == pytest.approx(green_eval(SPEC, t, y, x), rel=1e-13, abs=1e-14 * scale)


@pytest.mark.parametrize("t,x,y", [(0.01, 0.3, 0.7), (0.1, 0.05, 0.5), (0.5, 0.9, 0.2)])
def test_green_matches_oracle(t, x, y):
    assert green_eval(SPEC, t, x, y) == pytest.approx(green_partial_sum(t, x, y, K=80), rel=1e-12, abs=1e-15)


def test_green_dirichlet_trace():
    x = 1 / 65
    val = green_eval(SPEC, 1.0, x, 0.5)
    assert abs(val) <= 2 * math.exp(-math.pi**2) * math.sin(math.pi * x) * SPEC.eigen_count_eval
    assert green_eval(SPEC, 1.0, 0.0, 0.5) == pytest.approx(0.0, abs=1e-18)


def test_green_rejects_nonpositive_time():
    with pytest.raises(ValueError):
        green_eval(SPEC, 0.0, 0.5, 0.5)


def test_green_truncation_signal():
    with pytest.raises(TruncationError, match="need at least"):
        green_eval(SPEC, 1e-7, 0.5, 0.5)
    assert tail_bound(200, 1e-3) < 1e-12


# -- semigroup


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 63), st.floats(0.0, 0.5))
def test_mode_decay(k, t):
    nx = 63
    x = np.arange(1, nx + 1) / (nx + 1)
    u = np.sin(k * np.pi * x)
    out = semigroup_apply(SPEC, t, u)
    np.testing.assert_allclose(out, math.exp(-(k * math.pi) ** 2 * t) * u, atol=1e-12)


def test_semigroup_of_zero():
    assert np.all(semigroup_apply(SPEC, 0.3, np.zeros(20)) == 0)


@pytest.mark.parametrize("nx,tol", [(63, 1e-7), (255, 1e-10)])
def test_semigroup_parabola_against_analytic_coefficients(nx, tol):
    x = np.arange(1, nx + 1) / (nx + 1)
    k = np.arange(1, 201, 2)
    ref = (8 / (k**3 * np.pi**3) * np.exp(-(k**2) * np.pi**2 * 0.01)) @ np.sin(np.pi * np.outer(k, x))
    np.testing.assert_allclose(semigroup_apply(SPEC, 0.01, x * (1 - x)), ref, atol=tol)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.0, 0.2), st.floats(0.0, 0.2))
def test_semigroup_property(seed, t1, t2):
    u = np.random.default_rng(seed).standard_normal(47)
    a = semigroup_apply(SPEC, t1 + t2, u)
    b = semigroup_apply(SPEC, t1, semigroup_apply(SPEC, t2, u))
    np.testing.assert_allclose(a, b, atol=1e-10)


def test_operator_spec_validation():
    with pytest.raises(ValueError):
        OperatorSpec(nu=1.0)
    with pytest.raises(ValueError):
        OperatorSpec(c_L=0.5)
    with pytest.raises(ValueError):
        OperatorSpec(kind="schrodinger")


# -- expansions


def haar_samples(g=G4, T=T):
    return np.arange(g) * T / g, (np.arange(g) + 0.5) / g


def test_haar_level_zero_is_box_average():
    exp = build_expansion(SPEC, "haar", 1, T, G4)
    t, x = haar_samples()
    mean = zero_extended_table(t, x, T / (4 * G4)).mean()
    assert exp.coeffs.shape == (1, 1, 1, 1)
    assert expansion_eval(exp, 0.05, 0.01, 0.3, 0.6) == pytest.approx(mean, rel=1e-12)


def test_haar_full_level_reproduces_samples():
    exp = build_expansion(SPEC, "haar", 16**5, T, G4)
    t, x = haar_samples()
    ref = zero_extended_table(t, x, T / (4 * G4))
    np.testing.assert_allclose(tabulate_expansion(exp, t, x), ref, atol=1e-10 * np.max(ref))


def test_haar_level_cell_average():
    # level-J expansion at a cell point equals the average of the full table over that cell
    lev = 2
    exp = build_expansion(SPEC, "haar", 16**lev, T, G4)
    t, x = haar_samples()
    full = zero_extended_table(t, x, T / (4 * G4))
    w = G4 // 2**lev
    block = full.reshape(4, w, 4, w, 4, w, 4, w).mean(axis=(1, 3, 5, 7))
    got = tabulate_expansion(exp, t[::w], x[::w])
    np.testing.assert_allclose(got, block, atol=1e-10 * np.max(full))


def test_fourier_full_cutoff_reproduces_samples():
    K = fourier_full_cutoff(G4)
    exp = build_expansion(SPEC, "fourier", K**4, T, G4)
    t = np.arange(G4) * T / (G4 - 1)
    x = np.arange(1, G4 + 1) / (G4 + 1)
    ref = zero_extended_table(t, x, T / (4 * G4))
    np.testing.assert_allclose(tabulate_expansion(exp, t, x), ref, atol=1e-9 * np.max(ref))


@pytest.mark.parametrize("kind,small,large", [("haar", 16, 16**3), ("fourier", 2**4, 8**4)])
def test_nested_coefficients(kind, small, large):
    a = build_expansion(SPEC, kind, small, T, G4)
    b = build_expansion(SPEC, kind, large, T, G4)
    sl = tuple(slice(0, n) for n in a.coeffs.shape)
    assert np.array_equal(a.coeffs, b.coeffs[sl])
    assert set(a.index_set) <= set(b.index_set)


@pytest.mark.parametrize("level", range(6))
def test_haar_nonnegative(level):
    exp = build_expansion(SPEC, "haar", 16**level, T, G4)
    t, x = haar_samples()
    assert tabulate_expansion(exp, t, x).min() >= -1e-12


def test_zero_coefficients_evaluate_to_zero():
    exp = build_expansion(SPEC, "haar", 16, T, G4)
    zero = dataclasses.replace(exp, coeffs=np.zeros_like(exp.coeffs), _bound={})
    assert expansion_eval(zero, 0.07, 0.02, 0.4, 0.9) == 0.0


def test_expansion_rejects_bad_requests():
    with pytest.raises(ValueError, match="too small"):
        build_expansion(SPEC, "haar", 16**3, T, 4)
    with pytest.raises(ValueError):
        build_expansion(SPEC, "haar", 20, T, G4)
    exp = build_expansion(SPEC, "haar", 16, T, G4)
    with pytest.raises(ValueError):
        expansion_eval(exp, 2 * T, 0.0, 0.5, 0.5)


# -- truncation errors


@pytest.mark.parametrize("level", sorted(HAAR_TABLE))
def test_haar_truncation_regression(level):
    rep = truncation_errors(build_expansion(SPEC, "haar", 16**level, T, G4), SPEC, L2)
    assert (rep.C_G, rep.C_prime_G) == pytest.approx(HAAR_TABLE[level], rel=1e-9)


@pytest.mark.parametrize("K", sorted(FOURIER_TABLE))
def test_fourier_truncation_regression(K):
    rep = truncation_errors(build_expansion(SPEC, "fourier", K**4, T, G4), SPEC, L2)
    assert (rep.C_G, rep.C_prime_G) == pytest.approx(FOURIER_TABLE[K], rel=1e-9)


@pytest.mark.parametrize("kind,N", [("haar", 16**5), ("fourier", fourier_full_cutoff(G4) ** 4)])
def test_full_rank_at_quadrature_floor(kind, N):
    rep = truncation_errors(build_expansion(SPEC, kind, N, T, G4), SPEC, L2)
    assert rep.C_G <= 1e-3 and rep.C_prime_G <= 1e-3


@pytest.mark.parametrize("kind,ranks", [("haar", [16**j for j in range(6)]),
                                        ("fourier", [k**4 for k in (1, 2, 4, 8, 16, 32, 46)])])
def test_truncation_monotone(kind, ranks):
    reps = [truncation_errors(build_expansion(SPEC, kind, N, T, G4), SPEC, L2) for N in ranks]
    for a, b in zip(reps, reps[1:]):
        assert b.C_G <= a.C_G + 1e-12
        assert b.C_prime_G <= a.C_prime_G + 1e-12


@pytest.mark.parametrize("K", [1, 2, 4, 8, 16])
def test_spectral_tracks_analytic_tail(K):
    rep = truncation_errors(build_expansion(SPEC, "spectral", K, T, G4), SPEC, L2)
    ref = spectral_tail_reference(T, G4, K, SPEC)
    assert 0.5 <= rep.C_prime_G / ref <= 2.0
    assert rep.C_prime_G <= spectral_tail_envelope(T, G4, K, SPEC)


def test_truncation_other_exponents_finite():
    rep = truncation_errors(build_expansion(SPEC, "haar", 16**2, T, 8), SPEC, NormSpec(4, 4))
    assert np.isfinite(rep.C_G) and np.isfinite(rep.C_prime_G) and rep.sliver_bound > 0


# -- smoothing


def test_smoothing_sup_norm_contraction():
    rep = verify_smoothing(SPEC, [0.001, 0.01, 0.1, 1.0], math.inf, math.inf)
    # maximum principle, up to rounding in the sine transform
    assert max(rep.estimates) <= 1.0 + 1e-12
    assert not rep.exceeds_c_L
    assert rep.max_row_mass <= 1.0 + 1e-12


def test_smoothing_l1_to_sup_at_unit_time():
    rep = verify_smoothing(SPEC, [1.0], 1, math.inf)
    assert rep.estimates[0] == pytest.approx(green_eval(SPEC, 1.0, 0.5, 0.5), rel=2e-2)
    assert rep.estimates[0] <= SPEC.c_L


def test_smoothing_l2():
    rep = verify_smoothing(SPEC, [0.01, 0.1, 1.0], 2, 2)
    assert rep.scaled_max <= 1.0


# -- export


@pytest.mark.parametrize("kind,N", [("haar", 16**2), ("fourier", 2**4)])
def test_export_round_trip(tmp_path, kind, N):
    exp = build_expansion(SPEC, kind, N, T, 8)
    path = tmp_path / "exp.txt"
    export_expansion(exp, path)
    header = path.read_text().splitlines()[0].split()
    assert header[:2] == ["basis", kind] and int(header[2]) == exp.rank
    back = import_expansion(path)
    assert back.basis_kind == kind and back.T == exp.T
    assert np.array_equal(back.coeffs, exp.coeffs)
