from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from dpmrater.polarization import (GridDensity, GridSpec, density_hpd_region, density_lambda, find_extrema,
                                   hpd_interval, lambda_index, mixture_density_on_grid, posterior_grid_mean,
                                   summarize_lambda)

# closed-form normal-pdf values (mpmath, 30 digits)
PHI0 = 0.398942280401432677939946059934
PHI3 = 0.00443184841193800717560235269612
BIMODAL_PEAK = 0.199471143238658596702214314473  # 0.5 phi(0) + 0.5 phi(6)
LAMBDA_SD1 = 3.80685283467003849446251238869
LAMBDA_SD03 = 49.3068528194400546905827678785
LAMBDA_SD2 = 0.443505070771758855720602973684


def _at(density, x0):
    x = density.grid.x
    return density.values[int(np.argmin(np.abs(x - x0)))]


def test_grid_points():
    g = GridSpec()
    assert g.points == 481
    assert g.x[0] == -12.0 and g.x[-1] == 12.0
    assert GridSpec.parse(str(g)) == g
    with pytest.raises(ValueError):
        GridSpec(1.0, 1.0, 0.1)
    with pytest.raises(ValueError):
        GridSpec.parse("a:b")


def test_mixture_density_examples():
    single = mixture_density_on_grid([1.0], [0.0], [1.0])
    assert _at(single, 0.0) == pytest.approx(PHI0, rel=1e-12)
    bi = mixture_density_on_grid([0.5, 0.5], [-3.0, 3.0], [1.0, 1.0])
    assert _at(bi, 0.0) == pytest.approx(PHI3, rel=1e-12)
    assert _at(bi, 3.0) == pytest.approx(BIMODAL_PEAK, rel=1e-10)
    assert _at(bi, -3.0) == pytest.approx(BIMODAL_PEAK, rel=1e-10)
    degenerate = mixture_density_on_grid([1.0, 0.0, 0.0], [0.0, 4.0, -2.0], [1.0, 0.1, 5.0])
    assert np.allclose(degenerate.values, single.values, rtol=0, atol=0)


@pytest.mark.parametrize(
    "w, mu, var",
    [([0.5, 0.4], [0, 1], [1, 1]), ([1.2, -0.2], [0, 1], [1, 1]), ([1.0], [0.0], [0.0]), ([0.5, 0.5], [0], [1])],
)
def test_mixture_density_rejects_bad_input(w, mu, var):
    with pytest.raises(ValueError):
        mixture_density_on_grid(w, mu, var)


def test_find_extrema_bimodal_example():
    ext = find_extrema(mixture_density_on_grid([0.5, 0.5], [-3.0, 3.0], [1.0, 1.0]))
    assert ext.M == 2
    (x1, f1), (x2, f2) = ext.modes
    assert abs(x1 + 3) <= 0.05 and abs(x2 - 3) <= 0.05
    assert len(ext.antimodes) == 1 and abs(ext.antimodes[0][0]) < 1e-9


def test_monotone_and_flat_densities():
    g = GridSpec(0, 1, 0.1)
    inc = GridDensity.from_values(g, np.linspace(0.1, 1.0, g.points))
    assert find_extrema(inc).M == 0
    flat = GridDensity.from_values(g, np.ones(g.points))
    assert find_extrema(flat).M == 0
    assert lambda_index(find_extrema(flat)) == 0.0


def test_plateau_collapses_to_centre():
    g = GridSpec(0, 1, 0.1)
    vals = np.array([0.1, 0.2, 0.5, 0.5, 0.5, 0.2, 0.1, 0.3, 0.3, 0.2, 0.1])
    ext = find_extrema(GridDensity.from_values(g, vals))
    assert ext.mode_idx.tolist() == [3, 7]  # run 2..4 -> 3, run 7..8 -> 7
    assert ext.antimode_idx.tolist() == [6]


def test_boundary_runs_are_not_modes():
    g = GridSpec(0, 0.6, 0.1)
    vals = np.array([0.9, 0.9, 0.2, 0.5, 0.2, 0.7, 0.7])
    ext = find_extrema(GridDensity.from_values(g, vals))
    assert ext.mode_idx.tolist() == [3]


def test_lambda_examples():
    assert lambda_index(find_extrema(mixture_density_on_grid([1.0], [0.0], [1.0]))) == 0.0
    bi = mixture_density_on_grid([0.5, 0.5], [-3.0, 3.0], [1.0, 1.0])
    assert density_lambda(bi) == pytest.approx(LAMBDA_SD1, abs=0.02)
    assert math.log(0.19947 / 0.0044318) == pytest.approx(3.807, abs=5e-4)


def test_lambda_falls_as_components_widen():
    lams = [density_lambda(mixture_density_on_grid([0.5, 0.5], [-3, 3], [s * s, s * s])) for s in (0.3, 1.0, 2.0)]
    assert lams[0] > lams[1] > lams[2] > 0
    assert lams[0] == pytest.approx(LAMBDA_SD03, abs=0.02)
    assert lams[2] == pytest.approx(LAMBDA_SD2, abs=0.01)


def test_lambda_merging_modes_tends_to_zero():
    g = GridSpec(0, 0.4, 0.1)
    for eps in (1e-2, 1e-5, 1e-9):
        vals = np.array([0.1, 1.0, 1.0 - eps, 1.0, 0.1])
        lam = density_lambda(GridDensity.from_values(g, vals))
        assert 0 < lam < 2 * eps


def test_underflowing_antimode_stays_finite():
    # antimode density ~ exp(-1250): zero in linear space, finite in log space
    d = mixture_density_on_grid([0.5, 0.5], [-5.0, 5.0], [0.01, 0.01])
    assert d.values[240] == 0.0
    lam = density_lambda(d)
    assert math.isfinite(lam) and lam > 1000


def test_infinite_lambda_sentinel():
    g = GridSpec(0, 0.4, 0.1)
    d = GridDensity(g, np.array([-np.inf, 0.0, -np.inf, 0.0, -np.inf]))
    assert lambda_index(find_extrema(d)) == math.inf
    post = summarize_lambda(np.r_[np.full(25, 1.0), [math.inf]])
    assert post.n_infinite == 1 and post.mean == 1.0


mixtures = st.lists(
    st.tuples(st.floats(0.01, 1.0), st.floats(-8.0, 8.0), st.floats(0.01, 4.0)), min_size=1, max_size=6
)


@given(mixtures)
def test_extrema_alternate_and_antimodes_are_lower(comps):
    w = np.array([c[0] for c in comps])
    d = mixture_density_on_grid(w / w.sum(), [c[1] for c in comps], [c[2] for c in comps])
    ext = find_extrema(d)
    assert ext.antimode_idx.size == max(ext.M - 1, 0)
    for k in range(ext.M - 1):
        assert ext.mode_idx[k] < ext.antimode_idx[k] < ext.mode_idx[k + 1]
        lo = min(ext.mode_log_density[k], ext.mode_log_density[k + 1])
        assert ext.antimode_log_density[k] < lo
    lam = lambda_index(ext)
    assert (lam == 0.0) == (ext.M <= 1)
    if ext.M == 2:
        assert lam > 0


@given(mixtures, st.floats(1e-3, 1e3))
def test_lambda_scale_invariant(comps, c):
    w = np.array([c_[0] for c_ in comps])
    d = mixture_density_on_grid(w / w.sum(), [x[1] for x in comps], [x[2] for x in comps])
    scaled = GridDensity(d.grid, d.log_values + math.log(c))
    assume(np.array_equal(find_extrema(d).mode_idx, find_extrema(scaled).mode_idx))
    assert density_lambda(scaled) == pytest.approx(density_lambda(d), rel=1e-9, abs=1e-9)


def test_prominence_filter_removes_ripples():
    g = GridSpec(0, 0.8, 0.1)
    vals = np.array([0.1, 1.0, 0.2, 0.21, 0.2, 0.9, 0.1, 0.1, 0.1])
    assert find_extrema(GridDensity.from_values(g, vals)).M == 3
    ext = find_extrema(GridDensity.from_values(g, vals), prominence=1.5)
    assert ext.mode_idx.tolist() == [1, 5]
    with pytest.raises(ValueError):
        find_extrema(GridDensity.from_values(g, vals), prominence=0.5)


def test_posterior_grid_mean_examples():
    g = GridSpec(0, 1, 0.25)
    v = np.array([0.1, 0.5, 1.0, 0.5, 0.1])
    d = GridDensity.from_values(g, v)
    assert np.allclose(posterior_grid_mean([d]).values, v)
    c = 0.7
    other = GridDensity.from_values(g, -v + 2 * c)
    assert np.allclose(posterior_grid_mean([d, other]).values, c)
    assert np.allclose(posterior_grid_mean([d] * 5).values, v)
    with pytest.raises(ValueError):
        posterior_grid_mean([d, GridDensity.from_values(GridSpec(0, 1, 0.5), [1, 1, 1])])
    with pytest.raises(ValueError):
        posterior_grid_mean([])


def test_grid_density_validation():
    with pytest.raises(ValueError):
        GridDensity.from_values(GridSpec(0, 1, 0.5), [1.0, -1.0, 1.0])
    with pytest.raises(ValueError):
        GridDensity(GridSpec(0, 1, 0.5), [0.0, 0.0])


def test_hpd_examples():
    lo, hi = hpd_interval(np.arange(1, 101), 0.95)
    assert hi - lo == 94
    assert hpd_interval(np.full(50, 3.0)) == (3.0, 3.0)
    x = np.random.default_rng(0).standard_normal(100_000)
    lo, hi = hpd_interval(x, 0.95)
    assert abs(lo + 1.959964) < 0.05 and abs(hi - 1.959964) < 0.05
    with pytest.raises(ValueError, match="at least 20"):
        hpd_interval(np.arange(10))
    with pytest.raises(ValueError):
        hpd_interval(np.arange(30), 1.0)


@given(st.lists(st.floats(-1e6, 1e6), min_size=20, max_size=200), st.floats(0.05, 0.99))
def test_hpd_holds_required_count_and_is_shortest(xs, mass):
    s = np.sort(np.array(xs))
    lo, hi = hpd_interval(s, mass)
    k = math.ceil(mass * s.size - 1e-9)
    assert np.sum((s >= lo) & (s <= hi)) >= k
    widths = s[k - 1:] - s[: s.size - k + 1]
    assert hi - lo == widths.min()


def test_density_hpd_region_two_intervals():
    d = mixture_density_on_grid([0.5, 0.5], [-3.0, 3.0], [0.1, 0.1])
    region = density_hpd_region(d, 0.95)
    assert len(region) == 2
    (a1, b1, p1), (a2, b2, p2) = region
    assert a1 < p1 < b1 < 0 < a2 < p2 < b2
    assert abs(p1 + 3) < 1e-9 and abs(p2 - 3) < 1e-9
    # +-1.96 sd around each centre, up to grid spacing
    assert abs((b1 - a1) / 2 - 1.96 * math.sqrt(0.1)) < 0.05
    single = density_hpd_region(mixture_density_on_grid([1.0], [0.0], [1.0]), 0.95)
    assert len(single) == 1 and abs(single[0][0] + 1.96) < 0.05
