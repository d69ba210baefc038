import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pharmonic.energy import (
    EnergyReport,
    GridProfile,
    NonCriticalProfile,
    PoleSingularity,
    TailNotConverged,
    criticality_residual,
    energy_report,
    energy_t,
    energy_t_with_error,
    energy_x,
    energy_x_with_error,
    identity_energy_closed,
    identity_r_profile,
    second_variation,
    weighted_norm,
)
from pharmonic.integrate import Event, EventKind, Orbit, identity_orbit, integrate_orbit
from pharmonic.model import Params
from pharmonic.profile import HALF_PI, ProfileState, RProfile, identity_h, to_r_profile
from pharmonic.shooting import solve_catalogue
from pharmonic.spectrum import adjudicated, eigenfunction, scale_factor

from .oracles import GRID, GRID_M_GT_P, identity_energy_quad


@pytest.fixture(scope="module")
def identity_grid():
    return GridProfile.identity()


@pytest.fixture(scope="module")
def catalogue_35():
    return solve_catalogue(Params(3, 5), 4)


# ----------------------------------------------------------- closed form


def test_closed_form_p2_m3():
    assert identity_energy_closed(Params(2, 3)) == pytest.approx(3 * math.pi / 4, rel=1e-14)


def test_closed_form_p2_m2():
    # (1/2)·2·∫_0^pi sin t dt
    assert identity_energy_closed(Params(2, 2)) == pytest.approx(2.0, rel=1e-14)


@pytest.mark.parametrize("pm", [(4, 5), (3, 5), (2, 2), (2, 7), (5, 3), (2.5, 4), (3, 12)])
def test_closed_form_matches_quadrature(pm):
    assert identity_energy_closed(Params(*pm)) == pytest.approx(identity_energy_quad(*pm), rel=1e-13)


# ------------------------------------------------------------- x chart


@pytest.mark.parametrize("pm", [(2, 3), (3, 5)])
def test_energy_x_identity_examples(pm):
    params = Params(*pm)
    assert abs(energy_x(identity_orbit(params), params) - identity_energy_closed(params)) < 1e-8


def test_energy_x_p2_m3_value():
    params = Params(2, 3)
    assert energy_x(identity_orbit(params), params) == pytest.approx(2.35619449, abs=1e-8)


def test_energy_x_constant_profile():
    params = Params(3, 5)
    x = np.linspace(0.0, 20.0, 201)
    orbit = Orbit(params=params, x=x, h=np.full_like(x, HALF_PI), dh=np.zeros_like(x),
                  events=[Event(20.0, EventKind.CONVERGED, 1)], status=1)
    orbit._cache["ddh"] = np.zeros_like(x)
    # cos(pi/2) is 6e-17 in floating point
    assert energy_x(orbit, params) < 1e-30


def test_energy_x_tail_not_converged():
    params = Params(3, 5)
    orbit = integrate_orbit(ProfileState(0.0, 0.0, 0.5), params)
    with pytest.raises(TailNotConverged):
        energy_x(orbit, params)


def test_energy_x_short_identity_tail():
    # the identity cut at x = 10 sits 9e-5 from pi/2
    params = Params(3, 5)
    with pytest.raises(TailNotConverged):
        energy_x(identity_orbit(params, x_max=10.0, n=1001), params)


def test_energy_x_error_estimate_small():
    params = Params(3, 5)
    value, err = energy_x_with_error(identity_orbit(params), params)
    assert 0.0 <= err < 1e-8
    assert abs(value - identity_energy_closed(params)) <= max(10 * err, 1e-12)


# ------------------------------------------------------------- t chart


def test_energy_t_identity_p2_m3():
    assert energy_t(identity_r_profile(), Params(2, 3)) == pytest.approx(3 * math.pi / 4, abs=1e-8)


def test_energy_t_zero_map():
    t = np.linspace(0.0, math.pi, 1001)
    prof = RProfile(t=t, r=np.zeros_like(t), dr=np.zeros_like(t), ddr=np.zeros_like(t), k_end=0)
    assert energy_t(prof, Params(3, 5)) == 0.0


def test_energy_t_pole_singularity():
    t = np.linspace(0.0, math.pi, 1001)
    prof = RProfile(t=t, r=t + 0.1, dr=np.ones_like(t), ddr=np.zeros_like(t), k_end=1)
    with pytest.raises(PoleSingularity):
        energy_t(prof, Params(3, 5))


def test_energy_t_needs_full_interval():
    t = np.linspace(0.1, math.pi, 1001)
    prof = RProfile(t=t, r=t - 0.1, dr=np.ones_like(t), ddr=np.zeros_like(t), k_end=1)
    with pytest.raises(PoleSingularity):
        energy_t(prof, Params(3, 5))


@pytest.mark.parametrize("pm", GRID_M_GT_P)
def test_identity_energy_both_charts(pm):
    params = Params(*pm)
    closed = identity_energy_closed(params)
    ex = energy_x(identity_orbit(params), params)
    et = energy_t(identity_r_profile(), params)
    et_orbit = energy_t(to_r_profile(identity_orbit(params)), params)
    assert abs(ex - closed) < 1e-8
    assert abs(et - closed) < 1e-8
    assert abs(et_orbit - closed) < 1e-8
    assert abs(ex - et) < 1e-8


def test_report_invariant():
    params = Params(2, 6)
    orbit = identity_orbit(params)
    rep = energy_report(orbit, to_r_profile(orbit), params)
    assert rep.chart_gap <= 10 * rep.quadrature_error + 1e-14
    assert set(rep.as_dict()) == {"value_x_chart", "value_t_chart", "quadrature_error"}


def test_catalogue_chart_independence(catalogue_35):
    params = Params(3, 5)
    for e in catalogue_35:
        res = e.result
        ex, err_x = energy_x_with_error(res.orbit, params)
        et, err_t = energy_t_with_error(res.solution, params)
        assert abs(ex - et) < 1e-7, e.k
        assert res.energy == ex


def test_catalogue_energy_ordering(catalogue_35, capsys):
    energies = [e.result.energy for e in catalogue_35]
    with capsys.disabled():
        print("\n(3, 5) energies by k:", " ".join(f"{v:.10g}" for v in energies))
    assert energies[0] == pytest.approx(identity_energy_closed(Params(3, 5)), rel=1e-9)
    assert all(a <= b for a, b in zip(energies, energies[1:]))


# ----------------------------------------------------- second variation


def test_criticality_of_identity(identity_grid):
    assert criticality_residual(identity_grid, Params(3, 5)) < 1e-6


def test_non_critical_profile_rejected():
    prof = GridProfile.identity()
    bad = GridProfile(prof.x, 0.5 * prof.h, 0.5 * prof.dh, 0.5 * prof.ddh)
    with pytest.raises(NonCriticalProfile):
        second_variation(bad, lambda x: eigenfunction(1, 5, x), Params(3, 5))


def test_zero_direction(identity_grid):
    assert second_variation(identity_grid, np.zeros_like(identity_grid.x), Params(3, 5)) == 0.0


def test_direction_shape_checked(identity_grid):
    with pytest.raises(ValueError):
        second_variation(identity_grid, np.zeros(10), Params(3, 5))


def test_stable_ground_mode(identity_grid):
    assert second_variation(identity_grid, lambda x: eigenfunction(1, 3, x), Params(5, 3)) > 0


RAYLEIGH_GRID = [pm for pm in GRID] + [(3, 3)]


@pytest.mark.parametrize("pm", RAYLEIGH_GRID)
def test_rayleigh_identity(identity_grid, pm):
    params = Params(*pm)
    x = identity_grid.x
    for j in range(1, 5):
        xi = eigenfunction(j, params.m, x)
        q = second_variation(identity_grid, xi, params)
        ratio = q / (scale_factor(params) * weighted_norm(xi, x, params.m))
        lam = adjudicated(j, params)
        assert abs(ratio - lam) <= 1e-5 * max(abs(lam), 1.0), j


@pytest.mark.parametrize("pm", [(3, 5), (2, 3), (5, 3)])
def test_eigen_example_1e6(identity_grid, pm):
    params = Params(*pm)
    x = identity_grid.x
    for j in range(1, 5):
        xi = eigenfunction(j, params.m, x)
        expected = adjudicated(j, params) * scale_factor(params) * weighted_norm(xi, x, params.m)
        assert second_variation(identity_grid, xi, params) == pytest.approx(expected, rel=1e-6, abs=1e-9)


def _bump(c, w):
    def f(x):
        u = (x - c) / w
        out = np.zeros_like(x)
        inside = np.abs(u) < 1
        out[inside] = np.exp(-1.0 / (1.0 - u[inside] ** 2))
        return out
    return f


BUMPS = [_bump(c, w) for c, w in zip(np.random.default_rng(11).uniform(-3, 3, 10),
                                      np.random.default_rng(12).uniform(0.8, 3.0, 10))]


@pytest.mark.parametrize("pm", [(5, 3), (4, 3), (7, 5)])
def test_sign_stable(identity_grid, pm):
    for i, xi in enumerate(BUMPS):
        assert second_variation(identity_grid, xi, Params(*pm)) > 0, i


@pytest.mark.parametrize("pm", GRID_M_GT_P)
def test_sign_unstable(identity_grid, pm):
    assert second_variation(identity_grid, lambda x: eigenfunction(1, pm[1], x), Params(*pm)) < 0


@given(st.sampled_from(GRID), st.integers(0, 9), st.integers(0, 9))
@settings(max_examples=20)
def test_symmetry(identity_grid, pm, i, j):
    params = Params(*pm)
    a, b = BUMPS[i], BUMPS[j]
    qab = second_variation(identity_grid, a, params, b)
    qba = second_variation(identity_grid, b, params, a)
    assert abs(qab - qba) <= 1e-8 * max(1.0, abs(qab))


def test_symmetry_eigenmodes(identity_grid):
    params = Params(3, 5)
    x = identity_grid.x
    xi1, xi3 = eigenfunction(1, 5, x), eigenfunction(3, 5, x)
    q13 = second_variation(identity_grid, xi1, params, xi3)
    q31 = second_variation(identity_grid, xi3, params, xi1)
    scale = math.sqrt(abs(second_variation(identity_grid, xi1, params) * second_variation(identity_grid, xi3, params)))
    assert abs(q13 - q31) < 1e-8 * scale
    # distinct eigenmodes are orthogonal under the form
    assert abs(q13) < 1e-6 * scale


def test_second_variation_on_solution(catalogue_35, identity_grid):
    # the k = 1 catalogued solution resampled matches the closed-form identity grid
    params = Params(3, 5)
    prof = GridProfile.from_orbit(catalogue_35[0].result.orbit, "odd", half_width=30.0)
    assert criticality_residual(prof, params) < 1e-6
    xi = lambda x: eigenfunction(2, 5, x)
    assert second_variation(prof, xi, params) == pytest.approx(second_variation(identity_grid, xi, params), rel=1e-6)


def test_second_variation_higher_solution(catalogue_35):
    prof = GridProfile.from_orbit(catalogue_35[1].result.orbit, "odd", half_width=30.0)
    assert criticality_residual(prof, Params(3, 5)) < 1e-6
    q = second_variation(prof, _bump(0.0, 2.0), Params(3, 5))
    assert math.isfinite(q)


def test_from_orbit_rejects_exit():
    orbit = integrate_orbit(ProfileState(0.0, 0.0, 3.0), Params(2, 3))
    with pytest.raises(ValueError):
        GridProfile.from_orbit(orbit)


def test_grid_identity_values(identity_grid):
    np.testing.assert_allclose(identity_grid.h, identity_h(identity_grid.x), atol=0)
    assert identity_grid.dx == pytest.approx(5e-3)
    assert identity_grid.x[0] == -30.0 and identity_grid.x[-1] == 30.0
