import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.interpolate import make_interp_spline

from pharmonic.integrate import EventKind, IntegratorConfig
from pharmonic.model import Params
from pharmonic.profile import HALF_PI, identity_h
from pharmonic.shooting import (
    BracketNotFound,
    Classification,
    ShootKind,
    ShootSpec,
    find_bk,
    rotation_number,
    run_orbit,
    scan_zero_counts,
    solve_catalogue,
    upper_bracket,
)

from .oracles import FROZEN_BK, GRID, t_chart_acceleration

B = ShootKind.B_ORBIT
D = ShootKind.D_ORBIT


@pytest.fixture(scope="module")
def catalogues():
    return {pm: solve_catalogue(Params(*pm), 4) for pm in [(3, 5), (2, 3)]}


# ---------------------------------------------------------------- ShootSpec


@pytest.mark.parametrize("kind, value", [(B, 0.0), (B, -1.0), (D, 0.0), (D, HALF_PI), (D, 2.0)])
def test_spec_rejects(kind, value):
    with pytest.raises(ValueError):
        ShootSpec(kind, value)


def test_spec_initial_data():
    assert (ShootSpec(B, 0.5).initial.h, ShootSpec(B, 0.5).initial.dh) == (0.0, 0.5)
    assert (ShootSpec(D, 0.5).initial.h, ShootSpec(D, 0.5).initial.dh) == (0.5, 0.0)
    assert ShootSpec(B, 0.5).theta0 == HALF_PI and ShootSpec(D, 0.5).theta0 == 0.0


# ---------------------------------------------------------------- run_orbit


def test_identity_b_orbit():
    _, out = run_orbit(ShootSpec(B, 1.0), Params(3, 5))
    assert out.classification is Classification.CONVERGED_PLUS
    assert out.omega == pytest.approx(0.5, abs=1e-3)
    assert out.zero_count == 0


def test_steep_b_orbit_exits():
    _, out = run_orbit(ShootSpec(B, 3.0), Params(2, 3))
    assert out.classification is Classification.EXIT_PLUS
    assert out.zero_count == 0


def test_small_b_winds():
    _, out = run_orbit(ShootSpec(B, 1e-5), Params(2, 3))
    assert out.omega > 2


@pytest.mark.parametrize("db, cls", [(1e-6, Classification.EXIT_PLUS), (-1e-6, Classification.EXIT_MINUS)])
def test_perturbed_identity_exits(db, cls):
    _, out = run_orbit(ShootSpec(B, 1.0 + db), Params(3, 5))
    assert out.classification is cls


def test_d_orbit_runs():
    orbit, out = run_orbit(ShootSpec(D, 0.3), Params(3, 5))
    assert out.classification is not Classification.UNDECIDED
    assert orbit.h[0] == 0.3 and orbit.dh[0] == 0.0


def test_certify_off_reports_raw_exit():
    _, out = run_orbit(ShootSpec(B, 1.0), Params(3, 5), certify=False)
    assert not out.classification.converged


def test_truncated_orbit_is_undecided():
    _, out = run_orbit(ShootSpec(B, 0.3), Params(2, 3), IntegratorConfig(max_steps=50))
    assert out.classification is Classification.UNDECIDED


@given(st.sampled_from(GRID), st.floats(-5.0, 0.5))
@settings(max_examples=40)
def test_outcome_invariants(pm, log_b):
    params = Params(*pm)
    orbit, out = run_orbit(ShootSpec(B, 10.0 ** log_b), params)
    recomputed = rotation_number(orbit.theta - orbit.theta[0] + HALF_PI, HALF_PI)
    assert out.omega == pytest.approx(recomputed, abs=1e-9)
    assert out.zero_count == len(orbit.events_of(EventKind.ZERO_OF_H))
    if out.classification in (Classification.EXIT_PLUS, Classification.CONVERGED_PLUS):
        assert out.zero_count - 0.5 < out.omega <= out.zero_count + 0.5 + 1e-9


# ------------------------------------------------------------ upper_bracket


@pytest.mark.parametrize("pm, expected", [((2, 3), math.sqrt(2)), ((3, 5), math.sqrt(2)), ((5, 5), 1.0)])
def test_upper_bracket(pm, expected):
    assert upper_bracket(Params(*pm)) == pytest.approx(expected * (1 + 1e-6), rel=1e-15)


# ------------------------------------------------------------------ find_bk


@pytest.mark.parametrize("pm", [(3, 5), (2, 3)])
def test_first_solution_is_identity(pm):
    params = Params(*pm)
    res = find_bk(params, 1, b_tol=1e-8)
    assert res.b_k == pytest.approx(1.0, abs=1e-6)
    assert res.bracket_width <= 1e-8
    sel = res.orbit.x <= 10.0
    assert np.max(np.abs(res.orbit.h[sel] - identity_h(res.orbit.x[sel]))) < 1e-5
    np.testing.assert_allclose(res.solution.r[1:-1], res.solution.t[1:-1], atol=1e-5)


def test_second_solution_p2_m3():
    res = find_bk(Params(2, 3), 2)
    assert 0.0 < res.b_k < 1.0
    assert res.outcome.zero_count == 1
    assert res.outcome.omega == pytest.approx(1.5, abs=1e-3)
    assert res.outcome.classification is Classification.CONVERGED_MINUS


def test_second_solution_dense_scan():
    # one transition between one and two zeros in (0, 1)
    params = Params(2, 3)
    bs = np.linspace(1e-4, 1.0, 10_000, endpoint=False)
    zc = scan_zero_counts(params, bs)
    one = zc == 1
    edges = np.nonzero(np.diff(one.astype(int)))[0]
    assert len(edges) == 1
    b2 = find_bk(params, 2).b_k
    assert bs[edges[0]] <= b2 <= bs[edges[0] + 1]


@pytest.mark.parametrize("pm", sorted(FROZEN_BK))
def test_find_bk_matches_oracle(pm):
    params = Params(*pm)
    for k, ref in enumerate(FROZEN_BK[pm], start=1):
        assert find_bk(params, k).b_k == pytest.approx(ref, rel=1e-8), k


def test_find_bk_rejects_k0():
    with pytest.raises(ValueError):
        find_bk(Params(3, 5), 0)


def test_nonexistence_cell_has_no_second_bracket():
    with pytest.raises(BracketNotFound):
        find_bk(Params(2, 7), 2)


def test_outside_window_warns():
    res = find_bk(Params(2, 7), 1)
    assert res.warnings
    assert res.b_k == pytest.approx(1.0, abs=1e-6)


@pytest.mark.parametrize("pm, k", [((3, 5), 1), ((3, 5), 2), ((3, 5), 3), ((2, 3), 2), ((4, 8), 2)])
def test_omega_steps_across_bk(pm, k):
    # Ω at exit is continuous on either side; its rounded value steps by one
    params = Params(*pm)
    res = find_bk(params, k)
    lo, hi = res.bracket
    _, below = run_orbit(ShootSpec(B, lo * (1 - 1e-7)), params)
    _, above = run_orbit(ShootSpec(B, hi * (1 + 1e-7)), params)
    assert below.zero_count == above.zero_count + 1 == k
    assert above.omega < k - 0.5 < below.omega
    assert round(below.omega) - round(above.omega) == 1


# ------------------------------------------------------------- catalogues


@pytest.mark.parametrize("pm", [(3, 5), (2, 3)])
def test_catalogue(catalogues, pm):
    entries = catalogues[pm]
    assert [e.k for e in entries] == [1, 2, 3, 4]
    assert all(e.result is not None for e in entries)
    bs = [e.result.b_k for e in entries]
    assert all(b1 > b2 > 0 for b1, b2 in zip(bs, bs[1:]))
    for e in entries:
        res = e.result
        assert res.outcome.omega == pytest.approx(e.k - 0.5, abs=1e-3)
        plus = res.outcome.classification is Classification.CONVERGED_PLUS
        assert plus == (e.k % 2 == 1)
        assert res.solution.r[0] == 0.0
        assert res.solution.r[-1] == pytest.approx(math.pi if plus else -math.pi)


def test_catalogue_k_max_1_is_identity():
    (entry,) = solve_catalogue(Params(2, 3), 1)
    sel = entry.result.orbit.x <= 10.0
    assert np.max(np.abs(entry.result.orbit.h[sel] - identity_h(entry.result.orbit.x[sel]))) < 1e-5


def test_catalogue_nonexistence_cell():
    entries = solve_catalogue(Params(2, 7), 2)
    assert entries[1].result is None and entries[1].error == "BracketNotFound"


def test_catalogue_rejects_k_max0():
    with pytest.raises(ValueError):
        solve_catalogue(Params(3, 5), 0)


@pytest.mark.parametrize("pm", [(3, 5), (2, 3)])
def test_solutions_satisfy_t_chart_equation(catalogues, pm):
    p, m = pm
    for e in catalogues[pm]:
        sol = e.result.solution
        t, r, dr = sol.t, sol.r, sol.dr
        keep = (t > 0.02) & (t < math.pi - 0.02)
        keep &= np.concatenate([[True], np.diff(t) > 1e-9])
        t, r, dr = t[keep], r[keep], dr[keep]
        ddr = make_interp_spline(t, dr, k=5).derivative()(t)
        inner = (t > 0.05) & (t < math.pi - 0.05)
        res = ddr[inner] - t_chart_acceleration(t[inner], r[inner], dr[inner], p, m)
        assert np.max(np.abs(res)) < 1e-6, e.k


def test_result_as_dict(catalogues):
    d = catalogues[(3, 5)][1].result.as_dict()
    assert d["k"] == 2 and d["k_end"] == -1
    assert d["outcome"]["classification"] == "ConvergedMinus"
