"""Acceptance criteria, one test each; every test prints one PASS/FAIL line."""

import io
import math
import time

import numpy as np
import pytest

from pharmonic.cli import main
from pharmonic.energy import (
    GridProfile,
    energy_t,
    energy_t_with_error,
    energy_x,
    energy_x_with_error,
    identity_energy_closed,
    identity_r_profile,
    second_variation,
    weighted_norm,
)
from pharmonic.integrate import identity_orbit, integrate_orbit, step_state
from pharmonic.model import Params, Regime, linearization_exponents, regime
from pharmonic.profile import ProfileState, identity_h, lyapunov_w, lyapunov_w_rate, to_r_profile
from pharmonic.shooting import BracketNotFound, find_bk, scan_zero_counts, solve_catalogue, upper_bracket
from pharmonic.spectrum import (
    Verdict,
    adjudicated,
    eigenfunction,
    eigenvalue_chain,
    eigenvalue_numeric,
    eigenvalue_theorem,
    jacobi_residual,
    residual_grid,
    scale_factor,
    select_formula,
    stability_verdict,
)

from .oracles import GRID, GRID_M_GT_P

# tolerances and limits, as stated by the criteria
C1_B_TOL, C1_SUP_TOL, C1_SECONDS = 1e-5, 1e-5, 10.0
C2_OMEGA_TOL, C2_SECONDS = 1e-3, 120.0
C3_SAMPLES, C3_SECONDS = 10_000, 120.0
C4_ORBITS, C4_SLACK, C4_REL = 100, 1e-8, 1e-6
C5_TOL, C5_SELECT, C5_REJECT, C5_SECONDS = 1e-6, 1e-6, 1e-3, 30.0
C7_CLOSED_TOL, C7_CHART_TOL = 1e-8, 1e-7
C8_REL = 1e-5


def report(capsys, n, ok, detail):
    with capsys.disabled():
        print(f"\nACCEPTANCE {n}: {'PASS' if ok else 'FAIL'} {detail}")
    assert ok, detail


@pytest.fixture(scope="module")
def catalogues():
    out, seconds = {}, {}
    for pm in [(3, 5), (2, 3)]:
        t0 = time.perf_counter()
        out[pm] = solve_catalogue(Params(*pm), 4)
        seconds[pm] = time.perf_counter() - t0
    return out, seconds


def test_1_identity_recovery(capsys):
    failures, worst_b, worst_sup, worst_t = [], 0.0, 0.0, 0.0
    for pm in [(2, 3), (2, 6), (3, 5), (4, 8)]:
        t0 = time.perf_counter()
        res = find_bk(Params(*pm), 1)
        dt = time.perf_counter() - t0
        x = res.orbit.x
        sel = x <= 10.0
        sup = float(np.max(np.abs(res.orbit.h[sel] - identity_h(x[sel]))))
        db = abs(res.b_k - 1.0)
        worst_b, worst_sup, worst_t = max(worst_b, db), max(worst_sup, sup), max(worst_t, dt)
        if not (db < C1_B_TOL and sup < C1_SUP_TOL and dt < C1_SECONDS):
            failures.append(pm)
    report(capsys, 1, not failures,
           f"identity recovery: max|b-1|={worst_b:.2e}, max sup-error={worst_sup:.2e}, slowest cell {worst_t:.2f}s"
           + (f", failing {failures}" if failures else ""))


def test_2_existence_catalogue(capsys, catalogues):
    cats, seconds = catalogues
    problems = []
    for pm, entries in cats.items():
        if any(e.result is None for e in entries):
            problems.append(f"{pm}: {[e.error for e in entries]}")
            continue
        bs = [e.result.b_k for e in entries]
        if not all(a > b > 0 for a, b in zip(bs, bs[1:])):
            problems.append(f"{pm}: b not decreasing {bs}")
        for e in entries:
            if abs(e.result.outcome.omega - (e.k - 0.5)) > C2_OMEGA_TOL:
                problems.append(f"{pm} k={e.k}: omega {e.result.outcome.omega}")
    total = sum(seconds.values())
    if total >= C2_SECONDS:
        problems.append(f"runtime {total:.1f}s")
    summary = "; ".join(f"{pm}: b={[round(e.result.b_k, 8) for e in cats[pm] if e.result]}" for pm in cats)
    report(capsys, 2, not problems, f"catalogues k_max=4 in {total:.1f}s; {summary}" + (f"; {problems}" if problems else ""))


def test_3_nonexistence(capsys):
    problems = []
    t0 = time.perf_counter()
    for pm in [(2, 7), (3, 12)]:
        params = Params(*pm)
        ub = upper_bracket(params)
        bs = np.linspace(ub / C3_SAMPLES, ub, C3_SAMPLES)
        zc = scan_zero_counts(params, bs)
        if zc.max() > 1:
            problems.append(f"{pm}: zero counts up to {zc.max()}")
        try:
            find_bk(params, 2)
            problems.append(f"{pm}: k=2 bracket found")
        except BracketNotFound:
            pass
        alpha = linearization_exponents(params)
        if regime(params).regime is not Regime.EXPONENTIAL or any(abs(np.imag(a)) > 0 for a in alpha):
            problems.append(f"{pm}: regime {regime(params).regime}")
    dt = time.perf_counter() - t0
    if dt >= C3_SECONDS:
        problems.append(f"runtime {dt:.1f}s")
    report(capsys, 3, not problems, f"nonexistence (2,7),(3,12): {C3_SAMPLES} b-values each, {dt:.1f}s"
           + (f"; {problems}" if problems else ""))


def test_4_lyapunov(capsys):
    # W' against a 4th-order difference along the trajectory; the error is taken
    # relative to max|W'| on each orbit (W' vanishes at x = 0)
    rng = np.random.default_rng(2024)
    worst_drop, worst_rel = 0.0, 0.0
    eps = 1e-3
    for _ in range(C4_ORBITS):
        params = Params(*GRID_M_GT_P[rng.integers(len(GRID_M_GT_P))])
        b = 10.0 ** rng.uniform(-4.0, 0.5)
        orbit = integrate_orbit(ProfileState(0.0, 0.0, b), params)
        worst_drop = max(worst_drop, float(-np.min(np.diff(orbit.w), initial=0.0)))
        errs, rates = [], []
        for i in range(1, len(orbit.x) - 1):
            s = orbit.state(i)
            w = [lyapunov_w(step_state(s, d * eps, params), params) for d in (-2, -1, 1, 2)]
            fd = (w[0] - 8 * w[1] + 8 * w[2] - w[3]) / (12 * eps)
            rate = lyapunov_w_rate(s, params)
            errs.append(abs(fd - rate))
            rates.append(abs(rate))
        if rates:
            worst_rel = max(worst_rel, max(errs) / max(rates))
    ok = worst_drop <= C4_SLACK and worst_rel <= C4_REL
    report(capsys, 4, ok, f"Lyapunov on {C4_ORBITS} orbits: largest W decrease {worst_drop:.2e}, "
           f"W' vs differences {worst_rel:.2e} relative")


def test_5_spectrum(capsys):
    problems = []
    t0 = time.perf_counter()
    for m in (3, 5):
        params = Params(2, m)
        lam = eigenvalue_numeric(params, 4)
        for j in range(1, 5):
            if abs(lam[j - 1] - eigenvalue_theorem(j, params)) > C5_TOL:
                problems.append(f"(2,{m}) j={j}")
    x = residual_grid()
    cells = [pm for pm in GRID if pm[0] != 2] + [(3, 3), (7, 5)]
    selected = set()
    for pm in cells:
        params = Params(*pm)
        lam = eigenvalue_numeric(params, 4)
        for j in range(1, 5):
            lt, lc = eigenvalue_theorem(j, params), eigenvalue_chain(j, params)
            if j == 1:
                if not (lt == params.p - params.m and lc == params.p - params.m):
                    problems.append(f"{pm} j=1: {lt}, {lc}")
                continue
            xi = eigenfunction(j, params.m, x)
            rt, rc = jacobi_residual(xi, lt, params, x), jacobi_residual(xi, lc, params, x)
            sel = select_formula(rt, rc)
            if sel not in ("theorem", "chain"):
                problems.append(f"{pm} j={j}: residuals {rt:.2e}, {rc:.2e}")
                continue
            selected.add(sel)
            chosen = lt if sel == "theorem" else lc
            if abs(lam[j - 1] - chosen) > C5_TOL:
                problems.append(f"{pm} j={j}: numeric {lam[j - 1]} vs {chosen}")
    dt = time.perf_counter() - t0
    if dt >= C5_SECONDS:
        problems.append(f"runtime {dt:.1f}s")
    report(capsys, 5, not problems, f"spectrum: p=2 matches the stated formula; p!=2 selects {sorted(selected)}; {dt:.1f}s"
           + (f"; {problems}" if problems else ""))


def test_6_stability(capsys):
    expected = {(4, 3): Verdict.STABLE, (5, 3): Verdict.STABLE, (7, 5): Verdict.STABLE,
                (2, 3): Verdict.UNSTABLE, (2, 6): Verdict.UNSTABLE, (3, 5): Verdict.UNSTABLE,
                (3, 3): Verdict.MARGINAL}
    got = {pm: stability_verdict(Params(*pm)) for pm in expected}
    bad = {pm: v.value for pm, v in got.items() if v is not expected[pm]}
    report(capsys, 6, not bad, "stability verdicts " + ", ".join(f"{pm}={v.value}" for pm, v in got.items())
           + (f"; wrong {bad}" if bad else ""))


def test_7_energy(capsys, catalogues):
    cats, _ = catalogues
    worst_closed, worst_chart, problems = 0.0, 0.0, []
    for pm in GRID_M_GT_P:
        params = Params(*pm)
        closed = identity_energy_closed(params)
        ex = energy_x(identity_orbit(params), params)
        et = energy_t(identity_r_profile(), params)
        worst_closed = max(worst_closed, abs(ex - closed), abs(et - closed))
    for pm, entries in cats.items():
        for e in entries:
            if e.result is None:
                problems.append(f"{pm} k={e.k} missing")
                continue
            ex, _ = energy_x_with_error(e.result.orbit, Params(*pm))
            et, _ = energy_t_with_error(e.result.solution, Params(*pm))
            worst_chart = max(worst_chart, abs(ex - et))
    ok = worst_closed < C7_CLOSED_TOL and worst_chart < C7_CHART_TOL and not problems
    report(capsys, 7, ok, f"energy: identity vs closed form {worst_closed:.2e}, chart gap on catalogues {worst_chart:.2e}"
           + (f"; {problems}" if problems else ""))


def test_8_rayleigh(capsys):
    # relative to max(|lambda|, 1) so that lambda = 0 (p = m) stays testable
    prof = GridProfile.identity()
    x = prof.x
    worst = 0.0
    for pm in GRID + [(3, 3)]:
        params = Params(*pm)
        for j in range(1, 5):
            xi = eigenfunction(j, params.m, x)
            ratio = second_variation(prof, xi, params) / (scale_factor(params) * weighted_norm(xi, x, params.m))
            lam = adjudicated(j, params)
            worst = max(worst, abs(ratio - lam) / max(abs(lam), 1.0))
    report(capsys, 8, worst < C8_REL, f"Rayleigh quotients at the identity, j<=4: worst relative error {worst:.2e}")


@pytest.mark.slow
def test_9_determinism(capsys, tmp_path):
    argv = ["atlas", "--p-range", "2:4", "--m-range", "3:9", "--k-max", "2", "--output-dir", str(tmp_path)]
    outs = []
    for jobs in ("1", "8"):
        buf = io.StringIO()
        code = main(argv + ["--jobs", jobs], out=buf)
        outs.append((code, buf.getvalue().encode()))
    ok = outs[0][0] == outs[1][0] == 0 and outs[0][1] == outs[1][1]
    report(capsys, 9, ok, f"atlas --jobs 1 vs --jobs 8: {len(outs[0][1])} bytes, identical={outs[0][1] == outs[1][1]}")
