"""b-orbits, rotation numbers and the shooting parameters b_k.

Shooting runs forward from ``x = 0``. The approach to the fixed points
``(±pi/2, 0)`` is a saddle in the forward direction (perturbations grow like
``exp((m-1)/(p-1) x)`` while the orbit decays like ``exp(-x)``), so no
forward orbit reaches a small ball around them in double precision. Two
things follow:

* the bisection on the zero count of ``h`` runs with the convergence ball
  switched off; every orbit declares itself by exiting;
* a connecting orbit is certified (and, for ``find_bk``, refined) by
  matching the forward leg against a tail integrated backward from the
  stable ray ``h' = -(h - ±pi/2)`` near infinity, where it is well
  conditioned.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.optimize import brentq, root

from . import energy as _energy
from .integrate import (
    ST_CONVERGED,
    ST_EXIT,
    Event,
    EventKind,
    IntegratorConfig,
    Orbit,
    integrate_orbit,
    integrate_segment,
)
from .model import Params, in_existence_window
from .profile import HALF_PI, ProfileState, RProfile, to_r_profile

log = logging.getLogger(__name__)

SCAN_FLOOR = 1e-12
# a forward orbit passing within this distance of a fixed point is tested
# for being a connecting orbit
NEAR_MISS = 0.1
# the integrated tail starts this far from the fixed point; closer in, h near
# pi/2 cannot resolve the deviation to better than ulp/amplitude
TAIL_AMPLITUDE = 1e-6
# the ray extension beyond the integrated tail stops at this amplitude
END_AMPLITUDE = 1e-10
RAY_STEP = 0.02
MATCH_TOL = 1e-7


class ShootKind(str, Enum):
    B_ORBIT = "BOrbit"
    D_ORBIT = "DOrbit"


class Classification(str, Enum):
    EXIT_PLUS = "ExitPlus"
    EXIT_MINUS = "ExitMinus"
    CONVERGED_PLUS = "ConvergedPlus"
    CONVERGED_MINUS = "ConvergedMinus"
    UNDECIDED = "Undecided"

    @property
    def converged(self) -> bool:
        return self in (Classification.CONVERGED_PLUS, Classification.CONVERGED_MINUS)


class BracketNotFound(RuntimeError):
    pass


class NonConvergent(RuntimeError):
    def __init__(self, msg, bracket=None):
        super().__init__(msg)
        self.bracket = bracket


@dataclass(frozen=True)
class ShootSpec:
    kind: ShootKind
    value: float

    def __post_init__(self):
        if not self.value > 0:
            raise ValueError("shooting value must be positive")
        if self.kind is ShootKind.D_ORBIT and not self.value < HALF_PI:
            raise ValueError("d must lie in (0, pi/2)")

    @property
    def initial(self) -> ProfileState:
        if self.kind is ShootKind.B_ORBIT:
            return ProfileState(0.0, 0.0, float(self.value))
        return ProfileState(0.0, float(self.value), 0.0)

    @property
    def theta0(self) -> float:
        return HALF_PI if self.kind is ShootKind.B_ORBIT else 0.0

    @property
    def symmetry(self) -> str:
        return "odd" if self.kind is ShootKind.B_ORBIT else "even"


@dataclass
class OrbitOutcome:
    classification: Classification
    x_e: float
    omega: float
    zero_count: int
    closest_approach: float = math.inf
    match_residual: float | None = None
    diagnostic: str = ""

    def as_dict(self) -> dict:
        return {
            "classification": self.classification.value,
            "omega": self.omega,
            "zero_count": self.zero_count,
            "x_e": self.x_e,
            "closest_approach": self.closest_approach,
            "match_residual": self.match_residual,
            "diagnostic": self.diagnostic,
        }


@dataclass
class ShootResult:
    params: Params
    k: int
    b_k: float
    bracket_width: float
    orbit: Orbit
    outcome: OrbitOutcome
    solution: RProfile
    energy: float
    bracket: tuple[float, float] = (math.nan, math.nan)
    warnings: list[str] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "p": self.params.p,
            "m": self.params.m,
            "k": self.k,
            "b_k": self.b_k,
            "bracket": list(self.bracket),
            "bracket_width": self.bracket_width,
            "outcome": self.outcome.as_dict(),
            "k_end": self.solution.k_end,
            "energy": self.energy,
            "warnings": list(self.warnings),
        }


# ------------------------------------------------------------- outcomes


def rotation_number(theta: np.ndarray, theta0: float) -> float:
    return -(float(theta[-1]) - theta0) / math.pi


def _theta(orbit: Orbit, theta0: float) -> np.ndarray:
    return orbit.theta - orbit.theta[0] + theta0


def classify(orbit: Orbit, theta0: float) -> OrbitOutcome:
    term = orbit.terminal
    if term is not None and term.kind is EventKind.EXIT_GAMMA:
        cls = Classification.EXIT_PLUS if term.sign > 0 else Classification.EXIT_MINUS
    elif term is not None and term.kind is EventKind.CONVERGED:
        cls = Classification.CONVERGED_PLUS if term.sign > 0 else Classification.CONVERGED_MINUS
    else:
        cls = Classification.UNDECIDED
    d = np.hypot(np.abs(orbit.h) - HALF_PI, orbit.dh)
    return OrbitOutcome(
        classification=cls,
        x_e=float(orbit.x[-1]),
        omega=rotation_number(_theta(orbit, theta0), theta0),
        zero_count=orbit.zero_count,
        closest_approach=float(d.min()),
        diagnostic=orbit.diagnostic,
    )


# ----------------------------------------------------------- tail legs


def _tail_start(sign: int, amplitude: float) -> tuple[float, float]:
    return sign * (HALF_PI - amplitude), sign * amplitude


def _tail(params, sign, eta, x_m, length, config, max_step=None) -> Orbit:
    """Backward leg from ``x_m + length + eta`` on the stable ray down to ``x_m``.

    The family is parametrised by the start point rather than by the
    amplitude: ``pi/2 - c`` only resolves ``c`` to a relative 1e-6 when
    ``c`` is near 1e-10, while a shifted start is continuous.
    """
    h0, v0 = _tail_start(sign, TAIL_AMPLITUDE)
    return integrate_segment(x_m + length + eta, h0, v0, x_m, params, config, max_step=max_step)


def _tail_length(u_m: float) -> float:
    return max(math.log(max(u_m, 2 * TAIL_AMPLITUDE) / TAIL_AMPLITUDE), 1.0)


def _match_index(orbit: Orbit, sign: int, after_x: float) -> int | None:
    """Sample index to match at: the last sample with ``|h| <= pi/4`` before
    the closest approach to the fixed point of the given sign."""
    d = np.hypot(orbit.h - sign * HALF_PI, orbit.dh)
    valid = orbit.x > after_x
    if not np.any(valid):
        return None
    idx = np.flatnonzero(valid)
    i_close = idx[np.argmin(d[idx])]
    if d[i_close] > NEAR_MISS:
        return None
    before = np.flatnonzero((np.arange(len(orbit.x)) < i_close) & valid & (np.abs(orbit.h) <= 0.25 * math.pi))
    if len(before) == 0:
        return None
    return int(before[-1])


def _ray_extension(x0: float, sign: int, end_amplitude: float):
    """Samples of ``u = TAIL_AMPLITUDE exp(-(x - x0))`` on the stable ray,
    from ``x0`` (exclusive) until ``u`` reaches ``end_amplitude``."""
    span = math.log(TAIL_AMPLITUDE / end_amplitude)
    n = max(int(math.ceil(span / RAY_STEP)), 1)
    x = x0 + np.linspace(0.0, span, n + 1)[1:]
    u = TAIL_AMPLITUDE * np.exp(-(x - x0))
    return x, sign * (HALF_PI - u), sign * u


def _splice(params, forward: Orbit, tail: Orbit, sign: int, end_amplitude: float = END_AMPLITUDE) -> Orbit:
    """Forward leg, reversed tail leg and the ray extension as one orbit.

    Past the integrated tail the orbit is continued along the stable ray;
    the neglected terms are of relative size ``TAIL_AMPLITUDE**2`` and
    ``exp(-2x)``, far below the integration tolerance.
    """
    tx, th, tv = tail.x[::-1], tail.h[::-1], tail.dh[::-1]
    rx, rh, rv = _ray_extension(float(tx[-1]), sign, end_amplitude)
    tx, th, tv = np.concatenate([tx, rx]), np.concatenate([th, rh]), np.concatenate([tv, rv])
    x = np.concatenate([forward.x, tx[1:]])
    h = np.concatenate([forward.h, th[1:]])
    dh = np.concatenate([forward.dh, tv[1:]])
    events = [ev for ev in forward.events if ev.kind in (EventKind.ZERO_OF_H, EventKind.ZERO_OF_DH)]
    events += [ev for ev in tail.events if ev.x > forward.x[-1]]
    events.sort(key=lambda ev: ev.x)
    events.append(Event(float(x[-1]), EventKind.CONVERGED, sign))
    return Orbit(params=params, x=x, h=h, dh=dh, events=events, status=ST_CONVERGED)


def _truncate(orbit: Orbit, i: int) -> Orbit:
    events = [ev for ev in orbit.events if ev.x <= orbit.x[i] and ev.kind in (EventKind.ZERO_OF_H, EventKind.ZERO_OF_DH)]
    return Orbit(params=orbit.params, x=orbit.x[: i + 1], h=orbit.h[: i + 1], dh=orbit.dh[: i + 1],
                 events=events, status=orbit.status)


def certify_connecting(orbit: Orbit, spec: ShootSpec, config: IntegratorConfig, tol: float = MATCH_TOL):
    """Test whether a forward orbit is, to ``tol``, a connecting orbit.

    The tail amplitude is fitted so the backward leg reproduces ``h`` at the
    match point; the mismatch left in ``h'`` is the residual. Returns
    ``(composite_orbit, residual)`` or ``(None, residual)``.
    """
    params = orbit.params
    best = (None, math.inf)
    for sign in (1, -1):
        i = _match_index(orbit, sign, 0.0)
        if i is None:
            continue
        x_m, h_m, v_m = float(orbit.x[i]), float(orbit.h[i]), float(orbit.dh[i])
        if sign * v_m <= 0 or sign * h_m <= 0:
            continue
        length = _tail_length(HALF_PI - abs(h_m))

        def gap(eta):
            leg = _tail(params, sign, eta, x_m, length, config)
            return sign * (leg.h[-1] - h_m)

        try:
            lo, hi = -3.0, 3.0
            g_lo, g_hi = gap(lo), gap(hi)
            while g_lo * g_hi > 0 and hi - lo < 40:
                lo, hi = lo - 3.0, hi + 3.0
                g_lo, g_hi = gap(lo), gap(hi)
            if g_lo * g_hi > 0:
                continue
            eta = brentq(gap, lo, hi, xtol=1e-14, rtol=1e-14)
        except (ValueError, RuntimeError):
            continue
        leg = _tail(params, sign, eta, x_m, length, config)
        residual = abs(leg.dh[-1] - v_m) / max(1.0, abs(v_m))
        if residual < best[1]:
            best = (_splice(params, _truncate(orbit, i), leg, sign) if residual < tol else None, residual)
    return best


def run_orbit(spec: ShootSpec, params: Params, config: IntegratorConfig | None = None,
              *, certify: bool = True) -> tuple[Orbit, OrbitOutcome]:
    config = config or IntegratorConfig()
    try:
        orbit = integrate_orbit(spec.initial, params, config)
    except Exception as exc:  # integrator failures are reported, not raised
        empty = Orbit(params=params, x=np.array([0.0]), h=np.array([spec.initial.h]),
                      dh=np.array([spec.initial.dh]), events=[], status=-1, diagnostic=str(exc))
        return empty, OrbitOutcome(Classification.UNDECIDED, 0.0, 0.0, 0, diagnostic=str(exc))
    outcome = classify(orbit, spec.theta0)
    if certify and not outcome.classification.converged and outcome.closest_approach < NEAR_MISS:
        composite, residual = certify_connecting(orbit, spec, config)
        outcome.match_residual = residual if math.isfinite(residual) else None
        if composite is not None:
            closest = outcome.closest_approach
            orbit = composite
            outcome = classify(orbit, spec.theta0)
            outcome.closest_approach = min(closest, outcome.closest_approach)
            outcome.match_residual = residual
    return orbit, outcome


# ------------------------------------------------------------- bracketing


def upper_bracket(params: Params) -> float:
    """Smallest ``b`` with ``W(0) > 0``, padded by one part in a million."""
    return math.sqrt((params.m - 1.0) / (params.p - 1.0)) * (1.0 + 1e-6)


def zero_count_at(b: float, params: Params, config: IntegratorConfig, limit: int = 0) -> tuple[int, bool]:
    """Zeros of ``h`` along the b-orbit, and whether the orbit decided
    (exited, or reached ``limit`` zeros) before ``x_max``."""
    orbit = integrate_orbit(ProfileState(0.0, 0.0, b), params, config, zero_limit=limit, converge=False)
    zc = orbit.zero_count
    decided = orbit.status == ST_EXIT or (limit > 0 and zc >= limit)
    return zc, decided


def scan_zero_counts(params: Params, bs, config: IntegratorConfig | None = None) -> np.ndarray:
    config = config or IntegratorConfig()
    return np.array([zero_count_at(float(b), params, config)[0] for b in bs], dtype=int)


def _predicate(b, k, params, config) -> bool:
    """``zero_count(b) >= k``; x_max is doubled up to four times for orbits
    that have not declared themselves."""
    cfg = config
    for _ in range(5):
        zc, decided = zero_count_at(b, params, cfg, limit=k)
        if decided:
            return zc >= k
        cfg = cfg.replace(x_max=2.0 * cfg.x_max)
    raise NonConvergent(f"orbit b={b!r} undecided up to x_max={cfg.x_max / 2:g}")


def _bracket(params, k, config):
    b_hi = upper_bracket(params)
    if _predicate(b_hi, k, params, config):
        raise BracketNotFound(f"zero count already >= {k} at the upper bracket b={b_hi:g}")
    b = b_hi
    while True:
        b *= 0.5
        if b < SCAN_FLOOR:
            raise BracketNotFound(f"no orbit with {k} zeros of h for b down to {SCAN_FLOOR:g}")
        try:
            hit = _predicate(b, k, params, config)
        except NonConvergent:
            hit = False
        if hit:
            return b, b_hi
        b_hi = b


def _bisect(lo, hi, k, params, config, width):
    while hi - lo > width:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        try:
            hit = _predicate(mid, k, params, config)
        except NonConvergent as exc:
            raise NonConvergent(str(exc), bracket=(lo, hi)) from None
        if hit:
            lo = mid
        else:
            hi = mid
    return lo, hi


# --------------------------------------------------------------- find b_k


def _polish(params, k, b_seed, seed_config, config, bracket, max_step=None):
    """Refine ``b_seed`` to a connecting orbit by two-leg matching.

    The seed is run with the configuration the bisection used (its
    transition is where the seed approaches the fixed point); the matching
    legs use ``config`` and ``max_step``, so the legs spliced afterwards are
    exactly the ones that were matched.
    """
    sign = 1 if k % 2 == 1 else -1
    seed = integrate_orbit(ProfileState(0.0, 0.0, b_seed), params, seed_config, converge=False)
    zeros = seed.events_of(EventKind.ZERO_OF_H)
    after = zeros[k - 2].x if k >= 2 and len(zeros) >= k - 1 else 0.0
    i = _match_index(seed, sign, after)
    if i is None:
        raise NonConvergent(f"seed orbit for k={k} never approaches h = {sign:+d}·pi/2", bracket=bracket)
    x_m = float(seed.x[i])
    length = _tail_length(HALF_PI - abs(float(seed.h[i])))

    def residual(z):
        b, eta = z
        fwd = integrate_segment(0.0, 0.0, b, x_m, params, config, max_step=max_step, events=False)
        leg = _tail(params, sign, eta, x_m, length, config, max_step=max_step)
        return [fwd.h[-1] - leg.h[-1], fwd.dh[-1] - leg.dh[-1]]

    sol = root(residual, [b_seed, 0.0], method="hybr", options={"xtol": 1e-13})
    res = np.max(np.abs(residual(sol.x)))
    if not sol.success and res > 1e-9:
        raise NonConvergent(f"matching did not converge for k={k}: {sol.message}", bracket=bracket)
    b_star, eta = float(sol.x[0]), float(sol.x[1])
    return b_star, eta, x_m, length, sign, float(res)


def find_bk(params: Params, k: int, b_tol: float = 1e-9, config: IntegratorConfig | None = None) -> ShootResult:
    """Locate the k-th shooting parameter and its connecting orbit.

    Bisection on the zero count of ``h`` brackets ``b_k`` to ``b_tol``;
    the bracket is then driven to machine resolution and the midpoint
    polished into an orbit that converges to ``(-1)^(k-1) pi/2``.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    config = config or IntegratorConfig()
    warnings = []
    if not in_existence_window(params):
        warnings.append(f"(p, m) = ({params.p:g}, {params.m}) lies outside the existence window")

    lo, hi = _bracket(params, k, config)
    lo, hi = _bisect(lo, hi, k, params, config, b_tol)
    width = hi - lo
    bracket = (lo, hi)
    flo, fhi = _bisect(lo, hi, k, params, config, 4 * math.ulp(hi))
    b_seed = 0.5 * (flo + fhi)

    tight = config.replace(rel_tol=min(config.rel_tol, 1e-12), abs_tol=min(config.abs_tol, 1e-14))
    dense = 0.02
    b_star, eta, x_m, length, sign, res = _polish(params, k, b_seed, config, tight, bracket, max_step=dense)
    if abs(b_star - b_seed) > max(b_tol, 1e-8 * b_seed):
        warnings.append(f"polished b={b_star!r} moved {abs(b_star - b_seed):.3g} from the bisection midpoint")

    fwd = integrate_segment(0.0, 0.0, b_star, x_m, params, tight, max_step=dense)
    leg = _tail(params, sign, eta, x_m, length, tight, max_step=dense)
    orbit = _splice(params, fwd, leg, sign)
    outcome = classify(orbit, HALF_PI)
    outcome.match_residual = res
    if not outcome.classification.converged:
        raise NonConvergent("polished orbit did not classify as converged", bracket=bracket)
    if abs(outcome.omega - (k - 0.5)) > 1e-3:
        raise NonConvergent(f"polished orbit has rotation number {outcome.omega:.6f}, expected {k - 0.5}",
                            bracket=bracket)
    solution = to_r_profile(orbit, "odd")
    energy = _energy.energy_x(orbit, params)
    return ShootResult(
        params=params, k=k, b_k=b_star, bracket_width=width, orbit=orbit, outcome=outcome,
        solution=solution, energy=energy, bracket=bracket, warnings=warnings,
    )


@dataclass
class CatalogueEntry:
    k: int
    result: ShootResult | None
    error: str | None = None
    reason: str | None = None


def solve_catalogue(params: Params, k_max: int, b_tol: float = 1e-9,
                    config: IntegratorConfig | None = None) -> list[CatalogueEntry]:
    if k_max < 1:
        raise ValueError("k_max must be at least 1")
    out = []
    for k in range(1, k_max + 1):
        try:
            out.append(CatalogueEntry(k, find_bk(params, k, b_tol, config)))
        except BracketNotFound as exc:
            out.append(CatalogueEntry(k, None, "BracketNotFound", str(exc)))
        except NonConvergent as exc:
            out.append(CatalogueEntry(k, None, "NonConvergent", str(exc)))
    found = [e.result.b_k for e in out if e.result is not None]
    if any(b1 <= b2 for b1, b2 in zip(found, found[1:])):
        log.warning("catalogue b_k not strictly decreasing for %s: %s", params, found)
    return out
