"""Adaptive Dormand-Prince 5(4) integration of the reduced equation.

The stepper is compiled with numba; every orbit in a parameter scan is a
few thousand right-hand-side evaluations, and scans run ten thousand of
them. Events (zeros of ``h`` and ``h'``, exit through ``|h| = pi/2``) are
located by bisecting the length of a single step from the last accepted
point, re-evaluating the right-hand side, with no interpolant involved.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from enum import Enum

import numpy as np
from numba import njit

from . import profile as prof
from .model import Params
from .profile import DEGENERACY_FLOOR, HALF_PI, DegeneratePoint, ProfileState

# kernel status codes
ST_EXIT = 0
ST_CONVERGED = 1
ST_XMAX = 2
ST_MAXSTEPS = 3
ST_UNDERFLOW = 4
ST_DEGENERATE = 5
ST_ZERO_LIMIT = 6

# kernel event codes
EV_ZERO_H = 0
EV_ZERO_DH = 1
EV_EXIT = 2
EV_CONVERGED = 3

MIN_STEP = 1e-14


class EventKind(str, Enum):
    ZERO_OF_H = "ZeroOfH"
    ZERO_OF_DH = "ZeroOfDh"
    EXIT_GAMMA = "ExitGamma"
    CONVERGED = "Converged"
    TRUNCATED = "Truncated"


_KIND_OF_CODE = {
    EV_ZERO_H: EventKind.ZERO_OF_H,
    EV_ZERO_DH: EventKind.ZERO_OF_DH,
    EV_EXIT: EventKind.EXIT_GAMMA,
    EV_CONVERGED: EventKind.CONVERGED,
}


class StepSizeUnderflow(ArithmeticError):
    pass


@dataclass(frozen=True)
class Event:
    x: float
    kind: EventKind
    sign: int = 0


@dataclass(frozen=True)
class IntegratorConfig:
    rel_tol: float = 1e-10
    abs_tol: float = 1e-12
    x_max: float = 50.0
    max_steps: int = 1_000_000
    event_tol: float = 1e-12
    convergence_eps: float = 1e-9
    max_step: float = 0.1

    def __post_init__(self):
        for name in ("rel_tol", "abs_tol", "x_max", "event_tol", "convergence_eps", "max_step"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.max_steps <= 0:
            raise ValueError("max_steps must be positive")
        if self.x_max <= 1:
            raise ValueError("x_max must exceed 1")

    def replace(self, **changes) -> "IntegratorConfig":
        return IntegratorConfig(**{**asdict(self), **changes})

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class Orbit:
    """An integrated trajectory, samples at every accepted step.

    ``x`` is strictly monotone. Derived columns (``a``, ``w``, ``theta``,
    ``rho``, ``ddh``) are computed on first access.
    """

    params: Params
    x: np.ndarray
    h: np.ndarray
    dh: np.ndarray
    events: list[Event]
    status: int
    diagnostic: str = ""
    _cache: dict = field(default_factory=dict, repr=False)

    def __len__(self) -> int:
        return len(self.x)

    @property
    def terminal(self) -> Event | None:
        for ev in reversed(self.events):
            if ev.kind in (EventKind.EXIT_GAMMA, EventKind.CONVERGED, EventKind.TRUNCATED):
                return ev
        return None

    def events_of(self, kind: EventKind) -> list[Event]:
        return [ev for ev in self.events if ev.kind is kind]

    @property
    def zero_count(self) -> int:
        return sum(1 for ev in self.events if ev.kind is EventKind.ZERO_OF_H)

    def _cached(self, key, fn):
        if key not in self._cache:
            self._cache[key] = fn()
        return self._cache[key]

    @property
    def a(self) -> np.ndarray:
        return self._cached("a", lambda: prof.a_values(self.h, self.dh, self.params.m))

    @property
    def w(self) -> np.ndarray:
        return self._cached("w", lambda: prof.w_values(self.h, self.dh, self.params))

    @property
    def rho(self) -> np.ndarray:
        return self._cached("rho", lambda: np.hypot(self.h, self.dh))

    @property
    def theta(self) -> np.ndarray:
        return self._cached("theta", lambda: prof.phase_angle(self.h, self.dh))

    @property
    def ddh(self) -> np.ndarray:
        def compute():
            out = np.zeros_like(self.h)
            _, _, den = prof._ratios(self.h, self.dh, self.params)
            ok = den >= DEGENERACY_FLOOR
            out[ok] = prof.acceleration(self.x[ok], self.h[ok], self.dh[ok], self.params)
            return out

        return self._cached("ddh", compute)

    def state(self, i: int) -> ProfileState:
        return ProfileState(float(self.x[i]), float(self.h[i]), float(self.dh[i]))

    def sample(self, i: int) -> prof.OrbitSample:
        return prof.OrbitSample(
            state=self.state(i),
            a_val=float(self.a[i]),
            w_val=float(self.w[i]),
            theta=float(self.theta[i]),
            rho=float(self.rho[i]),
        )

    @property
    def samples(self) -> list[prof.OrbitSample]:
        return [self.sample(i) for i in range(len(self))]


# ------------------------------------------------------------------ kernel


@njit(cache=True)
def _accel(x, h, v, p, m, floor):
    c = math.cos(h)
    c2 = (m - 1.0) * c * c
    v2 = v * v
    den = (p - 1.0) * v2 + c2
    if den < floor:
        return 0.0, False
    s2 = 2.0 * math.sin(h) * c
    a = -(p - m) * math.tanh(x) * (v2 + c2) / den * v - 0.5 * (m - 1.0) * ((3.0 - p) * v2 + c2) / den * s2
    return a, True


@njit(cache=True)
def _dp_step(x, h, v, H, p, m, floor):
    """One Dormand-Prince step. Returns (h5, v5, err_h, err_v, ok)."""
    k1h = v
    k1v, ok = _accel(x, h, v, p, m, floor)
    if not ok:
        return h, v, 0.0, 0.0, False

    yh = h + H * (0.2 * k1h)
    yv = v + H * (0.2 * k1v)
    k2h = yv
    k2v, ok = _accel(x + 0.2 * H, yh, yv, p, m, floor)
    if not ok:
        return h, v, 0.0, 0.0, False

    yh = h + H * (3.0 / 40.0 * k1h + 9.0 / 40.0 * k2h)
    yv = v + H * (3.0 / 40.0 * k1v + 9.0 / 40.0 * k2v)
    k3h = yv
    k3v, ok = _accel(x + 0.3 * H, yh, yv, p, m, floor)
    if not ok:
        return h, v, 0.0, 0.0, False

    yh = h + H * (44.0 / 45.0 * k1h - 56.0 / 15.0 * k2h + 32.0 / 9.0 * k3h)
    yv = v + H * (44.0 / 45.0 * k1v - 56.0 / 15.0 * k2v + 32.0 / 9.0 * k3v)
    k4h = yv
    k4v, ok = _accel(x + 0.8 * H, yh, yv, p, m, floor)
    if not ok:
        return h, v, 0.0, 0.0, False

    yh = h + H * (19372.0 / 6561.0 * k1h - 25360.0 / 2187.0 * k2h + 64448.0 / 6561.0 * k3h - 212.0 / 729.0 * k4h)
    yv = v + H * (19372.0 / 6561.0 * k1v - 25360.0 / 2187.0 * k2v + 64448.0 / 6561.0 * k3v - 212.0 / 729.0 * k4v)
    k5h = yv
    k5v, ok = _accel(x + 8.0 / 9.0 * H, yh, yv, p, m, floor)
    if not ok:
        return h, v, 0.0, 0.0, False

    yh = h + H * (9017.0 / 3168.0 * k1h - 355.0 / 33.0 * k2h + 46732.0 / 5247.0 * k3h
                  + 49.0 / 176.0 * k4h - 5103.0 / 18656.0 * k5h)
    yv = v + H * (9017.0 / 3168.0 * k1v - 355.0 / 33.0 * k2v + 46732.0 / 5247.0 * k3v
                  + 49.0 / 176.0 * k4v - 5103.0 / 18656.0 * k5v)
    k6h = yv
    k6v, ok = _accel(x + H, yh, yv, p, m, floor)
    if not ok:
        return h, v, 0.0, 0.0, False

    h5 = h + H * (35.0 / 384.0 * k1h + 500.0 / 1113.0 * k3h + 125.0 / 192.0 * k4h
                  - 2187.0 / 6784.0 * k5h + 11.0 / 84.0 * k6h)
    v5 = v + H * (35.0 / 384.0 * k1v + 500.0 / 1113.0 * k3v + 125.0 / 192.0 * k4v
                  - 2187.0 / 6784.0 * k5v + 11.0 / 84.0 * k6v)
    k7h = v5
    k7v, ok = _accel(x + H, h5, v5, p, m, floor)
    if not ok:
        # the step itself landed on the fixed point; accept without estimate
        return h5, v5, 0.0, 0.0, True

    e1, e3, e4 = 71.0 / 57600.0, -71.0 / 16695.0, 71.0 / 1920.0
    e5, e6, e7 = -17253.0 / 339200.0, 22.0 / 525.0, -1.0 / 40.0
    err_h = H * (e1 * k1h + e3 * k3h + e4 * k4h + e5 * k5h + e6 * k6h + e7 * k7h)
    err_v = H * (e1 * k1v + e3 * k3v + e4 * k4v + e5 * k5v + e6 * k6v + e7 * k7v)
    return h5, v5, err_h, err_v, True


@njit(cache=True)
def _sgn(a):
    if a > 0.0:
        return 1
    if a < 0.0:
        return -1
    return 0


@njit(cache=True)
def _fp_distance(h, v):
    return math.sqrt((abs(h) - 0.5 * math.pi) ** 2 + v * v)


@njit(cache=True)
def _locate(x, h, v, H, p, m, floor, which, s0, tol):
    """Bisect the step length in (0, H] for a sign change of component
    ``which`` (0: h, 1: h', 2: |h| - pi/2). ``s0`` is the sign at length 0.
    Returns the bracket end on the far side of the change."""
    lo = 0.0
    hi = H
    while abs(hi - lo) > tol:
        mid = 0.5 * (lo + hi)
        hm, vm, _, _, ok = _dp_step(x, h, v, mid, p, m, floor)
        if which == 0:
            g = hm
        elif which == 1:
            g = vm
        else:
            g = abs(hm) - 0.5 * math.pi
        if which == 2:
            crossed = g >= 0.0
        else:
            crossed = _sgn(g) != s0
        if crossed:
            hi = mid
        else:
            lo = mid
    return lo, hi


@njit(cache=True)
def _grow(a, n):
    b = np.empty(2 * a.shape[0], a.dtype)
    b[:n] = a[:n]
    return b


@njit(cache=True)
def integrate_kernel(x0, h0, v0, x_end, p, m, rtol, atol, max_step, max_steps,
                     event_tol, conv_eps, floor, events_on, zero_limit, h_init):
    direction = 1.0 if x_end > x0 else -1.0
    cap = 512
    xs = np.empty(cap)
    hs = np.empty(cap)
    vs = np.empty(cap)
    xs[0] = x0
    hs[0] = h0
    vs[0] = v0
    n = 1
    ecap = 64
    ev_x = np.empty(ecap)
    ev_kind = np.empty(ecap, np.int64)
    ev_sign = np.empty(ecap, np.int64)
    ne = 0
    nzeros = 0

    x = x0
    h = h0
    v = v0
    H = direction * min(h_init, max_step)
    err_prev = 1e-4
    steps = 0
    status = ST_XMAX

    while True:
        if steps >= max_steps:
            status = ST_MAXSTEPS
            break
        if direction * (x + H - x_end) > 0.0:
            H = x_end - x
        h5, v5, eh, ev, ok = _dp_step(x, h, v, H, p, m, floor)
        steps += 1
        if not ok:
            if conv_eps > 0.0 and _fp_distance(h, v) < conv_eps:
                status = ST_CONVERGED
                if ne >= ecap:
                    ev_x = _grow(ev_x, ne); ev_kind = _grow(ev_kind, ne); ev_sign = _grow(ev_sign, ne)
                    ecap *= 2
                ev_x[ne] = x; ev_kind[ne] = EV_CONVERGED; ev_sign[ne] = _sgn(h); ne += 1
            else:
                status = ST_DEGENERATE
            break
        sh = atol + rtol * max(abs(h), abs(h5))
        sv = atol + rtol * max(abs(v), abs(v5))
        err = math.sqrt(0.5 * ((eh / sh) ** 2 + (ev / sv) ** 2))
        if err <= 1.0:
            x1 = x + H
            h1 = h5
            v1 = v5
            terminal = -1
            tsign = 0
            if events_on:
                if abs(h1) >= 0.5 * math.pi and abs(h) < 0.5 * math.pi:
                    lo, hi = _locate(x, h, v, H, p, m, floor, 2, 0, event_tol)
                    h1, v1, _, _, _ = _dp_step(x, h, v, hi, p, m, floor)
                    x1 = x + hi
                    terminal = EV_EXIT
                    tsign = _sgn(h1)
                Hs = x1 - x
                for which in range(2):
                    a0 = h if which == 0 else v
                    a1 = h1 if which == 0 else v1
                    s0 = _sgn(a0)
                    if s0 != 0 and _sgn(a1) != s0:
                        lo, hi = _locate(x, h, v, Hs, p, m, floor, which, s0, event_tol)
                        if ne + 2 >= ecap:
                            ev_x = _grow(ev_x, ne); ev_kind = _grow(ev_kind, ne); ev_sign = _grow(ev_sign, ne)
                            ecap *= 2
                        ev_x[ne] = x + 0.5 * (lo + hi)
                        ev_kind[ne] = which
                        ev_sign[ne] = _sgn(a1) if _sgn(a1) != 0 else -s0
                        ne += 1
                        if which == 0:
                            nzeros += 1
                if terminal < 0 and conv_eps > 0.0:
                    if _fp_distance(h1, v1) < conv_eps and abs(v1) < abs(v):
                        terminal = EV_CONVERGED
                        tsign = _sgn(h1)
            if n >= cap:
                xs = _grow(xs, n); hs = _grow(hs, n); vs = _grow(vs, n)
                cap *= 2
            xs[n] = x1
            hs[n] = h1
            vs[n] = v1
            n += 1
            x = x1
            h = h1
            v = v1
            if terminal >= 0:
                if ne + 1 >= ecap:
                    ev_x = _grow(ev_x, ne); ev_kind = _grow(ev_kind, ne); ev_sign = _grow(ev_sign, ne)
                    ecap *= 2
                ev_x[ne] = x1; ev_kind[ne] = terminal; ev_sign[ne] = tsign; ne += 1
                status = ST_EXIT if terminal == EV_EXIT else ST_CONVERGED
                break
            if zero_limit > 0 and nzeros >= zero_limit:
                status = ST_ZERO_LIMIT
                break
            if direction * (x - x_end) >= 0.0:
                status = ST_XMAX
                break
            fac = 0.9 * max(err, 1e-10) ** (-0.17) * err_prev ** 0.04
            fac = min(5.0, max(0.2, fac))
            err_prev = max(err, 1e-4)
            H = H * fac
        else:
            H = H * max(0.2, 0.9 * err ** (-0.2))
        if abs(H) > max_step:
            H = direction * max_step
        if abs(H) < MIN_STEP:
            status = ST_UNDERFLOW
            break

    return xs[:n].copy(), hs[:n].copy(), vs[:n].copy(), ev_x[:ne].copy(), ev_kind[:ne].copy(), ev_sign[:ne].copy(), status


@njit(cache=True)
def _single_step(x, h, v, H, p, m, floor):
    h5, v5, _, _, ok = _dp_step(x, h, v, H, p, m, floor)
    return h5, v5, ok


# ----------------------------------------------------------------- wrappers


def _run(x0, h0, v0, x_end, params, config, *, events=True, converge=True, zero_limit=0, max_step=None):
    return integrate_kernel(
        float(x0), float(h0), float(v0), float(x_end),
        float(params.p), float(params.m),
        config.rel_tol, config.abs_tol,
        float(max_step if max_step is not None else config.max_step),
        int(config.max_steps), config.event_tol,
        config.convergence_eps if converge else 0.0,
        DEGENERACY_FLOOR, events, int(zero_limit),
        1e-3,
    )


def _build_orbit(params, raw, x_limit) -> Orbit:
    xs, hs, vs, ev_x, ev_kind, ev_sign, status = raw
    events = [Event(float(a), _KIND_OF_CODE[int(k)], int(s)) for a, k, s in zip(ev_x, ev_kind, ev_sign)]
    events.sort(key=lambda ev: ev.x)
    diagnostic = ""
    if status not in (ST_EXIT, ST_CONVERGED):
        events.append(Event(float(xs[-1]), EventKind.TRUNCATED, 0))
        diagnostic = {
            ST_XMAX: f"reached x_max = {x_limit}",
            ST_MAXSTEPS: "step budget exhausted",
            ST_UNDERFLOW: f"step size fell below {MIN_STEP:g} at x = {xs[-1]:.6g}",
            ST_DEGENERATE: f"degenerate point at x = {xs[-1]:.6g} outside the convergence ball",
            ST_ZERO_LIMIT: "zero-count limit reached",
        }[status]
    return Orbit(params=params, x=xs, h=hs, dh=vs, events=events, status=int(status), diagnostic=diagnostic)


def integrate_orbit(
    initial: ProfileState,
    params: Params,
    config: IntegratorConfig | None = None,
    *,
    zero_limit: int = 0,
    converge: bool = True,
    max_step: float | None = None,
    strict: bool = False,
) -> Orbit:
    """Integrate forward from ``x = 0`` until exit, convergence or ``x_max``.

    ``zero_limit > 0`` stops the run once that many zeros of ``h`` are
    seen; ``converge=False`` disables the convergence ball (shooting scans
    want every orbit to declare itself by exiting). With ``strict`` a step
    size underflow or a degenerate point raises instead of returning a
    truncated orbit.
    """
    config = config or IntegratorConfig()
    if initial.x != 0.0:
        raise ValueError("orbits start at x = 0")
    if _fp_distance(initial.h, initial.dh) < 1e-15:
        raise DegeneratePoint("initial state is a fixed point")
    raw = _run(0.0, initial.h, initial.dh, config.x_max, params, config,
               converge=converge, zero_limit=zero_limit, max_step=max_step)
    orbit = _build_orbit(params, raw, config.x_max)
    if strict and orbit.status == ST_UNDERFLOW:
        raise StepSizeUnderflow(orbit.diagnostic)
    if strict and orbit.status == ST_DEGENERATE:
        raise DegeneratePoint(orbit.diagnostic)
    return orbit


def integrate_segment(
    x0: float,
    h0: float,
    dh0: float,
    x1: float,
    params: Params,
    config: IntegratorConfig | None = None,
    *,
    max_step: float | None = None,
    events: bool = True,
) -> Orbit:
    """Integrate between arbitrary points, in either direction.

    Used for the tail leg of connecting orbits, which is integrated from
    near the fixed point back towards the origin where it is well
    conditioned. No exit or convergence termination.
    """
    config = config or IntegratorConfig()
    raw = integrate_kernel(
        float(x0), float(h0), float(dh0), float(x1), float(params.p), float(params.m),
        config.rel_tol, config.abs_tol,
        float(max_step if max_step is not None else config.max_step),
        int(config.max_steps), config.event_tol, 0.0, DEGENERACY_FLOOR, events, 0, 1e-3,
    )
    xs, hs, vs, ev_x, ev_kind, ev_sign, status = raw
    evs = [Event(float(a), _KIND_OF_CODE[int(k)], int(s)) for a, k, s in zip(ev_x, ev_kind, ev_sign)
           if int(k) in (EV_ZERO_H, EV_ZERO_DH)]
    orbit = Orbit(params=params, x=xs, h=hs, dh=vs, events=evs, status=int(status))
    if status == ST_EXIT:
        orbit.diagnostic = "segment left Γ"
    elif status not in (ST_XMAX,):
        orbit.diagnostic = f"segment stopped early (status {status})"
    return orbit


def step_state(state: ProfileState, dx: float, params: Params) -> ProfileState:
    """Advance by one Dormand-Prince step of length ``dx`` (no error control)."""
    h, v, ok = _single_step(state.x, state.h, state.dh, float(dx), float(params.p), float(params.m), DEGENERACY_FLOOR)
    if not ok:
        raise DegeneratePoint("single step hit a fixed point")
    return ProfileState(state.x + dx, float(h), float(v))


def energy_error_estimate(orbit: Orbit, params: Params) -> float:
    """Max residual of the equation under spline re-differentiation.

    ``h'`` from the integrator is differentiated with a quintic spline and
    compared with the right-hand side. Purely a quality diagnostic.
    """
    from scipy.interpolate import make_interp_spline

    x, dh = orbit.x, orbit.dh
    if len(x) < 8:
        return float("inf")
    keep = np.concatenate([[True], np.diff(x) > 1e-9])
    x, h, dh = x[keep], orbit.h[keep], dh[keep]
    spl = make_interp_spline(x, dh, k=5)
    ddh_spline = spl.derivative()(x)
    _, _, den = prof._ratios(h, dh, params)
    ok = den >= DEGENERACY_FLOOR
    # interior only; the spline end conditions are not part of the estimate
    ok[:3] = False
    ok[-3:] = False
    if not np.any(ok):
        return float("inf")
    res = ddh_spline[ok] - prof.acceleration(x[ok], h[ok], dh[ok], params)
    return float(np.max(np.abs(res)))


def identity_orbit(params: Params, x_max: float = 40.0, n: int = 4001) -> Orbit:
    """The closed-form identity orbit sampled on ``[0, x_max]``, marked as
    converged to ``+pi/2``. A reference input for quadrature checks."""
    x = np.linspace(0.0, x_max, n)
    orbit = Orbit(params=params, x=x, h=prof.identity_h(x), dh=prof.identity_dh(x),
                  events=[Event(float(x[-1]), EventKind.CONVERGED, 1)], status=ST_CONVERGED)
    orbit._cache["ddh"] = prof.identity_ddh(x)
    return orbit
