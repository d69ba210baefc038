"""The reduced equation for equivariant self-maps in the regularising chart.

With ``t = 2 arctan(e^x)`` and ``h(x) = r(t) - pi/2`` the colatitude ODE
becomes an autonomous-at-infinity second order equation on the whole real
line. This module holds that vector field, the pointwise quantities built on
it (``A``, the Lyapunov function ``W``, the phase angle and radius), the
closed-form identity profile, and the map back to the colatitude chart.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Literal

import numpy as np

from .model import Params

if TYPE_CHECKING:  # pragma: no cover
    from .integrate import Orbit

HALF_PI = 0.5 * math.pi

# Below this the denominator (p-1) h'^2 + (m-1) cos^2 h is treated as zero.
DEGENERACY_FLOOR = 1e-26


class DegeneratePoint(ArithmeticError):
    """The vector field was evaluated at (or numerically at) a fixed point
    ``(h, h') = (pi/2 + k pi, 0)`` where it is 0/0."""


@dataclass(frozen=True)
class ProfileState:
    x: float
    h: float
    dh: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.h) and math.isfinite(self.dh)):
            raise ValueError(f"non-finite profile state {self}")


@dataclass(frozen=True)
class OrbitSample:
    state: ProfileState
    a_val: float
    w_val: float
    theta: float
    rho: float


@dataclass
class RProfile:
    """Colatitude profile ``r(t)`` on ``[0, pi]``.

    ``dr`` and ``ddr`` are the first two ``t``-derivatives where they are
    known (``nan`` at appended pole points).
    """

    t: np.ndarray
    r: np.ndarray
    dr: np.ndarray
    ddr: np.ndarray
    k_end: int

    @property
    def samples(self) -> list[tuple[float, float]]:
        return list(zip(self.t.tolist(), self.r.tolist()))


# ---------------------------------------------------------------- charts


def t_of_x(x):
    # pi/2 + gd(x) = 2 arctan(e^x); the reflected form keeps relative accuracy near t = 0
    x = np.asarray(x, dtype=float)
    with np.errstate(over="ignore"):
        t = np.where(x <= 0.0, 2.0 * np.arctan(np.exp(np.minimum(x, 0.0))),
                     math.pi - 2.0 * np.arctan(np.exp(-np.maximum(x, 0.0))))
    return t[()]


def x_of_t(t):
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0.0) or np.any(t >= math.pi):
        raise ValueError("x_of_t needs 0 < t < pi; the poles sit at x = ±inf")
    return np.log(np.tan(0.5 * t))[()]


# ---------------------------------------------------------- vector field


def _ratios(h, dh, params: Params):
    p, m = params.p, params.m
    c2 = (m - 1.0) * np.cos(h) ** 2
    v2 = dh * dh
    den = (p - 1.0) * v2 + c2
    return v2 + c2, (3.0 - p) * v2 + c2, den


def acceleration(x, h, dh, params: Params, floor: float = DEGENERACY_FLOOR):
    """``h''`` from the quasi-linear form of the Euler-Lagrange equation.

    Vectorised over array inputs. Raises :class:`DegeneratePoint` if any
    denominator is below ``floor``.
    """
    p, m = params.p, params.m
    num1, num2, den = _ratios(h, dh, params)
    if np.any(den < floor):
        raise DegeneratePoint("vector field is 0/0 at a fixed point (h = ±pi/2 mod pi, h' = 0)")
    return -(p - m) * np.tanh(x) * num1 / den * dh - 0.5 * (m - 1.0) * num2 / den * np.sin(2.0 * h)


def el_rhs(state: ProfileState, params: Params, floor: float = DEGENERACY_FLOOR) -> tuple[float, float]:
    """First-order vector field ``(h, h') -> (h', h'')``."""
    return state.dh, float(acceleration(state.x, state.h, state.dh, params, floor))


def el_residual(x, h, dh, ddh, params: Params):
    """Residual ``h'' - acceleration`` of a (sampled) profile."""
    return ddh - acceleration(x, h, dh, params)


# ----------------------------------------------------- derived quantities


def a_values(h, dh, m):
    return dh * dh + (m - 1.0) * np.cos(h) ** 2


def w_values(h, dh, params: Params):
    p, m = params.p, params.m
    a = a_values(h, dh, m)
    f = (p - 1.0) * dh * dh - (m - 1.0) * np.cos(h) ** 2
    if p == 2.0:
        return f
    with np.errstate(divide="ignore", invalid="ignore"):
        pref = np.where(a > 0.0, np.power(a, 0.5 * p - 1.0), 0.0)
    return pref * f


def w_rate_values(x, h, dh, params: Params):
    p, m = params.p, params.m
    a = a_values(h, dh, m)
    if p == 2.0:
        pref = np.ones_like(np.asarray(a, dtype=float))
    else:
        with np.errstate(divide="ignore", invalid="ignore"):
            pref = np.where(a > 0.0, np.power(a, 0.5 * p - 1.0), 0.0)
    return p * (m - p) * pref * np.tanh(x) * dh * dh


def a_value(state: ProfileState, params: Params) -> float:
    return float(a_values(state.h, state.dh, params.m))


def lyapunov_w(state: ProfileState, params: Params) -> float:
    return float(w_values(state.h, state.dh, params))


def lyapunov_w_rate(state: ProfileState, params: Params) -> float:
    """Closed-form ``dW/dx`` along solutions."""
    return float(w_rate_values(state.x, state.h, state.dh, params))


def phase_angle(h, dh, theta0: float | None = None):
    """Continuous angle of ``(h, h')`` about the origin.

    Principal values from ``atan2`` are unwrapped between consecutive
    samples; callers must keep the per-sample rotation below pi. If
    ``theta0`` is given the whole branch is shifted so the first value equals
    it (up to the principal value of the first sample).
    """
    theta = np.unwrap(np.arctan2(dh, h))
    if theta0 is not None and len(theta):
        theta = theta + 2.0 * math.pi * round((theta0 - theta[0]) / (2.0 * math.pi))
    return theta


def sample(state: ProfileState, params: Params, theta: float | None = None) -> OrbitSample:
    if theta is None:
        theta = math.atan2(state.dh, state.h)
    return OrbitSample(
        state=state,
        a_val=a_value(state, params),
        w_val=lyapunov_w(state, params),
        theta=theta,
        rho=math.hypot(state.h, state.dh),
    )


# ------------------------------------------------------- identity profile


def identity_h(x):
    """``2 arctan(e^x) - pi/2`` (the Gudermannian), accurate near 0 and inf."""
    return 2.0 * np.arctan(np.tanh(0.5 * np.asarray(x, dtype=float)))[()]


def identity_dh(x):
    return 1.0 / np.cosh(np.asarray(x, dtype=float))[()]


def identity_ddh(x):
    x = np.asarray(x, dtype=float)
    return (-np.tanh(x) / np.cosh(x))[()]


def identity_profile(x: float) -> ProfileState:
    return ProfileState(x=float(x), h=float(identity_h(x)), dh=float(identity_dh(x)))


# ------------------------------------------------------ colatitude chart


def to_r_profile(orbit: "Orbit", symmetry: Literal["odd", "even"] = "odd") -> RProfile:
    """Extend a half-line orbit to ``x < 0`` and map it to ``r(t)``.

    The result is normalised so that ``r(0) = 0``; the equation is
    invariant under ``r -> r + pi``, so an orbit whose raw value
    ``h + pi/2`` tends to ``pi`` at the south pole is shifted down by ``pi``.
    """
    from .integrate import EventKind

    term = orbit.terminal
    if term is None or term.kind not in (EventKind.CONVERGED, EventKind.EXIT_GAMMA):
        raise ValueError("to_r_profile needs an orbit that converged or exited Γ")
    if symmetry not in ("odd", "even"):
        raise ValueError(f"unknown symmetry {symmetry!r}")
    if orbit.x[0] != 0.0:
        raise ValueError("orbit must start at x = 0")

    x, h, dh, ddh = orbit.x, orbit.h, orbit.dh, orbit.ddh
    sgn = -1.0 if symmetry == "odd" else 1.0
    xs = np.concatenate([-x[:0:-1], x])
    hs = np.concatenate([sgn * h[:0:-1], h])
    dhs = np.concatenate([-sgn * dh[:0:-1], dh])
    ddhs = np.concatenate([sgn * ddh[:0:-1], ddh])

    t = t_of_x(xs)
    r = hs + HALF_PI
    ch = np.cosh(xs)
    dr = dhs * ch
    ddr = (ddhs * ch + dhs * np.sinh(xs)) * ch

    converged = term.kind is EventKind.CONVERGED
    if converged:
        h_inf = term.sign * HALF_PI
        r_south = (sgn * h_inf) + HALF_PI
        r_north = h_inf + HALF_PI
        t = np.concatenate([[0.0], t, [math.pi]])
        r = np.concatenate([[r_south], r, [r_north]])
        dr = np.concatenate([[np.nan], dr, [np.nan]])
        ddr = np.concatenate([[np.nan], ddr, [np.nan]])
        shift = math.pi * round(r_south / math.pi)
    else:
        shift = 0.0
    r = r - shift
    k_end = int(round(r[-1] / math.pi))
    return RProfile(t=t, r=r, dr=dr, ddr=ddr, k_end=k_end)
