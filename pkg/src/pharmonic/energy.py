"""The p-energy in both charts and the second-variation quadratic form."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.integrate import simpson

from .integrate import EventKind, Orbit
from .model import Params
from .numerics import d1, d2, hermite5, hermite_quadrature, log_cosh
from .profile import (
    HALF_PI,
    RProfile,
    acceleration,
    _ratios,
    identity_ddh,
    identity_dh,
    identity_h,
)

# tail criterion: the sampled profile must end this close to ±pi/2
TAIL_TOL = 1e-6
# r(0) must vanish to this accuracy for the t-chart integrand to be finite
POLE_TOL = 1e-6
CRITICAL_TOL = 1e-4


class TailNotConverged(ArithmeticError):
    pass


class PoleSingularity(ArithmeticError):
    pass


class NonCriticalProfile(ValueError):
    pass


@dataclass(frozen=True)
class EnergyReport:
    value_x_chart: float
    value_t_chart: float
    quadrature_error: float

    @property
    def chart_gap(self) -> float:
        return abs(self.value_x_chart - self.value_t_chart)

    def as_dict(self) -> dict:
        return {
            "value_x_chart": self.value_x_chart,
            "value_t_chart": self.value_t_chart,
            "quadrature_error": self.quadrature_error,
        }


def identity_energy_closed(params: Params) -> float:
    """``(1/p) m^(p/2) sqrt(pi) Gamma(m/2) / Gamma((m+1)/2)``."""
    p, m = params.p, params.m
    ratio = math.exp(math.lgamma(0.5 * m) - math.lgamma(0.5 * (m + 1)))
    return m ** (0.5 * p) * math.sqrt(math.pi) * ratio / p


# ---------------------------------------------------------------- x chart


def _density_x(params: Params):
    p, m = params.p, params.m

    def f(x, h, dh):
        a = dh * dh + (m - 1.0) * np.cos(h) ** 2
        with np.errstate(divide="ignore"):
            out = np.exp(0.5 * p * np.log(a) + (p - m) * log_cosh(x))
        return np.where(a > 0.0, out, 0.0) / p

    return f


def energy_x_with_error(orbit: Orbit, params: Params) -> tuple[float, float]:
    """Energy of the symmetric extension of a half-line orbit, with an error estimate.

    The samples on ``[0, X]`` are interpolated by quintic Hermite pieces and
    integrated by Gauss-Legendre; the extension to ``x < 0`` doubles the
    result (the density is even under both the odd and the even extension).
    Past ``X`` the density decays like ``exp(-m x)`` and the tail
    ``f(X)/m`` is added analytically.
    """
    x, h, dh = np.asarray(orbit.x), np.asarray(orbit.h), np.asarray(orbit.dh)
    if x[0] != 0.0:
        raise ValueError("orbit must start at x = 0")
    if abs(HALF_PI - abs(h[-1])) > TAIL_TOL or abs(dh[-1]) > TAIL_TOL:
        raise TailNotConverged(
            f"profile ends at h = {h[-1]:.9g}, h' = {dh[-1]:.3g}; the tail needs |h| within {TAIL_TOL:g} of pi/2"
        )
    keep = np.concatenate([[True], np.diff(x) > 0.0])
    x, h, dh, ddh = x[keep], h[keep], dh[keep], np.asarray(orbit.ddh)[keep]
    dens = _density_x(params)
    value, err = hermite_quadrature(x, h, dh, ddh, dens)
    tail = float(dens(x[-1:], h[-1:], dh[-1:])[0]) / params.m
    return 2.0 * (value + tail), 2.0 * (err + tail)


def energy_x(orbit: Orbit, params: Params) -> float:
    return energy_x_with_error(orbit, params)[0]


# ---------------------------------------------------------------- t chart


def _density_t(params: Params):
    p, m = params.p, params.m

    def f(t, r, dr):
        st = np.sin(t)
        a = dr * dr + (m - 1.0) * (np.sin(r) / st) ** 2
        with np.errstate(divide="ignore"):
            out = np.exp(0.5 * p * np.log(a) + (m - 1.0) * np.log(st))
        return np.where(a > 0.0, out, 0.0) / p

    return f


def energy_t_with_error(prof: RProfile, params: Params) -> tuple[float, float]:
    """Energy in the colatitude chart.

    Interior samples are integrated as in :func:`energy_x_with_error`. The two
    pole intervals use the leading behaviour ``(1/p)(m r'^2)^(p/2) t^(m-1)``
    of the density, with ``r'`` the slope at the nearest interior sample.
    """
    p, m = params.p, params.m
    t, r, dr, ddr = (np.asarray(a, dtype=float) for a in (prof.t, prof.r, prof.dr, prof.ddr))
    if t[0] != 0.0 or abs(r[0]) > POLE_TOL:
        raise PoleSingularity(f"profile must start at t = 0 with r(0) = 0, got r({t[0]:g}) = {r[0]:.3g}")
    if t[-1] != math.pi or abs(r[-1] - round(r[-1] / math.pi) * math.pi) > POLE_TOL:
        raise PoleSingularity("profile must end at t = pi with r(pi) a multiple of pi")
    interior = np.isfinite(dr) & np.isfinite(ddr) & (t > 0.0) & (t < math.pi)
    ti, ri, dri, ddri = t[interior], r[interior], dr[interior], ddr[interior]
    keep = np.concatenate([[True], np.diff(ti) > 0.0])
    ti, ri, dri, ddri = ti[keep], ri[keep], dri[keep], ddri[keep]
    value, err = hermite_quadrature(ti, ri, dri, ddri, _density_t(params))

    def pole(width, slope):
        return (m * slope * slope) ** (0.5 * p) * width ** m / (m * p)

    w0, w1 = ti[0], math.pi - ti[-1]
    caps = pole(w0, dri[0]) + pole(w1, dri[-1])
    # the leading term is accurate to relative order width^2
    cap_err = pole(w0, dri[0]) * w0 * w0 + pole(w1, dri[-1]) * w1 * w1
    return value + caps, err + cap_err


def energy_t(prof: RProfile, params: Params) -> float:
    return energy_t_with_error(prof, params)[0]


def energy_report(orbit: Orbit, prof: RProfile, params: Params) -> EnergyReport:
    ex, err_x = energy_x_with_error(orbit, params)
    et, err_t = energy_t_with_error(prof, params)
    return EnergyReport(value_x_chart=ex, value_t_chart=et, quadrature_error=max(err_x, err_t))


def identity_r_profile(n: int = 4001) -> RProfile:
    """``r(t) = t`` sampled uniformly on ``[0, pi]``."""
    t = np.linspace(0.0, math.pi, n)
    return RProfile(t=t, r=t.copy(), dr=np.ones_like(t), ddr=np.zeros_like(t), k_end=1)


# ------------------------------------------------------ second variation


@dataclass
class GridProfile:
    """A profile on a uniform symmetric grid ``[-X, X]``."""

    x: np.ndarray
    h: np.ndarray
    dh: np.ndarray
    ddh: np.ndarray

    @property
    def dx(self) -> float:
        return float(self.x[1] - self.x[0])

    @classmethod
    def identity(cls, half_width: float = 30.0, dx: float = 5e-3) -> "GridProfile":
        x = _grid(half_width, dx)
        return cls(x, identity_h(x), identity_dh(x), identity_ddh(x))

    @classmethod
    def from_orbit(cls, orbit: Orbit, symmetry: str = "odd", half_width: float | None = None,
                   dx: float = 5e-3) -> "GridProfile":
        """Resample a converged half-line orbit onto a uniform grid, extended by symmetry."""
        term = orbit.terminal
        if term is None or term.kind is not EventKind.CONVERGED:
            raise ValueError("only converged orbits can be resampled for the second variation")
        x_end = float(orbit.x[-1])
        half_width = min(half_width or x_end, x_end)
        keep = np.concatenate([[True], np.diff(orbit.x) > 0.0])
        bp = hermite5(orbit.x[keep], orbit.h[keep], orbit.dh[keep], orbit.ddh[keep])
        x = _grid(half_width, dx)
        ax = np.minimum(np.abs(x), x_end)
        h, dh, ddh = bp(ax), bp.derivative()(ax), bp.derivative(2)(ax)
        neg = x < 0
        sgn = -1.0 if symmetry == "odd" else 1.0
        h[neg] *= sgn
        dh[neg] *= -sgn
        ddh[neg] *= sgn
        return cls(x, h, dh, ddh)


def _grid(half_width: float, dx: float) -> np.ndarray:
    n = 2 * int(math.ceil(half_width / dx)) + 1
    return np.linspace(-half_width, half_width, n)


def criticality_residual(profile: GridProfile, params: Params) -> float:
    """Max of ``|h'' - acceleration|`` with ``h''`` re-differentiated from ``h'``."""
    ddh = d1(profile.dh, profile.dx)
    _, _, den = _ratios(profile.h, profile.dh, params)
    ok = den > 1e-12
    ok[:2] = ok[-2:] = False
    res = ddh[ok] - acceleration(profile.x[ok], profile.h[ok], profile.dh[ok], params)
    return float(np.max(np.abs(res))) if res.size else 0.0


def _samples(xi, x) -> np.ndarray:
    if callable(xi):
        return np.asarray(xi(x), dtype=float)
    xi = np.asarray(xi, dtype=float)
    if xi.shape != x.shape:
        raise ValueError("direction samples must match the profile grid")
    return xi


def second_variation(profile: GridProfile, xi, params: Params, eta=None, *, check: bool = True) -> float:
    """The second-variation form ``Q(xi, eta)`` (``Q(xi)`` when ``eta`` is None).

    The integrand is the non-symmetric form, not integrated by parts,
    ``-eta A^(p/2-1) [L xi] cosh^(p-m) x``, with all derivatives of sampled
    data taken by 4th-order differences and the integral by Simpson's rule
    on the uniform grid.
    """
    p, m = params.p, params.m
    x, h, dh = profile.x, profile.h, profile.dh
    dx = profile.dx
    u = _samples(xi, x)
    v = u if eta is None else _samples(eta, x)
    if check:
        res = criticality_residual(profile, params)
        if res > CRITICAL_TOL:
            raise NonCriticalProfile(f"profile residual {res:.3g} exceeds {CRITICAL_TOL:g}")
    if not np.any(u) or not np.any(v):
        return 0.0

    a = dh * dh + (m - 1.0) * np.cos(h) ** 2
    log_a = np.log(a)
    u1, u2 = d1(u, dx), d2(u, dx)
    ratio = (dh * u1 - 0.5 * (m - 1.0) * np.sin(2.0 * h) * u) / a
    bracket = (
        u2
        + (p - m) * np.tanh(x) * u1
        + (m - 1.0) * np.cos(2.0 * h) * u
        + 0.5 * (p - 2.0) * u1 * d1(log_a, dx)
        + (p - 2.0) * dh * d1(ratio, dx)
    )
    weight = np.exp((0.5 * p - 1.0) * log_a + (p - m) * log_cosh(x))
    return float(-simpson(v * weight * bracket, x=x))


def weighted_norm(xi: Callable | np.ndarray, x: np.ndarray, m: int) -> float:
    """``∫ xi^2 sech^m x dx`` on the grid."""
    u = _samples(xi, x)
    return float(simpson(u * u * np.exp(-m * log_cosh(x)), x=x))
