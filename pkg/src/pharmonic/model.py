"""Problem parameters and closed-form regime analysis.

Everything here is a pure function of the exponent ``p`` and the sphere
dimension ``m``.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from enum import Enum

# m within this distance of a regime threshold is reported as Boundary
BOUNDARY_TOL = 1e-12


class Regime(str, Enum):
    OSCILLATORY = "Oscillatory"
    EXPONENTIAL = "Exponential"
    BOUNDARY = "Boundary"


@dataclass(frozen=True)
class Params:
    p: float
    m: int

    def as_dict(self) -> dict:
        return {"p": self.p, "m": self.m}


@dataclass(frozen=True)
class RegimeReport:
    params: Params
    existence_lower: float
    existence_upper: float
    winding_upper: float
    discriminant: float
    alpha_plus: complex
    alpha_minus: complex
    regime: Regime

    def as_dict(self) -> dict:
        return {
            "p": self.params.p,
            "m": self.params.m,
            "existence_lower": self.existence_lower,
            "existence_upper": self.existence_upper,
            "winding_upper": self.winding_upper,
            "discriminant": self.discriminant,
            "alpha_plus": [self.alpha_plus.real, self.alpha_plus.imag],
            "alpha_minus": [self.alpha_minus.real, self.alpha_minus.imag],
            "regime": self.regime.value,
            "in_existence_window": in_existence_window(self.params),
        }


def validate_params(p: float, m: float) -> Params:
    """Check and normalise a ``(p, m)`` pair.

    ``p`` may be any real >= 2. ``m`` must be integer valued; a float such
    as ``5.0`` is accepted and converted.
    """
    try:
        p = float(p)
    except (TypeError, ValueError):
        raise ValueError(f"p must be a real number, got {p!r}") from None
    if not math.isfinite(p):
        raise ValueError("p must be finite")
    if p < 2:
        raise ValueError("p must be ≥ 2")
    try:
        m_f = float(m)
    except (TypeError, ValueError):
        raise ValueError(f"m must be an integer, got {m!r}") from None
    if not math.isfinite(m_f):
        raise ValueError("m must be finite")
    if m_f != round(m_f):
        raise ValueError(f"m must be an integer, got {m!r}")
    if m_f < 2:
        raise ValueError("m must be ≥ 2")
    return Params(p=p, m=int(round(m_f)))


def existence_upper(p: float) -> float:
    return 2.0 + p + 2.0 * math.sqrt(p)


def winding_upper(p: float) -> float:
    return 3.0 * p - 2.0 + 2.0 * math.sqrt(p * (p - 1.0))


def discriminant(params: Params) -> float:
    p, m = params.p, params.m
    return m * m - 2.0 * m * (2.0 + p) + p * p + 4.0


def linearization_exponents(params: Params) -> tuple[complex, complex]:
    """Roots of ``a**2 - (m - p) a + (m - 1) = 0``, the growth exponents of
    the linearised equation about ``h = 0`` at large ``x``."""
    disc = discriminant(params)
    half = 0.5 * (params.m - params.p)
    root = 0.5 * cmath.sqrt(disc) if disc < 0 else complex(0.5 * math.sqrt(disc))
    return complex(half) + root, complex(half) - root


def regime(params: Params) -> RegimeReport:
    p, m = params.p, params.m
    disc = discriminant(params)
    upper = existence_upper(p)
    lower_root = 2.0 + p - 2.0 * math.sqrt(p)
    a_plus, a_minus = linearization_exponents(params)
    if (
        abs(m - p) <= BOUNDARY_TOL
        or abs(m - upper) <= BOUNDARY_TOL * max(1.0, upper)
        or abs(m - lower_root) <= BOUNDARY_TOL * max(1.0, lower_root)
    ):
        kind = Regime.BOUNDARY
    elif disc < 0:
        kind = Regime.OSCILLATORY
    else:
        kind = Regime.EXPONENTIAL
    return RegimeReport(
        params=params,
        existence_lower=p,
        existence_upper=upper,
        winding_upper=winding_upper(p),
        discriminant=disc,
        alpha_plus=a_plus,
        alpha_minus=a_minus,
        regime=kind,
    )


def in_existence_window(params: Params) -> bool:
    return params.p < params.m < existence_upper(params.p)


def in_winding_window(params: Params) -> bool:
    return params.p < params.m < winding_upper(params.p)
