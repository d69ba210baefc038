"""Jacobi spectrum of the identity map.

Two closed forms for the scaled eigenvalues are carried side by side:

* ``eigenvalue_theorem``: ``-2m + p + j(j+m-1)``, the value as stated;
* ``eigenvalue_chain``: the value obtained by composing the substitution
  ``xi = f / cosh x`` with the Gegenbauer eigenvalue ``(j-1)(j+m)``,
  ``(m+p-2)(j-1)(j+m)/m + p - m``.

They agree at ``p = 2`` and at ``j = 1`` only. A finite-difference residual
of the spectral equation and two independent eigensolvers decide between
them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .model import Params
from .numerics import _check_uniform, d1, d2

RESIDUAL_SELECT = 1e-6
RESIDUAL_REJECT = 1e-3
MARGINAL_TOL = 1e-9


class Verdict(str, Enum):
    STABLE = "Stable"
    UNSTABLE = "Unstable"
    MARGINAL = "Marginal"


class SpectrumNotConverged(ArithmeticError):
    pass


# ------------------------------------------------------------ Gegenbauer


def gegenbauer(n: int, alpha: float, s) -> np.ndarray | float:
    """``C_n^(alpha)(s)`` by the three-term recurrence in ``n``."""
    if n < 0:
        raise ValueError("n must be non-negative")
    s_arr = np.asarray(s, dtype=float)
    if np.any(np.abs(s_arr) > 1.0 + 1e-12):
        raise ValueError("Gegenbauer polynomials are evaluated on |s| <= 1")
    c_prev = np.ones_like(s_arr)
    if n == 0:
        return c_prev[()]
    c = 2.0 * alpha * s_arr
    for k in range(2, n + 1):
        c_prev, c = c, (2.0 * (k + alpha - 1.0) * s_arr * c - (k + 2.0 * alpha - 2.0) * c_prev) / k
    return c[()]


@dataclass(frozen=True)
class GegenbauerBasis:
    alpha: float
    n_max: int

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if self.n_max < 0:
            raise ValueError("n_max must be non-negative")

    @classmethod
    def for_dimension(cls, m: int, n_max: int) -> "GegenbauerBasis":
        return cls(alpha=0.5 * (m + 1), n_max=n_max)

    def values(self, s) -> np.ndarray:
        """Rows ``C_0 .. C_{n_max}`` at the points ``s``."""
        return np.stack([np.atleast_1d(gegenbauer(n, self.alpha, s)) for n in range(self.n_max + 1)])

    def eigenvalue(self, n: int) -> float:
        return n * (n + 2.0 * self.alpha)


# ------------------------------------------------------------ closed forms


def eigenvalue_theorem(j: int, params: Params) -> float:
    if j < 1:
        raise ValueError("j must be at least 1")
    p, m = params.p, params.m
    return -2.0 * m + p + j * (j + m - 1.0)


def eigenvalue_chain(j: int, params: Params) -> float:
    if j < 1:
        raise ValueError("j must be at least 1")
    p, m = params.p, params.m
    if m + p <= 2:
        raise ValueError("needs m + p > 2")
    return (m + p - 2.0) * (j - 1.0) * (j + m) / m + p - m


def eigenfunction(j: int, m: int, x) -> np.ndarray | float:
    """``sech(x) C_{j-1}^((m+1)/2)(tanh x)``."""
    if j < 1:
        raise ValueError("j must be at least 1")
    x = np.asarray(x, dtype=float)
    return (gegenbauer(j - 1, 0.5 * (m + 1), np.tanh(x)) / np.cosh(x))[()]


def scale_factor(params: Params) -> float:
    """``m^(p/2-1)``, relating the scaled and unscaled eigenvalues."""
    return params.m ** (0.5 * params.p - 1.0)


# --------------------------------------------------------------- residual


def residual_grid(half_width: float = 20.0, dx: float = 2e-3) -> np.ndarray:
    n = 2 * int(math.ceil(half_width / dx)) + 1
    return np.linspace(-half_width, half_width, n)


def jacobi_operator(xi: np.ndarray, x: np.ndarray, params: Params) -> np.ndarray:
    """The spectral operator without its eigenvalue term, by 4th-order differences."""
    p, m = params.p, params.m
    dx = float(x[1] - x[0])
    th, ch = np.tanh(x), np.cosh(x)
    sech2 = 1.0 / (ch * ch)
    x1, x2 = d1(xi, dx), d2(xi, dx)
    inner = ch / m * (x1 - (m - 1.0) * th * xi)
    return x2 + (2.0 - m) * th * x1 - (m - 1.0) * (th * th - sech2) * xi + (p - 2.0) / ch * d1(inner, dx)


def jacobi_residual(xi, lambda_hat: float, params: Params, grid: np.ndarray | None = None) -> float:
    """Max-norm residual of the spectral equation, relative to ``max |xi|``.

    ``xi`` is an array on ``grid`` or a callable. The grid must span at
    least ``[-20, 20]`` with uniform spacing at most 1e-2.
    """
    x = residual_grid() if grid is None else np.asarray(grid, dtype=float)
    dx = _check_uniform(x)
    if dx > 1e-2 + 1e-15:
        raise ValueError(f"grid spacing {dx:g} is coarser than 1e-2")
    if x[0] > -20.0 + 1e-9 * 20 or x[-1] < 20.0 - 1e-9 * 20:
        raise ValueError("grid must span at least [-20, 20]")
    u = np.asarray(xi(x) if callable(xi) else xi, dtype=float)
    if u.shape != x.shape:
        raise ValueError("eigenfunction samples must match the grid")
    res = jacobi_operator(u, x, params) + lambda_hat / np.cosh(x) ** 2 * u
    # the one-sided boundary rows only see the exponentially small tail
    scale = max(float(np.max(np.abs(u))), 1e-300)
    return float(np.max(np.abs(res[2:-2]))) / scale


# ------------------------------------------------------------ eigensolvers


def _cheb(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Chebyshev-Gauss-Lobatto points and differentiation matrix (n+1 points)."""
    k = np.arange(n + 1)
    s = np.cos(np.pi * k / n)
    c = np.where((k == 0) | (k == n), 2.0, 1.0) * (-1.0) ** k
    ds = s[:, None] - s[None, :]
    dmat = np.outer(c, 1.0 / c) / (ds + np.eye(n + 1))
    dmat -= np.diag(dmat.sum(axis=1))
    return s, dmat


def gegenbauer_spectrum(m: int, count: int, n_grid: int) -> np.ndarray:
    """Smallest ``count`` values of ``mu`` in ``(1-s^2)u'' - (m+2) s u' + mu u = 0``.

    Collocation at Chebyshev-Lobatto points; at ``s = ±1`` the equation
    itself is imposed, which selects the solutions bounded at the singular
    endpoints.
    """
    s, dmat = _cheb(n_grid)
    op = np.diag(1.0 - s * s) @ dmat @ dmat - (m + 2.0) * np.diag(s) @ dmat
    mu = scipy.linalg.eigvals(-op)
    mu = np.sort(mu[np.abs(mu.imag) < 1e-6 * np.maximum(1.0, np.abs(mu.real))].real)
    return mu[:count]


def eigenvalue_numeric(params: Params, j_max: int, n_grid: int | None = None, tol: float = 1e-6) -> list[float]:
    """Scaled eigenvalues from the Gegenbauer collocation, checked under grid doubling."""
    p, m = params.p, params.m
    n_grid = n_grid or max(8 * j_max, 16)
    if n_grid < 8 * j_max:
        raise ValueError("n_grid must be at least 8 * j_max")
    mu = gegenbauer_spectrum(m, j_max, n_grid)
    mu2 = gegenbauer_spectrum(m, j_max, 2 * n_grid)
    if len(mu) < j_max or len(mu2) < j_max:
        raise SpectrumNotConverged("collocation produced too few real eigenvalues")
    lam = (m + p - 2.0) * mu / m + p - m
    lam2 = (m + p - 2.0) * mu2 / m + p - m
    if np.max(np.abs(lam - lam2)) >= tol:
        raise SpectrumNotConverged(f"eigenvalues moved by {np.max(np.abs(lam - lam2)):.3g} under grid doubling")
    return lam2.tolist()


def eigenvalue_numeric_x(params: Params, j_max: int, half_width: float = 20.0, dx: float = 5e-3) -> list[float]:
    """Scaled eigenvalues from the spectral equation discretised directly in ``x``.

    Independent of the Gegenbauer reduction: the operator is assembled with
    4th-order central differences on ``[-L, L]`` with ``xi = 0`` outside, the
    equation is multiplied by ``cosh^2 x`` and the eigenvalues nearest a
    shift below ``p - m`` are found by shift-invert.
    """
    p, m = params.p, params.m
    x = residual_grid(half_width, dx)[1:-1]
    n = len(x)
    th, ch = np.tanh(x), np.cosh(x)
    sech2 = 1.0 / (ch * ch)
    c = (p - 2.0) / m
    # expanded operator: a2 xi'' + a1 xi' + a0 xi
    a2 = 1.0 + c
    a1 = (2.0 - m) * th + c * (2.0 - m) * th
    a0 = -(m - 1.0) * (th * th - sech2) - c * (m - 1.0) * (th * th + sech2)
    one = np.ones(n)
    dd1 = sp.diags([one[2:], -8 * one[1:], 8 * one[1:], -one[2:]], [-2, -1, 1, 2]) / (12.0 * dx)
    dd2 = sp.diags([-one[2:], 16 * one[1:], -30 * one, 16 * one[1:], -one[2:]], [-2, -1, 0, 1, 2]) / (12.0 * dx * dx)
    op = a2 * dd2 + sp.diags(a1) @ dd1 + sp.diags(a0)
    mat = -(sp.diags(ch * ch) @ op).tocsc()
    shift = p - m - 1.0
    vals = spla.eigs(mat, k=j_max, sigma=shift, which="LM", return_eigenvectors=False)
    return sorted(float(v.real) for v in vals)


# ---------------------------------------------------------------- reports


@dataclass(frozen=True)
class EigenPair:
    j: int
    lambda_hat_theorem: float
    lambda_hat_chain: float
    lambda_hat_numeric: float
    lambda_unscaled: float
    residual_theorem: float
    residual_chain: float
    selected: str

    @property
    def lambda_hat(self) -> float:
        return self.lambda_hat_chain if self.selected == "chain" else self.lambda_hat_theorem

    def as_dict(self) -> dict:
        return {
            "j": self.j,
            "lambda_hat_theorem": self.lambda_hat_theorem,
            "lambda_hat_chain": self.lambda_hat_chain,
            "lambda_hat_numeric": self.lambda_hat_numeric,
            "lambda_hat_selected": self.lambda_hat,
            "lambda_unscaled": self.lambda_unscaled,
            "residual_theorem": self.residual_theorem,
            "residual_chain": self.residual_chain,
            "selected": self.selected,
        }


@dataclass
class SpectrumReport:
    params: Params
    pairs: list[EigenPair]
    verdict: Verdict
    numeric_x: list[float] | None = None
    notes: list[str] = field(default_factory=list)

    @property
    def lambda_hat(self) -> list[float]:
        return [pr.lambda_hat for pr in self.pairs]

    def as_dict(self) -> dict:
        out = {
            "p": self.params.p,
            "m": self.params.m,
            "scale": scale_factor(self.params),
            "lambda_hat": self.lambda_hat,
            "pairs": [pr.as_dict() for pr in self.pairs],
            "verdict": self.verdict.value,
            "notes": list(self.notes),
        }
        if self.numeric_x is not None:
            out["lambda_hat_numeric_x"] = self.numeric_x
        return out


def select_formula(residual_theorem: float, residual_chain: float) -> str:
    """``both`` when the two closed forms coincide, else whichever one the
    residual accepts (below 1e-6, with the other above 1e-3)."""
    ok_t, ok_c = residual_theorem < RESIDUAL_SELECT, residual_chain < RESIDUAL_SELECT
    if ok_t and ok_c:
        return "both"
    if ok_c and residual_theorem > RESIDUAL_REJECT:
        return "chain"
    if ok_t and residual_chain > RESIDUAL_REJECT:
        return "theorem"
    return "none"


def eigen_pair(j: int, params: Params, numeric: float, grid: np.ndarray | None = None) -> EigenPair:
    x = residual_grid() if grid is None else grid
    xi = eigenfunction(j, params.m, x)
    lt, lc = eigenvalue_theorem(j, params), eigenvalue_chain(j, params)
    rt = jacobi_residual(xi, lt, params, x)
    rc = rt if lt == lc else jacobi_residual(xi, lc, params, x)
    sel = select_formula(rt, rc)
    lam = lt if sel == "theorem" else lc
    return EigenPair(
        j=j, lambda_hat_theorem=lt, lambda_hat_chain=lc, lambda_hat_numeric=numeric,
        lambda_unscaled=scale_factor(params) * lam, residual_theorem=rt, residual_chain=rc, selected=sel,
    )


def adjudicated(j: int, params: Params) -> float:
    """The closed-form eigenvalue the residual test accepts."""
    return eigen_pair(j, params, math.nan).lambda_hat


def _verdict(min_lambda: float) -> Verdict:
    if abs(min_lambda) <= MARGINAL_TOL:
        return Verdict.MARGINAL
    return Verdict.STABLE if min_lambda > 0 else Verdict.UNSTABLE


def stability_verdict(params: Params, j_max: int = 3) -> Verdict:
    if j_max < 3:
        raise ValueError("j_max must be at least 3")
    return _verdict(min(adjudicated(j, params) for j in range(1, j_max + 1)))


def spectrum_report(params: Params, j_max: int = 6, *, numeric_x: bool = False) -> SpectrumReport:
    numeric = eigenvalue_numeric(params, j_max)
    grid = residual_grid()
    pairs = [eigen_pair(j, params, numeric[j - 1], grid) for j in range(1, j_max + 1)]
    notes = []
    for pr in pairs:
        if pr.selected == "none":
            notes.append(f"j={pr.j}: neither closed form passes the residual test")
        elif pr.selected == "theorem" and params.p != 2:
            notes.append(f"j={pr.j}: the stated formula is selected at p != 2")
        if abs(pr.lambda_hat_numeric - pr.lambda_hat) > 1e-6:
            notes.append(f"j={pr.j}: numeric {pr.lambda_hat_numeric:.9g} differs from selected {pr.lambda_hat:.9g}")
    verdict = _verdict(min(pr.lambda_hat for pr in pairs))
    xs = eigenvalue_numeric_x(params, j_max) if numeric_x else None
    return SpectrumReport(params=params, pairs=pairs, verdict=verdict, numeric_x=xs, notes=notes)
