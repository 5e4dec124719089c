"""Closed-form breather and complex-soliton profiles.

Notation: for shifts (x1, x2) and scalings (alpha, beta),

    y1 = x + x1,   y2 = x + x2,   theta = beta*y2 + i*alpha*y1,
    delta = alpha^2 - 3 beta^2,   gamma = 3 alpha^2 - beta^2.

The breather kink is 2√2 arctan((β/α) sin(αy1)/cosh(βy2)) and the complex
soliton kink is 2√2 arctan(exp(theta)).  All derivatives below are
hand-expanded; formulas are written in terms of sech/tanh so that nothing
overflows on wide windows.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .grid import Field, Grid, cumulative

__all__ = [
    "BreatherParams",
    "SolitonParams",
    "BlowupReport",
    "SingularProfileError",
    "unwrap_from_left",
    "breather_kink",
    "breather",
    "breather_shift_derivs",
    "breather_second_shift_derivs",
    "breather_kink_t",
    "breather_residual",
    "soliton_kink",
    "soliton",
    "soliton_x",
    "soliton_t",
    "soliton_kink_shift_derivs",
    "blowup_report",
    "blowup_times",
    "partial_mass_soliton",
    "partial_mass_breather",
    "log_integrals",
    "mu_factor",
    "mu_factor_x",
    "mu_inverse",
    "theta_pair",
]

SQ2 = np.sqrt(2.0)
DEFAULT_DX = 80.0 / 2048


class SingularProfileError(ValueError):
    """The complex soliton has a pole on the real line for these shifts."""


@dataclass(frozen=True)
class BreatherParams:
    alpha: float
    beta: float
    x1: float = 0.0
    x2: float = 0.0

    def __post_init__(self):
        if not (self.alpha > 0 and self.beta > 0):
            raise ValueError(f"breather needs alpha, beta > 0, got {self.alpha}, {self.beta}")

    @property
    def delta(self) -> float:
        return self.alpha**2 - 3 * self.beta**2

    @property
    def gamma(self) -> float:
        return 3 * self.alpha**2 - self.beta**2

    def at(self, t: float) -> "BreatherParams":
        """Parameters of the breather at time t (shifts advected by delta, gamma)."""
        return replace(self, x1=self.x1 + self.delta * t, x2=self.x2 + self.gamma * t)

    def soliton(self, conjugate: bool = False) -> "SolitonParams":
        a = -self.alpha if conjugate else self.alpha
        return SolitonParams(a, self.beta, self.x1, self.x2)


@dataclass(frozen=True)
class SolitonParams:
    """Complex soliton with scaling m = beta + i*alpha; alpha < 0 is the conjugate."""

    alpha: float
    beta: float
    x1: float = 0.0
    x2: float = 0.0

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError(f"soliton needs beta > 0, got {self.beta}")
        if self.alpha == 0:
            raise ValueError("soliton needs alpha != 0")

    @property
    def m(self) -> complex:
        return complex(self.beta, self.alpha)

    @property
    def delta(self) -> float:
        return self.alpha**2 - 3 * self.beta**2

    @property
    def gamma(self) -> float:
        return 3 * self.alpha**2 - self.beta**2

    def at(self, t: float) -> "SolitonParams":
        return replace(self, x1=self.x1 + self.delta * t, x2=self.x2 + self.gamma * t)

    def conjugate(self) -> "SolitonParams":
        return replace(self, alpha=-self.alpha)


@dataclass(frozen=True)
class BlowupReport:
    is_singular: bool
    nearest_k: int
    distance: float


# ---------------------------------------------------------------- helpers

def unwrap_from_left(values: np.ndarray, period: float, anchor: float = 0.0) -> np.ndarray:
    """Remove jumps of size ``period`` in the real part, scanning left to right.

    The first sample is then moved by a multiple of ``period`` to sit
    closest to ``anchor`` (the known limit at the left end).
    """
    v = np.asarray(values, dtype=complex)
    re = np.unwrap(v.real, period=period)
    re = re - period * np.round((re[0] - anchor) / period)
    return re + 1j * v.imag


def _sech_tanh(z):
    """sech and tanh of (possibly complex) z without overflow."""
    z = np.asarray(z)
    s = np.where(z.real >= 0, 1.0, -1.0)
    e = np.exp(-2.0 * s * z)
    sech = 2.0 * np.exp(-s * z) / (1.0 + e)
    tanh = s * (1.0 - e) / (1.0 + e)
    return sech, tanh


def _log1p_exp2(theta):
    """log(1 + exp(2 theta)) on the principal branch, overflow-free."""
    theta = np.asarray(theta, dtype=complex)
    pos = theta.real > 0
    out = np.empty_like(theta)
    out[pos] = 2 * theta[pos] + np.log1p(np.exp(-2 * theta[pos]))
    out[~pos] = np.log1p(np.exp(2 * theta[~pos]))
    return out


def _y(x, p):
    return x + p.x1, x + p.x2


def _check_singular(p: SolitonParams, g: Grid | None = None) -> None:
    rep = blowup_report(p, g)
    if rep.is_singular:
        raise SingularProfileError(
            f"profile undefined: x1 - x2 = {p.x1 - p.x2:.6g} lies within {rep.distance:.2e} "
            f"of the singular lattice (k={rep.nearest_k})"
        )


# ------------------------------------------------------------- breather

def _breather_parts(x, p: BreatherParams):
    a, b = p.alpha, p.beta
    y1, y2 = _y(x, p)
    c, s = np.cos(a * y1), np.sin(a * y1)
    with np.errstate(over="ignore"):
        h = 1.0 / np.cosh(b * y2)
    th = np.tanh(b * y2)
    dhat = a * a + b * b * s * s * h * h
    return a, b, c, s, h, th, dhat


def _breather_values(x, p):
    a, b, c, s, h, th, dhat = _breather_parts(x, p)
    return 2 * SQ2 * a * b * (a * c * h - b * s * th * h) / dhat


def _breather_shift_values(x, p):
    """(B1, B2, Btilde1, Btilde2) as arrays."""
    a, b, c, s, h, th, dhat = _breather_parts(x, p)
    k = 2 * SQ2 * a * b
    num = k * (a * c * h - b * s * th * h)
    num1 = k * (-a * a * s * h - a * b * c * th * h)
    num2 = k * (-a * b * c * th * h - b * b * s * h * (2 * h * h - 1))
    d1 = 2 * a * b * b * s * c * h * h
    d2 = -2 * b**3 * s * s * th * h * h
    B1 = (num1 * dhat - num * d1) / dhat**2
    B2 = (num2 * dhat - num * d2) / dhat**2
    Bt1 = 2 * SQ2 * a * a * b * c * h / dhat
    Bt2 = -2 * SQ2 * a * b * b * s * th * h / dhat
    return B1, B2, Bt1, Bt2


def breather_kink(p: BreatherParams, g: Grid) -> Field:
    a, b, c, s, h, th, dhat = _breather_parts(g.nodes, p)
    return Field(g, 2 * SQ2 * np.arctan((b / a) * s * h), realness_hint=True)


def breather(p: BreatherParams, g: Grid) -> Field:
    return Field(g, _breather_values(g.nodes, p), realness_hint=True)


def breather_shift_derivs(p: BreatherParams, g: Grid):
    """Shift derivatives (B1, B2, B~1, B~2) of the breather and its kink."""
    return tuple(Field(g, v, realness_hint=True) for v in _breather_shift_values(g.nodes, p))


def breather_second_shift_derivs(p: BreatherParams, g: Grid, h: float = 1e-20):
    """(B11, B12, B22) by complex-step differentiation of the closed-form B1, B2.

    Complex step is exact to rounding for analytic formulas, so this is not
    a finite-difference approximation in the usual sense.
    """
    x = g.nodes
    b1_dx1 = _breather_shift_values(x, _ShiftC(p, 1j * h, 0.0))[0].imag / h
    b1_dx2 = _breather_shift_values(x, _ShiftC(p, 0.0, 1j * h))[0].imag / h
    b2_dx2 = _breather_shift_values(x, _ShiftC(p, 0.0, 1j * h))[1].imag / h
    return tuple(Field(g, v, realness_hint=True) for v in (b1_dx1, b1_dx2, b2_dx2))


class _ShiftC:
    """Duck-typed params with complex shifts, used only for complex-step."""

    def __init__(self, p, d1, d2):
        self.alpha, self.beta = p.alpha, p.beta
        self.x1, self.x2 = p.x1 + d1, p.x2 + d2


def breather_kink_t(p: BreatherParams, g: Grid) -> Field:
    """Time derivative of the breather kink: delta*B~1 + gamma*B~2."""
    _, _, bt1, bt2 = _breather_shift_values(g.nodes, p)
    return Field(g, p.delta * bt1 + p.gamma * bt2, realness_hint=True)


def breather_residual(p: BreatherParams, g: Grid, delta: float | None = None) -> float:
    """Max norm of B~_t + B_xx + B^3 (``delta`` overrides the velocity, for controls).

    B_xx = B11 + 2 B12 + B22 comes from the closed forms, so the residual
    does not depend on whether the window resolves the profile's tails.
    """
    B = _breather_values(g.nodes, p)
    _, _, bt1, bt2 = _breather_shift_values(g.nodes, p)
    b11, b12, b22 = (f.values.real for f in breather_second_shift_derivs(p, g))
    d = p.delta if delta is None else delta
    r = d * bt1 + p.gamma * bt2 + (b11 + 2 * b12 + b22) + B**3
    return float(np.max(np.abs(r)))


# -------------------------------------------------------------- soliton

def _theta(x, p: SolitonParams):
    y1, y2 = _y(x, p)
    return p.beta * y2 + 1j * p.alpha * y1


def soliton_kink(p: SolitonParams, g: Grid) -> Field:
    """2√2 arctan(e^theta), continuity-unwrapped from 0 at the left end."""
    _check_singular(p, g)
    th = _theta(g.nodes, p)
    pos = th.real > 0
    at = np.empty_like(th)
    at[~pos] = np.arctan(np.exp(th[~pos]))
    at[pos] = np.pi / 2 - np.arctan(np.exp(-th[pos]))
    at = unwrap_from_left(at, np.pi)
    return Field(g, 2 * SQ2 * at)


def soliton(p: SolitonParams, g: Grid) -> Field:
    """Q = √2 m sech(theta)."""
    _check_singular(p, g)
    sech, _ = _sech_tanh(_theta(g.nodes, p))
    return Field(g, SQ2 * p.m * sech)


def soliton_x(p: SolitonParams, g: Grid, order: int = 1) -> Field:
    """Closed-form Q_x (order 1) or Q_xx (order 2)."""
    _check_singular(p, g)
    sech, tanh = _sech_tanh(_theta(g.nodes, p))
    m = p.m
    if order == 1:
        return Field(g, -SQ2 * m * m * sech * tanh)
    if order == 2:
        return Field(g, SQ2 * m**3 * sech * (2 * tanh * tanh - 1))
    raise ValueError("order must be 1 or 2")


def soliton_t(p: SolitonParams, g: Grid) -> Field:
    """Time-derivative potential of the kink, -m^2 Q."""
    return -(p.m**2) * soliton(p, g)


def soliton_kink_shift_derivs(p: SolitonParams, g: Grid):
    """(Q~1, Q~2): derivatives of the kink in x1 and x2."""
    _check_singular(p, g)
    sech, _ = _sech_tanh(_theta(g.nodes, p))
    return Field(g, SQ2 * 1j * p.alpha * sech), Field(g, SQ2 * p.beta * sech)


def blowup_report(p: SolitonParams, g: Grid | None = None, window: float | None = None) -> BlowupReport:
    """Distance of x1 - x2 to the lattice (pi/alpha)(k + 1/2)."""
    if window is None:
        window = 10 * (g.spacing if g is not None else DEFAULT_DX)
    a = abs(p.alpha)
    d = p.x1 - p.x2
    k = int(np.round(d * a / np.pi - 0.5))
    dist = abs(d - (np.pi / a) * (k + 0.5))
    return BlowupReport(bool(dist < window), k, float(dist))


def blowup_times(alpha_s: float, beta_s: float, x1: float, x2: float, t_range) -> list[float]:
    """All t_k in ``t_range`` where (delta-gamma) t + x1 - x2 hits the lattice."""
    t0, t1 = sorted(t_range)
    a = abs(alpha_s)
    rate = -2.0 * (alpha_s**2 + beta_s**2)  # delta - gamma
    d = x1 - x2
    # t_k = ((pi/a)(k+1/2) - d)/rate ; enumerate k covering the interval
    ks = [(rate * t + d) * a / np.pi - 0.5 for t in (t0, t1)]
    out = []
    for k in range(int(np.floor(min(ks))) - 1, int(np.ceil(max(ks))) + 2):
        t = ((np.pi / a) * (k + 0.5) - d) / rate
        if t0 <= t <= t1:
            out.append(float(t))
    return sorted(out)


# ---------------------------------------------------- masses and logs

def partial_mass_soliton(p: SolitonParams, g: Grid) -> Field:
    """½∫_{-∞}^x Q² = 2m e^{2θ}/(1+e^{2θ}) = m(1 + tanh θ)."""
    _check_singular(p, g)
    _, tanh = _sech_tanh(_theta(g.nodes, p))
    return Field(g, p.m * (1 + tanh))


def _breather_mass_values(x, p: BreatherParams):
    a, b = p.alpha, p.beta
    y1, y2 = _y(x, p)
    with np.errstate(over="ignore"):
        h2 = 1.0 / np.cosh(2 * b * y2)
    t2 = np.tanh(2 * b * y2)
    num = b * np.sin(2 * a * y1) * h2 + a * t2
    den = (a * a + b * b - b * b * np.cos(2 * a * y1)) * h2 + a * a
    return 2 * b * (1 + a * num / den)


def partial_mass_breather(p: BreatherParams, g: Grid) -> Field:
    """½∫_{-∞}^x B², rising from 0 to 4β."""
    return Field(g, _breather_mass_values(g.nodes, p), realness_hint=True)


def _log_d(x, p: BreatherParams):
    """log(α²+β²−β²cos(2αy1)+α²cosh(2βy2)) without overflow."""
    a, b = p.alpha, p.beta
    y1, y2 = _y(x, p)
    r = 2 * b * np.abs(y2)
    e = np.exp(-r)
    return r + np.log((a * a + b * b - b * b * np.cos(2 * a * y1)) * e + 0.5 * a * a * (1 + e * e))


def log_integrals(p_b: BreatherParams, p_s: SolitonParams, g: Grid):
    """(∫₀ˣℳ, ∫₀ˣ𝒩, −(β−iα)∫₀ˣcos((B̃+Q̃)/√2)) from closed forms."""
    _check_singular(p_s, g)
    x = g.nodes
    i0 = int(np.argmin(np.abs(x)))
    ld = _log_d(x, p_b)
    int_m = 2 * p_b.beta * x + ld - ld[i0]
    ln = _log1p_exp2(_theta(x, p_s))
    ln = ln.real + 1j * np.unwrap(ln.imag)
    int_n = ln - ln[i0]
    cos_sum = (-p_b.beta + 1j * p_s.alpha) * x + int_m - int_n
    return Field(g, int_m, realness_hint=True), Field(g, int_n), Field(g, cos_sum)


# ----------------------------------------------------- integrating factors

def _mu_values(x, p: BreatherParams):
    a, b, c, s, h, th, dhat = _breather_parts(x, p)
    return 2 * SQ2 * a * a * b * b * (c * h + 1j * s * th * h) / dhat


def mu_factor(p: BreatherParams, g: Grid) -> Field:
    """μ = βB̃₁ − iαB̃₂, decaying at both ends and zero-free."""
    _check_singular(p.soliton(), g)
    return Field(g, _mu_values(g.nodes, p))


def mu_factor_x(p: BreatherParams, g: Grid) -> Field:
    """μ_x = βB₁ − iαB₂ (x-derivatives of the kink shift derivatives are B₁, B₂)."""
    _check_singular(p.soliton(), g)
    B1, B2, _, _ = _breather_shift_values(g.nodes, p)
    return Field(g, p.beta * B1 - 1j * p.alpha * B2)


def mu_inverse(p: BreatherParams, g: Grid) -> Field:
    """1/μ, exponentially large at the window edges."""
    mu = mu_factor(p, g).values
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        inv = 1.0 / mu
    if not np.all(np.isfinite(inv)):
        raise OverflowError(
            f"window too large for 1/mu; use L <= {600.0 / p.beta:.0f}"
        )
    return Field(g, inv)


def theta_pair(p: BreatherParams, g: Grid):
    """(Θ1, Θ1_x, Θ2, Θ2_x) for the algebraic identity behind the breather-soliton link."""
    a, b, c, s, h, th, dhat = _breather_parts(g.nodes, p)
    t1 = (b / a) * s * h
    t1x = (a * b * c * h - b * b * s * th * h) / a
    theta = _theta(g.nodes, p.soliton())
    t2 = np.exp(theta)
    t2x = complex(b, a) * t2
    return t1, t1x, t2, t2x
