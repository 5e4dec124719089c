"""Periodic spectral grid standing in for the real line.

Every profile used in the package decays exponentially, so the line is
replaced by the torus [-L, L) with n equispaced nodes.  Derivatives are
Fourier collocation, integrals are the trapezoid sum, and antiderivatives
split off the mean so that kinks (non-decaying antiderivatives) are never
treated as periodic data.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

__all__ = [
    "Grid",
    "Field",
    "NonDecayingError",
    "derivative",
    "integrate",
    "cumulative",
    "sobolev_norm",
    "halfline_norm",
]

REALNESS_TOL = 1e-8


class NonDecayingError(ValueError):
    """Raised when an integrand does not settle to a common value at both ends."""


@dataclass(frozen=True)
class Grid:
    """Uniform grid on [-L, L) with ``n`` points (power of two, n >= 16)."""

    half_length: float
    n: int

    def __post_init__(self):
        if not self.half_length > 0 or not np.isfinite(self.half_length):
            raise ValueError(f"half_length must be positive, got {self.half_length}")
        n = int(self.n)
        if n < 16 or n & (n - 1):
            raise ValueError(f"n must be a power of two >= 16, got {self.n}")
        object.__setattr__(self, "half_length", float(self.half_length))
        object.__setattr__(self, "n", n)

    @property
    def spacing(self) -> float:
        return 2.0 * self.half_length / self.n

    dx = spacing

    @cached_property
    def nodes(self) -> np.ndarray:
        x = -self.half_length + self.spacing * np.arange(self.n)
        x.setflags(write=False)
        return x

    @cached_property
    def wavenumbers(self) -> np.ndarray:
        k = 2.0 * np.pi * np.fft.fftfreq(self.n, d=self.spacing)
        k.setflags(write=False)
        return k

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        """2/3-rule mask: keep |k| below two thirds of the Nyquist wavenumber."""
        kmax = np.pi / self.spacing
        mask = np.abs(self.wavenumbers) < (2.0 / 3.0) * kmax
        mask.setflags(write=False)
        return mask

    def field(self, values, real: bool = False) -> "Field":
        return Field(self, values, realness_hint=real)

    def zeros(self, real: bool = True) -> "Field":
        return Field(self, np.zeros(self.n, dtype=complex), realness_hint=real)


@dataclass(frozen=True, eq=False)
class Field:
    """Complex samples of a function on ``grid``.

    ``realness_hint`` asserts the function is real; the imaginary part must
    then stay below ``realness_tol`` in max norm.
    """

    grid: Grid
    values: np.ndarray
    realness_hint: bool = False
    realness_tol: float = field(default=REALNESS_TOL, repr=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=complex)
        if v.shape != (self.grid.n,):
            raise ValueError(f"expected {self.grid.n} samples, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("field contains non-finite values")
        if self.realness_hint:
            im = np.max(np.abs(v.imag))
            if im > self.realness_tol:
                raise ValueError(f"real field has imaginary part of size {im:.3e}")
            v = v.real.astype(complex)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    # -- conveniences -------------------------------------------------------
    @property
    def x(self) -> np.ndarray:
        return self.grid.nodes

    @property
    def real(self) -> np.ndarray:
        return self.values.real

    @property
    def imag(self) -> np.ndarray:
        return self.values.imag

    def conj(self) -> "Field":
        return Field(self.grid, self.values.conj(), self.realness_hint)

    def as_real(self) -> "Field":
        """Drop the imaginary part after checking it is negligible."""
        return Field(self.grid, self.values, realness_hint=True, realness_tol=self.realness_tol)

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values)))

    def _wrap(self, other, op):
        if isinstance(other, Field):
            if other.grid != self.grid:
                raise ValueError("fields live on different grids")
            real = self.realness_hint and other.realness_hint
            return Field(self.grid, op(self.values, other.values), real)
        other = complex(other) if np.iscomplexobj(other) else other
        real = self.realness_hint and np.isrealobj(other)
        return Field(self.grid, op(self.values, other), real)

    def __add__(self, o):
        return self._wrap(o, np.add)

    __radd__ = __add__

    def __sub__(self, o):
        return self._wrap(o, np.subtract)

    def __rsub__(self, o):
        return self._wrap(o, lambda a, b: b - a)

    def __mul__(self, o):
        return self._wrap(o, np.multiply)

    __rmul__ = __mul__

    def __truediv__(self, o):
        return self._wrap(o, np.divide)

    def __neg__(self):
        return Field(self.grid, -self.values, self.realness_hint)

    def __pow__(self, p):
        return Field(self.grid, self.values**p, self.realness_hint)


def _check_finite(f: Field) -> None:
    if not np.all(np.isfinite(f.values)):
        raise ValueError("non-finite field")


def spectral_derivative(values: np.ndarray, k: np.ndarray, order: int = 1) -> np.ndarray:
    """Fourier derivative of raw samples; Nyquist mode dropped for odd orders."""
    mult = (1j * k) ** order
    if order % 2:
        mult = mult.copy()
        mult[len(k) // 2] = 0.0
    return np.fft.ifft(mult * np.fft.fft(values))


def derivative(f: Field, order: int = 1) -> Field:
    """Spectral derivative of ``f`` of the given order (1..4)."""
    if not 1 <= order <= 4:
        raise ValueError(f"order must be in 1..4, got {order}")
    _check_finite(f)
    out = spectral_derivative(f.values, f.grid.wavenumbers, order)
    if f.realness_hint:
        out = out.real
    return Field(f.grid, out, f.realness_hint)


def integrate(f: Field, tol: float = 1e-6) -> complex:
    """Trapezoid integral over the window of a decaying integrand."""
    v = f.values
    mismatch = abs(v[0] - v[-1])
    if mismatch > tol:
        raise NonDecayingError(
            f"non-decaying integrand: endpoint mismatch {mismatch:.3e} > {tol:.1e}"
        )
    return complex(f.grid.spacing * np.sum(v))


def _antiderivative_values(values: np.ndarray, g: Grid, anchor: float) -> np.ndarray:
    fh = np.fft.fft(values)
    k = g.wavenumbers
    mean = fh[0] / g.n
    ph = np.zeros_like(fh)
    nz = k != 0
    ph[nz] = fh[nz] / (1j * k[nz])
    ph[g.n // 2] = 0.0
    periodic = np.fft.ifft(ph)
    # evaluate the trigonometric interpolant of the periodic part at the anchor
    p_anchor = np.sum(ph * np.exp(1j * k * (anchor + g.half_length))) / g.n
    return periodic - p_anchor + mean * (g.nodes - anchor)


def _logcosh(z):
    a = np.abs(z)
    return a + np.log1p(np.exp(-2.0 * a)) - np.log(2.0)


def cumulative(f: Field, anchor: float | None = None) -> Field:
    """Antiderivative ``F`` with ``F_x = f`` and ``F(anchor) = 0``.

    The zero-mean part is integrated spectrally; the mean contributes an
    explicit linear term, which is what lets a kink rise from 0 to a
    nonzero limit across the window.  If ``f`` itself settles to different
    constants at the two ends (a partial mass, say), a smooth tanh step
    carrying the jump is removed first and integrated analytically.
    """
    g = f.grid
    if anchor is None:
        anchor = -g.half_length
    if not -g.half_length <= anchor < g.half_length:
        raise ValueError(f"anchor {anchor} outside [-L, L)")
    _check_finite(f)
    v = f.values
    jump = v[-1] - v[0]
    x = g.nodes
    if abs(jump) > 1e-13 * max(1.0, float(np.max(np.abs(v)))):
        w = g.half_length / 25.0
        v = v - jump * 0.5 * (1.0 + np.tanh(x / w))
        step = 0.5 * (x + w * _logcosh(x / w)) - 0.5 * (anchor + w * _logcosh(anchor / w))
        out = _antiderivative_values(v, g, anchor) + jump * step
    else:
        out = _antiderivative_values(v, g, anchor)
    if f.realness_hint:
        out = out.real
    return Field(g, out, f.realness_hint)


def _norm_sq(f: Field, s: int, mask=None) -> float:
    if s not in (0, 1):
        raise ValueError("s must be 0 or 1")
    dens = np.abs(f.values) ** 2
    if s == 1:
        dens = dens + np.abs(spectral_derivative(f.values, f.grid.wavenumbers)) ** 2
    if mask is not None:
        dens = dens[mask]
    return float(f.grid.spacing * np.sum(dens))


def sobolev_norm(f: Field, s: int = 1) -> float:
    """L^2 (s=0) or H^1 (s=1) norm on the window."""
    return float(np.sqrt(_norm_sq(f, s)))


def halfline_norm(f: Field, a: float, s: int = 1) -> float:
    """Sobolev norm restricted to the nodes x >= a (derivative taken globally)."""
    g = f.grid
    if not -g.half_length <= a < g.half_length:
        raise ValueError(f"a={a} outside [-L, L)")
    return float(np.sqrt(_norm_sq(f, s, g.nodes >= a)))
