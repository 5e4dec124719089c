"""Modulation of a perturbed breather: fitted shifts, tube distance, weighted functionals.

A solution near the breather B(·; α*, β*, x1, x2) is written as
u = B(·; α*, β*, δ*t + x1(t), γ*t + x2(t)) + z with z orthogonal (in L²) to
both shift derivatives B1, B2.  The fit is a two-dimensional Newton solve.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import profiles as pr
from .grid import Field, Grid, derivative, halfline_norm, sobolev_norm
from .pde import Trajectory

__all__ = [
    "ModulationError",
    "DegenerateFitError",
    "ModulationTrack",
    "WeightConfig",
    "fit_shifts",
    "track",
    "tube_distance",
    "weight",
    "weighted_functionals",
    "HalflineSeries",
    "halfline_decay",
    "InelasticityReport",
    "inelasticity_probe",
    "default_c0",
]

log = logging.getLogger(__name__)

FIT_TOL = 1e-10
FIT_ITERS = 10


class ModulationError(RuntimeError):
    """Newton did not converge; carries the last iterate (and time, if tracking)."""

    def __init__(self, msg, last=None, time=None):
        super().__init__(msg)
        self.last = last
        self.time = time


class DegenerateFitError(ModulationError):
    """The 2x2 Jacobian of the orthogonality conditions is (nearly) singular."""


def default_c0(beta_s: float) -> float:
    return 0.05 * min(1.0, beta_s**2)


# ------------------------------------------------------------------ fit

def _fit_system(u: np.ndarray, p: pr.BreatherParams, g: Grid):
    x, dx = g.nodes, g.spacing
    B = pr._breather_values(x, p)
    B1, B2, _, _ = pr._breather_shift_values(x, p)
    b11, b12, b22 = (f.real for f in pr.breather_second_shift_derivs(p, g))
    z = u - B
    F = dx * np.array([np.sum(z * B1), np.sum(z * B2)])
    J = dx * np.array(
        [
            [np.sum(z * b11 - B1 * B1), np.sum(z * b12 - B1 * B2)],
            [np.sum(z * b12 - B2 * B1), np.sum(z * b22 - B2 * B2)],
        ]
    )
    return F, J


def _params(alpha_s, beta_s, t, a, b) -> pr.BreatherParams:
    p = pr.BreatherParams(alpha_s, beta_s)
    return pr.BreatherParams(alpha_s, beta_s, p.delta * t + a, p.gamma * t + b)


def fit_shifts(
    u: Field,
    alpha_s: float,
    beta_s: float,
    t: float = 0.0,
    guess=(0.0, 0.0),
    tol: float = FIT_TOL,
    max_iter: int = FIT_ITERS,
    tube_radius: float = 0.5,
):
    """Shifts (x1, x2) making u − B orthogonal to B1 and B2; returns (x1, x2, residual).

    ``residual`` is the larger of the two orthogonality integrals.
    """
    g = u.grid
    v = u.values.real
    a, b = map(float, guess)
    F = None
    for it in range(max_iter + 1):
        p = _params(alpha_s, beta_s, t, a, b)
        F, J = _fit_system(v, p, g)
        res = float(np.max(np.abs(F)))
        if res < tol:
            break
        if it == max_iter:
            raise ModulationError(
                f"orthogonality fit did not converge in {max_iter} iterations (residual {res:.2e})",
                last=(a, b, res),
            )
        # guard against a singular Jacobian before solving
        if abs(np.linalg.det(J)) < 1e-12 * max(1.0, np.max(np.abs(J))) ** 2:
            raise DegenerateFitError("orthogonality Jacobian is singular", last=(a, b, res))
        da, db = np.linalg.solve(J, -F)
        a, b = a + da, b + db
        if not np.isfinite(a + b):
            raise ModulationError("orthogonality fit diverged", last=(a, b, res))
    dist = sobolev_norm(Field(g, v - pr._breather_values(g.nodes, p)))
    if dist > tube_radius:
        warnings.warn(f"fitted profile is {dist:.3g} from the breather in H¹; outside the tube", RuntimeWarning, stacklevel=2)
    return a, b, res


def tube_distance(
    u: Field, alpha_s: float, beta_s: float, t: float = 0.0, guess=(0.0, 0.0), return_flag: bool = False
):
    """H¹ distance to the breather family, realized at the fitted shifts.

    Both the fitted and the guessed shifts give upper bounds on the
    infimum, so the smaller of the two is returned.  If the fit fails the
    best Newton iterate is used and ``flag`` is set.
    """
    g, v = u.grid, u.values.real
    flag = False
    try:
        a, b, _ = fit_shifts(u, alpha_s, beta_s, t, guess, tube_radius=np.inf)
    except ModulationError as err:
        flag = True
        a, b = (err.last[0], err.last[1]) if err.last is not None else guess
    d = np.inf
    for s in ((a, b), tuple(guess)):
        if np.isfinite(s[0] + s[1]):
            B = pr._breather_values(g.nodes, _params(alpha_s, beta_s, t, *s))
            d = min(d, sobolev_norm(Field(g, v - B)))
    return (d, flag) if return_flag else d


@dataclass
class ModulationTrack:
    times: np.ndarray
    x1: np.ndarray
    x2: np.ndarray
    tube_distance: np.ndarray
    drift_bound: float
    residuals: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        n = len(self.times)
        if not all(len(a) == n for a in (self.x1, self.x2, self.tube_distance)):
            raise ValueError("track arrays are not aligned")

    def drift_rates(self) -> np.ndarray:
        if len(self.times) < 2:
            return np.zeros(len(self.times))
        return np.abs(np.gradient(self.x1, self.times)) + np.abs(np.gradient(self.x2, self.times))


def track(traj: Trajectory, alpha_s: float, beta_s: float, guess=(0.0, 0.0)) -> ModulationTrack:
    """Fit shifts along a trajectory, warm-starting each sample from the last."""
    ts = np.asarray(traj.times, dtype=float)
    x1, x2, dist, res = (np.empty(len(ts)) for _ in range(4))
    cur = tuple(guess)
    for i, (t, u) in enumerate(zip(ts, traj.states)):
        try:
            a, b, r = fit_shifts(u, alpha_s, beta_s, t, cur, tube_radius=np.inf)
        except ModulationError as err:
            err.time = float(t)
            err.args = (f"{err.args[0]} at t={t:.6g}",)
            raise
        cur = (a, b)
        x1[i], x2[i], res[i] = a, b, r
        B = pr._breather_values(u.grid.nodes, _params(alpha_s, beta_s, t, a, b))
        dist[i] = sobolev_norm(Field(u.grid, u.values.real - B))
    out = ModulationTrack(ts, x1, x2, dist, 0.0, res)
    out.drift_bound = float(np.max(out.drift_rates())) if len(ts) > 1 else 0.0
    return out


# ---------------------------------------------------------- functionals

@dataclass(frozen=True)
class WeightConfig:
    """Monotone weight φ(x) = (2/π) arctan(e^{x/K}) moving at speed c0/2."""

    K: float = 1.0
    c0: float = 0.05
    t0: float = 0.0

    def __post_init__(self):
        if not self.K > 0:
            raise ValueError("K must be positive")
        if not self.c0 > 0:
            raise ValueError("c0 must be positive")

    @classmethod
    def compatible(cls, c0: float, t0: float = 0.0) -> "WeightConfig":
        """Smallest K with φ'''/2 ≤ c0 φ'/4, i.e. K² = 2/c0."""
        return cls(K=float(np.sqrt(2.0 / c0)), c0=c0, t0=t0)

    def center(self, t: float) -> float:
        return self.c0 * self.t0 - 0.5 * self.c0 * (self.t0 - t)


def weight(x: np.ndarray, K: float, order: int = 0) -> np.ndarray:
    """φ and its first three derivatives."""
    y = np.asarray(x, dtype=float) / K
    if order == 0:
        # arctan(e^y) = π/2 − arctan(e^{−y}); pick the form that does not overflow
        return np.where(y < 0, 2 / np.pi * np.arctan(np.exp(np.minimum(y, 0))), 1 - 2 / np.pi * np.arctan(np.exp(-np.maximum(y, 0))))
    sech = 1 / np.cosh(np.clip(y, -700, 700))
    d1 = sech / (np.pi * K)
    if order == 1:
        return d1
    if order == 2:
        return -d1 * np.tanh(y) / K
    if order == 3:
        return d1 * (1 - 2 * sech**2) / K**2
    raise ValueError("order must be 0..3")


def weighted_functionals(traj: Trajectory, w: WeightConfig):
    """I(t) = ½∫y²φ and J(t) = ∫(½y_x² − ¼y⁴ + ½y²)φ with the moving weight."""
    I, J = [], []
    for t, u in zip(traj.times, traj.states):
        y = u.values.real
        yx = derivative(u).values.real
        phi = weight(u.grid.nodes - w.center(t), w.K)
        dx = u.grid.spacing
        I.append(0.5 * dx * np.sum(y * y * phi))
        J.append(dx * np.sum((0.5 * yx * yx - 0.25 * y**4 + 0.5 * y * y) * phi))
    return np.array(I), np.array(J)


@dataclass
class HalflineSeries:
    times: np.ndarray
    values: np.ndarray
    chain: Optional[np.ndarray] = None
    skipped: Optional[np.ndarray] = None

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)

    def __len__(self):
        return len(self.values)

    def trend_decreasing(self) -> bool:
        q = max(1, len(self.values) // 4)
        v = self.values[np.isfinite(self.values)]
        return bool(np.mean(v[-q:]) < np.mean(v[:q]))


def halfline_decay(
    traj: Trajectory,
    base_alpha: float,
    base_beta: float,
    rec=None,
    w: WeightConfig | None = None,
    chain_traj: Trajectory | None = None,
) -> HalflineSeries:
    """‖u(t) − B*(t; fitted shifts)‖_{H¹(x ≥ c0 t)} along the trajectory.

    Parameters (α*, β*) come from ``rec`` when given.  With no breather at
    all (``base_alpha = 0``) the norm of u itself is reported.  If
    ``chain_traj`` (the evolved real seed y_a) is supplied together with
    ``rec``, the half-line norm of z_b = u_b − Q*(t) is reported as well;
    times inside a blow-up window are skipped and marked.
    """
    if rec is not None:
        a_s, b_s = rec.alpha_star, rec.beta_star
    else:
        a_s, b_s = base_alpha, base_beta
    w = w or WeightConfig(c0=default_c0(b_s if b_s > 0 else 1.0))
    ts = np.asarray(traj.times, dtype=float)
    g = traj.grid
    vals = np.empty(len(ts))
    if a_s > 0 and b_s > 0:
        tr = track(traj, a_s, b_s, guess=rec.shifts if rec is not None else (0.0, 0.0))
    for i, (t, u) in enumerate(zip(ts, traj.states)):
        a = w.c0 * t
        if a >= g.half_length:
            vals[i] = np.nan
            continue
        if a_s > 0 and b_s > 0:
            B = pr._breather_values(g.nodes, _params(a_s, b_s, t, tr.x1[i], tr.x2[i]))
            z = Field(g, u.values.real - B)
        else:
            z = u
        vals[i] = halfline_norm(z, a)
    chain = skipped = None
    if chain_traj is not None and rec is not None:
        from .backlund import BlowupWindowError, reconstruct_double

        chain = np.full(len(chain_traj.times), np.nan)
        skipped = np.zeros(len(chain_traj.times), dtype=bool)
        for i, (t, ya) in enumerate(zip(chain_traj.times, chain_traj.states)):
            try:
                r = reconstruct_double(rec, ya, float(t))
            except BlowupWindowError:
                skipped[i] = True
                continue
            ps = rec_soliton(rec).at(float(t))
            zb = r.u_b - pr.soliton(ps, g)
            chain[i] = halfline_norm(zb, min(w.c0 * t, g.half_length - g.spacing))
    return HalflineSeries(ts, vals, chain, skipped)


def rec_soliton(rec) -> pr.SolitonParams:
    """Q* of a decomposition record (the seed of the second step)."""
    return pr.SolitonParams(rec.alpha_star, rec.beta_star, *rec.shifts)


# ---------------------------------------------------------- inelasticity

@dataclass(frozen=True)
class InelasticityReport:
    ell0: float
    param_shift: float
    ratio: float
    comparable: bool

    def __iter__(self):
        return iter((self.ell0, self.param_shift, self.ratio))


def inelasticity_probe(u0: Field, base: pr.BreatherParams, rec, c0: float | None = None) -> InelasticityReport:
    """ℓ0 = ‖u0 − B⁰‖_{H¹} against the parameter shift |β* − β| + |α* − α|."""
    ell0 = sobolev_norm(u0 - pr.breather(base, u0.grid))
    shift = abs(rec.beta_star - base.beta) + abs(rec.alpha_star - base.alpha)
    ratio = shift / ell0 if ell0 > 0 else float("nan")
    c0 = default_c0(base.beta) if c0 is None else c0
    ok = bool(ell0 == 0 and shift < 1e-10) or bool(c0 * ell0 <= shift <= ell0 / c0)
    return InelasticityReport(float(ell0), float(shift), float(ratio), ok)
