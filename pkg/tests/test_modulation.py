import numpy as np
import pytest
from hypothesis import given, strategies as st

from mkdvlab import backlund as bk
from mkdvlab import modulation as md
from mkdvlab import profiles as pr
from mkdvlab.grid import Field, Grid, sobolev_norm
from mkdvlab.pde import EvolutionConfig, Trajectory, evolve


def closed_form_traj(p, g, times):
    states = [pr.breather(p.at(t), g) for t in times]
    z = np.zeros(len(times), dtype=complex)
    return Trajectory(np.asarray(times, float), states, z, z)


def sech_sin(g, eta):
    x = g.nodes
    return Field(g, eta * np.sin(2 * x) / np.cosh(x), realness_hint=True)


def test_fit_recovers_exact_shifts(coarse):
    p = pr.BreatherParams(1.0, 1.2, 0.37, -0.21)
    for t in (0.0, 0.3):
        a, b, res = md.fit_shifts(pr.breather(p.at(t), coarse), 1.0, 1.2, t, (0.0, 0.0))
        assert abs(a - 0.37) < 1e-9 and abs(b + 0.21) < 1e-9
        assert res < 1e-10


def test_fit_linear_response(coarse):
    B = pr.breather(pr.BreatherParams(1.0, 1.0), coarse)
    s1 = np.array(md.fit_shifts(B + sech_sin(coarse, 1e-2), 1.0, 1.0)[:2])
    s2 = np.array(md.fit_shifts(B + sech_sin(coarse, 5e-3), 1.0, 1.0)[:2])
    assert np.linalg.norm(s1) < 1.0 * 1e-2
    assert np.allclose(s1, 2 * s2, rtol=0.05, atol=1e-9)


def test_fit_ignores_orthogonal_part(coarse):
    p = pr.BreatherParams(1.0, 1.0, 0.2, -0.1)
    B1, B2, _, _ = (f.real for f in pr.breather_shift_derivs(p, coarse))
    z = 1e-2 * np.exp(-((coarse.nodes - 0.5) ** 2))
    # remove the L² projection of z on span{B1, B2}
    G = np.array([[B1 @ B1, B1 @ B2], [B2 @ B1, B2 @ B2]])
    c = np.linalg.solve(G, [B1 @ z, B2 @ z])
    z = z - c[0] * B1 - c[1] * B2
    a, b, res = md.fit_shifts(pr.breather(p, coarse) + Field(coarse, z, realness_hint=True), 1.0, 1.0)
    assert abs(a - 0.2) < 1e-9 and abs(b + 0.1) < 1e-9


@pytest.mark.parametrize("guess", [(0.1, 0.1), (-0.1, 0.1), (0.1, -0.1), (-0.1, -0.1)])
def test_fit_unique_near_tube(coarse, guess):
    u = pr.breather(pr.BreatherParams(1.0, 1.0), coarse) + sech_sin(coarse, 1e-2)
    ref = md.fit_shifts(u, 1.0, 1.0)[:2]
    got = md.fit_shifts(u, 1.0, 1.0, 0.0, guess)[:2]
    assert np.allclose(ref, got, atol=1e-8)


def test_fit_reports_divergence(coarse):
    u = pr.breather(pr.BreatherParams(1.0, 1.0, 3.0, 3.0), coarse)
    with pytest.raises(md.ModulationError) as err:
        md.fit_shifts(u, 1.0, 1.0, 0.0, (0.0, 0.0), max_iter=1)
    assert err.value.last is not None


def test_fit_degenerate_jacobian(coarse):
    with pytest.raises(md.DegenerateFitError):
        md.fit_shifts(coarse.zeros(), 1.0, 1.0, 0.0, (0.0, 30.0))


def test_tube_distance_examples(coarse):
    B = pr.breather(pr.BreatherParams(1.0, 1.0), coarse)
    assert md.tube_distance(B, 1.0, 1.0) < 1e-9
    w = sech_sin(coarse, 1e-2)
    assert md.tube_distance(B + w, 1.0, 1.0) <= sobolev_norm(w) + 1e-9
    shifted = pr.breather(pr.BreatherParams(1.0, 1.0, 0.37, -0.21), coarse)
    assert md.tube_distance(shifted, 1.0, 1.0, guess=(0.0, 0.0)) < 1e-8


def test_track_exact_breather(coarse):
    p = pr.BreatherParams(1.0, 1.0, 0.1, -0.2)
    tr = md.track(closed_form_traj(p, coarse, np.linspace(0, 1, 11)), 1.0, 1.0, guess=(0.0, 0.0))
    assert np.ptp(tr.x1) < 1e-8 and np.ptp(tr.x2) < 1e-8
    assert tr.drift_bound < 1e-6
    assert np.max(tr.residuals) < 1e-10


def test_track_attaches_failure_time(coarse, monkeypatch):
    p = pr.BreatherParams(1.0, 1.0)
    tr = closed_form_traj(p, coarse, [0.0, 0.1])
    real_fit = md.fit_shifts

    def flaky(u, a, b, t, guess, **kw):
        if t > 0:
            raise md.ModulationError("no convergence", last=(0.0, 0.0, 1.0))
        return real_fit(u, a, b, t, guess, **kw)

    monkeypatch.setattr(md, "fit_shifts", flaky)
    with pytest.raises(md.ModulationError) as err:
        md.track(tr, 1.0, 1.0)
    assert err.value.time == pytest.approx(0.1)


def test_track_scales_linearly():
    g = Grid(40.0, 1024)
    p = pr.BreatherParams(0.5, 1.0)
    sups = []
    for eta in (1e-2, 5e-3):
        u0 = pr.breather(p, g) + sech_sin(g, eta)
        traj = evolve(u0, EvolutionConfig(dt=5e-4, t_final=2.0, snapshot_stride=200))
        tr = md.track(traj, 0.5, 1.0)
        assert tr.drift_bound < 10 * eta
        sups.append(np.max(tr.tube_distance))
    assert sups[0] / sups[1] == pytest.approx(2.0, rel=0.2)


def test_weight_properties():
    K, L = 1.0, 40.0
    x = np.linspace(-L, L, 4001)
    assert md.weight(-L, K) < 1e-8
    assert abs(1 - md.weight(L, K)) < 1e-8
    d1, d3 = md.weight(x, K, 1), md.weight(x, K, 3)
    assert np.all(d1 > 0)
    assert np.all(d3 <= d1 / K**2 + 1e-15)
    # derivatives agree with difference quotients
    h = 1e-5
    fd = (md.weight(x + h, K) - md.weight(x - h, K)) / (2 * h)
    assert np.max(np.abs(fd - d1)) < 1e-9
    fd2 = (md.weight(x + h, K, 1) - md.weight(x - h, K, 1)) / (2 * h)
    assert np.max(np.abs(fd2 - md.weight(x, K, 2))) < 1e-9
    with pytest.raises(ValueError):
        md.WeightConfig(K=0.0)
    with pytest.raises(ValueError):
        md.WeightConfig(c0=-1.0)


@given(K=st.floats(0.2, 10.0), x=st.floats(-50, 50))
def test_weight_third_derivative_bound(K, x):
    assert md.weight(x, K, 3) <= md.weight(x, K, 1) / K**2 + 1e-15
    assert 0.0 <= md.weight(x, K) <= 1.0


def test_functionals_of_zero(coarse):
    tr = Trajectory(np.array([0.0, 1.0]), [coarse.zeros(), coarse.zeros()], np.zeros(2), np.zeros(2))
    I, J = md.weighted_functionals(tr, md.WeightConfig())
    assert np.all(I == 0) and np.all(J == 0)


def test_I_is_monotone_for_small_data():
    g = Grid(40.0, 1024)
    y0 = Field(g, 1e-2 * np.exp(-((g.nodes / 5) ** 2)), realness_hint=True)
    tr = evolve(y0, EvolutionConfig(dt=1e-3, t_final=3.0, snapshot_stride=50))
    I, _ = md.weighted_functionals(tr, md.WeightConfig.compatible(0.05))
    assert np.max(np.diff(I)) <= 1e-10


def test_halfline_decay_exact_breather(coarse):
    p = pr.BreatherParams(0.5, 1.0)
    traj = closed_form_traj(p, coarse, np.linspace(0, 2, 5))
    s = md.halfline_decay(traj, 0.5, 1.0)
    assert np.nanmax(s.values) < 1e-9
    assert len(s) == 5


def test_inelasticity_examples(grid):
    base = pr.BreatherParams(1.0, 1.0)
    B = pr.breather(base, grid)
    rec = bk.decompose_double(1.0, 1.0, B)
    r = md.inelasticity_probe(B, base, rec)
    assert r.ell0 == 0 and r.param_shift < 1e-10
    ratios = []
    for eta in (1e-2, 5e-3, 2.5e-3):
        u0 = B + Field(grid, eta * np.exp(-grid.nodes**2), realness_hint=True)
        ratios.append(md.inelasticity_probe(u0, base, bk.decompose_double(1.0, 1.0, u0)).ratio)
    assert max(ratios) / min(ratios) < 3
    # a pure shift leaves the parameters alone
    B1 = pr.breather_shift_derivs(base, grid)[0]
    u_shift = B + B1 * 1e-3
    r_shift = md.inelasticity_probe(u_shift, base, bk.decompose_double(1.0, 1.0, u_shift))
    assert r_shift.ratio < 0.1 * min(ratios)
    ell0, shift, ratio = r_shift
    assert ell0 > 0
