import numpy as np
import pytest
from hypothesis import given, strategies as st

from mkdvlab import backlund as bk
from mkdvlab import profiles as pr
from mkdvlab.grid import Field, Grid, cumulative, sobolev_norm

SQ2 = np.sqrt(2.0)

# Nullity pairings frozen from an independent mpmath quadrature of the
# closed-form integrands (30 digits, branch-free sin/cos of 2·arctan e^θ).
PAIRING_ORACLE = {
    (1.0, 1.0, 0.0, 0.0): (2.8284271247461903, 2.8284271247461903 - 2.8284271247461903j),
    (0.7, 1.3, 0.4, -0.2): (2.8284271247461903, 1.6529431912507548 - 3.0697516408942596j),
    (1.6, 0.6, -1.0, 0.5): (2.8284271247461903, 2.9756603175411973 - 1.1158726190779489j),
}


def perturbed(g, eta, p=None):
    p = p or pr.BreatherParams(1.0, 1.0)
    x = g.nodes
    return pr.breather(p, g) + Field(g, eta * np.cos(3 * x) / np.cosh(x), realness_hint=True)


@pytest.fixture(scope="module")
def record(grid):
    return bk.decompose_double(1.0, 1.0, perturbed(grid, 1e-2))


@pytest.mark.parametrize("args", sorted(PAIRING_ORACLE))
def test_pairings_match_oracle(grid, args):
    s_sol, s_br = bk.solvability_integrals(pr.BreatherParams(*args), grid)
    want_sol, want_br = PAIRING_ORACLE[args]
    assert abs(s_sol - want_sol) < 1e-8
    assert abs(s_br - want_br) < 1e-8
    assert abs(bk.breather_solvability_closed_form(*args[:2]) - want_br) < 1e-12


def test_exact_pair_has_zero_g(grid):
    p = pr.BreatherParams(0.9, 1.2, 0.3, -0.4)
    ps = p.soliton()
    kink = pr.breather_kink(p, grid) + pr.soliton_kink(ps, grid)
    s = bk.BacklundState.from_profiles(pr.breather(p, grid), pr.soliton(ps, grid), complex(p.beta, -p.alpha), kink)
    g1, g2 = bk.g_residual(s)
    assert g1.max_abs() < 1e-12
    assert g2.max_abs() < 1e-8


def test_state_rejects_bad_scaling(grid):
    p = pr.BreatherParams(1.0, 1.0)
    with pytest.raises(ValueError):
        bk.BacklundState.from_profiles(pr.breather(p, grid), pr.soliton(p.soliton(), grid), -1.0 + 0j)


def test_identity_suite_at_reference(grid):
    r = bk.identity_residuals(pr.BreatherParams(1.0, 1.0), grid)
    assert set(r) >= {"ecQ", "Qx2", "tBteq", "zero0", "zero1", "zerot", "zerot2", "Qis0", "infi2", "Tri2"}
    assert max(r.values()) < 1e-10


@given(
    a=st.floats(0.4, 2.0),
    b=st.floats(0.5, 2.0),
    x1=st.floats(-2, 2),
    x2=st.floats(-2, 2),
)
def test_identity_suite_property(a, b, x1, x2):
    g = Grid(40.0, 1024)
    if pr.blowup_report(pr.SolitonParams(a, b, x1, x2), g).is_singular:
        return
    r = bk.identity_residuals(pr.BreatherParams(a, b, x1, x2), g)
    assert max(r.values()) < 1e-8


def test_forward_inversion_fixes_exact_data(grid):
    p = pr.BreatherParams(1.0, 1.0)
    ps = p.soliton()
    B, Q = pr.breather(p, grid), pr.soliton(ps, grid)
    kink = pr.breather_kink(p, grid) + pr.soliton_kink(ps, grid)
    u_b, m, res = bk.invert_forward(B, Q, pr.mu_factor(p, grid), complex(1, -1), B, base_kink=kink)
    assert sobolev_norm(u_b - Q) < 1e-10
    assert abs(m - complex(1, -1)) < 1e-12
    assert res < 1e-10


def test_forward_inversion_rejects_non_pair(grid):
    p = pr.BreatherParams(1.0, 1.0)
    B, Q = pr.breather(p, grid), pr.soliton(p.soliton(), grid)
    with pytest.raises(ValueError):
        bk.invert_forward(B, Q * 1.1, pr.mu_factor(p, grid), complex(1, -1), B)


def test_decomposition_of_exact_breather(grid):
    rec = bk.decompose_double(1.0, 1.0, pr.breather(pr.BreatherParams(1.0, 1.0), grid))
    assert sobolev_norm(rec.y_a0) < 1e-10
    assert abs(rec.q0) < 1e-10 and abs(rec.p0) < 1e-10
    assert rec.alpha_star == pytest.approx(1.0, abs=1e-10)
    assert not rec.flags


def test_decomposition_realness(record):
    assert record.imag_y_a0 < 1e-8
    assert abs(record.p0 - np.conj(record.q0)) < 1e-8
    assert record.m1 == pytest.approx(np.conj(record.m2), abs=1e-8)
    assert not record.flags


def test_round_trip_at_zero(record, grid):
    u_b, u_a = bk.reconstruct_double(record, record.y_a0.as_real(), 0.0)
    assert sobolev_norm(u_a - record.u0) < 1e-7
    assert sobolev_norm(u_b - record.u_b0) < 1e-7


def test_realness_formula(record, grid):
    assert bk.realness_formula_check(record, grid) < 1e-8


def test_reconstruct_refuses_blowup_window(record):
    tk = pr.blowup_times(record.alpha_star, record.beta_star, 0.0, 0.0, (0.0, 1.0))[0]
    with pytest.raises(bk.BlowupWindowError):
        bk.reconstruct_double(record, record.y_a0.as_real(), tk)


def test_jost_constant_transport_closed_form(grid):
    # zero potential, member Q(t): the label evolves as C(0) e^{−m³t}
    ps = pr.SolitonParams(0.8, 1.1, 0.2, -0.1)
    zero = grid.zeros(real=False)
    C0, spread0 = bk.jost_parameter(zero, pr.soliton(ps, grid), ps.m)
    for t in (0.05, 0.2):
        Ct, _ = bk.jost_parameter(zero, pr.soliton(ps.at(t), grid), ps.m)
        assert abs(Ct / C0 - np.exp(-(ps.m**3) * t)) < 1e-10
    assert spread0 < 1e-10
    member = bk.jost_member(zero, ps.m, C0)
    assert sobolev_norm(member - pr.soliton(ps, grid)) < 1e-10


def test_backward_inversion_recovers_breather(grid):
    p = pr.BreatherParams(1.0, 1.0)
    ps = p.soliton()
    B, Q = pr.breather(p, grid), pr.soliton(ps, grid)
    kink = pr.breather_kink(p, grid) + pr.soliton_kink(ps, grid)
    mu = pr.mu_factor(p, grid)
    u_a, res = bk.invert_backward(B, Q, Field(grid, 1 / mu.values), complex(1, -1), Q, base_kink=kink)
    assert sobolev_norm(u_a - B) < 1e-9


def test_permutability(grid):
    rep = bk.permutability_check(1.0, 1.0, perturbed(grid, 1e-3))
    assert rep.kink_gap < 1e-7
    assert rep.cross_ratio < 1e-8
    assert rep.kappa_gap < 1e-8
    base = bk.permutability_check(1.0, 1.0, pr.breather(pr.BreatherParams(1.0, 1.0), grid))
    assert base.u3_vs_u2 < 1e-9


def test_theta_identity(grid):
    p = pr.BreatherParams(1.3, 0.7, 0.5, 0.1)
    assert bk.theta_identity_residual(p, g=grid) < 1e-10
    assert bk.theta_identity_residual(p, g=grid, m=complex(p.beta, p.alpha)) > 1e-3


def test_permutability_map_inverts_cross_ratio(grid):
    # the map solves the cross-ratio identity for the top rung by construction
    x = grid.nodes
    u0k = Field(grid, 0.3 * np.tanh(x) + 0.3)
    u1k = Field(grid, 0.2 * np.tanh(x - 1) + 0.2)
    u12k = Field(grid, 0.5 * np.tanh(x + 1) + 0.5)
    k1, k2 = 1.3 + 0.2j, 0.7 - 0.4j
    u2k = bk.permutability_map(u0k, u1k, u12k, k1, k2)
    assert bk.cross_ratio_residual(u0k, u1k, u2k, u12k, k1, k2) < 1e-12
