import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import H, mu_h
from eternal_lab import CylinderWindow, EvolutionTrace, FieldSlice, eigenpair_solution, evolve
from eternal_lab.errors import HorizonTooShort, NonPositive, NonPositiveProfile, PlateauNotReached, WindowTooShort
from eternal_lab.evolution import SupProfile, sup_profile
from eternal_lab.operator import SourceSpec
from eternal_lab.verify import (
    check_decay_qplus,
    check_decay_step,
    check_max_principle,
    comparison_constant,
    fit_rates,
    kl_contraction,
    proportionality,
)

DT = 1e-2


def mu2_h(h: float) -> float:
    """Second eigenvalue of the three-point Laplacian on (0, pi)."""
    return 4.0 / h**2 * math.sin(h) ** 2


def unit_factor(lam: float, dt: float = DT) -> float:
    return (1.0 / (1.0 + dt * lam)) ** round(1 / dt)


@pytest.fixture(scope="module")
def sine_trace(grid, heat, y):
    return evolve(heat, None, grid, FieldSlice(0.0, np.sin(y)), CylinderWindow(0.0, 5.0, DT))


@pytest.fixture(scope="module")
def two_mode(grid, heat, y):
    u0 = np.sin(y) + 0.3 * np.sin(2 * y)
    return evolve(heat, None, grid, FieldSlice(0.0, u0), CylinderWindow(0.0, 16.0, DT))


# ---------------------------------------------------------------- decay step


def test_decay_step_sine_matches_step_factor(sine_trace):
    rep = check_decay_step(sine_trace)
    assert rep.t0 == [0.0, 1.0, 2.0, 3.0, 4.0]
    assert rep.delta == pytest.approx(1 - unit_factor(mu_h(H)), rel=1e-9)
    assert rep.passed and rep.homogeneous


def test_decay_step_needs_three_units(sine_trace):
    with pytest.raises(WindowTooShort):
        check_decay_step(sine_trace.window(0.0, 2.0))


def test_decay_step_with_source_bound_holds_everywhere(grid, heat, y):
    f = SourceSpec.of("1")
    tr = evolve(heat, f, grid, FieldSlice(0.0, 2 * np.sin(y)), CylinderWindow(0.0, 6.0, DT))
    rep = check_decay_step(tr, f)
    now = np.array([sup_profile(tr).at(t) for t in rep.t0])
    nxt = np.array(rep.ratios) * now
    bound = (1 - rep.delta) * now + rep.affine_coefficient * np.array(rep.slab_f_norms)
    assert np.all(nxt <= bound * (1 + 1e-12))
    assert rep.slab_f_norms[0] == pytest.approx(math.sqrt(2 * math.pi), rel=1e-3)


# ---------------------------------------------------------------- maximum principle


def test_max_principle_homogeneous(sine_trace):
    rep = check_max_principle(sine_trace)
    assert rep.passed
    assert rep.sup_u_plus == pytest.approx(1.0)
    assert rep.boundary_sup_plus == pytest.approx(1.0)


def test_max_principle_full_cylinder_zero(grid, heat):
    tr = evolve(heat, None, grid, FieldSlice(0.0, np.zeros(grid.size)), CylinderWindow(0.0, 3.0, DT))
    rep = check_max_principle(tr, scope="full_Q")
    assert rep.passed and rep.sup_u_plus == 0.0


def test_max_principle_source_constant(grid, heat):
    f = SourceSpec.of("1")
    tr = evolve(heat, f, grid, FieldSlice(0.0, np.zeros(grid.size)), CylinderWindow(0.0, 3.0, DT))
    rep = check_max_principle(tr, f, scope="full_Q")
    assert rep.passed
    assert rep.f_norm == pytest.approx(math.sqrt(2 * math.pi), rel=1e-3)
    assert rep.empirical_C == pytest.approx(rep.sup_u_plus / rep.f_norm)


def test_max_principle_rejects_bad_scope(sine_trace):
    with pytest.raises(ValueError):
        check_max_principle(sine_trace, scope="elsewhere")


# ---------------------------------------------------------------- decay on Q+


def test_qplus_floor_is_steady_state(grid, heat, y):
    f = SourceSpec.of("1")
    tr = evolve(heat, f, grid, FieldSlice(0.0, np.sin(y)), CylinderWindow(0.0, 16.0, DT))
    rep = check_decay_qplus(tr, f)
    # the three-point steady state of -u'' = 1 is y (pi - y) / 2, peak pi^2 / 8
    assert rep.floor == pytest.approx(math.pi**2 / 8, rel=1e-6)
    assert rep.C1 == pytest.approx(rep.floor / rep.f_norm)
    assert rep.alpha == pytest.approx(-math.log(unit_factor(mu_h(H))), abs=2e-2)
    assert rep.passed


def test_qplus_homogeneous_rate(two_mode):
    rep = check_decay_qplus(two_mode)
    assert rep.floor == pytest.approx(0.0, abs=1e-6)
    assert rep.alpha == pytest.approx(-math.log(unit_factor(mu_h(H))), abs=2e-2)


def test_qplus_short_trace_raises(grid, heat, y):
    f = SourceSpec.of("1")
    tr = evolve(heat, f, grid, FieldSlice(0.0, np.sin(y)), CylinderWindow(0.0, 2.0, DT))
    with pytest.raises(PlateauNotReached):
        check_decay_qplus(tr, f)


# ---------------------------------------------------------------- rates


def test_rates_of_pure_exponential():
    t = np.arange(-3.0, 3.0 + 1e-9, 0.01)
    rep = fit_rates(SupProfile(t, np.exp(-t)))
    assert rep.alpha == pytest.approx(1.0, abs=1e-12)
    assert rep.beta == pytest.approx(1.0, abs=1e-12)
    assert rep.C == pytest.approx(math.exp(-1))
    assert rep.C_prime == pytest.approx(math.e)
    assert rep.passed and rep.slopes_in_bracket and not rep.one_sided


def test_rates_two_mode_profile_bracket():
    t = np.arange(0.0, 6.0 + 1e-9, 0.01)
    v = np.exp(-t) + 0.5 * np.exp(-4 * t)
    rep = fit_rates(SupProfile(t, v))
    back = v[:-100] / v[100:]
    assert rep.theta == pytest.approx(back.max() - 1, rel=1e-12)
    assert rep.eta == pytest.approx(back.min() - 1, rel=1e-12)
    assert rep.beta <= rep.alpha
    assert rep.bracket_violations == 0 and rep.secant_violations == 0


@settings(max_examples=40, deadline=None)
@given(st.floats(0.1, 3.0), st.floats(0.0, 2.0), st.floats(0.1, 3.0))
def test_rates_bracket_holds_for_mixtures(r1, w, gap):
    t = np.arange(-2.0, 4.0 + 1e-9, 0.05)
    v = np.exp(-r1 * t) + w * np.exp(-(r1 + gap) * t)
    rep = fit_rates(SupProfile(t, v / v.max()), split=0.5)
    assert rep.bracket_violations == 0 and rep.secant_violations == 0
    assert rep.beta <= rep.alpha + 1e-12


def test_rates_refuse_nonpositive():
    t = np.linspace(0, 2, 21)
    with pytest.raises(NonPositiveProfile):
        fit_rates(SupProfile(t, np.maximum(1 - t, 0.0)))


# ---------------------------------------------------------------- comparison


def test_comparison_constant_algebraic(grid, y):
    t = np.arange(0.0, 3.0 + 1e-9, 0.5)
    u = EvolutionTrace(grid, t, np.outer(np.exp(-t), np.sin(y)))
    v = EvolutionTrace(grid, t, np.outer(np.exp(-t), np.sin(y) * (1 + 0.6 * np.cos(y))))
    rep = comparison_constant(u, v)
    r = 1.0 / (1.0 + 0.6 * np.cos(y))
    assert rep.C_star == pytest.approx(max(r.max(), (1 / r).max()), rel=1e-12)
    assert rep.global_within_C_star_sq and rep.passed


def test_comparison_shrinks_for_later_windows(grid, y, heat):
    win = CylinderWindow(0.0, 4.0, DT)
    u = evolve(heat, None, grid, FieldSlice(0.0, np.sin(y)), win)
    v = evolve(heat, None, grid, FieldSlice(0.0, np.sin(y) + 0.3 * np.sin(2 * y)), win)
    early = comparison_constant(u, v, t_min=0.0)
    late = comparison_constant(u, v, t_min=3.0)
    assert late.C_star < early.C_star
    # derived: v/u = 1 + 0.6 cos y at t = 0 spans (0.4, 1.6); the worst node sits next to y = pi
    assert early.C_star == pytest.approx(1 / (1 - 0.6 * math.cos(H)), rel=1e-3)
    assert early.harnack_C is not None and early.harnack_C >= 1.0


def test_comparison_rejects_sign_change(grid, y):
    t = np.arange(0.0, 2.0 + 1e-9, 0.5)
    u = EvolutionTrace(grid, t, np.outer(np.ones_like(t), np.sin(y)))
    v = EvolutionTrace(grid, t, np.outer(np.ones_like(t), np.sin(2 * y)))
    with pytest.raises(NonPositive):
        comparison_constant(u, v)


# ---------------------------------------------------------------- K_j / L_j


def test_contraction_two_mode_against_eternal(grid, heat, two_mode):
    w = eigenpair_solution(heat, grid, dt=DT).normalized(0.0)
    rep = kl_contraction(two_mode, w, j_max=4)
    assert rep.monotone and rep.envelope_violations == 0 and not rep.tail_sensitive
    assert rep.K == pytest.approx(1.0, abs=1e-3)
    zeta = unit_factor(mu2_h(H)) / unit_factor(mu_h(H))
    assert rep.zeta == pytest.approx(zeta, rel=0.1)
    assert rep.passed


def test_contraction_flags_non_solution(grid, heat, y):
    w = eigenpair_solution(heat, grid, dt=DT).normalized(0.0)
    t = np.arange(0.0, 16.0 + 1e-9, 0.05)
    wv = np.vstack([w.values(s) for s in t])
    u = EvolutionTrace(grid, t, wv * (1 + 0.3 * np.cos(y)[None, :] * np.cos(t)[:, None]))
    rep = kl_contraction(u, w, j_max=4)
    assert not rep.passed
    assert rep.zeta > 0.9


def test_contraction_horizon_checks(grid, heat, two_mode):
    w = eigenpair_solution(heat, grid, dt=DT)
    with pytest.raises(HorizonTooShort):
        kl_contraction(two_mode, w, j_max=4, J=5.0)
    with pytest.raises(HorizonTooShort):
        kl_contraction(two_mode.window(0.0, 8.0), w, j_max=4)


# ---------------------------------------------------------------- proportionality


def test_proportionality_of_scaled_eternal(grid, heat):
    w = eigenpair_solution(heat, grid, dt=DT)
    times = np.arange(-2.0, 2.0 + 1e-9, 0.5)
    rep = proportionality(w.scaled(3.0), w, times=times)
    assert rep.K == pytest.approx(3.0, rel=1e-14)
    assert rep.spread <= 1e-14 and rep.passed


def test_proportionality_detects_different_solutions(grid, heat, y, two_mode):
    w = eigenpair_solution(heat, grid, dt=DT).normalized(0.0)
    rep = proportionality(two_mode.window(0.0, 2.0), w)
    assert not rep.passed and rep.spread > 0.1


def test_proportionality_needs_times(grid, heat):
    w = eigenpair_solution(heat, grid, dt=DT)
    with pytest.raises(ValueError):
        proportionality(w, w)
