"""Acceptance criteria at desk scale (h = pi/100, dt = 1e-3, 2D 64 x 64).

Each test records one PASS/FAIL line through the ``criterion`` fixture; the
terminal summary lists all of them.
"""

import json
import math

import numpy as np
import pytest
from scipy.integrate import quad

from conftest import DT, H, mu_h
from eternal_lab import (
    CylinderWindow,
    FieldSlice,
    SpatialDomain,
    build_grid,
    eigenpair_solution,
    evolve,
    far_past,
    floquet_principal,
    heat_spec,
    make_spec,
    principal_eigenpair,
)
from eternal_lab.config import rng_stream
from eternal_lab.errors import NegativeCoefficient
from eternal_lab.evolution import sup_profile
from eternal_lab.inhomogeneous import decompose, exhaustion_limit, synthesize
from eternal_lab.operator import SourceSpec
from eternal_lab.verify import check_decay_step, fit_rates, kl_contraction, proportionality

SEED = 20240601


def test_01_eigenpair_oracle(criterion, grid, heat):
    got = {}
    with criterion(1, "eigenpair oracle", lambda: f"rel={got.get('rel', math.nan):.2e} 2D={got.get('err2', math.nan):.2e}"):
        lam, phi = principal_eigenpair(heat, grid)
        got["rel"] = abs(lam - mu_h(H)) / mu_h(H)
        assert got["rel"] <= 1e-10
        assert abs(lam - 1.0) <= 2e-3
        h2 = math.pi / 65  # 64 x 64 interior nodes
        sq = build_grid(SpatialDomain.rectangle(0, math.pi, 0, math.pi, origin=(math.pi / 2, math.pi / 2)), h2)
        assert sq.size == 64 * 64
        lam2, _ = principal_eigenpair(make_spec(dim=2), sq)
        lam1, _ = principal_eigenpair(heat, build_grid(SpatialDomain.interval(0, math.pi, origin=math.pi / 2), h2))
        got["err2"] = abs(lam2 - 2 * lam1)
        assert got["err2"] <= 1e-9


def test_02_proportionality(criterion, grid, heat):
    got = {}
    with criterion(2, "proportionality of eternal solutions",
                   lambda: f"seeds={got.get('seeds', math.nan):.2e} routes={got.get('routes', math.nan):.2e}"):
        window = CylinderWindow(0.0, 5.0, DT)
        seeds = [rng_stream(SEED, name).uniform(0.5, 1.5, grid.size) for name in ("seed_u", "seed_v")]
        u, v = (far_past(heat, grid, window, seed=s, T_back=20.0) for s in seeds)
        got["seeds"] = proportionality(u, v).spread
        w = eigenpair_solution(heat, grid, dt=DT)
        got["routes"] = proportionality(w, u, times=window.times).spread
        assert got["seeds"] <= 1e-6
        assert got["routes"] <= 1e-6


def test_03_monotone_profiles_in_bundled_suite(criterion, bundled_run):
    got = {"checked": 0, "violations": 0}
    with criterion(3, "sup-profile strictly decreasing",
                   lambda: f"traces={got['checked']} violations={got['violations']}"):
        out, code, _ = bundled_run
        assert code == 0
        for report in sorted(out.glob("*/report.json")):
            checks = json.loads(report.read_text())["checks"]
            for name, chk in checks.items():
                if name == "monotone":
                    got["checked"] += 1
                    got["violations"] += int(chk["value"])
        # independent recount on the full-resolution homogeneous profiles
        for name in ("eternal_heat", "eternal_periodic", "eternal_square", "rates_heat", "rates_potential"):
            data = np.loadtxt(out / name / "profile.csv", delimiter=",", skiprows=1)
            u = data[:, 1]
            got["violations"] += int(np.sum(u[1:] > u[:-1] * (1 - 1e-12)))
        assert got["checked"] >= 5
        assert got["violations"] == 0


def test_04_decay_step(criterion, grid):
    got = {}
    with criterion(4, "decay step delta", lambda: f"c0={got.get('c0', math.nan):.3e} c1={got.get('c1', math.nan):.3e}"):
        window = CylinderWindow(0.0, 5.0, DT)
        for c, mu, key in (("0", 1.0, "c0"), ("1", 2.0, "c1")):
            w = eigenpair_solution(heat_spec(c=c), grid, dt=DT)
            delta = check_decay_step(w.trace(window)).delta
            target = 1 - math.exp(-mu)
            got[key] = abs(delta - target) / target
            assert got[key] <= 2e-2


def test_05_rates(criterion, grid, heat):
    got = {}
    with criterion(5, "two-sided rates and bracket",
                   lambda: f"fwd={got.get('fwd', math.nan):.2e} bwd={got.get('bwd', math.nan):.2e} "
                           f"violations={got.get('viol', '?')}"):
        w = eigenpair_solution(heat, grid, dt=DT)
        prof = sup_profile(w.trace(CylinderWindow(-5.0, 15.0, DT)))
        rep = fit_rates(prof, split=0.0)
        got["fwd"] = abs(rep.forward_slope - mu_h(H))
        got["bwd"] = abs(rep.backward_slope - mu_h(H))
        got["viol"] = rep.bracket_violations
        assert got["fwd"] <= 1e-2 and got["bwd"] <= 1e-2
        assert rep.C == pytest.approx(1 / (1 + rep.eta)) and rep.C_prime == pytest.approx(1 + rep.theta)
        assert rep.bracket_violations == 0


def test_06_contraction(criterion, grid, heat, y):
    got = {}
    with criterion(6, "K_j / L_j contraction",
                   lambda: f"K={got.get('K', math.nan):.6f} zeta={got.get('zeta', math.nan):.4f} "
                           f"envelope={got.get('env', '?')}"):
        window = CylinderWindow(0.0, 16.0, DT)
        u = evolve(heat, None, grid, FieldSlice(0.0, np.sin(y) + 0.3 * np.sin(2 * y)), window)
        # w normalised at t = 0 so that u - w decays to zero (see ledger)
        w = eigenpair_solution(heat, grid, dt=DT, t_ref=0.0)
        rep = kl_contraction(u, w, j_max=4)
        got.update(K=rep.K, zeta=rep.zeta, env=rep.envelope_violations)
        assert abs(rep.K - 1.0) <= 1e-3
        assert abs(rep.zeta - math.exp(-3)) / math.exp(-3) <= 0.1
        assert rep.envelope_violations == 0


@pytest.fixture(scope="module")
def exhaustion(grid, heat):
    return exhaustion_limit(heat, SourceSpec.of("sin(y)"), grid, N_list=(4, 8, 16), W=2.0, dt=DT, workers=3)


def test_07_exhaustion(criterion, exhaustion, y):
    got = {}
    with criterion(7, "exhaustion limit",
                   lambda: f"var={got.get('var', math.nan):.2e} ratio={got.get('ratio', math.nan):.3f} "
                           f"u0={got.get('u0', math.nan):.2e}"):
        ex = exhaustion
        got.update(var=ex.bound_variation, ratio=ex.ratio, u0=float(np.abs(ex.u0.values - np.sin(y)).max()))
        assert ex.bound_variation <= 0.05
        assert np.all(np.diff(ex.d_N) < 0) and ex.ratio < 0.2
        assert got["u0"] <= 1e-3


def test_08_decomposition(criterion, exhaustion, grid, heat):
    got = {}
    with criterion(8, "decomposition u = u0 + a w",
                   lambda: f"a_err={got.get('a', math.nan):.2e} residual={got.get('res', math.nan):.2e}"):
        u0 = exhaustion.u0
        w = eigenpair_solution(heat, grid, dt=DT)
        draws = rng_stream(SEED, "a_draws").uniform(0.0, 10.0, 100)
        got["a"] = max(abs(decompose(synthesize(u0, w, a), u0, w).a - a) for a in draws)
        got["res"] = decompose(synthesize(u0, w, 2.0), u0, w).residual
        assert got["a"] <= 1e-6
        assert got["res"] <= 1e-8
        with pytest.raises(NegativeCoefficient):
            decompose(synthesize(u0, w, -0.5), u0, w)


def test_09_discrete_maximum_principle(criterion, bundled_run):
    got = {"operators": 0, "pairs": 0, "violations": 0}
    with criterion(9, "M-matrix operators and ordered pairs",
                   lambda: f"experiments={got['operators']} pairs={got['pairs']} violations={got['violations']}"):
        out, _, _ = bundled_run
        for report in sorted(out.glob("*/report.json")):
            data = json.loads(report.read_text())
            assert data["checks"]["m_matrix"]["passed"], report
            got["operators"] += 1
            if "ordered_pairs" in data["reports"]:
                got["pairs"] += data["reports"]["ordered_pairs"]["pairs"]
                got["violations"] += data["reports"]["ordered_pairs"]["violations"]
        assert got["operators"] == 11
        assert got["pairs"] >= 50
        assert got["violations"] == 0


def test_10_floquet(criterion, grid):
    got = {}
    with criterion(10, "time-periodic Floquet rate", lambda: f"err={got.get('err', math.nan):.2e}"):
        spec = make_spec(c="1 + 0.5*sin(2*pi*t)", Lam=2.0, period=1.0)
        res = floquet_principal(spec, grid, dt=DT)
        mean_c = quad(lambda t: 1 + 0.5 * math.sin(2 * math.pi * t), 0.0, 1.0)[0]
        got["err"] = abs(res.mu - (mu_h(H) + mean_c))
        assert got["err"] <= 1e-2


def _observed_orders(errors):
    e = np.asarray(errors)
    return np.log2(e[:-1] / e[1:])


def test_11_convergence_orders(criterion, grid, y):
    got = {}
    with criterion(11, "temporal and spatial convergence orders",
                   lambda: f"time={np.round(got.get('time', []), 3).tolist()} "
                           f"space={np.round(got.get('space', []), 3).tolist()}"):
        spec = make_spec(a="1 + 0.25*sin(y)", c="0.5", lam=0.5, Lam=2.0)

        # time: implicit Euler at four steps against a fine-step reference on the same grid
        u0 = FieldSlice(0.0, y * (math.pi - y))
        ref = evolve(spec, None, grid, u0, CylinderWindow(0.0, 1.0, 1e-4)).at(1.0)
        errs = [np.abs(evolve(spec, None, grid, u0, CylinderWindow(0.0, 1.0, dt)).at(1.0) - ref).max()
                for dt in (0.1, 0.05, 0.025, 0.0125)]
        got["time"] = _observed_orders(errs)

        # space: Crank-Nicolson at small dt against a fine-grid reference, compared at common nodes
        def final(h):
            g = build_grid(SpatialDomain.interval(0.0, math.pi, origin=math.pi / 2), h)
            yy = g.nodes[:, 0]
            tr = evolve(spec, None, g, FieldSlice(0.0, yy * (math.pi - yy)), CylinderWindow(0.0, 1.0, 1e-3),
                        "crank_nicolson")
            return yy, tr.at(1.0)

        y_ref, u_ref = final(math.pi / 320)
        errs = []
        for n in (10, 20, 40, 80):
            yy, u = final(math.pi / n)
            idx = np.rint(yy / (math.pi / 320)).astype(int) - 1
            assert np.allclose(y_ref[idx], yy)
            errs.append(np.abs(u - u_ref[idx]).max())
        got["space"] = _observed_orders(errs)

        assert got["time"].min() >= 0.9
        assert got["space"].min() >= 1.9
