"""Config-driven experiments, run results and golden-run regression.

``run`` executes one experiment (or every experiment of a suite), writes a
``report.json`` and CSV series per experiment plus a top-level ``run.json``,
and keeps wall-clock data in ``run.meta.json`` so that the JSON reports of two
runs with the same config are byte-identical.
"""

from __future__ import annotations

import json
import math
import threading
import time
import traceback
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
from scipy.integrate import quad

from . import __version__
from .config import ExperimentConfig
from .domain import CylinderWindow
from .errors import ConfigError, EternalLabError, MissingGolden, NegativeCoefficient, NoCauchyDecay
from .eternal import eigenpair_solution, far_past, floquet_principal, principal_eigenpair
from .evolution import FieldSlice, Stepper, evolve, profile_checks, sup_profile
from .expr import Expr, parse_number
from .inhomogeneous import decompose, exhaustion_limit, synthesize
from .io import read_csv, write_json, write_profile, write_series, write_trace
from .operator import assemble, is_m_matrix
from .verify import (
    check_decay_step,
    check_max_principle,
    comparison_constant,
    fit_rates,
    kl_contraction,
    proportionality,
)

EXIT_PASS, EXIT_CHECK, EXIT_CONFIG, EXIT_INTERNAL = 0, 1, 2, 3


@dataclass
class Check:
    name: str
    passed: bool
    value: object = None
    threshold: object = None

    def to_dict(self) -> dict:
        return {"passed": bool(self.passed), "value": self.value, "threshold": self.threshold}


@dataclass
class RunResult:
    """Outcome of one experiment, or of a suite when ``children`` is set."""

    name: str
    kind: str
    checks: list = field(default_factory=list)
    reports: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)
    error: dict | None = None
    children: list = field(default_factory=list)
    wall_time: float = 0.0

    @property
    def passed(self) -> bool:
        if self.error is not None:
            return False
        return all(c.passed for c in self.checks) and all(ch.passed for ch in self.children)

    @property
    def errored(self) -> bool:
        return self.error is not None or any(ch.errored for ch in self.children)

    @property
    def exit_code(self) -> int:
        if self.errored:
            return EXIT_INTERNAL
        return EXIT_PASS if self.passed else EXIT_CHECK

    def failed_checks(self) -> list:
        out = [f"{self.name}.{c.name}" for c in self.checks if not c.passed]
        for ch in self.children:
            out += ch.failed_checks()
        return out

    def to_dict(self) -> dict:
        out = {
            "name": self.name,
            "kind": self.kind,
            "passed": self.passed,
            "checks": {c.name: c.to_dict() for c in self.checks},
            "reports": self.reports,
            "provenance": self.provenance,
        }
        if self.error is not None:
            out["error"] = self.error
        if self.children:
            out["experiments"] = {ch.name: {"passed": ch.passed, "failed": ch.failed_checks(), "error": ch.error} for ch in self.children}
        return out


# ---------------------------------------------------------------- helpers


class _Outputs:
    """Deferred file writers, flushed under a per-directory lock."""

    def __init__(self):
        self.writers = []

    def add(self, fn, *args):
        self.writers.append((fn, args))

    def flush(self, directory: Path):
        for fn, args in self.writers:
            fn(directory / args[0], *args[1:])


def _stride(n: int, target: int = 100) -> int:
    return max(1, (n - 1) // target)


def _m_matrix_check(cfg: ExperimentConfig, spec, grid) -> Check:
    if spec.time_dependence == "periodic":
        times = np.linspace(0.0, spec.period, 9)
    elif spec.time_dependence == "general":
        times = np.linspace(-5.0, 5.0, 11)
    else:
        times = [0.0]
    ok = all(is_m_matrix(assemble(spec, grid, t).matrix) for t in times)
    return Check("m_matrix", ok, len(times), "all sampled operators")


def _monotone_check(name: str, trace, tol: float) -> Check:
    pc = profile_checks(sup_profile(trace), tol=tol)
    return Check(name, pc.strictly_decreasing, len(pc.violations), 0)


def _route(spec, route: str) -> str:
    if route != "auto":
        return route
    return {"autonomous": "eigenpair", "periodic": "floquet"}.get(spec.time_dependence, "far_past")


def _positive_seed(rng, n: int) -> np.ndarray:
    return rng.uniform(0.5, 1.5, n)


def _eternal(cfg: ExperimentConfig, spec, grid, route: str, window, t_ref: float, seed=None):
    route = _route(spec, route)
    if route == "eigenpair":
        return eigenpair_solution(spec, grid, dt=cfg.dt, scheme=cfg.scheme, t_ref=t_ref)
    if route == "floquet":
        period = spec.period if spec.period else cfg.number("period", 1.0)
        return floquet_principal(spec, grid, period=period, dt=cfg.dt, scheme=cfg.scheme).solution(t_ref)
    if route == "far_past":
        if seed is None:
            seed = _positive_seed(cfg.rng("far_past_seed"), grid.size)
        return far_past(spec, grid, window, seed=seed, T_back=cfg.number("T_back", 20.0), scheme=cfg.scheme, t_ref=t_ref)
    raise ConfigError(f"unknown route {route!r}")


def _expr_values(text, grid, t=0.0) -> np.ndarray:
    return Expr(str(text))(grid.nodes, t)


def _time_only_potential_rate(cfg, spec, grid) -> float:
    """Principal eigenvalue without ``c`` plus the period mean of a time-only ``c``."""
    c = spec.c
    if not isinstance(c, Expr) or c.depends_on_y:
        raise ConfigError("oracle 'time_only_potential' needs c to depend on t only")
    frozen = replace(spec, c=Expr("0"), time_dependence="autonomous", period=None)
    lam0, _ = principal_eigenpair(frozen, grid)
    T = spec.period
    mean_c = quad(lambda s: float(c(np.zeros((1, grid.dim)), s)[0]), 0.0, T, limit=200)[0] / T
    return lam0 + mean_c


# ---------------------------------------------------------------- experiments


def exp_eternal(cfg, grid, spec, out):
    window = cfg.window(default=(0.0, 5.0))
    t_ref = cfg.number("t_ref", 1.0)
    w = _eternal(cfg, spec, grid, cfg.param("route", "auto"), window, t_ref)
    tr = w.trace(window)
    checks = [
        Check("positive", bool(tr.values.min() > 0), float(tr.values.min()), "> 0"),
        _monotone_check("monotone", tr, cfg.tol("monotone")),
    ]
    if window.t_start - 1e-12 <= t_ref <= window.t_end + 1e-12:
        err = abs(w(t_ref)[grid.origin_node] - 1.0)
        checks.append(Check("normalization", err <= cfg.tol("normalization"), err, cfg.tol("normalization")))
    reports = {"EternalSolution": w.header()}

    expected = None
    if cfg.param("oracle") == "time_only_potential":
        expected = _time_only_potential_rate(cfg, spec, grid)
    elif cfg.param("expected_rate") is not None:
        expected = cfg.number("expected_rate")
    if expected is not None:
        err = abs(w.rate - expected)
        checks.append(Check("rate", err <= cfg.tol("rate_abs"), {"rate": w.rate, "expected": expected}, cfg.tol("rate_abs")))

    if spec.autonomous and cfg.param("cross_check", True):
        routes = {"eigenpair": None, "floquet": None, "far_past": None}
        for r in routes:
            routes[r] = w if w.route == r else _eternal(cfg, spec, grid, r, window, t_ref)
        pairs = {}
        for a, b in (("eigenpair", "far_past"), ("eigenpair", "floquet"), ("floquet", "far_past")):
            rep = proportionality(routes[a], routes[b], times=window.times, tol=cfg.tol("route_spread"))
            pairs[f"{a}/{b}"] = rep.to_dict()
            checks.append(Check(f"route_agreement_{a}_{b}", rep.passed, rep.spread, cfg.tol("route_spread")))
        reports["ScaleReport"] = pairs
    out.add(write_trace, "trace.csv", tr, _stride(tr.times.size))
    out.add(write_profile, "profile.csv", sup_profile(tr))
    return checks, reports


def exp_rates(cfg, grid, spec, out):
    window = cfg.window(default=(-5.0, 15.0))
    w = _eternal(cfg, spec, grid, cfg.param("route", "auto"), window, cfg.number("t_ref", 1.0))
    tr = w.trace(window)
    prof = sup_profile(tr)
    rr = fit_rates(prof, split=cfg.number("split", 0.0), skip=cfg.number("skip", 0.0), slope_tol=cfg.tol("rate_abs"))
    dr = check_decay_step(tr)
    tol = cfg.tol("rate_abs")
    checks = [
        _monotone_check("monotone", tr, cfg.tol("monotone")),
        Check("bracket", rr.bracket_violations == 0 and rr.secant_violations == 0,
              {"bracket": rr.bracket_violations, "secant": rr.secant_violations}, 0),
        Check("rate_order", rr.passed, {"alpha": rr.alpha, "beta": rr.beta}, "0 < beta <= alpha"),
        Check("delta_positive", dr.passed, dr.delta, "(0, 1)"),
    ]
    for side in ("forward", "backward"):
        s = getattr(rr, f"{side}_slope")
        if s is not None:
            checks.append(Check(f"{side}_slope", abs(s - w.rate) <= tol, {"slope": s, "rate": w.rate}, tol))
    if cfg.param("expected_rate") is not None:
        mu = cfg.number("expected_rate")
        target = 1.0 - math.exp(-mu)
        rel = abs(dr.delta - target) / target
        checks.append(Check("delta", rel <= cfg.tol("delta_rel"), {"delta": dr.delta, "expected": target}, cfg.tol("delta_rel")))
    out.add(write_profile, "profile.csv", prof)
    out.add(write_series, "decay_steps.csv", {"t0": dr.t0, "ratio": dr.ratios})
    return checks, {"RateReport": rr.to_dict(), "DecayReport": dr.to_dict(), "rate": w.rate, "route": w.route}


def exp_comparison(cfg, grid, spec, out):
    window = cfg.window(default=(0.0, 5.0))
    t_ref = cfg.number("t_ref", 1.0)
    seeds = [_positive_seed(cfg.rng(f"seed_{k}"), grid.size) for k in ("u", "v")]
    u, v = (_eternal(cfg, spec, grid, "far_past", window, t_ref, seed=s) for s in seeds)
    tu, tv = u.trace(window), v.trace(window)
    cr = comparison_constant(tu, tv, t_ref=t_ref, t_min=max(0.0, window.t_start))
    pr = proportionality(u, v, times=window.times, tol=cfg.tol("route_spread"))
    checks = [
        Check("C_star", cr.C_star <= 1.0 + cfg.tol("c_star") and cr.passed, cr.C_star, 1.0 + cfg.tol("c_star")),
        Check("global_quotient", cr.global_within_C_star_sq, [cr.global_quotient_min, cr.global_quotient_max], "C*^2"),
        Check("seed_spread", pr.passed, pr.spread, cfg.tol("route_spread")),
        _monotone_check("monotone_u", tu, cfg.tol("monotone")),
        _monotone_check("monotone_v", tv, cfg.tol("monotone")),
    ]
    reports = {"ComparisonReport": cr.to_dict(), "ScaleReport": {"far_past/far_past": pr.to_dict()}}
    if spec.autonomous:
        e = _eternal(cfg, spec, grid, "eigenpair", window, t_ref)
        pe = proportionality(e, u, times=window.times, tol=cfg.tol("route_spread"))
        reports["ScaleReport"]["eigenpair/far_past"] = pe.to_dict()
        checks.append(Check("route_spread", pe.passed, pe.spread, cfg.tol("route_spread")))
    return checks, reports


def exp_contraction(cfg, grid, spec, out):
    j_max = int(cfg.number("j_max", 4))
    J = cfg.number("J", j_max + 6)
    t0 = cfg.number("t0", 0.0)
    horizon = t0 + J + (J - j_max)
    window = CylinderWindow(t0, horizon, cfg.dt)
    u = evolve(spec, None, grid, FieldSlice(t0, _expr_values(cfg.param("initial"), grid)), window, cfg.scheme)
    w = _eternal(cfg, spec, grid, cfg.param("route", "auto"), window, cfg.number("w_t_ref", 0.0))
    kr = kl_contraction(u, w, j_max=j_max, J=t0 + J, tail_tol=cfg.tol("tail"))
    checks = [
        Check("monotone_KL", kr.monotone, None, "K_j down, L_j up"),
        Check("envelope", kr.envelope_violations == 0, kr.envelope_violations, 0),
        Check("tail", not kr.tail_sensitive, kr.tail_change, cfg.tol("tail")),
        Check("contracts", kr.zeta <= 1.0 - kr.margin, kr.zeta, f"<= {1.0 - kr.margin:g}"),
        _monotone_check("monotone", u, cfg.tol("monotone")),
    ]
    if cfg.param("expected_K") is not None:
        K0 = cfg.number("expected_K")
        checks.append(Check("K", abs(kr.K - K0) <= cfg.tol("K_abs"), {"K": kr.K, "expected": K0}, cfg.tol("K_abs")))
    if cfg.param("expected_zeta") is not None:
        z0 = cfg.number("expected_zeta")
        rel = abs(kr.zeta - z0) / z0
        checks.append(Check("zeta", rel <= cfg.tol("zeta_rel"), {"zeta": kr.zeta, "expected": z0}, cfg.tol("zeta_rel")))
    out.add(write_series, "kl.csv", {"j": kr.j, "K_j": kr.K_j, "L_j": kr.L_j})
    return checks, {"ContractionReport": kr.to_dict()}


def exp_max_principle(cfg, grid, spec, out):
    f = cfg.source_spec()
    window = cfg.window(default=(0.0, 2.0))
    npairs = int(cfg.number("pairs", 50))
    rng = cfg.rng("ordered_pairs")
    lo = rng.uniform(-1.0, 1.0, (grid.size, npairs))
    hi = lo + rng.uniform(0.0, 1.0, (grid.size, npairs))
    stepper = Stepper(spec, f, grid, window.dt, cfg.scheme)
    u, v = lo, hi
    worst, bad = -math.inf, 0
    for k in range(1, window.steps + 1):
        t = window.t_start + (k - 1) * window.dt
        u = stepper.advance(u, t, step=k)
        v = stepper.advance(v, t, step=k)
        gap = (u - v) - cfg.tol("order") * np.maximum(np.abs(v), 1.0)
        worst = max(worst, float((u - v).max()))
        bad += int(np.any(gap > 0, axis=0).sum())
    checks = [
        _m_matrix_check(cfg, spec, grid),
        Check("ordered_pairs", bad == 0, {"violations": bad, "max_u_minus_v": worst}, 0),
    ]
    initial = _expr_values(cfg.param("initial", "sin(y1)" if grid.dim == 1 else "sin(y1)*sin(y2)"), grid)
    tr = evolve(spec, f, grid, FieldSlice(window.t_start, initial), window, cfg.scheme)
    mp = check_max_principle(tr, f, cfg.param("scope", "Q_plus"))
    checks.append(Check("max_principle", mp.passed, mp.sup_u_plus, mp.boundary_sup_plus))
    return checks, {"MaxPrincipleReport": mp.to_dict(), "ordered_pairs": {"pairs": npairs, "violations": bad}}


def _exhaust(cfg, grid, spec):
    return exhaustion_limit(
        spec, cfg.source_spec(), grid, [parse_number(v) for v in cfg.param("N_list")],
        cfg.number("W"), cfg.dt, cfg.scheme,
    )


def exp_exhaustion(cfg, grid, spec, out):
    try:
        ex = _exhaust(cfg, grid, spec)
    except NoCauchyDecay as exc:
        return [Check("cauchy", False, str(exc), "geometric decay")], {}
    checks = [
        _m_matrix_check(cfg, spec, grid),
        Check("cauchy", ex.cauchy, ex.d_N, "strictly decreasing"),
        Check("cauchy_ratio", ex.ratio < cfg.tol("cauchy_ratio"), ex.ratio, cfg.tol("cauchy_ratio")),
        Check("uniform_bound", ex.bound_variation <= cfg.tol("bound_var"), ex.bound_variation, cfg.tol("bound_var")),
    ]
    if cfg.param("expected") is not None:
        target = np.vstack([_expr_values(cfg.param("expected"), grid, t) for t in ex.u0.times])
        err = float(np.abs(ex.u0.values - target).max())
        checks.append(Check("u0", err <= cfg.tol("u0_sup"), err, cfg.tol("u0_sup")))
    out.add(write_trace, "u0.csv", ex.u0, _stride(ex.u0.times.size))
    out.add(write_series, "d_N.csv", {"N": ex.N_list[:-1], "d_N": ex.d_N})
    return checks, {"ExhaustionResult": ex.to_dict()}


def exp_decompose(cfg, grid, spec, out):
    ex = _exhaust(cfg, grid, spec)
    u0 = ex.u0
    w = eigenpair_solution(spec, grid, dt=cfg.dt, scheme=cfg.scheme) if spec.autonomous else _eternal(
        cfg, spec, grid, "auto", CylinderWindow(u0.t_start, u0.t_end, cfg.dt), 1.0)
    draws = cfg.rng("a_draws").uniform(0.0, cfg.number("a_max", 10.0), int(cfg.number("draws", 100)))
    errs = [abs(decompose(synthesize(u0, w, a), u0, w).a - a) for a in draws]
    exact = decompose(synthesize(u0, w, 2.0), u0, w, tol=cfg.tol("residual"))
    zero = decompose(u0, u0, w, tol=cfg.tol("residual"))
    try:
        decompose(synthesize(u0, w, cfg.number("negative_a", -0.5)), u0, w)
        raised = False
    except NegativeCoefficient:
        raised = True
    checks = [
        Check("round_trip", max(errs) <= cfg.tol("a_abs"), max(errs), cfg.tol("a_abs")),
        Check("residual", exact.residual <= cfg.tol("residual"), exact.residual, cfg.tol("residual")),
        Check("zero_member", zero.passed and abs(zero.a) <= cfg.tol("a_abs"), zero.a, cfg.tol("a_abs")),
        Check("negative_rejected", raised, raised, True),
    ]
    return checks, {"DecompositionReport": exact.to_dict(), "round_trip_max_error": max(errs), "draws": len(errs)}


EXPERIMENTS = {
    "eternal": exp_eternal,
    "rates": exp_rates,
    "comparison": exp_comparison,
    "contraction": exp_contraction,
    "max_principle": exp_max_principle,
    "exhaustion": exp_exhaustion,
    "decompose": exp_decompose,
}


# ---------------------------------------------------------------- run


def _provenance(cfg: ExperimentConfig, grid=None, spec=None, parent_hash=None) -> dict:
    prov = {"config_hash": cfg.hash, "package_version": __version__, "seed": cfg.seed, "dt": cfg.dt, "scheme": cfg.scheme}
    if parent_hash:
        prov["suite_hash"] = parent_hash
    if grid is not None:
        prov["grid"] = grid.metadata()
    if spec is not None:
        prov["spec"] = spec.describe()
        prov["source"] = str(cfg.source)
    return prov


def _run_one(cfg: ExperimentConfig, directory: Path, lock: threading.Lock, parent_hash=None) -> RunResult:
    start = time.perf_counter()
    out = _Outputs()
    res = RunResult(cfg.name, cfg.kind)
    try:
        grid, spec = cfg.grid(), cfg.spec()
        res.provenance = _provenance(cfg, grid, spec, parent_hash)
        checks, reports = EXPERIMENTS[cfg.kind](cfg, grid, spec, out)
        if not any(c.name == "m_matrix" for c in checks):
            checks.insert(0, _m_matrix_check(cfg, spec, grid))
        res.checks, res.reports = checks, reports
    except ConfigError:
        raise
    except Exception as exc:  # surfaced as an internal error with diagnostics, exit code 3
        res.provenance = res.provenance or _provenance(cfg, parent_hash=parent_hash)
        res.error = {
            "type": type(exc).__name__,
            "message": str(exc),
            "known": isinstance(exc, EternalLabError),
            "step": getattr(exc, "step", None),
            "traceback": traceback.format_exc(limit=6).splitlines()[-6:],
        }
    res.wall_time = time.perf_counter() - start
    with lock:
        sub = directory / cfg.name
        sub.mkdir(parents=True, exist_ok=True)
        out.flush(sub)
        write_json(sub / "report.json", res.to_dict())
    return res


def run(cfg: ExperimentConfig, out_dir, workers: int = 1) -> RunResult:
    """Execute ``cfg`` and write its reports below ``out_dir``."""
    directory = Path(out_dir)
    directory.mkdir(parents=True, exist_ok=True)
    lock = threading.Lock()
    started = datetime.now(timezone.utc).isoformat()
    t0 = time.perf_counter()
    if cfg.kind == "suite":
        top = RunResult(cfg.name, "suite", provenance=_provenance(cfg))
        with ThreadPoolExecutor(max_workers=max(1, int(workers))) as pool:
            top.children = list(pool.map(lambda c: _run_one(c, directory, lock, cfg.hash), cfg.experiments))
    else:
        top = RunResult(cfg.name, "single", provenance=_provenance(cfg))
        top.children = [_run_one(cfg, directory, lock)]
    top.wall_time = time.perf_counter() - t0
    body = top.to_dict()
    body["config"] = cfg.raw
    body["exit_code"] = top.exit_code
    write_json(directory / "run.json", body)
    write_json(directory / "run.meta.json", {
        "started": started,
        "finished": datetime.now(timezone.utc).isoformat(),
        "wall_time": {"total": top.wall_time, **{ch.name: ch.wall_time for ch in top.children}},
    })
    return top


# ---------------------------------------------------------------- regress


@dataclass
class DiffReport:
    structural: list = field(default_factory=list)
    drift: list = field(default_factory=list)

    @property
    def identical(self) -> bool:
        return not self.structural and not self.drift

    def to_dict(self) -> dict:
        return {"identical": self.identical, "structural": self.structural, "drift": self.drift}


_SKIP_FIELDS = ("provenance.package_version",)


def _tolerance(path: str, table: dict) -> float:
    best, best_len = table.get("default", 1e-9), -1
    for key, tol in table.items():
        if (path == key or path.endswith("." + key)) and len(key) > best_len:
            best, best_len = tol, len(key)
    return float(best)


def _close(a: float, b: float, rtol: float) -> bool:
    return abs(a - b) <= rtol * max(abs(a), abs(b)) + 1e-300 or a == b


def _compare(g, f, path: str, where: str, table: dict, diff: DiffReport):
    if path in _SKIP_FIELDS:
        return
    num = (int, float)
    if isinstance(g, dict) and isinstance(f, dict):
        if set(g) != set(f):
            diff.structural.append({"file": where, "field": path, "problem": "keys differ",
                                    "missing": sorted(set(g) - set(f)), "extra": sorted(set(f) - set(g))})
        for k in sorted(set(g) & set(f)):
            _compare(g[k], f[k], f"{path}.{k}" if path else k, where, table, diff)
    elif isinstance(g, list) and isinstance(f, list):
        if len(g) != len(f):
            diff.structural.append({"file": where, "field": path, "problem": f"length {len(g)} != {len(f)}"})
            return
        for i, (a, b) in enumerate(zip(g, f)):
            _compare(a, b, f"{path}[{i}]", where, table, diff)
    elif isinstance(g, num) and isinstance(f, num) and not isinstance(g, bool) and not isinstance(f, bool):
        rtol = _tolerance(path.split("[")[0], table)
        if not _close(float(g), float(f), rtol):
            diff.drift.append({"file": where, "field": path, "golden": g, "fresh": f, "rtol": rtol})
    elif g != f:
        diff.drift.append({"file": where, "field": path, "golden": g, "fresh": f})


def _label(path: str) -> str:
    # report fields are addressed by their type name: reports.DecayReport.delta -> DecayReport.delta
    return path[len("reports."):] if path.startswith("reports.") else path


def regress(golden, fresh, tolerances: dict | None = None) -> DiffReport:
    """Field-wise comparison of two run directories."""
    golden, fresh = Path(golden), Path(fresh)
    for d, what in ((golden, "golden"), (fresh, "fresh")):
        if not (d / "run.json").is_file():
            raise MissingGolden(f"{what} directory {d} has no run.json")
    table = dict(json.loads((golden / "run.json").read_text()).get("config", {}).get("regress_tolerances", {}))
    table.update(tolerances or {})
    diff = DiffReport()
    for gpath in sorted(golden.rglob("*")):
        if not gpath.is_file() or gpath.name.endswith(".meta.json"):
            continue
        rel = gpath.relative_to(golden).as_posix()
        fpath = fresh / rel
        if not fpath.is_file():
            diff.structural.append({"file": rel, "problem": "missing in fresh run"})
            continue
        if gpath.suffix == ".json":
            sub = DiffReport()
            _compare(json.loads(gpath.read_text()), json.loads(fpath.read_text()), "", rel, table, sub)
            for entry in sub.structural + sub.drift:
                if "field" in entry:
                    entry["field"] = _label(entry["field"])
            diff.structural += sub.structural
            diff.drift += sub.drift
        elif gpath.suffix == ".csv":
            gh, grows = read_csv(gpath)
            fh, frows = read_csv(fpath)
            if gh != fh:
                diff.structural.append({"file": rel, "problem": f"header {gh} != {fh}"})
            elif len(grows) != len(frows):
                diff.structural.append({"file": rel, "problem": f"row count {len(grows)} != {len(frows)}"})
            else:
                rtol = _tolerance(Path(rel).stem, table)
                for i, (a, b) in enumerate(zip(grows, frows)):
                    if any(not _close(float(x), float(y), rtol) for x, y in zip(a, b)):
                        diff.drift.append({"file": rel, "field": f"row {i + 1}", "golden": a, "fresh": b, "rtol": rtol})
                        break
    for fpath in sorted(fresh.rglob("*")):
        if fpath.is_file() and not fpath.name.endswith(".meta.json"):
            rel = fpath.relative_to(fresh).as_posix()
            if not (golden / rel).exists():
                diff.structural.append({"file": rel, "problem": "not in golden run"})
    return diff
