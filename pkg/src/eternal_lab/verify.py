"""Measured reports for the decay, rate, comparison and contraction estimates.

Every check is a pure function of stored traces. Ratios between solutions
are taken on interior nodes only, where both solutions are positive; the
lateral boundary carries exact zeros and never enters a quotient.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import nnls

from .errors import HorizonTooShort, NonPositive, NonPositiveProfile, PlateauNotReached, WindowTooShort
from .eternal import EternalSolution
from .evolution import EvolutionTrace, SupProfile, sup_profile
from .operator import SourceSpec, slab_norm, sliding_norm

REL_TOL = 1e-12


def _jsonable(value):
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, (np.floating, float)):
        v = float(value)
        return v if math.isfinite(v) else None
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, np.bool_):
        return bool(value)
    return value


class _Report:
    def to_dict(self) -> dict:
        out = _jsonable(asdict(self))
        out["passed"] = bool(self.passed)
        return out


def _unit_offset(times: np.ndarray, length: float = 1.0) -> int:
    dt = times[1] - times[0]
    n = int(round(length / dt))
    if abs(n * dt - length) > 1e-9 * length:
        raise ValueError(f"time step {dt} does not divide {length}")
    return n


def _sample_index(times: np.ndarray, t: float) -> int:
    k = int(round((t - times[0]) / (times[1] - times[0])))
    if not 0 <= k < times.size or abs(times[k] - t) > 1e-9 * max(1.0, abs(t)):
        raise KeyError(f"t = {t} is not a sample time")
    return k


def _values_on(w, times: np.ndarray) -> np.ndarray:
    if isinstance(w, EternalSolution):
        return w.trace(times).values
    if isinstance(w, EvolutionTrace):
        idx = [_sample_index(w.times, t) for t in times]
        return w.values[idx]
    raise TypeError(f"expected an EvolutionTrace or EternalSolution, got {type(w).__name__}")


# ---------------------------------------------------------------- decay step


@dataclass
class DecayReport(_Report):
    """One-unit decay of the sup-profile.

    ``affine_coefficient`` is the fitted constant in front of the slab norm of
    ``f``; it stands in for ``(1 - delta) / eps0`` as a single number.
    """

    t0: list
    ratios: list
    delta: float
    slab_f_norms: list
    affine_coefficient: float = 0.0
    skipped: list = field(default_factory=list)
    homogeneous: bool = True

    @property
    def passed(self) -> bool:
        if not self.t0:
            return True
        return 0.0 < self.delta < 1.0


def check_decay_step(trace: EvolutionTrace, f: SourceSpec | None = None) -> DecayReport:
    """Measure ``u_hat(t0+1) <= (1-delta) u_hat(t0) + B ||f||_(t0, t0+2)`` at integer ``t0``."""
    if trace.t_end - trace.t_start < 3.0 - 1e-9:
        raise WindowTooShort(f"decay-step check needs a trace spanning >= 3, got {trace.t_end - trace.t_start:.6g}")
    f = SourceSpec.of(f)
    prof = sup_profile(trace)
    dt = trace.dt
    t0s, nows, nexts, norms, skipped = [], [], [], [], []
    for t0 in range(math.ceil(trace.t_start - 1e-9), math.floor(trace.t_end + 1e-9)):
        try:
            k0, k1 = _sample_index(prof.times, t0), _sample_index(prof.times, t0 + 1)
        except KeyError:
            continue
        now, nxt = prof.values[k0], prof.values[k1]
        if f.is_zero and now <= 0:
            skipped.append(float(t0))
            continue
        t0s.append(float(t0))
        nows.append(now)
        nexts.append(nxt)
        norms.append(0.0 if f.is_zero else slab_norm(f, (t0, t0 + 2.0), trace.grid, dt))
    nows, nexts, norms = map(np.asarray, (nows, nexts, norms))
    ratios = np.divide(nexts, nows, out=np.full(nows.shape, np.inf), where=nows > 0)
    if f.is_zero:
        delta = 1.0 - float(ratios.max()) if ratios.size else 0.0
        coef = 0.0
    else:
        # least-squares affine fit, then lift the source coefficient so the bound holds everywhere
        (A, B), _ = nnls(np.column_stack([nows, norms]), nexts)
        slack = nexts - A * nows
        if np.any(norms > 0):
            B = max(B, float(np.max(np.divide(slack, norms, out=np.zeros_like(slack), where=norms > 0))))
        delta, coef = 1.0 - float(A), float(B)
    return DecayReport(
        t0=t0s, ratios=ratios.tolist(), delta=float(delta), slab_f_norms=norms.tolist(),
        affine_coefficient=coef, skipped=skipped, homogeneous=f.is_zero,
    )


# ---------------------------------------------------------------- maximum principle


@dataclass
class MaxPrincipleReport(_Report):
    scope: str
    sup_u_plus: float
    boundary_sup_plus: float
    f_norm: float
    empirical_C: float | None

    @property
    def passed(self) -> bool:
        if self.f_norm > 0:
            return self.empirical_C is not None and math.isfinite(self.empirical_C)
        return self.sup_u_plus <= self.boundary_sup_plus * (1 + REL_TOL) + REL_TOL * max(1.0, self.boundary_sup_plus)


def check_max_principle(trace: EvolutionTrace, f: SourceSpec | None = None, scope: str = "Q_plus") -> MaxPrincipleReport:
    """``sup u+`` against the parabolic-boundary data and the sliding norm of ``f``.

    ``scope="Q_plus"`` treats the first slice as bottom data; ``"full_Q"``
    treats the trace as a surrogate for the whole cylinder, whose boundary
    data is zero.
    """
    if scope not in ("Q_plus", "full_Q"):
        raise ValueError(f"scope must be 'Q_plus' or 'full_Q', got {scope!r}")
    if not np.all(np.isfinite(trace.values)):
        raise ValueError("trace is not bounded (non-finite values)")
    f = SourceSpec.of(f)
    sup_plus = float(max(trace.values.max(), 0.0))
    bsup = float(max(trace.values[0].max(), 0.0)) if scope == "Q_plus" else 0.0
    t1 = max(trace.t_end, trace.t_start + 2.0)
    fn = 0.0 if f.is_zero else sliding_norm(f, (trace.t_start, t1), trace.grid, trace.dt)
    C = (sup_plus - bsup) / fn if fn > 0 else None
    return MaxPrincipleReport(scope, sup_plus, bsup, fn, C)


# ---------------------------------------------------------------- decay on Q+


@dataclass
class QPlusReport(_Report):
    C0: float
    alpha: float
    C1: float
    floor: float
    u_hat_0: float
    f_norm: float
    fit_window: tuple
    fit_residual: float

    @property
    def passed(self) -> bool:
        return all(math.isfinite(x) for x in (self.C0, self.alpha, self.C1)) and self.alpha >= 0


def _aitken_floor(x1: float, x2: float, x3: float) -> float:
    """Constant term of ``F + A r^k`` through three equally spaced samples."""
    den = x1 + x3 - 2 * x2
    if abs(den) <= 1e-14 * max(abs(x1), abs(x3), 1e-300):
        return x3
    return (x1 * x3 - x2 * x2) / den


def check_decay_qplus(
    trace: EvolutionTrace,
    f: SourceSpec | None = None,
    skip: float = 1.0,
    plateau_tol: float = 1e-2,
) -> QPlusReport:
    """Fit ``u_hat(t) <= C0 u_hat(t0) exp(-alpha (t - t0)) + C1 ||f||``.

    The floor ``C1 ||f||`` comes from an Aitken extrapolation of three samples
    in the last quarter; the excess ``|u_hat - floor|`` is then fitted
    log-linearly on ``[t0 + skip, ...)``. ``PlateauNotReached`` is raised when
    the excess at the end of the trace is not below ``plateau_tol`` times the
    excess at the start of the fit.
    """
    f = SourceSpec.of(f)
    prof = sup_profile(trace)
    t, v = prof.times, prof.values
    t0 = float(t[0])
    u0 = float(v[0])
    fn = 0.0 if f.is_zero else sliding_norm(f, (t0, max(trace.t_end, t0 + 2.0)), trace.grid, trace.dt)
    if float(np.abs(v).max()) == 0.0:
        return QPlusReport(0.0, 0.0, 0.0, 0.0, 0.0, fn, (t0, float(t[-1])), 0.0)
    n = t.size
    q = (n - 1) // 8
    if q < 1 or t[-1] - t0 <= skip:
        raise PlateauNotReached("trace too short to separate the transient from the floor")
    floor = max(_aitken_floor(v[n - 1 - 2 * q], v[n - 1 - q], v[n - 1]), 0.0)
    excess = np.abs(v - floor)
    i0 = int(np.searchsorted(t, t0 + skip - 1e-12))
    e0 = excess[i0]
    if e0 == 0.0:
        alpha, resid, fit_end = 0.0, 0.0, float(t[i0])
    else:
        if excess[-1] > plateau_tol * e0:
            raise PlateauNotReached(
                f"excess over the floor only fell to {excess[-1] / e0:.3g} of its initial size; extend the trace"
            )
        # stop before the excess sinks into rounding of the floor
        keep = np.flatnonzero(excess[i0:] > max(1e-9 * e0, 1e-12 * max(floor, 1e-300)))
        last = i0 + (keep[-1] if keep.size else 0)
        last = min(last, i0 + int(0.75 * (n - 1 - i0)))
        sl = slice(i0, last + 1)
        coef, res, *_ = np.polyfit(t[sl], np.log(excess[sl]), 1, full=True)
        alpha = float(-coef[0])
        resid = float(np.sqrt(res[0] / (last + 1 - i0))) if res.size else 0.0
        fit_end = float(t[last])
    env = np.exp(-alpha * (t - t0))
    over = np.maximum(v - floor, 0.0)
    if u0 > 0:
        C0 = float(np.max(over / (u0 * env)))
    else:
        C0 = 0.0 if float(over.max()) <= 1e-12 * max(floor, 1.0) else math.inf
    C1 = floor / fn if fn > 0 else 0.0
    return QPlusReport(C0, alpha, float(C1), float(floor), u0, fn, (float(t[i0]), fit_end), resid)


# ---------------------------------------------------------------- rates


@dataclass
class RateReport(_Report):
    """One-step constants, the rates they imply and log-linear fits.

    ``alpha = ln(1+theta)`` and ``beta = ln(1+eta)`` bound every unit-step
    secant slope of ``ln u_hat``; ``C = 1/(1+eta)``, ``C_prime = 1+theta``
    close the two-sided exponential bracket around ``u_hat(t_ref)``.
    """

    theta: float
    eta: float
    alpha: float
    beta: float
    C: float
    C_prime: float
    t_ref: float
    forward_slope: float | None
    backward_slope: float | None
    forward_residual: float | None
    backward_residual: float | None
    bracket_violations: int
    secant_violations: int
    one_sided: bool
    slope_tol: float = 1e-2

    @property
    def slopes_in_bracket(self) -> bool:
        ok = True
        for s in (self.forward_slope, self.backward_slope):
            if s is not None:
                ok &= self.beta - self.slope_tol <= s <= self.alpha + self.slope_tol
        return ok

    @property
    def passed(self) -> bool:
        return 0 < self.beta <= self.alpha * (1 + 1e-12) and self.bracket_violations == 0 and self.secant_violations == 0

    def to_dict(self) -> dict:
        out = super().to_dict()
        out["slopes_in_bracket"] = bool(self.slopes_in_bracket)
        return out


def _loglinear(t: np.ndarray, y: np.ndarray):
    if t.size < 2:
        return None, None
    coef, res, *_ = np.polyfit(t, np.log(y), 1, full=True)
    return float(coef[0]), float(np.sqrt(res[0] / t.size)) if res.size else 0.0


def fit_rates(profile: SupProfile, split: float = 0.0, skip: float = 0.0, slope_tol: float = 1e-2) -> RateReport:
    """Rates of the sup-profile on both sides of ``split``.

    ``theta`` and ``eta`` are the extreme one-unit growth and decay factors
    over all sample pairs ``(t, t+1)``; ``skip`` drops that much time after
    the first sample from the least-squares fits.
    """
    t, v = np.asarray(profile.times, float), np.asarray(profile.values, float)
    if np.any(v <= 0):
        raise NonPositiveProfile("rates need a strictly positive profile")
    if t.size < 2 or t[-1] - t[0] < 1.0 - 1e-9:
        raise WindowTooShort("rate fits need a profile spanning at least one time unit")
    m = _unit_offset(t)
    back = v[:-m] / v[m:]          # u_hat(t-1)/u_hat(t) for t = t[m:]
    theta = float(back.max() - 1.0)
    eta = float(back.min() - 1.0)
    if eta <= 0:
        # the profile does not decay over some unit step; the rate bracket is empty
        beta = math.log1p(eta) if eta > -1 else -math.inf
    else:
        beta = math.log1p(eta)
    alpha = math.log1p(theta)
    C, Cp = 1.0 / (1.0 + eta), 1.0 + theta

    one_sided = not (t[0] < split < t[-1])
    t_ref = split if not one_sided else (t[0] if abs(t[0] - split) <= abs(t[-1] - split) else t[-1])
    kref = int(np.argmin(np.abs(t - t_ref)))
    t_ref, u_ref = float(t[kref]), float(v[kref])
    s = np.abs(t - t_ref)
    past = t < t_ref
    lower = np.where(past, C * u_ref * np.exp(beta * s), u_ref * np.exp(-alpha * s) / Cp)
    upper = np.where(past, Cp * u_ref * np.exp(alpha * s), u_ref * np.exp(-beta * s) / C)
    tol = 1e-10 * v
    bracket_violations = int(np.sum((v < lower - tol) | (v > upper + tol)))
    secant = np.log(back)
    secant_violations = int(np.sum((secant < beta - 1e-12) | (secant > alpha + 1e-12)))

    fit_from = t[0] + skip - 1e-12
    fwd = (t > t_ref) & (t >= fit_from)
    bwd = (t < t_ref) & (t >= fit_from)
    fs, fr = _loglinear(t[fwd], v[fwd])
    bs, br = _loglinear(t[bwd], v[bwd])
    return RateReport(
        theta=theta, eta=eta, alpha=alpha, beta=beta, C=C, C_prime=Cp, t_ref=t_ref,
        forward_slope=None if fs is None else -fs, backward_slope=None if bs is None else -bs,
        forward_residual=fr, backward_residual=br,
        bracket_violations=bracket_violations, secant_violations=secant_violations,
        one_sided=one_sided, slope_tol=slope_tol,
    )


# ---------------------------------------------------------------- comparison


@dataclass
class ComparisonReport(_Report):
    C_star: float
    t_min: float
    t_ref: float
    global_quotient_min: float
    global_quotient_max: float
    global_within_C_star_sq: bool
    harnack_C: float | None

    @property
    def passed(self) -> bool:
        return math.isfinite(self.C_star) and self.C_star >= 1.0 - 1e-12


def comparison_constant(u: EvolutionTrace, v: EvolutionTrace, t_ref: float = 1.0, t_min: float = 0.0) -> ComparisonReport:
    """Two-sided comparison constant of two positive solutions.

    Both traces are rescaled to 1 at ``(origin_node, t_ref)``. ``C_star``
    is taken over samples with ``t >= t_min``; the global quotient uses the
    whole window. ``harnack_C`` is the largest ``sup u / u(origin, t0)``
    over slabs ``(t0 - 2, t0 + 2)`` that fit in the window.
    """
    if u.grid is not v.grid and u.grid.size != v.grid.size:
        raise ValueError("traces live on different grids")
    times = u.times
    vv = _values_on(v, times)
    uu = u.values
    if np.any(uu <= 0) or np.any(vv <= 0):
        raise NonPositive("comparison needs strictly positive solutions on interior nodes")
    o = u.grid.origin_node
    k = _sample_index(times, t_ref)
    un, vn = uu / uu[k, o], vv / vv[k, o]
    r = un / vn
    late = times >= t_min - 1e-12
    if not np.any(late):
        raise WindowTooShort(f"no samples with t >= {t_min}")
    C_star = float(max(r[late].max(), (1.0 / r[late]).max()))
    qmin, qmax = float(r.min()), float(r.max())
    within = qmax <= C_star**2 * (1 + REL_TOL) and qmin >= 1.0 / C_star**2 * (1 - REL_TOL)

    harnack = None
    m2 = _unit_offset(times, 2.0)
    if times.size > 2 * m2:
        vals = []
        for c in range(m2, times.size - m2):
            if abs(times[c] - round(times[c])) > 1e-9:
                continue
            vals.append(un[c - m2 : c + m2 + 1].max() / un[c, o])
        harnack = float(max(vals)) if vals else None
    return ComparisonReport(C_star, t_min, float(times[k]), qmin, qmax, bool(within), harnack)


# ---------------------------------------------------------------- K_j / L_j


@dataclass
class ContractionReport(_Report):
    j: list
    K_j: list
    L_j: list
    K: float
    zeta: float
    gaps: list
    J: float
    envelope_violations: int
    envelope_constant: float
    monotone: bool
    tail_change: float | None
    tail_sensitive: bool | None
    margin: float = 1e-2

    @property
    def passed(self) -> bool:
        contracting = self.zeta <= 1.0 - self.margin
        return self.monotone and self.envelope_violations == 0 and not self.tail_sensitive and contracting


def _kl_series(r: np.ndarray, times: np.ndarray, js, J: float):
    K, L = [], []
    for j in js:
        sel = (times >= j - 1e-12) & (times <= J + 1e-12)
        K.append(float(r[sel].max()))
        L.append(float(r[sel].min()))
    return np.array(K), np.array(L)


def kl_contraction(
    u: EvolutionTrace,
    w,
    j_max: int = 4,
    J: float | None = None,
    tail_tol: float = 1e-2,
    margin: float = 1e-2,
) -> ContractionReport:
    """Nested sup/inf bounds of ``u / w`` over tail cylinders ``(j, J)``.

    ``u`` is a positive trace starting at ``t = t0``; ``w`` is an eternal
    solution (or a trace covering the same samples). ``J`` defaults to
    ``j_max + 6``. When the trace reaches ``J + (J - j_max)`` the tails are
    doubled and a relative change in any ``K_j`` above ``tail_tol`` flags
    the run. The gaps must shrink by at least ``margin`` per unit
    (``zeta <= 1 - margin``) for the run to pass.
    """
    J = float(j_max + 6 if J is None else J)
    t0 = u.t_start
    if J < t0 + j_max + 2 - 1e-9:
        raise HorizonTooShort(f"horizon J = {J} must be at least j_max + 2 = {t0 + j_max + 2}")
    if u.t_end < J - 1e-9:
        raise HorizonTooShort(f"trace ends at {u.t_end} before the horizon J = {J}")
    times = u.times
    wv = _values_on(w, times)
    if np.any(u.values <= 0) or np.any(wv <= 0):
        raise NonPositive("contraction needs strictly positive u and w on interior nodes")
    r = u.values / wv
    js = [t0 + i for i in range(int(math.floor(J - t0 + 1e-9)))]
    K_j, L_j = _kl_series(r, times, js, J)
    monotone = bool(np.all(np.diff(K_j) <= 1e-12 * np.abs(K_j[1:])) and np.all(np.diff(L_j) >= -1e-12 * np.abs(L_j[1:])) and np.all(L_j <= K_j))
    gaps = K_j - L_j
    K = 0.5 * (K_j[j_max] + L_j[j_max])

    # per-unit contraction from successive gaps after the first unit
    sel = [i for i in range(1, j_max + 1) if gaps[i] > 1e-14 * max(1.0, abs(K))]
    if len(sel) >= 2:
        slope = np.polyfit(np.array(sel, float), np.log(gaps[sel]), 1)[0]
        zeta = float(np.exp(slope))
    else:
        # gaps already at rounding level
        zeta = 0.0

    # |u - K w| <= (K_[t] - L_[t]) w on [t0, J)
    in_range = times < J - 1e-12
    idx = np.clip(np.floor(times[in_range] - t0 + 1e-9).astype(int), 0, len(js) - 1)
    lhs = np.abs(u.values[in_range] - K * wv[in_range])
    rhs = gaps[idx][:, None] * wv[in_range]
    slack = 1e-12 * np.maximum(np.abs(u.values[in_range]), 1e-300)
    violations = int(np.sum(lhs > rhs + slack))

    # |u - Kw| <= C e^{-alpha t} w with alpha from zeta
    if zeta > 0 and np.any(gaps > 0):
        a = -math.log(zeta)
        env_const = float(np.max(lhs / (wv[in_range] * np.exp(-a * (times[in_range] - t0))[:, None])))
    else:
        env_const = float(np.max(lhs / wv[in_range]))

    tail_change = tail_sensitive = None
    J2 = J + (J - j_max - t0)
    if u.t_end >= J2 - 1e-9:
        K2, L2 = _kl_series(r, times, js[: j_max + 1], J2)
        tail_change = float(max(np.max(np.abs(K2 - K_j[: j_max + 1]) / np.abs(K_j[: j_max + 1])),
                                np.max(np.abs(L2 - L_j[: j_max + 1]) / np.abs(L_j[: j_max + 1]))))
        tail_sensitive = tail_change > tail_tol
    return ContractionReport(
        j=[float(x) for x in js], K_j=K_j.tolist(), L_j=L_j.tolist(), K=float(K), zeta=zeta, gaps=gaps.tolist(),
        J=J, envelope_violations=violations, envelope_constant=env_const, monotone=monotone,
        tail_change=tail_change, tail_sensitive=tail_sensitive, margin=margin,
    )


# ---------------------------------------------------------------- proportionality


@dataclass
class ScaleReport(_Report):
    K: float
    spread: float
    ratio_min: float
    ratio_max: float
    tol: float = 1e-6

    @property
    def passed(self) -> bool:
        return self.spread <= self.tol


def proportionality(u, v, times=None, tol: float = 1e-6) -> ScaleReport:
    """Ratio field ``u / v`` over all nodes and shared samples; ``K`` is its mean."""
    if times is None:
        for x in (u, v):
            if isinstance(x, EvolutionTrace):
                times = x.times
                break
            if isinstance(x, EternalSolution) and x.window is not None:
                times = _window_times(x)
                break
        if times is None:
            raise ValueError("pass sample times when neither input carries a window")
    times = np.asarray(times, float)
    uu, vv = _values_on(u, times), _values_on(v, times)
    if np.any(uu <= 0) or np.any(vv <= 0):
        raise NonPositive("proportionality needs strictly positive solutions")
    r = uu / vv
    K = float(r.mean())
    return ScaleReport(K, float((r.max() - r.min()) / K), float(r.min()), float(r.max()), tol)


def _window_times(w: EternalSolution) -> np.ndarray:
    t0, t1 = w.window
    n = int(round((t1 - t0) / w.dt))
    return t0 + w.dt * np.arange(n + 1)
