"""Positive eternal solutions of the homogeneous problem.

Three constructions, matched to how the coefficients depend on time:

* ``eigenpair``: autonomous operators, ``w = exp(-r t) phi`` with ``phi`` the
  principal eigenvector of the discrete operator;
* ``floquet``: periodic coefficients, power iteration on the period map;
* ``far_past``: any coefficients, evolve from far back in time with per-step
  renormalisation until the initial seed is forgotten.

When a time step and scheme are given, the eigenpair route uses the exact
per-step factor of that scheme, so its output is an exact eternal solution of
the fully discrete problem and agrees with the other two routes to solver
precision.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .domain import CylinderWindow, Grid
from .errors import NoConvergence, NonPositiveProfile, SeedSensitivity, SignFailure
from .evolution import EvolutionTrace, FieldSlice, Stepper, march
from .operator import CoefficientSpec, SourceSpec, assemble

ROUTES = ("eigenpair", "floquet", "far_past")


def step_factor(eigenvalue: float, dt: float | None, scheme: str | None) -> float:
    """Per-step amplification of an eigenmode under the given time discretisation."""
    if dt is None:
        return math.nan
    if scheme == "implicit_euler":
        return 1.0 / (1.0 + dt * eigenvalue)
    if scheme == "crank_nicolson":
        return (1.0 - dt * eigenvalue / 2) / (1.0 + dt * eigenvalue / 2)
    return math.exp(-dt * eigenvalue)


def discrete_rate(eigenvalue: float, dt: float | None, scheme: str | None) -> float:
    """Decay rate per unit time of an eigenmode, exact for the time discretisation."""
    if dt is None:
        return float(eigenvalue)
    return -math.log(step_factor(eigenvalue, dt, scheme)) / dt


@dataclass(frozen=True, eq=False)
class EternalSolution:
    """Positive solution on the whole time line, normalised at ``(origin_node, t_ref)``.

    ``profile`` holds the eigenvector (eigenpair), the one-period family of
    slices starting at phase 0 (floquet) or the windowed trace (far_past).
    Only the far_past route is restricted to its window.
    """

    grid: Grid
    route: str
    rate: float
    profile: np.ndarray = field(repr=False)
    t_ref: float = 1.0
    scale: float = 1.0
    dt: float | None = None
    scheme: str | None = None
    eigenvalue: float | None = None
    period: float | None = None
    multiplier: float | None = None
    window: tuple | None = None
    rate_series: np.ndarray | None = field(default=None, repr=False)
    diagnostics: dict = field(default_factory=dict, repr=False)

    def _raw(self, t: float) -> np.ndarray:
        if self.route == "eigenpair":
            return self.profile * math.exp(-self.rate * t)
        if self.route == "floquet":
            m = self.profile.shape[0] - 1
            k = math.floor(t / self.period + 1e-12)
            j = int(round((t - k * self.period) / self.dt))
            if j == m:
                k, j = k + 1, 0
            if abs(k * self.period + j * self.dt - t) > 1e-9 * max(1.0, abs(t)):
                raise ValueError(f"t = {t} is not on the time lattice of step {self.dt}")
            return self.multiplier**k * self.profile[j]
        t0, t1 = self.window
        if t < t0 - 1e-12 or t > t1 + 1e-12:
            raise ValueError(f"far_past solution is only known on {self.window}; refusing to extrapolate to t = {t}")
        k = int(round((t - t0) / self.dt))
        if abs(t0 + k * self.dt - t) > 1e-9 * max(1.0, abs(t)):
            raise ValueError(f"t = {t} is not a sample of the far_past window")
        return self.profile[k]

    def values(self, t: float) -> np.ndarray:
        return self.scale * self._raw(t)

    def __call__(self, t: float) -> np.ndarray:
        return self.values(t)

    def trace(self, times) -> EvolutionTrace:
        if isinstance(times, CylinderWindow):
            times = times.times
        times = np.asarray(times, dtype=float)
        vals = np.vstack([self.values(t) for t in times])
        return EvolutionTrace(self.grid, times, vals, self.scheme or "exact", "zero")

    def normalized(self, t_ref: float) -> "EternalSolution":
        """Same solution rescaled to value 1 at ``(origin_node, t_ref)``."""
        raw = self._raw(t_ref)[self.grid.origin_node]
        return replace(self, t_ref=float(t_ref), scale=1.0 / raw)

    def scaled(self, s: float) -> "EternalSolution":
        return replace(self, scale=self.scale * s)

    def header(self) -> dict:
        return {
            "route": self.route,
            "rate": self.rate,
            "eigenvalue": self.eigenvalue,
            "normalization": {"origin_node": self.grid.origin_node, "t_ref": self.t_ref, "value": 1.0},
            "dt": self.dt,
            "scheme": self.scheme,
            "period": self.period,
            "multiplier": self.multiplier,
            "window": list(self.window) if self.window else None,
            "grid": self.grid.metadata(),
            "diagnostics": self.diagnostics,
        }


# ---------------------------------------------------------------- eigenpair


def principal_eigenpair(
    spec: CoefficientSpec,
    grid: Grid,
    tol: float = 1e-11,
    shift: float = 0.0,
    max_iter: int = 100_000,
):
    """Principal eigenpair ``(lambda_1, phi_1)`` of the assembled operator.

    Inverse power iteration on ``A + shift*I`` with a reused sparse LU
    factorisation. The eigenvalue estimate is the Rayleigh quotient; the
    iteration stops once both the eigenvalue increment and the residual
    ``||A phi - lambda phi||_inf`` fall below ``tol * |lambda|``.
    ``phi_1`` is returned positive with value 1 at the origin node.
    """
    if not spec.autonomous:
        raise ValueError("principal_eigenpair needs autonomous coefficients")
    if tol <= 0:
        raise ValueError("tol must be positive")
    A = assemble(spec, grid, 0.0).matrix
    n = A.shape[0]
    lu = spla.splu(sp.csc_matrix(A + shift * sp.identity(n)))
    o = grid.origin_node
    x = np.ones(n)
    lam_prev = math.inf
    for it in range(1, max_iter + 1):
        y = lu.solve(x)
        y /= y[np.argmax(np.abs(y))]
        Ay = A @ y
        lam = float(y @ Ay / (y @ y))
        resid = float(np.abs(Ay - lam * y).max() / np.abs(y).max())
        if abs(lam - lam_prev) <= tol * abs(lam) and resid <= tol * abs(lam):
            break
        lam_prev, x = lam, y
    else:
        raise NoConvergence(f"inverse iteration did not converge in {max_iter} iterations (residual {resid:.3g})")
    if y[o] < 0:
        y = -y
    if np.any(y <= 0):
        raise SignFailure("principal eigenvector changes sign; the discrete operator is not an M-matrix")
    phi = y / y[o]
    return lam, FieldSlice(0.0, phi)


def eigenpair_solution(
    spec: CoefficientSpec,
    grid: Grid,
    dt: float | None = None,
    scheme: str | None = "implicit_euler",
    tol: float = 1e-11,
    t_ref: float = 1.0,
) -> EternalSolution:
    """``w = exp(-r t) phi_1`` with ``r`` matched to ``(dt, scheme)`` if given."""
    lam, phi = principal_eigenpair(spec, grid, tol=tol)
    rate = discrete_rate(lam, dt, scheme if dt is not None else None)
    w = EternalSolution(
        grid, "eigenpair", rate, phi.values, dt=dt, scheme=scheme if dt is not None else None, eigenvalue=lam,
    )
    return w.normalized(t_ref)


# ---------------------------------------------------------------- floquet


@dataclass
class FloquetResult:
    mu: float
    rho: float
    period: float
    dt: float
    scheme: str
    family: np.ndarray = field(repr=False)
    sweeps: int = 0
    grid: Grid | None = field(default=None, repr=False)

    def __iter__(self):
        # unpacks as (mu, family) like the operation's return pair
        yield self.mu
        yield self.family

    def solution(self, t_ref: float = 1.0) -> EternalSolution:
        w = EternalSolution(
            self.grid, "floquet", self.mu, self.family, dt=self.dt, scheme=self.scheme,
            period=self.period, multiplier=self.rho, diagnostics={"sweeps": self.sweeps},
        )
        return w.normalized(t_ref)


def floquet_principal(
    spec: CoefficientSpec,
    grid: Grid,
    period: float | None = None,
    dt: float = 1e-3,
    tol: float = 1e-10,
    scheme: str = "implicit_euler",
    max_sweeps: int = 1000,
) -> FloquetResult:
    """Dominant multiplier of the period map by power iteration.

    Each sweep evolves one period from phase 0 with zero source and
    renormalises to 1 at the origin node. ``mu = -ln(rho) / period``.
    """
    if period is None and spec.period is None:
        raise ValueError("floquet_principal needs a period (pass it or set CoefficientSpec.period)")
    period = float(period if period is not None else spec.period)
    if not period > 0:
        raise ValueError("floquet_principal needs a positive period")
    m = int(round(period / dt))
    if abs(m * dt - period) > 1e-9 * period:
        raise ValueError(f"dt = {dt} does not divide the period {period}")
    stepper = Stepper(spec, None, grid, dt, scheme)
    o = grid.origin_node
    x = np.ones(grid.size)
    for sweep in range(1, max_sweeps + 1):
        y = x
        for _, _, y in march(stepper, x, 0.0, m):
            pass
        if y[o] <= 0:
            raise NonPositiveProfile(f"period map produced a nonpositive origin value {y[o]:.3g}")
        y = y / y[o]
        diff = float(np.abs(y - x).max())
        x = y
        if diff <= tol:
            break
    else:
        raise NoConvergence(f"period-map power iteration did not converge in {max_sweeps} sweeps (last change {diff:.3g})")
    family = np.empty((m + 1, grid.size))
    family[0] = x
    for k, _, u in march(stepper, x, 0.0, m):
        family[k] = u
    if np.any(family <= 0):
        raise NonPositiveProfile("Floquet profile is not strictly positive")
    rho = float(family[m, o])
    return FloquetResult(-math.log(rho) / period, rho, period, dt, scheme, family, sweeps=sweep, grid=grid)


# ---------------------------------------------------------------- far past


def _second_seed(grid: Grid, seed: np.ndarray) -> np.ndarray:
    alt = 1.0 + 0.5 * (grid.lattice[:, 0] - grid.lattice[:, 0].min()) / max(1, np.ptp(grid.lattice[:, 0]))
    if np.allclose(alt / alt[grid.origin_node], seed / seed[grid.origin_node]):
        alt = alt[::-1].copy()
    return alt


def far_past(
    spec: CoefficientSpec,
    grid: Grid,
    window: CylinderWindow,
    seed: FieldSlice | np.ndarray | None = None,
    T_back: float = 20.0,
    scheme: str = "implicit_euler",
    second_seed: np.ndarray | None = None,
    seed_tol: float = 1e-6,
    max_T_back: float = 80.0,
    t_ref: float = 1.0,
    f: SourceSpec | None = None,
) -> EternalSolution:
    """Eternal solution on ``window`` obtained from a seed placed at ``t_start - T_back``.

    The seed and a second, different positive seed are evolved together with
    per-step renormalisation at the origin node; the accumulated log factors
    restore the true amplitudes inside the window. If the two normalised
    traces differ by more than ``seed_tol`` (relative sup norm), ``T_back`` is
    doubled up to ``max_T_back`` before :class:`SeedSensitivity` is raised.
    """
    if f is not None and not SourceSpec.of(f).is_zero:
        raise ValueError("far_past constructs solutions of the homogeneous problem (f = 0)")
    if T_back < window.length:
        raise ValueError(f"T_back = {T_back} is shorter than the window length {window.length}")
    seed_vals = np.ones(grid.size) if seed is None else np.asarray(getattr(seed, "values", seed), dtype=float)
    if seed_vals.shape != (grid.size,) or np.any(seed_vals <= 0):
        raise ValueError("far_past seeds must be strictly positive on every interior node")
    other = _second_seed(grid, seed_vals) if second_seed is None else np.asarray(second_seed, dtype=float)
    if np.any(other <= 0):
        raise ValueError("second seed must be strictly positive")
    if not (window.t_start - 1e-12 <= t_ref <= window.t_end + 1e-12):
        t_ref = window.t_start

    stepper = Stepper(spec, None, grid, window.dt, scheme)
    dt = window.dt
    o = grid.origin_node
    while True:
        nback = int(round(T_back / dt))
        t_begin = window.t_start - nback * dt
        u = np.column_stack([seed_vals / seed_vals[o], other / other[o]])
        logscale = np.zeros(2)
        n_win = window.steps + 1
        prof = np.empty((n_win, grid.size))
        other_prof = np.empty((n_win, grid.size))
        logs = np.empty(n_win)
        factors = np.empty(n_win)
        if nback == 0:
            prof[0], other_prof[0], logs[0], factors[0] = u[:, 0], u[:, 1], 0.0, math.nan
        for k in range(1, nback + window.steps + 1):
            t = t_begin + k * dt
            v = stepper.advance(u, t - dt, step=k)
            fac = v[o].copy()
            if np.any(fac <= 0):
                raise NonPositiveProfile(f"origin value became nonpositive at t = {t}")
            u = v / fac
            logscale += np.log(fac)
            j = k - nback
            if j >= 0:
                prof[j], other_prof[j], logs[j], factors[j] = u[:, 0], u[:, 1], logscale[0], fac[0]
        spread = float(np.abs(prof - other_prof).max() / np.abs(prof).max())
        if spread <= seed_tol:
            break
        if 2 * T_back > max_T_back:
            raise SeedSensitivity(
                f"two seeds differ by {spread:.3g} > {seed_tol} after T_back = {T_back}; "
                "double T_back (or use a larger max_T_back)"
            )
        T_back *= 2

    times = window.times
    kref = int(round((t_ref - window.t_start) / dt))
    values = prof * np.exp(logs - logs[kref])[:, None]
    rates = -np.log(factors[np.isfinite(factors)]) / dt
    tail = rates[-max(1, rates.size // 4):]
    w = EternalSolution(
        grid, "far_past", float(np.mean(tail)), values, t_ref=float(times[kref]), scale=1.0, dt=dt, scheme=scheme,
        window=(window.t_start, window.t_end), rate_series=rates,
        diagnostics={"T_back": T_back, "seed_spread": spread},
    )
    return w
