"""Implicit time stepping on truncated cylinders and the sup-profile.

Zero lateral data is structural: only interior nodes are unknowns. 1D
systems are tridiagonal and solved directly; 2D systems use BiCGSTAB with an
incomplete-LU preconditioner.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .domain import CylinderWindow, Grid
from .errors import NotHomogeneous, SolveFailed
from .expr import evaluate
from .operator import CoefficientSpec, SourceSpec, assemble

SCHEMES = ("implicit_euler", "crank_nicolson")
SOLVE_RTOL = 1e-12
MAX_ITER = 10_000


@dataclass(frozen=True)
class FieldSlice:
    t: float
    values: np.ndarray

    def __post_init__(self):
        if not np.all(np.isfinite(self.values)):
            raise ValueError(f"non-finite values in slice at t = {self.t}")


@dataclass(frozen=True, eq=False)
class EvolutionTrace:
    """Uniformly spaced slices ``values[k] ~ u(., times[k])`` on one grid."""

    grid: Grid
    times: np.ndarray
    values: np.ndarray
    scheme: str = "implicit_euler"
    source_tag: str = "zero"

    def __post_init__(self):
        if self.values.shape != (self.times.size, self.grid.size):
            raise ValueError(f"values shape {self.values.shape} does not match {self.times.size} x {self.grid.size}")
        if self.times.size > 1:
            steps = np.diff(self.times)
            if np.any(steps <= 0) or np.ptp(steps) > 1e-9 * steps[0]:
                raise ValueError("trace times must be strictly increasing and uniform")

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0]) if self.times.size > 1 else float("nan")

    @property
    def homogeneous(self) -> bool:
        return self.source_tag == "zero"

    @property
    def t_start(self) -> float:
        return float(self.times[0])

    @property
    def t_end(self) -> float:
        return float(self.times[-1])

    def index(self, t: float) -> int:
        """Index of the sample at time ``t`` (must be on the time lattice)."""
        k = int(round((t - self.times[0]) / self.dt)) if self.times.size > 1 else 0
        if not 0 <= k < self.times.size or abs(self.times[k] - t) > 1e-9 * max(1.0, abs(t)):
            raise KeyError(f"t = {t} is not a sample of this trace ({self.t_start}..{self.t_end})")
        return k

    def at(self, t: float) -> np.ndarray:
        return self.values[self.index(t)]

    def slice(self, t: float) -> FieldSlice:
        return FieldSlice(float(t), self.at(t).copy())

    def window(self, t0: float, t1: float) -> "EvolutionTrace":
        i, j = self.index(t0), self.index(t1)
        return EvolutionTrace(self.grid, self.times[i : j + 1], self.values[i : j + 1], self.scheme, self.source_tag)

    def scaled(self, s: float) -> "EvolutionTrace":
        return EvolutionTrace(self.grid, self.times, s * self.values, self.scheme, self.source_tag)

    def normalized(self, t_ref: float = 1.0) -> "EvolutionTrace":
        """Rescale so the value at ``(origin_node, t_ref)`` is 1."""
        return self.scaled(1.0 / self.at(t_ref)[self.grid.origin_node])

    def _combine(self, other: "EvolutionTrace", sign: float) -> "EvolutionTrace":
        if other.grid is not self.grid or other.times.shape != self.times.shape or not np.allclose(other.times, self.times):
            raise ValueError("traces live on different grids or time samples")
        tag = self.source_tag if other.homogeneous else (other.source_tag if self.homogeneous else f"{self.source_tag}{'+' if sign > 0 else '-'}{other.source_tag}")
        return EvolutionTrace(self.grid, self.times, self.values + sign * other.values, self.scheme, tag)

    def __add__(self, other):
        return self._combine(other, 1.0)

    def __sub__(self, other):
        return self._combine(other, -1.0)


# ---------------------------------------------------------------- stepping


class Stepper:
    """Reusable one-step map for a fixed spec, source, grid, dt and scheme.

    Operators (and their factorisations) are cached when the coefficients are
    autonomous. ``advance`` accepts a vector or an ``(N, k)`` block of
    columns evolved together.
    """

    def __init__(self, spec: CoefficientSpec, f: SourceSpec | None, grid: Grid, dt: float, scheme: str = "implicit_euler"):
        if not dt > 0:
            raise ValueError(f"dt must be positive, got {dt}")
        if scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}, got {scheme!r}")
        self.spec = spec
        self.f = SourceSpec.of(f)
        self.grid = grid
        self.dt = float(dt)
        self.scheme = scheme
        self._op_cache = None
        self._solver_cache = None
        self._system_cache = None
        self._identity = sp.identity(grid.size, format="csr")
        # when only c depends on t, reuse the c = 0 system and shift its diagonal
        fields = [x for row in spec.a for x in row] + list(spec.b)
        self._potential_only = not spec.autonomous and not any(getattr(x, "depends_on_t", True) for x in fields)
        self._base = None

    def operator(self, t: float):
        if self.spec.autonomous:
            if self._op_cache is None:
                self._op_cache = assemble(self.spec, self.grid, 0.0)
            return self._op_cache
        return assemble(self.spec, self.grid, t)

    def _source(self, t: float) -> np.ndarray:
        return self.f.values(self.grid.nodes, t)

    def _system(self, t: float):
        """Left-hand matrix, the explicit right-hand operator and the source time."""
        if self.spec.autonomous and self._system_cache is not None:
            lhs, explicit = self._system_cache
            return lhs, explicit, t + (self.dt if self.scheme == "implicit_euler" else self.dt / 2)
        dt = self.dt
        if self._potential_only:
            return self._shifted_system(t)
        if self.scheme == "implicit_euler":
            lhs = (self._identity + dt * self.operator(t + dt).matrix).tocsr()
            explicit, t_src = None, t + dt
        else:
            lhs = (self._identity + (dt / 2) * self.operator(t + dt).matrix).tocsr()
            explicit, t_src = (self._identity - (dt / 2) * self.operator(t).matrix).tocsr(), t + dt / 2
        if self.spec.autonomous:
            self._system_cache = (lhs, explicit)
        return lhs, explicit, t_src

    def _shifted_system(self, t: float):
        dt = self.dt
        if self._base is None:
            A0 = assemble(self.spec.with_c("0"), self.grid, 0.0).matrix
            half = dt if self.scheme == "implicit_euler" else dt / 2
            lhs0 = (self._identity + half * A0).tocsr()
            exp0 = None if self.scheme == "implicit_euler" else (self._identity - half * A0).tocsr()
            for m in (lhs0, exp0):
                if m is not None:
                    m.sort_indices()
            pos = _diagonal_positions(lhs0)
            self._base = (lhs0, exp0, pos, _diagonal_positions(exp0) if exp0 is not None else None, half)
        lhs0, exp0, pos, epos, half = self._base
        c_new = evaluate(self.spec.c, self.grid.nodes, t + dt)
        lhs = lhs0.copy()
        lhs.data[pos] += half * c_new
        if exp0 is None:
            return lhs, None, t + dt
        explicit = exp0.copy()
        explicit.data[epos] -= half * evaluate(self.spec.c, self.grid.nodes, t)
        return lhs, explicit, t + dt / 2

    def _lhs_max(self, lhs) -> float:
        if self.spec.autonomous and getattr(self, "_lhs_max_cache", None) is not None:
            return self._lhs_max_cache
        value = float(np.abs(lhs.data).max(initial=0.0))
        if self.spec.autonomous:
            self._lhs_max_cache = value
        return value

    def _solve(self, lhs, rhs, step=None):
        cacheable = self.spec.autonomous
        if self.grid.dim == 1:
            if cacheable and self._solver_cache is not None:
                ab = self._solver_cache
            else:
                n = lhs.shape[0]
                ab = np.zeros((3, n))
                ab[0, 1:] = lhs.diagonal(1)
                ab[1, :] = lhs.diagonal(0)
                ab[2, :-1] = lhs.diagonal(-1)
                if cacheable:
                    self._solver_cache = ab
            try:
                x = scipy.linalg.solve_banded((1, 1), ab, rhs, check_finite=False)
            except np.linalg.LinAlgError as exc:
                raise SolveFailed(f"tridiagonal solve failed: {exc}", step) from None
        else:
            if cacheable and self._solver_cache is not None:
                precond = self._solver_cache
            else:
                lhs = sp.csc_matrix(lhs)
                ilu = spla.spilu(lhs, drop_tol=1e-6, fill_factor=20)
                precond = spla.LinearOperator(lhs.shape, ilu.solve)
                if cacheable:
                    self._solver_cache = precond
            cols = rhs.reshape(rhs.shape[0], -1)
            out = np.empty_like(cols)
            for j in range(cols.shape[1]):
                b = cols[:, j]
                if not np.any(b):
                    out[:, j] = 0.0
                    continue
                x, info = spla.bicgstab(lhs, b, rtol=SOLVE_RTOL, atol=0.0, maxiter=MAX_ITER, M=precond)
                if info != 0:
                    raise SolveFailed(f"BiCGSTAB did not converge (info={info})", step)
                out[:, j] = x
            x = out.reshape(rhs.shape)
        _check_residual(lhs, x, rhs, step, direct=self.grid.dim == 1, lhs_max=self._lhs_max(lhs))
        return x

    def advance(self, u: np.ndarray, t: float, step: int | None = None) -> np.ndarray:
        """Return the solution at ``t + dt`` given ``u`` at ``t``."""
        lhs, explicit, t_src = self._system(t)
        rhs = u if explicit is None else explicit @ u
        if not self.f.is_zero:
            src = self.dt * self._source(t_src)
            rhs = rhs + (src[:, None] if rhs.ndim == 2 else src)
        return self._solve(lhs, rhs, step)


def _diagonal_positions(m) -> np.ndarray:
    """Index into ``m.data`` of each diagonal entry of a CSR matrix with a full diagonal."""
    rows = np.repeat(np.arange(m.shape[0]), np.diff(m.indptr))
    pos = np.flatnonzero(m.indices == rows)
    if pos.size != m.shape[0]:
        raise ValueError("matrix lacks a full stored diagonal")
    return pos


# residuals this small sit in the subnormal range where relative accuracy is lost
_SUBNORMAL_FLOOR = np.finfo(float).tiny / np.finfo(float).eps


def _check_residual(lhs, x, rhs, step, direct: bool, lhs_max: float | None = None) -> None:
    r = lhs @ x - rhs
    if np.abs(r).max(initial=0.0) <= _SUBNORMAL_FLOOR:
        return
    if direct:
        # normwise backward error of a direct solve
        if lhs_max is None:
            lhs_max = float(np.abs(lhs.data).max(initial=0.0))
        scale = lhs_max * np.abs(x).max(initial=0.0) + np.abs(rhs).max(initial=0.0)
        err = np.abs(r).max(initial=0.0) / scale if scale > 0 else 0.0
        limit = SOLVE_RTOL
    else:
        bn = np.linalg.norm(rhs, axis=0)
        err = float(np.max(np.linalg.norm(r, axis=0) / np.where(bn > 0, bn, 1.0)))
        # BiCGSTAB tracks a recursive residual; the recomputed one may differ by rounding
        limit = 10 * SOLVE_RTOL
    if not np.isfinite(err) or err > limit:
        raise SolveFailed(f"linear solve residual {err:.3g} exceeds {limit:.1g}", step)


def step(
    spec: CoefficientSpec,
    f: SourceSpec | None,
    grid: Grid,
    slice: FieldSlice,
    dt: float,
    scheme: str = "implicit_euler",
) -> FieldSlice:
    """Advance one time step with zero lateral data."""
    stepper = Stepper(spec, f, grid, dt, scheme)
    return FieldSlice(slice.t + dt, stepper.advance(np.asarray(slice.values, dtype=float), slice.t))


def march(stepper: Stepper, u0: np.ndarray, t0: float, nsteps: int):
    """Yield ``(k, t_k, u_k)`` for ``k = 1..nsteps``."""
    u = np.asarray(u0, dtype=float)
    for k in range(1, nsteps + 1):
        t = t0 + (k - 1) * stepper.dt
        u = stepper.advance(u, t, step=k)
        yield k, t0 + k * stepper.dt, u


def evolve(
    spec: CoefficientSpec,
    f: SourceSpec | None,
    grid: Grid,
    initial: FieldSlice,
    window: CylinderWindow,
    scheme: str = "implicit_euler",
) -> EvolutionTrace:
    """Evolve ``initial`` across ``window`` and return all ``steps + 1`` slices."""
    if abs(initial.t - window.t_start) > 1e-12 * max(1.0, abs(window.t_start)):
        raise ValueError(f"initial slice at t = {initial.t} but window starts at {window.t_start}")
    values = np.asarray(initial.values, dtype=float)
    if values.shape != (grid.size,):
        raise ValueError(f"initial slice has {values.shape} entries, grid has {grid.size}")
    stepper = Stepper(spec, f, grid, window.dt, scheme)
    out = np.empty((window.steps + 1, grid.size))
    out[0] = values
    for k, _, u in march(stepper, values, window.t_start, window.steps):
        out[k] = u
    return EvolutionTrace(grid, window.times, out, scheme, stepper.f.tag)


# ---------------------------------------------------------------- sup profile


@dataclass(frozen=True, eq=False)
class SupProfile:
    """``u_hat(t) = max_nodes max(u, 0)`` with ``m_u = min_t u_hat``."""

    times: np.ndarray
    values: np.ndarray
    source_tag: str = "zero"
    h: tuple = ()

    @property
    def m_u(self) -> float:
        return float(self.values.min())

    def at(self, t: float) -> float:
        k = int(np.argmin(np.abs(self.times - t)))
        return float(self.values[k])


def sup_profile(trace: EvolutionTrace) -> SupProfile:
    if trace.times.size == 0:
        raise ValueError("empty trace")
    vals = np.maximum(trace.values.max(axis=1), 0.0)
    return SupProfile(trace.times.copy(), vals, trace.source_tag, trace.grid.h)


@dataclass
class ProfileCheck:
    strictly_decreasing: bool
    violations: list = field(default_factory=list)
    modulus: float = 0.0
    tail_ratio: float = 0.0
    tail_to_zero: bool = False
    tol: float = 1e-12
    eps_tail: float = 1e-2

    @property
    def passed(self) -> bool:
        return self.strictly_decreasing and self.tail_to_zero

    def to_dict(self) -> dict:
        return {
            "strictly_decreasing": self.strictly_decreasing,
            "violation_count": len(self.violations),
            "first_violations": [float(t) for t in self.violations[:10]],
            "modulus_of_continuity": self.modulus,
            "tail_ratio": self.tail_ratio,
            "tail_to_zero": self.tail_to_zero,
            "tol": self.tol,
            "eps_tail": self.eps_tail,
            "passed": self.passed,
        }


def profile_checks(profile: SupProfile, tol: float = 1e-12, eps_tail: float = 1e-2) -> ProfileCheck:
    """Strict decrease, sampled modulus of continuity and decay of the tail.

    A step ``k -> k+1`` violates strict decrease when
    ``u_hat[k+1] > u_hat[k] * (1 - tol)``. ``modulus`` is the largest jump
    between consecutive samples. The tail check asks
    ``u_hat(t_end) <= eps_tail * max u_hat``.
    """
    if profile.source_tag != "zero":
        raise NotHomogeneous(f"profile comes from a trace with source {profile.source_tag!r}")
    v = profile.values
    bad = np.flatnonzero(v[1:] > v[:-1] * (1 - tol))
    peak = float(v.max()) if v.size else 0.0
    tail = float(v[-1] / peak) if peak > 0 else 0.0
    return ProfileCheck(
        strictly_decreasing=bool(bad.size == 0) and peak > 0,
        violations=profile.times[bad + 1].tolist(),
        modulus=float(np.abs(np.diff(v)).max(initial=0.0)),
        tail_ratio=tail,
        tail_to_zero=tail <= eps_tail,
        tol=tol,
        eps_tail=eps_tail,
    )
