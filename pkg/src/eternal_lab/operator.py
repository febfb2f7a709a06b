"""Coefficient data, validation, discrete spatial operator and source norms.

The spatial part of ``L`` is

    -a_ij d_i d_j u + b_i d_i u + c u          (non-divergence form)
    -d_i (a_ij d_j u) + b_i d_i u + c u        (divergence form)

and is discretised so the assembled matrix is an M-matrix whenever the
coefficients pass :func:`validate`. The diffusion tensor is split pointwise as

    a = g1 e1 e1^T + g2 e2 e2^T + gp dp dp^T + gm dm dm^T,   dp/dm = (h1, +-h2)

with ``gp, gm >= 0`` carrying the positive/negative part of ``a_12``; each
rank-one piece is a 3-point second difference along its lattice direction.
The non-divergence form evaluates the weights at the node, the divergence
form at the flux midpoints. Drift terms are upwinded.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .domain import Grid
from .errors import (
    AsymmetricCoefficient,
    CrossTermTooLarge,
    DriftTooLarge,
    EllipticityViolated,
    NegativeC,
    StencilOutOfDomain,
    WindowTooShort,
)
from .expr import Expr, as_field, evaluate

FORMS = ("nondivergence", "divergence")
TIME_DEPENDENCE = ("autonomous", "periodic", "general")


@dataclass(frozen=True, eq=False)
class CoefficientSpec:
    """Operator data ``a_ij, b_i, c`` with declared ellipticity bounds.

    Fields are :class:`~eternal_lab.expr.Expr` objects or callables
    ``g(points, t)``. Use :func:`make_spec` to build one from strings.
    """

    a: tuple
    b: tuple
    c: object
    lam: float
    Lam: float
    form: str = "nondivergence"
    time_dependence: str = "autonomous"
    period: float | None = None

    def __post_init__(self):
        if self.form not in FORMS:
            raise ValueError(f"form must be one of {FORMS}, got {self.form!r}")
        if self.time_dependence not in TIME_DEPENDENCE:
            raise ValueError(f"time_dependence must be one of {TIME_DEPENDENCE}")
        if self.time_dependence == "periodic" and not (self.period and self.period > 0):
            raise ValueError("periodic coefficients need a positive period")
        if not 0 < self.lam <= self.Lam:
            raise ValueError(f"need 0 < lambda <= Lambda, got {self.lam}, {self.Lam}")

    @property
    def dim(self) -> int:
        return len(self.b)

    @property
    def autonomous(self) -> bool:
        return self.time_dependence == "autonomous"

    def with_c(self, c) -> "CoefficientSpec":
        return _replace(self, c=as_field(c))

    def describe(self) -> dict:
        return {
            "a": [[str(x) for x in row] for row in self.a],
            "b": [str(x) for x in self.b],
            "c": str(self.c),
            "lambda": self.lam,
            "Lambda": self.Lam,
            "form": self.form,
            "time_dependence": self.time_dependence,
            "period": self.period,
        }


def _replace(spec, **kw):
    args = dict(
        a=spec.a, b=spec.b, c=spec.c, lam=spec.lam, Lam=spec.Lam, form=spec.form,
        time_dependence=spec.time_dependence, period=spec.period,
    )
    args.update(kw)
    return CoefficientSpec(**args)


def make_spec(
    dim: int = 1,
    a="1",
    b=None,
    c="0",
    lam: float = 1.0,
    Lam: float = 1.0,
    form: str = "nondivergence",
    time_dependence: str | None = None,
    period: float | None = None,
) -> CoefficientSpec:
    """Build a :class:`CoefficientSpec` from expressions.

    ``a`` may be a single field (meaning ``a * identity``) or a ``dim x dim``
    nested sequence. When ``time_dependence`` is omitted it is inferred:
    ``periodic`` if a period is given, otherwise ``autonomous`` unless some
    expression mentions ``t``.
    """
    if isinstance(a, (list, tuple)):
        if len(a) != dim or any(len(row) != dim for row in a):
            raise ValueError(f"a must be {dim}x{dim}")
        amat = tuple(tuple(as_field(x) for x in row) for row in a)
    else:
        diag = as_field(a)
        zero = Expr("0")
        amat = tuple(tuple(diag if i == j else zero for j in range(dim)) for i in range(dim))
    bvec = tuple(as_field(x) for x in (b if b is not None else ["0"] * dim))
    if len(bvec) != dim:
        raise ValueError(f"b must have {dim} components")
    cfield = as_field(c)
    if time_dependence is None:
        fields = [x for row in amat for x in row] + list(bvec) + [cfield]
        uses_t = any(getattr(x, "depends_on_t", True) for x in fields)
        time_dependence = "periodic" if period else ("general" if uses_t else "autonomous")
    return CoefficientSpec(amat, bvec, cfield, float(lam), float(Lam), form, time_dependence, period)


def heat_spec(dim: int = 1, c="0", Lam: float = 2.0, **kw) -> CoefficientSpec:
    """Identity diffusion and no drift; ``Lambda`` defaults to 2 so small ``c`` fits."""
    return make_spec(dim=dim, a="1", c=c, lam=1.0, Lam=Lam, **kw)


# ---------------------------------------------------------------- validation


@dataclass
class ValidationReport:
    checks: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures

    def raise_for_failure(self) -> None:
        if self.failures:
            raise self.failures[0]

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "checks": dict(self.checks),
            "failures": [{"error": type(e).__name__, "message": str(e), "sample": e.sample} for e in self.failures],
        }


def _sample_points(grid: Grid) -> np.ndarray:
    pts = [grid.nodes]
    for k in range(grid.dim):
        off = np.zeros(grid.dim)
        off[k] = grid.h[k] / 2
        pts += [grid.nodes + off, grid.nodes - off]
    if grid.dim == 2:
        hx, hy = grid.h
        for off in ((hx / 2, hy / 2), (hx / 2, -hy / 2)):
            pts += [grid.nodes + np.array(off), grid.nodes - np.array(off)]
    return np.vstack(pts)


def coefficient_values(spec: CoefficientSpec, points: np.ndarray, t: float):
    """Evaluate ``(a, b, c)`` at points: shapes ``(P, d, d)``, ``(P, d)``, ``(P,)``."""
    d = spec.dim
    a = np.empty((points.shape[0], d, d))
    for i in range(d):
        for j in range(d):
            a[:, i, j] = evaluate(spec.a[i][j], points, t)
    b = np.column_stack([evaluate(spec.b[i], points, t) for i in range(d)])
    c = evaluate(spec.c, points, t)
    return a, b, c


def validate(spec: CoefficientSpec, grid: Grid, times: Sequence[float], n_random: int = 16, seed: int = 0) -> ValidationReport:
    """Sample the structural assumptions on ``L`` over nodes, half-nodes and ``times``.

    The quadratic form is probed along the coordinate directions plus
    ``n_random`` random unit vectors per point.
    """
    times = list(times)
    if not times:
        raise ValueError("validate needs at least one sample time")
    if spec.dim != grid.dim:
        raise ValueError(f"spec is {spec.dim}D but grid is {grid.dim}D")
    rng = np.random.default_rng(seed)
    pts = _sample_points(grid)
    report = ValidationReport()
    rtol = 1e-12
    lam, Lam = spec.lam, spec.Lam

    def fail(exc):
        if not any(type(f) is type(exc) for f in report.failures):
            report.failures.append(exc)

    for t in times:
        a, b, c = coefficient_values(spec, pts, t)
        asym = np.abs(a - np.swapaxes(a, 1, 2)).max(axis=(1, 2))
        bad = np.flatnonzero(asym > rtol * (1 + np.abs(a).max(axis=(1, 2))))
        if bad.size:
            fail(AsymmetricCoefficient(f"|a_ij - a_ji| = {asym[bad[0]]:.3g}", _sample(pts[bad[0]], t)))

        xi = rng.standard_normal((pts.shape[0], n_random, spec.dim))
        xi /= np.linalg.norm(xi, axis=2, keepdims=True)
        xi = np.concatenate([np.broadcast_to(np.eye(spec.dim), (pts.shape[0], spec.dim, spec.dim)), xi], axis=1)
        q = np.einsum("pki,pij,pkj->pk", xi, a, xi)
        lo_bad = np.argwhere(q < lam * (1 - rtol))
        hi_bad = np.argwhere(q > Lam * (1 + rtol))
        if lo_bad.size or hi_bad.size:
            p, k = (lo_bad if lo_bad.size else hi_bad)[0]
            fail(EllipticityViolated(f"a xi.xi = {q[p, k]:.6g} outside [{lam}, {Lam}] for xi = {xi[p, k].tolist()}", _sample(pts[p], t)))

        bmax = np.abs(b).max(axis=1)
        bad = np.flatnonzero(bmax > Lam * (1 + rtol))
        if bad.size:
            fail(DriftTooLarge(f"|b| = {bmax[bad[0]]:.6g} > Lambda = {Lam}", _sample(pts[bad[0]], t)))
        bad = np.flatnonzero(np.abs(c) > Lam * (1 + rtol))
        if bad.size:
            fail(DriftTooLarge(f"|c| = {abs(c[bad[0]]):.6g} > Lambda = {Lam}", _sample(pts[bad[0]], t)))
        bad = np.flatnonzero(c < 0)
        if bad.size:
            fail(NegativeC(f"c = {c[bad[0]]:.6g} < 0", _sample(pts[bad[0]], t)))

        if spec.dim == 2:
            hx, hy = grid.h
            a12 = np.abs(a[:, 0, 1])
            g1 = a[:, 0, 0] - a12 * hx / hy
            g2 = a[:, 1, 1] - a12 * hy / hx
            bad = np.flatnonzero((g1 < -rtol) | (g2 < -rtol))
            if bad.size:
                p = bad[0]
                fail(CrossTermTooLarge(
                    f"|a_12| = {a12[p]:.6g} exceeds min(a_11, a_22) = {min(a[p, 0, 0], a[p, 1, 1]):.6g}"
                    " (scaled by the grid aspect ratio); the mixed stencil would lose the M-matrix property",
                    _sample(pts[p], t),
                ))
    report.checks = {
        "symmetry": not any(isinstance(f, AsymmetricCoefficient) for f in report.failures),
        "ellipticity": not any(isinstance(f, EllipticityViolated) for f in report.failures),
        "bounded_b_c": not any(isinstance(f, DriftTooLarge) for f in report.failures),
        "c_nonnegative": not any(isinstance(f, NegativeC) for f in report.failures),
        "cross_term": not any(isinstance(f, CrossTermTooLarge) for f in report.failures),
    }
    return report


def _sample(point, t):
    return {"y": [float(v) for v in np.atleast_1d(point)], "t": float(t)}


# ---------------------------------------------------------------- assembly


@dataclass(frozen=True, eq=False)
class DiscreteOperator:
    """Sparse matrix ``A(t)`` acting on interior-node vectors."""

    matrix: sp.csr_matrix
    t: float
    form: str
    is_m_matrix: bool

    @property
    def shape(self):
        return self.matrix.shape

    def __matmul__(self, x):
        return self.matrix @ x

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()

    def banded(self) -> np.ndarray:
        """Tridiagonal storage ``(3, N)`` in the layout of ``scipy.linalg.solve_banded``."""
        m = self.matrix
        n = m.shape[0]
        ab = np.zeros((3, n))
        ab[0, 1:] = m.diagonal(1)
        ab[1, :] = m.diagonal(0)
        ab[2, :-1] = m.diagonal(-1)
        return ab


def is_m_matrix(matrix, tol: float = 1e-12) -> bool:
    """Sign-pattern M-matrix predicate.

    Positive diagonal, nonpositive off-diagonal entries and nonnegative row
    sums (weak diagonal dominance; with the zero Dirichlet rows this makes
    the matrix a nonsingular M-matrix).
    """
    m = sp.csr_matrix(matrix)
    diag = m.diagonal()
    scale = max(1.0, float(np.abs(diag).max(initial=0.0)))
    off = m - sp.diags(diag)
    if np.any(diag <= 0):
        return False
    if off.nnz and off.data.max() > tol * scale:
        return False
    rowsum = np.asarray(m.sum(axis=1)).ravel()
    return bool(np.all(rowsum >= -tol * scale))


def _checked_neighbor(grid: Grid, offset) -> np.ndarray:
    key = ("checked_neighbor", tuple(offset))
    cache = grid.__dict__.setdefault("_stencil_cache", {})
    if key not in cache:
        nb = grid.neighbor(offset)
        for k in np.flatnonzero(nb < 0):
            point = grid.lattice[k] + np.asarray(offset)
            if not grid.on_closure(point):
                raise StencilOutOfDomain(f"neighbour {point.tolist()} of node {k} leaves the domain")
        cache[key] = nb
    return cache[key]


def assemble(spec: CoefficientSpec, grid: Grid, t: float = 0.0) -> DiscreteOperator:
    """Assemble the spatial operator at time ``t`` as a CSR matrix."""
    if spec.dim != grid.dim:
        raise ValueError(f"spec is {spec.dim}D but grid is {grid.dim}D")
    n = grid.size
    idx = np.arange(n)
    nodes = grid.nodes
    h = np.asarray(grid.h)
    rows, cols, vals = [idx], [idx], [np.zeros(n)]
    diag = vals[0]

    def couple(offset, weight):
        nb = _checked_neighbor(grid, offset)
        inside = nb >= 0
        rows.append(idx[inside])
        cols.append(nb[inside])
        vals.append(-weight[inside])

    a_node, b_node, c_node = coefficient_values(spec, nodes, t)
    divergence = spec.form == "divergence"

    def axis_weight(points, k):
        a, _, _ = coefficient_values(spec, points, t)
        if spec.dim == 1:
            return a[:, 0, 0]
        other = 1 - k
        return a[:, k, k] - np.abs(a[:, 0, 1]) * h[k] / h[other]

    for k in range(spec.dim):
        e = np.zeros(spec.dim, dtype=int)
        e[k] = 1
        if divergence:
            half = np.zeros(spec.dim)
            half[k] = h[k] / 2
            gp = axis_weight(nodes + half, k) / h[k] ** 2
            gm = axis_weight(nodes - half, k) / h[k] ** 2
        else:
            gp = gm = axis_weight(nodes, k) / h[k] ** 2
        diag += gp + gm
        couple(e, gp)
        couple(-e, gm)

    if spec.dim == 2:
        for sign in (1, -1):
            step = np.array([1, sign])
            if divergence:
                half = np.array([h[0] / 2, sign * h[1] / 2])
                ap, _, _ = coefficient_values(spec, nodes + half, t)
                am, _, _ = coefficient_values(spec, nodes - half, t)
                gp = np.maximum(sign * ap[:, 0, 1], 0.0) / (h[0] * h[1])
                gm = np.maximum(sign * am[:, 0, 1], 0.0) / (h[0] * h[1])
            else:
                gp = gm = np.maximum(sign * a_node[:, 0, 1], 0.0) / (h[0] * h[1])
            diag += gp + gm
            couple(step, gp)
            couple(-step, gm)

    for k in range(spec.dim):
        e = np.zeros(spec.dim, dtype=int)
        e[k] = 1
        bk = b_node[:, k]
        diag += np.abs(bk) / h[k]
        couple(-e, np.maximum(bk, 0.0) / h[k])
        couple(e, np.maximum(-bk, 0.0) / h[k])

    diag += c_node
    mat = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    )
    mat.sum_duplicates()
    mat.eliminate_zeros()
    return DiscreteOperator(mat, float(t), spec.form, is_m_matrix(mat))


# ---------------------------------------------------------------- sources and norms


@dataclass(frozen=True, eq=False)
class SourceSpec:
    """Right-hand side ``f(y, t)`` of ``Lu = f``."""

    f: object
    declared_bound: float | None = None
    name: str | None = None

    @classmethod
    def zero(cls) -> "SourceSpec":
        return cls(Expr("0"), 0.0, "0")

    @classmethod
    def of(cls, value, declared_bound=None) -> "SourceSpec":
        if isinstance(value, SourceSpec):
            return value
        if value is None:
            return cls.zero()
        fld = as_field(value)
        return cls(fld, declared_bound, str(fld) if isinstance(fld, Expr) else getattr(value, "__name__", "f"))

    @property
    def is_zero(self) -> bool:
        if isinstance(self.f, Expr):
            return not self.f.depends_on_t and not self.f.depends_on_y and self.f.constant_value() == 0.0
        return False

    @property
    def time_independent(self) -> bool:
        return isinstance(self.f, Expr) and not self.f.depends_on_t

    @property
    def tag(self) -> str:
        return "zero" if self.is_zero else (self.name or "f")

    def values(self, points, t: float) -> np.ndarray:
        return evaluate(self.f, points, t)

    def scaled(self, s: float) -> "SourceSpec":
        inner = self.f
        return SourceSpec(lambda pts, t: s * evaluate(inner, pts, t), None, f"{s}*({self.tag})")

    def __add__(self, other: "SourceSpec") -> "SourceSpec":
        f1, f2 = self.f, other.f
        return SourceSpec(lambda pts, t: evaluate(f1, pts, t) + evaluate(f2, pts, t), None, f"({self.tag})+({other.tag})")


def _cell_integrals(f: SourceSpec, grid: Grid, t0: float, ncells: int, dt: float) -> np.ndarray:
    """``sum_cells |f|^(n+1) h^n dt`` for each time cell ``[t0 + k dt, t0 + (k+1) dt]``."""
    pts = grid.cell_centers
    p = grid.dim + 1
    vol = grid.cell_volume
    if f.is_zero:
        return np.zeros(ncells)
    if f.time_independent:
        val = np.sum(np.abs(f.values(pts, t0)) ** p) * vol * dt
        return np.full(ncells, val)
    mids = t0 + (np.arange(ncells) + 0.5) * dt
    return np.array([np.sum(np.abs(f.values(pts, tm)) ** p) for tm in mids]) * vol * dt


def _steps(length: float, dt: float) -> int:
    n = int(round(length / dt))
    if abs(n * dt - length) > 1e-9 * max(1.0, length):
        raise ValueError(f"length {length} is not a multiple of dt = {dt}")
    return n


def slab_norm(f: SourceSpec, window: tuple, grid: Grid, dt: float) -> float:
    """Discrete ``L^(n+1)`` norm of ``f`` on ``Omega x (t, t+2)`` by midpoint quadrature."""
    t0, t1 = window
    if abs((t1 - t0) - 2.0) > 1e-12:
        raise ValueError(f"slab windows have length 2, got ({t0}, {t1})")
    f = SourceSpec.of(f)
    g = _cell_integrals(f, grid, t0, _steps(2.0, dt), dt)
    return float(g.sum() ** (1.0 / (grid.dim + 1)))


def slab_norm_series(f: SourceSpec, t_range: tuple, grid: Grid, dt: float):
    """Slab norms for every slab start in ``t_range`` at spacing ``dt``.

    Returns ``(starts, norms)``; the last slab ends at ``t_range[1]``.
    """
    t0, t1 = t_range
    if t1 - t0 < 2.0 - 1e-12:
        raise WindowTooShort(f"sliding norm needs a range of length >= 2, got ({t0}, {t1})")
    f = SourceSpec.of(f)
    total = _steps(t1 - t0, dt)
    width = _steps(2.0, dt)
    if f.is_zero or f.time_independent:
        g = _cell_integrals(f, grid, t0, width, dt)
        starts = t0 + dt * np.arange(total - width + 1)
        return starts, np.full(starts.shape, g.sum() ** (1.0 / (grid.dim + 1)))
    g = _cell_integrals(f, grid, t0, total, dt)
    csum = np.concatenate([[0.0], np.cumsum(g)])
    sums = csum[width:] - csum[:-width]
    starts = t0 + dt * np.arange(sums.size)
    return starts, np.maximum(sums, 0.0) ** (1.0 / (grid.dim + 1))


def sliding_norm(f: SourceSpec, t_range: tuple, grid: Grid, dt: float) -> float:
    """``sup_t ||f||_{L^(n+1)(Q_(t,t+2))}`` over slab starts in ``t_range``."""
    _, norms = slab_norm_series(f, t_range, grid, dt)
    return float(norms.max())
