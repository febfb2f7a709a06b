"""Bounded solutions of the inhomogeneous problem and the decomposition ``u = u0 + a w``.

The bounded solution ``u0`` is built by exhaustion: solve on ``(-N, N)``
from a zero slice at ``t = -N`` and let ``N`` grow. Successive truncations
are compared on a fixed reporting window ``(-W, W)``.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .domain import CylinderWindow, Grid
from .errors import NegativeCoefficient, NoCauchyDecay
from .eternal import EternalSolution
from .evolution import EvolutionTrace, FieldSlice, Stepper, evolve
from .operator import CoefficientSpec, SourceSpec, sliding_norm
from .verify import _Report, _sample_index, _values_on


def exhaustion_solve(
    spec: CoefficientSpec,
    f: SourceSpec,
    grid: Grid,
    N: float,
    dt: float,
    scheme: str = "implicit_euler",
) -> EvolutionTrace:
    """Solve on ``(-N, N)`` with zero data on the whole parabolic boundary."""
    if N < 2:
        raise ValueError(f"truncation radius must be >= 2, got {N}")
    window = CylinderWindow(-float(N), float(N), dt)
    return evolve(spec, f, grid, FieldSlice(-float(N), np.zeros(grid.size)), window, scheme)


def _truncated_run(spec, f, grid, N, dt, scheme, W):
    """Sup norm over ``(-N, N)`` and the slices on ``[-W, W]`` without storing the rest."""
    stepper = Stepper(spec, f, grid, dt, scheme)
    n = int(round(N / dt))
    nw = int(round(W / dt))
    u = np.zeros(grid.size)
    sup = 0.0
    keep = np.empty((2 * nw + 1, grid.size))
    for k in range(1, 2 * n + 1):
        u = stepper.advance(u, -N + (k - 1) * dt, step=k)
        sup = max(sup, float(np.abs(u).max()))
        j = k - (n - nw)
        if 0 <= j <= 2 * nw:
            keep[j] = u
    return sup, keep


@dataclass
class ExhaustionResult(_Report):
    """Truncations ``u_N`` compared on the reporting window.

    ``d_N[i]`` is the sup distance on ``(-W, W)`` between ``u_{N_i}`` and
    ``u_{N_{i+1}}``. ``C0_per_N`` is ``||u_N||_inf / ||f||_*``.
    """

    N_list: list
    W: float
    sup_norms: list
    f_norm: float
    C0_per_N: list
    d_N: list
    ratio: float
    bound_variation: float
    bound_variation_top: float
    u0: EvolutionTrace = field(repr=False)
    windows: list = field(repr=False, default_factory=list)
    bound_tol: float = 0.05

    @property
    def C0(self) -> float:
        return float(max(self.C0_per_N)) if self.C0_per_N else 0.0

    @property
    def cauchy(self) -> bool:
        d = np.asarray(self.d_N)
        if not np.any(d > 0):
            return True
        return bool(np.all(np.diff(d) < 0) and self.ratio < 1.0)

    @property
    def passed(self) -> bool:
        return self.cauchy and self.bound_variation_top <= self.bound_tol

    def to_dict(self) -> dict:
        return {
            "N_list": list(self.N_list),
            "W": self.W,
            "sup_norms": list(self.sup_norms),
            "f_norm": self.f_norm,
            "C0_per_N": list(self.C0_per_N),
            "C0": self.C0,
            "d_N": list(self.d_N),
            "ratio": self.ratio,
            "bound_variation": self.bound_variation,
            "bound_variation_top": self.bound_variation_top,
            "cauchy": self.cauchy,
            "passed": self.passed,
        }


def _variation(x) -> float:
    x = np.asarray(x, float)
    top = float(np.abs(x).max()) if x.size else 0.0
    return float((x.max() - x.min()) / top) if top > 0 else 0.0


def exhaustion_limit(
    spec: CoefficientSpec,
    f: SourceSpec,
    grid: Grid,
    N_list=(4, 8, 16),
    W: float = 2.0,
    dt: float = 1e-3,
    scheme: str = "implicit_euler",
    workers: int = 1,
) -> ExhaustionResult:
    """Run the truncations in ``N_list`` and return ``u0`` on ``(-W, W)``.

    Raises :class:`NoCauchyDecay` when the window distances between
    consecutive truncations do not shrink geometrically.
    """
    N_list = [float(N) for N in N_list]
    if len(N_list) < 2 or any(b <= a for a, b in zip(N_list, N_list[1:])):
        raise ValueError("N_list must hold at least two strictly increasing radii")
    if N_list[0] < 2 * W:
        raise ValueError(f"smallest radius {N_list[0]} is below 2W = {2 * W}")
    f = SourceSpec.of(f)
    with ThreadPoolExecutor(max_workers=max(1, int(workers))) as pool:
        runs = list(pool.map(lambda N: _truncated_run(spec, f, grid, N, dt, scheme, W), N_list))
    sups = [s for s, _ in runs]
    wins = [w for _, w in runs]
    fn = 0.0 if f.is_zero else sliding_norm(f, (-N_list[-1], N_list[-1]), grid, dt)
    C0s = [s / fn if fn > 0 else 0.0 for s in sups]
    d = [float(np.abs(a - b).max()) for a, b in zip(wins, wins[1:])]
    pos = [x for x in d if x > 0]
    if len(pos) >= 2:
        ratio = float(math.exp(np.mean(np.diff(np.log(pos)))))
    else:
        ratio = 0.0
    top = sups[len(sups) // 2 :]
    window = CylinderWindow(-W, W, dt)
    u0 = EvolutionTrace(grid, window.times, wins[-1], scheme, f.tag)
    result = ExhaustionResult(
        N_list=N_list, W=float(W), sup_norms=sups, f_norm=fn, C0_per_N=C0s, d_N=d, ratio=ratio,
        bound_variation=_variation(sups), bound_variation_top=_variation(top), u0=u0, windows=wins,
    )
    if not result.cauchy:
        raise NoCauchyDecay(
            f"window distances {['%.3g' % x for x in d]} do not decrease geometrically "
            f"(ratio {ratio:.3g}); the source may have unbounded sliding norm or dt is too coarse"
        )
    return result


# ---------------------------------------------------------------- decomposition


@dataclass
class DecompositionReport(_Report):
    a: float
    residual: float
    spread: float
    t_ref: float
    tol: float = 1e-8

    @property
    def passed(self) -> bool:
        return self.a >= 0 and self.residual <= self.tol


def synthesize(u0: EvolutionTrace, w: EternalSolution | EvolutionTrace, a: float) -> EvolutionTrace:
    """``u0 + a w`` sampled on the times of ``u0``."""
    vals = u0.values + a * _values_on(w, u0.times)
    return EvolutionTrace(u0.grid, u0.times, vals, u0.scheme, u0.source_tag)


def decompose(
    u: EvolutionTrace,
    u0: EvolutionTrace,
    w: EternalSolution | EvolutionTrace,
    t_ref: float = 1.0,
    neg_tol: float = 1e-10,
    tol: float = 1e-8,
) -> DecompositionReport:
    """Recover ``a`` in ``u = u0 + a w`` from the value at ``(origin_node, t_ref)``.

    Raises :class:`NegativeCoefficient` when ``u - u0`` drops below
    ``-neg_tol`` (relative to the size of the inputs), i.e. ``u`` is not in
    the bounded-below family.
    """
    times = u0.times
    uu = _values_on(u, times)
    wv = _values_on(w, times)
    if np.any(wv <= 0):
        raise ValueError("w must be strictly positive")
    diff = uu - u0.values
    scale = max(1.0, float(np.abs(uu).max()), float(np.abs(u0.values).max()))
    if diff.min() < -neg_tol * scale:
        raise NegativeCoefficient(
            f"u - u0 reaches {diff.min():.3g}; u is not of the form u0 + a w with a >= 0"
        )
    k = _sample_index(times, t_ref)
    o = u0.grid.origin_node
    a = float(diff[k, o] / wv[k, o])
    ratio = diff / wv
    mean = float(ratio.mean())
    spread = float((ratio.max() - ratio.min()) / abs(mean)) if abs(mean) > neg_tol else float(ratio.max() - ratio.min())
    residual = float(np.abs(diff - a * wv).max())
    return DecompositionReport(a=a, residual=residual, spread=spread, t_ref=float(times[k]), tol=tol)
