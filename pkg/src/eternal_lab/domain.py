"""Spatial domains, lattice grids and parabolic metric helpers.

Domains are bounded intervals or axis-aligned simple polygons whose vertices
sit on the grid lattice. Grids store only strictly interior nodes; the
lateral boundary data is zero by construction, so boundary nodes are never
materialised.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

from .errors import EmptyInterior, OriginOutside

_LATTICE_TOL = 1e-9


@dataclass(frozen=True)
class SpatialDomain:
    """Interval ``(lo, hi)`` or axis-aligned polygon.

    ``origin`` is the interior reference point playing the role of ``0``
    (e.g. ``pi/2`` for the interval ``(0, pi)``); by default it is the
    coordinate origin.
    """

    kind: str
    bounds: tuple = ()
    vertices: tuple = ()
    origin: tuple = ()

    @classmethod
    def interval(cls, lo: float, hi: float, origin: float = 0.0) -> "SpatialDomain":
        if not lo < hi:
            raise ValueError(f"interval needs lo < hi, got ({lo}, {hi})")
        return cls("interval", bounds=(float(lo), float(hi)), origin=(float(origin),))

    @classmethod
    def polygon(cls, vertices: Sequence[Sequence[float]], origin=(0.0, 0.0)) -> "SpatialDomain":
        verts = tuple((float(x), float(y)) for x, y in vertices)
        if len(verts) > 1 and verts[0] == verts[-1]:
            verts = verts[:-1]
        if len(verts) < 4:
            raise ValueError("an axis-aligned polygon needs at least 4 vertices")
        for k, (p, q) in enumerate(zip(verts, verts[1:] + verts[:1])):
            if (p[0] != q[0]) == (p[1] != q[1]):
                raise ValueError(f"edge {k} from {p} to {q} is not axis-aligned")
        _check_simple(verts)
        return cls("polygon", vertices=verts, origin=tuple(float(o) for o in origin))

    @classmethod
    def rectangle(cls, x0, x1, y0, y1, origin=(0.0, 0.0)) -> "SpatialDomain":
        return cls.polygon([(x0, y0), (x1, y0), (x1, y1), (x0, y1)], origin=origin)

    @property
    def dim(self) -> int:
        return 1 if self.kind == "interval" else 2

    @property
    def bounding_box(self) -> list[tuple[float, float]]:
        if self.kind == "interval":
            return [self.bounds]
        xs, ys = zip(*self.vertices)
        return [(min(xs), max(xs)), (min(ys), max(ys))]

    @property
    def diameter(self) -> float:
        return math.sqrt(sum((b - a) ** 2 for a, b in self.bounding_box))

    @property
    def min_feature(self) -> float:
        if self.kind == "interval":
            return self.bounds[1] - self.bounds[0]
        v = self.vertices
        return min(abs(q[0] - p[0]) + abs(q[1] - p[1]) for p, q in zip(v, v[1:] + v[:1]))

    def contains(self, point) -> bool:
        """Strict-interior predicate (boundary points are outside)."""
        p = np.atleast_1d(np.asarray(point, dtype=float))
        if self.kind == "interval":
            lo, hi = self.bounds
            return bool(lo < p[0] < hi)
        return _strictly_inside(self.vertices, p[0], p[1])

    @property
    def origin_interior(self) -> bool:
        return self.contains(self.origin)

    def to_dict(self) -> dict:
        if self.kind == "interval":
            return {"interval": list(self.bounds), "origin": list(self.origin)}
        return {"polygon": [list(v) for v in self.vertices], "origin": list(self.origin)}


def _segments_cross(p, q, r, s) -> bool:
    # axis-aligned segments: crossing iff one is horizontal, the other vertical and they intersect
    ph = p[1] == q[1]
    rh = r[1] == s[1]
    if ph == rh:
        if ph and p[1] == r[1]:
            return max(min(p[0], q[0]), min(r[0], s[0])) < min(max(p[0], q[0]), max(r[0], s[0]))
        if not ph and p[0] == r[0]:
            return max(min(p[1], q[1]), min(r[1], s[1])) < min(max(p[1], q[1]), max(r[1], s[1]))
        return False
    if not ph:
        p, q, r, s = r, s, p, q
    x, y = r[0], p[1]
    return min(p[0], q[0]) <= x <= max(p[0], q[0]) and min(r[1], s[1]) <= y <= max(r[1], s[1])


def _check_simple(verts) -> None:
    edges = list(zip(verts, verts[1:] + verts[:1]))
    m = len(edges)
    for i in range(m):
        for j in range(i + 1, m):
            if j == i + 1 or (i == 0 and j == m - 1):
                continue
            if _segments_cross(*edges[i], *edges[j]):
                raise ValueError(f"polygon is not simple: edges {i} and {j} intersect")


def _on_edge(verts, x, y) -> bool:
    for p, q in zip(verts, verts[1:] + verts[:1]):
        if p[1] == q[1] == y and min(p[0], q[0]) <= x <= max(p[0], q[0]):
            return True
        if p[0] == q[0] == x and min(p[1], q[1]) <= y <= max(p[1], q[1]):
            return True
    return False


def _strictly_inside(verts, x, y) -> bool:
    if _on_edge(verts, x, y):
        return False
    inside = False
    for p, q in zip(verts, verts[1:] + verts[:1]):
        if (p[1] > y) != (q[1] > y):
            xc = p[0] + (y - p[1]) * (q[0] - p[0]) / (q[1] - p[1])
            if xc > x:
                inside = not inside
    return inside


def _lattice_steps(length: float, h: float, what: str) -> int:
    ratio = length / h
    n = round(ratio)
    if abs(ratio - n) > _LATTICE_TOL * max(1.0, ratio):
        raise ValueError(f"{what} ({length}) is not an integer multiple of h = {h}")
    return int(n)


@dataclass(frozen=True, eq=False)
class Grid:
    """Interior lattice nodes of a domain.

    Attributes
    ----------
    domain : SpatialDomain
    h : tuple of float
        Spacing per axis.
    lo : tuple of float
        Lattice anchor (bounding-box corner); node ``k`` has coordinates
        ``lo + lattice[k] * h``.
    nodes : ndarray, shape (N, dim)
    lattice : ndarray of int, shape (N, dim)
    origin_node : int
        Index of the interior node nearest the domain's reference point.
    """

    domain: SpatialDomain
    h: tuple
    lo: tuple
    shape: tuple
    nodes: np.ndarray = field(repr=False)
    lattice: np.ndarray = field(repr=False)
    origin_node: int

    @property
    def dim(self) -> int:
        return self.domain.dim

    @property
    def size(self) -> int:
        return self.nodes.shape[0]

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.h))

    @cached_property
    def _index_array(self) -> np.ndarray:
        idx = -np.ones(tuple(s + 1 for s in self.shape), dtype=np.int64)
        idx[tuple(self.lattice.T)] = np.arange(self.size)
        return idx

    @cached_property
    def node_index(self) -> dict:
        return {tuple(int(v) for v in row): k for k, row in enumerate(self.lattice)}

    def neighbor(self, offset) -> np.ndarray:
        """Index of the neighbour ``lattice + offset`` for every node, ``-1`` on the boundary."""
        pos = self.lattice + np.asarray(offset, dtype=np.int64)
        ok = np.all((pos >= 0) & (pos <= np.asarray(self.shape)), axis=1)
        out = -np.ones(self.size, dtype=np.int64)
        out[ok] = self._index_array[tuple(pos[ok].T)]
        return out

    @cached_property
    def cell_centers(self) -> np.ndarray:
        """Midpoints of the lattice cells covering the domain (quadrature points)."""
        if self.dim == 1:
            return (self.lo[0] + (np.arange(self.shape[0]) + 0.5) * self.h[0])[:, None]
        ii, jj = np.meshgrid(np.arange(self.shape[0]) + 0.5, np.arange(self.shape[1]) + 0.5, indexing="ij")
        cand = np.column_stack([ii.ravel(), jj.ravel()])
        pts = self.coordinates(cand)
        keep = np.array([self.domain.contains(p) for p in pts], dtype=bool)
        return pts[keep]

    def on_closure(self, lattice_point) -> bool:
        """Whether an integer lattice point lies in the closed domain."""
        p = self.coordinates(lattice_point)
        if self.domain.contains(p):
            return True
        if self.dim == 1:
            return bool(np.isclose(p[0], self.domain.bounds[0]) or np.isclose(p[0], self.domain.bounds[1]))
        return _on_edge(self._lattice_vertices, *(int(v) for v in lattice_point))

    @cached_property
    def _lattice_vertices(self):
        return [tuple(int(round((v[k] - self.lo[k]) / self.h[k])) for k in range(2)) for v in self.domain.vertices]

    def coordinates(self, lattice_points) -> np.ndarray:
        return np.asarray(self.lo) + np.asarray(lattice_points, dtype=float) * np.asarray(self.h)

    def nearest_node(self, point) -> int:
        d = np.max(np.abs(self.nodes - np.asarray(point, dtype=float)) / np.asarray(self.h), axis=1)
        return int(np.argmin(d))

    def metadata(self) -> dict:
        return {
            "domain": self.domain.to_dict(),
            "h": list(self.h),
            "interior_nodes": self.size,
            "origin_node": self.origin_node,
            "origin_node_coords": self.nodes[self.origin_node].tolist(),
        }


def build_grid(domain: SpatialDomain, h) -> Grid:
    """Lattice grid of the strictly interior nodes of ``domain``.

    ``h`` is a spacing or a per-axis tuple. The domain extent (and, for
    polygons, every vertex) must lie on the lattice so that stencils reach
    the boundary exactly.
    """
    hs = tuple(float(v) for v in np.broadcast_to(np.asarray(h, dtype=float), (domain.dim,)))
    if any(v <= 0 for v in hs):
        raise ValueError(f"h must be positive, got {h}")
    if not domain.origin_interior:
        raise OriginOutside(f"reference point {domain.origin} is not inside the domain")
    if max(hs) >= domain.min_feature / 2:
        raise ValueError(f"h = {max(hs)} is not below half the minimal feature width {domain.min_feature}")

    box = domain.bounding_box
    lo = tuple(a for a, _ in box)
    shape = tuple(_lattice_steps(b - a, hk, f"extent of axis {k}") for k, ((a, b), hk) in enumerate(zip(box, hs)))

    if domain.kind == "interval":
        lattice = np.arange(1, shape[0])[:, None]
    else:
        iverts = [tuple(_lattice_steps(v[k] - lo[k], hs[k], f"vertex {v}") for k in range(2)) for v in domain.vertices]
        ii, jj = np.meshgrid(np.arange(1, shape[0]), np.arange(1, shape[1]), indexing="ij")
        cand = np.column_stack([ii.ravel(), jj.ravel()])
        keep = np.array([_strictly_inside(iverts, i, j) for i, j in cand], dtype=bool)
        lattice = cand[keep]
    if lattice.shape[0] == 0:
        raise EmptyInterior(f"no interior nodes for h = {hs}")

    nodes = np.asarray(lo) + lattice * np.asarray(hs)
    origin = np.asarray(domain.origin)
    scaled = np.max(np.abs(nodes - origin) / np.asarray(hs), axis=1)
    origin_node = int(np.argmin(scaled))
    if scaled[origin_node] > 0.5 + 1e-9:
        raise OriginOutside(f"reference point {domain.origin} has no interior node within h/2")
    return Grid(domain, hs, lo, shape, nodes, lattice.astype(np.int64), origin_node)


def parabolic_distance(x1, x2) -> float:
    """``max(|y1 - y2|, |t1 - t2|**0.5)`` for space-time points ``(y..., t)``."""
    a = np.atleast_1d(np.asarray(x1, dtype=float))
    b = np.atleast_1d(np.asarray(x2, dtype=float))
    return float(max(math.hypot(*(a[:-1] - b[:-1])), math.sqrt(abs(a[-1] - b[-1]))))


@dataclass(frozen=True)
class CylinderWindow:
    """Time window ``(t_start, t_end)`` sampled with step ``dt``."""

    t_start: float
    t_end: float
    dt: float

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not self.t_start < self.t_end:
            raise ValueError(f"window needs t_start < t_end, got ({self.t_start}, {self.t_end})")
        ratio = (self.t_end - self.t_start) / self.dt
        if abs(ratio - round(ratio)) > 1e-12 * max(1.0, ratio):
            raise ValueError(f"window length {self.t_end - self.t_start} is not a multiple of dt = {self.dt}")

    @property
    def steps(self) -> int:
        return int(round((self.t_end - self.t_start) / self.dt))

    @property
    def times(self) -> np.ndarray:
        return self.t_start + self.dt * np.arange(self.steps + 1)

    @property
    def length(self) -> float:
        return self.t_end - self.t_start
