"""Domains, uniform grids with cut-cell (Shortley-Weller) arms, and nodal fields.

Every domain exposes a vectorised ``level`` function that is negative inside,
zero on the boundary and positive outside.  For all shapes here it coincides
with the signed distance near the boundary, which is what the grid builder
and the boundary bisection rely on.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

INTERIOR = 0
BOUNDARY_CUT = 1
EXTERIOR = 2
CLASS_NAMES = {INTERIOR: "interior", BOUNDARY_CUT: "boundary_cut", EXTERIOR: "exterior"}


class DomainError(ValueError):
    pass


def _as_points(x, dim: int) -> np.ndarray:
    pts = np.atleast_2d(np.asarray(x, dtype=float))
    if pts.shape[1] != dim:
        raise DomainError(f"expected points of dimension {dim}, got {pts.shape[1]}")
    return pts


def _unit_sphere(count: int, dim: int, rng: np.random.Generator) -> np.ndarray:
    v = rng.standard_normal((count, dim))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


class Domain:
    """Base class.  Subclasses are frozen dataclasses with a ``dim`` field."""

    dim: int
    bounded: bool = True

    def level(self, x) -> np.ndarray:
        raise NotImplementedError

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def contains(self, x) -> np.ndarray:
        return self.level(x) < 0.0

    def distance(self, x) -> np.ndarray:
        """Distance to the boundary for points in the closure (vectorised)."""
        return np.maximum(-self.level(x), 0.0)

    def sample_boundary(self, count: int, rng: np.random.Generator):
        """Return ``(points, inner_normals)`` sampled on the boundary."""
        raise DomainError(f"boundary sampling unavailable for {type(self).__name__}")

    def mean_curvature(self, y) -> float:
        raise DomainError("curvature unavailable")

    def min_mean_curvature(self) -> float:
        raise DomainError("curvature unavailable")

    def reach(self) -> float:
        """Width of the collar on which the distance function is C^2."""
        raise DomainError(f"reach unavailable for {type(self).__name__}")

    def distance_derivatives(self, x):
        """``(d, Dd, D2d)`` at points ``x``; finite differences unless overridden."""
        x = _as_points(x, self.dim)
        step = 1e-4
        d0 = self.distance(x)
        grad = np.empty_like(x)
        hess = np.empty((x.shape[0], self.dim, self.dim))
        eye = np.eye(self.dim)
        for i in range(self.dim):
            ei = step * eye[i]
            grad[:, i] = (self.distance(x + ei) - self.distance(x - ei)) / (2 * step)
            for j in range(i, self.dim):
                ej = step * eye[j]
                if i == j:
                    val = (self.distance(x + ei) - 2 * d0 + self.distance(x - ei)) / step**2
                else:
                    val = (
                        self.distance(x + ei + ej) - self.distance(x + ei - ej)
                        - self.distance(x - ei + ej) + self.distance(x - ei - ej)
                    ) / (4 * step**2)
                hess[:, i, j] = hess[:, j, i] = val
        return d0, grad, hess

    @property
    def inlet(self) -> float:
        lo, _ = self.bounds()
        return float(lo[0])


@dataclass(frozen=True)
class Ball(Domain):
    center: tuple
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise DomainError("ball radius must be positive")
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        if len(self.center) < 2:
            raise DomainError("dimension must be at least 2")

    @property
    def dim(self) -> int:
        return len(self.center)

    def level(self, x):
        x = _as_points(x, self.dim)
        return np.linalg.norm(x - np.asarray(self.center), axis=1) - self.radius

    def bounds(self):
        c = np.asarray(self.center)
        return c - self.radius, c + self.radius

    def sample_boundary(self, count, rng):
        u = _unit_sphere(count, self.dim, rng)
        return np.asarray(self.center) + self.radius * u, -u

    def mean_curvature(self, y):
        y = _as_points(y, self.dim)[0]
        if abs(np.linalg.norm(y - np.asarray(self.center)) - self.radius) > 1e-8 * self.radius:
            raise DomainError("point is not on the boundary")
        return 1.0 / self.radius

    def min_mean_curvature(self):
        return 1.0 / self.radius

    def reach(self):
        return self.radius

    def distance_derivatives(self, x):
        x = _as_points(x, self.dim)
        rel = x - np.asarray(self.center)
        r = np.linalg.norm(rel, axis=1)
        e = rel / r[:, None]
        d = self.radius - r
        grad = -e
        proj = np.eye(self.dim)[None] - e[:, :, None] * e[:, None, :]
        hess = -proj / r[:, None, None]
        return d, grad, hess


@dataclass(frozen=True)
class Box(Domain):
    lo: tuple
    hi: tuple

    def __post_init__(self):
        object.__setattr__(self, "lo", tuple(float(v) for v in self.lo))
        object.__setattr__(self, "hi", tuple(float(v) for v in self.hi))
        if len(self.lo) != len(self.hi) or len(self.lo) < 2:
            raise DomainError("box corners must share a dimension >= 2")
        if any(h <= l for l, h in zip(self.lo, self.hi)):
            raise DomainError("box must have positive extent")

    @property
    def dim(self):
        return len(self.lo)

    def level(self, x):
        x = _as_points(x, self.dim)
        return np.max(np.maximum(np.asarray(self.lo) - x, x - np.asarray(self.hi)), axis=1)

    def bounds(self):
        return np.asarray(self.lo), np.asarray(self.hi)

    def sample_boundary(self, count, rng):
        lo, hi = self.bounds()
        pts = lo + (hi - lo) * rng.random((count, self.dim))
        axis = rng.integers(0, self.dim, count)
        side = rng.integers(0, 2, count)
        rows = np.arange(count)
        pts[rows, axis] = np.where(side == 0, lo[axis], hi[axis])
        normals = np.zeros_like(pts)
        normals[rows, axis] = np.where(side == 0, 1.0, -1.0)
        return pts, normals


@dataclass(frozen=True)
class Annulus(Domain):
    center: tuple
    r_in: float
    r_out: float

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        if not (0 < self.r_in < self.r_out):
            raise DomainError("annulus radii must satisfy 0 < r_in < r_out")

    @property
    def dim(self):
        return len(self.center)

    def level(self, x):
        x = _as_points(x, self.dim)
        r = np.linalg.norm(x - np.asarray(self.center), axis=1)
        return np.maximum(self.r_in - r, r - self.r_out)

    def bounds(self):
        c = np.asarray(self.center)
        return c - self.r_out, c + self.r_out

    def sample_boundary(self, count, rng):
        u = _unit_sphere(count, self.dim, rng)
        outer = rng.random(count) < 0.5
        rad = np.where(outer, self.r_out, self.r_in)
        normals = np.where(outer[:, None], -u, u)
        return np.asarray(self.center) + rad[:, None] * u, normals

    def mean_curvature(self, y):
        y = _as_points(y, self.dim)[0]
        r = np.linalg.norm(y - np.asarray(self.center))
        if abs(r - self.r_out) <= 1e-8 * self.r_out:
            return 1.0 / self.r_out
        if abs(r - self.r_in) <= 1e-8 * self.r_in:
            return -1.0 / self.r_in
        raise DomainError("point is not on the boundary")

    def min_mean_curvature(self):
        return -1.0 / self.r_in

    def reach(self):
        return 0.5 * (self.r_out - self.r_in)

    def distance_derivatives(self, x):
        x = _as_points(x, self.dim)
        rel = x - np.asarray(self.center)
        r = np.linalg.norm(rel, axis=1)
        e = rel / r[:, None]
        outer = (self.r_out - r) <= (r - self.r_in)
        d = np.where(outer, self.r_out - r, r - self.r_in)
        sign = np.where(outer, -1.0, 1.0)
        proj = np.eye(self.dim)[None] - e[:, :, None] * e[:, None, :]
        return d, sign[:, None] * e, sign[:, None, None] * proj / r[:, None, None]


@dataclass(frozen=True)
class Cylinder(Domain):
    """Half-infinite cylinder ``C_N(M) = {x1 > N, |x'| < M}``."""

    N: float
    M: float
    dim: int = 2
    bounded = False

    def __post_init__(self):
        if not self.M > 0:
            raise DomainError("cylinder radius M must be positive")
        if self.dim < 2:
            raise DomainError("dimension must be at least 2")

    def level(self, x):
        x = _as_points(x, self.dim)
        return np.maximum(self.N - x[:, 0], np.linalg.norm(x[:, 1:], axis=1) - self.M)

    def bounds(self):
        lo = np.full(self.dim, -self.M)
        hi = np.full(self.dim, self.M)
        lo[0], hi[0] = self.N, np.inf
        return lo, hi


@dataclass(frozen=True)
class Cone(Domain):
    """Open cone ``C(theta) = {x1 > 0, |x'| < x1 tan(theta)}``."""

    theta: float
    dim: int = 2
    bounded = False

    def __post_init__(self):
        if not (0 < self.theta < math.pi / 2):
            raise DomainError("cone angle must lie in (0, pi/2)")
        if self.dim < 2:
            raise DomainError("dimension must be at least 2")

    def level(self, x):
        x = _as_points(x, self.dim)
        rho = np.linalg.norm(x[:, 1:], axis=1)
        return rho * math.cos(self.theta) - x[:, 0] * math.sin(self.theta)

    def bounds(self):
        lo = np.full(self.dim, -np.inf)
        hi = np.full(self.dim, np.inf)
        lo[0] = 0.0
        return lo, hi


@dataclass(frozen=True)
class RoundedStrip(Domain):
    """U-type domain: half-infinite tube of radius ``rho`` with a round inlet cap.

    The axis is the ray ``{(cap + t, 0, ..., 0) : t >= 0}``; the domain is the
    set of points within distance ``rho`` of that ray.
    """

    rho: float
    cap: float
    dim: int = 2
    bounded = False

    def __post_init__(self):
        if not self.rho > 0:
            raise DomainError("strip half-width must be positive")

    def axis_distance(self, x):
        x = _as_points(x, self.dim)
        lateral = np.linalg.norm(x[:, 1:], axis=1)
        behind = np.hypot(np.minimum(x[:, 0] - self.cap, 0.0), lateral)
        return behind

    def level(self, x):
        return self.axis_distance(x) - self.rho

    def bounds(self):
        lo = np.full(self.dim, -self.rho)
        hi = np.full(self.dim, self.rho)
        lo[0], hi[0] = self.cap - self.rho, np.inf
        return lo, hi

    @property
    def inlet(self):
        return self.cap - self.rho

    def inside_cylinder(self, cyl: Cylinder) -> bool:
        """True when the strip lies in ``cyl`` with disjoint boundaries."""
        return self.rho < cyl.M and self.cap - self.rho > cyl.N

    def mean_curvature(self, y):
        return _tube_curvature(self, y, self.cap, math.inf)

    def min_mean_curvature(self):
        return (self.dim - 2) / ((self.dim - 1) * self.rho)

    def reach(self):
        return self.rho

    def sample_boundary(self, count, rng, x1_max: float | None = None):
        if x1_max is None:
            raise DomainError("sampling an unbounded strip requires x1_max")
        return _capsule_boundary(self.cap, x1_max, self.rho, self.dim, count, rng, far_cap=False)


def _tube_curvature(dom, y, a, b):
    y = _as_points(y, dom.dim)
    if abs(dom.level(y)[0]) > 1e-8 * dom.rho:
        raise DomainError("point is not on the boundary")
    x1 = y[0, 0]
    if x1 < a or x1 > b:
        return 1.0 / dom.rho
    return (dom.dim - 2) / ((dom.dim - 1) * dom.rho)


def _capsule_boundary(a, b_end, rho, dim, count, rng, far_cap=True):
    """Boundary samples of the tube around the segment [a, b_end] on the x1 axis."""
    dirs = _unit_sphere(count, dim, rng)
    lateral = _unit_sphere(count, dim - 1, rng)
    length = max(b_end - a, 0.0)
    cap_area = 1.0 if far_cap else 0.5
    weights = np.array([0.5, cap_area * 0.5 if far_cap else 0.0, length / (length + 2 * rho)])
    weights = weights / weights.sum()
    choice = rng.choice(3, size=count, p=weights)
    pts = np.empty((count, dim))
    normals = np.empty((count, dim))
    for k in range(count):
        if choice[k] == 0:
            v = dirs[k].copy()
            v[0] = -abs(v[0])
            pts[k] = np.r_[a, np.zeros(dim - 1)] + rho * v
            normals[k] = -v
        elif choice[k] == 1:
            v = dirs[k].copy()
            v[0] = abs(v[0])
            pts[k] = np.r_[b_end, np.zeros(dim - 1)] + rho * v
            normals[k] = -v
        else:
            t = a + length * rng.random()
            pts[k] = np.r_[t, rho * lateral[k]]
            normals[k] = np.r_[0.0, -lateral[k]]
    return pts, normals


@dataclass(frozen=True)
class Truncation(Domain):
    """Bounded piece ``Omega_j`` of an unbounded domain, cut at ``x1 <= x1_max``.

    A :class:`RoundedStrip` base is closed with a hemispherical cap touching
    ``x1 = x1_max`` (a capsule).  Any other base is intersected with the
    half-space ``x1 < x1_max``.
    """

    base: Domain
    x1_max: float

    def __post_init__(self):
        if not self.x1_max > self.base.inlet:
            raise DomainError("truncation x1_max must exceed the base inlet coordinate")
        if isinstance(self.base, RoundedStrip) and self.x1_max - self.base.rho < self.base.cap:
            raise DomainError("truncation too short for a rounded cap")

    @property
    def dim(self):
        return self.base.dim

    @property
    def rho(self):
        return self.base.rho

    @property
    def inlet(self):
        return self.base.inlet

    @property
    def rounded(self) -> bool:
        return isinstance(self.base, RoundedStrip)

    @property
    def far_center(self) -> float:
        return self.x1_max - self.base.rho

    def level(self, x):
        x = _as_points(x, self.dim)
        if self.rounded:
            s = np.clip(x[:, 0], self.base.cap, self.far_center)
            lateral = np.linalg.norm(x[:, 1:], axis=1)
            return np.hypot(x[:, 0] - s, lateral) - self.base.rho
        return np.maximum(self.base.level(x), x[:, 0] - self.x1_max)

    def bounds(self):
        lo, hi = self.base.bounds()
        lo, hi = lo.copy(), hi.copy()
        hi[0] = self.x1_max
        if np.any(~np.isfinite(lo)) or np.any(~np.isfinite(hi[1:])):
            if isinstance(self.base, Cone):
                w = self.x1_max * math.tan(self.base.theta)
                lo[1:], hi[1:] = -w, w
            else:
                raise DomainError("truncated domain is still unbounded")
        return lo, hi

    def artificial(self, x) -> np.ndarray:
        """Mask of boundary points lying on the artificial cut."""
        x = _as_points(x, self.dim)
        if self.rounded:
            return x[:, 0] > self.far_center
        return x[:, 0] >= self.x1_max - 1e-12

    def mean_curvature(self, y):
        if not self.rounded:
            raise DomainError("curvature unavailable")
        return _tube_curvature(self, y, self.base.cap, self.far_center)

    def min_mean_curvature(self):
        if not self.rounded:
            raise DomainError("curvature unavailable")
        return (self.dim - 2) / ((self.dim - 1) * self.base.rho)

    def reach(self):
        if not self.rounded:
            raise DomainError("reach unavailable")
        return self.base.rho

    def sample_boundary(self, count, rng):
        if not self.rounded:
            raise DomainError("boundary sampling unavailable for cut domains")
        return _capsule_boundary(self.base.cap, self.far_center, self.base.rho, self.dim, count, rng)

    def distance_derivatives(self, x):
        if not self.rounded:
            return super().distance_derivatives(x)
        x = _as_points(x, self.dim)
        s = np.clip(x[:, 0], self.base.cap, self.far_center)
        foot = np.zeros_like(x)
        foot[:, 0] = s
        rel = x - foot
        r = np.linalg.norm(rel, axis=1)
        e = rel / r[:, None]
        d = self.base.rho - r
        hess = np.empty((x.shape[0], self.dim, self.dim))
        on_tube = (x[:, 0] > self.base.cap) & (x[:, 0] < self.far_center)
        eye = np.eye(self.dim)
        proj = eye[None] - e[:, :, None] * e[:, None, :]
        tube_proj = proj.copy()
        tube_proj[:, 0, :] = 0.0
        tube_proj[:, :, 0] = 0.0
        hess = -np.where(on_tube[:, None, None], tube_proj, proj) / r[:, None, None]
        return d, -e, hess


# -- public operations -------------------------------------------------------

def boundary_distance(domain: Domain, point) -> float:
    """Distance from ``point`` (in the closure of ``domain``) to the boundary."""
    p = _as_points(point, domain.dim)
    lev = domain.level(p)[0]
    if lev > 1e-12:
        raise DomainError("point lies outside the domain")
    if isinstance(domain, Cone):
        x1 = p[0, 0]
        return max(x1 * math.sin(domain.theta) - np.linalg.norm(p[0, 1:]) * math.cos(domain.theta), 0.0)
    if isinstance(domain, (Ball, Box, Annulus, Cylinder, RoundedStrip, Truncation)):
        return float(max(-lev, 0.0))
    pts, _ = domain.sample_boundary(20000, np.random.default_rng(0))
    return float(np.min(np.linalg.norm(pts - p, axis=1)))


def boundary_mean_curvature(domain: Domain, boundary_point) -> float:
    """Mean curvature (average of principal curvatures, inner normal) at a boundary point."""
    return float(domain.mean_curvature(boundary_point))


def truncate(domain: Domain, j: int, schedule: Sequence[float]) -> Truncation:
    """Bounded truncation ``Omega_j`` for the (0-based) index ``j`` of ``schedule``."""
    sched = np.asarray(schedule, dtype=float)
    if sched.ndim != 1 or sched.size == 0:
        raise DomainError("schedule must be a non-empty list of cut positions")
    if np.any(np.diff(sched) <= 0):
        raise DomainError("truncation schedule must be strictly increasing")
    if not (isinstance(domain, (RoundedStrip, Cone, Cylinder))):
        raise DomainError("truncation requires a cylinder- or cone-contained domain")
    return Truncation(domain, float(sched[j]))


def unit_ball_volume(n: int) -> float:
    return math.pi ** (n / 2) / math.gamma(n / 2 + 1)


def volume_estimate(domain: Domain, samples: int = 100_000, seed: int = 0) -> float:
    """Monte Carlo volume of a bounded domain."""
    lo, hi = domain.bounds()
    if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
        raise DomainError("unbounded domain requires truncation")
    rng = np.random.default_rng(seed)
    pts = lo + (hi - lo) * rng.random((samples, domain.dim))
    return float(np.prod(hi - lo) * np.mean(domain.contains(pts)))


def volume_condition(domain: Domain, samples: int = 100_000, seed: int = 0) -> tuple[bool, float, float]:
    """``(holds, volume, limit)`` for the sufficient condition ``|Omega| < n^n alpha_n``."""
    n = domain.dim
    vol = volume_estimate(domain, samples, seed)
    limit = n**n * unit_ball_volume(n)
    return vol < limit, vol, limit


# -- grids -------------------------------------------------------------------

@dataclass(eq=False)
class Grid:
    """Uniform lattice restricted to a domain.

    Unknowns are the lattice nodes strictly inside the domain.  Where an axis
    arm from a node leaves the domain, the crossing point on the boundary is
    stored as a *boundary point*; its value is Dirichlet data.  A field on the
    grid is a vector of length ``size = n_nodes + n_bpoints`` with node values
    first.
    """

    domain: Domain
    h: float
    origin: np.ndarray
    shape: tuple
    lattice_class: np.ndarray      # class per lattice point (flattened C order)
    lattice_node: np.ndarray       # node id per lattice point, -1 if exterior
    nodes: np.ndarray              # (N, n) coordinates
    node_class: np.ndarray         # INTERIOR or BOUNDARY_CUT
    nbr: np.ndarray                # (N, n, 2) column index of the -/+ neighbour
    arm: np.ndarray                # (N, n, 2) arm lengths
    bpoints: np.ndarray            # (B, n) boundary crossing coordinates
    _ops: dict = field(default_factory=dict, repr=False)

    @property
    def dim(self) -> int:
        return self.nodes.shape[1]

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_bpoints(self) -> int:
        return self.bpoints.shape[0]

    @property
    def size(self) -> int:
        return self.n_nodes + self.n_bpoints

    @property
    def points(self) -> np.ndarray:
        return np.vstack([self.nodes, self.bpoints])

    @property
    def interior(self) -> np.ndarray:
        return self.node_class == INTERIOR

    def lattice_points(self) -> np.ndarray:
        idx = np.indices(self.shape).reshape(self.dim, -1).T
        return self.origin + self.h * idx

    def node_neighbor(self, node: np.ndarray, axis: int, side: int) -> np.ndarray:
        """Neighbouring node id along ``axis`` (side 0 = minus, 1 = plus) or -1."""
        col = self.nbr[node, axis, side]
        return np.where(col < self.n_nodes, col, -1)

    def to_csv(self, path) -> None:
        pts = self.lattice_points()
        node_of = self.lattice_node
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["index"] + [f"x{i + 1}" for i in range(self.dim)] + ["class"]
                       + [f"arm{i + 1}" for i in range(self.dim)])
            for k, p in enumerate(pts):
                cls = int(self.lattice_class[k])
                if node_of[k] >= 0:
                    arms = [f"{a:.17g}" for a in self.arm[node_of[k]].min(axis=1)]
                else:
                    arms = [""] * self.dim
                w.writerow([k] + [f"{v:.17g}" for v in p] + [CLASS_NAMES[cls]] + arms)


def classify_nodes(domain: Domain, h: float, origin=None, snap: float = 1e-10) -> Grid:
    """Build the lattice ``origin + h*Z^n`` over ``domain`` and classify its nodes.

    Lattice points with ``level < -snap*h`` are nodes; a node whose 2n axis
    neighbours are all nodes is *interior*, otherwise *boundary_cut* with the
    cut arms measured to the boundary by bisection along the axis.
    """
    if not h > 0:
        raise DomainError("grid spacing must be positive")
    if not domain.bounded:
        raise DomainError("unbounded domain requires truncation")
    lo, hi = domain.bounds()
    if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
        raise DomainError("unbounded domain requires truncation")
    n = domain.dim
    origin = np.zeros(n) if origin is None else np.asarray(origin, dtype=float)
    kmin = np.ceil((lo - origin) / h - 1e-9).astype(int)
    kmax = np.floor((hi - origin) / h + 1e-9).astype(int)
    shape = tuple(int(v) for v in (kmax - kmin + 1))
    start = origin + h * kmin
    idx = np.indices(shape).reshape(n, -1).T
    pts = start + h * idx
    inside = domain.level(pts) < -snap * h
    lattice_node = np.full(pts.shape[0], -1, dtype=np.int64)
    node_ids = np.flatnonzero(inside)
    lattice_node[node_ids] = np.arange(node_ids.size)
    nodes = pts[node_ids]
    N = nodes.shape[0]
    if N == 0:
        raise DomainError("grid too coarse: no nodes inside the domain")

    strides = np.array([int(np.prod(shape[i + 1:])) for i in range(n)])
    nbr = np.empty((N, n, 2), dtype=np.int64)
    arm = np.full((N, n, 2), h)
    cut_src, cut_axis, cut_side = [], [], []
    node_idx = idx[node_ids]
    for i in range(n):
        for s, sign in enumerate((-1, 1)):
            k_nb = node_idx[:, i] + sign
            in_box = (k_nb >= 0) & (k_nb < shape[i])
            flat = node_ids + sign * strides[i]
            nb_node = np.full(N, -1, dtype=np.int64)
            nb_node[in_box] = lattice_node[flat[in_box]]
            nbr[:, i, s] = nb_node
            missing = np.flatnonzero(nb_node < 0)
            cut_src.append(missing)
            cut_axis.append(np.full(missing.size, i))
            cut_side.append(np.full(missing.size, s))
    src = np.concatenate(cut_src)
    axes = np.concatenate(cut_axis)
    sides = np.concatenate(cut_side)
    direction = np.zeros((src.size, n))
    direction[np.arange(src.size), axes] = np.where(sides == 0, -1.0, 1.0)
    # bisection for the crossing t in (0, h]: level(x + t e) changes sign
    a = np.zeros(src.size)
    b = np.full(src.size, h)
    x0 = nodes[src]
    for _ in range(64):
        mid = 0.5 * (a + b)
        out = domain.level(x0 + mid[:, None] * direction) >= 0.0
        b = np.where(out, mid, b)
        a = np.where(out, a, mid)
    t = b
    bpoints = x0 + t[:, None] * direction
    bp_cols = N + np.arange(src.size)
    nbr[src, axes, sides] = bp_cols
    arm[src, axes, sides] = t
    node_class = np.full(N, INTERIOR, dtype=np.int8)
    node_class[np.unique(src)] = BOUNDARY_CUT
    lattice_class = np.full(pts.shape[0], EXTERIOR, dtype=np.int8)
    lattice_class[node_ids] = node_class
    return Grid(domain, float(h), start, shape, lattice_class, lattice_node, nodes,
                node_class, nbr, arm, bpoints)


@dataclass(eq=False)
class ScalarField:
    """Values on ``grid.points`` (nodes first, then boundary points)."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.size,):
            raise DomainError(f"field needs {self.grid.size} values, got {self.values.shape}")

    @property
    def nodal(self) -> np.ndarray:
        return self.values[: self.grid.n_nodes]

    @property
    def boundary(self) -> np.ndarray:
        return self.values[self.grid.n_nodes:]

    @classmethod
    def from_function(cls, grid: Grid, f: Callable) -> "ScalarField":
        return cls(grid, np.asarray(f(grid.points), dtype=float).reshape(-1))

    def copy(self) -> "ScalarField":
        return ScalarField(self.grid, self.values.copy())

    def __add__(self, other):
        if isinstance(other, ScalarField):
            if other.grid is not self.grid:
                raise DomainError("fields live on different grids")
            other = other.values
        return ScalarField(self.grid, self.values + other)

    def to_csv(self, path) -> None:
        pts = self.grid.points
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"x{i + 1}" for i in range(self.grid.dim)] + ["u"])
            for p, v in zip(pts, self.values):
                w.writerow([f"{c:.17g}" for c in p] + [f"{v:.17g}"])
