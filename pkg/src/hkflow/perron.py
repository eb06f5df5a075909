"""Lifting, monotone Perron sweeps and exhaustion of unbounded domains."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .domain import (Ball, Cylinder, Domain, Grid, RoundedStrip, ScalarField,
                     classify_nodes, truncate)
from .operators import OperatorParams
from .solver import SolveOptions, SolverError, newton, residual_nodal, row_scale, solve_on_grid
from .special_functions import SupersolutionFamily


class PerronError(RuntimeError):
    pass


@dataclass
class LiftSchedule:
    subdomains: list
    sweeps: int = 200

    def __post_init__(self):
        if not self.subdomains:
            raise PerronError("schedule needs at least one subdomain")


def lift_nodes(grid: Grid, O: Domain) -> np.ndarray:
    return np.flatnonzero(O.contains(grid.nodes))


def lift(v: ScalarField, O: Domain, params: OperatorParams,
         opts: SolveOptions | None = None) -> ScalarField:
    """Replace ``v`` on the nodes inside ``O`` by the translator solution there.

    The inner problem uses the parent grid's stencils with every value outside
    ``O`` (including boundary points) fixed to ``v``.
    """
    opts = opts or SolveOptions(tol=1e-11)
    free = lift_nodes(v.grid, O)
    if free.size == 0:
        return v.copy()
    try:
        z, _ = newton(v, params, "translator", opts, free=free)
    except SolverError as exc:
        raise PerronError(f"inner lift solve failed: {exc}") from exc
    return z


def default_schedule(domain: Domain, spacing: float, radius_factor: float = 1.0) -> LiftSchedule:
    """Balls of radius ``radius_factor * spacing`` centred on a lattice over the domain."""
    lo, hi = domain.bounds()
    axes = [np.arange(l, h + spacing, spacing) for l, h in zip(lo, hi)]
    C = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, domain.dim)
    R = radius_factor * spacing
    keep = domain.level(C) < R
    return LiftSchedule([Ball(tuple(c), R) for c in C[keep]])


@dataclass
class PerronReport:
    sweeps: int = 0
    changes: list = field(default_factory=list)
    min_increment: float = 0.0
    residual: float = float("nan")
    cap_violation: float = float("-inf")

    def to_dict(self):
        return {"sweeps": self.sweeps, "changes": [float(c) for c in self.changes],
                "min_increment": float(self.min_increment), "residual": float(self.residual),
                "cap_violation": float(self.cap_violation)}


def perron_solve(domain: Domain, phi, params: OperatorParams, schedule: LiftSchedule,
                 tol: float = 1e-8, h: float = 0.0625, grid: Grid | None = None,
                 family: SupersolutionFamily | None = None, inner_tol: float | None = None):
    """Monotone lift sweeps seeded at the minimal-surface solution.

    Each lift must not decrease the iterate by more than ``1e-8``; the pointwise
    maximum of the old and lifted fields is kept.  Stops once a full sweep
    moves the field by less than ``tol``.
    """
    grid = grid if grid is not None else classify_nodes(domain, h)
    inner = SolveOptions(tol=inner_tol if inner_tol is not None else min(1e-11, 1e-3 * tol))
    v, _ = solve_on_grid(grid, phi, params, "minimal", inner)
    report = PerronReport()
    caps = family.cap(grid.points) if family is not None else None
    if caps is not None:
        report.cap_violation = float(np.max(np.where(np.isfinite(caps), v.values - caps, -np.inf)))
    for sweep in range(1, schedule.sweeps + 1):
        start = v.values.copy()
        for O in schedule.subdomains:
            z = lift(v, O, params, inner)
            inc = z.values - v.values
            low = float(inc.min())
            report.min_increment = min(report.min_increment, low)
            if low < -1e-8:
                raise PerronError(f"monotonicity violated (decrease {low:.3e})")
            v = ScalarField(grid, np.maximum(v.values, z.values))
        change = float(np.max(np.abs(v.values - start)))
        report.changes.append(change)
        report.sweeps = sweep
        if caps is not None:
            viol = float(np.max(np.where(np.isfinite(caps), v.values - caps, -np.inf)))
            report.cap_violation = max(report.cap_violation, viol)
        if change < tol:
            break
    else:
        raise PerronError(f"Perron sweeps did not settle (last change {report.changes[-1]:.3e})")
    report.residual = float(np.max(np.abs(residual_nodal(v, params) * row_scale(grid))))
    return v, report


def random_probes(grid: Grid, count: int = 20, seed: int = 0) -> list:
    """Balls with radius between ``3h`` and a tenth of the domain diameter."""
    rng = np.random.default_rng(seed)
    lo, hi = grid.domain.bounds()
    diam = float(np.linalg.norm(hi - lo))
    rmin, rmax = 3 * grid.h, max(diam / 10, 3 * grid.h * 1.01)
    centers = grid.nodes[rng.integers(0, grid.n_nodes, count)]
    radii = rmin + (rmax - rmin) * rng.random(count)
    return [Ball(tuple(c), float(r)) for c, r in zip(centers, radii)]


def subfunction_check(v: ScalarField, family: SupersolutionFamily | None, phi, params: OperatorParams,
                      probes: Sequence[Domain] | None = None, seed: int = 0,
                      slack: float = 1e-8) -> dict:
    """Sampled membership test for the subfunction class.

    Checks (1) ``v <= phi`` at boundary points, (2) ``v <= lift(v, O)`` for
    each probe ``O`` and (3) ``v <= w_k`` wherever a family member applies.
    """
    grid = v.grid
    bvals = np.asarray(phi(grid.bpoints), dtype=float) if callable(phi) else np.full(grid.n_bpoints, phi)
    c1 = float(np.max(v.boundary - bvals)) if grid.n_bpoints else -np.inf
    probes = probes if probes is not None else random_probes(grid, seed=seed)
    c2 = -np.inf
    for O in probes:
        z = lift(v, O, params)
        c2 = max(c2, float(np.max(v.values - z.values)))
    if family is not None:
        caps = family.cap(grid.points)
        finite = np.isfinite(caps)
        c3 = float(np.max(v.values[finite] - caps[finite])) if finite.any() else -np.inf
    else:
        c3 = -np.inf
    return {
        "boundary": {"max_violation": c1, "pass": bool(c1 <= slack)},
        "lift": {"max_violation": c2, "pass": bool(c2 <= slack), "probes": len(probes)},
        "caps": {"max_violation": c3, "pass": bool(c3 <= slack)},
        "pass": bool(c1 <= slack and c2 <= slack and c3 <= slack),
    }


# -- exhaustion ---------------------------------------------------------------

@dataclass
class ExhaustionResult:
    schedule: list
    sub: list
    sup: list
    gaps: list
    iterations: list
    cap_violation: list

    def to_dict(self) -> dict:
        return {"runs": [{"R": float(R), "gap": float(g), "iterations": it,
                          "cap_violation": float(cv)}
                         for R, g, it, cv in zip(self.schedule, self.gaps, self.iterations,
                                                 self.cap_violation)]}

    def nonincreasing(self, slack: float = 1e-10) -> bool:
        return all(b <= a + slack for a, b in zip(self.gaps, self.gaps[1:]))


def _blend(x1, start, end):
    """Smooth step from 0 at ``start`` to 1 at ``end``."""
    t = np.clip((x1 - start) / max(end - start, 1e-300), 0.0, 1.0)
    return t * t * (3 - 2 * t)


def exhaustion_solve(domain: RoundedStrip, phi, params: OperatorParams, schedule: Sequence[float],
                     family: SupersolutionFamily, h: float = 0.0625,
                     compact_x1: float = 2.0, blend_fraction: float = 0.25,
                     sub_data: Callable | None = None,
                     opts: SolveOptions | None = None) -> ExhaustionResult:
    """Bracket the unbounded-domain solution between two bounded solves per truncation.

    On each truncation the artificial part of the boundary (far cap plus a wall
    segment of length ``blend_fraction * R`` in front of it) receives data
    blended from ``phi`` toward the family cap ``min_k w_k`` (upper run) or
    toward ``sub_data`` (lower run, defaults to ``phi`` itself, the boundary
    trace of the minimal-surface solution for the data).  The gap is the
    largest difference of the two fields on nodes with ``x1 <= compact_x1``.
    """
    if not isinstance(domain, RoundedStrip):
        raise PerronError("exhaustion is implemented for rounded strips")
    cov = family.covering
    if cov.case == "cylinder":
        container = Cylinder(cov.N, cov.M, domain.dim)
        if not domain.inside_cylinder(container):
            raise PerronError("domain boundary must stay clear of the container boundary")
    opts = opts or SolveOptions()
    phi_f = phi if callable(phi) else (lambda X, c=float(phi): np.full(len(X), c))
    subs, sups, gaps, its, cviol = [], [], [], [], []
    for j, R in enumerate(schedule):
        Oj = truncate(domain, j, schedule)
        grid = classify_nodes(Oj, h)
        start = Oj.far_center - blend_fraction * R
        B = grid.bpoints
        w = _blend(B[:, 0], start, Oj.far_center)
        art = w > 0
        caps = np.zeros(len(B))
        caps[art] = family.cap(B[art])
        if np.any(~np.isfinite(caps)):
            raise PerronError("extend covering")
        base = phi_f(B)
        lower = sub_data(B) if sub_data is not None else base
        up_vals = base + w * (caps - base)
        lo_vals = base + w * (lower - base)
        u_sup, rep_sup = solve_on_grid(grid, up_vals, params, "translator", opts)
        u_sub, rep_sub = solve_on_grid(grid, lo_vals, params, "translator", opts)
        diff = u_sup.values - u_sub.values
        if diff.min() < -1e-8:
            raise PerronError("sub and super runs are not ordered")
        region = grid.points[:, 0] <= compact_x1
        gaps.append(float(diff[region].max()))
        node_caps = family.cap(grid.points)
        finite = np.isfinite(node_caps)
        cviol.append(float(max((u_sup.values - node_caps)[finite].max(),
                               (u_sub.values - node_caps)[finite].max())))
        subs.append(u_sub)
        sups.append(u_sup)
        its.append({"sup": rep_sup.iterations, "sub": rep_sub.iterations})
    return ExhaustionResult(list(schedule), subs, sups, gaps, its, cviol)
