"""Damped Newton solver for the discrete Dirichlet problem and a radial ODE oracle."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.interpolate import CubicHermiteSpline
from scipy.sparse.linalg import spsolve

from .domain import Domain, Grid, ScalarField, classify_nodes, volume_condition
from .operators import OperatorParams, coeff_a_b, gradient, jacobian, operators, residual_nodal

log = logging.getLogger(__name__)


class SolverError(RuntimeError):
    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = list(history or [])


@dataclass
class SolveOptions:
    tol: float = 1e-10
    max_steps: int = 50
    backtrack: float = 0.5
    armijo: float = 1e-4
    min_step: float = 2.0**-30
    continuation: str = "auto"        # "auto", "alpha", "data" or "none"
    check_volume: bool = True

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tolerance must be positive")


@dataclass
class SolveReport:
    iterations: int = 0
    residual_history: list = field(default_factory=list)
    max_interior_gradient: float = float("nan")
    boundary_gradient: float = float("nan")
    warnings: list = field(default_factory=list)
    converged: bool = False
    stages: list = field(default_factory=list)
    tail_constant: float = float("nan")

    @property
    def final_residual(self) -> float:
        return self.residual_history[-1] if self.residual_history else float("nan")

    def to_dict(self) -> dict:
        return {
            "iterations": self.iterations,
            "residual_history": [float(r) for r in self.residual_history],
            "final_residual": float(self.final_residual),
            "max_interior_gradient": float(self.max_interior_gradient),
            "boundary_gradient": float(self.boundary_gradient),
            "warnings": list(self.warnings),
            "converged": self.converged,
            "stages": list(self.stages),
            "tail_constant": float(self.tail_constant),
        }


def row_scale(grid: Grid) -> np.ndarray:
    """Per-node scaling ``min(1, shortest arm / h)`` for residual norms.

    Rows with very short arms carry coefficients of size ``1/(arm h)``; the
    scaling keeps their rounding floor comparable to regular rows.
    """
    s = grid._ops.get("row_scale")
    if s is None:
        s = np.minimum(1.0, grid.arm.min(axis=(1, 2)) / grid.h)
        grid._ops["row_scale"] = s
    return s


def scaled_residual(u: ScalarField, params: OperatorParams, mode: str = "translator") -> np.ndarray:
    return residual_nodal(u, params, mode=mode) * row_scale(u.grid)


def rounding_floor(u: ScalarField, params: OperatorParams, mode: str = "translator") -> np.ndarray:
    """Per-row size of the residual that floating point cannot resolve.

    Sum of the magnitudes of the terms entering each row, times ``64 eps``.
    """
    grid = u.grid
    ops = operators(grid)
    absD = ops.get("absD")
    if absD is None:
        absD = [[abs(Dij) for Dij in row] for row in ops["D"]]
        ops["absD"] = absD
    a, b = coeff_a_b(gradient(u), params, mode)
    aU = np.abs(u.values)
    mag = np.abs(b).copy()
    for i in range(grid.dim):
        for j in range(grid.dim):
            mag += np.abs(a[:, i, j]) * (absD[i][j] @ aU)
    return 64.0 * np.finfo(float).eps * mag


def boundary_values(grid: Grid, phi) -> np.ndarray:
    """Dirichlet data at the boundary points of ``grid``."""
    if callable(phi):
        vals = np.asarray(phi(grid.bpoints), dtype=float).reshape(-1)
    else:
        vals = np.broadcast_to(np.asarray(phi, dtype=float), (grid.n_bpoints,)).copy()
    if vals.shape != (grid.n_bpoints,):
        raise SolverError("boundary data has the wrong length")
    if not np.all(np.isfinite(vals)):
        raise SolverError("boundary data is not finite")
    return vals


def harmonic_extension(grid: Grid, bvals: np.ndarray) -> ScalarField:
    """Discrete Laplace solution with boundary values ``bvals``."""
    D = operators(grid)["D"]
    N = grid.n_nodes
    L = sum(D[i][i] for i in range(grid.dim)).tocsc()
    rhs = -(L[:, N:] @ bvals)
    nodal = spsolve(L[:, :N].tocsc(), rhs)
    return ScalarField(grid, np.concatenate([np.atleast_1d(nodal), bvals]))


def newton(u0: ScalarField, params: OperatorParams, mode: str = "translator",
           opts: SolveOptions | None = None, history: list | None = None,
           free: np.ndarray | None = None):
    """Damped Newton iteration with boundary values held fixed.

    ``free`` optionally restricts the unknowns (and residual rows) to a subset
    of node indices; every other entry of the field is held fixed.  Returns
    ``(field, steps)`` and raises :class:`SolverError` on stagnation or a
    non-finite iterate.
    """
    opts = opts or SolveOptions()
    history = [] if history is None else history
    grid = u0.grid
    rows = np.arange(grid.n_nodes) if free is None else np.asarray(free, dtype=np.int64)
    U = u0.values.copy()
    u = ScalarField(grid, U)
    scale = row_scale(grid)[rows]

    def resid(field):
        return residual_nodal(field, params, mode=mode)[rows]

    tol = max(opts.tol, float(np.max(rounding_floor(u, params, mode)[rows] * scale))
              if rows.size else opts.tol)
    R = resid(u)
    merit = float(np.max(np.abs(R * scale))) if rows.size else 0.0
    history.append(merit)
    for step in range(1, opts.max_steps + 1):
        if merit <= tol:
            return u, step - 1
        J = jacobian(u, params, mode)[rows][:, rows].tocsc()
        delta = np.atleast_1d(spsolve(J, -R))
        if not np.all(np.isfinite(delta)):
            raise SolverError("non-finite Newton update", history)
        t = 1.0
        while True:
            trial = U.copy()
            trial[rows] += t * delta
            ut = ScalarField(grid, trial)
            Rt = resid(ut)
            mt = float(np.max(np.abs(Rt * scale))) if np.all(np.isfinite(Rt)) else np.inf
            if mt <= (1.0 - opts.armijo * t) * merit:
                break
            t *= opts.backtrack
            if t < opts.min_step:
                # accept a full step once the residual is at its rounding floor
                if merit <= 1e3 * tol and np.isfinite(mt):
                    break
                raise SolverError(f"line search failed at residual {merit:.3e}", history)
        U, u, R, merit = trial, ut, Rt, mt
        history.append(merit)
        tol = max(opts.tol, float(np.max(rounding_floor(u, params, mode)[rows] * scale)))
        log.debug("newton %s step %d residual %.3e (t=%.3g)", mode, step, merit, t)
    if merit <= tol:
        return u, opts.max_steps
    raise SolverError(f"Newton stagnated at residual {merit:.3e} after {opts.max_steps} steps",
                      history)


def _tail_constant(history) -> float:
    h = np.asarray(history, dtype=float)
    pairs = [(a, b) for a, b in zip(h[:-1], h[1:]) if a < 1e-3 and b > 1e-14]
    if not pairs:
        return float("nan")
    return float(max(b / a**2 for a, b in pairs))


def _continuation_alphas(target: float) -> list:
    alphas = [1.0]
    while alphas[-1] != target:
        a = alphas[-1]
        nxt = min(a * 2.0, target) if target > a else max(a / 2.0, target)
        alphas.append(nxt)
    return alphas


def solve_on_grid(grid: Grid, phi, params: OperatorParams, mode: str = "translator",
                  opts: SolveOptions | None = None, initial: ScalarField | None = None):
    """Solve ``Q u = 0`` (or the minimal-surface equation) on an existing grid."""
    opts = opts or SolveOptions()
    report = SolveReport()
    bvals = boundary_values(grid, phi)
    if opts.check_volume and mode == "translator":
        try:
            ok, vol, limit = volume_condition(grid.domain)
            if not ok:
                report.warnings.append(
                    f"volume {vol:.4g} exceeds n^n*alpha_n = {limit:.4g}; uniqueness not guaranteed")
        except Exception:  # unbounded or unsampled shapes
            pass

    if initial is not None:
        start = ScalarField(grid, np.concatenate([initial.values[: grid.n_nodes], bvals]))
        report.stages.append("initial")
    else:
        start = harmonic_extension(grid, bvals)
        report.stages.append("harmonic")
        try:
            start, _ = newton(start, params, "minimal", opts)
            report.stages.append("minimal")
        except SolverError as exc:
            report.warnings.append(f"minimal-surface start failed: {exc}")

    if mode == "minimal":
        history = report.residual_history
        u, steps = newton(start, params, "minimal", opts, history)
        report.iterations = steps
    else:
        try:
            u, steps = newton(start, params, mode, opts, report.residual_history)
            report.iterations = steps
            report.stages.append("translator")
        except SolverError as exc:
            if opts.continuation == "none":
                raise
            report.warnings.append(f"direct Newton failed ({exc}); using continuation")
            u = _continue(grid, start, bvals, params, opts, report)
    report.converged = True
    p = gradient(u)
    g = np.linalg.norm(p, axis=1)
    report.max_interior_gradient = float(g[grid.interior].max()) if grid.interior.any() else float("nan")
    cut = ~grid.interior
    report.boundary_gradient = float(g[cut].max()) if cut.any() else float("nan")
    report.tail_constant = _tail_constant(report.residual_history)
    return u, report


def _continue(grid, start, bvals, params, opts, report):
    kind = opts.continuation
    u = start
    if kind in ("auto", "alpha") and params.alpha != 1.0:
        try:
            for a in _continuation_alphas(params.alpha):
                u, steps = newton(u, OperatorParams(params.n, a), "translator", opts,
                                  report.residual_history)
                report.iterations += steps
                report.stages.append(f"alpha={a:g}")
            return u
        except SolverError as exc:
            if kind == "alpha":
                raise
            report.warnings.append(f"alpha continuation failed ({exc})")
            u = start
    # ramp the boundary data from zero
    base = harmonic_extension(grid, np.zeros_like(bvals))
    u = base
    for t in np.linspace(0.125, 1.0, 8):
        u = ScalarField(grid, np.concatenate([u.values[: grid.n_nodes], t * bvals]))
        u, steps = newton(u, params, "translator", opts, report.residual_history)
        report.iterations += steps
        report.stages.append(f"data={t:g}")
    return u


def solve_dirichlet(domain: Domain, phi, params: OperatorParams, mode: str = "translator",
                    opts: SolveOptions | None = None, h: float = 0.05,
                    grid: Grid | None = None):
    """Solve the Dirichlet problem on ``domain`` with boundary data ``phi``.

    Parameters
    ----------
    domain : Domain
        Bounded domain (or truncation).
    phi : callable or float
        Boundary data evaluated at boundary points, ``phi(points) -> values``.
    params : OperatorParams
    mode : {"translator", "minimal"}
    opts : SolveOptions, optional
    h : float
        Grid spacing used when ``grid`` is not supplied.

    Returns
    -------
    (ScalarField, SolveReport)
    """
    if mode not in ("translator", "minimal"):
        raise ValueError(f"unknown mode {mode!r}")
    grid = grid if grid is not None else classify_nodes(domain, h)
    return solve_on_grid(grid, phi, params, mode, opts)


# -- comparison and diagnostics --------------------------------------------

def compare_fields(u1: ScalarField, u2: ScalarField, slack: float = 1e-8) -> dict:
    if u1.grid is not u2.grid:
        raise ValueError("fields live on different grids")
    diff = u1.values - u2.values
    worst = float(np.max(diff))
    return {"leq": bool(worst <= slack), "max_violation": max(worst, 0.0)}


def gradient_diagnostics(u: ScalarField, coarse: ScalarField | None = None,
                         compact: Callable | None = None) -> dict:
    """Interior/boundary gradient maxima and an optional refinement check.

    ``coarse`` is a solution of the same problem on a grid with twice the
    spacing; ``compact`` is a mask function selecting a compact subset.
    """
    grid = u.grid
    g = np.linalg.norm(gradient(u), axis=1)
    interior = float(g[grid.interior].max())
    boundary = float(g[~grid.interior].max())
    out = {
        "max_interior_gradient": interior,
        "max_boundary_gradient": boundary,
        "h": grid.h,
        "maximum_principle": bool(interior <= boundary + 10 * grid.h),
    }
    if coarse is not None:
        sel = compact or (lambda X: grid.domain.distance(X) > 0.25)
        gc = np.linalg.norm(gradient(coarse), axis=1)
        fine_max = float(g[sel(grid.nodes)].max())
        coarse_max = float(gc[sel(coarse.grid.nodes)].max())
        change = abs(fine_max - coarse_max) / max(coarse_max, 1e-300)
        out.update({"compact_max_fine": fine_max, "compact_max_coarse": coarse_max,
                    "relative_change": change, "stable": bool(change < 0.05)})
    return out


# -- radial oracle -----------------------------------------------------------

@dataclass
class RadialProfile:
    n: int
    alpha: float
    r: np.ndarray
    u: np.ndarray
    du: np.ndarray

    def __post_init__(self):
        ddu = _radial_rhs(self.r, self.du, self.n, self.alpha)
        self._u = CubicHermiteSpline(self.r, self.u, self.du)
        self._du = CubicHermiteSpline(self.r, self.du, ddu)

    def __call__(self, r):
        return self._u(np.asarray(r, dtype=float))

    def derivative(self, r):
        return self._du(np.asarray(r, dtype=float))

    def field(self, X, center=None) -> np.ndarray:
        X = np.atleast_2d(X)
        c = np.zeros(X.shape[1]) if center is None else np.asarray(center)
        return self(np.linalg.norm(X - c, axis=1))

    def table(self) -> np.ndarray:
        return np.column_stack([self.r, self.u, self.du])


def _radial_rhs(r, v, n, alpha):
    """``u''`` for radial solutions; ``u''(0) = -1/n`` at the origin."""
    r = np.asarray(r, dtype=float)
    v = np.asarray(v, dtype=float)
    q = 1.0 + v * v
    with np.errstate(divide="ignore", invalid="ignore"):
        val = -(n - 1) * q * v / r - q ** ((3.0 - alpha) / 2.0)
    return np.where(r == 0.0, -1.0 / n, val)


def radial_oracle(params: OperatorParams, u0: float = 0.0, rmax: float = 1.0,
                  step: float = 1e-3) -> RadialProfile:
    """Integrate the radial reduction of ``Q u = 0`` from the origin with classical RK4.

    The step is shrunk so that it divides ``rmax`` exactly.
    """
    if not (rmax > 0 and step > 0):
        raise ValueError("rmax and step must be positive")
    n, alpha = params.n, params.alpha
    count = int(np.ceil(rmax / step - 1e-12))
    dr = rmax / count
    r = np.linspace(0.0, rmax, count + 1)
    u = np.empty(count + 1)
    v = np.empty(count + 1)
    u[0], v[0] = u0, 0.0

    def f(rr, vv):
        return float(_radial_rhs(rr, vv, n, alpha))

    for i in range(count):
        ri, ui, vi = r[i], u[i], v[i]
        k1u, k1v = vi, f(ri, vi)
        k2u, k2v = vi + 0.5 * dr * k1v, f(ri + 0.5 * dr, vi + 0.5 * dr * k1v)
        k3u, k3v = vi + 0.5 * dr * k2v, f(ri + 0.5 * dr, vi + 0.5 * dr * k2v)
        k4u, k4v = vi + dr * k3v, f(ri + dr, vi + dr * k3v)
        u[i + 1] = ui + dr / 6.0 * (k1u + 2 * k2u + 2 * k3u + k4u)
        v[i + 1] = vi + dr / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v)
        if not (np.isfinite(u[i + 1]) and np.isfinite(v[i + 1])):
            raise SolverError(f"radial profile blew up at r={r[i + 1]:.6g}")
    return RadialProfile(n, alpha, r, u, v)
