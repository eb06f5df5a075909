"""Discrete quasilinear operator ``Q u = a^{ij}(Du) D_ij u + b(Du)`` on cut-cell grids.

All derivative operators are sparse matrices of shape ``(N, N + B)`` acting on
the full value vector of a :class:`~hkflow.domain.ScalarField` (node values
followed by boundary-point values).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .domain import Grid, ScalarField


class OperatorError(ValueError):
    pass


@dataclass(frozen=True)
class OperatorParams:
    n: int = 2
    alpha: float = 1.0

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 2:
            raise OperatorError("dimension n must be an integer >= 2")
        if not self.alpha > 0:
            raise OperatorError("alpha must be positive")

    @property
    def k(self) -> float:
        """Power of mean curvature in the associated flow."""
        return 1.0 / self.alpha


@dataclass
class LinearSystem:
    matrix: sp.csr_matrix
    rhs: np.ndarray


MODES = ("translator", "minimal")


def coeff_a_b(p, params: OperatorParams, mode: str = "translator"):
    """Coefficients ``a^{ij}(p) = (1+|p|^2) delta_ij - p_i p_j`` and ``b(p)``.

    Accepts a single gradient of shape ``(n,)`` or a stack ``(N, n)``.
    """
    p = np.asarray(p, dtype=float)
    single = p.ndim == 1
    P = np.atleast_2d(p)
    q = 1.0 + np.einsum("ki,ki->k", P, P)
    a = q[:, None, None] * np.eye(P.shape[1])[None] - P[:, :, None] * P[:, None, :]
    b = q ** ((3.0 - params.alpha) / 2.0)
    if mode == "minimal":
        b = np.zeros_like(b)
    elif mode != "translator":
        raise OperatorError(f"unknown mode {mode!r}")
    if single:
        return a[0], float(b[0])
    return a, b


# -- stencils ----------------------------------------------------------------

def _first_derivative(grid: Grid, axis: int) -> sp.csr_matrix:
    N = grid.n_nodes
    hm = grid.arm[:, axis, 0]
    hp = grid.arm[:, axis, 1]
    rows = np.repeat(np.arange(N), 3)
    cols = np.column_stack([grid.nbr[:, axis, 0], np.arange(N), grid.nbr[:, axis, 1]]).ravel()
    vals = np.column_stack([
        -hp / (hm * (hm + hp)),
        (hp - hm) / (hm * hp),
        hm / (hp * (hm + hp)),
    ]).ravel()
    return sp.csr_matrix((vals, (rows, cols)), shape=(N, grid.size))


def _second_derivative(grid: Grid, axis: int) -> sp.csr_matrix:
    N = grid.n_nodes
    hm = grid.arm[:, axis, 0]
    hp = grid.arm[:, axis, 1]
    rows = np.repeat(np.arange(N), 3)
    cols = np.column_stack([grid.nbr[:, axis, 0], np.arange(N), grid.nbr[:, axis, 1]]).ravel()
    vals = np.column_stack([
        2.0 / (hm * (hm + hp)),
        -2.0 / (hm * hp),
        2.0 / (hp * (hm + hp)),
    ]).ravel()
    return sp.csr_matrix((vals, (rows, cols)), shape=(N, grid.size))


def _node_difference(grid: Grid, axis: int):
    """Differences of node quantities along ``axis`` using node neighbours only.

    Returns the ``(N, N)`` matrix and a mask of rows where a stencil exists.
    """
    N = grid.n_nodes
    h = grid.h
    m = grid.node_neighbor(np.arange(N), axis, 0)
    p = grid.node_neighbor(np.arange(N), axis, 1)
    rows, cols, vals = [], [], []
    both = (m >= 0) & (p >= 0)
    only_p = (m < 0) & (p >= 0)
    only_m = (m >= 0) & (p < 0)
    idx = np.flatnonzero(both)
    rows += [idx, idx]
    cols += [m[idx], p[idx]]
    vals += [np.full(idx.size, -0.5 / h), np.full(idx.size, 0.5 / h)]
    idx = np.flatnonzero(only_p)
    rows += [idx, idx]
    cols += [idx, p[idx]]
    vals += [np.full(idx.size, -1.0 / h), np.full(idx.size, 1.0 / h)]
    idx = np.flatnonzero(only_m)
    rows += [idx, idx]
    cols += [m[idx], idx]
    vals += [np.full(idx.size, -1.0 / h), np.full(idx.size, 1.0 / h)]
    T = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(N, N))
    return T, (m >= 0) | (p >= 0)


def _mixed_derivative(grid: Grid, i: int, j: int, G) -> sp.csr_matrix:
    Ti, ok_i = _node_difference(grid, i)
    Tj, ok_j = _node_difference(grid, j)
    if np.any(~ok_i & ~ok_j):
        raise OperatorError("grid too coarse for a Hessian stencil")
    # difference the nodal first derivatives: D_ij = (T_i G_j + T_j G_i) / 2
    A = Ti @ G[j]
    B = Tj @ G[i]
    wa = np.where(ok_i & ok_j, 0.5, np.where(ok_i, 1.0, 0.0))
    wb = np.where(ok_i & ok_j, 0.5, np.where(ok_j, 1.0, 0.0))
    return (sp.diags(wa) @ A + sp.diags(wb) @ B).tocsr()


def operators(grid: Grid) -> dict:
    """Cached derivative matrices: ``G[i]`` and ``D[i][j]``."""
    ops = grid._ops
    if "G" not in ops:
        n = grid.dim
        G = [_first_derivative(grid, i) for i in range(n)]
        D = [[None] * n for _ in range(n)]
        for i in range(n):
            D[i][i] = _second_derivative(grid, i)
            for j in range(i + 1, n):
                D[i][j] = D[j][i] = _mixed_derivative(grid, i, j, G)
        ops["G"], ops["D"] = G, D
    return ops


def _values(u) -> tuple[Grid, np.ndarray]:
    if not isinstance(u, ScalarField):
        raise OperatorError("expected a ScalarField")
    return u.grid, u.values


def gradient(u: ScalarField) -> np.ndarray:
    """Nodal gradient, shape ``(N, n)``."""
    grid, U = _values(u)
    G = operators(grid)["G"]
    return np.column_stack([Gi @ U for Gi in G])


def hessian(u: ScalarField) -> np.ndarray:
    """Nodal Hessian, shape ``(N, n, n)``."""
    grid, U = _values(u)
    D = operators(grid)["D"]
    n = grid.dim
    H = np.empty((grid.n_nodes, n, n))
    for i in range(n):
        for j in range(i, n):
            H[:, i, j] = H[:, j, i] = D[i][j] @ U
    return H


def _pad(grid: Grid, nodal: np.ndarray) -> ScalarField:
    return ScalarField(grid, np.concatenate([nodal, np.zeros(grid.n_bpoints)]))


def residual_nodal(u: ScalarField, params: OperatorParams, form: str = "nondivergence",
                   mode: str = "translator") -> np.ndarray:
    p = gradient(u)
    H = hessian(u)
    a, b = coeff_a_b(p, params, mode)
    aH = np.einsum("kij,kij->k", a, H)
    if form == "nondivergence":
        return aH + b
    if form == "divergence":
        # div(Du/W) by the product rule on the same discrete derivatives
        q = 1.0 + np.einsum("ki,ki->k", p, p)
        W = np.sqrt(q)
        trH = np.trace(H, axis1=1, axis2=2)
        pHp = np.einsum("ki,kij,kj->k", p, H, p)
        div = trH / W - pHp / W**3
        src = W ** (-params.alpha) if mode == "translator" else 0.0
        return div + src
    raise OperatorError(f"unknown form {form!r}")


def residual_Q(u: ScalarField, params: OperatorParams, form: str = "nondivergence",
               mode: str = "translator") -> ScalarField:
    """Nodal residual of ``Q`` (boundary entries are zero)."""
    return _pad(u.grid, residual_nodal(u, params, form, mode))


def jacobian(u: ScalarField, params: OperatorParams, mode: str = "translator") -> sp.csr_matrix:
    """Derivative of the nodal nondivergence residual w.r.t. all ``N + B`` values."""
    grid, U = _values(u)
    ops = operators(grid)
    G, D = ops["G"], ops["D"]
    n = grid.dim
    p = gradient(u)
    H = hessian(u)
    a, _ = coeff_a_b(p, params, mode)
    q = 1.0 + np.einsum("ki,ki->k", p, p)
    trH = np.trace(H, axis1=1, axis2=2)
    Hp = np.einsum("kij,kj->ki", H, p)
    c = 2.0 * p * trH[:, None] - 2.0 * Hp
    if mode == "translator":
        c = c + (3.0 - params.alpha) * (q ** ((1.0 - params.alpha) / 2.0))[:, None] * p
    J = sp.csr_matrix((grid.n_nodes, grid.size))
    for i in range(n):
        J = J + sp.diags(c[:, i]) @ G[i]
        for j in range(n):
            J = J + sp.diags(a[:, i, j]) @ D[i][j]
    return J.tocsr()


def linearize_Q(u: ScalarField, params: OperatorParams, mode: str = "translator") -> LinearSystem:
    """Newton system: square matrix with identity rows at boundary points.

    The right-hand side is ``-Q(u)`` on node rows and zero on boundary rows.
    """
    grid = u.grid
    J = jacobian(u, params, mode)
    eye = sp.hstack([sp.csr_matrix((grid.n_bpoints, grid.n_nodes)), sp.identity(grid.n_bpoints)])
    M = sp.vstack([J, eye]).tocsr()
    rhs = np.concatenate([-residual_nodal(u, params, mode=mode), np.zeros(grid.n_bpoints)])
    return LinearSystem(M, rhs)


# -- conservative flux discretisation ---------------------------------------

def flux_divergence(u: ScalarField) -> np.ndarray:
    """``div(Du / W)`` from fluxes at half-edge midpoints.

    The normal derivative at a half edge is the one-sided difference along the
    arm; transverse components are averaged from the two endpoint gradients
    (or taken from the node alone when the far end is a boundary point).  This
    is independent of the product-rule evaluation in :func:`residual_nodal`.
    """
    grid, U = _values(u)
    N = grid.n_nodes
    n = grid.dim
    p = gradient(u)
    div = np.zeros(N)
    ids = np.arange(N)
    for i in range(n):
        fluxes = []
        for s, sign in ((0, -1.0), (1, 1.0)):
            col = grid.nbr[:, i, s]
            arm = grid.arm[:, i, s]
            normal = sign * (U[col] - U[:N]) / arm
            is_node = col < N
            far = np.where(is_node, col, ids)
            trans = 0.5 * (p + p[far])
            trans = np.where(is_node[:, None], trans, p)
            q = 1.0 + normal**2 + np.sum(np.delete(trans, i, axis=1) ** 2, axis=1)
            fluxes.append(normal / np.sqrt(q))
        width = 0.5 * (grid.arm[:, i, 0] + grid.arm[:, i, 1])
        div += (fluxes[1] - fluxes[0]) / width
    return div


def flow_translation_check(u: ScalarField, params: OperatorParams, scheme: str = "flux",
                           nodes: str = "interior") -> float:
    """Deviation of the normal speed of ``V = -u + t`` from a unit translation.

    Returns ``max |W [div(DV/W)]^k - 1|`` with ``k = 1/alpha`` over the selected
    nodes (``"interior"`` or ``"all"``).  ``scheme="pointwise"`` evaluates the
    divergence with the same product-rule stencils as the residual.
    """
    grid = u.grid
    p = gradient(u)
    W = np.sqrt(1.0 + np.einsum("ki,ki->k", p, p))
    if scheme == "flux":
        div_u = flux_divergence(u)
    elif scheme == "pointwise":
        src = W ** (-params.alpha)
        div_u = residual_nodal(u, params, "divergence") - src
    else:
        raise OperatorError(f"unknown scheme {scheme!r}")
    mask = grid.interior if nodes == "interior" else np.ones(grid.n_nodes, bool)
    if not np.any(mask):
        raise OperatorError("no nodes selected")
    base = -div_u[mask]
    bad = np.flatnonzero(base <= 0.0)
    if bad.size:
        node = np.flatnonzero(mask)[bad[0]]
        raise OperatorError(f"profile not mean-convex at node {node}")
    dev = W[mask] * base ** params.k - 1.0
    return float(np.max(np.abs(dev)))
