"""Boundary barriers ``w = phi +/- psi(d)`` built from the distance to the boundary."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Callable

import numpy as np

from .domain import Domain, DomainError
from .operators import OperatorParams, coeff_a_b

C3_FLOOR = 1e-6


class BarrierError(ValueError):
    pass


@dataclass(frozen=True)
class BarrierSpec:
    c1: float
    c2: float
    c3: float
    nu: float
    d1: float
    k: float
    a: float
    m: float
    H0: float
    grad_sup: float       # sup |D phi| on the collar
    hess_sup: float       # sup |D^2 phi| (Frobenius)
    dist_hess_sup: float  # sup |D^2 d| (Frobenius)
    collar: float

    def to_dict(self) -> dict:
        return {k: float(v) for k, v in asdict(self).items()}


def fd_derivatives(f: Callable, X: np.ndarray, step: float = 1e-4):
    """Central finite-difference gradient and Hessian of a vectorised function."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    n = X.shape[1]
    eye = np.eye(n) * step
    f0 = np.asarray(f(X), dtype=float)
    grad = np.empty_like(X)
    hess = np.empty((X.shape[0], n, n))
    for i in range(n):
        fp = f(X + eye[i])
        fm = f(X - eye[i])
        grad[:, i] = (fp - fm) / (2 * step)
        hess[:, i, i] = (fp - 2 * f0 + fm) / step**2
        for j in range(i + 1, n):
            v = (f(X + eye[i] + eye[j]) - f(X + eye[i] - eye[j])
                 - f(X - eye[i] + eye[j]) + f(X - eye[i] - eye[j])) / (4 * step**2)
            hess[:, i, j] = hess[:, j, i] = v
    return f0, grad, hess


def collar_sample(domain: Domain, width: float, count: int, rng) -> tuple[np.ndarray, np.ndarray]:
    """Points ``y + t nu(y)`` with ``y`` on the boundary and ``t`` uniform in ``(0, width)``."""
    Y, normals = domain.sample_boundary(count, rng)
    t = width * (1.0 - rng.random(count))
    t = np.minimum(t, width * (1 - 1e-12))
    return Y + t[:, None] * normals, t


def _nu(params: OperatorParams, H0: float, s1: float) -> float:
    n, alpha = params.n, params.alpha
    base = (n - 1) * H0
    if alpha >= 1:
        return max(1.0, 2.0 / base)
    nu = 1.0
    for _ in range(200):
        cond = base - ((1 + 2 * s1**2) / nu**2 + 2) ** ((1 - alpha) / 2) * nu ** (-alpha)
        if cond >= 0.1 * base:
            return nu
        nu *= 2.0
    raise BarrierError("no admissible nu found")


def collar_width(domain: Domain, H0: float, samples: int = 2000, seed: int = 0) -> float:
    """Halve the collar until the distance Laplacian stays below ``-(n-1) H0``."""
    rng = np.random.default_rng(seed)
    n = domain.dim
    width = domain.reach()
    for _ in range(60):
        width *= 0.5
        X, _ = collar_sample(domain, width, samples, rng)
        _, _, D2d = domain.distance_derivatives(X)
        lap = np.trace(D2d, axis1=1, axis2=2)
        if np.all(lap <= -(n - 1) * H0 * (1 - 1e-9)):
            return width
    raise BarrierError("collar curvature condition never satisfied")


def barrier_constants(domain: Domain, phi: Callable, params: OperatorParams, m: float,
                      samples: int = 4000, seed: int = 0) -> BarrierSpec:
    """Constants of the logarithmic barrier on a mean-convex domain.

    Suprema of ``phi`` and its derivatives are sampled on the collar; the
    derivatives are central finite differences.
    """
    try:
        H0 = domain.min_mean_curvature()
    except DomainError as exc:
        raise BarrierError(str(exc)) from exc
    if not H0 > 0:
        raise BarrierError("mean convexity violated")
    n = params.n
    width = collar_width(domain, H0, seed=seed)
    rng = np.random.default_rng(seed)
    X, _ = collar_sample(domain, width, samples, rng)
    Y, _ = domain.sample_boundary(samples, rng)
    P = np.vstack([X, Y])
    f0, g, H = fd_derivatives(phi, P)
    a = float(np.max(np.abs(f0)))
    s1 = float(np.max(np.linalg.norm(g, axis=1)))
    s2 = float(np.max(np.linalg.norm(H, axis=(1, 2))))
    if s2 < 1e-6:
        s2 = 0.0  # rounding noise of the second differences
    _, _, D2d = domain.distance_derivatives(X)
    sD2d = float(np.max(np.linalg.norm(D2d, axis=(1, 2))))
    nu = _nu(params, H0, s1)
    c1 = 2 * n**2 * ((1 + 2 * s1**2) / nu + 2) * s2
    c2 = sD2d * (n**2 * s1**2 / nu + 2 * n * s1)
    c3 = max(c1 + c2, C3_FLOOR)
    d1 = 0.5 * min(1.0 / (nu * c3), width, 1.0)
    k = math.expm1(c3 * (a + m)) / d1 + nu * c3 / (1 - nu * c3 * d1)
    return BarrierSpec(c1, c2, c3, nu, d1, k, a, float(m), float(H0), s1, s2, sD2d, width)


def psi_eval(spec: BarrierSpec, dval):
    """``psi = ln(1 + k d)/c3`` and its first two derivatives."""
    d = np.asarray(dval, dtype=float)
    if np.any(d < 0) or np.any(d > spec.d1 * (1 + 1e-12)):
        raise BarrierError("distance outside [0, d1]")
    psi = np.log1p(spec.k * d) / spec.c3
    dpsi = spec.k / (spec.c3 * (1 + spec.k * d))
    ddpsi = -spec.c3 * dpsi**2
    if d.ndim == 0:
        return float(psi), float(dpsi), float(ddpsi)
    return psi, dpsi, ddpsi


def barrier_values(spec: BarrierSpec, domain: Domain, phi: Callable, X, sign: int) -> np.ndarray:
    """``phi + sign * psi(d)`` at points of the collar."""
    d = domain.distance(np.atleast_2d(X))
    return np.asarray(phi(np.atleast_2d(X))) + sign * psi_eval(spec, d)[0]


def barrier_Q(spec: BarrierSpec, domain: Domain, phi: Callable, X, params: OperatorParams,
              sign: int) -> np.ndarray:
    """``Q(phi + sign psi(d))`` composed from exact ``psi`` derivatives."""
    X = np.atleast_2d(X)
    d, Dd, D2d = domain.distance_derivatives(X)
    psi, dpsi, ddpsi = psi_eval(spec, d)
    _, g, H = fd_derivatives(phi, X)
    p = g + sign * dpsi[:, None] * Dd
    hess = H + sign * (ddpsi[:, None, None] * Dd[:, :, None] * Dd[:, None, :]
                       + dpsi[:, None, None] * D2d)
    a, b = coeff_a_b(p, params)
    return np.einsum("kij,kij->k", a, hess) + b


def barrier_verify(spec: BarrierSpec, domain: Domain, phi: Callable, params: OperatorParams,
                   samples=10_000, seed: int = 0) -> dict:
    """Largest value of ``+Q w+`` and ``-Q w-`` over collar samples with ``0 < d < d1``."""
    if np.ndim(samples) == 0:
        X, _ = collar_sample(domain, spec.d1, int(samples), np.random.default_rng(seed))
    else:
        X = np.atleast_2d(samples)
    dist = domain.distance(X)
    if np.any(dist <= 0) or np.any(dist >= spec.d1):
        raise BarrierError("samples must satisfy 0 < d < d1")
    plus = barrier_Q(spec, domain, phi, X, params, +1)
    minus = -barrier_Q(spec, domain, phi, X, params, -1)
    worst = float(max(plus.max(), minus.max()))
    return {"constants": spec.to_dict(), "max_plus": float(plus.max()),
            "max_minus": float(minus.max()), "max_pm_residual": worst,
            "samples": int(X.shape[0]), "pass": bool(worst < 0)}


def gradient_bound(spec: BarrierSpec, phi=None) -> float:
    """Bound for ``sup |Du|`` on the boundary: ``sup |D phi| + k / c3``."""
    return spec.grad_sup + spec.k / spec.c3


def sup_bound_constant(u_max: float, phi_max: float, diameter: float) -> float:
    """Fitted ``C`` in ``sup |u| <= sup |phi| + C diam`` (diagnostic only)."""
    return max(u_max - phi_max, 0.0) / diameter
