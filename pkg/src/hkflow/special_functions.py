"""Radial super-solution profiles and the families built on shell coverings.

The profile ``h`` on ``[L, tau]`` solves the radial comparison ODE through the
pair ``xi``/``eta``: ``h'(r) = -eta(mu ln(r/L))`` with ``h(tau) = 0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy.integrate import quad

from .covering import CoveringSeq, covering_build, member_mask
from .operators import OperatorParams


class ProfileError(ValueError):
    pass


def phi_cap(rho, n: int):
    """``rho^-2`` below one and ``n - 1`` from one on."""
    rho = np.asarray(rho, dtype=float)
    if np.any(rho <= 0):
        raise ProfileError("phi_cap needs rho > 0")
    out = np.where(rho < 1.0, 1.0 / np.where(rho < 1.0, rho, 1.0) ** 2, float(n - 1))
    return out if out.ndim else float(out)


def xi(t, n: int):
    """``int_t^inf d rho / (rho^3 Phi(rho))`` in closed form."""
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise ProfileError("xi needs t > 0")
    c = 1.0 / (2.0 * (n - 1))
    safe = np.where(t > 0, t, 1.0)
    out = np.where(t >= 1.0, c / safe**2, -np.log(safe) + c)
    return out if out.ndim else float(out)


def eta(beta, n: int):
    """Inverse of :func:`xi`; ``eta(0) = inf``."""
    beta = np.asarray(beta, dtype=float)
    if np.any(beta < 0):
        raise ProfileError("eta needs beta > 0")
    c = 1.0 / (2.0 * (n - 1))
    with np.errstate(divide="ignore"):
        out = np.where(beta < c, 1.0 / np.sqrt(2.0 * (n - 1) * beta), np.exp(c - beta))
    return out if out.ndim else float(out)


def xi_eta(value, direction: str, n: int):
    if direction == "xi":
        return xi(value, n)
    if direction == "eta":
        if np.any(np.asarray(value) <= 0):
            raise ProfileError("eta needs beta > 0")
        return eta(value, n)
    raise ProfileError(f"unknown direction {direction!r}")


def growth_ratio(t, alpha: float):
    """``(1 + t^2)^((3 - alpha)/2) / t^3``, strictly decreasing in ``t > 0``."""
    t = np.asarray(t, dtype=float)
    return (1.0 + t * t) ** ((3.0 - alpha) / 2.0) / t**3


@dataclass(frozen=True)
class AuxProfile:
    n: int
    alpha: float
    mu: float
    L: float
    Hstar: float
    d: float
    case: str = "cylinder"
    theta: float | None = None

    def __post_init__(self):
        if not 0 < self.mu < 1:
            raise ProfileError("mu must lie in (0, 1)")
        if not (self.L > 0 and self.d > 0 and self.Hstar > 1):
            raise ProfileError("profile needs L > 0, d > 0, H* > 1")
        if self.d > xi(self.Hstar, self.n) / self.mu * (1 + 1e-12):
            raise ProfileError("d exceeds xi(H*)/mu; the gradient lower bound would fail")

    @property
    def tau(self) -> float:
        return self.L * math.exp(self.d)

    def with_shell(self, L: float | None = None, d: float | None = None) -> "AuxProfile":
        return replace(self, L=self.L if L is None else L, d=self.d if d is None else d)

    def feasible(self) -> bool:
        """Whether the growth ratio at ``H*`` meets the curvature budget on the shell."""
        return bool(growth_ratio(self.Hstar, self.alpha)
                    <= (self.n - 1) * (1 - self.mu) / self.tau)

    def to_dict(self) -> dict:
        return {"n": self.n, "alpha": self.alpha, "mu": self.mu, "L": self.L,
                "Hstar": self.Hstar, "d": self.d, "tau": self.tau, "case": self.case,
                "theta": self.theta}


def build_profile(n: int, alpha: float, mu: float, L: float, case: str = "cylinder",
                  theta: float | None = None, ladder_max: int = 1_000_000) -> AuxProfile:
    """Smallest integer ``H* >= 2`` whose shell satisfies the curvature budget.

    For each candidate ``d = xi(H*)/mu`` (capped at ``ln(1/sin theta)/2`` for
    cones) and the test is ``growth_ratio(H*) <= (n-1)(1-mu)/(L e^d)``.  The
    growth ratio is decreasing so its supremum over ``t >= H*`` is its value
    at ``H*``.
    """
    if not 0 < mu < 1:
        raise ProfileError("mu must lie in (0, 1)")
    if not L > 0:
        raise ProfileError("L must be positive")
    H = np.arange(2.0, ladder_max + 1.0)
    d = xi(H, n) / mu
    if case == "cone":
        if theta is None or not 0 < theta < math.pi / 2:
            raise ProfileError("cone profile needs theta in (0, pi/2)")
        d = np.minimum(d, 0.5 * math.log(1.0 / math.sin(theta)))
    elif case != "cylinder":
        raise ProfileError(f"unknown case {case!r}")
    ok = growth_ratio(H, alpha) <= (n - 1) * (1 - mu) / (L * np.exp(d))
    hit = np.flatnonzero(ok)
    if hit.size == 0:
        raise ProfileError("profile infeasible for given (n, alpha, mu, L)")
    i = hit[0]
    return AuxProfile(n, alpha, mu, L, float(H[i]), float(d[i]), case, theta)


# -- profile evaluation -----------------------------------------------------

def _sigma_integrand(sigma, n, mu):
    return eta(sigma * sigma, n) * sigma * math.exp(sigma * sigma / mu)


def _segment(prof: AuxProfile, s0: float, s1: float) -> float:
    if s1 <= s0:
        return 0.0
    star = math.sqrt(1.0 / (2.0 * (prof.n - 1)))
    pts = [star] if s0 < star < s1 else None
    val, _ = quad(_sigma_integrand, s0, s1, args=(prof.n, prof.mu), points=pts,
                  epsabs=1e-12, epsrel=1e-12, limit=200)
    return val


_GL_X, _GL_W = np.polynomial.legendre.leggauss(12)


def _gauss(prof: AuxProfile, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Gauss-Legendre on many short intervals; each must avoid the branch point."""
    mid = 0.5 * (a + b)
    half = 0.5 * (b - a)
    s = mid[:, None] + half[:, None] * _GL_X[None, :]
    f = eta(s * s, prof.n) * s * np.exp(s * s / prof.mu)
    return half * (f @ _GL_W)


@lru_cache(maxsize=256)
def _tail_table(prof: AuxProfile, table_size: int):
    top = math.sqrt(prof.mu * prof.d)
    star = math.sqrt(1.0 / (2.0 * (prof.n - 1)))
    nodes = np.linspace(0.0, top, table_size + 1)
    if 0.0 < star < top:
        nodes = np.unique(np.append(nodes, star))
    pieces = np.array([_segment(prof, nodes[i], nodes[i + 1]) for i in range(len(nodes) - 1)])
    # tail[j] = integral from nodes[j] to top
    tail = np.concatenate([np.cumsum(pieces[::-1])[::-1], [0.0]])
    return nodes, tail


def h_value(prof: AuxProfile, r, table_size: int = 64) -> np.ndarray:
    """``h(r) = int_r^tau eta(mu ln(t/L)) dt``.

    With ``t = L exp(sigma^2/mu)`` the integrand is bounded at ``r = L``.  A
    table of cumulative integrals on ``table_size`` sub-intervals (plus the
    branch point of ``eta``) is built with adaptive quadrature; each radius
    then adds a Gauss-Legendre piece from its own ``sigma`` to the next table
    node.
    """
    r = np.asarray(r, dtype=float)
    flat = r.reshape(-1)
    if np.any(flat < prof.L * (1 - 1e-14)) or np.any(flat > prof.tau * (1 + 1e-14)):
        raise ProfileError("radius outside [L, tau]")
    beta = prof.mu * np.log(np.clip(flat, prof.L, prof.tau) / prof.L)
    top = math.sqrt(prof.mu * prof.d)
    sig = np.clip(np.sqrt(np.maximum(beta, 0.0)), 0.0, top)
    nodes, tail = _tail_table(prof, table_size)
    j = np.clip(np.searchsorted(nodes, sig, side="right"), 1, len(nodes) - 1)
    upper = nodes[j]
    out = tail[j] + _gauss(prof, sig, upper)
    out = np.where(sig >= top, 0.0, out) * (2.0 * prof.L / prof.mu)
    return out.reshape(r.shape) if r.ndim else float(out[0])


def h_value_quad(prof: AuxProfile, r: float) -> float:
    """Single-radius evaluation by one adaptive quadrature call (reference path)."""
    if not prof.L <= r <= prof.tau:
        raise ProfileError("radius outside [L, tau]")
    s0 = math.sqrt(prof.mu * math.log(r / prof.L))
    return 2.0 * prof.L / prof.mu * _segment(prof, s0, math.sqrt(prof.mu * prof.d))


def h_derivatives(prof: AuxProfile, r):
    """``(h', h'')`` with ``h'' = (h')^3 (-mu/r) Phi(-h')``; ``h'(L) = -inf``."""
    r = np.asarray(r, dtype=float)
    beta = prof.mu * np.log(r / prof.L)
    d1 = -eta(np.maximum(beta, 0.0), prof.n)
    with np.errstate(invalid="ignore", over="ignore"):
        d2 = d1**3 * (-prof.mu / r) * phi_cap(np.where(np.isfinite(d1), -d1, 1.0), prof.n)
    d2 = np.where(np.isfinite(d1), d2, np.inf)
    return d1, d2


def h_eval(prof: AuxProfile, r):
    """``(h, h', h'')`` at radius ``r`` in ``[L, tau]``."""
    r = np.asarray(r, dtype=float)
    if np.any(r < prof.L) or np.any(r > prof.tau):
        raise ProfileError("radius outside [L, tau]")
    val = h_value(prof, r)
    d1, d2 = h_derivatives(prof, r)
    if r.ndim == 0:
        return float(val), float(d1), float(d2)
    return val, d1, d2


def h_closed_form(prof: AuxProfile, r):
    """Independent closed form of ``h`` through ``erfi`` (test oracle)."""
    from scipy.special import erfi

    r = np.asarray(r, dtype=float)
    n, mu = prof.n, prof.mu
    beta_star = 1.0 / (2.0 * (n - 1))
    star = math.sqrt(beta_star)
    sig = np.sqrt(mu * np.log(r / prof.L))
    top = math.sqrt(mu * prof.d)

    def low(a, b):
        # eta(s^2) s = 1/sqrt(2(n-1)) on s < star
        return math.sqrt(mu) * 0.5 * math.sqrt(math.pi) / math.sqrt(2 * (n - 1)) * (
            erfi(b / math.sqrt(mu)) - erfi(a / math.sqrt(mu)))

    def high(a, b):
        # eta(s^2) s e^{s^2/mu} = s exp(beta* + s^2 (1/mu - 1))
        g = 1.0 / mu - 1.0
        return math.exp(beta_star) * (np.exp(b * b * g) - np.exp(a * a * g)) / (2.0 * g)

    a = np.minimum(sig, star)
    lo_part = np.where(sig < star, low(a, min(top, star)), 0.0)
    b0 = np.maximum(sig, star)
    hi_part = np.where(top > star, high(np.minimum(b0, top), top), 0.0)
    return 2.0 * prof.L / mu * (lo_part + hi_part)


def radial_Q(prof: AuxProfile, r, params: OperatorParams):
    """``Q`` applied to ``x -> h(|x - c|)`` expressed in the radius."""
    d1, d2 = h_derivatives(prof, r)
    q = 1.0 + d1 * d1
    return d2 + (params.n - 1) * q * d1 / r + q ** ((3.0 - params.alpha) / 2.0)


def supersolution_w(prof: AuxProfile, center, x) -> np.ndarray:
    """``h(|x - center|)`` on the open shell ``L < |x - center| < tau``."""
    X = np.atleast_2d(np.asarray(x, dtype=float))
    r = np.linalg.norm(X - np.asarray(center, dtype=float), axis=1)
    if np.any(r <= prof.L) or np.any(r > prof.tau):
        raise ProfileError("point outside the profile shell")
    vals = h_value(prof, r)
    return vals if np.ndim(x) > 1 else float(vals[0])


def shell_radii(prof: AuxProfile, count: int = 10_000) -> np.ndarray:
    return np.linspace(prof.L, prof.tau, count + 2)[1:-1]


def verify_supersolution(prof: AuxProfile, center=None, samples=None,
                         params: OperatorParams | None = None) -> dict:
    """Largest value of ``Q w`` over sample points (or radii) inside the shell."""
    params = params or OperatorParams(prof.n, prof.alpha)
    if samples is None:
        r = shell_radii(prof)
    else:
        S = np.asarray(samples, dtype=float)
        if S.ndim == 1:
            r = S
        else:
            c = np.zeros(S.shape[1]) if center is None else np.asarray(center, dtype=float)
            r = np.linalg.norm(S - c, axis=1)
    if np.any(r <= prof.L) or np.any(r >= prof.tau):
        raise ProfileError("samples must lie strictly inside the shell")
    q = radial_Q(prof, r, params)
    i = int(np.argmax(q))
    return {"params": prof.to_dict(), "max_residual": float(q[i]),
            "argmax_radius": float(r[i]), "pass": bool(q[i] <= 0.0)}


# -- families ----------------------------------------------------------------

@dataclass
class SupersolutionFamily:
    """Super-solutions ``w_k`` on the members of a covering."""

    covering: CoveringSeq
    profile: AuxProfile                 # unit profile for cones, L = M for cylinders
    sups: np.ndarray                    # s_k
    offsets: np.ndarray                 # accumulated constants per member
    params: OperatorParams
    _peak: float = field(default=0.0, repr=False)

    @property
    def case(self) -> str:
        return self.covering.case

    @property
    def K(self) -> int:
        return self.covering.K

    def member_profile(self, k: int) -> AuxProfile:
        if self.case == "cylinder":
            return self.profile
        return self.profile.with_shell(L=self.covering.inner_radius(k))

    def member(self, k: int, X, check: bool = True) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if check and not np.all(member_mask(self.covering, k, X)):
            raise ProfileError(f"evaluation outside member {k}")
        r = np.linalg.norm(X - self.covering.center(k), axis=1)
        prof = self.member_profile(k)
        return h_value(prof, r) + self.offsets[k - 1] + self.sups[k - 1]

    def cap(self, X) -> np.ndarray:
        """Pointwise minimum over members containing each point (``inf`` if none)."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        out = np.full(X.shape[0], np.inf)
        for k in range(1, self.K + 1):
            m = member_mask(self.covering, k, X)
            if np.any(m):
                out[m] = np.minimum(out[m], self.member(k, X[m], check=False))
        return out

    def check_overlaps(self, samples_per_pair: int = 2000, seed: int = 0) -> dict:
        """Sampled ``w_k <= w_{k+1}`` on consecutive member overlaps."""
        rng = np.random.default_rng(seed)
        worst = -np.inf
        checked = 0
        cov = self.covering
        for k in range(1, self.K):
            c = cov.center(k)
            R = cov.outer_radius(k)
            X = c + R * (2 * rng.random((20 * samples_per_pair, cov.dim)) - 1)
            both = member_mask(cov, k, X) & member_mask(cov, k + 1, X)
            X = X[both][:samples_per_pair]
            if X.shape[0] == 0:
                continue
            diff = self.member(k, X, False) - self.member(k + 1, X, False)
            worst = max(worst, float(diff.max()))
            checked += X.shape[0]
        return {"checked": checked, "max_violation": worst, "pass": bool(worst <= 0.0)}


def family_build(covering: CoveringSeq, phi_sup_fn: Callable[[float], float] | None,
                 profile: AuxProfile, params: OperatorParams | None = None) -> SupersolutionFamily:
    """Attach profiles and offsets to a covering.

    ``phi_sup_fn(x1_max)`` returns ``sup |phi|`` over boundary points with
    ``x1 <= x1_max`` (``None`` means zero data).  For cylinders ``profile``
    must have ``L = M``; for cones it is a unit-scale profile (``L = 1``)
    rescaled per member.  The covering's ``d`` must not exceed the profile's.
    """
    params = params or OperatorParams(profile.n, profile.alpha)
    if covering.d > profile.d * (1 + 1e-12):
        raise ProfileError("covering shells are thicker than the profile allows")
    prof = profile.with_shell(d=covering.d)
    K = covering.K
    sups = np.array([0.0 if phi_sup_fn is None else float(phi_sup_fn(p)) for p in covering.positions])
    sups = np.maximum.accumulate(sups)
    if covering.case == "cylinder":
        if abs(prof.L - covering.M) > 1e-12 * covering.M:
            raise ProfileError("cylinder profile must have L = M")
        peak = h_value(prof, prof.L)
        offsets = peak * np.arange(K)
    else:
        unit = prof.with_shell(L=1.0)
        peak_unit = h_value(unit, 1.0)
        B = peak_unit * np.array([covering.inner_radius(k) for k in range(1, K + 1)])
        offsets = np.concatenate([[0.0], np.cumsum(B[:-1])])
        prof = unit
        peak = peak_unit
    return SupersolutionFamily(covering, prof, sups, offsets, params, float(peak))


def cone_family_inputs(n: int, alpha: float, mu: float, theta: float, b1: float, K: int):
    """Profile and cone covering consistent with each other for ``K`` members.

    The profile is built for the largest member radius ``L_K`` with ``d``
    capped for the cone; the covering then uses that ``d``.  A smaller ``d``
    only shrinks the ratio bound and hence ``L_K``, so the profile stays
    admissible for every member.
    """
    d_cap = 0.5 * math.log(1.0 / math.sin(theta))
    delta = math.sqrt(cone_ratio_bound(theta, d_cap))
    LK = b1 * delta ** (K - 1) * math.sin(theta)
    prof = build_profile(n, alpha, mu, LK, "cone", theta)
    cov = covering_build("cone", K, prof.d, b1=b1, theta=theta, dim=n)
    return prof.with_shell(L=1.0), cov


def cone_ratio_bound(theta, d):
    s = math.sin(theta)
    return (1 - s) / (1 - math.exp(d) * s)


def cylinder_family(N: float, M: float, params: OperatorParams, mu: float, x1_reach: float,
                    phi_sup_fn=None, eps: float = 0.9) -> SupersolutionFamily:
    """Family on ``C_N(M)`` with enough members to cover ``x1 < x1_reach``."""
    prof = build_profile(params.n, params.alpha, mu, M, "cylinder")
    step = eps * M * math.expm1(prof.d)
    K = int(math.ceil((x1_reach + M * math.exp(prof.d) - N) / step)) + 2
    cov = covering_build("cylinder", K, prof.d, N=N, M=M, eps=eps, dim=params.n)
    return family_build(cov, phi_sup_fn, prof, params)
