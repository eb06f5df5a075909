"""Overlapping spherical-shell coverings of half-cylinders and cones.

Members are indexed from ``k = 1`` so that the first cylinder centre sits at
``a_1 = N`` and the first cone centre at ``b_1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class CoveringError(ValueError):
    pass


@dataclass(frozen=True)
class CoveringSeq:
    case: str                 # "cylinder" or "cone"
    dim: int
    d: float
    positions: np.ndarray     # a_k or b_k, k = 1..K
    # cylinder
    N: float = 0.0
    M: float = 1.0
    eps: float = 0.9
    # cone
    b1: float = 1.0
    theta: float = 0.0
    delta0: float = 1.0

    @property
    def K(self) -> int:
        return len(self.positions)

    def center(self, k: int) -> np.ndarray:
        c = np.zeros(self.dim)
        c[0] = self.positions[k - 1]
        return c

    def inner_radius(self, k: int) -> float:
        if self.case == "cylinder":
            return self.M
        return self.positions[k - 1] * math.sin(self.theta)

    def outer_radius(self, k: int) -> float:
        return self.inner_radius(k) * math.exp(self.d)

    def in_container(self, X) -> np.ndarray:
        X = np.atleast_2d(X)
        lateral = np.linalg.norm(X[:, 1:], axis=1)
        if self.case == "cylinder":
            return (X[:, 0] > self.N) & (lateral < self.M)
        return (X[:, 0] > 0) & (lateral < X[:, 0] * math.tan(self.theta))

    def members(self) -> list:
        return [
            {"k": k, "center": self.center(k).tolist(), "inner_radius": self.inner_radius(k),
             "outer_radius": self.outer_radius(k), "cap": float(self.positions[k - 1])}
            for k in range(1, self.K + 1)
        ]

    def to_dict(self) -> dict:
        out = {"case": self.case, "dim": self.dim, "d": self.d, "K": self.K,
               "positions": [float(v) for v in self.positions]}
        if self.case == "cylinder":
            out.update({"N": self.N, "M": self.M, "eps": self.eps})
        else:
            out.update({"b1": self.b1, "theta": self.theta, "delta0": self.delta0})
        return out


def cone_delta_bound(theta: float, d: float) -> float:
    """Upper end of the admissible ratio interval for cone centres."""
    s = math.sin(theta)
    if 1.0 - math.exp(d) * s <= 0.0:
        raise CoveringError("shell too thick for cone angle")
    return (1.0 - s) / (1.0 - math.exp(d) * s)


def covering_build(case: str, K: int, d: float, *, N: float = 0.0, M: float = 1.0,
                   eps: float = 0.9, b1: float = 1.0, theta: float | None = None,
                   delta0: float | None = None, dim: int = 2) -> CoveringSeq:
    """Build a cylinder covering ``a_k = N + (k-1) eps M (e^d - 1)`` or a cone covering
    ``b_k = delta0^(k-1) b1`` with ``delta0`` defaulting to the square root of its bound."""
    if K < 1:
        raise CoveringError("need at least one member")
    if not d > 0:
        raise CoveringError("shell exponent d must be positive")
    if case == "cylinder":
        if not M > 0:
            raise CoveringError("cylinder radius M must be positive")
        if not 0 < eps < 1:
            raise CoveringError("eps must lie in (0, 1)")
        step = eps * M * math.expm1(d)
        pos = N + step * np.arange(K)
        return CoveringSeq("cylinder", dim, d, pos, N=N, M=M, eps=eps)
    if case == "cone":
        if theta is None or not 0 < theta < math.pi / 2:
            raise CoveringError("cone angle must lie in (0, pi/2)")
        bound = cone_delta_bound(theta, d)
        if delta0 is None:
            delta0 = math.sqrt(bound)
        if not delta0 > 1:
            raise CoveringError("delta0 must exceed 1")
        pos = b1 * delta0 ** np.arange(K)
        return CoveringSeq("cone", dim, d, pos, b1=b1, theta=theta, delta0=delta0)
    raise CoveringError(f"unknown covering case {case!r}")


def member_mask(seq: CoveringSeq, k: int, X) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if not 1 <= k <= seq.K:
        raise CoveringError(f"member index {k} outside 1..{seq.K}")
    r = np.linalg.norm(X - seq.center(k), axis=1)
    return (seq.in_container(X) & (r > seq.inner_radius(k)) & (r < seq.outer_radius(k))
            & (X[:, 0] < seq.positions[k - 1]))


def member_contains(seq: CoveringSeq, k: int, x) -> bool:
    return bool(member_mask(seq, k, x)[0])


def covered_mask(seq: CoveringSeq, X) -> np.ndarray:
    X = np.atleast_2d(X)
    out = np.zeros(X.shape[0], bool)
    for k in range(1, seq.K + 1):
        out |= member_mask(seq, k, X)
    return out


# -- sampling ----------------------------------------------------------------

def _ball_directions(count, dim, rng):
    v = rng.standard_normal((count, dim))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def coverage_region_sample(seq: CoveringSeq, count: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform samples of the part of the container the K members must cover.

    Cylinder: ``N < x1 < a_K - M e^d``.  Cone: outside ``B(x_1, b_1)``,
    ``x1 < b_K cos^2(theta)`` and outside the inner ball of the last member.
    """
    dim = seq.dim
    pts = []
    need = count
    while need > 0:
        batch = max(2 * need, 1024)
        if seq.case == "cylinder":
            hi = seq.positions[-1] - seq.M * math.exp(seq.d)
            if hi <= seq.N:
                raise CoveringError("too few members to cover any region")
            lat = _ball_directions(batch, dim - 1, rng) if dim > 2 else rng.choice([-1.0, 1.0], (batch, 1))
            rad = seq.M * rng.random(batch) ** (1.0 / (dim - 1))
            x1 = seq.N + (hi - seq.N) * rng.random(batch)
            X = np.column_stack([x1, rad[:, None] * lat])
            keep = seq.in_container(X)
        else:
            top = seq.positions[-1] * math.cos(seq.theta) ** 2
            w = top * math.tan(seq.theta)
            X = np.column_stack([top * rng.random(batch), w * (2 * rng.random((batch, dim - 1)) - 1)])
            keep = (seq.in_container(X)
                    & (np.linalg.norm(X - seq.center(1), axis=1) > seq.b1)
                    & (np.linalg.norm(X - seq.center(seq.K), axis=1) > seq.inner_radius(seq.K)))
        X = X[keep][:need]
        pts.append(X)
        need -= X.shape[0]
    return np.vstack(pts)


def _sphere_piece_sample(seq, center, radius, x1_max, count, rng):
    """Points on a sphere with ``x1 < x1_max`` inside the container.

    Returns fewer than ``count`` points (possibly none) when the piece is
    empty or too thin to hit after repeated batches.
    """
    dim = center.size
    out = []
    need = count
    for _ in range(50):
        P = center + radius * _ball_directions(max(4 * need, 4096), dim, rng)
        P = P[(P[:, 0] < x1_max) & seq.in_container(P)][:need]
        out.append(P)
        need -= P.shape[0]
        if need == 0:
            break
    return np.vstack(out)


def handoff_samples(seq: CoveringSeq, k: int, count: int, rng) -> np.ndarray:
    """Sphere pieces that must be covered by the neighbouring member.

    Cylinder: ``{|x - x_{k+1}| = M e^d, x1 < a_{k+1}}`` inside the container
    (to lie in member k).  Cone: ``S_k = {|x - x_k| = L_k, x1 < b_k}`` inside
    the container (to lie in member k + 1).
    """
    if seq.case == "cylinder":
        return _sphere_piece_sample(seq, seq.center(k + 1), seq.outer_radius(k + 1),
                                    seq.positions[k], count, rng)
    return _sphere_piece_sample(seq, seq.center(k), seq.inner_radius(k),
                                seq.positions[k - 1], count, rng)


def covering_verify(seq: CoveringSeq, samples: int = 100_000, seed: int = 0) -> dict:
    """Sampled union coverage and handoff containment; counts violations."""
    rng = np.random.default_rng(seed)
    X = coverage_region_sample(seq, samples, rng)
    union_viol = int(np.count_nonzero(~covered_mask(seq, X)))
    handoff_viol = 0
    handoff_checked = 0
    per = max(samples // max(seq.K - 1, 1), 1)
    for k in range(1, seq.K):
        P = handoff_samples(seq, k, per, rng)
        target = k if seq.case == "cylinder" else k + 1
        handoff_checked += P.shape[0]
        handoff_viol += int(np.count_nonzero(~member_mask(seq, target, P)))
    return {
        "case": seq.case,
        "K": seq.K,
        "union_samples": int(X.shape[0]),
        "union_violations": union_viol,
        "handoff_samples": handoff_checked,
        "handoff_violations": handoff_viol,
        "pass": union_viol == 0 and handoff_viol == 0,
    }


# -- closed-form geometry used by the cone argument -------------------------

def sphere_intersection_x1(c1: float, r1: float, c2: float, r2: float) -> float:
    """x1-coordinate of the intersection of spheres centred on the x1 axis."""
    return (r1**2 - r2**2 + c2**2 - c1**2) / (2.0 * (c2 - c1))


def cone_intersection_x1(b: float, theta: float, d: float, delta0: float) -> float:
    """x1 of ``S_k`` meeting ``T_{k+1}`` in closed form (centres ``b`` and ``delta0 b``)."""
    s2 = math.sin(theta) ** 2
    return 0.5 * b * (1.0 + delta0 + s2 * (1.0 - delta0**2 * math.exp(2 * d)) / (delta0 - 1.0))


def cone_ratio_inequality(theta, d):
    """Both sides of the bound comparing the ratio interval with the tangent bound."""
    s = np.sin(theta)
    lhs = (1.0 - s) / (1.0 - s * np.exp(d))
    rhs = 1.0 / (1.0 - np.tan(theta) * np.sqrt(np.expm1(2 * d)))
    return lhs, rhs


def cone_distances(seq: CoveringSeq, k: int) -> tuple[float, float, float]:
    """Distances from the vertex to ``S_k``, ``T_{k+1}``, ``S_{k+1}``."""
    s = math.sin(seq.theta)
    bk, bk1 = seq.positions[k - 1], seq.positions[k]
    return bk * (1 - s), bk1 * (1 - math.exp(seq.d) * s), bk1 * (1 - s)
