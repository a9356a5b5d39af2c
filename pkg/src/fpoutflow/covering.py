"""State spaces, uniform box coverings and piecewise-constant densities.

A covering is a uniform axis-aligned grid anchored at the bounding box of the
state space ``X``.  Only boxes that meet ``X`` are kept ("active"); they are
stored in row-major (C) order of their multi-index.  Densities live on the
active boxes and are coefficients of box indicators.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ConfigurationError, NumericalError, UsageError

# sample offsets (fractions of a box edge) used by the activity test
_ACTIVITY_OFFSETS = (np.arange(5) + 0.5) / 5.0


def _as_points(x, dim):
    pts = np.asarray(x, dtype=float)
    if pts.ndim == 1:
        pts = pts.reshape(-1, dim) if dim > 1 or pts.size != 1 else pts.reshape(1, 1)
    if pts.ndim != 2 or pts.shape[1] != dim:
        raise UsageError(f"expected points of shape (N, {dim}), got {np.shape(x)}")
    return pts


@dataclass(frozen=True)
class StateSpace:
    """Compact set ``X`` given by a bounding box and a membership predicate.

    ``membership`` and ``interior`` take an ``(N, d)`` array and return a
    boolean array of length ``N``.  When ``interior`` is omitted the
    membership predicate is used for it as well, which only differs from the
    true interior on a null set.
    """

    dim: int
    bounds: np.ndarray
    membership: Callable[[np.ndarray], np.ndarray]
    interior: Callable[[np.ndarray], np.ndarray] | None = None
    boundary_normal: Callable[[np.ndarray], np.ndarray] | None = None
    description: dict = field(default_factory=dict)

    def __post_init__(self):
        bounds = np.asarray(self.bounds, dtype=float).reshape(self.dim, 2)
        object.__setattr__(self, "bounds", bounds)
        if self.dim < 1:
            raise ConfigurationError("dimension must be positive")
        if not np.all(bounds[:, 0] < bounds[:, 1]):
            raise ConfigurationError(f"degenerate bounding box {bounds.tolist()}")

    @classmethod
    def box(cls, bounds) -> "StateSpace":
        """``X`` equal to the closed box ``bounds`` (a list of ``(lo, hi)`` pairs)."""
        b = np.asarray(bounds, dtype=float).reshape(-1, 2)
        lo, hi = b[:, 0], b[:, 1]

        def membership(x):
            return np.all((x >= lo) & (x <= hi), axis=1)

        def interior(x):
            return np.all((x > lo) & (x < hi), axis=1)

        def normal(x):
            # outward normal of the nearest face
            dist = np.concatenate([x - lo, hi - x], axis=1)
            k = np.argmin(dist, axis=1)
            n = np.zeros_like(x)
            d = x.shape[1]
            rows = np.arange(x.shape[0])
            n[rows, k % d] = np.where(k < d, -1.0, 1.0)
            return n

        return cls(len(b), b, membership, interior, normal,
                   {"type": "box", "bounds": b.tolist()})

    @classmethod
    def ball(cls, center, radius: float, bounds=None) -> "StateSpace":
        """Closed Euclidean ball; the bounding box defaults to the tight one."""
        c = np.atleast_1d(np.asarray(center, dtype=float))
        if radius <= 0:
            raise ConfigurationError("radius must be positive")
        if bounds is None:
            bounds = np.stack([c - radius, c + radius], axis=1)
        r2 = float(radius) ** 2

        def membership(x):
            return np.sum((x - c) ** 2, axis=1) <= r2

        def interior(x):
            return np.sum((x - c) ** 2, axis=1) < r2

        def normal(x):
            d = x - c
            return d / np.linalg.norm(d, axis=1, keepdims=True)

        b = np.asarray(bounds, dtype=float).reshape(len(c), 2)
        return cls(len(c), b, membership, interior, normal,
                   {"type": "ball", "center": c.tolist(), "radius": float(radius),
                    "bounds": b.tolist()})

    @classmethod
    def from_dict(cls, desc: dict) -> "StateSpace":
        kind = desc.get("type", "box")
        if kind == "box":
            return cls.box(desc["bounds"])
        if kind == "ball":
            return cls.ball(desc["center"], desc["radius"], desc.get("bounds"))
        raise ConfigurationError(f"unknown state space type {kind!r}")

    @property
    def scale(self) -> float:
        return float(np.max(self.bounds[:, 1] - self.bounds[:, 0]))

    def contains(self, x) -> np.ndarray:
        return np.asarray(self.membership(_as_points(x, self.dim)), dtype=bool)

    def in_interior(self, x) -> np.ndarray:
        fn = self.interior if self.interior is not None else self.membership
        return np.asarray(fn(_as_points(x, self.dim)), dtype=bool)

    def validate(self, samples: int = 2000, seed: int = 0) -> None:
        """Sampled check that membership is deterministic and confined to the bounding box."""
        rng = np.random.default_rng(seed)
        lo, hi = self.bounds[:, 0], self.bounds[:, 1]
        pad = 0.5 * (hi - lo)
        pts = rng.uniform(lo - pad, hi + pad, size=(samples, self.dim))
        first = self.contains(pts)
        if not np.array_equal(first, self.contains(pts)):
            raise ConfigurationError("membership predicate is not deterministic")
        outside = np.any((pts < lo) | (pts > hi), axis=1)
        if np.any(first & outside):
            raise ConfigurationError("membership is true outside the bounding box")


@dataclass(frozen=True, eq=False)
class BoxCovering:
    """Uniform covering of ``space`` by congruent boxes.

    Attributes
    ----------
    active : ndarray of int
        Flat (row-major) grid indices of the boxes meeting ``X``.
    neighbor_table : ndarray of int, shape (n_active, 2 d)
        Column ``2k`` is the neighbor across the lower face on axis ``k``,
        column ``2k + 1`` across the upper face; ``-1`` marks the exterior of
        the covering.
    """

    space: StateSpace
    level: int
    boxes_per_axis: tuple
    box_size: np.ndarray
    origin: np.ndarray
    active: np.ndarray
    neighbor_table: np.ndarray
    _position: np.ndarray = field(repr=False)

    @property
    def dim(self) -> int:
        return self.space.dim

    @property
    def n_active(self) -> int:
        return len(self.active)

    @property
    def box_measure(self) -> float:
        return float(np.prod(self.box_size))

    @property
    def signature(self) -> tuple:
        return (self.level, self.boxes_per_axis, tuple(self.origin), tuple(self.box_size),
                self.n_active)

    def multi_index(self) -> np.ndarray:
        """Integer grid coordinates of the active boxes, shape ``(n_active, d)``."""
        return np.stack(np.unravel_index(self.active, self.boxes_per_axis), axis=1)

    def lower_corners(self) -> np.ndarray:
        return self.origin + self.multi_index() * self.box_size

    def centers(self) -> np.ndarray:
        return self.lower_corners() + 0.5 * self.box_size

    def position(self, flat_index) -> np.ndarray:
        """Map flat grid indices to positions in the active list (``-1`` if inactive)."""
        return self._position[np.asarray(flat_index)]

    def locate(self, x) -> np.ndarray:
        """Active position of the box containing each point (half-open boxes), else ``-1``."""
        pts = _as_points(x, self.dim)
        rel = (pts - self.origin) / self.box_size
        idx = np.floor(rel).astype(np.int64)
        n = np.asarray(self.boxes_per_axis)
        ok = np.all((idx >= 0) & (idx < n), axis=1) & np.all(np.isfinite(pts), axis=1)
        out = np.full(len(pts), -1, dtype=np.int64)
        if np.any(ok):
            flat = np.ravel_multi_index(tuple(idx[ok].T), self.boxes_per_axis)
            out[ok] = self._position[flat]
        return out

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "level": self.level,
            "bounds": self.space.bounds.tolist(),
            "boxes_per_axis": list(self.boxes_per_axis),
            "box_size": self.box_size.tolist(),
            "origin": self.origin.tolist(),
            "active": self.active.tolist(),
            "space": self.space.description,
        }


def _tensor_offsets(offsets_1d, dim):
    grids = np.meshgrid(*([offsets_1d] * dim), indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=1)


def build_covering(space: StateSpace, boxes_per_axis, level: int | None = None) -> BoxCovering:
    """Uniform box covering of ``space`` anchored at its bounding box.

    A box is kept iff one of the points of a 5^d tensor grid at interior
    offsets (which includes the box center) satisfies membership.
    """
    n = tuple(int(k) for k in np.atleast_1d(boxes_per_axis))
    if len(n) != space.dim:
        raise ConfigurationError(f"need {space.dim} box counts, got {len(n)}")
    if any(k < 1 for k in n):
        raise ConfigurationError("boxes_per_axis must all be >= 1")
    origin = space.bounds[:, 0].copy()
    box_size = (space.bounds[:, 1] - space.bounds[:, 0]) / np.asarray(n, dtype=float)

    total = int(np.prod(n))
    corners = origin + np.stack(np.unravel_index(np.arange(total), n), axis=1) * box_size
    offsets = _tensor_offsets(_ACTIVITY_OFFSETS, space.dim) * box_size
    hit = np.zeros(total, dtype=bool)
    # chunk to bound memory on fine 3D grids
    chunk = max(1, 2_000_000 // len(offsets))
    for start in range(0, total, chunk):
        pts = (corners[start:start + chunk, None, :] + offsets[None]).reshape(-1, space.dim)
        hit[start:start + chunk] = space.contains(pts).reshape(-1, len(offsets)).any(axis=1)

    active = np.flatnonzero(hit)
    if len(active) == 0:
        raise ConfigurationError("covering has no active boxes")
    position = np.full(total, -1, dtype=np.int64)
    position[active] = np.arange(len(active))

    multi = np.stack(np.unravel_index(active, n), axis=1)
    neighbors = np.full((len(active), 2 * space.dim), -1, dtype=np.int64)
    for k in range(space.dim):
        for side, step in ((0, -1), (1, 1)):
            nb = multi.copy()
            nb[:, k] += step
            inside = (nb[:, k] >= 0) & (nb[:, k] < n[k])
            flat = np.ravel_multi_index(tuple(nb[inside].T), n)
            neighbors[inside, 2 * k + side] = position[flat]

    return BoxCovering(space, int(max(n) if level is None else level), n, box_size, origin,
                       active, neighbors, position)


@dataclass(eq=False)
class DensityVector:
    """Piecewise-constant function on the active boxes of a covering."""

    covering: BoxCovering
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.covering.n_active,):
            raise UsageError(
                f"expected {self.covering.n_active} values, got shape {self.values.shape}")

    @property
    def covering_level(self) -> int:
        return self.covering.level

    @property
    def box_measure(self) -> float:
        return self.covering.box_measure

    def _check(self, other: "DensityVector") -> None:
        if not isinstance(other, DensityVector):
            raise UsageError("expected a DensityVector")
        if other.covering is not self.covering and other.covering.signature != self.covering.signature:
            raise UsageError(
                f"densities live on different coverings (levels {self.covering_level} "
                f"and {other.covering_level})")

    def __add__(self, other):
        self._check(other)
        return DensityVector(self.covering, self.values + other.values)

    def __sub__(self, other):
        self._check(other)
        return DensityVector(self.covering, self.values - other.values)

    def __mul__(self, scalar):
        if isinstance(scalar, DensityVector):
            raise UsageError("densities can only be scaled by numbers")
        return DensityVector(self.covering, self.values * float(scalar))

    __rmul__ = __mul__

    def __neg__(self):
        return DensityVector(self.covering, -self.values)

    def l1_norm(self) -> float:
        return l1_norm(self)

    def mass(self) -> float:
        """Signed integral over the covering."""
        return self.box_measure * float(np.sum(self.values))

    def interpolant(self) -> Callable[[np.ndarray], np.ndarray]:
        """Pointwise evaluator of the piecewise-constant function (zero off the covering)."""
        cov, vals = self.covering, self.values.copy()

        def evaluate(x):
            pos = cov.locate(x)
            return np.where(pos >= 0, vals[np.maximum(pos, 0)], 0.0)

        return evaluate


def box_quadrature(covering: BoxCovering, rule: str = "gauss", q: int = 4):
    """Quadrature nodes for every active box.

    Returns ``(nodes, weights)`` with ``nodes`` of shape ``(n_active, Q, d)``
    and ``weights`` of length ``Q`` summing to one, so that a box average is
    ``nodes -> values @ weights``.
    """
    d = covering.dim
    if rule == "gauss":
        x, w = np.polynomial.legendre.leggauss(int(q))
        x = 0.5 * (x + 1.0)
        w = 0.5 * w
    elif rule == "midpoint":
        x = (np.arange(int(q)) + 0.5) / q
        w = np.full(int(q), 1.0 / q)
    else:
        raise ConfigurationError(f"unknown quadrature rule {rule!r}")
    offsets = _tensor_offsets(x, d) * covering.box_size
    weights = np.prod(_tensor_offsets(w, d), axis=1)
    nodes = covering.lower_corners()[:, None, :] + offsets[None]
    return nodes, weights


def _default_rule(u):
    kind = getattr(u, "kind", None)
    return ("midpoint", 10) if kind == "L1" else ("gauss", 4)


def project(covering: BoxCovering, u, rule: str | None = None, q: int | None = None) -> DensityVector:
    """Box averages of ``u`` extended by zero outside ``X``.

    ``u`` is a vectorized callable (or a test function); indicator-like test
    functions default to a 10^d midpoint grid, everything else to 4-point
    Gauss-Legendre per axis.
    """
    default_rule, default_q = _default_rule(u)
    rule = rule or default_rule
    q = q or (default_q if rule == default_rule else 4)
    nodes, weights = box_quadrature(covering, rule, q)
    flat = nodes.reshape(-1, covering.dim)
    vals = np.asarray(u(flat), dtype=float).reshape(flat.shape[0])
    vals = np.where(covering.space.contains(flat), vals, 0.0)
    averages = vals.reshape(nodes.shape[:2]) @ weights
    if not np.all(np.isfinite(averages)):
        raise NumericalError("projection produced non-finite box averages")
    return DensityVector(covering, averages)


def l1_norm(u: DensityVector) -> float:
    return u.box_measure * float(np.sum(np.abs(u.values)))


def l1_distance(u: DensityVector, w: DensityVector) -> float:
    return l1_norm(u - w)


def volume_fractions(covering: BoxCovering, per_axis: int = 10) -> np.ndarray:
    """Fraction of each active box inside ``X`` by midpoint-grid sampling."""
    nodes, weights = box_quadrature(covering, "midpoint", per_axis)
    inside = covering.space.contains(nodes.reshape(-1, covering.dim))
    return inside.reshape(nodes.shape[:2]).astype(float) @ weights


def restrict_to_X(covering: BoxCovering, u: DensityVector) -> DensityVector:
    """Restriction to ``X``; coefficients are unchanged since every box meets ``X``."""
    if u.covering is not covering:
        u._check(DensityVector(covering, np.zeros(covering.n_active)))
    return DensityVector(covering, u.values.copy())


def l1_norm_on_X(u: DensityVector, per_axis: int = 10) -> float:
    """L1 norm over ``X`` only, weighting each box by its sampled volume fraction."""
    frac = volume_fractions(u.covering, per_axis)
    return u.box_measure * float(np.sum(np.abs(u.values) * frac))
