"""Ulam transfer matrices of the full and the killed flow.

Entry ``(i, j)`` is the fraction of box ``j`` that sits in box ``i`` after
time ``t``.  Three ways to get it:

``grid``
    deterministic tensor sub-grid of ``per_axis**d`` points per box at the
    offsets ``(2m + 1) h / (2 per_axis)``;
``montecarlo``
    ``samples`` uniform points per box from a seeded Philox stream;
``exact``
    geometric overlap of box ``j`` with the preimage of box ``i`` (full flow,
    d <= 2).  The preimage boundary is traced by flowing ``edge_points``
    points per box edge backward.  Unlike sampling, this stays accurate at the
    tiny ``t`` needed to compare ``(U - I) / t`` with the generator.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
import scipy.sparse as sp

from .covering import BoxCovering, _tensor_offsets
from .errors import ConfigurationError
from .fields import VectorField
from .flow import integrate_many

MODES = ("full", "killed")
METHODS = ("grid", "montecarlo", "exact")


@dataclass(frozen=True)
class SamplingSpec:
    method: str = "grid"
    per_axis: int = 8
    samples: int = 256
    seed: int = 0
    edge_points: int = 32

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigurationError(f"unknown sampling method {self.method!r}")

    def samples_per_box(self, dim: int) -> int:
        if self.method == "grid":
            return self.per_axis**dim
        if self.method == "montecarlo":
            return self.samples
        return 0


@dataclass(eq=False)
class UlamMatrix:
    covering: BoxCovering
    t: float
    mode: str
    matrix: sp.csr_matrix
    sampling: SamplingSpec

    @property
    def level(self) -> int:
        return self.covering.level

    @property
    def samples_per_box(self) -> int:
        return self.sampling.samples_per_box(self.covering.dim)

    @property
    def rng_seed(self) -> int:
        return self.sampling.seed

    def column_sums(self) -> np.ndarray:
        return np.asarray(self.matrix.sum(axis=0)).ravel()

    def metadata(self) -> dict:
        return {
            "level": self.level,
            "t": self.t,
            "mode": self.mode,
            "samples_per_box": self.samples_per_box,
            "rng_seed": self.rng_seed,
            "sampling": asdict(self.sampling),
            "boxes_per_axis": list(self.covering.boxes_per_axis),
            "n_active": self.covering.n_active,
        }


def sample_points(covering: BoxCovering, sampling: SamplingSpec) -> np.ndarray:
    """Sample points of every active box, shape ``(n_active, S, d)``."""
    d = covering.dim
    corners = covering.lower_corners()
    if sampling.method == "grid":
        k = sampling.per_axis
        offsets = _tensor_offsets((2 * np.arange(k) + 1) / (2.0 * k), d)
        return corners[:, None, :] + offsets[None] * covering.box_size
    rng = np.random.Generator(np.random.Philox(sampling.seed))
    unit = rng.random((covering.n_active, sampling.samples, d))
    return corners[:, None, :] + unit * covering.box_size


def _from_samples(field, covering, t, mode, sampling, space, options):
    pts = sample_points(covering, sampling)
    n, S, d = pts.shape
    kill_space = (covering.space if space is None else space) if mode == "killed" else None
    traj = integrate_many(field, pts.reshape(-1, d), t, kill_space, **options)
    target = covering.locate(traj.end_points)
    source = np.repeat(np.arange(n), S)
    ok = (target >= 0) & ~traj.exited
    counts = np.bincount(target[ok] * n + source[ok], minlength=n * n) if n * n < 5_000_000 else None
    if counts is not None:
        nz = np.flatnonzero(counts)
        rows, cols, vals = nz // n, nz % n, counts[nz] / S
    else:
        keys, cnt = np.unique(target[ok] * n + source[ok], return_counts=True)
        rows, cols, vals = keys // n, keys % n, cnt / S
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def _exact_1d(field, covering, t, options):
    n = covering.n_active
    lo = covering.lower_corners()[:, 0]
    hi = lo + covering.box_size[0]
    ends = np.concatenate([lo, hi])
    back = integrate_many(field, ends[:, None], -t, None, **options).end_points[:, 0]
    pre_lo = np.minimum(back[:n], back[n:])
    pre_hi = np.maximum(back[:n], back[n:])
    h = covering.box_size[0]
    rows, cols, vals = [], [], []
    for i in range(n):
        first = int(np.floor((pre_lo[i] - covering.origin[0]) / h))
        last = int(np.ceil((pre_hi[i] - covering.origin[0]) / h))
        flat = np.arange(max(first, 0), min(last, covering.boxes_per_axis[0]))
        if len(flat) == 0:
            continue
        pos = covering.position(flat)
        pos = pos[pos >= 0]
        overlap = np.minimum(hi[pos], pre_hi[i]) - np.maximum(lo[pos], pre_lo[i])
        keep = overlap > 0
        rows.append(np.full(keep.sum(), i))
        cols.append(pos[keep])
        vals.append(overlap[keep] / h)
    if not rows:
        return sp.csr_matrix((n, n))
    return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                         shape=(n, n))


def _exact_2d(field, covering, t, edge_points, options):
    import shapely

    n = covering.n_active
    h = covering.box_size
    corners = covering.lower_corners()
    s = np.arange(edge_points) / edge_points
    # counterclockwise boundary of the unit square
    unit = np.concatenate([
        np.stack([s, np.zeros_like(s)], axis=1),
        np.stack([np.ones_like(s), s], axis=1),
        np.stack([1 - s, np.ones_like(s)], axis=1),
        np.stack([np.zeros_like(s), 1 - s], axis=1),
    ])
    ring = corners[:, None, :] + unit[None] * h
    back = integrate_many(field, ring.reshape(-1, 2), -t, None, **options).end_points
    back = back.reshape(n, len(unit), 2)
    preimages = shapely.make_valid(shapely.polygons(back))

    lo_idx = np.floor((back.min(axis=1) - covering.origin) / h).astype(np.int64)
    hi_idx = np.ceil((back.max(axis=1) - covering.origin) / h).astype(np.int64)
    nb = np.asarray(covering.boxes_per_axis)
    lo_idx = np.clip(lo_idx, 0, nb)
    hi_idx = np.clip(hi_idx, 0, nb)
    tgt, src = [], []
    for i in range(n):
        ix = np.arange(lo_idx[i, 0], hi_idx[i, 0])
        iy = np.arange(lo_idx[i, 1], hi_idx[i, 1])
        if len(ix) == 0 or len(iy) == 0:
            continue
        gx, gy = np.meshgrid(ix, iy, indexing="ij")
        pos = covering.position(np.ravel_multi_index((gx.ravel(), gy.ravel()), covering.boxes_per_axis))
        pos = pos[pos >= 0]
        tgt.append(np.full(len(pos), i))
        src.append(pos)
    if not tgt:
        return sp.csr_matrix((n, n))
    tgt, src = np.concatenate(tgt), np.concatenate(src)
    boxes = shapely.box(corners[:, 0], corners[:, 1], corners[:, 0] + h[0], corners[:, 1] + h[1])
    area = shapely.area(shapely.intersection(preimages[tgt], boxes[src]))
    frac = area / covering.box_measure
    keep = frac > 0
    return sp.csr_matrix((frac[keep], (tgt[keep], src[keep])), shape=(n, n))


def estimate(field: VectorField, covering: BoxCovering, t: float, mode: str = "full",
             sampling: SamplingSpec | None = None, space=None, **options) -> UlamMatrix:
    """Ulam matrix of the full (``mode="full"``) or killed (``mode="killed"``) flow."""
    if mode not in MODES:
        raise ConfigurationError(f"unknown mode {mode!r}; choose from {MODES}")
    if t < 0:
        raise ConfigurationError("t must be nonnegative")
    sampling = SamplingSpec() if sampling is None else sampling
    n = covering.n_active
    if t == 0:
        return UlamMatrix(covering, 0.0, mode, sp.identity(n, format="csr"), sampling)
    if sampling.method == "exact":
        if mode != "full":
            raise ConfigurationError("exact overlaps are only available for the full flow")
        if covering.dim == 1:
            mat = _exact_1d(field, covering, t, options)
        elif covering.dim == 2:
            mat = _exact_2d(field, covering, t, sampling.edge_points, options)
        else:
            raise ConfigurationError("exact overlaps are only available for d <= 2")
    else:
        mat = _from_samples(field, covering, t, mode, sampling, space, options)
    mat.sort_indices()
    return UlamMatrix(covering, float(t), mode, mat, sampling)


def quotient_matrix(U: UlamMatrix) -> sp.csr_matrix:
    """Finite-time generator estimate ``(U - I) / t``."""
    if U.t <= 0:
        raise ConfigurationError("the quotient needs t > 0")
    n = U.covering.n_active
    return ((U.matrix - sp.identity(n, format="csr")) / U.t).tocsr()
