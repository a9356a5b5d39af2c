"""Upwind face-flux realization of the discrete generator.

For face-adjacent active boxes ``j -> i`` the rate is the outgoing flux
``(1/m) int_F (v . n_{j->i})^+`` across their common face, divided by the
box measure.  The diagonal collects the total outflow of each box through
all of its faces, including faces on the boundary of the covering, so mass
leaving the covering shows up in the diagonal only.

Matrix orientation: rows are target boxes, columns are source boxes, and
densities evolve by ``u' = G u``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .covering import BoxCovering, DensityVector, _tensor_offsets, l1_distance, project
from .errors import NumericalError, UsageError
from .fields import VectorField
from .flow import apply_generator_analytic

DROP_TOL = 1e-14


@dataclass(frozen=True)
class FaceQuadratureSpec:
    """Gauss-Legendre points per face axis; faces where ``v . n`` changes
    sign are split once along every face axis."""

    points: int = 6
    split_on_sign_change: bool = True


@dataclass(eq=False)
class GeneratorMatrix:
    covering: BoxCovering
    matrix: sp.csr_matrix

    @property
    def level(self) -> int:
        return self.covering.level

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]

    def column_sums(self) -> np.ndarray:
        return np.asarray(self.matrix.sum(axis=0)).ravel()

    def diagonal(self) -> np.ndarray:
        return self.matrix.diagonal()

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()

    def __matmul__(self, u: DensityVector) -> DensityVector:
        return apply(self, u)


def _face_nodes(q, d, k, split):
    """Nodes in unit face coordinates (axis ``k`` omitted) and weights summing to one."""
    x, w = np.polynomial.legendre.leggauss(q)
    x, w = 0.5 * (x + 1.0), 0.5 * w
    if split:
        x = np.concatenate([0.5 * x, 0.5 + 0.5 * x])
        w = np.concatenate([0.5 * w, 0.5 * w])
    if d == 1:
        return np.zeros((1, 0)), np.ones(1)
    nodes = _tensor_offsets(x, d - 1)
    weights = np.prod(_tensor_offsets(w, d - 1), axis=1)
    return nodes, weights


def _embed(face_nodes, k, d):
    """Insert a zero column for the normal axis ``k``."""
    out = np.zeros((len(face_nodes), d))
    others = [a for a in range(d) if a != k]
    out[:, others] = face_nodes
    return out


def face_fluxes(field: VectorField, covering: BoxCovering, corners, k: int,
                quadrature: FaceQuadratureSpec = FaceQuadratureSpec()):
    """Signed-part fluxes through faces normal to axis ``k`` with lower corners ``corners``.

    Returns ``(plus, minus)``: integrals of ``(v_k)^+`` and ``(v_k)^-`` over
    each face (flux towards ``+e_k`` and ``-e_k`` respectively).
    """
    d = covering.dim
    h = covering.box_size
    face_area = float(np.prod(np.delete(h, k))) if d > 1 else 1.0
    nf = len(corners)
    plus = np.zeros(nf)
    minus = np.zeros(nf)
    if nf == 0:
        return plus, minus

    def evaluate(unit_nodes, weights, which):
        pts = corners[which, None, :] + _embed(unit_nodes, k, d)[None] * h
        vk = field(pts.reshape(-1, d))[:, k].reshape(len(which), len(unit_nodes))
        return vk, np.clip(vk, 0, None) @ weights, np.clip(-vk, 0, None) @ weights

    nodes, weights = _face_nodes(quadrature.points, d, k, split=False)
    everything = np.arange(nf)
    vk, p, m = evaluate(nodes, weights, everything)
    plus[:], minus[:] = p, m
    if quadrature.split_on_sign_change and d > 1:
        corner_nodes = _tensor_offsets(np.array([0.0, 1.0]), d - 1)
        vc = evaluate(corner_nodes, np.zeros(len(corner_nodes)), everything)[0]
        both = np.concatenate([vk, vc], axis=1)
        mixed = np.flatnonzero((both.min(axis=1) < 0) & (both.max(axis=1) > 0))
        if len(mixed):
            snodes, sweights = _face_nodes(quadrature.points, d, k, split=True)
            _, p, m = evaluate(snodes, sweights, mixed)
            plus[mixed], minus[mixed] = p, m
    plus *= face_area
    minus *= face_area
    if not (np.all(np.isfinite(plus)) and np.all(np.isfinite(minus))):
        raise NumericalError("non-finite face flux")
    return plus, minus


def assemble(field: VectorField, covering: BoxCovering,
             quadrature: FaceQuadratureSpec = FaceQuadratureSpec()) -> GeneratorMatrix:
    """Assemble the sparse upwind generator on ``covering``."""
    if field.dim != covering.dim:
        raise UsageError(f"field dimension {field.dim} != covering dimension {covering.dim}")
    n = covering.n_active
    m = covering.box_measure
    corners = covering.lower_corners()
    nbr = covering.neighbor_table
    drop = DROP_TOL / float(np.min(covering.box_size))

    rows, cols, vals = [], [], []
    outflow = np.zeros(n)
    for k in range(covering.dim):
        upper = corners.copy()
        upper[:, k] += covering.box_size[k]
        plus, minus = face_fluxes(field, covering, upper, k, quadrature)
        high = nbr[:, 2 * k + 1]
        src = np.arange(n)
        # upper face of every active box: +e_k flux leaves it, -e_k flux leaves the neighbor
        outflow += plus
        inner = high >= 0
        np.add.at(outflow, high[inner], minus[inner])
        rows += [high[inner], src[inner]]
        cols += [src[inner], high[inner]]
        vals += [plus[inner] / m, minus[inner] / m]
        # lower faces on the covering boundary only lose mass
        low_ext = np.flatnonzero(nbr[:, 2 * k] < 0)
        if len(low_ext):
            _, lminus = face_fluxes(field, covering, corners[low_ext], k, quadrature)
            np.add.at(outflow, low_ext, lminus)

    rows.append(np.arange(n))
    cols.append(np.arange(n))
    vals.append(-outflow / m)
    r, c, v = (np.concatenate(a) for a in (rows, cols, vals))
    keep = np.abs(v) >= drop
    mat = sp.coo_matrix((v[keep], (r[keep], c[keep])), shape=(n, n)).tocsr()
    mat.sum_duplicates()
    mat.sort_indices()
    return GeneratorMatrix(covering, mat)


def apply(G: GeneratorMatrix, u: DensityVector) -> DensityVector:
    if u.covering is not G.covering and u.covering.signature != G.covering.signature:
        raise UsageError(f"density on level {u.covering_level}, generator on level {G.level}")
    return DensityVector(G.covering, G.matrix @ u.values)


def finite_time_quotient(field: VectorField, covering: BoxCovering, u: DensityVector, t: float,
                         space=None, sampling=None) -> DensityVector:
    """``(pi P^t pi u - pi u) / t`` with ``P^t`` the transfer operator of the full flow."""
    from .ulam import SamplingSpec, estimate, quotient_matrix

    if sampling is None:
        sampling = SamplingSpec(method="exact" if covering.dim <= 2 else "grid")
    U = estimate(field, covering, t, "full", sampling, space)
    return DensityVector(covering, quotient_matrix(U) @ u.values)


def generator_consistency_error(field: VectorField, covering: BoxCovering, u,
                                G: GeneratorMatrix | None = None) -> float:
    """L1 distance between ``G pi u`` and ``pi (-div(v u))`` for a smooth ``u``."""
    G = assemble(field, covering) if G is None else G
    discrete = apply(G, project(covering, u))
    exact = project(covering, lambda x: apply_generator_analytic(field, u, x), rule="gauss")
    return l1_distance(discrete, exact)


def max_column_l1(A) -> float:
    """Induced L1 operator norm of a matrix acting on box coefficients."""
    A = sp.csc_matrix(A)
    if A.nnz == 0:
        return 0.0
    return float(np.max(np.asarray(abs(A).sum(axis=0)).ravel()))
