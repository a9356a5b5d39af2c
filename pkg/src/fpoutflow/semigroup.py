"""Action of ``exp(t G)`` and of the resolvent ``(lambda - G)^{-1}`` on densities."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .covering import DensityVector, l1_norm
from .errors import AccuracyError, ConfigurationError, SolverError, UsageError
from .generator import GeneratorMatrix

METHODS = ("scaled-taylor", "krylov", "dense-pade")
DENSE_LIMIT = 512


@dataclass(frozen=True)
class EvolutionSpec:
    t: float
    method: str = "scaled-taylor"
    tolerance: float = 1e-10
    max_substeps: int = 1_000_000

    def __post_init__(self):
        if self.t < 0:
            raise ConfigurationError("the semigroup is only defined for t >= 0")
        if self.tolerance <= 0:
            raise ConfigurationError("tolerance must be positive")
        if self.method not in METHODS:
            raise ConfigurationError(f"unknown method {self.method!r}; choose from {METHODS}")


def _taylor_action(A, W, t, tol, max_substeps, max_terms=200):
    """Substepped truncated Taylor series.

    The substep keeps ``tau * max|diag A| <= 1``; for a generator with
    nonpositive column sums this bounds ``||tau A||_1 <= 2``.
    """
    rho = float(np.max(np.abs(A.diagonal()))) if A.shape[0] else 0.0
    if A.nnz == 0 or t == 0.0:
        return W.copy()
    rho = max(rho, float(np.max(np.asarray(abs(A).sum(axis=0)))) / 2.0)
    nsub = max(1, math.ceil(t * rho))
    if nsub > max_substeps:
        raise AccuracyError(f"{nsub} substeps needed, max_substeps = {max_substeps}")
    tau = t / nsub
    scale = np.maximum(np.abs(W).sum(axis=0), 1e-300)
    eps = tol / (4.0 * nsub)
    for _ in range(nsub):
        term = W
        out = W.copy()
        for k in range(1, max_terms + 1):
            term = (tau / k) * (A @ term)
            out += term
            if np.all(np.abs(term).sum(axis=0) <= eps * scale):
                break
        else:
            achieved = float(np.max(np.abs(term).sum(axis=0) / scale)) * nsub
            raise AccuracyError("Taylor series did not converge", achieved)
        W = out
    return W


def _arnoldi_exp(A, b, t, tol, m=30, max_substeps=100_000):
    """Krylov approximation of ``exp(t A) b`` with local error control."""
    n = len(b)
    m = min(m, n)
    w = b.astype(float).copy()
    norm_a = float(spla.norm(A, 1)) or 1.0
    s = 0.0
    tau = min(t, m / (4.0 * norm_a))
    local_tol = tol / math.sqrt(max(n, 1))
    steps = 0
    while s < t:
        steps += 1
        if steps > max_substeps:
            raise AccuracyError("Krylov substep limit reached", t - s)
        beta = np.linalg.norm(w)
        if beta == 0.0:
            break
        V = np.zeros((n, m + 1))
        H = np.zeros((m + 1, m))
        V[:, 0] = w / beta
        k_used = m
        breakdown = False
        for j in range(m):
            z = A @ V[:, j]
            for i in range(j + 1):
                H[i, j] = V[:, i] @ z
                z -= H[i, j] * V[:, i]
            H[j + 1, j] = np.linalg.norm(z)
            if H[j + 1, j] <= 1e-12 * norm_a:
                k_used = j + 1
                breakdown = True
                break
            V[:, j + 1] = z / H[j + 1, j]
        Hk = H[:k_used, :k_used]
        tau = min(tau, t - s)
        while True:
            E = scipy.linalg.expm(tau * Hk)
            if breakdown:
                err = 0.0
            else:
                err = beta * H[k_used, k_used - 1] * abs(E[k_used - 1, 0]) * tau
            if err <= local_tol * tau / t * beta or tau < 1e-14 * t:
                break
            tau *= 0.5
        w = beta * V[:, :k_used] @ E[:, 0]
        s += tau
        if breakdown:
            tau = t - s
        elif err < 0.1 * local_tol * tau / t * beta:
            tau *= 1.5
    return w


def expm_action(A, W, t: float, method: str = "scaled-taylor", tolerance: float = 1e-10,
                max_substeps: int = 1_000_000) -> np.ndarray:
    """``exp(t A) W`` for a sparse ``A`` and a vector or matrix ``W`` (columns)."""
    A = sp.csr_matrix(A)
    W = np.asarray(W, dtype=float)
    vec = W.ndim == 1
    W2 = W[:, None] if vec else W
    if t == 0.0:
        out = W2.copy()
    elif method == "scaled-taylor":
        out = _taylor_action(A, W2, t, tolerance, max_substeps)
    elif method == "krylov":
        out = np.stack([_arnoldi_exp(A, W2[:, j], t, tolerance, max_substeps=max_substeps)
                        for j in range(W2.shape[1])], axis=1)
    elif method == "dense-pade":
        if A.shape[0] > DENSE_LIMIT:
            raise ConfigurationError(f"dense Pade limited to n <= {DENSE_LIMIT}")
        out = scipy.linalg.expm(t * A.toarray()) @ W2
    else:
        raise ConfigurationError(f"unknown method {method!r}")
    return out[:, 0] if vec else out


def _check(G: GeneratorMatrix, u: DensityVector):
    if u.covering is not G.covering and u.covering.signature != G.covering.signature:
        raise UsageError(f"density on level {u.covering_level}, generator on level {G.level}")


def evolve(G: GeneratorMatrix, u: DensityVector, spec: EvolutionSpec | float) -> DensityVector:
    """Apply the semigroup generated by ``G`` to ``u``."""
    _check(G, u)
    if not isinstance(spec, EvolutionSpec):
        spec = EvolutionSpec(float(spec))
    w = expm_action(G.matrix, u.values, spec.t, spec.method, spec.tolerance, spec.max_substeps)
    return DensityVector(G.covering, w)


def evolve_times(G: GeneratorMatrix, u: DensityVector, times, method: str = "scaled-taylor",
                 tolerance: float = 1e-10) -> list[DensityVector]:
    """Evolve to several times, stepping from one to the next in increasing order."""
    _check(G, u)
    times = [float(t) for t in times]
    if any(t < 0 for t in times):
        raise ConfigurationError("times must be nonnegative")
    out = [None] * len(times)
    w, t_prev = u.values, 0.0
    for k in np.argsort(times, kind="stable"):
        w = expm_action(G.matrix, w, times[k] - t_prev, method, tolerance / max(len(times), 1))
        t_prev = times[k]
        out[k] = DensityVector(G.covering, w)
    return out


def resolvent(G: GeneratorMatrix, u: DensityVector, lam: float, rtol: float = 1e-10) -> DensityVector:
    """Solve ``(lam I - G) w = u``."""
    _check(G, u)
    if lam <= 0:
        raise ConfigurationError("lambda must be positive")
    n = G.dimension
    M = (lam * sp.identity(n, format="csc") - G.matrix.tocsc()).tocsc()
    try:
        w = spla.splu(M).solve(u.values)
    except RuntimeError as exc:
        raise SolverError(f"resolvent solve failed: {exc}") from exc
    res = np.linalg.norm(M @ w - u.values, 1)
    ref = max(np.linalg.norm(u.values, 1), 1e-300)
    if not np.all(np.isfinite(w)) or res > rtol * ref:
        raise SolverError(f"resolvent residual {res / ref:.3e} above {rtol:.1e}")
    return DensityVector(G.covering, w)


def semigroup_defect(G: GeneratorMatrix, u: DensityVector, s: float, t: float,
                     tolerance: float = 1e-10, method: str = "scaled-taylor") -> float:
    """``|| T(s + t) u - T(s) T(t) u ||_1``."""
    once = evolve(G, u, EvolutionSpec(s + t, method, tolerance))
    twice = evolve(G, evolve(G, u, EvolutionSpec(t, method, tolerance)),
                   EvolutionSpec(s, method, tolerance))
    return l1_norm(once - twice)
