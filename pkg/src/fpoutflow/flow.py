"""Flow of a vector field with exit detection and Liouville log-determinant.

Trajectories are integrated in batches with an adaptive Dormand-Prince 5(4)
pair; every trajectory keeps its own step size.  The state is augmented by
``L(s) = int_0^s div v`` so that ``exp(L)`` is the Jacobian determinant of
the flow map (Liouville's formula).

For the outflow system a trajectory is *lost* as soon as it leaves the
open interior of ``X``.  After an accepted step that ends outside, the
crossing time is located by bisection, re-stepping from the last interior
state with shorter Dormand-Prince steps.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .covering import BoxCovering, DensityVector, StateSpace, box_quadrature
from .errors import ConfigurationError, NumericalError, StiffIntegrationError
from .fields import VectorField

RTOL = 1e-8
ATOL = 1e-10
BOUNDARY_TOL = 1e-9
T_MAX = 1e4

# Dormand-Prince 5(4) tableau
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_E = np.array([-71 / 57600, 0.0, 71 / 16695, -71 / 1920, 17253 / 339200, -22 / 525, 1 / 40])


@dataclass
class TrajectoryResult:
    end_point: np.ndarray
    exited: bool
    exit_time: float | None
    log_det: float


@dataclass
class TrajectoryBatch:
    """Vectorized counterpart of :class:`TrajectoryResult`; ``exit_time`` is NaN where not exited."""

    end_points: np.ndarray
    exited: np.ndarray
    exit_time: np.ndarray
    log_det: np.ndarray

    def __len__(self):
        return len(self.exited)

    def __getitem__(self, i) -> TrajectoryResult:
        et = self.exit_time[i]
        return TrajectoryResult(self.end_points[i].copy(), bool(self.exited[i]),
                                None if np.isnan(et) else float(et), float(self.log_det[i]))


def _rhs(field: VectorField, sign: float):
    d = field.dim

    def f(y):
        x = y[:, :d]
        out = np.empty_like(y)
        out[:, :d] = sign * field(x)
        out[:, d] = sign * field.divergence(x)
        return out

    return f


def _dp_step(f, y, k1, h):
    """One Dormand-Prince step of per-row size ``h``; returns ``(y_new, k7, err)``."""
    h = h[:, None]
    ks = [k1]
    for i in range(1, 7):
        inc = sum(a * k for a, k in zip(_A[i], ks) if a != 0.0)
        ks.append(f(y + h * inc))
    y_new = y + h * sum(b * k for b, k in zip(_B, ks) if b != 0.0)
    err = h * sum(e * k for e, k in zip(_E, ks) if e != 0.0)
    return y_new, ks[6], err


def _err_norm(err, y0, y1, rtol, atol):
    sc = atol + rtol * np.maximum(np.abs(y0), np.abs(y1))
    return np.sqrt(np.mean((err / sc) ** 2, axis=1))


def _initial_step(f, y0, k0, rtol, atol, span):
    sc = atol + rtol * np.abs(y0)
    d0 = np.sqrt(np.mean((y0 / sc) ** 2, axis=1))
    d1 = np.sqrt(np.mean((k0 / sc) ** 2, axis=1))
    h0 = np.where((d0 < 1e-5) | (d1 < 1e-5), 1e-6, 0.01 * d0 / np.maximum(d1, 1e-300))
    h0 = np.minimum(h0, span)
    y1 = y0 + h0[:, None] * k0
    d2 = np.sqrt(np.mean(((f(y1) - k0) / sc) ** 2, axis=1)) / h0
    big = np.maximum(d1, d2)
    h1 = np.where(big <= 1e-15, np.maximum(1e-6, h0 * 1e-3), (0.01 / np.maximum(big, 1e-300)) ** 0.2)
    return np.minimum(np.minimum(100 * h0, h1), span)


def integrate_many(field: VectorField, points, t: float, space: StateSpace | None = None, *,
                   rtol: float = RTOL, atol: float = ATOL,
                   boundary_tolerance: float = BOUNDARY_TOL, max_step: float = np.inf,
                   t_max: float = T_MAX) -> TrajectoryBatch:
    """Integrate many initial points over the signed time ``t``.

    With ``space`` given, a trajectory is stopped at the first time it is not
    in the open interior of ``X`` (including at ``s = 0`` and ``s = |t|``).
    Without ``space`` the full flow on R^d is integrated.
    """
    d = field.dim
    x0 = np.asarray(points, dtype=float).reshape(-1, d)
    n = len(x0)
    if abs(t) > t_max:
        raise ConfigurationError(f"|t| = {abs(t)} exceeds t_max = {t_max}")
    if not np.all(np.isfinite(x0)):
        raise NumericalError("non-finite initial points")

    y = np.zeros((n, d + 1))
    y[:, :d] = x0
    exited = np.zeros(n, dtype=bool)
    exit_time = np.full(n, np.nan)
    if space is not None and n:
        out0 = ~space.in_interior(x0)
        exited[out0] = True
        exit_time[out0] = 0.0
    span = abs(float(t))
    if span == 0.0 or n == 0:
        return TrajectoryBatch(y[:, :d], exited, exit_time, y[:, d])

    f = _rhs(field, 1.0 if t > 0 else -1.0)
    done = exited.copy()
    s = np.zeros(n)
    k1 = np.zeros_like(y)
    live = ~done
    if np.any(live):
        k1[live] = f(y[live])
    h = np.zeros(n)
    if np.any(live):
        h[live] = np.minimum(_initial_step(f, y[live], k1[live], rtol, atol, span), max_step)

    while True:
        idx = np.flatnonzero(~done)
        if len(idx) == 0:
            break
        remaining = span - s[idx]
        hh = np.minimum(h[idx], remaining)
        last = hh >= remaining
        hh = np.where(last, remaining, hh)
        y0 = y[idx]
        with np.errstate(over="ignore", invalid="ignore"):
            y1, k7, err = _dp_step(f, y0, k1[idx], hh)
        if not np.all(np.isfinite(y1)):
            raise NumericalError("non-finite state during integration")
        en = _err_norm(err, y0, y1, rtol, atol)
        accept = en <= 1.0
        with np.errstate(divide="ignore"):
            fac = np.where(en == 0.0, 5.0, np.clip(0.9 * en ** -0.2, 0.2, 5.0))
        fac = np.where(accept, fac, np.minimum(fac, 1.0))
        h_new = np.minimum(hh * fac, max_step)
        if np.any(~accept & (h_new < 1e-14 * max(1.0, span))):
            raise StiffIntegrationError("step size underflow")
        # a short final step says nothing about the next step size
        h[idx] = np.where(last & accept, h[idx], h_new)

        acc = idx[accept]
        if len(acc) == 0:
            continue
        y_acc = y1[accept]
        crossed = np.zeros(len(acc), dtype=bool)
        if space is not None:
            crossed = ~space.in_interior(y_acc[:, :d])
        stay = acc[~crossed]
        y[stay] = y_acc[~crossed]
        k1[stay] = k7[accept][~crossed]
        s[stay] = np.where(last[accept][~crossed], span, s[stay] + hh[accept][~crossed])
        finished = stay[last[accept][~crossed]]
        done[finished] = True
        if space is not None and len(finished):
            # contact with the boundary at s = |t| (up to the time tolerance) counts as lost
            probe = y[finished, :d] + boundary_tolerance * k1[finished, :d]
            touch = finished[~space.in_interior(probe)]
            exited[touch] = True
            exit_time[touch] = span

        if np.any(crossed):
            cidx = acc[crossed]
            lo = np.zeros(len(cidx))
            hi = hh[accept][crossed].copy()
            yb, kb = y[cidx], k1[cidx]
            while np.any(hi - lo > boundary_tolerance):
                mid = 0.5 * (lo + hi)
                ym = _dp_step(f, yb, kb, mid)[0]
                inside = space.in_interior(ym[:, :d])
                lo = np.where(inside, mid, lo)
                hi = np.where(inside, hi, mid)
            y[cidx] = _dp_step(f, yb, kb, hi)[0]
            exit_time[cidx] = s[cidx] + hi
            s[cidx] = exit_time[cidx]
            exited[cidx] = True
            done[cidx] = True

    return TrajectoryBatch(y[:, :d].copy(), exited, exit_time, y[:, d].copy())


def integrate(field: VectorField, x0, t: float, space: StateSpace | None = None,
              **options) -> TrajectoryResult:
    """Integrate a single point; see :func:`integrate_many` for the options."""
    return integrate_many(field, np.atleast_1d(np.asarray(x0, dtype=float)), t, space, **options)[0]


def transfer_exact_many(field: VectorField, u, points, t: float, space: StateSpace,
                        **options) -> np.ndarray:
    """Outflow transfer operator applied to ``u``, evaluated at many points.

    Each point is flowed backward over ``t``; surviving paths give
    ``u(x_back) * exp(log_det)``, lost ones give zero.
    """
    if t < 0:
        raise ConfigurationError("the transfer operator is defined for t >= 0 only")
    traj = integrate_many(field, points, -float(t), space, **options)
    vals = np.zeros(len(traj))
    alive = ~traj.exited
    if np.any(alive):
        vals[alive] = u(traj.end_points[alive]) * np.exp(traj.log_det[alive])
    return vals


def transfer_exact(field: VectorField, u, x, t: float, space: StateSpace, **options) -> float:
    return float(transfer_exact_many(field, u, np.atleast_1d(np.asarray(x, dtype=float)),
                                     t, space, **options)[0])


def _grid_rule(u, nodes_per_box):
    if getattr(u, "kind", None) == "L1":
        return "midpoint", max(nodes_per_box, 10)
    return "gauss", nodes_per_box


def transfer_exact_grid_times(field: VectorField, u, covering: BoxCovering, times,
                              space: StateSpace | None = None, nodes_per_box: int = 4,
                              **options) -> list[DensityVector]:
    """Box averages of the outflow transfer operator applied to ``u`` at several times.

    Backward trajectories from the quadrature nodes are continued from one
    time to the next instead of being restarted.
    """
    space = covering.space if space is None else space
    times = [float(t) for t in times]
    if any(t < 0 for t in times):
        raise ConfigurationError("times must be nonnegative")
    order = np.argsort(times, kind="stable")
    rule, q = _grid_rule(u, nodes_per_box)
    nodes, weights = box_quadrature(covering, rule, q)
    pts = nodes.reshape(-1, covering.dim)

    current = pts.copy()
    log_det = np.zeros(len(pts))
    alive = space.in_interior(pts)
    t_prev = 0.0
    out = [None] * len(times)
    for k in order:
        dt = times[k] - t_prev
        if dt > 0 and np.any(alive):
            live = np.flatnonzero(alive)
            traj = integrate_many(field, current[live], -dt, space, **options)
            current[live] = traj.end_points
            log_det[live] += traj.log_det
            alive[live[traj.exited]] = False
        t_prev = times[k]
        vals = np.zeros(len(pts))
        if np.any(alive):
            vals[alive] = u(current[alive]) * np.exp(log_det[alive])
        avg = vals.reshape(nodes.shape[:2]) @ weights
        if not np.all(np.isfinite(avg)):
            raise NumericalError("non-finite reference values")
        out[k] = DensityVector(covering, avg)
    return out


def transfer_exact_grid(field: VectorField, u, covering: BoxCovering, t: float,
                        space: StateSpace | None = None, nodes_per_box: int = 4,
                        **options) -> DensityVector:
    """Projection of ``x -> transfer_exact(field, u, x, t)`` onto the covering."""
    return transfer_exact_grid_times(field, u, covering, [t], space, nodes_per_box, **options)[0]


def apply_generator_analytic(field: VectorField, u, x) -> np.ndarray:
    """Continuity-equation generator ``-div(v u) = -u div v - v . grad u`` at points ``x``."""
    pts = np.asarray(x, dtype=float).reshape(-1, field.dim)
    return -u(pts) * field.divergence(pts) - np.sum(field(pts) * u.grad(pts), axis=1)
