"""Test functions (densities) with analytic gradients."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import beta, gamma

from .errors import ConfigurationError

C1_00 = "C1_00"  # compactly supported in int X, with gradient
C1_V = "C1_v"  # vanishes on the inflow boundary
L1 = "L1"  # general integrable, e.g. indicators

_KINDS = (C1_00, C1_V, L1)

# integral of (1 - z^2)^3 over [-1, 1]
_BUMP_1D_MASS = 32.0 / 35.0


@dataclass(frozen=True)
class TestFunction:
    """Vectorized density ``u`` with an optional analytic gradient."""

    __test__ = False  # not a pytest class

    eval: Callable[[np.ndarray], np.ndarray]
    gradient: Callable[[np.ndarray], np.ndarray] | None = None
    kind: str = L1
    name: str = "u"
    dim: int = 1
    params: dict | None = None

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ConfigurationError(f"unknown function class {self.kind!r}")
        if self.kind != L1 and self.gradient is None:
            raise ConfigurationError(f"class {self.kind} requires an analytic gradient")

    def __call__(self, x) -> np.ndarray:
        pts = np.asarray(x, dtype=float).reshape(-1, self.dim)
        return np.asarray(self.eval(pts), dtype=float).reshape(len(pts))

    def grad(self, x) -> np.ndarray:
        pts = np.asarray(x, dtype=float).reshape(-1, self.dim)
        return np.asarray(self.gradient(pts), dtype=float).reshape(len(pts), self.dim)


def tensor_bump(center, radius, normalize: bool = True) -> TestFunction:
    """``prod_k max(0, 1 - ((x_k - c_k) / r_k)^2)^3``, C^2 with compact support."""
    c = np.atleast_1d(np.asarray(center, dtype=float))
    d = len(c)
    r = np.broadcast_to(np.asarray(radius, dtype=float), (d,)).copy()
    scale = 1.0 / np.prod(r * _BUMP_1D_MASS) if normalize else 1.0

    def factors(x):
        z = (x - c) / r
        base = np.clip(1.0 - z**2, 0.0, None)
        return z, base

    def evaluate(x):
        _, base = factors(x)
        return scale * np.prod(base**3, axis=1)

    def gradient(x):
        z, base = factors(x)
        f = base**3
        df = -6.0 * z * base**2 / r
        g = np.empty_like(x)
        for k in range(d):
            others = np.prod(np.delete(f, k, axis=1), axis=1) if d > 1 else 1.0
            g[:, k] = df[:, k] * others
        return scale * g

    return TestFunction(evaluate, gradient, C1_00, "tensor_bump", d,
                        {"center": c.tolist(), "radius": r.tolist(), "normalize": normalize})


def radial_bump(center, radius: float, normalize: bool = True) -> TestFunction:
    """Rotationally symmetric ``max(0, 1 - |x - c|^2 / r^2)^3``."""
    c = np.atleast_1d(np.asarray(center, dtype=float))
    d = len(c)
    r = float(radius)
    sphere = 2.0 * np.pi ** (d / 2) / gamma(d / 2)
    mass = sphere * r**d / 2.0 * beta(d / 2, 4.0)
    scale = 1.0 / mass if normalize else 1.0

    def evaluate(x):
        base = np.clip(1.0 - np.sum((x - c) ** 2, axis=1) / r**2, 0.0, None)
        return scale * base**3

    def gradient(x):
        base = np.clip(1.0 - np.sum((x - c) ** 2, axis=1) / r**2, 0.0, None)
        return scale * (-6.0 * base**2 / r**2)[:, None] * (x - c)

    return TestFunction(evaluate, gradient, C1_00, "radial_bump", d,
                        {"center": c.tolist(), "radius": r, "normalize": normalize})


def indicator_box(lo, hi) -> TestFunction:
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    hi = np.atleast_1d(np.asarray(hi, dtype=float))

    def evaluate(x):
        return np.all((x >= lo) & (x < hi), axis=1).astype(float)

    return TestFunction(evaluate, None, L1, "indicator", len(lo),
                        {"lo": lo.tolist(), "hi": hi.tolist()})


def constant_function(value: float, dim: int) -> TestFunction:
    return TestFunction(lambda x: np.full(len(x), float(value)),
                        lambda x: np.zeros_like(x), C1_V, "constant", dim, {"value": value})


def zero_function(dim: int) -> TestFunction:
    return TestFunction(lambda x: np.zeros(len(x)), lambda x: np.zeros_like(x),
                        C1_00, "zero", dim, {})


FUNCTION_CATALOG = {
    "tensor_bump": tensor_bump,
    "bump": tensor_bump,
    "radial_bump": radial_bump,
    "indicator": indicator_box,
    "constant": constant_function,
    "zero": zero_function,
}


def make_function(kind: str, **params) -> TestFunction:
    try:
        factory = FUNCTION_CATALOG[kind]
    except KeyError:
        raise ConfigurationError(
            f"unknown test function {kind!r}; choose from {sorted(FUNCTION_CATALOG)}") from None
    return factory(**params)
