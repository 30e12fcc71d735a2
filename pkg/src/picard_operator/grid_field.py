"""Space-time grids, fields on them, and mixed Lebesgue norms.

The spatial domain is (0, 1). Grids store interior points only; the zero
Dirichlet value at x = 0 and x = 1 enters the quadrature implicitly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

__all__ = [
    "SpaceTimeGrid",
    "Field",
    "NormSpec",
    "conjugate_exponent",
    "trapezoid_weights",
    "lp_norm",
    "mixed_norm",
    "mixed_norm_values",
    "pointwise_apply",
    "sample_initial_data",
    "initial_profile",
    "INITIAL_DATA_KINDS",
]


@dataclass(frozen=True)
class SpaceTimeGrid:
    """Uniform tensor grid on [0, T] x (0, 1).

    Time samples are ``t_i = i*T/(nt-1)`` including both endpoints. Space
    samples are ``x_j = j/(nx+1)`` for ``j = 1..nx``.
    """

    nt: int
    nx: int
    T: float

    def __post_init__(self):
        if int(self.nt) != self.nt or self.nt < 2:
            raise ValueError(f"nt must be an integer >= 2, got {self.nt}")
        if int(self.nx) != self.nx or self.nx < 2:
            raise ValueError(f"nx must be an integer >= 2, got {self.nx}")
        if not (math.isfinite(self.T) and self.T > 0):
            raise ValueError(f"T must be positive and finite, got {self.T}")
        object.__setattr__(self, "nt", int(self.nt))
        object.__setattr__(self, "nx", int(self.nx))
        object.__setattr__(self, "T", float(self.T))

    @property
    def dt(self) -> float:
        return self.T / (self.nt - 1)

    @property
    def dx(self) -> float:
        return 1.0 / (self.nx + 1)

    @property
    def t(self) -> np.ndarray:
        return np.arange(self.nt) * self.dt

    @property
    def x(self) -> np.ndarray:
        return np.arange(1, self.nx + 1) * self.dx

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nt, self.nx)

    def time_weights(self) -> np.ndarray:
        return trapezoid_weights(self.nt, self.dt)

    def space_weights(self) -> np.ndarray:
        # trapezoid with zero boundary values: every interior point gets dx
        return np.full(self.nx, self.dx)

    def refined(self) -> "SpaceTimeGrid":
        """Grid with halved steps whose nodes contain this grid's nodes."""
        return SpaceTimeGrid(2 * self.nt - 1, 2 * self.nx + 1, self.T)

    def with_T(self, T: float) -> "SpaceTimeGrid":
        return SpaceTimeGrid(self.nt, self.nx, T)


def trapezoid_weights(n: int, h: float) -> np.ndarray:
    """Composite trapezoid weights for ``n`` equispaced nodes of spacing ``h``."""
    if n < 1:
        raise ValueError("need at least one node")
    w = np.full(n, float(h))
    if n == 1:
        return np.zeros(1)
    w[0] *= 0.5
    w[-1] *= 0.5
    return w


class Field:
    """Real values on a :class:`SpaceTimeGrid`, indexed ``(time, space)``.

    The value array is copied on construction and marked read-only.
    """

    __slots__ = ("grid", "values")

    def __init__(self, grid: SpaceTimeGrid, values):
        arr = np.array(values, dtype=float)
        if arr.shape != grid.shape:
            raise ValueError(f"values shape {arr.shape} does not match grid {grid.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("field values must be finite")
        arr.setflags(write=False)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", arr)

    def __setattr__(self, name, value):
        raise AttributeError("Field is immutable")

    @classmethod
    def zeros(cls, grid: SpaceTimeGrid) -> "Field":
        return cls(grid, np.zeros(grid.shape))

    @classmethod
    def from_function(cls, grid: SpaceTimeGrid, fn: Callable) -> "Field":
        tt, xx = np.meshgrid(grid.t, grid.x, indexing="ij")
        return cls(grid, fn(tt, xx))

    @classmethod
    def constant_in_time(cls, grid: SpaceTimeGrid, profile) -> "Field":
        profile = np.asarray(profile, dtype=float)
        return cls(grid, np.broadcast_to(profile, grid.shape))

    def _check(self, other: "Field"):
        if other.grid != self.grid:
            raise ValueError("fields live on different grids")

    def __add__(self, other: "Field") -> "Field":
        self._check(other)
        return Field(self.grid, self.values + other.values)

    def __sub__(self, other: "Field") -> "Field":
        self._check(other)
        return Field(self.grid, self.values - other.values)

    def __mul__(self, scalar: float) -> "Field":
        return Field(self.grid, self.values * float(scalar))

    __rmul__ = __mul__

    def __neg__(self) -> "Field":
        return Field(self.grid, -self.values)

    def sup(self) -> float:
        return float(np.max(np.abs(self.values)))

    def final(self) -> np.ndarray:
        """Spatial profile at the last time sample."""
        return np.array(self.values[-1])

    def __repr__(self):
        return f"Field(grid={self.grid}, sup={self.sup():.3e})"


def conjugate_exponent(q: float) -> float:
    """Hölder conjugate q' with 1/q + 1/q' = 1."""
    if q == 1:
        return math.inf
    if math.isinf(q):
        return 1.0
    return q / (q - 1.0)


@dataclass(frozen=True)
class NormSpec:
    """Exponents of the mixed norm L^r(0,T; L^s(D))."""

    r: float = 2.0
    s: float = 2.0
    r_conj: float = field(init=False)
    s_conj: float = field(init=False)

    def __post_init__(self):
        for name in ("r", "s"):
            q = float(getattr(self, name))
            if math.isnan(q) or q < 1:
                raise ValueError(f"exponent {name} must lie in [1, inf], got {q}")
            object.__setattr__(self, name, q)
        object.__setattr__(self, "r_conj", conjugate_exponent(self.r))
        object.__setattr__(self, "s_conj", conjugate_exponent(self.s))

    def require_at_least(self, p: float):
        """Reject exponents below the nonlinearity power p."""
        bad = [n for n in ("r", "s") if getattr(self, n) < p]
        if bad:
            raise ValueError(
                f"exponents {', '.join(bad)} violate r,s ∈ [p,∞] with p={p} "
                f"(r={self.r}, s={self.s})"
            )


def lp_norm(values: np.ndarray, weights: np.ndarray, q: float, axis: int = -1) -> np.ndarray:
    """Weighted discrete L^q norm along ``axis``; q = inf gives the sample max."""
    a = np.abs(np.asarray(values, dtype=float))
    if math.isinf(q):
        if a.shape[axis] == 0:
            return np.zeros(np.delete(a.shape, axis))
        return np.max(a, axis=axis)
    w = np.asarray(weights, dtype=float)
    shape = [1] * a.ndim
    shape[axis] = -1
    if q == 1:
        return np.sum(a * w.reshape(shape), axis=axis)
    if q == 2:
        return np.sqrt(np.sum(a * a * w.reshape(shape), axis=axis))
    return np.sum(a**q * w.reshape(shape), axis=axis) ** (1.0 / q)


def mixed_norm_values(values, t_weights, x_weights, r: float, s: float) -> float:
    """Mixed norm of a (time, space) sample array with explicit weights."""
    arr = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError("mixed norm of non-finite values")
    inner = lp_norm(arr, x_weights, s, axis=1)
    return float(lp_norm(inner, t_weights, r, axis=0))


def mixed_norm(f: Field, spec: NormSpec) -> float:
    """Composite-trapezoid approximation of ``||f||_{L^r(0,T; L^s(0,1))}``.

    Parameters
    ----------
    f : Field
        Field on a uniform grid; boundary values are taken to be zero.
    spec : NormSpec
        Temporal exponent ``r`` and spatial exponent ``s``.
    """
    g = f.grid
    return mixed_norm_values(f.values, g.time_weights(), g.space_weights(), spec.r, spec.s)


def pointwise_apply(f: Field, g: Callable[[np.ndarray], np.ndarray]) -> Field:
    """Apply a scalar map sample by sample.

    ``g`` must accept numpy arrays elementwise.
    """
    out = np.asarray(g(f.values), dtype=float)
    if out.shape != f.values.shape:
        out = np.broadcast_to(out, f.values.shape)
    if not np.all(np.isfinite(out)):
        raise ValueError("pointwise map produced non-finite values")
    return Field(f.grid, out)


INITIAL_DATA_KINDS = ("eigenmode", "random-trig", "bump")


def initial_profile(R: float, seed: int = 0, kind: str = "eigenmode", k: int = 1) -> Callable[[np.ndarray], np.ndarray]:
    """Continuous initial profile on [0, 1] with sup-norm at most ``R``.

    ``eigenmode`` is ``R*sin(k*pi*x)``. ``random-trig`` is a random sine
    series with decaying amplitudes. ``bump`` is a smooth compactly supported
    bump with random centre, width and sign. Random kinds are scaled to a
    sup-norm drawn uniformly from ``[R/4, R]``.
    """
    if not (R > 0 and math.isfinite(R)):
        raise ValueError(f"R must be positive, got {R}")
    if kind == "eigenmode":
        return lambda x: R * np.sin(k * np.pi * np.asarray(x, float))
    rng = np.random.default_rng(seed)
    if kind == "random-trig":
        modes = np.arange(1, 9)
        amps = rng.standard_normal(modes.size) / modes**2

        def shape(x):
            return np.sin(np.pi * np.outer(np.asarray(x, float), modes)) @ amps
    elif kind == "bump":
        width = rng.uniform(0.15, 0.45)
        centre = rng.uniform(width, 1.0 - width)
        sign = 1.0 if rng.uniform() < 0.5 else -1.0

        def shape(x):
            z = (np.asarray(x, float) - centre) / width
            out = np.zeros_like(z)
            inside = np.abs(z) < 1
            out[inside] = sign * np.exp(1.0 - 1.0 / (1.0 - z[inside] ** 2))
            return out
    else:
        raise ValueError(f"unknown initial data kind {kind!r}; expected one of {INITIAL_DATA_KINDS}")
    peak = float(np.max(np.abs(shape(np.linspace(0.0, 1.0, 8193)))))
    scale = rng.uniform(0.25, 1.0) * R / peak
    # the clip only guards against rounding past R
    return lambda x: np.clip(scale * shape(x), -R, R)


def sample_initial_data(R: float, nx: int, seed: int = 0, kind: str = "eigenmode", k: int = 1) -> np.ndarray:
    """Samples of :func:`initial_profile` on the interior points ``j/(nx+1)``."""
    x = np.arange(1, nx + 1) / (nx + 1)
    return initial_profile(R, seed, kind, k)(x)
