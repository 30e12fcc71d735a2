"""Dirichlet heat semigroup on (0, 1), its Green function and separable expansions.

The Green function is the eigen-series

    G(t, x, y) = sum_k 2 exp(-k^2 pi^2 t) sin(k pi x) sin(k pi y).

Separable expansions approximate the zero-extended two-time kernel
``G~(t, tau, x, y) = G(t - tau, x, y)`` for ``tau <= t`` (zero otherwise) in a
tensor basis ``phi_n(t, x) psi_m(tau, y)``. Coefficients are discrete
transforms of kernel samples; lags shorter than ``t_min`` are evaluated at
``t_min`` because the series is not summable on the diagonal.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .grid_field import NormSpec, SpaceTimeGrid, lp_norm, trapezoid_weights

__all__ = [
    "OperatorSpec",
    "TruncationError",
    "eigenvalues",
    "tail_bound",
    "modes_required",
    "green_eval",
    "kernel_lag_table",
    "sine_matrix",
    "sine_coefficients",
    "sine_synthesis",
    "semigroup_apply",
    "semigroup_orbit",
    "HaarAxis",
    "TrigAxis",
    "KernelExpansion",
    "BoundKernel",
    "build_expansion",
    "expansion_eval",
    "TruncationReport",
    "truncation_errors",
    "SmoothingReport",
    "verify_smoothing",
    "export_expansion",
    "import_expansion",
    "BASIS_KINDS",
    "haar_rank",
    "fourier_rank",
    "fourier_full_cutoff",
    "measurement_grid",
    "tabulate_expansion",
    "spectral_tail_reference",
    "spectral_tail_envelope",
]

TAIL_TOL = 1e-12
BASIS_KINDS = ("spectral", "fourier", "haar")


class TruncationError(RuntimeError):
    """The eigen-series truncation is too short for the requested time."""


@dataclass(frozen=True)
class OperatorSpec:
    """Linear operator data: smoothing exponent, semigroup constant, series length."""

    nu: float = 0.5
    c_L: float = 1.0
    eigen_count_eval: int = 200
    kind: str = "dirichlet_laplacian_1d"

    def __post_init__(self):
        if self.kind != "dirichlet_laplacian_1d":
            raise ValueError(f"unsupported operator kind {self.kind!r}")
        if self.nu != 0.5:
            raise ValueError("the 1-D Dirichlet Laplacian has smoothing exponent nu = 1/2")
        if not self.c_L >= 1:
            raise ValueError(f"c_L must be >= 1, got {self.c_L}")
        if int(self.eigen_count_eval) != self.eigen_count_eval or self.eigen_count_eval < 1:
            raise ValueError("eigen_count_eval must be a positive integer")
        object.__setattr__(self, "eigen_count_eval", int(self.eigen_count_eval))


def eigenvalues(K: int) -> np.ndarray:
    k = np.arange(1, K + 1, dtype=float)
    return (k * np.pi) ** 2


def tail_bound(K: int, t: float) -> float:
    """Bound on ``sum_{k>K} 2 exp(-k^2 pi^2 t)`` by a geometric series."""
    if t <= 0:
        return math.inf
    ratio = math.exp(-(2 * K + 3) * math.pi**2 * t)
    return 2.0 * math.exp(-((K + 1) * math.pi) ** 2 * t) / (1.0 - ratio)


def modes_required(t: float, tol: float = TAIL_TOL) -> int:
    """Smallest series length whose tail bound at time ``t`` is at most ``tol``."""
    if t <= 0:
        raise ValueError("t must be positive")
    K = max(1, int(math.sqrt(math.log(2.0 / tol) / t) / math.pi) - 1)
    while tail_bound(K, t) > tol:
        K += 1
    while K > 1 and tail_bound(K - 1, t) <= tol:
        K -= 1
    return K


def _check_tail(spec: OperatorSpec, t_min: float):
    if tail_bound(spec.eigen_count_eval, t_min) > TAIL_TOL:
        need = modes_required(t_min)
        raise TruncationError(
            f"eigen series with {spec.eigen_count_eval} modes has tail "
            f"{tail_bound(spec.eigen_count_eval, t_min):.3e} > {TAIL_TOL:g} at t={t_min:.6g}; "
            f"need at least {need} modes"
        )


def green_eval(spec: OperatorSpec, t, x, y):
    """Green function of the Dirichlet heat semigroup, vectorized over arguments."""
    t, x, y = np.broadcast_arrays(np.asarray(t, float), np.asarray(x, float), np.asarray(y, float))
    if np.any(~(t > 0)):
        raise ValueError("green_eval requires t > 0")
    if np.any((x < 0) | (x > 1) | (y < 0) | (y > 1)):
        raise ValueError("spatial arguments must lie in [0, 1]")
    _check_tail(spec, float(np.min(t)))
    lam = eigenvalues(spec.eigen_count_eval)
    k = np.arange(1, spec.eigen_count_eval + 1)
    flat = [a.ravel() for a in (t, x, y)]
    out = np.empty(flat[0].size)
    step = 2048
    for lo in range(0, out.size, step):
        sl = slice(lo, lo + step)
        tt, xx, yy = (a[sl, None] for a in flat)
        terms = 2.0 * np.exp(-lam * tt) * np.sin(np.pi * k * xx) * np.sin(np.pi * k * yy)
        out[sl] = terms.sum(axis=1)
    out = out.reshape(t.shape)
    return float(out) if out.ndim == 0 else out


def kernel_lag_table(spec: OperatorSpec, lags, x, y) -> np.ndarray:
    """Array ``G(lag_l, x_i, y_j)`` of shape ``(len(lags), len(x), len(y))``."""
    lags = np.asarray(lags, float)
    if np.any(lags <= 0):
        raise ValueError("lags must be positive")
    _check_tail(spec, float(lags.min()))
    K = spec.eigen_count_eval
    lam = eigenvalues(K)
    k = np.arange(1, K + 1)
    damp = 2.0 * np.exp(-np.outer(lags, lam))
    sx = np.sin(np.pi * np.outer(k, np.asarray(x, float)))
    sy = np.sin(np.pi * np.outer(k, np.asarray(y, float)))
    return np.einsum("lk,kx,ky->lxy", damp, sx, sy, optimize=True)


# ----------------------------------------------------------------------------
# semigroup on the interior grid


@lru_cache(maxsize=32)
def sine_matrix(nx: int) -> np.ndarray:
    """``S[k-1, j-1] = sin(k pi j / (nx+1))`` for k, j = 1..nx (read-only)."""
    k = np.arange(1, nx + 1)
    S = np.sin(np.pi * np.outer(k, k) / (nx + 1))
    S.setflags(write=False)
    return S


def sine_coefficients(u: np.ndarray) -> np.ndarray:
    """Sine-series coefficients of grid samples along the last axis."""
    u = np.asarray(u, float)
    nx = u.shape[-1]
    return (2.0 / (nx + 1)) * (u @ sine_matrix(nx).T)


def sine_synthesis(b: np.ndarray) -> np.ndarray:
    b = np.asarray(b, float)
    return b @ sine_matrix(b.shape[-1])


def semigroup_apply(spec: OperatorSpec, t: float, u0) -> np.ndarray:
    """Evolve interior samples ``u0`` by the heat semigroup for time ``t >= 0``."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    u0 = np.asarray(u0, float)
    if u0.ndim != 1 or u0.size < 2:
        raise ValueError("u0 must be a 1-D array of interior samples")
    b = sine_coefficients(u0)
    return sine_synthesis(b * np.exp(-eigenvalues(u0.size) * t))


def semigroup_orbit(spec: OperatorSpec, times, u0) -> np.ndarray:
    """Rows ``S(t_i) u0`` for each time in ``times``."""
    u0 = np.asarray(u0, float)
    b = sine_coefficients(u0)
    damp = np.exp(-np.outer(np.asarray(times, float), eigenvalues(u0.size)))
    return sine_synthesis(damp * b)


# ----------------------------------------------------------------------------
# one-dimensional bases

_CELL_FUZZ = 1e-9


@dataclass(frozen=True)
class HaarAxis:
    """Haar system on ``[start, start+length)`` with ``count`` functions.

    Ordering: the constant first, then level 0, level 1, ... so the first
    ``2**J`` functions span the piecewise constants on ``2**J`` cells.
    Orthonormal for the mean inner product ``(1/length) * integral``.
    """

    start: float
    length: float
    count: int

    def __post_init__(self):
        if self.count < 1 or self.count & (self.count - 1):
            raise ValueError("Haar axis size must be a power of two")

    def evaluate(self, points) -> np.ndarray:
        u = (np.asarray(points, float) - self.start) / self.length
        if np.any((u < -_CELL_FUZZ) | (u > 1 + _CELL_FUZZ)):
            raise ValueError("points outside the Haar axis interval")
        out = np.empty((self.count, u.size))
        out[0] = 1.0
        for i in range(1, self.count):
            j = int(math.log2(i))
            shift = i - (1 << j)
            # index of the half-cell at level j+1, right end folded into the last cell
            half = np.minimum(np.floor(u * (1 << (j + 1)) + _CELL_FUZZ), (1 << (j + 1)) - 1)
            amp = 2.0 ** (j / 2)
            row = np.zeros(u.size)
            row[half == 2 * shift] = amp
            row[half == 2 * shift + 1] = -amp
            out[i] = row
        return out


@dataclass(frozen=True)
class TrigAxis:
    """Real trigonometric system ``1, c1, s1, c2, s2, ...`` of period ``period``.

    Orthonormal for the mean inner product over ``sample_count`` equispaced
    samples; when ``sample_count`` is even the Nyquist sine is absent and the
    Nyquist cosine has unit amplitude.
    """

    start: float
    period: float
    count: int
    sample_count: int

    def __post_init__(self):
        if not 1 <= self.count <= self.sample_count:
            raise ValueError("trig axis count must lie in [1, sample_count]")

    def evaluate(self, points) -> np.ndarray:
        u = (np.asarray(points, float) - self.start) / self.period
        out = np.empty((self.count, u.size))
        out[0] = 1.0
        even = self.sample_count % 2 == 0
        for i in range(1, self.count):
            freq = (i + 1) // 2
            amp = 1.0 if (even and 2 * freq == self.sample_count) else math.sqrt(2.0)
            fn = np.cos if i % 2 == 1 else np.sin
            out[i] = amp * fn(2.0 * np.pi * freq * u)
        return out

    def sample_points(self) -> np.ndarray:
        return self.start + np.arange(self.sample_count) * (self.period / self.sample_count)


# ----------------------------------------------------------------------------
# sample layouts and coefficient transforms


def _haar_samples(T: float, grid4: int):
    t = np.arange(grid4) * (T / grid4)
    x = (np.arange(grid4) + 0.5) / grid4
    return t, x


def _fourier_layout(T: float, grid4: int):
    pt = 3 * (grid4 - 1)
    px = grid4 + 1
    t = -T + np.arange(pt) * (T / (grid4 - 1))
    x = np.arange(px) / px
    return pt, px, t, x


def _zero_extended_samples(spec: OperatorSpec, t_idx_lag, lag_step: float, t_min: float, x, y):
    """Kernel samples on a uniform time lattice given integer lag indices.

    ``t_idx_lag[i, j]`` is the integer lag (t_i - tau_j)/lag_step, negative
    for tau > t, and a large negative sentinel outside the time box.
    """
    max_lag = int(t_idx_lag.max())
    lags = np.maximum(np.arange(max_lag + 1) * lag_step, t_min)
    table = kernel_lag_table(spec, lags, x, y)
    out = np.zeros(t_idx_lag.shape + (len(x), len(y)))
    mask = t_idx_lag >= 0
    out[mask] = table[t_idx_lag[mask]]
    return out


@lru_cache(maxsize=8)
def _haar_full_coefficients(spec: OperatorSpec, T: float, grid4: int) -> np.ndarray:
    P = grid4
    t, x = _haar_samples(T, P)
    idx = np.arange(P)
    lag_idx = np.subtract.outer(idx, idx)
    Gt = _zero_extended_samples(spec, lag_idx, T / P, T / (4 * P), x, x)
    A = HaarAxis(0.0, T, P).evaluate(t)
    B = HaarAxis(0.0, 1.0, P).evaluate(x)
    c = np.einsum("at,bs,cx,dy,tsxy->abcd", A, A, B, B, Gt, optimize=True) / float(P) ** 4
    c.setflags(write=False)
    return c


@lru_cache(maxsize=8)
def _fourier_full_coefficients(spec: OperatorSpec, T: float, grid4: int) -> np.ndarray:
    pt, px, t, x = _fourier_layout(T, grid4)
    # time samples inside [0, T] are indices grid4-1 .. 2*(grid4-1)
    first = grid4 - 1
    box = np.arange(first, first + grid4)
    lag_idx = np.subtract.outer(box, box)
    Gbox = _zero_extended_samples(spec, lag_idx, T / (grid4 - 1), T / (4 * grid4), x[1:], x[1:])
    A = TrigAxis(-T, 3 * T, pt, pt).evaluate(t)[:, box]
    B = TrigAxis(0.0, 1.0, px, px).evaluate(x)[:, 1:]  # x = 0 sample is zero
    c = np.einsum("at,bs,cx,dy,tsxy->abcd", A, A, B, B, Gbox, optimize=True)
    c /= float(pt) ** 2 * float(px) ** 2
    c.setflags(write=False)
    return c


# ----------------------------------------------------------------------------
# expansions


@dataclass(frozen=True, eq=False)
class KernelExpansion:
    """Truncated separable expansion of the zero-extended two-time kernel.

    ``coeffs[a, b, c, d]`` multiplies ``phi_a(t) psi_b(tau) phi_c(x) psi_d(y)``,
    with the same 1-D systems on both time axes and on both space axes. The
    n-index is ``(a, c)`` and the m-index is ``(b, d)``. Spectral expansions
    have no coefficient tensor and evaluate the truncated eigen-series.
    """

    basis_kind: str
    level: int
    T: float
    grid4: int
    coeffs: np.ndarray | None
    time_axis: HaarAxis | TrigAxis | None
    space_axis: HaarAxis | TrigAxis | None
    spec: OperatorSpec
    _bound: dict = field(default_factory=dict, repr=False)

    @property
    def t_min(self) -> float:
        return self.T / (4 * self.grid4)

    @property
    def shape(self) -> tuple[int, ...]:
        return () if self.coeffs is None else self.coeffs.shape

    @property
    def rank(self) -> int:
        """Number of (m, n) coefficient pairs; mode count for the spectral kind."""
        if self.coeffs is None:
            return self.level
        return int(self.coeffs.size)

    @property
    def index_set(self) -> list[tuple[int, int]]:
        """Per-side index list: (time index, space index) pairs."""
        if self.coeffs is None:
            return [(k, k) for k in range(1, self.level + 1)]
        na, _, nc, _ = self.coeffs.shape
        return [(a, c) for a in range(na) for c in range(nc)]

    # -- pointwise evaluation

    def _check_box(self, t, tau, x, y):
        eps = 1e-12 * self.T
        if np.any((t < -eps) | (t > self.T + eps) | (tau < -eps) | (tau > self.T + eps)):
            raise ValueError(f"time arguments must lie in [0, {self.T}]")
        if np.any((x < 0) | (x > 1) | (y < 0) | (y > 1)):
            raise ValueError("spatial arguments must lie in [0, 1]")

    def evaluate(self, t, tau, x, y):
        t, tau, x, y = np.broadcast_arrays(*(np.asarray(a, float) for a in (t, tau, x, y)))
        self._check_box(t, tau, x, y)
        shape = t.shape
        t, tau, x, y = (a.ravel() for a in (t, tau, x, y))
        if self.coeffs is None:
            out = self._spectral_values(t - tau, x, y)
        else:
            At = self.time_axis.evaluate(t)
            Atau = self.time_axis.evaluate(tau)
            Bx = self.space_axis.evaluate(x)
            By = self.space_axis.evaluate(y)
            out = np.einsum("abcd,ap,bp,cp,dp->p", self.coeffs, At, Atau, Bx, By, optimize=True)
        out = out.reshape(shape)
        return float(out) if out.ndim == 0 else out

    def _spectral_values(self, lag, x, y):
        lam = eigenvalues(self.level)
        k = np.arange(1, self.level + 1)
        terms = 2.0 * np.exp(-np.outer(np.maximum(lag, 0.0), lam))
        terms *= np.sin(np.pi * np.outer(x, k)) * np.sin(np.pi * np.outer(y, k))
        out = terms.sum(axis=1)
        out[lag < 0] = 0.0
        return out

    # -- grid-bound operators

    def bind(self, grid: SpaceTimeGrid) -> "BoundKernel":
        if self.coeffs is None:
            raise ValueError("spectral expansions are evaluation oracles and cannot act on fields")
        if abs(grid.T - self.T) > 1e-12 * self.T:
            raise ValueError(f"expansion horizon T={self.T} does not match grid T={grid.T}")
        key = (grid.nt, grid.nx)
        if key not in self._bound:
            self._bound[key] = BoundKernel(self, grid)
        return self._bound[key]


class BoundKernel:
    """An expansion's integral operators on a fixed field grid.

    ``apply`` is the Duhamel-type operator
    ``f -> sum c_{n,m} <psi_m, f> phi_n`` and ``apply_initial`` its
    initial-layer counterpart ``u0 -> sum c_{n,m} <psi_m(0, .), u0> phi_n``.
    Pairings use the grid's trapezoid weights.
    """

    def __init__(self, expansion: KernelExpansion, grid: SpaceTimeGrid):
        c = np.asarray(expansion.coeffs)
        na, nb, nc, nd = c.shape
        self.grid = grid
        self.time_basis = expansion.time_axis.evaluate(grid.t)
        self.space_basis = expansion.space_axis.evaluate(grid.x)
        tau0 = expansion.time_axis.evaluate(np.zeros(1))[:, 0]
        self.w_t = grid.time_weights()
        self.w_x = grid.space_weights()
        self.duhamel_matrix = c.transpose(0, 2, 1, 3).reshape(na * nc, nb * nd)
        self.initial_matrix = np.einsum("abcd,b->acd", c, tau0).reshape(na * nc, nd)
        self._shapes = (na, nb, nc, nd)
        for arr in (self.time_basis, self.space_basis, self.duhamel_matrix, self.initial_matrix):
            arr.setflags(write=False)

    def pair(self, f: np.ndarray) -> np.ndarray:
        """Coefficients ``<psi_m, f>`` over (0, T) x (0, 1)."""
        _, nb, _, nd = self._shapes
        weighted = (self.w_t[:, None] * f) * self.w_x[None, :]
        return self.time_basis[:nb] @ weighted @ self.space_basis[:nd].T

    def synthesize(self, q: np.ndarray) -> np.ndarray:
        na, _, nc, _ = self._shapes
        return self.time_basis[:na].T @ q.reshape(na, nc) @ self.space_basis[:nc]

    def apply(self, f: np.ndarray) -> np.ndarray:
        f = np.asarray(f, float)
        if f.shape != self.grid.shape:
            raise ValueError(f"field shape {f.shape} does not match grid {self.grid.shape}")
        return self.synthesize(self.duhamel_matrix @ self.pair(f).ravel())

    def apply_initial(self, u0: np.ndarray) -> np.ndarray:
        u0 = np.asarray(u0, float)
        if u0.shape != (self.grid.nx,):
            raise ValueError("initial profile does not match grid")
        nd = self._shapes[3]
        p = self.space_basis[:nd] @ (self.w_x * u0)
        return self.synthesize(self.initial_matrix @ p)


def _haar_level_for_rank(N: int) -> int:
    J = 0
    while 16 ** (J + 1) <= N:
        J += 1
    if 16**J != N:
        raise ValueError(f"haar rank must be 2^(4J); got N={N} (nearest below is {16 ** J})")
    return J


def build_expansion(spec: OperatorSpec, basis_kind: str, N: int, T: float, grid4: int = 32) -> KernelExpansion:
    """Build a truncated expansion of the zero-extended kernel on ``[0, T]``.

    Parameters
    ----------
    spec : OperatorSpec
    basis_kind : {"haar", "fourier", "spectral"}
    N : int
        Requested rank. Haar needs ``N = 2**(4J)``; fourier uses the per-axis
        cutoff ``ceil(N**0.25)``; spectral keeps ``N`` eigenmodes.
    T : float
        Time horizon.
    grid4 : int
        Per-axis sample count used for the coefficient transform.
    """
    if int(N) != N or N < 1:
        raise ValueError("N must be a positive integer")
    if not T > 0:
        raise ValueError("T must be positive")
    N = int(N)
    if basis_kind == "haar":
        if grid4 < 1 or grid4 & (grid4 - 1):
            raise ValueError("haar expansions need grid4 to be a power of two")
        J = _haar_level_for_rank(N)
        if 2**J > grid4:
            raise ValueError(f"grid4={grid4} too small to resolve haar level {J} (needs {2 ** J})")
        full = _haar_full_coefficients(spec, float(T), int(grid4))
        n = 2**J
        coeffs = np.array(full[:n, :n, :n, :n])
        coeffs.setflags(write=False)
        return KernelExpansion("haar", J, float(T), int(grid4), coeffs,
                               HaarAxis(0.0, float(T), n), HaarAxis(0.0, 1.0, n), spec)
    if basis_kind == "fourier":
        if grid4 < 3:
            raise ValueError("fourier expansions need grid4 >= 3")
        K = math.ceil(round(N ** 0.25, 12))
        pt, px, _, _ = _fourier_layout(float(T), int(grid4))
        nt, nx = min(2 * K + 1, pt), min(2 * K + 1, px)
        full = _fourier_full_coefficients(spec, float(T), int(grid4))
        coeffs = np.array(full[:nt, :nt, :nx, :nx])
        coeffs.setflags(write=False)
        return KernelExpansion("fourier", K, float(T), int(grid4), coeffs,
                               TrigAxis(-float(T), 3 * float(T), nt, pt),
                               TrigAxis(0.0, 1.0, nx, px), spec)
    if basis_kind == "spectral":
        return KernelExpansion("spectral", N, float(T), int(grid4), None, None, None, spec)
    raise ValueError(f"unknown basis kind {basis_kind!r}; expected one of {BASIS_KINDS}")


def haar_rank(level: int) -> int:
    return 16**level


def fourier_rank(K: int, grid4: int) -> int:
    pt, px = 3 * (grid4 - 1), grid4 + 1
    return min(2 * K + 1, pt) ** 2 * min(2 * K + 1, px) ** 2


def fourier_full_cutoff(grid4: int) -> int:
    """Smallest cutoff at which both fourier axes are fully resolved."""
    return (max(3 * (grid4 - 1), grid4 + 1)) // 2


def expansion_eval(exp: KernelExpansion, t, tau, x, y):
    """Separable sum ``G_N`` at the given points (see :meth:`KernelExpansion.evaluate`)."""
    return exp.evaluate(t, tau, x, y)


# ----------------------------------------------------------------------------
# truncation errors


@dataclass(frozen=True)
class TruncationReport:
    """Mixed-norm truncation errors plus the excluded near-diagonal sliver bound."""

    C_G: float
    C_prime_G: float
    t_min: float
    sliver_bound: float

    def __iter__(self):
        return iter((self.C_G, self.C_prime_G))


def measurement_grid(basis_kind: str, T: float, grid4: int):
    """Sample nodes and outer weights used to measure truncation errors.

    Haar is measured on its coefficient samples (left-corner times, cell
    centres, left-Riemann outer weights); the other kinds on the node grid
    ``t_i = i T/(grid4-1)``, ``x_j = j/(grid4+1)`` with trapezoid weights.
    Returns ``(t, x, w_t, w_x, lag_step)``.
    """
    if basis_kind == "haar":
        t, x = _haar_samples(T, grid4)
        return t, x, np.full(grid4, T / grid4), np.full(grid4, 1.0 / grid4), T / grid4
    t = np.arange(grid4) * (T / (grid4 - 1))
    x = np.arange(1, grid4 + 1) / (grid4 + 1)
    return t, x, trapezoid_weights(grid4, T / (grid4 - 1)), np.full(grid4, 1.0 / (grid4 + 1)), T / (grid4 - 1)


def _expansion_on_samples(exp: KernelExpansion, t, x, t_min):
    """``G_N`` on the tensor sample grid, shape (t, tau, x, y)."""
    if exp.coeffs is None:
        idx = np.arange(len(t))
        lag_idx = np.subtract.outer(idx, idx)
        step = t[1] - t[0]
        lags = np.maximum(np.arange(len(t)) * step, t_min)
        lam = eigenvalues(exp.level)
        k = np.arange(1, exp.level + 1)
        sx = np.sin(np.pi * np.outer(k, x))
        table = np.einsum("lk,kx,ky->lxy", 2.0 * np.exp(-np.outer(lags, lam)), sx, sx)
        out = np.zeros((len(t), len(t), len(x), len(x)))
        mask = lag_idx >= 0
        out[mask] = table[lag_idx[mask]]
        return out
    A = exp.time_axis.evaluate(t)
    B = exp.space_axis.evaluate(x)
    return np.einsum("abcd,at,bs,cx,dy->tsxy", exp.coeffs, A, A, B, B, optimize=True)


def tabulate_expansion(exp: KernelExpansion, t, x) -> np.ndarray:
    """Separable ``G_N`` on the tensor grid ``t x t x x x x``, shape (t, tau, x, y)."""
    if exp.coeffs is None:
        raise ValueError("tabulation needs a separable expansion")
    return _expansion_on_samples(exp, np.asarray(t, float), np.asarray(x, float), exp.t_min)


def _sliver_bound(spec: OperatorSpec, norm: NormSpec, T: float, t_min: float) -> float:
    # L^{s'}_y row norm of G(sigma) is at most C_L sigma^{-nu/s}; integrate over (0, t_min)
    a = spec.nu / norm.s if math.isfinite(norm.s) else 0.0
    rc = norm.r_conj
    if math.isinf(rc):
        inner = math.inf if a > 0 else spec.c_L
    elif rc * a >= 1:
        inner = math.inf
    else:
        inner = spec.c_L * (t_min ** (1 - rc * a) / (1 - rc * a)) ** (1 / rc)
    outer_t = T ** (1 / norm.r) if math.isfinite(norm.r) else 1.0
    return inner * outer_t


def truncation_errors(exp: KernelExpansion, spec: OperatorSpec, norm: NormSpec, grid4: int | None = None) -> TruncationReport:
    """Measure ``C_G`` and ``C'_G`` for an expansion by nested quadrature.

    ``C_G`` is the outer ``L^r_t L^s_x`` norm of the inner
    ``L^{r'}_tau(0, t) L^{s'}_y`` norm of ``G~ - G_N``. ``C'_G`` replaces the
    inner norm by ``L^{s'}_y`` of the initial-time kernel ``G(t) - G_N(t, 0)``.
    Lags below ``t_min = T/(4 grid4)`` are evaluated at ``t_min``.
    """
    g = exp.grid4 if grid4 is None else int(grid4)
    T = exp.T
    t_min = T / (4 * g)
    t, x, w_t, w_x, step = measurement_grid(exp.basis_kind, T, g)
    idx = np.arange(len(t))
    lag_idx = np.subtract.outer(idx, idx)
    exact = _zero_extended_samples(spec, lag_idx, step, t_min, x, x)
    err = exact - _expansion_on_samples(exp, t, x, t_min)

    rp, sp = norm.r_conj, norm.s_conj
    # inner y-norm, then inner tau-norm over [0, t_i] with trapezoid weights
    row_y = lp_norm(err, w_x, sp, axis=3)  # (t, tau, x)
    inner = np.zeros((len(t), len(x)))
    for i in range(1, len(t)):
        w = trapezoid_weights(i + 1, step)
        inner[i] = lp_norm(row_y[i, : i + 1], w, rp, axis=0)
    c_g = float(lp_norm(lp_norm(inner, w_x, norm.s, axis=1), w_t, norm.r, axis=0))
    init = lp_norm(err[:, 0], w_x, sp, axis=2)  # (t, x)
    c_pg = float(lp_norm(lp_norm(init, w_x, norm.s, axis=1), w_t, norm.r, axis=0))
    return TruncationReport(c_g, c_pg, t_min, _sliver_bound(spec, norm, T, t_min))


def spectral_tail_reference(T: float, grid4: int, K: int, spec: OperatorSpec) -> float:
    """Analytic-tail oracle for the spectral ``C'_G`` at r = s = 2.

    Carries ``sum_{k>K} 2 exp(-k^2 pi^2 t) sin(k pi x) sin(k pi y)`` through the
    same time quadrature, using exact spatial orthogonality
    ``int sin^2 = 1/2`` in x and y, and the same ``t_min`` floor.
    """
    t_min = T / (4 * grid4)
    t = np.arange(grid4) * (T / (grid4 - 1))
    w = trapezoid_weights(grid4, T / (grid4 - 1))
    lam = eigenvalues(spec.eigen_count_eval)[K:]
    a = 2.0 * np.exp(-np.outer(np.maximum(t, t_min), lam))
    return float(np.sqrt(np.sum(w * (a**2).sum(axis=1) / 4.0)))


def spectral_tail_envelope(T: float, grid4: int, K: int, spec: OperatorSpec) -> float:
    """Upper bound ``|| sum_{k>K} 2 exp(-k^2 pi^2 t) ||_{L^2_t}`` on the same nodes."""
    t_min = T / (4 * grid4)
    t = np.arange(grid4) * (T / (grid4 - 1))
    w = trapezoid_weights(grid4, T / (grid4 - 1))
    lam = eigenvalues(spec.eigen_count_eval)[K:]
    a = 2.0 * np.exp(-np.outer(np.maximum(t, t_min), lam))
    return float(np.sqrt(np.sum(w * a.sum(axis=1) ** 2)))


# ----------------------------------------------------------------------------
# smoothing estimates


@dataclass(frozen=True)
class SmoothingReport:
    q1: float
    q2: float
    times: tuple[float, ...]
    estimates: tuple[float, ...]
    scaled_max: float
    max_row_mass: float
    c_L: float
    exceeds_c_L: bool


ROUNDING_SLACK = 1e-12


def _test_dictionary(x: np.ndarray) -> np.ndarray:
    rows = [np.sin(k * np.pi * x) for k in range(1, 9)]
    rows.append(np.ones_like(x))
    for centre in (0.5, 0.25, 0.1):
        for width in (0.2, 0.05, 0.01):
            rows.append((np.abs(x - centre) <= width / 2).astype(float))
    rows.append(x * (1 - x))
    return np.array([r for r in rows if np.any(r)])


def verify_smoothing(spec: OperatorSpec, t_samples, q1: float, q2: float, nx: int = 1023) -> SmoothingReport:
    """Estimate ``||S(t)||_{L^q1 -> L^q2}`` over a fixed dictionary of test functions.

    The reported quantity is ``max_t estimate(t) * t^{nu (1/q1 - 1/q2)}``,
    flagged if it exceeds ``c_L`` beyond a relative rounding slack of 1e-12. The largest kernel row mass
    ``int G(t, x, y) dy`` over the sampled times is reported as well.
    """
    times = tuple(float(t) for t in np.atleast_1d(t_samples))
    if any(not 0 < t <= 1 for t in times):
        raise ValueError("smoothing samples must lie in (0, 1]")
    x = np.arange(1, nx + 1) / (nx + 1)
    w = np.full(nx, 1.0 / (nx + 1))
    funcs = _test_dictionary(x)
    expo = spec.nu * ((1 / q1 if math.isfinite(q1) else 0.0) - (1 / q2 if math.isfinite(q2) else 0.0))
    estimates = []
    masses = []
    for t in times:
        K = max(spec.eigen_count_eval, 1)
        _check_tail(OperatorSpec(spec.nu, spec.c_L, K, spec.kind), t)
        lam = eigenvalues(K)
        k = np.arange(1, K + 1)
        S = np.sin(np.pi * np.outer(k, x))
        # exact action of the semigroup on the sine coefficients by quadrature
        b = 2.0 * (funcs * w) @ S.T
        out = (b * np.exp(-lam * t)) @ S
        ratio = lp_norm(out, w, q2, axis=1) / lp_norm(funcs, w, q1, axis=1)
        estimates.append(float(np.max(ratio)))
        # row mass: int G dy = sum_k 2 e^{-lam t} sin(k pi x) (1 - cos(k pi))/(k pi)
        mass = (2.0 * np.exp(-lam * t) * (1 - np.cos(k * np.pi)) / (k * np.pi)) @ S
        masses.append(float(np.max(mass)))
    scaled = max(e * t**expo for e, t in zip(estimates, times))
    return SmoothingReport(q1, q2, times, tuple(estimates), float(scaled), max(masses),
                           spec.c_L, bool(scaled > spec.c_L * (1 + ROUNDING_SLACK)))


# ----------------------------------------------------------------------------
# text export


def _fmt(v: float) -> str:
    return "%.17g" % v


def export_expansion(exp: KernelExpansion, path) -> None:
    """Write ``basis kind N T`` then ``b,d a,c value`` per coefficient."""
    if exp.coeffs is None:
        raise ValueError("spectral expansions have no coefficient table to export")
    lines = [f"basis {exp.basis_kind} {exp.rank} {_fmt(exp.T)}", f"# grid4 {exp.grid4}"]
    na, nb, nc, nd = exp.coeffs.shape
    for a in range(na):
        for c in range(nc):
            for b in range(nb):
                for d in range(nd):
                    lines.append(f"{b},{d} {a},{c} {_fmt(exp.coeffs[a, b, c, d])}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def import_expansion(path, spec: OperatorSpec | None = None) -> KernelExpansion:
    """Read a table written by :func:`export_expansion`.

    Lines starting with ``#`` carry optional metadata (``# grid4 <int>``).
    """
    spec = spec or OperatorSpec()
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 4 or header[0] != "basis":
            raise ValueError("expected header 'basis <kind> <N> <T>'")
        kind, N, T = header[1], int(header[2]), float(header[3])
        entries = []
        grid4 = 32
        for line in fh:
            if not line.strip():
                continue
            if line.startswith("#"):
                meta = line[1:].split()
                if len(meta) == 2 and meta[0] == "grid4":
                    grid4 = int(meta[1])
                continue
            m, n, v = line.split()
            b, d = map(int, m.split(","))
            a, c = map(int, n.split(","))
            entries.append((a, b, c, d, float(v)))
    arr = np.array([e[:4] for e in entries], dtype=int)
    na, nb, nc, nd = (arr.max(axis=0) + 1).tolist()
    coeffs = np.zeros((na, nb, nc, nd))
    for a, b, c, d, v in entries:
        coeffs[a, b, c, d] = v
    if coeffs.size != N:
        raise ValueError(f"header rank {N} does not match {coeffs.size} coefficients")
    coeffs.setflags(write=False)
    if kind == "haar":
        J = int(round(math.log2(na)))
        return KernelExpansion("haar", J, T, grid4, coeffs, HaarAxis(0.0, T, na), HaarAxis(0.0, 1.0, nc), spec)
    if kind == "fourier":
        pt, px = 3 * (grid4 - 1), grid4 + 1
        return KernelExpansion("fourier", (na - 1) // 2, T, grid4, coeffs,
                               TrigAxis(-T, 3 * T, na, pt), TrigAxis(0.0, 1.0, nc, px), spec)
    raise ValueError(f"cannot import basis kind {kind!r}")
