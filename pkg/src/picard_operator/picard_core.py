"""Mild-solution maps, admissible time windows, Picard iteration and the error budget.

For ``u_t - u_xx = F(u)`` with zero Dirichlet data the mild formulation is

    Phi[u](t) = S(t) u0 + int_0^t S(t - tau) F(u(tau)) dtau.

``Phi`` uses the exact semigroup, ``Phi_N`` a separable kernel expansion,
and ``Phi_N,net`` additionally replaces ``F`` by its network surrogate.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .grid_field import Field, NormSpec, SpaceTimeGrid, mixed_norm, pointwise_apply
from .nonlinearity_net import NonlinearitySpec
from .semigroup_kernel import (
    KernelExpansion,
    OperatorSpec,
    eigenvalues,
    semigroup_orbit,
    sine_coefficients,
    sine_synthesis,
)

__all__ = [
    "AdmissibilityError",
    "derive_constants",
    "contraction_rate",
    "PicardConfig",
    "SelectTResult",
    "select_T",
    "duhamel",
    "duhamel_exact",
    "phi_step",
    "PicardDiagnostics",
    "picard_solve",
    "ErrorBudget",
    "error_budget",
    "depth_for",
    "continuity_constant",
    "VARIANTS",
]

VARIANTS = ("exact", "N", "N_net")
DOMAIN_MEASURE = 1.0  # |D| for D = (0, 1)


class AdmissibilityError(ValueError):
    """Parameters violate an admissibility condition; the message names it."""


def _inv(q: float) -> float:
    return 0.0 if math.isinf(q) else 1.0 / q


def check_exponents(nu: float, p: float, r: float, s: float) -> None:
    """Reject exponents violating ``r, s in [p, inf]`` or ``nu/s + 1/r < 1/(p-1)``."""
    problems = []
    if r < p or s < p:
        problems.append(f"r,s ∈ [p,∞] fails (r={r}, s={s}, p={p})")
    lhs = nu * _inv(s) + _inv(r)
    rhs = 1.0 / (p - 1)
    if not lhs < rhs:
        problems.append(f"ν/s + 1/r < 1/(p-1) fails ({lhs:.6g} >= {rhs:.6g})")
    if problems:
        raise AdmissibilityError("; ".join(problems))


def derive_constants(nu: float, p: float, r: float, s: float) -> tuple[float, float]:
    """Return ``(alpha, beta) = (-nu (p-1)/s, (r-p+1)/r)`` after the exponent checks."""
    check_exponents(nu, p, r, s)
    alpha = -nu * (p - 1) * _inv(s)
    beta = 1.0 if math.isinf(r) else (r - p + 1) / r
    if not alpha + beta > 0:
        raise AdmissibilityError(f"alpha + beta = {alpha + beta:.6g} is not positive")
    if not 0 < beta <= 1:
        raise AdmissibilityError(f"beta = {beta:.6g} outside (0, 1]")
    return alpha, beta


def _gamma_factor(alpha: float, beta: float) -> float:
    return (alpha / beta + 1.0) ** (-beta)


def contraction_rate(T: float, M: float, nu: float, p: float, r: float, s: float, c_L: float, c_F: float) -> float:
    """``delta(T, M) = 2 (alpha/beta + 1)^(-beta) C_L C_F T^(alpha+beta) M^(p-1)``."""
    alpha, beta = derive_constants(nu, p, r, s)
    return 2.0 * _gamma_factor(alpha, beta) * c_L * c_F * T ** (alpha + beta) * M ** (p - 1)


def continuity_constant(c_L: float, s: float, r: float, T: float, delta: float) -> float:
    """Lipschitz constant of the data-to-solution map, ``C_L |D|^(1/s) T^(1/r) / (1-delta)``."""
    return c_L * DOMAIN_MEASURE ** _inv(s) * T ** _inv(r) / (1.0 - delta)


@dataclass(frozen=True)
class PicardConfig:
    """Constants of the contraction argument on one time window.

    ``certified`` marks windows certified by :func:`select_T`; practical
    windows use a measured contraction rate instead.
    """

    R: float
    M: float
    M_prime: float
    T: float
    delta: float
    norm: NormSpec = field(default_factory=NormSpec)
    operator: OperatorSpec = field(default_factory=OperatorSpec)
    nonlinearity: NonlinearitySpec = field(default_factory=NonlinearitySpec)
    nt: int = 64
    nx: int = 64
    certified: bool = True
    alpha: float = field(init=False)
    beta: float = field(init=False)

    def __post_init__(self):
        for name in ("R", "M", "M_prime", "T"):
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                raise AdmissibilityError(f"{name} must be positive and finite, got {v}")
        if not 0 <= self.delta < 1:
            raise AdmissibilityError(f"delta must lie in [0, 1), got {self.delta}")
        self.norm.require_at_least(self.nonlinearity.p)
        a, b = derive_constants(self.operator.nu, self.nonlinearity.p, self.norm.r, self.norm.s)
        object.__setattr__(self, "alpha", a)
        object.__setattr__(self, "beta", b)

    @property
    def grid(self) -> SpaceTimeGrid:
        return SpaceTimeGrid(self.nt, self.nx, self.T)

    @property
    def rho(self) -> float:
        return self.operator.c_L * DOMAIN_MEASURE ** _inv(self.norm.s) * self.T ** _inv(self.norm.r) * self.R

    @property
    def formula_delta(self) -> float:
        nl, op, nm = self.nonlinearity, self.operator, self.norm
        return contraction_rate(self.T, self.M, op.nu, nl.p, nm.r, nm.s, op.c_L, nl.c_F)

    def conditions(self) -> dict[str, float]:
        """Slack (rhs - lhs) of every admissibility inequality at this window."""
        return _condition_slacks(self.T, self.R, self.M, self.M_prime, self.operator, self.nonlinearity, self.norm)

    def with_T(self, T: float, **changes) -> "PicardConfig":
        return replace(self, T=T, **changes)


def _condition_slacks(T, R, M, Mp, op: OperatorSpec, nl: NonlinearitySpec, norm: NormSpec) -> dict[str, float]:
    alpha, beta = derive_constants(op.nu, nl.p, norm.r, norm.s)
    cL, cF, p = op.c_L, nl.c_F, nl.p
    dmeas = DOMAIN_MEASURE ** _inv(norm.s)
    rho = cL * dmeas * T ** _inv(norm.r) * R
    delta = 2.0 * _gamma_factor(alpha, beta) * cL * cF * T ** (alpha + beta) * M ** (p - 1)
    return {
        "rho + delta*M <= M": M - (rho + delta * M),
        "rho + (a/b+1)^-b C_L C_F T^(a+b) M^p <= M": M - (rho + _gamma_factor(alpha, beta) * cL * cF * T ** (alpha + beta) * M**p),
        "2 C_L R + 2 C_L T (1 + C_F M'^p) <= M'": Mp - (2 * cL * R + 2 * cL * T * (1 + cF * Mp**p)),
        "T^(1/r) |D|^(1/s) M' <= M": M - T ** _inv(norm.r) * dmeas * Mp,
        "T <= 1": 1.0 - T,
    }


@dataclass(frozen=True)
class SelectTResult:
    T: float
    rho: float
    delta: float
    certificate: dict


def select_T(
    R: float,
    M: float,
    M_prime: float,
    delta_target: float,
    operator: OperatorSpec,
    nonlinearity: NonlinearitySpec,
    norm: NormSpec,
    max_halvings: int = 60,
) -> SelectTResult:
    """Largest ``T = 2^-k`` (``k <= max_halvings``) meeting every admissibility condition.

    The certificate maps each condition to its slack, plus ``delta <= target``.
    """
    if min(R, M, M_prime) <= 0:
        raise AdmissibilityError("R, M and M' must be positive")
    if not 0 < delta_target < 1:
        raise AdmissibilityError("delta_target must lie in (0, 1)")
    alpha, beta = derive_constants(operator.nu, nonlinearity.p, norm.r, norm.s)
    T = 1.0
    last = None
    for _ in range(max_halvings + 1):
        slacks = _condition_slacks(T, R, M, M_prime, operator, nonlinearity, norm)
        delta = 2.0 * _gamma_factor(alpha, beta) * operator.c_L * nonlinearity.c_F * T ** (alpha + beta) * M ** (nonlinearity.p - 1)
        slacks["delta <= delta_target"] = delta_target - delta
        tol = 1e-12
        if all(v >= -tol * max(1.0, M, M_prime) for v in slacks.values()):
            rho = operator.c_L * DOMAIN_MEASURE ** _inv(norm.s) * T ** _inv(norm.r) * R
            return SelectTResult(T, rho, delta, slacks)
        last = slacks
        T *= 0.5
    binding = min(last, key=last.get)
    raise AdmissibilityError(
        f"no admissible T down to 2^-{max_halvings}; binding constraint: {binding} (slack {last[binding]:.3e})"
    )


# ----------------------------------------------------------------------------
# Duhamel integrals


def duhamel_exact(f: np.ndarray, grid: SpaceTimeGrid) -> np.ndarray:
    """Per-mode trapezoid Duhamel integral ``int_0^t S(t-tau) f(tau) dtau``.

    Each sine mode ``k`` obeys ``I(t+dt) = e^{-l dt} I(t) + dt/2 (e^{-l dt} g(t) + g(t+dt))``.
    """
    g = sine_coefficients(np.asarray(f, float))
    lam = eigenvalues(grid.nx)
    decay = np.exp(-lam * grid.dt)
    half = 0.5 * grid.dt
    out = np.zeros_like(g)
    for i in range(1, grid.nt):
        out[i] = decay * out[i - 1] + half * (decay * g[i - 1] + g[i])
    return sine_synthesis(out)


def duhamel(mode: str, f: Field, expansion: KernelExpansion | None = None) -> Field:
    """Duhamel integral of a source field with the exact kernel or an expansion."""
    if mode == "exact":
        return Field(f.grid, duhamel_exact(f.values, f.grid))
    if mode == "expansion":
        if expansion is None:
            raise ValueError("expansion mode needs a kernel expansion")
        return Field(f.grid, expansion.bind(f.grid).apply(f.values))
    raise ValueError(f"unknown Duhamel mode {mode!r}")


def initial_term(variant: str, u0: np.ndarray, grid: SpaceTimeGrid, operator: OperatorSpec,
                 expansion: KernelExpansion | None = None) -> np.ndarray:
    if variant == "exact":
        return semigroup_orbit(operator, grid.t, u0)
    return expansion.bind(grid).apply_initial(u0)


def _nonlinear_map(variant: str, config: PicardConfig, fnet) -> Callable:
    if variant == "N_net":
        if fnet is None:
            raise ValueError("variant N_net needs a network surrogate")
        return fnet
    return config.nonlinearity


def phi_step(u: Field, u0, config: PicardConfig, variant: str = "exact",
             expansion: KernelExpansion | None = None, fnet=None) -> Field:
    """One application of ``Phi``, ``Phi_N`` or ``Phi_N,net``.

    Parameters
    ----------
    u : Field
        Current iterate on ``config.grid``.
    u0 : array
        Initial profile on the interior points.
    variant : {"exact", "N", "N_net"}
    expansion : KernelExpansion, optional
        Needed for the expansion variants; its horizon must equal ``config.T``.
    fnet : callable, optional
        Network surrogate for ``F`` (variant ``N_net``).
    """
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    if u.grid.shape != (config.nt, config.nx):
        raise ValueError("iterate does not live on the config grid")
    u0 = np.asarray(u0, float)
    if variant != "exact" and expansion is None:
        raise ValueError(f"variant {variant} needs a kernel expansion")
    source = pointwise_apply(u, _nonlinear_map(variant, config, fnet))
    base = initial_term(variant, u0, u.grid, config.operator, expansion)
    if variant == "exact":
        return Field(u.grid, base + duhamel_exact(source.values, u.grid))
    return Field(u.grid, base + expansion.bind(u.grid).apply(source.values))


@dataclass
class PicardDiagnostics:
    """Per-iteration record: ``d[l] = ||u^(l+1) - u^(l)||`` starting at l = 0."""

    distances: list[float] = field(default_factory=list)
    sup_norms: list[float] = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    escaped: bool = False
    escape_iteration: int | None = None
    iterates: list[np.ndarray] = field(default_factory=list, repr=False)

    @property
    def ratios(self) -> list[float]:
        d = self.distances
        return [d[i + 1] / d[i] if d[i] > 0 else math.nan for i in range(len(d) - 1)]

    def rows(self) -> list[dict]:
        rat = [math.nan] + self.ratios
        return [
            {"ell": i, "d_ell": d, "ratio": rat[i], "sup_norm": s}
            for i, (d, s) in enumerate(zip(self.distances, self.sup_norms))
        ]


def picard_solve(u0, config: PicardConfig, variant: str = "exact", l_max: int = 200,
                 tol: float | None = None, expansion: KernelExpansion | None = None,
                 fnet=None, keep_iterates: bool = False) -> tuple[Field, PicardDiagnostics]:
    """Iterate from ``u^(0) = 0`` until successive distances drop to ``tol``.

    Distances are mixed norms with the config's exponents. Leaving the
    sup-ball of radius ``M'`` is flagged in the diagnostics, not raised.
    """
    tol = 1e-12 * config.M if tol is None else tol
    grid = config.grid
    u = Field.zeros(grid)
    diag = PicardDiagnostics()
    if keep_iterates:
        diag.iterates.append(np.array(u.values))
    for ell in range(l_max):
        nxt = phi_step(u, u0, config, variant, expansion, fnet)
        d = mixed_norm(nxt - u, config.norm)
        diag.distances.append(d)
        diag.sup_norms.append(nxt.sup())
        diag.iterations = ell + 1
        if keep_iterates:
            diag.iterates.append(np.array(nxt.values))
        if nxt.sup() > config.M_prime and not diag.escaped:
            diag.escaped = True
            diag.escape_iteration = ell + 1
        u = nxt
        if d <= tol:
            diag.converged = True
            break
    return u, diag


# ----------------------------------------------------------------------------
# error budget


def depth_for(eps: float, delta: float) -> int:
    """``J = max(1, ceil(log(1/eps) / log(1/delta)))``."""
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    if delta <= 0:
        return 1
    ratio = math.log(1.0 / eps) / math.log(1.0 / delta)
    # ceil with a guard against ratios like 2.0000000000000004
    J = math.ceil(ratio - 1e-12 * max(1.0, ratio))
    return max(1, J)


@dataclass(frozen=True)
class ErrorBudget:
    eps: float
    J: int
    C1: float
    C2: float
    C3: float

    @property
    def bound(self) -> float:
        return self.C3 * self.eps


def error_budget(eps: float, config: PicardConfig) -> ErrorBudget:
    """Depth and constants of the approximation error bound ``C3 * eps``."""
    nm, op, nl = config.norm, config.operator, config.nonlinearity
    J = depth_for(eps, config.delta)
    dmeas = DOMAIN_MEASURE ** _inv(nm.s)
    C1 = dmeas * config.R + nl.c_F * config.M**nl.p
    C2 = 2.0 * op.c_L * dmeas * config.T ** (1.0 + _inv(nm.r))
    C3 = config.M + (C1 + C2) / (1.0 - config.delta)
    return ErrorBudget(eps, J, C1, C2, C3)
