"""Independent finite-difference reference solver and step-doubling error budgets."""
from __future__ import annotations

import numpy as np

from .grid_field import Field, NormSpec, SpaceTimeGrid, mixed_norm
from .picard_core import PicardConfig, picard_solve

__all__ = ["OracleInstability", "oracle_solve", "restrict", "richardson_budget", "picard_budget", "oracle_budget"]


class OracleInstability(RuntimeError):
    pass


def _laplacian(nx: int) -> np.ndarray:
    h = 1.0 / (nx + 1)
    A = -2.0 * np.eye(nx) + np.eye(nx, k=1) + np.eye(nx, k=-1)
    return A / h**2


def oracle_solve(u0, config: PicardConfig, dt_factor: float = 0.25, grid: SpaceTimeGrid | None = None) -> Field:
    """Crank-Nicolson diffusion with second-order Adams-Bashforth reaction.

    Centred second differences in space on the interior points, time step
    ``dt_factor`` times the grid step; the first step treats the reaction by
    forward Euler. Output is sampled at the grid times.
    """
    grid = grid or config.grid
    u0 = np.asarray(u0, float)
    if u0.shape != (grid.nx,):
        raise ValueError("initial profile does not match the grid")
    sub = int(round(1.0 / dt_factor))
    if sub < 1 or abs(sub * dt_factor - 1.0) > 1e-9:
        raise ValueError("dt_factor must be 1/n for a positive integer n")
    k = grid.dt / sub
    A = _laplacian(grid.nx)
    I = np.eye(grid.nx)
    lhs = I - 0.5 * k * A
    step = np.linalg.solve(lhs, I + 0.5 * k * A)
    src = np.linalg.solve(lhs, k * I)
    F = config.nonlinearity
    blowup = 1e6 * max(1.0, float(np.max(np.abs(u0))))
    out = np.empty(grid.shape)
    out[0] = u0
    u = u0.copy()
    f_prev = None
    for i in range(1, grid.nt):
        for _ in range(sub):
            f_now = np.asarray(F(u), float)
            react = f_now if f_prev is None else 1.5 * f_now - 0.5 * f_prev
            u = step @ u + src @ react
            f_prev = f_now
            if not np.all(np.isfinite(u)) or np.max(np.abs(u)) > blowup:
                raise OracleInstability(
                    f"finite-difference solution blew up near t={i * grid.dt:.4g}; try a smaller dt_factor"
                )
        out[i] = u
    return Field(grid, out)


def restrict(fine: Field, coarse: SpaceTimeGrid) -> np.ndarray:
    """Samples of a refined-grid field at the coarse grid nodes."""
    g = fine.grid
    if g.nt != 2 * coarse.nt - 1 or g.nx != 2 * coarse.nx + 1:
        raise ValueError("fine grid is not the step-halved refinement")
    return fine.values[::2, 1::2]


def richardson_budget(coarse: Field, fine: Field, norm: NormSpec, safety: float = 2.0) -> float:
    """Declared discretization error ``safety * ||u_h - u_{h/2}||`` on the coarse grid."""
    diff = Field(coarse.grid, coarse.values - restrict(fine, coarse.grid))
    return safety * mixed_norm(diff, norm)


def _refined_u0(u0_fn, grid: SpaceTimeGrid):
    return u0_fn(grid.refined().x)


def picard_budget(u0_fn, config: PicardConfig, l_max: int = 200, tol: float | None = None):
    """Exact-kernel Picard solution on the grid and its step-doubling budget.

    ``u0_fn`` maps spatial points to initial values so the refined run sees
    the same data. Returns ``(solution, budget)``.
    """
    grid = config.grid
    sol, _ = picard_solve(u0_fn(grid.x), config, "exact", l_max, tol)
    fine_cfg = PicardConfig(config.R, config.M, config.M_prime, config.T, config.delta, config.norm,
                            config.operator, config.nonlinearity, 2 * grid.nt - 1, 2 * grid.nx + 1,
                            config.certified)
    fine, _ = picard_solve(_refined_u0(u0_fn, grid), fine_cfg, "exact", l_max, tol)
    return sol, richardson_budget(sol, fine, config.norm)


def oracle_budget(u0_fn, config: PicardConfig, dt_factor: float = 0.25):
    """Finite-difference solution on the grid and its step-doubling budget."""
    grid = config.grid
    sol = oracle_solve(u0_fn(grid.x), config, dt_factor, grid)
    fine = oracle_solve(_refined_u0(u0_fn, grid), config, dt_factor, grid.refined())
    return sol, richardson_budget(sol, fine, config.norm)
