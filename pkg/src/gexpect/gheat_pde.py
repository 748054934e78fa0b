"""Explicit monotone finite differences for the 1-d G-heat equation.

Solves ``u_t = G(u_xx)``, ``u(0, .) = phi`` on a truncated interval with the
scheme ``u <- u + dt * G(D2 u)``. Under ``dt <= dx**2 / sigma_max_sq`` each
update is a non-decreasing function of the three stencil values, which gives
the discrete comparison principle and the maximum principle.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, InvalidArgumentError
from .phi_lang import Functional
from .uncertainty import Generator, _check_dim, g_eval

__all__ = ["PdeGrid", "SolutionField", "ACCURACY_TIERS", "make_grid", "solve",
           "solve_layers", "expect_single", "expect_cylinder"]

# tier -> (nx, prefix-grid points per coordinate, nx of the per-prefix solves)
ACCURACY_TIERS = {
    "coarse": (201, 41, 101),
    "medium": (401, 81, 151),
    "fine": (801, 161, 201),
}
CFL_SAFETY = 0.9
TRUNCATION_SIGMAS = 6.0


@dataclass(frozen=True)
class PdeGrid:
    x_half_width: float
    nx: int
    t_final: float
    dt: float

    def __post_init__(self):
        if not self.x_half_width > 0:
            raise InvalidArgumentError("x_half_width must be positive")
        if self.nx < 3 or self.nx % 2 == 0:
            raise InvalidArgumentError("nx must be odd and >= 3 so that x = 0 is a node")
        if not self.t_final > 0 or not self.dt > 0:
            raise InvalidArgumentError("t_final and dt must be positive")

    @property
    def dx(self) -> float:
        return 2.0 * self.x_half_width / (self.nx - 1)

    @property
    def x(self) -> np.ndarray:
        return np.linspace(-self.x_half_width, self.x_half_width, self.nx)

    @property
    def n_steps(self) -> int:
        return max(1, math.ceil(self.t_final / self.dt - 1e-9))

    def max_dt(self, sigma_max_sq: float) -> float:
        return math.inf if sigma_max_sq == 0 else self.dx ** 2 / sigma_max_sq


@dataclass(frozen=True)
class SolutionField:
    values: np.ndarray
    time: float
    grid: PdeGrid

    def at(self, x) -> float:
        return float(np.interp(x, self.grid.x, self.values))

    @property
    def center(self) -> float:
        return float(self.values[self.grid.nx // 2])


def make_grid(gen: Generator, t: float, nx: int) -> PdeGrid:
    """Grid with the standard truncation and ``dt = 0.9 * CFL`` rounded to divide ``t``."""
    hi = gen.band.sigma_max_sq
    half = max(TRUNCATION_SIGMAS * math.sqrt(hi * t), 1.0)
    dx = 2.0 * half / (nx - 1)
    if hi == 0:
        return PdeGrid(half, nx, t, t)
    n = math.ceil(t / (CFL_SAFETY * dx * dx / hi))
    return PdeGrid(half, nx, t, t / n)


def _check_cfl(gen, grid):
    limit = grid.max_dt(gen.band.sigma_max_sq)
    dt = grid.t_final / grid.n_steps
    if dt > limit * (1 + 1e-12):
        raise ConfigurationError(
            f"CFL violated: dt={dt:.6g} exceeds dx^2/sigma_max^2={limit:.6g}; "
            f"use dt <= {limit:.6g}")


def solve_layers(gen: Generator, u0: np.ndarray, grid: PdeGrid) -> np.ndarray:
    """Advance initial layer(s) ``u0`` (shape ``(..., nx)``) to ``grid.t_final``."""
    _check_dim(gen)
    _check_cfl(gen, grid)
    u = np.array(u0, dtype=float, copy=True)
    if u.shape[-1] != grid.nx:
        raise InvalidArgumentError(f"initial layer must have {grid.nx} nodes")
    n = grid.n_steps
    dt = grid.t_final / n
    lam = dt / grid.dx ** 2
    d2 = np.zeros_like(u)
    for _ in range(n):
        # boundary nodes keep d2 = 0 (zero-curvature extrapolation)
        np.subtract(u[..., 2:] + u[..., :-2], 2.0 * u[..., 1:-1], out=d2[..., 1:-1])
        # dt * G(d2 / dx^2) == lam * G(d2) by positive homogeneity
        u += lam * g_eval(gen, d2)
    return u


def solve(gen: Generator, phi: Functional, grid: PdeGrid) -> SolutionField:
    if phi.arity != 1:
        raise InvalidArgumentError("solve needs a functional of arity 1")
    x = grid.x
    u = solve_layers(gen, np.broadcast_to(phi(x), x.shape), grid)
    return SolutionField(u, grid.t_final, grid)


def _tier(accuracy):
    try:
        return ACCURACY_TIERS[accuracy]
    except KeyError:
        raise InvalidArgumentError(
            f"accuracy must be one of {', '.join(ACCURACY_TIERS)}") from None


def expect_single(gen: Generator, phi: Functional, t: float,
                  accuracy: str = "medium") -> float:
    """Upper expectation of ``phi(B_t)`` as ``u(t, 0)``."""
    if not t > 0:
        raise InvalidArgumentError("t must be positive")
    nx = _tier(accuracy)[0]
    return solve(gen, phi, make_grid(gen, t, nx)).center


def expect_cylinder(gen: Generator, phi: Functional, times, accuracy: str = "medium") -> float:
    """Upper expectation of ``phi(B_t1, ..., B_tn)`` for ``n <= 3``.

    Works backwards over the observation times: the last coordinate is
    rewritten as ``x_{n-1} + (B_tn - B_t{n-1})``, the increment is integrated
    out by one batched PDE solve per frozen prefix on a tensor grid, and the
    result is linearly interpolated in the prefix coordinates.
    """
    times = [float(t) for t in np.atleast_1d(times)]
    n = len(times)
    if n != phi.arity:
        raise InvalidArgumentError(f"need {phi.arity} times, got {n}")
    if n > 3:
        raise InvalidArgumentError("at most 3 observation times; use the scenario tree")
    if times[0] <= 0 or any(b <= a for a, b in zip(times, times[1:])):
        raise InvalidArgumentError("times must be positive and strictly increasing")
    if n == 1:
        return expect_single(gen, phi, times[0], accuracy)
    _check_dim(gen)
    nx, n_prefix, inner_nx = _tier(accuracy)
    hi = gen.band.sigma_max_sq
    # coordinate i lives on +-6 sd of B_ti
    axes = [np.linspace(-r, r, n_prefix)
            for r in (max(TRUNCATION_SIGMAS * math.sqrt(hi * t), 1.0) for t in times[:-1])]

    # table of phi_j on the tensor grid of the first n - j coordinates
    table = None
    for j in range(n - 1, 0, -1):
        grid = make_grid(gen, times[j] - times[j - 1], inner_nx)
        y = grid.x
        pre = [p.reshape(-1) for p in np.meshgrid(*axes[:j], indexing="ij")]
        last = pre[-1][:, None] + y[None, :]
        if table is None:
            u0 = np.broadcast_to(phi(*[p[:, None] for p in pre], last), last.shape)
        else:
            u0 = _interp_last(table, axes[j], last)
        u = solve_layers(gen, u0, grid)
        table = u[:, inner_nx // 2].reshape((n_prefix,) * j)
    grid = make_grid(gen, times[0], nx)
    u0 = np.interp(grid.x, axes[0], table)
    return float(solve_layers(gen, u0, grid)[nx // 2])


def _interp_last(table, axis, last):
    """Linear interpolation of ``table`` along its final axis.

    Row ``i`` of ``last`` holds query points for the ``i``-th prefix node
    (C order over the leading axes of ``table``).
    """
    rows = table.reshape(-1, table.shape[-1])
    out = np.empty_like(last)
    for i in range(last.shape[0]):
        out[i] = np.interp(last[i], axis, rows[i])
    return out
