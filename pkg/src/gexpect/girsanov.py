"""Numerical checks of the Girsanov theorem for G-Brownian motion on scenario trees.

Both sides of every identity are computed on the same tree (same ``m`` and
control grid), so the discretization bias common to both cancels.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import InvalidArgumentError
from .phi_lang import Functional
from .scenario_tree import (PathFunctional, TreeSpec, lower_expectation, pathwise_max,
                            upper_expectation)
from .stochastic import (SimpleProcess, exp_martingale, exp_martingale_normalized,
                         j_epsilon, observe, perturbed_exp_martingale,
                         perturbed_exp_martingale_factorized,
                         perturbed_observation, shifted_observation,
                         shifted_perturbed_observation)
from .uncertainty import Generator, _check_dim, is_nondegenerate

__all__ = ["GirsanovReport", "tilted_expectation", "verify_identity", "novikov_bound",
           "JepsRow", "JepsSweep", "jeps_sweep", "PipelineRow", "PipelineReport",
           "degenerate_pipeline", "loglog_slope"]


@dataclass(frozen=True)
class GirsanovReport:
    lhs: float
    rhs: float
    m: int
    sigma_levels: int
    eps: float = 0.0
    engine: str = "tree"

    @property
    def abs_error(self) -> float:
        return abs(self.lhs - self.rhs)


def _times(times, spec=None):
    times = [float(t) for t in np.atleast_1d(times)]
    if not times or times[0] <= 0 or any(b <= a for a, b in zip(times, times[1:])):
        raise InvalidArgumentError("times must be positive and strictly increasing")
    if spec is not None:
        for t in times:
            spec.step_of(t)
    return times


def tilted_expectation(spec: TreeSpec, h: SimpleProcess, phi: Functional, times,
                       normalized: bool = False) -> float:
    """``E~[phi(B~_t1, ..., B~_tn)] = E^[phi(B~ ...) * E(h)_T]`` on the tree."""
    times = _times(times, spec)
    density = exp_martingale_normalized(h) if normalized else exp_martingale(h)
    F = observe(phi, [shifted_observation(h, t) for t in times]) * density
    return upper_expectation(spec, F)


def verify_identity(gen: Generator, h: SimpleProcess, phi: Functional, times,
                    m_list: Sequence[int], sigma_levels: int = 2,
                    t_final: float | None = None, normalized: bool = False,
                    bias: float = 0.0) -> list[GirsanovReport]:
    """Both sides of ``E^[phi(B)] = E~[phi(B~)]`` for each tree size in ``m_list``.

    ``bias`` is added to the right-hand side; it exists only so the harness
    can prove it reports failures.
    """
    _check_dim(gen)
    m_list = list(m_list)
    if not m_list or any(b <= a for a, b in zip(m_list, m_list[1:])):
        raise InvalidArgumentError("m_list must be non-empty and ascending")
    times = _times(times)
    T = times[-1] if t_final is None else float(t_final)
    out = []
    for m in m_list:
        spec = TreeSpec(m, T, gen.band, sigma_levels)
        lhs = upper_expectation(spec, PathFunctional.observe(phi, times))
        rhs = tilted_expectation(spec, h, phi, times, normalized) + bias
        out.append(GirsanovReport(lhs, rhs, m, sigma_levels))
    return out


def novikov_bound(gen: Generator, h: SimpleProcess, delta: float, m: int = 8,
                  t_final: float = 1.0, sigma_levels: int = 2) -> tuple[float, float]:
    """Tree value of ``E^[exp((1 + delta)/2 int h^2 d<B>)]`` and its closed-form cap.

    For deterministic bounded ``h`` the cap ``exp((1 + delta)/2 |h|^2 sigma_max^2 T)``
    is finite, which certifies the Novikov-type condition for this ``h``.
    """
    if not delta > 0:
        raise InvalidArgumentError("delta must be positive")
    _check_dim(gen)
    c = 0.5 * (1.0 + delta)
    cap = math.exp(c * h.sup_norm ** 2 * gen.band.sigma_max_sq * t_final)

    def fn(b):
        hv = h.on_grid(b.steps)
        return np.exp(c * b.int_dqv(hv * hv))

    F = PathFunctional(fn, cap, f"novikov(delta={delta})")
    value = upper_expectation(TreeSpec(m, t_final, gen.band, sigma_levels), F)
    return value, cap


def loglog_slope(eps, dev) -> float:
    """Least-squares slope of ``log dev`` against ``log eps`` over positive entries."""
    eps, dev = np.asarray(eps, float), np.asarray(dev, float)
    keep = (eps > 0) & (dev > 0)
    if keep.sum() < 2:
        return math.nan
    return float(np.polyfit(np.log(eps[keep]), np.log(dev[keep]), 1)[0])


@dataclass(frozen=True)
class JepsRow:
    eps: float
    upper: float  # E^[J_eps]
    lower: float  # -E^[-J_eps]


@dataclass
class JepsSweep:
    rows: list
    alpha: float
    beta: float
    m: int

    @property
    def upper_slope(self) -> float:
        return loglog_slope([r.eps for r in self.rows], [abs(r.upper - 1) for r in self.rows])

    @property
    def lower_slope(self) -> float:
        return loglog_slope([r.eps for r in self.rows], [abs(r.lower - 1) for r in self.rows])


def jeps_sweep(gen: Generator, h: SimpleProcess, alpha: float, beta: float,
               eps_list: Sequence[float], m: int = 12, t_final: float = 1.0,
               sigma_levels: int = 2) -> JepsSweep:
    _check_dim(gen)
    eps_list = [float(e) for e in eps_list]
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])) or min(eps_list) < 0:
        raise InvalidArgumentError("eps_list must be non-negative and strictly descending")
    spec = TreeSpec(m, t_final, gen.band, sigma_levels)
    rows = []
    for eps in eps_list:
        J = j_epsilon(alpha, beta, h, eps)
        rows.append(JepsRow(eps, upper_expectation(spec, J), lower_expectation(spec, J)))
    return JepsSweep(rows, alpha, beta, m)


@dataclass(frozen=True)
class PipelineRow:
    eps: float
    lhs: float          # E-bar[phi(B^eps)]
    rhs: float          # E~^eps[phi(B~^eps)]
    step1: float        # |lhs(eps) - lhs(0)|
    step2: float        # |rhs(eps) - rhs(0)|
    step1_bound: float  # L_phi * eps * E-bar[sum_i |W_ti|]

    @property
    def identity_error(self) -> float:
        return abs(self.lhs - self.rhs)


@dataclass
class PipelineReport:
    rows: list          # one per eps, in the given order
    base: GirsanovReport  # the unperturbed identity on the same tree
    lipschitz: float
    mean_abs_w: float
    m: int
    sigma_levels: int
    factorization_error: float = field(default=0.0)


def degenerate_pipeline(gen: Generator, h: SimpleProcess, phi: Functional, times,
                        eps_list: Sequence[float], m: int = 8, sigma_levels: int = 2,
                        t_final: float | None = None) -> PipelineReport:
    """The epsilon-perturbation route to the degenerate Girsanov identity.

    For each ``eps`` the perturbed identity is checked on a product tree
    carrying ``W``, together with the convergence of each side to its
    unperturbed counterpart. All values share one tree.
    """
    _check_dim(gen)
    if is_nondegenerate(gen)[0]:
        raise InvalidArgumentError("degenerate_pipeline expects a degenerate generator")
    times = _times(times)
    T = times[-1] if t_final is None else float(t_final)
    spec = TreeSpec(m, T, gen.band, sigma_levels, product_space=True)
    for t in times:
        spec.step_of(t)
    spec.check_budget()

    lhs0 = upper_expectation(spec, PathFunctional.observe(phi, times))
    rhs0 = upper_expectation(
        spec, observe(phi, [shifted_observation(h, t) for t in times]) * exp_martingale(h))

    def abs_w(b):
        return sum(np.abs(b.W_at(t)) for t in times)

    mean_abs_w = upper_expectation(spec, PathFunctional(abs_w, math.inf, "sum|W|"))
    radius = spec.m * math.sqrt(spec.dt) * (math.sqrt(gen.band.sigma_max_sq)
                                            + max(eps_list, default=0.0)) + 1.0
    lip = phi.lipschitz_bound(radius)

    rows = []
    fact_err = 0.0
    for eps in eps_list:
        eps = float(eps)
        gap = (perturbed_exp_martingale(h, eps)
               - perturbed_exp_martingale_factorized(h, eps)).map(np.abs, math.inf)
        fact_err = max(fact_err, pathwise_max(spec, gap))
        lhs = upper_expectation(
            spec, observe(phi, [perturbed_observation(eps, t) for t in times]))
        rhs = upper_expectation(
            spec,
            observe(phi, [shifted_perturbed_observation(h, eps, t) for t in times])
            * perturbed_exp_martingale(h, eps))
        rows.append(PipelineRow(eps, lhs, rhs, abs(lhs - lhs0), abs(rhs - rhs0),
                                lip * eps * mean_abs_w))
    base = GirsanovReport(lhs0, rhs0, m, sigma_levels, 0.0, "tree")
    return PipelineReport(rows, base, lip, mean_abs_w, m, sigma_levels, fact_err)
