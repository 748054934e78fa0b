"""Girsanov building blocks as tree path functionals.

Integrands are deterministic and piecewise constant, so every stochastic
integral reduces to a left-endpoint sum over tree steps.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigurationError, InvalidArgumentError
from .scenario_tree import PathBatch, PathFunctional

__all__ = ["SimpleProcess", "Observation", "observe", "exp_martingale",
           "exp_martingale_normalized", "shifted_observation", "j_epsilon",
           "perturbed_observation", "perturbed_qv", "perturbed_exp_martingale",
           "perturbed_exp_martingale_factorized", "shifted_perturbed_observation",
           "qv_functional"]

Observation = Callable[[PathBatch], np.ndarray]


@dataclass(frozen=True)
class SimpleProcess:
    """Deterministic step function on ``[0, T]``.

    ``values[i]`` holds on the ``i``-th of ``len(values)`` equal subintervals;
    on an ``m``-step tree, step ``k`` uses the value in force at ``k * T / m``.
    """

    values: tuple

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        if not vals or not all(math.isfinite(v) for v in vals):
            raise InvalidArgumentError("h needs at least one finite value")
        object.__setattr__(self, "values", vals)

    @classmethod
    def constant(cls, v: float) -> "SimpleProcess":
        return cls((v,))

    @classmethod
    def parse(cls, text: str) -> "SimpleProcess":
        """``const:<v>`` or ``steps:v0,v1,...``."""
        kind, _, body = text.partition(":")
        try:
            if kind == "const":
                return cls.constant(float(body))
            if kind == "steps":
                return cls(tuple(float(v) for v in body.split(",")))
        except ValueError:
            pass
        raise InvalidArgumentError(f"bad h spec {text!r}; use const:<v> or steps:v0,v1,...")

    @property
    def sup_norm(self) -> float:
        return max(abs(v) for v in self.values)

    @property
    def is_zero(self) -> bool:
        return self.sup_norm == 0.0

    def on_grid(self, m: int) -> np.ndarray:
        n = len(self.values)
        return np.asarray(self.values)[(np.arange(m) * n) // m]

    def scaled(self, c: float) -> "SimpleProcess":
        return SimpleProcess(tuple(c * v for v in self.values))

    def describe(self) -> str:
        if len(self.values) == 1:
            return f"const:{self.values[0]!r}"
        return "steps:" + ",".join(repr(v) for v in self.values)


def observe(phi, observations: Sequence[Observation], name: str = "") -> PathFunctional:
    """``phi`` applied to a list of per-path observations."""
    if len(observations) != phi.arity:
        raise InvalidArgumentError(
            f"phi has arity {phi.arity}, got {len(observations)} observations")
    return PathFunctional(lambda b: phi(*[o(b) for o in observations]), phi.bound,
                          name or phi.source)


def exp_martingale(h: SimpleProcess) -> PathFunctional:
    """``exp(int h dB - 1/2 int h^2 d<B>)`` at the terminal step."""
    def fn(b):
        hv = h.on_grid(b.steps)
        return np.exp(b.int_dB(hv) - 0.5 * b.int_dqv(hv * hv))

    return PathFunctional(fn, math.inf, f"E({h.describe()})")


def exp_martingale_normalized(h: SimpleProcess) -> PathFunctional:
    """Product over steps of ``exp(h dB) / cosh(h sigma sqrt(dt))``.

    Each factor has conditional mean one whatever the control, so the
    upper and lower expectations are exactly one at every tree size.
    """
    def fn(b):
        hv = h.on_grid(b.steps)
        r = math.sqrt(b.dt)
        log_norm = b.step_sum(lambda s, x, z, j: np.log(np.cosh(hv[j] * np.sqrt(s) * r)))
        return np.exp(b.int_dB(hv) - log_norm)

    return PathFunctional(fn, math.inf, f"Enorm({h.describe()})")


def shifted_observation(h: SimpleProcess, t: float) -> Observation:
    """``B_t - int_0^t h d<B>``."""
    def obs(b):
        k = b.step_of(t)
        hv = h.on_grid(b.steps)
        return b.B(k) - b.int_dqv(hv, k)

    return obs


def j_epsilon(alpha: float, beta: float, h: SimpleProcess, eps: float) -> PathFunctional:
    """``exp(alpha eps int h dB - beta eps^2 / 2 int h^2 d<B>)``."""
    if not eps >= 0:
        raise InvalidArgumentError("eps must be >= 0")

    def fn(b):
        hv = h.on_grid(b.steps)
        return np.exp(alpha * eps * b.int_dB(hv) - 0.5 * beta * eps * eps * b.int_dqv(hv * hv))

    return PathFunctional(fn, math.inf, f"J(a={alpha},b={beta},eps={eps})")


def qv_functional(g: Callable[[np.ndarray], np.ndarray], bound: float,
                  name: str = "g(<B>_T)") -> PathFunctional:
    return PathFunctional(lambda b: g(b.qv()), bound, name)


# -- product space: B^eps = B + eps W ----------------------------------------


def _require_product(b: PathBatch):
    if not b.product_space:
        raise ConfigurationError("B^eps needs a product-space tree (independent W driver)")


def perturbed_observation(eps: float, t: float) -> Observation:
    def obs(b):
        _require_product(b)
        k = b.step_of(t)
        return b.B(k) + eps * b.W(k)

    return obs


def _perturbed_dqv(eps, dt):
    """Per-step conditional variance of ``dB + eps dW``, averaged over the four children."""
    r = math.sqrt(dt)

    def per_step(s, x, z, j):
        sig = np.sqrt(s) * r
        total = 0.0
        for xi in (1.0, -1.0):
            for zeta in (1.0, -1.0):
                total = total + (sig * xi + eps * zeta * r) ** 2
        return 0.25 * total

    return per_step


def perturbed_qv(eps: float, k: int | None = None) -> Observation:
    """``<B^eps>`` after ``k`` steps, accumulated from the one-step conditional variances."""
    def obs(b):
        _require_product(b)
        return b.step_sum(_perturbed_dqv(eps, b.dt), 0, k)

    return obs


def perturbed_exp_martingale(h: SimpleProcess, eps: float) -> PathFunctional:
    """``N^eps_T = exp(int h dB^eps - 1/2 int h^2 d<B^eps>)`` built from B^eps directly."""
    def fn(b):
        _require_product(b)
        hv = h.on_grid(b.steps)
        r = math.sqrt(b.dt)
        stoch = b.step_sum(lambda s, x, z, j: hv[j] * (np.sqrt(s) * x + eps * z) * r)
        per = _perturbed_dqv(eps, b.dt)
        comp = b.step_sum(lambda s, x, z, j: hv[j] ** 2 * per(s, x, z, j))
        return np.exp(stoch - 0.5 * comp)

    return PathFunctional(fn, math.inf, f"N(eps={eps})")


def perturbed_exp_martingale_factorized(h: SimpleProcess, eps: float) -> PathFunctional:
    """``E(h)_T * exp(eps int h dW - eps^2 / 2 int h^2 dt)``."""
    base = exp_martingale(h)

    def fn(b):
        _require_product(b)
        hv = h.on_grid(b.steps)
        extra = eps * b.int_dW(hv) - 0.5 * eps * eps * float(np.sum(hv * hv)) * b.dt
        return base(b) * np.exp(extra)

    return PathFunctional(fn, math.inf, f"Nfac(eps={eps})")


def shifted_perturbed_observation(h: SimpleProcess, eps: float, t: float) -> Observation:
    """``B^eps_t - int_0^t h d<B^eps>``."""
    def obs(b):
        _require_product(b)
        k = b.step_of(t)
        hv = h.on_grid(b.steps)
        per = _perturbed_dqv(eps, b.dt)
        drift = b.step_sum(lambda s, x, z, j: hv[j] * per(s, x, z, j), 0, k)
        return b.B(k) + eps * b.W(k) - drift

    return obs
