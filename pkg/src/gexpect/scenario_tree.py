"""Backward induction over adapted volatility controls on a finite noise tree.

At every node the controller picks a variance from a finite grid on the
band *before* the sign of the step's noise is revealed; the increment is then
``sigma * xi * sqrt(dt)`` with ``xi = +-1`` equally likely (and, on product
trees, an independent ``dW = +-sqrt(dt)``). The upper expectation is the
max over controls of the average over noise, folded from the leaves to the
root. This is the discrete counterpart of ``sup_P E_P[xi]``.

Leaves are indexed in mixed radix with step 0 most significant; within a
step the digit is ``control * n_noise + noise``. Leaves are evaluated in
vectorized chunks and folded into a table at a fixed layer, so live memory
is bounded by one chunk plus a table of at most ``LAYER_TABLE_MAX`` nodes.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigurationError, InvalidArgumentError
from .uncertainty import VolatilityBand

__all__ = ["TreeSpec", "PathBatch", "PathState", "PathFunctional", "ConditionalTable",
           "upper_expectation", "lower_expectation", "conditional_value",
           "enumerate_oracle", "pathwise_max", "leaf_table", "fold_leaves",
           "DEFAULT_LEAF_BUDGET"]

DEFAULT_LEAF_BUDGET = 2 ** 26
CHUNK_LEAVES = 2 ** 17
LAYER_TABLE_MAX = 2 ** 20
ORACLE_MAX_STEPS = 8
ORACLE_MAX_LEVELS = 3
ORACLE_MAX_LEAVES = 2 ** 22
ORACLE_MAX_STRATEGIES = 2 ** 16


@dataclass(frozen=True)
class TreeSpec:
    m: int
    t_final: float
    band: VolatilityBand
    sigma_levels: int = 5
    product_space: bool = False
    leaf_budget: int = DEFAULT_LEAF_BUDGET

    def __post_init__(self):
        if int(self.m) != self.m or self.m < 1:
            raise InvalidArgumentError("m must be an integer >= 1")
        if not self.t_final > 0:
            raise InvalidArgumentError("t_final must be positive")
        if self.sigma_levels < 2:
            raise InvalidArgumentError("sigma_levels must be >= 2")

    @property
    def dt(self) -> float:
        return self.t_final / self.m

    @cached_property
    def levels(self) -> np.ndarray:
        """Control variances; a singleton band collapses to a single level."""
        return np.unique(self.band.levels(self.sigma_levels))

    @property
    def n_noise(self) -> int:
        return 4 if self.product_space else 2

    @property
    def branching(self) -> int:
        return len(self.levels) * self.n_noise

    @property
    def leaf_count(self) -> int:
        return self.branching ** self.m

    def check_budget(self):
        if self.leaf_count > self.leaf_budget:
            max_m = int(math.log(self.leaf_budget) / math.log(self.branching))
            raise ConfigurationError(
                f"tree with m={self.m} and branching {self.branching} has "
                f"{self.leaf_count} leaves, over the budget of {self.leaf_budget}; "
                f"use m <= {max_m} or fewer sigma levels")

    def step_of(self, t: float) -> int:
        k = t / self.dt
        kr = round(k)
        if abs(k - kr) > 1e-9 * max(1.0, k) or not 0 <= kr <= self.m:
            raise InvalidArgumentError(
                f"observation time {t} is not on the step grid (dt = {self.dt})")
        return int(kr)


@dataclass
class PathState:
    """Accumulators of a batch of paths at step ``step`` (Ito, left endpoints)."""

    step: int
    B: np.ndarray
    W: np.ndarray | None
    qv: np.ndarray
    int_h_dB: np.ndarray
    int_h2_dqv: np.ndarray
    int_h_dW: np.ndarray | None
    int_h2_dt: float


class _Factor:
    """Step histories ``(n, w)`` for steps ``first .. first + w - 1``."""

    def __init__(self, sigma2, xi, zeta, first):
        self.sigma2, self.xi, self.zeta, self.first = sigma2, xi, zeta, first

    @property
    def n(self):
        return self.sigma2.shape[0]

    @property
    def w(self):
        return self.sigma2.shape[1]

    @classmethod
    def empty(cls, first, product):
        z = np.zeros((1, 0))
        return cls(z, z, z if product else None, first)


class PathBatch:
    """Complete step histories for a batch of tree paths.

    The batch is the outer product of a ``head`` factor (the first steps,
    one row per prefix node) and a ``tail`` factor (the remaining steps, one
    row per suffix); path ``i * tail.n + j`` follows head row ``i`` then tail
    row ``j``. Sums over steps are formed on each factor and combined once,
    so cost scales with the batch size rather than batch size times steps.
    """

    def __init__(self, head: _Factor, tail: _Factor | None, dt: float, t_final: float):
        self.head = head
        self.tail = tail if tail is not None else _Factor.empty(
            head.first + head.w, head.zeta is not None)
        self.dt = dt
        self.t_final = t_final

    @classmethod
    def from_histories(cls, sigma2, xi, zeta, dt, t_final):
        sigma2 = np.atleast_2d(np.asarray(sigma2, dtype=float))
        xi = np.atleast_2d(np.asarray(xi, dtype=float))
        if zeta is not None:
            zeta = np.atleast_2d(np.asarray(zeta, dtype=float))
        return cls(_Factor(sigma2, xi, zeta, 0), None, dt, t_final)

    @property
    def size(self) -> int:
        return self.head.n * self.tail.n

    @property
    def steps(self) -> int:
        return self.head.w + self.tail.w

    @property
    def product_space(self) -> bool:
        return self.head.zeta is not None

    def step_sum(self, per_step, lo: int = 0, hi: int | None = None) -> np.ndarray:
        """Sum over steps ``lo <= j < hi`` of ``per_step(sigma2, xi, zeta, j)``.

        ``per_step`` receives ``(n, w)`` history blocks and the ``(w,)`` global
        step indices and returns an ``(n, w)`` array.
        """
        hi = self.steps if hi is None else hi
        parts = []
        for f in (self.head, self.tail):
            a, b = max(lo, f.first), min(hi, f.first + f.w)
            if b <= a:
                parts.append(np.zeros(f.n))
                continue
            sl = slice(a - f.first, b - f.first)
            z = f.zeta[:, sl] if f.zeta is not None else None
            vals = per_step(f.sigma2[:, sl], f.xi[:, sl], z, np.arange(a, b))
            parts.append(np.asarray(vals, dtype=float).sum(axis=1))
        return (parts[0][:, None] + parts[1][None, :]).ravel()

    def histories(self):
        """Materialized ``(sigma2, xi, zeta)`` arrays of shape ``(size, steps)``."""
        out = []
        for name in ("sigma2", "xi", "zeta"):
            a, b = getattr(self.head, name), getattr(self.tail, name)
            if a is None:
                out.append(None)
                continue
            a = np.repeat(a, self.tail.n, axis=0)
            b = np.tile(b, (self.head.n, 1))
            out.append(np.hstack([a, b]))
        return tuple(out)

    def step_of(self, t: float) -> int:
        k = t / self.dt
        kr = round(k)
        if abs(k - kr) > 1e-9 * max(1.0, k) or not 0 <= kr <= self.steps:
            raise InvalidArgumentError(
                f"observation time {t} is not on the step grid (dt = {self.dt})")
        return int(kr)

    def _require_w(self):
        if not self.product_space:
            raise ConfigurationError("W is only carried on product-space trees")

    def B(self, k=None):
        r = math.sqrt(self.dt)
        return self.step_sum(lambda s, x, z, j: np.sqrt(s) * x * r, 0, k)

    def W(self, k=None):
        self._require_w()
        r = math.sqrt(self.dt)
        return self.step_sum(lambda s, x, z, j: z * r, 0, k)

    def qv(self, k=None):
        dt = self.dt
        return self.step_sum(lambda s, x, z, j: s * dt, 0, k)

    def B_at(self, t):
        return self.B(self.step_of(t))

    def W_at(self, t):
        return self.W(self.step_of(t))

    def int_dB(self, h, k=None):
        """Ito sum of a per-step deterministic integrand against B."""
        h, r = np.asarray(h, dtype=float), math.sqrt(self.dt)
        return self.step_sum(lambda s, x, z, j: h[j] * np.sqrt(s) * x * r, 0, k)

    def int_dqv(self, g, k=None):
        """Sum of a per-step deterministic integrand against the quadratic variation."""
        g, dt = np.asarray(g, dtype=float), self.dt
        return self.step_sum(lambda s, x, z, j: g[j] * s * dt, 0, k)

    def int_dW(self, h, k=None):
        self._require_w()
        h, r = np.asarray(h, dtype=float), math.sqrt(self.dt)
        return self.step_sum(lambda s, x, z, j: h[j] * z * r, 0, k)

    def state(self, h=None, k=None) -> PathState:
        """Accumulators at step ``k`` for a deterministic integrand ``h`` (per-step array)."""
        k = self.steps if k is None else k
        hv = np.zeros(self.steps) if h is None else np.asarray(h, dtype=float)
        product = self.product_space
        return PathState(
            step=k,
            B=self.B(k),
            W=self.W(k) if product else None,
            qv=self.qv(k),
            int_h_dB=self.int_dB(hv, k),
            int_h2_dqv=self.int_dqv(hv * hv, k),
            int_h_dW=self.int_dW(hv, k) if product else None,
            int_h2_dt=float(np.sum(hv[:k] ** 2) * self.dt),
        )


class PathFunctional:
    """Vectorized map from a :class:`PathBatch` of complete paths to values.

    ``bound`` is a declared sup-norm bound; the engines refuse functionals
    that exceed it.
    """

    def __init__(self, fn: Callable[[PathBatch], np.ndarray], bound: float, name: str = ""):
        self.fn = fn
        self.bound = float(bound)
        self.name = name

    def __call__(self, batch: PathBatch) -> np.ndarray:
        out = np.asarray(self.fn(batch), dtype=float)
        if out.shape != (batch.size,):
            out = np.broadcast_to(out, (batch.size,)).copy()
        return out

    def __repr__(self):
        return f"PathFunctional({self.name or '<anonymous>'}, bound={self.bound:g})"

    @classmethod
    def constant(cls, c: float) -> "PathFunctional":
        return cls(lambda b: np.full(b.size, float(c)), abs(c), f"const({c})")

    @classmethod
    def observe(cls, phi, times: Sequence[float], process: str = "B") -> "PathFunctional":
        """``phi`` applied to the process (``B`` or ``W``) at the observation times."""
        times = [float(t) for t in np.atleast_1d(times)]
        if len(times) != phi.arity:
            raise InvalidArgumentError(f"phi has arity {phi.arity}, got {len(times)} times")

        def fn(b):
            get = b.B_at if process == "B" else b.W_at
            return phi(*[get(t) for t in times])

        return cls(fn, phi.bound, f"{phi.source}@{process}{tuple(times)}")

    def __neg__(self):
        return PathFunctional(lambda b: -self(b), self.bound, f"-({self.name})")

    def __add__(self, other):
        if isinstance(other, PathFunctional):
            return PathFunctional(lambda b: self(b) + other(b), self.bound + other.bound,
                                  f"({self.name}+{other.name})")
        return PathFunctional(lambda b: self(b) + other, self.bound + abs(other),
                              f"({self.name}+{other})")

    __radd__ = __add__

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, other):
        if isinstance(other, PathFunctional):
            return PathFunctional(lambda b: self(b) * other(b), self.bound * other.bound,
                                  f"({self.name}*{other.name})")
        return PathFunctional(lambda b: self(b) * other, self.bound * abs(other),
                              f"{other}*{self.name}")

    __rmul__ = __mul__

    def map(self, g: Callable[[np.ndarray], np.ndarray], bound: float, name: str = ""):
        """Pointwise post-composition ``g(F)``."""
        return PathFunctional(lambda b: g(self(b)), bound, name or f"g({self.name})")


# ---------------------------------------------------------------------------
# engine


def _factor(spec: TreeSpec, idx: np.ndarray, width: int, first: int) -> _Factor:
    """Histories of ``width`` steps starting at ``first`` for mixed-radix indices."""
    br, nn = spec.branching, spec.n_noise
    digits = np.empty((idx.size, width), dtype=np.int64)
    rest = idx.copy()
    for j in range(width - 1, -1, -1):
        rest, digits[:, j] = np.divmod(rest, br)
    ctrl, noise = np.divmod(digits, nn)
    sigma2 = spec.levels[ctrl]
    xi = 1.0 - 2.0 * (noise & 1)
    zeta = 1.0 - 2.0 * (noise >> 1) if spec.product_space else None
    return _Factor(sigma2, xi, zeta, first)


def _decode(spec: TreeSpec, node_idx: np.ndarray, depth: int) -> PathBatch:
    """Histories of the first ``depth`` steps for node indices at layer ``depth``."""
    return PathBatch(_factor(spec, node_idx, depth, 0), None, spec.dt, spec.t_final)


def _fold(values: np.ndarray, spec: TreeSpec, levels: int, pick) -> np.ndarray:
    """Reduce ``levels`` tree layers: noise average, then control extremum."""
    L, nn = len(spec.levels), spec.n_noise
    v = values
    for _ in range(levels):
        v = v.reshape(-1, L, nn)
        if nn == 2:
            v = 0.5 * (v[..., 0] + v[..., 1])
        else:
            v = 0.25 * ((v[..., 0] + v[..., 1]) + (v[..., 2] + v[..., 3]))
        v = pick(v, axis=1)
    return v


def _leaf_values(spec, F, batch):
    vals = F(batch)
    if not np.all(np.isfinite(vals)):
        raise ConfigurationError(f"functional {F!r} produced non-finite values")
    if np.max(np.abs(vals)) > F.bound * (1 + 1e-9) + 1e-12:
        raise ConfigurationError(
            f"functional {F!r} exceeds its declared bound ({np.max(np.abs(vals)):.6g})")
    return vals


def _eval_depth(spec: TreeSpec) -> int:
    """Layer at which leaf values are folded into a table.

    The deepest layer whose table stays within ``LAYER_TABLE_MAX`` nodes; the
    short suffix below it is shared by every chunk, the prefix varies.
    """
    k = spec.m
    while k > 0 and spec.branching ** k > LAYER_TABLE_MAX:
        k -= 1
    return k


def _chunks(spec: TreeSpec, depth: int):
    """Yield ``(start, stop, batch)``: the leaves below layer-``depth`` nodes ``start..stop-1``."""
    sub = spec.branching ** (spec.m - depth)
    n_nodes = spec.branching ** depth
    per_chunk = max(1, CHUNK_LEAVES // sub)
    tail = _factor(spec, np.arange(sub, dtype=np.int64), spec.m - depth, depth)
    for start in range(0, n_nodes, per_chunk):
        stop = min(n_nodes, start + per_chunk)
        head = _factor(spec, np.arange(start, stop, dtype=np.int64), depth, 0)
        yield start, stop, PathBatch(head, tail, spec.dt, spec.t_final)


def _layer_values(spec: TreeSpec, F: PathFunctional, k: int, pick) -> np.ndarray:
    depth = max(k, _eval_depth(spec))
    table = np.empty(spec.branching ** depth)
    for start, stop, batch in _chunks(spec, depth):
        table[start:stop] = _fold(_leaf_values(spec, F, batch), spec, spec.m - depth, pick)
    return _fold(table, spec, depth - k, pick)


def _pick(mode):
    if mode == "upper":
        return np.max
    if mode == "lower":
        return np.min
    raise InvalidArgumentError("mode must be 'upper' or 'lower'")


def upper_expectation(spec: TreeSpec, F: PathFunctional) -> float:
    spec.check_budget()
    return float(_layer_values(spec, F, 0, np.max)[0])


def lower_expectation(spec: TreeSpec, F: PathFunctional) -> float:
    spec.check_budget()
    return float(_layer_values(spec, F, 0, np.min)[0])


def pathwise_max(spec: TreeSpec, F: PathFunctional) -> float:
    """Largest value of ``F`` over all leaves (every control and noise history)."""
    spec.check_budget()
    return max(float(np.max(F(batch))) for _, _, batch in _chunks(spec, _eval_depth(spec)))


LEAF_TABLE_MAX = 2 ** 22


def leaf_table(spec: TreeSpec, F: PathFunctional) -> np.ndarray:
    """Values of ``F`` on every leaf in canonical order (small trees only)."""
    spec.check_budget()
    if spec.leaf_count > LEAF_TABLE_MAX:
        raise ConfigurationError(
            f"leaf table of {spec.leaf_count} entries exceeds {LEAF_TABLE_MAX}")
    return np.concatenate([_leaf_values(spec, F, batch)
                           for _, _, batch in _chunks(spec, _eval_depth(spec))])


def fold_leaves(spec: TreeSpec, values: np.ndarray, mode: str = "upper") -> float:
    """Backward induction on a precomputed leaf table."""
    values = np.asarray(values, dtype=float)
    if values.shape != (spec.leaf_count,):
        raise InvalidArgumentError(f"expected {spec.leaf_count} leaf values")
    return float(_fold(values, spec, spec.m, _pick(mode))[0])


@dataclass
class ConditionalTable:
    """Value function on the nodes of layer ``step`` (canonical node order)."""

    spec: TreeSpec
    step: int
    values: np.ndarray
    mode: str = "upper"

    def histories(self) -> PathBatch:
        return _decode(self.spec, np.arange(self.values.size, dtype=np.int64), self.step)

    def root(self) -> float:
        """Fold the stored layer back to the root (tower property)."""
        return float(_fold(self.values, self.spec, self.step, _pick(self.mode))[0])


def conditional_value(spec: TreeSpec, F: PathFunctional, at_step: int,
                      mode: str = "upper") -> ConditionalTable:
    if not 0 <= at_step <= spec.m:
        raise InvalidArgumentError(f"step {at_step} outside 0..{spec.m}")
    spec.check_budget()
    values = _layer_values(spec, F, at_step, _pick(mode))
    return ConditionalTable(spec, at_step, values, mode)


# ---------------------------------------------------------------------------
# brute-force oracle


def _materialize(spec: TreeSpec):
    """All leaves built directly from itertools.product, independent of ``_decode``."""
    L, nn, m = len(spec.levels), spec.n_noise, spec.m
    moves = list(itertools.product(range(L), range(nn)))
    rows = np.array(list(itertools.product(range(len(moves)), repeat=m)), dtype=np.int64)
    rows = rows.reshape(-1, m)
    move_ctrl = np.array([c for c, _ in moves])
    move_noise = np.array([s for _, s in moves])
    ctrl = move_ctrl[rows]
    noise = move_noise[rows]
    sigma2 = spec.levels[ctrl]
    xi = np.where(noise % 2 == 0, 1.0, -1.0)
    zeta = np.where(noise // 2 == 0, 1.0, -1.0) if spec.product_space else None
    return ctrl, noise, PathBatch.from_histories(sigma2, xi, zeta, spec.dt, spec.t_final)


def enumerate_oracle(spec: TreeSpec, F: PathFunctional, mode: str = "upper") -> float:
    """Best expected value over all adapted control strategies, by enumeration.

    Every leaf is materialized and ``F`` is evaluated once per leaf. A
    strategy assigns a control to each noise history. When the number of
    strategies is at most ``ORACLE_MAX_STRATEGIES`` every strategy is scored
    explicitly (open-loop ones included, as a subset). Otherwise strategies
    are enumerated node by node: the best strategy in a subtree is found by
    trying each control at its root and recursing into the noise children,
    which explores the same strategy set without listing it.
    """
    L = len(spec.levels)
    if spec.m > ORACLE_MAX_STEPS or spec.sigma_levels > ORACLE_MAX_LEVELS:
        raise InvalidArgumentError(
            f"oracle is capped at m <= {ORACLE_MAX_STEPS}, sigma_levels <= {ORACLE_MAX_LEVELS}")
    if spec.leaf_count > ORACLE_MAX_LEAVES:
        raise InvalidArgumentError(f"oracle is capped at {ORACLE_MAX_LEAVES} leaves")
    better = max if mode == "upper" else min
    _pick(mode)
    ctrl, noise, batch = _materialize(spec)
    vals = F(batch)
    nn, m = spec.n_noise, spec.m
    # leaf lookup keyed by (control sequence, noise sequence)
    weights_c = L ** np.arange(m - 1, -1, -1)
    weights_n = nn ** np.arange(m - 1, -1, -1)
    table = np.empty((L ** m, nn ** m))
    table[ctrl @ weights_c, noise @ weights_n] = vals
    n_decision = sum(nn ** k for k in range(m))
    if n_decision * math.log2(max(L, 2)) <= math.log2(ORACLE_MAX_STRATEGIES) or L == 1:
        return _score_all_strategies(table, L, nn, m, better)
    return _search_strategies(table, L, nn, m, better)


def _noise_paths(nn, m):
    return np.array(list(itertools.product(range(nn), repeat=m)), dtype=np.int64).reshape(-1, m)


def _score_all_strategies(table, L, nn, m, better):
    paths = _noise_paths(nn, m)
    # decision node id of each (path, step): offset of layer k + index of the noise prefix
    offsets = np.cumsum([0] + [nn ** k for k in range(m)])
    node = np.empty_like(paths)
    for k in range(m):
        prefix = paths[:, :k] @ (nn ** np.arange(k - 1, -1, -1)) if k else np.zeros(len(paths), np.int64)
        node[:, k] = offsets[k] + prefix
    noise_key = paths @ (nn ** np.arange(m - 1, -1, -1))
    weights_c = L ** np.arange(m - 1, -1, -1)
    n_decision = int(offsets[-1])
    best = None
    strategies = itertools.product(range(L), repeat=n_decision)
    while True:
        block = np.array(list(itertools.islice(strategies, 4096)), dtype=np.int64)
        if block.size == 0:
            break
        block = block.reshape(-1, n_decision)
        ctrl_key = block[:, node] @ weights_c  # (strategies, paths)
        scores = table[ctrl_key, noise_key[None, :]].mean(axis=1)
        cand = scores.max() if better is max else scores.min()
        best = cand if best is None else better(best, cand)
    return float(best)


def _search_strategies(table, L, nn, m, better):
    def value(ctrl_key, noise_key, k):
        if k == m:
            return table[ctrl_key, noise_key]
        options = []
        for c in range(L):
            outcomes = [value(ctrl_key * L + c, noise_key * nn + s, k + 1) for s in range(nn)]
            options.append(sum(outcomes) / nn)
        return better(options)

    return float(value(0, 0, 0))
