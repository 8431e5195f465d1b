"""Discrete Brownian scenario engines.

Two interchangeable backends over a uniform time grid:

* ``tree``: the recombining random walk with increments ``+-sqrt(dt)``,
  probability one half each.  Level ``i`` has ``i + 1`` nodes and carries
  exact binomial weights, so expectations and conditional expectations are
  exact (up to rounding) rather than sampled.
* ``montecarlo``: seeded Gaussian paths with per-step polynomial-regression
  conditional expectations.

Random variables are stored as value arrays over the support of a single
grid index.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np
from scipy.stats import binom

from .errors import SupportMismatchError

_RIDGE = 1e-10


@dataclass(frozen=True)
class TimeGrid:
    """Uniform partition ``0 = t_0 < ... < t_m = T``."""

    horizon: float
    steps: int

    def __post_init__(self):
        if not np.isfinite(self.horizon) or self.horizon <= 0.0:
            raise ValueError("horizon must be a positive finite number")
        if int(self.steps) != self.steps or self.steps < 1:
            raise ValueError("steps must be an integer >= 1")

    @cached_property
    def dt(self) -> float:
        return self.horizon / self.steps

    @cached_property
    def nodes(self) -> np.ndarray:
        return np.linspace(0.0, self.horizon, self.steps + 1)


@dataclass(frozen=True)
class RandomVariable:
    """Values of a grid-index-measurable quantity over its support.

    ``index`` is the grid index; ``values`` has one entry per tree node at
    that level (tree mode) or one entry per path (Monte Carlo mode).
    """

    index: int
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", vals)
        if self.index < 0:
            raise ValueError("index must be >= 0")
        if vals.ndim != 1 or vals.size == 0:
            raise ValueError("values must be a non-empty 1-d array")
        if not np.all(np.isfinite(vals)):
            raise ValueError("values must be finite")


@dataclass(frozen=True, repr=False)
class ScenarioSet:
    """A realised scenario backend bound to a time grid.

    Built through :func:`build_scenarios`.  Tree mode precomputes node
    coordinates and binomial weights per level; Monte Carlo mode stores the
    simulated Brownian paths and the regression basis degree.
    """

    grid: TimeGrid
    mode: str
    n_paths: int = 0
    seed: int = 0
    basis_degree: int = 3
    tree_values: tuple = field(default=(), compare=False)
    tree_weights: tuple = field(default=(), compare=False)
    paths: np.ndarray | None = field(default=None, compare=False)

    def __repr__(self):
        extra = f", n_paths={self.n_paths}, seed={self.seed}" if self.mode == "montecarlo" else ""
        return f"ScenarioSet(mode={self.mode!r}, T={self.grid.horizon}, m={self.grid.steps}{extra})"


def build_scenarios(
    grid: TimeGrid,
    mode: str = "tree",
    n_paths: int = 0,
    seed: int = 0,
    basis_degree: int = 3,
) -> ScenarioSet:
    """Construct a scenario set on ``grid``.

    Parameters
    ----------
    grid : TimeGrid
    mode : str
        ``"tree"`` or ``"montecarlo"``.
    n_paths : int
        Number of simulated paths (Monte Carlo only, must be >= 2).
    seed : int
        Seed for the path generator (Monte Carlo only).
    basis_degree : int
        Polynomial degree of the regression basis (Monte Carlo only,
        must be >= 1).
    """
    if mode == "tree":
        m = grid.steps
        sq = np.sqrt(grid.dt)
        values = tuple(
            (2.0 * np.arange(i + 1) - i) * sq for i in range(m + 1)
        )
        weights = tuple(
            binom.pmf(np.arange(i + 1), i, 0.5) for i in range(m + 1)
        )
        return ScenarioSet(grid, "tree", tree_values=values, tree_weights=weights)
    if mode == "montecarlo":
        if n_paths < 2:
            raise ValueError("montecarlo mode needs n_paths >= 2")
        if basis_degree < 1:
            raise ValueError("basis_degree must be >= 1")
        rng = np.random.default_rng(seed)
        steps = rng.standard_normal((n_paths, grid.steps)) * np.sqrt(grid.dt)
        paths = np.zeros((n_paths, grid.steps + 1))
        np.cumsum(steps, axis=1, out=paths[:, 1:])
        return ScenarioSet(
            grid,
            "montecarlo",
            n_paths=n_paths,
            seed=seed,
            basis_degree=basis_degree,
            paths=paths,
        )
    raise ValueError(f"unknown scenario mode {mode!r}")


def support_size(scen: ScenarioSet, i: int) -> int:
    if i < 0 or i > scen.grid.steps:
        raise ValueError(f"index {i} outside grid 0..{scen.grid.steps}")
    return (i + 1) if scen.mode == "tree" else scen.n_paths


def check_rv(scen: ScenarioSet, rv: RandomVariable) -> None:
    """Raise unless ``rv`` matches the scenario support at its index."""
    expected = support_size(scen, rv.index)
    if rv.values.size != expected:
        raise SupportMismatchError(
            f"support size {rv.values.size} at index {rv.index}, expected {expected}"
        )


def brownian(scen: ScenarioSet, i: int) -> np.ndarray:
    """Brownian coordinates over the support at index ``i``."""
    if scen.mode == "tree":
        support_size(scen, i)
        return scen.tree_values[i]
    support_size(scen, i)
    return scen.paths[:, i]


def brownian_rv(scen: ScenarioSet, i: int) -> RandomVariable:
    return RandomVariable(i, brownian(scen, i).copy())


def expect(scen: ScenarioSet, rv: RandomVariable) -> float:
    """Expectation of ``rv`` under the scenario measure."""
    check_rv(scen, rv)
    if scen.mode == "tree":
        return float(scen.tree_weights[rv.index] @ rv.values)
    return float(rv.values.mean())


def _basis(scen: ScenarioSet, i: int) -> np.ndarray:
    b = scen.paths[:, i]
    return b[:, None] ** np.arange(scen.basis_degree + 1)


def _project(scen: ScenarioSet, i: int, target: np.ndarray) -> np.ndarray:
    # ridge-regularised normal equations; the ridge also covers the
    # degenerate design at i = 0 where all basis columns but the constant
    # vanish, making the projection a plain mean
    a = _basis(scen, i)
    gram = a.T @ a
    gram[np.diag_indices_from(gram)] += _RIDGE
    beta = np.linalg.solve(gram, a.T @ target)
    return a @ beta


def step_expect(scen: ScenarioSet, next_values: np.ndarray, i: int) -> np.ndarray:
    """One-step conditional expectation of level ``i + 1`` values onto ``i``."""
    if scen.mode == "tree":
        return 0.5 * (next_values[:-1] + next_values[1:])
    return _project(scen, i, next_values)


def step_z(scen: ScenarioSet, next_values: np.ndarray, i: int) -> np.ndarray:
    """One-step estimate of the martingale integrand over ``[t_i, t_{i+1})``."""
    dt = scen.grid.dt
    if scen.mode == "tree":
        return (next_values[1:] - next_values[:-1]) * (0.5 / np.sqrt(dt))
    db = scen.paths[:, i + 1] - scen.paths[:, i]
    return _project(scen, i, next_values * db / dt)


def cond_expect(scen: ScenarioSet, rv: RandomVariable, i: int) -> RandomVariable:
    """Conditional expectation of ``rv`` at the earlier index ``i``.

    Tree mode iterates exact pairwise averages; Monte Carlo mode chains
    per-step regression projections.
    """
    check_rv(scen, rv)
    if i < 0 or i > rv.index:
        raise ValueError(f"target index {i} must lie in 0..{rv.index}")
    vals = rv.values
    for j in range(rv.index - 1, i - 1, -1):
        vals = step_expect(scen, vals, j)
    return RandomVariable(i, vals)


def girsanov_weights(scen: ScenarioSet, theta: float) -> RandomVariable:
    """Exponential-tilt density ``exp(theta*B_T - theta^2*T/2)``, renormalised.

    The raw exponential has mean 1 only in the Gaussian limit; the weights
    are divided by their scenario mean so the tilt is an exact probability
    reweighting on the discrete support.
    """
    if not np.isfinite(theta):
        raise ValueError("theta must be finite")
    m = scen.grid.steps
    t = scen.grid.horizon
    raw = np.exp(theta * brownian(scen, m) - 0.5 * theta * theta * t)
    w = RandomVariable(m, raw)
    return RandomVariable(m, raw / expect(scen, w))


def tilted_expect(scen: ScenarioSet, theta: float, rv: RandomVariable) -> float:
    """Expectation of ``rv`` under the tilted measure with kernel ``theta``."""
    check_rv(scen, rv)
    w = girsanov_weights(scen, theta)
    if scen.mode == "montecarlo":
        # E[w X] per path, no projection needed
        return float(np.mean(w.values * rv.values))
    if rv.index < w.index:
        w = cond_expect(scen, w, rv.index)
    return expect(scen, RandomVariable(rv.index, w.values * rv.values))


def from_terminal_function(scen: ScenarioSet, fn: Callable[[np.ndarray], np.ndarray]) -> RandomVariable:
    """Random variable ``fn(B_T)`` on the terminal support.

    Scalar results (constant payoffs) are broadcast over the support.
    """
    m = scen.grid.steps
    b = brownian(scen, m)
    vals = np.asarray(fn(b), dtype=float)
    if vals.ndim == 0:
        vals = np.full(b.shape, float(vals))
    return RandomVariable(m, vals)
