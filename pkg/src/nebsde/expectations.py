"""Nonlinear expectation operators over a scenario set.

Three families share one evaluation entry point:

* ``classical``: the scenario mean, with domination slope ``kappa = 0``.
* ``gexp``: the value at time 0 of the BSDE driven by a generator that
  vanishes at ``(y, z) = (0, 0)``.
* ``alpha_maxmin``: the convex mix ``alpha * sup + (1 - alpha) * inf`` of the
  scaled-|z| bounds, which is constant-preserving.

A claim living on an interior level is continued to the terminal solve by
freezing z at 0 node by node (the conditional system degenerates to scalar
ODEs there), then rolled back through the scenario tree or path regression.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels as kern
from . import bsde as bs
from . import scenarios as sc

_A3_PROBE_TIMES = (0.0, 0.5, 1.0)


@dataclass(frozen=True)
class NonlinearExpectation:
    """A constant-preserving expectation operator with domination metadata.

    ``kappa`` and ``scale`` describe the dominating pair: the operator is
    assumed to sit within ``scale`` times the two-sided ``kappa``-envelope.
    """

    kind: str
    kappa: float = 0.0
    scale: float = 1.0
    driver: bs.Driver | None = None
    alpha: float = 1.0
    kernel_grid: int = 21

    def __post_init__(self):
        if self.kind not in ("classical", "gexp", "alpha_maxmin"):
            raise ValueError(f"unknown expectation kind {self.kind!r}")
        if self.kappa < 0.0 or not np.isfinite(self.kappa):
            raise ValueError("kappa must be finite and >= 0")
        if self.scale <= 0.0 or not np.isfinite(self.scale):
            raise ValueError("scale must be finite and > 0")
        if self.kind == "gexp":
            if self.driver is None:
                raise ValueError("gexp expectation needs a driver")
            zero = np.zeros(3)
            for t in _A3_PROBE_TIMES:
                probe = np.asarray(self.driver.fn(t, zero, zero), dtype=float)
                if np.max(np.abs(probe)) > 1e-12:
                    raise ValueError("gexp driver must vanish at (y, z) = (0, 0)")
        if self.kind == "alpha_maxmin":
            if not 0.0 <= self.alpha <= 1.0:
                raise ValueError("alpha must lie in [0, 1]")
            if self.kernel_grid < 2:
                raise ValueError("kernel_grid must be >= 2")

    @staticmethod
    def classical(kappa: float = 0.0) -> "NonlinearExpectation":
        return NonlinearExpectation(kind="classical", kappa=kappa)

    @staticmethod
    def gexp(driver: bs.Driver, kappa: float | None = None, scale: float = 1.0) -> "NonlinearExpectation":
        if kappa is None:
            kappa = driver.lipschitz
        return NonlinearExpectation(kind="gexp", kappa=float(kappa), scale=scale, driver=driver)

    @staticmethod
    def alpha_maxmin(alpha: float, kappa: float, kernel_grid: int = 21) -> "NonlinearExpectation":
        return NonlinearExpectation(
            kind="alpha_maxmin", kappa=float(kappa), alpha=float(alpha), kernel_grid=kernel_grid
        )


@dataclass(frozen=True)
class DominationReport:
    """Slack of the two-sided envelope around an operator difference."""

    difference: float
    lower_bound: float
    upper_bound: float

    @property
    def lower_slack(self) -> float:
        return self.difference - self.lower_bound

    @property
    def upper_slack(self) -> float:
        return self.upper_bound - self.difference


def _continue_to_level(
    scen: sc.ScenarioSet, rv: sc.RandomVariable, driver: bs.Driver
) -> np.ndarray:
    """Freeze z at 0 and roll the claim's own level forward--backward ODEs.

    Node values at an interior level evolve independently under
    ``y' = -f(t, y, 0)``; the implicit step mirrors the tree recursion so a
    level-``index`` claim becomes usable as terminal data at that level.
    """
    m = scen.grid.steps
    steps = m - rv.index
    if steps == 0:
        return rv.values.copy()
    if driver.kappa_structure is not None:
        kappa, include_y = driver.kappa_structure
        return kern.kappa_continuation(rv.values, scen.grid.dt, steps, kappa, include_y)
    vals = rv.values.copy()
    zeros = np.zeros_like(vals)
    nodes = scen.grid.nodes
    for j in range(m - 1, rv.index - 1, -1):
        vals = bs.implicit_step(driver, float(nodes[j]), vals, zeros, scen.grid.dt)
    return vals


def _gexp_value(scen: sc.ScenarioSet, rv: sc.RandomVariable, driver: bs.Driver) -> float:
    sc.check_rv(scen, rv)
    vals = _continue_to_level(scen, rv, driver)
    if scen.mode == "tree" and driver.kappa_structure is not None:
        kappa, include_y = driver.kappa_structure
        return float(kern.tree_backward_value(vals, scen.grid.dt, kappa, include_y))
    claim = bs.TerminalClaim(sc.RandomVariable(rv.index, vals))
    pair = bs.solve_bsde(scen, claim, driver)
    return pair.value


def evaluate(exp: NonlinearExpectation, scen: sc.ScenarioSet, rv: sc.RandomVariable) -> float:
    """Value assigned to the claim ``rv`` by the operator ``exp``."""
    sc.check_rv(scen, rv)
    if exp.kind == "classical":
        return sc.expect(scen, rv)
    if exp.kind == "gexp":
        return _gexp_value(scen, rv, exp.driver)
    hi = _gexp_value(scen, rv, bs.Driver.kappa_abs(exp.kappa, include_y=False))
    lo = _gexp_value(scen, rv, bs.Driver.kappa_abs(-exp.kappa, include_y=False))
    return exp.alpha * hi + (1.0 - exp.alpha) * lo


def domination_gap(
    exp: NonlinearExpectation,
    scen: sc.ScenarioSet,
    rv1: sc.RandomVariable,
    rv2: sc.RandomVariable,
) -> DominationReport:
    """Check ``E[X1] - E[X2]`` against its two-sided ``kappa``-envelope.

    The envelope is ``scale`` times the signed ``kappa*(|y| + |z|)`` values
    of the difference claim.
    """
    if rv1.index != rv2.index:
        raise ValueError("claims must live on the same grid index")
    diff = sc.RandomVariable(rv1.index, rv1.values - rv2.values)
    d = evaluate(exp, scen, rv1) - evaluate(exp, scen, rv2)
    lo = exp.scale * _gexp_value(scen, diff, bs.Driver.kappa_abs(-exp.kappa))
    hi = exp.scale * _gexp_value(scen, diff, bs.Driver.kappa_abs(exp.kappa))
    return DominationReport(difference=d, lower_bound=lo, upper_bound=hi)


def grid_maxmin_value(
    exp: NonlinearExpectation, scen: sc.ScenarioSet, rv: sc.RandomVariable
) -> float:
    """Second-opinion value for ``alpha_maxmin`` from constant tilt kernels.

    Scans ``kernel_grid`` constant Girsanov kernels in ``[-kappa, kappa]``
    and blends the best and worst tilted means.  The sup over constant
    kernels only approximates the adapted sup, so this is a sanity check,
    not an oracle.
    """
    if exp.kind != "alpha_maxmin":
        raise ValueError("grid values only apply to alpha_maxmin expectations")
    thetas = np.linspace(-exp.kappa, exp.kappa, exp.kernel_grid)
    vals = [sc.tilted_expect(scen, float(th), rv) for th in thetas]
    return exp.alpha * max(vals) + (1.0 - exp.alpha) * min(vals)
