"""Risk-measure constraints and superhedging.

The risk side replaces the mean constraint with ``rho(t, Y_t) <= q_t`` for a
convex risk measure built from finitely many Girsanov tilt kernels with
penalties.  Translation invariance makes the minimal lift explicit:
``(rho(t, X) - q_t)^+``, no root search needed.  Superhedging prices a claim
by reflecting the discounted wealth dynamics through that constraint.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import bsde as bs
from . import picard as pc
from . import reflection as rf
from . import scenarios as sc

_YTOL = 1e-12


@dataclass(frozen=True)
class RiskMeasure:
    """Max over tilted means minus penalties.

    ``kernels`` are the Girsanov tilt slopes; ``penalties`` their convex
    charges (all zero for a coherent measure).  ``kappa`` bounds the kernel
    magnitudes and doubles as the domination slope.  ``schedule``, when set,
    maps t to ``(kernels, penalties)`` so the family can vary in time.
    """

    kernels: np.ndarray
    penalties: np.ndarray
    kappa: float
    scale: float = 1.0
    schedule: Callable | None = None

    def __post_init__(self):
        ker = np.atleast_1d(np.asarray(self.kernels, dtype=float))
        pen = np.atleast_1d(np.asarray(self.penalties, dtype=float))
        object.__setattr__(self, "kernels", ker)
        object.__setattr__(self, "penalties", pen)
        if ker.size == 0:
            raise ValueError("kernel list must be nonempty")
        if pen.size != ker.size:
            raise ValueError("penalties must match kernels in length")
        if np.any(pen < 0.0):
            raise ValueError("penalties must be >= 0")
        if self.kappa < 0.0 or np.any(np.abs(ker) > self.kappa + 1e-12):
            raise ValueError("all kernels must satisfy |theta| <= kappa")

    @property
    def coherent(self) -> bool:
        return bool(np.all(self.penalties == 0.0))

    @staticmethod
    def coherent_family(kernels, kappa: float | None = None) -> "RiskMeasure":
        ker = np.atleast_1d(np.asarray(kernels, dtype=float))
        if kappa is None:
            kappa = float(np.max(np.abs(ker)))
        return RiskMeasure(kernels=ker, penalties=np.zeros(ker.size), kappa=float(kappa))

    @staticmethod
    def convex_family(kernels, penalties, kappa: float | None = None) -> "RiskMeasure":
        ker = np.atleast_1d(np.asarray(kernels, dtype=float))
        if kappa is None:
            kappa = float(np.max(np.abs(ker)))
        return RiskMeasure(kernels=ker, penalties=np.asarray(penalties, dtype=float),
                           kappa=float(kappa))

    def at(self, t: float) -> tuple:
        if self.schedule is None:
            return self.kernels, self.penalties
        ker, pen = self.schedule(float(t))
        return np.atleast_1d(np.asarray(ker, dtype=float)), np.atleast_1d(
            np.asarray(pen, dtype=float)
        )


@dataclass(frozen=True)
class Benchmark:
    """Deterministic capital requirement ``q_t`` sampled on the grid."""

    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", vals)
        if not np.all(np.isfinite(vals)):
            raise ValueError("benchmark values must be finite")

    @staticmethod
    def constant(grid: sc.TimeGrid, value: float) -> "Benchmark":
        return Benchmark(np.full(grid.steps + 1, float(value)))

    @staticmethod
    def from_knots(grid: sc.TimeGrid, knots) -> "Benchmark":
        """Piecewise-linear interpolation of ``(t, q)`` knots onto the grid."""
        pts = sorted((float(t), float(q)) for t, q in knots)
        if not pts:
            raise ValueError("need at least one knot")
        ts = np.array([p[0] for p in pts])
        qs = np.array([p[1] for p in pts])
        return Benchmark(np.interp(grid.nodes, ts, qs))


@dataclass(frozen=True)
class Market:
    """One-asset Black-Scholes-type market parameters."""

    rate: float
    drift: float
    volatility: float

    def __post_init__(self):
        if self.volatility <= 0.0:
            raise ValueError("volatility must be positive")
        for name in ("rate", "drift", "volatility"):
            if not np.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")

    @property
    def price_of_risk(self) -> float:
        return (self.drift - self.rate) / self.volatility


def evaluate_risk(rho: RiskMeasure, scen: sc.ScenarioSet, i: int, rv: sc.RandomVariable) -> float:
    """``rho(t_i, rv)``: the worst penalised tilted mean of the loss ``-rv``."""
    sc.check_rv(scen, rv)
    if rv.index != i:
        raise ValueError("rv must live on index i")
    neg = sc.RandomVariable(i, -rv.values)
    ker, pen = rho.at(float(scen.grid.nodes[i]))
    vals = [
        rho.scale * sc.tilted_expect(scen, float(th), neg) - float(p)
        for th, p in zip(ker, pen)
    ]
    return max(vals)


def risk_shift(
    rho: RiskMeasure, q: Benchmark, scen: sc.ScenarioSet, i: int, rv: sc.RandomVariable
) -> float:
    """Minimal lift onto the acceptance set: ``(rho(t_i, rv) - q_i)^+``.

    Translation invariance of ``rho`` collapses the root search that the
    mean constraint needs.
    """
    return max(evaluate_risk(rho, scen, i, rv) - float(q.values[i]), 0.0)


def _risk_problem(rho: RiskMeasure, q: Benchmark, scen: sc.ScenarioSet) -> pc.ReflectionProblem:
    def shift(i, rv):
        return risk_shift(rho, q, scen, i, rv), 0

    def constraint(i, values):
        rv = sc.RandomVariable(i, np.asarray(values, dtype=float))
        return float(q.values[i]) - evaluate_risk(rho, scen, i, rv)

    def terminal_value(rv):
        return constraint(rv.index, rv.values)

    return pc.ReflectionProblem(shift=shift, constraint=constraint, terminal_value=terminal_value)


def solve_risk_reflected(
    scen: sc.ScenarioSet,
    claim: bs.TerminalClaim,
    driver: bs.Driver,
    rho: RiskMeasure,
    q: Benchmark,
    opts: pc.SolveOptions | None = None,
) -> rf.ReflectedSolution:
    """Reflected solve under the constraint ``rho(t, Y_t) <= q_t``.

    Diagnostics carry the slack ``q_i - rho(t_i, Y_i)`` per index and the
    Skorokhod residual against that slack.
    """
    if q.values.size != scen.grid.steps + 1:
        raise ValueError("benchmark must be sampled on the full grid")
    opts = opts or pc.SolveOptions()
    problem = _risk_problem(rho, q, scen)
    return pc._solve_with_problem(
        scen, claim, driver, problem, opts,
        loss_lower=1.0, loss_upper=1.0, kappa=rho.kappa,
    )


@dataclass(frozen=True)
class PriceReport:
    """Superhedging output: price, solution, and nodewise hedge ratios."""

    price: float
    solution: rf.ReflectedSolution
    hedge_ratios: tuple


def superhedge_price(
    market: Market,
    scen: sc.ScenarioSet,
    claim: bs.TerminalClaim,
    rho: RiskMeasure,
    q: Benchmark,
    opts: pc.SolveOptions | None = None,
) -> PriceReport:
    """Minimal initial wealth whose constrained dynamics deliver the claim.

    The wealth generator is ``f(t, y, z) = -(r y + theta z)`` with
    ``theta = (mu - r) / sigma``.  Hedge ratios ``pi_i = Z_i / (sigma Y_i)``
    are reported nodewise, NaN where ``|Y_i|`` is below 1e-12.
    """
    r = market.rate
    theta = market.price_of_risk
    lam = abs(r) + abs(theta)
    if lam == 0.0:
        driver = bs.Driver.constant(0.0)
    else:
        driver = bs.Driver(
            fn=lambda t, y, z: -(r * np.asarray(y, dtype=float) + theta * np.asarray(z, dtype=float)),
            lipschitz=lam,
            depends_on_y=r != 0.0,
            depends_on_z=theta != 0.0,
        )
    sol = solve_risk_reflected(scen, claim, driver, rho, q, opts)
    ratios = []
    for y, z in zip(sol.Y, sol.Z):
        with np.errstate(divide="ignore", invalid="ignore"):
            pi = z.values / (market.volatility * y.values)
        # NaN marks nodes where the wealth is too close to 0 to divide
        ratios.append(np.where(np.abs(y.values) <= _YTOL, np.nan, pi))
    return PriceReport(price=sol.value, solution=sol, hedge_ratios=tuple(ratios))
