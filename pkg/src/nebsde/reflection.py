"""Reflection through a mean constraint.

The constraint asks that ``E[l(t_i, Y_i)] >= 0`` at every grid index, where
``E`` is a (possibly nonlinear) expectation and ``l`` a loss profile that is
strictly increasing and bi-Lipschitz in its spatial argument.  Reflection is
performed by the deterministic minimal-shift operator: the smallest
``x >= 0`` making the constraint hold after adding ``x``.  For a constant
(state-independent) generator the reflected solution is explicit: shift
profile, running-suffix maximum, done.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import bsde as bs
from . import expectations as ne
from . import scenarios as sc
from .errors import BracketFailureError, InfeasibleProblemError

OPERATOR_TOL = 1e-8
FEASIBILITY_TOL = 1e-6
_MAX_BISECT = 200


@dataclass(frozen=True)
class LossFunction:
    """Spatial loss profile ``l(t, x)`` (optionally scenario-dependent).

    ``fn`` takes ``(t, x)`` arrays, or ``(t, b, x)`` when ``random`` is set
    (``b`` is the Brownian coordinate).  ``lower`` and ``upper`` are the
    bi-Lipschitz slope bounds ``0 < lower <= upper``.
    """

    fn: Callable
    lower: float = 1.0
    upper: float = 1.0
    shape: str = "general"
    random: bool = False

    def __post_init__(self):
        if not 0.0 < self.lower <= self.upper:
            raise ValueError("slope bounds must satisfy 0 < lower <= upper")
        if self.shape not in ("linear", "concave", "convex", "general"):
            raise ValueError(f"unknown loss shape {self.shape!r}")

    def __call__(self, t: float, b: np.ndarray, x: np.ndarray) -> np.ndarray:
        if self.random:
            return np.asarray(self.fn(t, b, x), dtype=float)
        return np.asarray(self.fn(t, x), dtype=float)

    @staticmethod
    def linear(floor: float = 0.0) -> "LossFunction":
        """The benchmark profile ``l(t, x) = x - floor``."""
        f = float(floor)
        return LossFunction(fn=lambda t, x: np.asarray(x, dtype=float) - f, shape="linear")


def check_loss_lattice(
    loss: LossFunction,
    t_values,
    x_values,
    b_values=(0.0,),
) -> None:
    """Sample the loss on a lattice and verify slope bounds.

    Raises ``ValueError`` if any sampled difference quotient falls outside
    ``[lower, upper]`` (up to 1e-9 slack), which also catches
    non-monotonicity.
    """
    xs = np.asarray(x_values, dtype=float)
    if xs.size < 2:
        raise ValueError("need at least two lattice points")
    for t in t_values:
        for b in b_values:
            barr = np.full_like(xs, float(b))
            vals = loss(float(t), barr, xs)
            quot = np.diff(vals) / np.diff(xs)
            if np.any(quot < loss.lower - 1e-9) or np.any(quot > loss.upper + 1e-9):
                raise ValueError(
                    f"loss slope outside [{loss.lower}, {loss.upper}] near t={t}"
                )


@dataclass(frozen=True)
class ConstraintProfile:
    """Deterministic per-index shift requirements, all >= 0."""

    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if np.any(vals < -1e-12) or not np.all(np.isfinite(vals)):
            raise ValueError("profile entries must be finite and >= 0")
        object.__setattr__(self, "values", np.maximum(vals, 0.0))


@dataclass(frozen=True)
class ReflectorFlow:
    """Nondecreasing deterministic flow with ``K_0 = 0``."""

    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", vals)
        if abs(vals[0]) > 1e-12:
            raise ValueError("flow must start at 0")
        if np.any(np.diff(vals) < -1e-12):
            raise ValueError("flow must be nondecreasing")

    @property
    def increments(self) -> np.ndarray:
        return np.diff(self.values)

    @property
    def total(self) -> float:
        return float(self.values[-1])


def build_flow(profile: ConstraintProfile) -> ReflectorFlow:
    """Flow generated by a shift profile via running suffix maxima.

    ``K_i = max(profile) - max(profile[i:])``: the flow pays, as early as
    needed, exactly the largest shift still ahead.
    """
    suffix = np.maximum.accumulate(profile.values[::-1])[::-1]
    return ReflectorFlow(suffix[0] - suffix)


def constraint_value(
    exp: ne.NonlinearExpectation,
    loss: LossFunction,
    scen: sc.ScenarioSet,
    i: int,
    values: np.ndarray,
) -> float:
    """The constraint functional ``E[l(t_i, values)]`` at grid index ``i``."""
    t = float(scen.grid.nodes[i])
    b = sc.brownian(scen, i)
    lv = loss(t, b, np.asarray(values, dtype=float))
    return ne.evaluate(exp, scen, sc.RandomVariable(i, lv))


def _minimal_shift_with_iters(
    exp: ne.NonlinearExpectation,
    loss: LossFunction,
    scen: sc.ScenarioSet,
    i: int,
    rv: sc.RandomVariable,
    tol: float,
) -> tuple[float, int]:
    h0 = constraint_value(exp, loss, scen, i, rv.values)
    if h0 >= 0.0:
        return 0.0, 0
    horizon = scen.grid.horizon
    hi = (-h0) * np.exp(exp.kappa * horizon) / (loss.lower * exp.scale)
    if hi <= tol:
        # root within tol of zero and below the functional's resolution
        return hi, 0
    h_hi = constraint_value(exp, loss, scen, i, rv.values + hi)
    if h_hi < 0.0:
        # the slope/domination bracket failed; widen a few times before
        # giving up, covering losses whose sampled bounds are optimistic
        grew = False
        for _ in range(8):
            hi *= 2.0
            h_hi = constraint_value(exp, loss, scen, i, rv.values + hi)
            if h_hi >= 0.0:
                grew = True
                break
        if not grew:
            raise BracketFailureError(
                f"no nonnegative constraint value found up to shift {hi:.3g} at index {i}"
            )
    lo = 0.0
    iters = 0
    while hi - lo > tol and iters < _MAX_BISECT:
        mid = 0.5 * (lo + hi)
        if constraint_value(exp, loss, scen, i, rv.values + mid) >= 0.0:
            hi = mid
        else:
            lo = mid
        iters += 1
    return 0.5 * (lo + hi), iters


def minimal_shift(
    exp: ne.NonlinearExpectation,
    loss: LossFunction,
    scen: sc.ScenarioSet,
    i: int,
    rv: sc.RandomVariable,
    tol: float = OPERATOR_TOL,
) -> float:
    """Smallest ``x >= 0`` with ``E[l(t_i, x + rv)] >= 0``.

    Zero when the constraint already holds; otherwise a bisection between 0
    and the slope-based upper bracket, accurate to ``tol / 2``.
    """
    sc.check_rv(scen, rv)
    value, _ = _minimal_shift_with_iters(exp, loss, scen, i, rv, tol)
    return value


@dataclass(frozen=True)
class ReflectionDiagnostics:
    """Post-solve constraint evidence attached to a reflected solution."""

    constraint_values: np.ndarray
    skorokhod_residual: float
    shift_iterations: np.ndarray


@dataclass(frozen=True)
class ReflectedSolution:
    """Reflected solution: value/integrand pair plus the deterministic flow."""

    Y: tuple
    Z: tuple
    K: ReflectorFlow
    diagnostics: ReflectionDiagnostics
    start: int = 0
    picard: object | None = None

    @property
    def value(self) -> float:
        v = self.Y[0].values
        return float(v[0]) if v.size == 1 else float(v.mean())

    def mean_values(self, scen: sc.ScenarioSet) -> np.ndarray:
        return np.array([sc.expect(scen, y) for y in self.Y])


def _normalize_driver_process(c, scen: sc.ScenarioSet, start: int, stop: int):
    """Coerce a constant-driver spec to one scalar-or-array per step index."""
    n = stop - start
    if np.isscalar(c):
        return [float(c)] * n
    if callable(c):
        return [float(c(float(scen.grid.nodes[start + j]))) for j in range(n)]
    seq = list(c)
    if len(seq) != n:
        raise ValueError(f"driver process needs {n} entries, got {len(seq)}")
    out = []
    for item in seq:
        out.append(float(item) if np.isscalar(item) else np.asarray(item, dtype=float))
    return out


def _window_solve(
    scen: sc.ScenarioSet,
    terminal: sc.RandomVariable,
    c_process,
    shift_fn,
    start: int,
):
    """Shared engine: reflect a constant-generator backward solve.

    ``shift_fn(i, rv) -> (shift, iters)`` supplies the per-index minimal
    shift.  Returns the unreflected levels, the flow, the reflected pair and
    iteration counts.  ``c_process[j]`` is the generator value on step
    ``start + j`` (scalar or per-node array).
    """
    stop = terminal.index
    dt = scen.grid.dt
    xs = [terminal]
    vals = terminal.values
    for i in range(stop - 1, start - 1, -1):
        vals = sc.step_expect(scen, vals, i) + np.asarray(c_process[i - start]) * dt
        xs.append(sc.RandomVariable(i, vals))
    xs.reverse()

    shifts = np.zeros(stop - start + 1)
    iters = np.zeros(stop - start + 1, dtype=int)
    for j, x in enumerate(xs):
        shifts[j], iters[j] = shift_fn(start + j, x)
    profile = ConstraintProfile(shifts)
    flow = build_flow(profile)

    total = flow.total
    ys = []
    zs = []
    for j, x in enumerate(xs):
        ys.append(sc.RandomVariable(x.index, x.values + (total - flow.values[j])))
        if j < len(xs) - 1:
            zs.append(sc.RandomVariable(x.index, sc.step_z(scen, xs[j + 1].values, x.index)))
    return xs, flow, ys, zs, iters


def unreflected_process(
    scen: sc.ScenarioSet, claim: bs.TerminalClaim, c
) -> list:
    """Plain backward accumulation ``X_i = E_i[X_{i+1}] + C_i dt``."""
    cp = _normalize_driver_process(c, scen, 0, claim.index)
    xs = [claim.rv]
    vals = claim.values
    for i in range(claim.index - 1, -1, -1):
        vals = sc.step_expect(scen, vals, i) + np.asarray(cp[i]) * scen.grid.dt
        xs.append(sc.RandomVariable(i, vals))
    xs.reverse()
    return xs


def solve_constant_driver(
    scen: sc.ScenarioSet,
    claim: bs.TerminalClaim,
    c,
    loss: LossFunction,
    exp: ne.NonlinearExpectation,
    tol: float = OPERATOR_TOL,
    feasibility_tol: float = FEASIBILITY_TOL,
) -> ReflectedSolution:
    """Exact reflected solution for a state-independent generator.

    The generator ``c`` may be a scalar, a callable of t, or a sequence with
    one entry per step.  The terminal constraint must hold within
    ``feasibility_tol``.
    """
    sc.check_rv(scen, claim.rv)
    if claim.index != scen.grid.steps:
        raise ValueError("claim must live on the terminal level")
    term = constraint_value(exp, loss, scen, claim.index, claim.values)
    if term < -feasibility_tol:
        raise InfeasibleProblemError(
            f"terminal constraint value {term:.3g} < -{feasibility_tol:g}"
        )
    cp = _normalize_driver_process(c, scen, 0, claim.index)

    def shift_fn(i, rv):
        return _minimal_shift_with_iters(exp, loss, scen, i, rv, tol)

    _, flow, ys, zs, iters = _window_solve(scen, claim.rv, cp, shift_fn, 0)
    cons = np.array(
        [constraint_value(exp, loss, scen, y.index, y.values) for y in ys]
    )
    resid = float(np.sum(cons[:-1] * flow.increments))
    diag = ReflectionDiagnostics(
        constraint_values=cons, skorokhod_residual=resid, shift_iterations=iters
    )
    return ReflectedSolution(Y=tuple(ys), Z=tuple(zs), K=flow, diagnostics=diag)


def skorokhod_residual(
    scen: sc.ScenarioSet,
    sol: ReflectedSolution,
    loss: LossFunction,
    exp: ne.NonlinearExpectation,
) -> float:
    """Discrete flat-off condition: ``sum E[l(t_i, Y_i)] * dK_i``.

    Recomputed from scratch so it can audit any candidate solution, not just
    ones produced by this module.
    """
    cons = np.array(
        [constraint_value(exp, loss, scen, y.index, y.values) for y in sol.Y]
    )
    return float(np.sum(cons[:-1] * sol.K.increments))
