"""Backward solver: independent node-recursion oracle, closed forms, guards."""

import math
from functools import lru_cache

import numpy as np
import pytest

from nebsde import bsde as bs
from nebsde import scenarios as sc
from nebsde.errors import FixedPointError, NonContractiveStepError

EXACT = 1e-12


def _node_oracle(m, xi, f):
    """Independent backward recursion on the (i, up-count) lattice.

    Same discretisation, different machinery: plain Python recursion, scalar
    arithmetic, and an undamped fixed-point loop to 1e-16 per node.
    """
    dt = 1.0 / m
    sq = math.sqrt(dt)

    @lru_cache(maxsize=None)
    def y_at(i, k):
        if i == m:
            return xi((2 * k - m) * sq)
        up, dn = y_at(i + 1, k + 1), y_at(i + 1, k)
        e, z = 0.5 * (up + dn), (up - dn) / (2.0 * sq)
        t = i * dt
        y = e
        for _ in range(300):
            yn = e + f(t, y, z) * dt
            if abs(yn - y) <= 1e-16 * (1.0 + abs(yn)):
                return yn
            y = yn
        return y

    return y_at


def _assert_matches_oracle(scen, claim_fn, driver, scalar_f):
    claim = bs.TerminalClaim.from_function(scen, claim_fn)
    pair = bs.solve_bsde(scen, claim, driver)
    oracle = _node_oracle(scen.grid.steps, lambda b: float(claim_fn(np.array(b))), scalar_f)
    worst = max(
        abs(pair.Y[i].values[k] - oracle(i, k))
        for i in range(scen.grid.steps + 1)
        for k in range(i + 1)
    )
    assert worst <= EXACT


def test_constant_driver_matches_oracle(tree8):
    _assert_matches_oracle(
        tree8, lambda b: np.maximum(b, 0.0),
        bs.Driver.constant(0.7), lambda t, y, z: 0.7,
    )


def test_y_and_z_driver_matches_oracle(tree8):
    drv = bs.Driver(
        fn=lambda t, y, z: -0.2 * np.asarray(y) + 0.1 * np.abs(z),
        lipschitz=0.3, depends_on_y=True, depends_on_z=True,
    )
    _assert_matches_oracle(
        tree8, lambda b: np.maximum(b, 0.0), drv,
        lambda t, y, z: -0.2 * y + 0.1 * abs(z),
    )


def test_z_only_driver_matches_oracle(tree8):
    drv = bs.Driver(
        fn=lambda t, y, z: 0.3 * np.asarray(z),
        lipschitz=0.3, depends_on_z=True,
    )
    _assert_matches_oracle(tree8, lambda b: b * b, drv, lambda t, y, z: 0.3 * z)


def test_time_dependent_driver_matches_oracle(tree8):
    drv = bs.Driver(
        fn=lambda t, y, z: 0.1 * t - 0.2 * np.asarray(y),
        lipschitz=0.2, depends_on_y=True,
    )
    _assert_matches_oracle(
        tree8, lambda b: np.abs(b), drv, lambda t, y, z: 0.1 * t - 0.2 * y
    )


def test_kappa_abs_driver_matches_manual_form(tree8):
    kappa = 0.5
    manual = bs.Driver(
        fn=lambda t, y, z: kappa * (np.abs(y) + np.abs(z)),
        lipschitz=kappa, depends_on_y=True, depends_on_z=True,
    )
    claim = bs.TerminalClaim.from_function(tree8, lambda b: b + 0.3)
    a = bs.solve_bsde(tree8, claim, bs.Driver.kappa_abs(kappa))
    b = bs.solve_bsde(tree8, claim, manual)
    for ya, yb in zip(a.Y, b.Y):
        assert np.max(np.abs(ya.values - yb.values)) <= EXACT


def test_constant_driver_shifts_mean_exactly(tree50):
    claim = bs.TerminalClaim.from_function(tree50, lambda b: np.abs(b))
    pair = bs.solve_bsde(tree50, claim, bs.Driver.constant(0.4))
    expected = sc.expect(tree50, claim.rv) + 0.4
    assert abs(sc.expect(tree50, pair.Y[0]) - expected) <= EXACT


def test_linear_y_driver_closed_form(tree50):
    # f = -lam*y on a constant claim: one implicit division per step.
    lam, c = 0.8, 2.0
    drv = bs.Driver(
        fn=lambda t, y, z: -lam * np.asarray(y), lipschitz=lam, depends_on_y=True
    )
    pair = bs.solve_bsde(tree50, bs.TerminalClaim.constant(tree50, c), drv)
    exact = c * (1.0 + lam * tree50.grid.dt) ** (-50)
    assert abs(pair.value - exact) <= EXACT


def test_comparison_in_terminal_value(tree8):
    rng = np.random.default_rng(31)
    drv = bs.Driver(
        fn=lambda t, y, z: 0.2 * np.abs(z), lipschitz=0.2, depends_on_z=True
    )
    for _ in range(10):
        lo = rng.normal(0.0, 1.0, 9)
        hi = lo + rng.uniform(0.0, 1.0, 9)
        pa = bs.solve_bsde(tree8, bs.TerminalClaim(sc.RandomVariable(8, lo)), drv)
        pb = bs.solve_bsde(tree8, bs.TerminalClaim(sc.RandomVariable(8, hi)), drv)
        for ya, yb in zip(pa.Y, pb.Y):
            assert np.min(yb.values - ya.values) >= -EXACT


def test_interior_claim_and_start(tree8):
    claim = bs.TerminalClaim(sc.brownian_rv(tree8, 5))
    pair = bs.solve_bsde(tree8, claim, bs.Driver.constant(0.0))
    assert len(pair.Y) == 6
    assert abs(pair.value) <= EXACT
    tail = bs.solve_bsde(tree8, claim, bs.Driver.constant(0.0), start=2)
    assert tail.start == 2
    assert tail.Y[0].index == 2
    assert tail.Y[0].values.size == 3
    # BsdePair.value averages when the start level has several nodes.
    assert abs(tail.value - float(tail.Y[0].values.mean())) <= EXACT


def test_z_vanishes_on_deterministic_claim(tree8):
    pair = bs.solve_bsde(
        tree8, bs.TerminalClaim.constant(tree8, 1.5), bs.Driver.constant(0.2)
    )
    for zi in pair.Z:
        assert np.max(np.abs(zi.values)) <= EXACT


def test_terminal_claim_constructors(tree8):
    c = bs.TerminalClaim.constant(tree8, 2.0)
    assert c.index == 8
    assert np.array_equal(c.values, np.full(9, 2.0))
    f = bs.TerminalClaim.from_function(tree8, lambda b: 2.0)
    assert np.array_equal(f.values, c.values)


def test_driver_validation():
    with pytest.raises(ValueError):
        bs.Driver(fn=lambda t, y, z: y, depends_on_y=True)  # missing lipschitz
    with pytest.raises(ValueError):
        bs.Driver(fn=lambda t, y, z: z, lipschitz=-1.0, depends_on_z=True)
    zero = bs.Driver.kappa_abs(0.0)
    assert zero.lipschitz == 0.0
    assert zero.kappa_structure == (0.0, True)
    neg = bs.Driver.kappa_abs(-0.5, include_y=False)
    assert neg.lipschitz == 0.5
    assert neg.kappa_structure == (-0.5, False)


def test_non_contractive_step_refused():
    scen = sc.build_scenarios(sc.TimeGrid(1.0, 100), "tree")
    drv = bs.Driver(
        fn=lambda t, y, z: -250.0 * np.asarray(y), lipschitz=250.0, depends_on_y=True
    )
    with pytest.raises(NonContractiveStepError):
        bs.solve_bsde(scen, bs.TerminalClaim.constant(scen, 1.0), drv)


def test_non_finite_driver_output_raises(tree8):
    drv = bs.Driver(
        fn=lambda t, y, z: np.sqrt(np.asarray(y) - 1e6),
        lipschitz=0.5, depends_on_y=True,
    )
    with np.errstate(invalid="ignore"):
        with pytest.raises(FixedPointError):
            bs.solve_bsde(tree8, bs.TerminalClaim.constant(tree8, 1.0), drv)
