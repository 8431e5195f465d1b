"""Command line front end.

Four subcommands share one INI config format::

    nebsde solve  --config run.ini [--out DIR] [--seed N]
    nebsde gexp   --config run.ini [--out DIR] [--seed N]
    nebsde price  --config run.ini [--out DIR] [--seed N]
    nebsde verify --config run.ini [--out DIR] [--seed N]

Outputs land in ``--out`` (default: current directory): ``solution.csv``
and ``run.log`` always, ``report.csv`` for ``verify``.  CSV numbers carry
12 significant digits, rows end with LF, and the first line records the
config digest and effective seed, so identical inputs produce
byte-identical files.

Exit codes: 0 success, 1 config problem, 2 infeasible constraint,
3 divergence or non-contractive step.
"""
from __future__ import annotations

import argparse
import configparser
import hashlib
import re
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels, __version__
from . import bsde as bs
from . import expectations as ne
from . import picard as pc
from . import reflection as rf
from . import risk as rk
from . import scenarios as sc
from . import verify as vf
from .errors import (
    ConfigError,
    FixedPointError,
    InfeasibleProblemError,
    NonContractiveStepError,
    PicardDivergenceError,
)

# ---------------------------------------------------------------- expressions

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<sym>[()+\-*/,]))"
)
_FUNCTIONS = {
    "min": (2, np.minimum),
    "max": (2, np.maximum),
    "abs": (1, np.abs),
    "exp": (1, np.exp),
}


class Expression:
    """A parsed arithmetic expression over named variables.

    Supports ``+ - * /``, unary minus, parentheses, and the calls
    ``min(a, b)``, ``max(a, b)``, ``abs(a)``, ``exp(a)``.  Evaluation
    broadcasts over numpy arrays.
    """

    def __init__(self, source: str, ast, names: frozenset):
        self.source = source
        self._ast = ast
        self.names = names

    def __call__(self, **env):
        return _eval_ast(self._ast, env)

    def __repr__(self):
        return f"Expression({self.source!r})"


def _tokenize(source: str):
    pos = 0
    out = []
    while pos < len(source):
        m = _TOKEN.match(source, pos)
        if m is None or m.end() == pos:
            rest = source[pos:].strip()
            if not rest:
                break
            raise ValueError(f"cannot read {rest[:10]!r}")
        pos = m.end()
        if m.lastgroup == "num":
            out.append(("num", float(m.group("num"))))
        elif m.lastgroup == "name":
            out.append(("name", m.group("name")))
        else:
            out.append(("sym", m.group("sym")))
    out.append(("end", ""))
    return out


class _Parser:
    def __init__(self, tokens, allowed):
        self.toks = tokens
        self.k = 0
        self.allowed = allowed
        self.names = set()

    def peek(self):
        return self.toks[self.k]

    def take(self):
        tok = self.toks[self.k]
        self.k += 1
        return tok

    def expect_sym(self, sym):
        kind, val = self.take()
        if kind != "sym" or val != sym:
            raise ValueError(f"expected {sym!r}")

    def expr(self):
        node = self.term()
        while self.peek() == ("sym", "+") or self.peek() == ("sym", "-"):
            _, op = self.take()
            node = ("bin", op, node, self.term())
        return node

    def term(self):
        node = self.factor()
        while self.peek() == ("sym", "*") or self.peek() == ("sym", "/"):
            _, op = self.take()
            node = ("bin", op, node, self.factor())
        return node

    def factor(self):
        if self.peek() == ("sym", "-"):
            self.take()
            return ("neg", self.factor())
        return self.atom()

    def atom(self):
        kind, val = self.take()
        if kind == "num":
            return ("num", val)
        if kind == "name":
            if self.peek() == ("sym", "("):
                if val not in _FUNCTIONS:
                    raise ValueError(f"unknown function {val!r}")
                arity = _FUNCTIONS[val][0]
                self.take()
                args = [self.expr()]
                while self.peek() == ("sym", ","):
                    self.take()
                    args.append(self.expr())
                self.expect_sym(")")
                if len(args) != arity:
                    raise ValueError(f"{val} takes {arity} argument(s)")
                return ("call", val, tuple(args))
            if val not in self.allowed:
                raise ValueError(
                    f"variable {val!r} not allowed here (allowed: {sorted(self.allowed)})"
                )
            self.names.add(val)
            return ("var", val)
        if kind == "sym" and val == "(":
            node = self.expr()
            self.expect_sym(")")
            return node
        raise ValueError(f"unexpected token {val!r}")


def _eval_ast(node, env):
    tag = node[0]
    if tag == "num":
        return node[1]
    if tag == "var":
        return env[node[1]]
    if tag == "neg":
        return -_eval_ast(node[1], env)
    if tag == "bin":
        a = _eval_ast(node[2], env)
        b = _eval_ast(node[3], env)
        op = node[1]
        if op == "+":
            return a + b
        if op == "-":
            return a - b
        if op == "*":
            return a * b
        return a / b
    fn = _FUNCTIONS[node[1]][1]
    return fn(*(_eval_ast(a, env) for a in node[2]))


def parse_expression(source: str, allowed) -> Expression:
    """Parse ``source`` restricted to the variable names in ``allowed``."""
    parser = _Parser(_tokenize(source), frozenset(allowed))
    ast = parser.expr()
    kind, _ = parser.peek()
    if kind != "end":
        raise ValueError("trailing input after expression")
    return Expression(source, ast, frozenset(parser.names))


# ------------------------------------------------------------------- schema

_SCHEMA = {
    "scenario": {
        "horizon", "steps", "mode", "n_paths", "seed", "basis_degree",
    },
    "problem": {
        "payoff", "driver", "driver_lipschitz", "loss", "loss_lower",
        "loss_upper", "loss_shape", "expectation", "kappa", "alpha",
        "gexp_driver", "scale",
    },
    "solver": {
        "n_sub", "picard_tol", "max_picard_iters", "divergence_action",
        "operator_tol", "feasibility_tol",
    },
    "risk": {"kernels", "penalties", "kappa", "q_constant", "q_knots"},
    "market": {"rate", "drift", "volatility"},
    "verify": {"gamma", "floor", "shift", "tilt"},
    "output": {"mean_floor_column"},
}


class _Section:
    """Typed access to one config section with error context."""

    def __init__(self, cfg: configparser.ConfigParser, name: str):
        self.name = name
        self.cfg = cfg

    def _raw(self, key, default=None, required=False):
        if self.cfg.has_option(self.name, key):
            return self.cfg.get(self.name, key)
        if required:
            raise ConfigError("required option missing", key=f"{self.name}.{key}")
        return default

    def text(self, key, default=None, required=False):
        return self._raw(key, default, required)

    def number(self, key, default=None, required=False):
        raw = self._raw(key, None, required)
        if raw is None:
            return default
        try:
            return float(raw)
        except ValueError:
            raise ConfigError(f"not a number: {raw!r}", key=f"{self.name}.{key}") from None

    def integer(self, key, default=None, required=False):
        raw = self._raw(key, None, required)
        if raw is None:
            return default
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(f"not an integer: {raw!r}", key=f"{self.name}.{key}") from None

    def flag(self, key, default=False):
        raw = self._raw(key, None, False)
        if raw is None:
            return default
        low = raw.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"not a boolean: {raw!r}", key=f"{self.name}.{key}")

    def expression(self, key, allowed, default=None, required=False):
        raw = self._raw(key, None, required)
        if raw is None:
            return default
        try:
            return parse_expression(raw, allowed)
        except ValueError as exc:
            raise ConfigError(str(exc), key=f"{self.name}.{key}") from None

    def numbers(self, key, default=None, required=False):
        raw = self._raw(key, None, required)
        if raw is None:
            return default
        try:
            return [float(part) for part in raw.split(",") if part.strip()]
        except ValueError:
            raise ConfigError(f"not a number list: {raw!r}", key=f"{self.name}.{key}") from None


@dataclass
class RunConfig:
    """Everything one run needs, parsed and validated."""

    command: str
    scen: sc.ScenarioSet
    seed: int
    digest: str
    payoff: Expression | None = None
    driver: bs.Driver | None = None
    loss: rf.LossFunction | None = None
    expectation: ne.NonlinearExpectation | None = None
    options: pc.SolveOptions = field(default_factory=pc.SolveOptions)
    rho: rk.RiskMeasure | None = None
    benchmark: rk.Benchmark | None = None
    market: rk.Market | None = None
    verify_params: dict = field(default_factory=dict)
    mean_floor_column: bool = False


def _check_unknown(cfg: configparser.ConfigParser):
    for section in cfg.sections():
        if section not in _SCHEMA:
            raise ConfigError("unknown section", key=section)
        for key in cfg.options(section):
            if key not in _SCHEMA[section]:
                raise ConfigError("unknown option", key=f"{section}.{key}")


def _build_scenario(cfg, seed_override):
    scen_sec = _Section(cfg, "scenario")
    if not cfg.has_section("scenario"):
        raise ConfigError("required section missing", key="scenario")
    horizon = scen_sec.number("horizon", required=True)
    steps = scen_sec.integer("steps", required=True)
    mode = scen_sec.text("mode", "tree")
    seed = scen_sec.integer("seed", 0)
    if seed_override is not None:
        seed = seed_override
    try:
        grid = sc.TimeGrid(horizon, steps)
        if mode == "tree":
            scen = sc.build_scenarios(grid, "tree")
        elif mode == "montecarlo":
            n_paths = scen_sec.integer("n_paths", required=True)
            degree = scen_sec.integer("basis_degree", 3)
            scen = sc.build_scenarios(grid, "montecarlo", n_paths=n_paths,
                                      seed=seed, basis_degree=degree)
        else:
            raise ConfigError(f"unknown mode {mode!r}", key="scenario.mode")
    except ValueError as exc:
        raise ConfigError(str(exc), key="scenario") from None
    return scen, seed


def _build_driver(sec: _Section) -> bs.Driver:
    expr = sec.expression("driver", {"t", "y", "z"}, default=None)
    if expr is None:
        return bs.Driver.constant(0.0)
    dep_y = "y" in expr.names
    dep_z = "z" in expr.names
    if dep_y or dep_z:
        lam = sec.number("driver_lipschitz", required=True)
        if lam <= 0:
            raise ConfigError("must be > 0 for a y/z-dependent driver",
                              key="problem.driver_lipschitz")
    else:
        lam = 0.0

    def fn(t, y, z):
        return expr(t=t, y=np.asarray(y, dtype=float), z=np.asarray(z, dtype=float))

    try:
        return bs.Driver(fn=fn, lipschitz=lam, depends_on_y=dep_y, depends_on_z=dep_z)
    except ValueError as exc:
        raise ConfigError(str(exc), key="problem.driver") from None


def _build_loss(sec: _Section) -> rf.LossFunction:
    expr = sec.expression("loss", {"t", "x", "b"}, required=True)
    lower = sec.number("loss_lower", 1.0)
    upper = sec.number("loss_upper", 1.0)
    shape = sec.text("loss_shape", "general")
    random = "b" in expr.names
    if random:
        fn = lambda t, b, x: expr(t=t, b=b, x=np.asarray(x, dtype=float))
    else:
        fn = lambda t, x: expr(t=t, x=np.asarray(x, dtype=float))
    try:
        return rf.LossFunction(fn=fn, lower=lower, upper=upper, shape=shape, random=random)
    except ValueError as exc:
        raise ConfigError(str(exc), key="problem.loss") from None


def _build_expectation(sec: _Section) -> ne.NonlinearExpectation:
    kind = sec.text("expectation", "classical")
    kappa = sec.number("kappa", 0.0)
    scale = sec.number("scale", 1.0)
    try:
        if kind == "classical":
            return ne.NonlinearExpectation(kind="classical", kappa=kappa, scale=scale)
        if kind == "gexp":
            raw = sec.text("gexp_driver", required=True)
            gexpr = sec.expression("gexp_driver", {"t", "y", "z"}, required=True)
            dep_y = "y" in gexpr.names
            dep_z = "z" in gexpr.names
            if (dep_y or dep_z) and kappa <= 0:
                raise ConfigError("kappa must be > 0 for a state-dependent generator",
                                  key="problem.kappa")

            def gfn(t, y, z):
                return gexpr(t=t, y=np.asarray(y, dtype=float), z=np.asarray(z, dtype=float))

            driver = bs.Driver(fn=gfn, lipschitz=kappa if (dep_y or dep_z) else 0.0,
                               depends_on_y=dep_y, depends_on_z=dep_z)
            return ne.NonlinearExpectation.gexp(driver, kappa=kappa, scale=scale)
        if kind == "alpha-maxmin":
            alpha = sec.number("alpha", 1.0)
            return ne.NonlinearExpectation.alpha_maxmin(alpha=alpha, kappa=kappa)
        raise ConfigError(f"unknown expectation kind {kind!r}", key="problem.expectation")
    except ValueError as exc:
        raise ConfigError(str(exc), key="problem.expectation") from None


def _build_options(cfg) -> pc.SolveOptions:
    if not cfg.has_section("solver"):
        return pc.SolveOptions()
    sec = _Section(cfg, "solver")
    try:
        return pc.SolveOptions(
            n_sub=sec.integer("n_sub", 0),
            picard_tol=sec.number("picard_tol", 1e-8),
            max_picard_iters=sec.integer("max_picard_iters", 100),
            divergence_action=sec.text("divergence_action", "halve-intervals"),
            operator_tol=sec.number("operator_tol", rf.OPERATOR_TOL),
            feasibility_tol=sec.number("feasibility_tol", rf.FEASIBILITY_TOL),
        )
    except ValueError as exc:
        raise ConfigError(str(exc), key="solver") from None


def _build_risk(cfg, grid) -> tuple:
    if not cfg.has_section("risk"):
        raise ConfigError("required section missing", key="risk")
    sec = _Section(cfg, "risk")
    kernels = sec.numbers("kernels", required=True)
    penalties = sec.numbers("penalties", [0.0] * len(kernels))
    kappa = sec.number("kappa", None)
    try:
        rho = rk.RiskMeasure.convex_family(kernels, penalties, kappa)
    except ValueError as exc:
        raise ConfigError(str(exc), key="risk.kernels") from None
    qc = sec.number("q_constant", None)
    qk = sec.text("q_knots", None)
    if (qc is None) == (qk is None):
        raise ConfigError("set exactly one of q_constant / q_knots", key="risk")
    if qc is not None:
        bench = rk.Benchmark.constant(grid, qc)
    else:
        knots = []
        try:
            for part in qk.split(","):
                t_str, v_str = part.split(":")
                knots.append((float(t_str), float(v_str)))
        except ValueError:
            raise ConfigError(f"bad knot list {qk!r}", key="risk.q_knots") from None
        bench = rk.Benchmark.from_knots(grid, knots)
    return rho, bench


def _build_market(cfg) -> rk.Market:
    if not cfg.has_section("market"):
        raise ConfigError("required section missing", key="market")
    sec = _Section(cfg, "market")
    try:
        return rk.Market(
            rate=sec.number("rate", required=True),
            drift=sec.number("drift", required=True),
            volatility=sec.number("volatility", required=True),
        )
    except ValueError as exc:
        raise ConfigError(str(exc), key="market") from None


def load_run_config(path: str, command: str, seed_override=None) -> RunConfig:
    """Read, validate and materialise a run configuration."""
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {path}")
    raw = p.read_bytes()
    cfg = configparser.ConfigParser(interpolation=None)
    try:
        cfg.read_string(raw.decode("utf-8"))
    except (configparser.Error, UnicodeDecodeError) as exc:
        raise ConfigError(f"cannot parse config: {exc}") from None
    _check_unknown(cfg)

    scen, seed = _build_scenario(cfg, seed_override)
    digest = hashlib.sha256(raw + f"|seed={seed}|cmd={command}".encode()).hexdigest()[:16]
    run = RunConfig(command=command, scen=scen, seed=seed, digest=digest)
    run.options = _build_options(cfg)

    prob = _Section(cfg, "problem")
    if command in ("solve", "gexp", "price"):
        if not cfg.has_section("problem"):
            raise ConfigError("required section missing", key="problem")
        payoff = prob.expression("payoff", {"b"}, required=True)
        run.payoff = payoff
    if command == "solve":
        run.driver = _build_driver(prob)
        run.loss = _build_loss(prob)
        run.expectation = _build_expectation(prob)
    if command == "gexp":
        run.expectation = _build_expectation(prob)
    if command == "price":
        run.market = _build_market(cfg)
        run.rho, run.benchmark = _build_risk(cfg, scen.grid)
    if command == "verify":
        vsec = _Section(cfg, "verify")
        run.verify_params = {
            "gamma": vsec.number("gamma", 1.0) if cfg.has_section("verify") else 1.0,
            "floor": vsec.number("floor", 0.0) if cfg.has_section("verify") else 0.0,
            "shift": vsec.number("shift", 0.5) if cfg.has_section("verify") else 0.5,
            "tilt": vsec.number("tilt", 1.0) if cfg.has_section("verify") else 1.0,
        }
    if cfg.has_section("output"):
        run.mean_floor_column = _Section(cfg, "output").flag("mean_floor_column", False)
    return run


# ------------------------------------------------------------------- output

def _fmt(x) -> str:
    if x is None:
        return ""
    x = float(x)
    if np.isnan(x):
        return ""
    return format(x, ".12g")


def _write_solution(path: Path, run: RunConfig, columns: dict):
    """Write the per-index table; all columns are full-grid arrays or None."""
    names = [k for k, v in columns.items() if v is not None]
    nodes = run.scen.grid.nodes
    with open(path, "w", newline="\n") as fh:
        fh.write(f"# digest={run.digest} seed={run.seed}\n")
        fh.write(",".join(["t"] + names) + "\n")
        for i in range(nodes.size):
            row = [_fmt(nodes[i])]
            for name in names:
                col = columns[name]
                row.append(_fmt(col[i]) if i < len(col) else "")
            fh.write(",".join(row) + "\n")


class _RunLog:
    def __init__(self):
        self.lines = []
        self.t0 = time.perf_counter()

    def add(self, text: str):
        self.lines.append(text)

    def write(self, path: Path):
        elapsed = time.perf_counter() - self.t0
        with open(path, "w", newline="\n") as fh:
            for line in self.lines:
                fh.write(line + "\n")
            fh.write(f"elapsed_seconds={elapsed:.3f}\n")


def _log_solution(log: _RunLog, sol: rf.ReflectedSolution):
    log.add(f"flow_total={_fmt(sol.K.total)}")
    log.add(f"skorokhod_residual={_fmt(sol.diagnostics.skorokhod_residual)}")
    log.add(f"min_constraint={_fmt(float(np.min(sol.diagnostics.constraint_values)))}")
    if sol.picard is not None:
        log.add(f"n_sub={sol.picard.n_sub} attempts={sol.picard.attempts}")
        log.add("picard_iterations=" + ",".join(str(n) for n in sol.picard.iterations))


def _run_solve(run: RunConfig, out: Path, log: _RunLog) -> int:
    scen = run.scen
    claim = bs.TerminalClaim.from_function(scen, lambda b: run.payoff(b=b))
    sol = pc.solve_reflected(scen, claim, run.driver, run.loss, run.expectation, run.options)
    floors = None
    if run.mean_floor_column:
        rep = vf.representation_gap(scen, sol, run.driver, run.expectation, run.loss)
        floors = np.append(rep.floors, np.nan)
    columns = {
        "mean_y": sol.mean_values(scen),
        "flow": sol.K.values,
        "constraint": sol.diagnostics.constraint_values,
        "mean_floor": floors,
    }
    _write_solution(out / "solution.csv", run, columns)
    _log_solution(log, sol)
    value = sol.value
    print(_fmt(value))
    log.add(f"value={_fmt(value)}")
    return 0


def _run_gexp(run: RunConfig, out: Path, log: _RunLog) -> int:
    scen = run.scen
    rv = sc.from_terminal_function(scen, lambda b: run.payoff(b=b))
    value = ne.evaluate(run.expectation, scen, rv)
    exp = run.expectation
    if exp.kind == "gexp":
        pair = bs.solve_bsde(scen, bs.TerminalClaim(rv), exp.driver)
        means = np.array([sc.expect(scen, y) for y in pair.Y])
    elif exp.kind == "alpha_maxmin":
        hi = bs.solve_bsde(scen, bs.TerminalClaim(rv), bs.Driver.kappa_abs(exp.kappa, include_y=False))
        lo = bs.solve_bsde(scen, bs.TerminalClaim(rv), bs.Driver.kappa_abs(-exp.kappa, include_y=False))
        means = np.array(
            [
                exp.alpha * sc.expect(scen, a) + (1.0 - exp.alpha) * sc.expect(scen, b)
                for a, b in zip(hi.Y, lo.Y)
            ]
        )
    else:
        cond_means = [sc.expect(scen, rv)] * (scen.grid.steps + 1)
        means = np.array(cond_means)
    columns = {"mean_y": means, "flow": np.zeros(scen.grid.steps + 1), "constraint": None,
               "mean_floor": None}
    _write_solution(out / "solution.csv", run, columns)
    print(_fmt(value))
    log.add(f"value={_fmt(value)}")
    return 0


def _run_price(run: RunConfig, out: Path, log: _RunLog) -> int:
    scen = run.scen
    claim = bs.TerminalClaim.from_function(scen, lambda b: run.payoff(b=b))
    report = rk.superhedge_price(run.market, scen, claim, run.rho, run.benchmark, run.options)
    sol = report.solution
    columns = {
        "mean_y": sol.mean_values(scen),
        "flow": sol.K.values,
        "constraint": sol.diagnostics.constraint_values,
        "mean_floor": None,
    }
    _write_solution(out / "solution.csv", run, columns)
    _log_solution(log, sol)
    for i, ratio in enumerate(report.hedge_ratios):
        finite = ratio[np.isfinite(ratio)]
        if finite.size:
            log.add(
                f"hedge[{i}] mean={_fmt(finite.mean())} "
                f"min={_fmt(finite.min())} max={_fmt(finite.max())}"
            )
    print(_fmt(report.price))
    log.add(f"price={_fmt(report.price)}")
    return 0


def _run_verify(run: RunConfig, out: Path, log: _RunLog) -> int:
    scen = run.scen
    params = run.verify_params
    records = vf.run_structural_checks(scen, **params)
    lines = vf.emit_report(records, csv_path=out / "report.csv", stream=sys.stdout)
    for line in lines:
        log.add(line)

    inst = vf.RampFlowInstance(gamma=params["gamma"], floor=params["floor"], tilt=params["tilt"])
    claim = bs.TerminalClaim.from_function(scen, lambda b: b + params["shift"])
    sol = rf.solve_constant_driver(
        scen, claim, -params["gamma"], inst.loss(), ne.NonlinearExpectation.classical()
    )
    columns = {
        "mean_y": sol.mean_values(scen),
        "flow": sol.K.values,
        "constraint": sol.diagnostics.constraint_values,
        "mean_floor": None,
    }
    _write_solution(out / "solution.csv", run, columns)
    n_fail = sum(1 for r in records if not r.passed)
    log.add(f"checks={len(records)} failed={n_fail}")
    print(f"checks={len(records)} failed={n_fail}")
    return 0


def run(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="nebsde",
        description="Reflected BSDE solvers with nonlinear-expectation and risk constraints.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, helptext in (
        ("solve", "reflect a claim through the mean constraint"),
        ("gexp", "evaluate a nonlinear expectation of the payoff"),
        ("price", "superhedge a claim under the risk constraint"),
        ("verify", "run the structural check suite"),
    ):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", required=True, help="INI run configuration")
        p.add_argument("--out", default=".", help="output directory (default: .)")
        p.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    args = parser.parse_args(argv)

    log = _RunLog()
    out = Path(args.out)
    try:
        run_cfg = load_run_config(args.config, args.command, args.seed)
        out.mkdir(parents=True, exist_ok=True)
        log.add(f"command={args.command}")
        log.add(f"config={args.config}")
        log.add(f"digest={run_cfg.digest}")
        log.add(f"seed={run_cfg.seed}")
        log.add(f"backend={_kernels.BACKEND}")
        log.add(f"version={__version__}")
        handler = {
            "solve": _run_solve,
            "gexp": _run_gexp,
            "price": _run_price,
            "verify": _run_verify,
        }[args.command]
        code = handler(run_cfg, out, log)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except InfeasibleProblemError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        log.add(f"infeasible: {exc}")
        if out.is_dir():
            log.write(out / "run.log")
        return 2
    except (PicardDivergenceError, NonContractiveStepError, FixedPointError) as exc:
        print(f"divergence: {exc}", file=sys.stderr)
        log.add(f"divergence: {exc}")
        if out.is_dir():
            log.write(out / "run.log")
        return 3
    log.write(out / "run.log")
    return code


def main():
    sys.exit(run())
