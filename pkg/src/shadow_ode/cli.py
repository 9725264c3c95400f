"""Command-line front end.

    shadow-ode solve --field "y*y" --y0 1 --tmax 2 --out sol.csv --svg sol.svg
    shadow-ode osgood --field "2*sqrt(abs(y))" --y0 0 --tmax 1 [--minimal]
    shadow-ode funnel --field "2*sqrt(abs(y))" --pert zero --pert const:1e-3
    shadow-ode recover --field y --y0 1 --known "exp(x)" --known-prime "exp(x)"
    shadow-ode integrate --f "sin(x)" --a 0 --b 3.14159265358979 --tol 1e-3
    shadow-ode check --field y --y0 1 --anchor 0

Exit codes: 0 success, 2 invalid input, 3 numerical failure, 4 domain error.
A JSON summary goes to stdout, diagnostics to stderr.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import asdict, dataclass, field, fields
from typing import Optional

import numpy as np

from . import svg
from .errors import DomainError, ExpressionError, NumericalFailure, ShadowOdeError
from .expr import parse
from .grid import GridSpec, check_bound, integrate, parse_rule
from .osgood import maximal, minimal
from .peano import SolveOptions, residual_check, solve_global
from .perturb import KnownSolution, funnel, recover, verify_roundtrip
from .quad import integrate_certified

COMMANDS = ("solve", "osgood", "funnel", "recover", "integrate", "check")
EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL, EXIT_DOMAIN = 0, 2, 3, 4


@dataclass
class RunConfig:
    command: str = "solve"
    field_text: str = "0"
    dim: int = 1
    x0: float = 0.0
    y0: list = field(default_factory=lambda: [0.0])
    t_max: float = 2.0
    n0: int = 1024
    refinements: int = 8
    tol: float = 1e-4
    spacing: float = 2.0**-7
    radius: float = 1e6
    pert: list = field(default_factory=lambda: ["zero"])
    two_sided: bool = False
    refine: int = 0
    pairs: int = 50
    eps0: float = 1e-2
    jeps: int = 12
    minimal: bool = False
    known: Optional[str] = None
    known_prime: Optional[str] = None
    anchor: int = 0
    f: Optional[str] = None
    a: float = 0.0
    b: float = 1.0
    out: Optional[str] = None
    svg: Optional[str] = None

    def validate(self):
        if self.command not in COMMANDS:
            raise ValueError(f"unknown command {self.command!r}")
        if not isinstance(self.dim, int) or self.dim < 1:
            raise ValueError("dim must be >= 1")
        if self.command != "integrate" and len(self.y0) != self.dim:
            raise ValueError(f"--y0 has {len(self.y0)} values, dim is {self.dim}")
        for name in ("t_max", "tol", "spacing", "radius", "eps0"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be positive and finite, got {v!r}")
        for name in ("x0", "a", "b"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if not all(math.isfinite(v) for v in self.y0):
            raise ValueError("y0 must be finite")
        for name in ("pairs", "jeps", "refinements", "refine", "anchor"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if not self.pert:
            raise ValueError("at least one perturbation rule is required")
        for p in self.pert:
            parse_rule(p)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    def options(self) -> SolveOptions:
        return SolveOptions(
            n0=self.n0,
            refinements=self.refinements,
            t_max=self.t_max,
            tol=self.tol,
            query_spacing=self.spacing,
            escape_radius=self.radius,
            rule=parse_rule(self.pert[-1]),
            two_sided=self.two_sided,
            refine_rounds=self.refine,
        )


def _floats(text: str) -> list:
    try:
        return [float(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    S = argparse.SUPPRESS
    add = common.add_argument
    add("--config", help="JSON config file; flags override its values")
    add("--dump-config", metavar="PATH", help="write the resolved config as JSON")
    add("--field", dest="field_text", default=S, help="';'-separated right-hand side components")
    add("--dim", type=int, default=S)
    add("--x0", type=float, default=S)
    add("--y0", type=_floats, default=S, help="comma-separated initial state")
    add("--tmax", dest="t_max", type=float, default=S)
    add("--n0", type=int, default=S, help="coarsest grid size (power of two)")
    add("--refinements", type=int, default=S, help="ladder refinements J")
    add("--tol", type=float, default=S)
    add("--spacing", type=float, default=S, help="query spacing (dyadic)")
    add("--radius", type=float, default=S, help="base escape radius R0")
    add("--pert", action="append", default=S, help="zero | const:<c> | random:<a>[:<seed>]")
    add("--two-sided", dest="two_sided", action="store_true", default=S)
    add("--refine", type=int, default=S, help="bisection rounds for the blow-up point")
    add("--pairs", type=int, default=S, help="residual check pair count")
    add("--eps0", type=float, default=S)
    add("--jeps", type=int, default=S)
    add("--minimal", action="store_true", default=S)
    add("--known", default=S, help="closed-form known solution y(x)")
    add("--known-prime", dest="known_prime", default=S)
    add("--anchor", type=int, default=S, help="anchor step index for check")
    add("--f", default=S, help="integrand in x")
    add("--a", type=float, default=S)
    add("--b", type=float, default=S)
    add("--out", default=S, help="CSV output path")
    add("--svg", default=S, help="SVG plot output path")

    parser = argparse.ArgumentParser(prog="shadow-ode", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return parser


def resolve_config(argv) -> tuple[RunConfig, Optional[str]]:
    ns = vars(build_parser().parse_args(argv))
    data = {}
    if ns.get("config"):
        with open(ns["config"]) as fh:
            data.update(json.load(fh))
    dump = ns.pop("dump_config", None)
    ns.pop("config", None)
    data.update(ns)
    cfg = RunConfig.from_dict(data)
    if "y0" not in data and cfg.dim != 1:
        cfg.y0 = [0.0] * cfg.dim
    cfg.validate()
    return cfg, dump


def _emit(summary: dict):
    print(json.dumps(summary, sort_keys=True, default=_json_default))


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(type(o))


def _finite_or_none(v):
    return None if v is None or not math.isfinite(v) else float(v)


def run(cfg: RunConfig) -> int:
    handler = globals()[f"_run_{cfg.command}"]
    return handler(cfg)


def _solution_summary(sol) -> dict:
    return {
        "a_est": sol.a_bound if sol.capped else float(sol.a_est),
        "capped": sol.capped,
        "blow_up": sol.blow_up,
        "order": _finite_or_none(sol.order),
        "max_err": sol.max_err,
        "samples": int(len(sol.qs)),
        "provenance": sol.provenance,
    }


def _run_solve(cfg):
    fld = parse(cfg.field_text, cfg.dim)
    sol = solve_global(fld, cfg.x0, cfg.y0, cfg.options())
    summary = {"command": "solve", **_solution_summary(sol)}
    if sol.a_minus is not None:
        summary["a_minus"] = _finite_or_none(sol.a_minus)
        summary["blow_up_left"] = sol.blow_up_left
    summary["max_residual"] = residual_check(sol, fld, cfg.pairs) if cfg.pairs and len(sol.qs) > 1 else None
    if cfg.out:
        sol.to_csv(cfg.out)
    if cfg.svg:
        svg.write(cfg.svg, svg.solution_series(sol, sol.provenance), title=f"y' = {cfg.field_text}")
    _emit(summary)
    return EXIT_OK


def _run_osgood(cfg):
    fld = parse(cfg.field_text, cfg.dim)
    build = minimal if cfg.minimal else maximal
    ext = build(fld, cfg.x0, cfg.y0, cfg.eps0, cfg.jeps, cfg.options())
    sol = ext.base
    summary = {
        "command": "osgood",
        "kind": ext.kind,
        **_solution_summary(sol),
        "segments": [[float(a), float(b)] for a, b in ext.segments],
        "domination_margin": ext.domination_margin,
        "not_globally_resolved": ext.not_globally_resolved,
    }
    if cfg.out:
        sol.to_csv(cfg.out)
    if cfg.svg:
        svg.write(cfg.svg, svg.solution_series(sol, f"y_{ext.kind}"), title=f"y' = {cfg.field_text}")
    _emit(summary)
    return EXIT_OK


def _run_funnel(cfg):
    fld = parse(cfg.field_text, cfg.dim)
    rules = [parse_rule(p) for p in cfg.pert]
    fun = funnel(fld, cfg.x0, cfg.y0, rules, cfg.options())
    summary = {
        "command": "funnel",
        "rules": fun.labels(),
        "clusters": fun.clusters,
        "solutions": [_solution_summary(s) for s in fun.solutions],
    }
    if cfg.out:
        fun.to_csv(cfg.out)
    if cfg.svg:
        series = []
        for i, (rule, sol) in enumerate(zip(fun.rules, fun.solutions)):
            series += svg.solution_series(sol, f"{rule.describe()} (cluster {fun.cluster_of(i)})")
        svg.write(cfg.svg, series, title=f"funnel of y' = {cfg.field_text}")
    _emit(summary)
    return EXIT_OK


def _run_recover(cfg):
    if not cfg.known or not cfg.known_prime:
        raise ValueError("recover needs --known and --known-prime")
    fld = parse(cfg.field_text, cfg.dim)
    known = KnownSolution.from_text(cfg.known, cfg.known_prime, cfg.x0 + cfg.t_max, cfg.dim)
    spec = GridSpec(cfg.x0, tuple(cfg.y0), cfg.n0, cfg.refinements, cfg.t_max)
    pert = recover(fld, known, spec)
    dev = verify_roundtrip(fld, known, pert, spec)
    if cfg.out:
        with open(cfg.out, "w", newline="") as fh:
            fh.write("k,x,t_k,eps_k\n")
            for k, (t, e) in enumerate(zip(pert.t_values, pert.values[:, 0])):
                fh.write(f"{k},{spec.x_at(k)!r},{float(t)!r},{float(e)!r}\n")
    _emit({"command": "recover", "N": spec.N, "steps": spec.budget, "eps_max": pert.eps_max, "max_dev": dev})
    return EXIT_OK


def _run_integrate(cfg):
    if not cfg.f:
        raise ValueError("integrate needs --f")
    integrand = parse(cfg.f, 1, state=False)
    value, cert = integrate_certified(integrand, cfg.a, cfg.b, cfg.tol)
    _emit({
        "command": "integrate",
        "value": float(value),
        "levels": cert.levels,
        "deltas": cert.deltas,
        "order": _finite_or_none(cert.order),
    })
    return EXIT_OK


def _run_check(cfg):
    fld = parse(cfg.field_text, cfg.dim)
    spec = GridSpec(cfg.x0, tuple(cfg.y0), cfg.n0, cfg.refinements, cfg.t_max)
    traj = integrate(fld, spec, parse_rule(cfg.pert[-1]).realize(spec), cfg.radius)
    if cfg.out:
        traj.to_csv(cfg.out)
    cert = check_bound(traj, cfg.anchor, fld)
    summary = {"command": "check", "stop_reason": traj.stop_reason.value, "k_stop": traj.k_stop}
    summary.update({k: v for k, v in asdict(cert).items()})
    _emit(summary)
    return EXIT_OK


def main(argv=None) -> int:
    try:
        cfg, dump = resolve_config(argv)
        if dump:
            with open(dump, "w") as fh:
                json.dump(asdict(cfg), fh, indent=2, sort_keys=True)
                fh.write("\n")
        return run(cfg)
    except SystemExit as exc:  # argparse
        return int(exc.code or 0)
    except DomainError as exc:
        print(f"domain error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except NumericalFailure as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ExpressionError, ShadowOdeError, ValueError, OSError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
