"""Command line front end: ``quic3 problem.qtr [options]``.

Exit codes: 0 safe, 1 counterexample, 2 unknown or resource limit, 3 input error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass
from typing import Optional

from .engine import QGEN_MODES, Cex, EngineConfig, ResourceLimit, Safe, Stats, run, validate_verdict
from .problem import SafetyProblem, load_problem
from .smt import make_backend
from .smtlib import ParseError, QuantifierError, const_name, show, sort_smt
from .terms import SortError, free_vars

EXIT_SAFE, EXIT_CEX, EXIT_UNKNOWN, EXIT_INPUT = 0, 1, 2, 3
FORMATS = ("human", "json", "smt2-invariant")


@dataclass(frozen=True)
class RunConfig:
    """Validated run settings; defaults match the command line."""

    max_depth: int = 30
    query_timeout: float = 10.0
    qgen: str = "both"
    max_instances: int = 64
    push_pobs: bool = False
    backend: str = "external"

    def __post_init__(self):
        if self.max_depth < 0:
            raise ValueError("max_depth must be non-negative")
        if self.query_timeout <= 0:
            raise ValueError("query_timeout must be positive")
        if self.qgen not in QGEN_MODES:
            raise ValueError(f"qgen must be one of {', '.join(QGEN_MODES)}")
        if self.max_instances < 1:
            raise ValueError("max_instances must be positive")
        if not (self.backend == "external" or self.backend.startswith(("external:", "enumeration"))):
            raise ValueError(f"unknown backend {self.backend!r}")

    def engine_config(self) -> EngineConfig:
        return EngineConfig(max_depth=self.max_depth, qgen=self.qgen, max_instances=self.max_instances,
                            push_pobs=self.push_pobs)


def stats_record(verdict) -> dict:
    """The depth / lemmas / inv / time columns plus the verdict."""
    st: Stats = verdict.stats
    return {"depth": st.depth, "lemmas": st.lemmas, "inv": st.inv, "time_s": round(st.time_s, 3),
            "verdict": verdict.name}


def invariant_smt2(problem: SafetyProblem, verdict: Safe) -> str:
    lines = [f"(declare-fun {const_name(v)} () {sort_smt(v.sort)})" for v in problem.state_vars]
    lines += [f"(assert {f})" for f in verdict.formulas()]
    return "\n".join(lines) + "\n"


def _value_text(v) -> str:
    if isinstance(v, int):
        return str(v)
    parts = [f"{k}:{x}" for k, x in v.exceptions]
    return "[" + ", ".join(parts + [f"else:{v.default}"]) + "]"


def emit_result(verdict, problem: SafetyProblem, fmt: str = "human", validation: Optional[dict] = None) -> str:
    if fmt not in FORMATS:
        raise ValueError(f"format must be one of {FORMATS}")
    if fmt == "json":
        out = {"problem": problem.name, **stats_record(verdict)}
        if isinstance(verdict, Safe):
            out["invariant"] = verdict.formulas()
        elif isinstance(verdict, Cex):
            out["length"] = verdict.length
            out["trace"] = [{const_name(x): _json_value(m.values[x]) for x in problem.state_vars if x in m.values}
                            for m in verdict.trace]
        else:
            out["reason"] = verdict.reason
        if validation is not None:
            out["validation"] = validation
        return json.dumps(out, indent=2, sort_keys=True) + "\n"
    if fmt == "smt2-invariant":
        if not isinstance(verdict, Safe):
            return f"; no invariant: verdict is {verdict.name}\n"
        return invariant_smt2(problem, verdict)
    lines = [f"verdict: {verdict.name}"]
    if isinstance(verdict, Safe):
        lines.append(f"invariant (frame {verdict.frame}, {len(verdict.invariant)} clauses):")
        lines += [f"  {_closure(b)}" for b in verdict.invariant]
    elif isinstance(verdict, Cex):
        lines.append(f"counterexample of length {verdict.length}:")
        for s, m in enumerate(verdict.trace):
            vals = " ".join(f"{const_name(x)}={_value_text(m.values[x])}" for x in problem.state_vars
                            if x in m.values)
            lines.append(f"  state {s}: {vals}")
    else:
        lines.append(f"reason: {verdict.reason}")
    st = stats_record(verdict)
    lines.append("stats: " + " ".join(f"{k}={v}" for k, v in st.items() if k != "verdict"))
    if validation is not None:
        lines.append("validation: " + " ".join(f"{k}={v}" for k, v in validation.items()))
    return "\n".join(lines) + "\n"


def _closure(b) -> str:
    fv = sorted(free_vars(b))
    if not fv:
        return show(b)
    return "forall " + " ".join(f"v{i}" for i in fv) + ". " + show(b)


def _json_value(v):
    if isinstance(v, int):
        return v
    return {"default": v.default, "entries": {str(k): x for k, x in v.exceptions}}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="quic3", description="Safety checking with quantified lemmas.")
    p.add_argument("file", help="problem file (transition system or linear CHC)")
    p.add_argument("--max-depth", type=int, default=30)
    p.add_argument("--qgen", choices=QGEN_MODES, default="both")
    p.add_argument("--backend", default="external",
                   help="external[:command] or enumeration[:B,K]; QUIC3_SOLVER sets the default command")
    p.add_argument("--timeout", type=float, default=10.0, help="per-query timeout in seconds")
    p.add_argument("--max-instances", type=int, default=64)
    p.add_argument("--push-pobs", action="store_true")
    p.add_argument("--json", action="store_true", help="print a JSON record")
    p.add_argument("--emit-invariant", metavar="OUT", help="write the invariant as SMT-LIB2 assertions")
    p.add_argument("--validate", action="store_true", help="independently check the verdict")
    p.add_argument("--event-log", metavar="PATH", help="write one JSON line per rule application")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv: Optional[list] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = RunConfig(max_depth=args.max_depth, query_timeout=args.timeout, qgen=args.qgen,
                        max_instances=args.max_instances, push_pobs=args.push_pobs, backend=args.backend)
        problem = load_problem(args.file)
    except (ParseError, QuantifierError, SortError, ValueError, OSError) as ex:
        print(f"error: {ex}", file=sys.stderr)
        return EXIT_INPUT
    solver = make_backend(cfg.backend, cfg.query_timeout)
    log_file = open(args.event_log, "w") if args.event_log else None
    try:
        verdict, _ = run(problem, cfg.engine_config(), solver, log_file)
        validation = validate_verdict(verdict, problem, solver) if args.validate else None
    finally:
        if log_file:
            log_file.close()
        if hasattr(solver, "close"):
            solver.close()
    sys.stdout.write(emit_result(verdict, problem, "json" if args.json else "human", validation))
    if args.emit_invariant and isinstance(verdict, Safe):
        with open(args.emit_invariant, "w") as f:
            f.write(invariant_smt2(problem, verdict))
    if isinstance(verdict, Safe):
        return EXIT_SAFE
    if isinstance(verdict, Cex):
        return EXIT_CEX
    assert isinstance(verdict, ResourceLimit)
    return EXIT_UNKNOWN


if __name__ == "__main__":
    sys.exit(main())
