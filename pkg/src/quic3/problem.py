"""Safety problems: the transition-system file format and a linear-CHC reader.

A problem file is a list of s-expressions::

    (declare-state i Int)
    (declare-state A (Array Int Int))
    (init (= i 0))
    (trans (and (< i 10) (= i! (+ i 1)) (= A! (store A i 0))))
    (bad (and (>= i 10) (not (= (select A 0) 0))))

Next-state copies are written with a trailing ``!``.  ``init`` and ``bad``
may mention only current-state names.  Quantifiers are rejected.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from . import terms as T
from .smtlib import (Atom, ParseError, const_name, parse_sort, parse_term,
                     read_sexprs, sort_smt, to_smt)
from .terms import BOOL, Kind, Term


@dataclass(frozen=True)
class SafetyProblem:
    state_vars: tuple
    init: Term
    trans: Term
    bad: Term
    name: str = ""

    @property
    def primed_vars(self) -> tuple:
        return tuple(T.prime(v) for v in self.state_vars)

    def __post_init__(self):
        xs = set(self.state_vars)
        xps = {T.prime(v) for v in xs}
        for what, t, allowed in (("init", self.init, xs), ("bad", self.bad, xs),
                                 ("trans", self.trans, xs | xps)):
            if t.sort is not BOOL:
                raise ParseError(f"{what} is not a formula")
            if not T.is_ground(t):
                raise ParseError(f"{what} has free variables")
            extra = T.consts(t) - allowed
            if extra:
                names = ", ".join(sorted(const_name(c) for c in extra))
                raise ParseError(f"{what} mentions undeclared or misplaced symbols: {names}")


_BAD_NAME = re.compile(r"[!@|]|^v[0-9]+$|^sk")


def parse_problem(text: str, name: str = "") -> SafetyProblem:
    """Parse the transition-system format; raises :class:`ParseError` with a position."""
    exprs = read_sexprs(text)
    if any(isinstance(e, list) and e and e[0] == "declare-fun" for e in exprs) or \
            any(isinstance(e, list) and len(e) == 2 and e[0] == "set-logic" and e[1] == "HORN" for e in exprs):
        return chc_to_problem(exprs, name)
    state: list[Term] = []
    env: dict = {}
    sections: dict = {}
    for e in exprs:
        if not isinstance(e, list) or not e or not isinstance(e[0], str):
            raise ParseError("expected a command", getattr(e, "line", 0), getattr(e, "col", 0))
        head = e[0]
        if head == "declare-state":
            if len(e) != 3 or not isinstance(e[1], str):
                raise ParseError("usage: (declare-state <name> <sort>)", e.line, e.col)
            n = str(e[1])
            if _BAD_NAME.search(n):
                raise ParseError(f"reserved state name {n!r}", e[1].line, e[1].col)
            if n in env:
                raise ParseError(f"duplicate state name {n!r}", e[1].line, e[1].col)
            c = T.Const(n, parse_sort(e[2]))
            if c.sort is BOOL:
                raise ParseError("Bool state variables are not supported; use Int", e[2].line, e[2].col)
            state.append(c)
            env[n] = c
            env[n + "!"] = T.prime(c)
        elif head in ("init", "trans", "bad"):
            if len(e) != 2:
                raise ParseError(f"usage: ({head} <term>)", e.line, e.col)
            if head in sections:
                raise ParseError(f"duplicate ({head} ...)", e.line, e.col)
            scope = env if head == "trans" else {k: v for k, v in env.items() if not k.endswith("!")}
            sections[head] = parse_term(e[1], scope)
        elif head in ("set-info", "set-option", "comment"):
            continue
        else:
            raise ParseError(f"unknown command {head!r}", e.line, e.col)
    for head in ("init", "trans", "bad"):
        if head not in sections:
            raise ParseError(f"missing ({head} ...)")
    return SafetyProblem(tuple(state), sections["init"], sections["trans"], sections["bad"], name)


def load_problem(path) -> SafetyProblem:
    p = Path(path)
    return parse_problem(p.read_text(), p.stem)


def print_problem(p: SafetyProblem) -> str:
    lines = [f"(declare-state {const_name(v)} {sort_smt(v.sort)})" for v in p.state_vars]
    lines.append(f"(init {to_smt(p.init)})")
    lines.append(f"(trans {to_smt(p.trans)})")
    lines.append(f"(bad {to_smt(p.bad)})")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# linear CHC

@dataclass
class _Rule:
    vars: dict
    body_app: Optional[list]
    head_app: Optional[list]
    constraint: list = field(default_factory=list)


def _split_rule(e, pred: str, sorts) -> _Rule:
    if not (isinstance(e, list) and e and e[0] == "assert"):
        raise ParseError("expected (assert ...)", getattr(e, "line", 0), getattr(e, "col", 0))
    f = e[1]
    bound: dict = {}
    if isinstance(f, list) and f and f[0] == "forall":
        for b in f[1]:
            bound[str(b[0])] = parse_sort(b[1])
        f = f[2]
    if isinstance(f, list) and f and f[0] == "=>":
        body, head = f[1], f[2]
    elif isinstance(f, list) and f and f[0] == "not":
        body, head = f[1], Atom("false")
    else:
        body, head = Atom("true"), f
    parts = list(body[1:]) if isinstance(body, list) and body and body[0] == "and" else [body]
    apps = [p for p in parts if isinstance(p, list) and p and p[0] == pred]
    if len(apps) > 1:
        raise ParseError("nonlinear clause", e.line, e.col)
    rest = [p for p in parts if not (isinstance(p, list) and p and p[0] == pred)]
    if isinstance(head, list) and head and head[0] == pred:
        happ = head
    elif head == "false":
        happ = None
    else:
        raise ParseError("clause head must be the predicate or false", e.line, e.col)
    return _Rule(bound, apps[0] if apps else None, happ, rest)


def chc_to_problem(exprs, name: str = "") -> SafetyProblem:
    """Convert a single-predicate linear CHC system into a safety problem."""
    preds = [e for e in exprs if isinstance(e, list) and e and e[0] == "declare-fun"]
    if len(preds) != 1:
        raise ParseError("exactly one uninterpreted predicate is supported")
    pred = str(preds[0][1])
    sorts = [parse_sort(s) for s in preds[0][2]]
    state = [T.Const(f"s{i}", s) for i, s in enumerate(sorts)]
    inits, transs, bads = [], [], []
    extra_vars: list = []
    for r_idx, e in enumerate(x for x in exprs if isinstance(x, list) and x and x[0] == "assert"):
        rule = _split_rule(e, pred, sorts)
        tmp = {n: T.Const(f"chc!{n}", s, Kind.AUX) for n, s in rule.vars.items()}
        rename: dict = {}
        eqs: list = []

        def bind(app, targets):
            for arg, tgt in zip(app[1:], targets):
                t = parse_term(arg, tmp)
                if t.op == "const" and t.kind is Kind.AUX and t not in rename:
                    rename[t] = tgt
                else:
                    eqs.append((tgt, t))

        if rule.body_app is not None:
            bind(rule.body_app, state)
        if rule.head_app is not None:
            bind(rule.head_app, [T.prime(s) for s in state] if rule.body_app is not None else state)
        primed_locals = rule.body_app is not None and rule.head_app is not None
        for n, c in tmp.items():
            if c not in rename:
                safe = re.sub(r"[^A-Za-z0-9_]", "_", n)
                v = T.Const(f"l{r_idx}_{safe}", c.sort)
                extra_vars.append(v)
                rename[c] = T.prime(v) if primed_locals else v
        body = T.And(*(parse_term(p, tmp) for p in rule.constraint),
                     *(T.Eq(a, b) for a, b in eqs))
        body = T.substitute(body, rename)
        if rule.body_app is None:
            inits.append(body)
        elif rule.head_app is None:
            bads.append(body)
        else:
            transs.append(body)
    state_vars = tuple(state + extra_vars)
    return SafetyProblem(state_vars, T.Or(*inits), T.Or(*transs), T.Or(*bads), name)
