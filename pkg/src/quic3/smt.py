"""Quantifier-free satisfiability over LIA + arrays.

Two interchangeable backends:

* :class:`SmtLibSolver` drives an external SMT-LIB2 solver (z3 by default)
  over a pipe, one ``push``/``pop`` scope per query.
* :class:`EnumerationSolver` decides formulas by exhaustive search over a
  bounded domain.  It is only meant as an independent oracle for tests.

Every ``Sat`` answer carries a model that has been re-checked locally with
:func:`evaluate`; a model that fails the check is reported as ``Unknown``.
"""
from __future__ import annotations

import itertools
import logging
import os
import select
import shutil
import subprocess
import time
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence, Union

from . import terms as T
from .smtlib import ParseError, const_name, read_sexprs, sort_smt, to_smt
from .terms import ARRAY, BOOL, INT, Kind, Term

log = logging.getLogger(__name__)

SOLVER_ENV = "QUIC3_SOLVER"


class EvalError(KeyError):
    pass


class QuantifiedQueryError(ValueError):
    """A non-ground assertion reached a quantifier-free solver session."""


@dataclass(frozen=True)
class ArrayValue:
    """A finite array model: ``default`` everywhere except ``exceptions``."""

    default: int
    exceptions: tuple = ()

    @staticmethod
    def make(default: int, exceptions: dict) -> "ArrayValue":
        exc = tuple(sorted((i, v) for i, v in exceptions.items() if v != default))
        return ArrayValue(default, exc)

    def __getitem__(self, i: int) -> int:
        for k, v in self.exceptions:
            if k == i:
                return v
        return self.default

    def store(self, i: int, v: int) -> "ArrayValue":
        exc = dict(self.exceptions)
        exc[i] = v
        return ArrayValue.make(self.default, exc)

    def __repr__(self) -> str:
        inner = ", ".join(f"{i}: {v}" for i, v in self.exceptions)
        return f"[{inner}{', ' if inner else ''}else: {self.default}]"


Value = Union[int, bool, ArrayValue]


class Model:
    """Assignment of integers, booleans and array values to constants."""

    def __init__(self, values: Optional[dict] = None):
        self.values: dict = dict(values or {})

    def __getitem__(self, c: Term) -> Value:
        return self.values[c]

    def __contains__(self, c: Term) -> bool:
        return c in self.values

    def __repr__(self) -> str:
        items = sorted(self.values.items(), key=lambda kv: kv[0].key)
        return "{" + ", ".join(f"{k!r}={v!r}" for k, v in items) + "}"

    @property
    def int_values(self) -> dict:
        return {c: v for c, v in self.values.items() if c.sort is INT}

    @property
    def array_values(self) -> dict:
        return {c: v for c, v in self.values.items() if c.sort is ARRAY}

    def eval(self, t: Term) -> Value:
        return evaluate(self, t)

    def satisfies(self, t: Term) -> bool:
        return evaluate(self, t) is True

    def restrict(self, cs: Iterable[Term]) -> "Model":
        return Model({c: self.values[c] for c in cs if c in self.values})

    def extended(self, more: dict) -> "Model":
        m = dict(self.values)
        m.update(more)
        return Model(m)


def evaluate(M, t: Term, cache: Optional[dict] = None) -> Value:
    """Evaluate a ground term under ``M`` (a :class:`Model` or a dict)."""
    values = M.values if isinstance(M, Model) else M
    if cache is None:
        cache = {}

    def ev(x: Term):
        r = cache.get(x)
        if r is not None:
            return r
        op = x.op
        if op == "int" or op == "bool":
            r = x.payload
        elif op == "const":
            try:
                r = values[x]
            except KeyError:
                raise EvalError(f"unassigned constant {x!r}") from None
        elif op == "var":
            raise EvalError(f"free variable {x!r}")
        elif op == "+":
            r = sum(ev(a) for a in x.args)
        elif op == "*":
            r = x.args[0].payload * ev(x.args[1])
        elif op == "<=":
            r = ev(x.args[0]) <= x.args[1].payload
        elif op == "=":
            r = ev(x.args[0]) == ev(x.args[1])
        elif op == "dvd":
            r = (ev(x.args[1]) - x.args[2].payload) % x.args[0].payload == 0
        elif op == "not":
            r = not ev(x.args[0])
        elif op == "and":
            r = all(ev(a) for a in x.args)
        elif op == "or":
            r = any(ev(a) for a in x.args)
        elif op == "ite":
            r = ev(x.args[1]) if ev(x.args[0]) else ev(x.args[2])
        elif op == "select":
            r = ev(x.args[0])[ev(x.args[1])]
        elif op == "store":
            r = ev(x.args[0]).store(ev(x.args[1]), ev(x.args[2]))
        else:
            raise ValueError(f"cannot evaluate {op}")
        cache[x] = r
        return r

    return ev(t)


def compile_term(t: Term):
    """Compile ``t`` into a closure ``f(env) -> value`` for fast repeated evaluation."""
    memo: dict = {}

    def c(x: Term):
        f = memo.get(x)
        if f is not None:
            return f
        op = x.op
        if op in ("int", "bool"):
            v = x.payload
            f = lambda env, v=v: v
        elif op == "const":
            f = lambda env, x=x: env[x]
        elif op == "+":
            fs = [c(a) for a in x.args]
            f = lambda env, fs=fs: sum(g(env) for g in fs)
        elif op == "*":
            k, g = x.args[0].payload, c(x.args[1])
            f = lambda env: k * g(env)
        elif op == "<=":
            g, b = c(x.args[0]), x.args[1].payload
            f = lambda env: g(env) <= b
        elif op == "=":
            g, h = c(x.args[0]), c(x.args[1])
            f = lambda env: g(env) == h(env)
        elif op == "dvd":
            k, g, r = x.args[0].payload, c(x.args[1]), x.args[2].payload
            f = lambda env: (g(env) - r) % k == 0
        elif op == "not":
            g = c(x.args[0])
            f = lambda env: not g(env)
        elif op == "and":
            fs = [c(a) for a in x.args]
            f = lambda env: all(g(env) for g in fs)
        elif op == "or":
            fs = [c(a) for a in x.args]
            f = lambda env: any(g(env) for g in fs)
        elif op == "ite":
            g, h, k2 = (c(a) for a in x.args)
            f = lambda env: h(env) if g(env) else k2(env)
        elif op == "select":
            g, h = c(x.args[0]), c(x.args[1])
            f = lambda env: g(env)[h(env)]
        elif op == "store":
            g, h, k2 = (c(a) for a in x.args)
            f = lambda env: g(env).store(h(env), k2(env))
        else:
            raise ValueError(f"cannot compile {op}")
        memo[x] = f
        return f

    return c(t)


# ---------------------------------------------------------------------------
# results

@dataclass
class Sat:
    model: Model

    def __bool__(self):
        return True


@dataclass
class Unsat:
    core: frozenset = frozenset()

    def __bool__(self):
        return False


@dataclass
class Unknown:
    reason: str = ""

    def __bool__(self):
        return False


SolverResult = Union[Sat, Unsat, Unknown]


@dataclass
class SolverStats:
    queries: int = 0
    sat: int = 0
    unsat: int = 0
    unknown: int = 0
    time_s: float = 0.0
    nonground_rejected: int = 0

    def record(self, res, dt):
        self.queries += 1
        self.time_s += dt
        if isinstance(res, Sat):
            self.sat += 1
        elif isinstance(res, Unsat):
            self.unsat += 1
        else:
            self.unknown += 1


def _normalize_assertions(assertions) -> list[tuple[str, Term]]:
    out = []
    for i, a in enumerate(assertions):
        if isinstance(a, Term):
            out.append((f"a{i}", a))
        else:
            out.append((str(a[0]), a[1]))
    return out


class Backend:
    """Common front for both backends."""

    def __init__(self):
        self.stats = SolverStats()

    def check_sat(self, assertions: Sequence, *, want_model: bool = True,
                  want_core: bool = False) -> SolverResult:
        """Decide the conjunction of ``assertions``: terms or ``(label, term)`` pairs."""
        labeled = _normalize_assertions(assertions)
        for label, t in labeled:
            if t.sort is not BOOL:
                raise T.SortError(f"assertion {label} is not Bool")
            if not T.is_ground(t):
                self.stats.nonground_rejected += 1
                raise QuantifiedQueryError(f"assertion {label} has free variables: {t!r}")
        t0 = time.perf_counter()
        res = self._check(labeled, want_model, want_core)
        if isinstance(res, Sat) and want_model:
            bad = [lb for lb, t in labeled if not res.model.satisfies(t)]
            if bad:
                log.warning("model check failed on %s", bad)
                res = Unknown(f"model verification failed on {bad}")
        self.stats.record(res, time.perf_counter() - t0)
        return res

    def is_sat(self, *assertions: Term) -> Optional[bool]:
        res = self.check_sat(list(assertions), want_model=False)
        if isinstance(res, Unknown):
            return None
        return isinstance(res, Sat)

    def _check(self, labeled, want_model, want_core) -> SolverResult:
        raise NotImplementedError

    def close(self):
        pass

    def reset(self):
        """Forget session state so later answers do not depend on earlier queries."""

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


# ---------------------------------------------------------------------------
# external SMT-LIB2 process

def default_solver_command() -> list[str]:
    env = os.environ.get(SOLVER_ENV)
    if env:
        return env.split()
    path = shutil.which("z3")
    if path is None:
        raise FileNotFoundError(f"no SMT solver found; set ${SOLVER_ENV} or install z3")
    return [path, "-in", "-smt2"]


def _expand_dvd(t: Term, fresh) -> tuple[Term, list]:
    """Replace divisibility atoms by linear constraints over fresh integers."""
    side = []
    mapping = {}
    for x in T.subterms(t):
        if x.op == "dvd" and x not in mapping:
            k, p, r = x.args[0].payload, x.args[1], x.args[2].payload
            q, s = fresh(), fresh()
            side.append(T.And(T.Eq(p, T.Add(T.Mul(k, q), s)), T.Le(0, s), T.Lt(s, k)))
            mapping[x] = T.Eq(s, r)
    return T.substitute(t, mapping), side


class SmtLibSolver(Backend):
    """An external solver process speaking SMT-LIB2 on stdin/stdout."""

    def __init__(self, command: Optional[Sequence[str]] = None, timeout: float = 10.0,
                 logic: Optional[str] = "QF_AUFLIA"):
        super().__init__()
        self.command = list(command) if command else default_solver_command()
        self.timeout = timeout
        self.logic = logic
        self.proc: Optional[subprocess.Popen] = None
        self._declared: set = set()
        self._buf = b""
        self._aux = 0

    # -- process management
    def _start(self):
        self.proc = subprocess.Popen(self.command, stdin=subprocess.PIPE, stdout=subprocess.PIPE,
                                     stderr=subprocess.STDOUT, bufsize=0)
        self._declared = set()
        self._buf = b""
        self._send("(set-option :print-success false)")
        self._send("(set-option :produce-models true)")
        self._send("(set-option :produce-unsat-cores true)")
        if self.timeout:
            self._send(f"(set-option :timeout {int(self.timeout * 1000)})")
        if self.logic:
            self._send(f"(set-logic {self.logic})")

    def close(self):
        if self.proc is not None:
            try:
                self.proc.stdin.write(b"(exit)\n")
                self.proc.stdin.flush()
                self.proc.wait(timeout=1)
            except Exception:
                self.proc.kill()
            self.proc = None

    def reset(self):
        self.close()

    def _kill(self):
        if self.proc is not None:
            self.proc.kill()
            self.proc.wait()
            self.proc = None

    def __del__(self):
        try:
            self._kill()
        except Exception:
            pass

    def _send(self, line: str):
        self.proc.stdin.write(line.encode() + b"\n")

    def _readline(self, deadline: float) -> str:
        while b"\n" not in self._buf:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise TimeoutError
            r, _, _ = select.select([self.proc.stdout], [], [], remaining)
            if not r:
                raise TimeoutError
            chunk = os.read(self.proc.stdout.fileno(), 65536)
            if not chunk:
                raise EOFError("solver process exited")
            self._buf += chunk
        line, _, self._buf = self._buf.partition(b"\n")
        return line.decode()

    def _read_sexpr(self, deadline: float) -> str:
        text = ""
        depth = 0
        while True:
            line = self._readline(deadline)
            text += line + "\n"
            depth += line.count("(") - line.count(")")
            if depth <= 0 and text.strip():
                return text

    # -- queries
    def _declare(self, c: Term):
        if c not in self._declared:
            self._send(f"(declare-fun {const_name(c)} () {sort_smt(c.sort)})")
            self._declared.add(c)

    def _fresh(self) -> Term:
        self._aux += 1
        return T.Const(f"dvd!{self._aux}", INT, Kind.AUX)

    def raw(self, script: str) -> str:
        """Send arbitrary commands followed by one ``check-sat``; returns its answer."""
        if self.proc is None:
            self._start()
        deadline = time.monotonic() + (self.timeout or 3600) + 5
        self._send("(push 1)")
        self._send(script)
        self._send("(check-sat)")
        try:
            ans = self._read_sexpr(deadline).strip()
        except (TimeoutError, EOFError):
            self._kill()
            return "unknown"
        self._send("(pop 1)")
        return ans

    def _check(self, labeled, want_model, want_core) -> SolverResult:
        if self.proc is None:
            self._start()
        deadline = time.monotonic() + (self.timeout or 3600) + 5
        names = {}
        body = []
        side = []
        for idx, (label, t) in enumerate(labeled):
            t2, extra = _expand_dvd(t, self._fresh)
            side.extend(extra)
            name = f"L{idx}"
            names[name] = label
            body.append((name, t2))
        cs = set()
        for _, t in body:
            cs |= T.consts(t)
        for t in side:
            cs |= T.consts(t)
        try:
            for c in sorted(cs, key=lambda c: c.key):
                self._declare(c)
            self._send("(push 1)")
            for t in side:
                self._send(f"(assert {to_smt(t)})")
            for name, t in body:
                self._send(f"(assert (! {to_smt(t)} :named {name}))")
            self._send("(check-sat)")
            ans = self._read_sexpr(deadline).strip()
            if ans.startswith("(error"):
                log.error("solver error: %s", ans)
                self._send("(pop 1)")
                return Unknown(f"solver error: {ans}")
            if ans == "sat":
                res = Sat(Model())
                if want_model:
                    wanted = sorted((c for _, t in labeled for c in T.consts(t)), key=lambda c: c.key)
                    wanted = list(dict.fromkeys(wanted))
                    try:
                        res = Sat(self._get_model(wanted, deadline))
                    except ParseError as ex:
                        log.warning("could not read model: %s", ex)
                        res = Unknown(f"unreadable model: {ex}")
            elif ans == "unsat":
                core = frozenset(names.values())
                if want_core:
                    self._send("(get-unsat-core)")
                    text = self._read_sexpr(deadline)
                    core = frozenset(names[str(a)] for a in read_sexprs(text)[0] if str(a) in names)
                res = Unsat(core)
            else:
                res = Unknown(ans)
            self._send("(pop 1)")
            return res
        except (TimeoutError, EOFError, BrokenPipeError) as ex:
            log.warning("solver session lost (%s); restarting", type(ex).__name__)
            self._kill()
            return Unknown(f"solver {type(ex).__name__}")

    def _get_model(self, wanted: list, deadline: float) -> Model:
        if not wanted:
            return Model()
        self._send("(get-value (" + " ".join(const_name(c) for c in wanted) + "))")
        text = self._read_sexpr(deadline)
        pairs = read_sexprs(text)[0]
        values = {}
        for c, (_, v) in zip(wanted, pairs):
            values[c] = parse_value(v, c.sort)
        return Model(values)


def _int_of(e) -> int:
    if isinstance(e, str):
        return int(e)
    if len(e) == 2 and e[0] == "-":
        return -_int_of(e[1])
    raise ParseError(f"not an integer value: {e}")


def parse_value(e, sort) -> Value:
    if sort is INT:
        return _int_of(e)
    if sort is BOOL:
        return e == "true"
    return _array_value(e)


def _array_value(e, env=None) -> ArrayValue:
    env = env or {}
    if isinstance(e, str) and e in env:
        return env[e]
    if isinstance(e, list) and e and e[0] == "let":
        inner = dict(env)
        for name, val in e[1]:
            inner[str(name)] = _array_value(val, env)
        return _array_value(e[2], inner)
    if isinstance(e, list) and e and e[0] == "store":
        base = _array_value(e[1], env)
        return base.store(_int_of(e[2]), _int_of(e[3]))
    if isinstance(e, list) and len(e) == 2 and isinstance(e[0], list) and e[0][0] == "as" and e[0][1] == "const":
        return ArrayValue(_int_of(e[1]))
    if isinstance(e, list) and e and e[0] == "lambda":
        # (lambda ((x Int)) (ite (= x c) v ...)) as produced for some array models
        var = e[1][0][0]
        exc, body = {}, e[2]
        while isinstance(body, list) and body and body[0] == "ite":
            cond = body[1]
            if cond[0] == "=" and cond[1] == var:
                k = _int_of(cond[2])
            elif cond[0] == "=" and cond[2] == var:
                k = _int_of(cond[1])
            else:
                raise ParseError(f"unsupported array model {e}")
            exc.setdefault(k, _int_of(body[2]))
            body = body[3]
        return ArrayValue.make(_int_of(body), exc)
    raise ParseError(f"unsupported array model {e}")


# ---------------------------------------------------------------------------
# bounded enumeration

@dataclass(frozen=True)
class DomainBound:
    """Finite domain for exhaustive search.

    Integers range over ``[int_lo, int_hi]``; arrays are 0 outside the index
    range ``[0, index_size)`` and take values from the integer range inside it.
    """

    int_lo: int = -4
    int_hi: int = 4
    index_size: int = 4
    budget: int = 2_000_000

    @property
    def ints(self) -> range:
        return range(self.int_lo, self.int_hi + 1)

    def arrays(self) -> list:
        out = []
        for vals in itertools.product(self.ints, repeat=self.index_size):
            out.append(ArrayValue.make(0, dict(enumerate(vals))))
        return out

    def domain(self, c: Term) -> list:
        if c.sort is INT:
            return list(self.ints)
        if c.sort is BOOL:
            return [False, True]
        return self.arrays()

    def size(self, cs: Iterable[Term]) -> int:
        n = 1
        w = self.int_hi - self.int_lo + 1
        for c in cs:
            n *= w if c.sort is INT else 2 if c.sort is BOOL else w ** self.index_size
        return n

    def widen(self, by: int) -> "DomainBound":
        return DomainBound(self.int_lo - by, self.int_hi + by, self.index_size, self.budget)


class DomainTooLarge(RuntimeError):
    pass


def enumerate_models(formula: Term, bound: DomainBound, cs: Optional[Sequence[Term]] = None):
    """Yield every bounded-domain assignment (as a dict) satisfying ``formula``."""
    if cs is None:
        cs = sorted(T.consts(formula), key=lambda c: c.key)
    if bound.size(cs) > bound.budget:
        raise DomainTooLarge(f"{bound.size(cs)} assignments exceed budget {bound.budget}")
    f = compile_term(formula)
    doms = [bound.domain(c) for c in cs]
    for vals in itertools.product(*doms):
        env = dict(zip(cs, vals))
        if f(env):
            yield env


class EnumerationSolver(Backend):
    """Exhaustive bounded search.  Unsat means unsat *within the bound*."""

    def __init__(self, bound: DomainBound = DomainBound()):
        super().__init__()
        self.bound = bound

    def _check(self, labeled, want_model, want_core) -> SolverResult:
        formula = T.And(*(t for _, t in labeled))
        try:
            for env in enumerate_models(formula, self.bound):
                return Sat(Model(env))
        except DomainTooLarge as ex:
            return Unknown(str(ex))
        return Unsat(frozenset(lb for lb, _ in labeled))


def make_backend(spec: str = "external", timeout: float = 10.0) -> Backend:
    """``external``, ``external:/path/to/solver [flags]`` or ``enumeration[:B,K]``."""
    kind, _, arg = spec.partition(":")
    if kind == "external":
        cmd = arg.split() if arg else None
        if cmd and len(cmd) == 1 and os.path.basename(cmd[0]).startswith("z3"):
            cmd += ["-in", "-smt2"]
        return SmtLibSolver(cmd, timeout=timeout)
    if kind == "enumeration":
        if arg:
            b, _, k = arg.partition(",")
            return EnumerationSolver(DomainBound(-int(b), int(b), int(k or 2)))
        return EnumerationSolver()
    raise ValueError(f"unknown backend {spec!r}")
