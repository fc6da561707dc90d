"""S-expression reading and SMT-LIB2 printing/parsing of terms."""
from __future__ import annotations

import re
from typing import Optional

from . import terms as T
from .terms import BOOL, INT, ARRAY, Kind, Sort, Term


class ParseError(ValueError):
    def __init__(self, msg: str, line: int = 0, col: int = 0):
        self.msg = msg
        self.line = line
        self.col = col
        where = f"{line}:{col}: " if line else ""
        super().__init__(where + msg)


class QuantifierError(ParseError):
    pass


class Atom(str):
    line = 0
    col = 0


class SList(list):
    line = 0
    col = 0


_TOKEN = re.compile(r"""
    (?P<ws>\s+|;[^\n]*)
  | (?P<lp>\()
  | (?P<rp>\))
  | (?P<str>"(?:[^"]|"")*")
  | (?P<quoted>\|[^|]*\|)
  | (?P<atom>[^\s()";|]+)
""", re.VERBOSE)


def read_sexprs(text: str) -> list:
    """Parse all top-level s-expressions; atoms are :class:`Atom` strings."""
    stack = [SList()]
    pos = 0
    line, line_start = 1, 0
    n = len(text)
    while pos < n:
        m = _TOKEN.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        col = pos - line_start + 1
        kind = m.lastgroup
        tok = m.group()
        if kind == "lp":
            lst = SList()
            lst.line, lst.col = line, col
            stack[-1].append(lst)
            stack.append(lst)
        elif kind == "rp":
            if len(stack) == 1:
                raise ParseError("unbalanced ')'", line, col)
            stack.pop()
        elif kind in ("atom", "str", "quoted"):
            a = Atom(tok[1:-1] if kind == "quoted" else tok)
            a.line, a.col = line, col
            stack[-1].append(a)
        nl = tok.count("\n")
        if nl:
            line += nl
            line_start = pos + tok.rfind("\n") + 1
        pos = m.end()
    if len(stack) != 1:
        lst = stack[-1]
        raise ParseError("unclosed '('", lst.line, lst.col)
    return list(stack[0])


def write_sexpr(e) -> str:
    if isinstance(e, list):
        return "(" + " ".join(write_sexpr(x) for x in e) + ")"
    return str(e)


# ---------------------------------------------------------------------------
# printing

_SIMPLE = re.compile(r"^[A-Za-z~!@$%^&*_+=<>.?/\-][A-Za-z0-9~!@$%^&*_+=<>.?/\-']*$")


def _sym(name: str) -> str:
    return name if _SIMPLE.match(name) and "'" not in name else f"|{name}|"


def const_name(c: Term) -> str:
    """Solver-level symbol of a constant (primed ``x`` is ``x!``)."""
    if c.kind is Kind.PRIMED:
        return _sym(c.name + "!")
    return _sym(c.name)


def sort_smt(s: Sort) -> str:
    return s.value


def _num(v: int) -> str:
    return str(v) if v >= 0 else f"(- {-v})"


def _split_sides(p: Term, c: int):
    """``p ⋈ c`` as ``lhs ⋈ rhs`` with only positive coefficients."""
    coeffs, _ = T.linear(p)
    pos = {a: k for a, k in coeffs.items() if k > 0}
    neg = {a: -k for a, k in coeffs.items() if k < 0}
    if not pos:
        return T.IntVal(-c), T.poly(neg)
    return T.poly(pos), T.poly(neg, c)


def to_smt(t: Term, var_name=None) -> str:
    """SMT-LIB2 text of a term.  Free variables print as ``v<i>``."""
    vn = var_name or (lambda i: f"v{i}")
    cache: dict = {}

    def go(x: Term) -> str:
        r = cache.get(x)
        if r is not None:
            return r
        op = x.op
        if op == "int":
            r = _num(x.payload)
        elif op == "bool":
            r = "true" if x.payload else "false"
        elif op == "var":
            r = vn(x.payload)
        elif op == "const":
            r = const_name(x)
        elif op in ("<=", "="):
            if x.args[0].sort is INT:
                lhs, rhs = _split_sides(x.args[0], x.args[1].payload)
                r = f"({op} {go(lhs)} {go(rhs)})"
            else:
                r = f"(= {go(x.args[0])} {go(x.args[1])})"
        elif op == "dvd":
            k, p, rem = x.args
            r = f"(= (mod {go(p)} {k.payload}) {rem.payload})"
        elif op == "=>":
            r = f"(=> {go(x.args[0])} {go(x.args[1])})"
        else:
            r = "(" + " ".join([op] + [go(a) for a in x.args]) + ")"
        cache[x] = r
        return r

    return go(t)


def forall_smt(t: Term) -> str:
    """Universal closure of ``t`` over its free (Int) variables."""
    fv = sorted(T.free_vars(t))
    body = to_smt(t)
    if not fv:
        return body
    binders = " ".join(f"(v{i} Int)" for i in fv)
    return f"(forall ({binders}) {body})"


def show(t: Term) -> str:
    """Compact human-readable infix rendering."""
    op = t.op
    if op == "int":
        return str(t.payload)
    if op == "bool":
        return "true" if t.payload else "false"
    if op == "var":
        return f"v{t.payload}"
    if op == "const":
        return t.name + ("'" if t.kind is Kind.PRIMED else "")
    if op == "+":
        out = show(t.args[0])
        for a in t.args[1:]:
            if a.op == "int" and a.payload < 0:
                out += f" - {-a.payload}"
            elif a.op == "*" and a.args[0].payload < 0:
                k = -a.args[0].payload
                out += f" - {show(a.args[1]) if k == 1 else f'{k}*{show(a.args[1])}'}"
            else:
                out += f" + {show(a)}"
        return out
    if op == "*":
        k = t.args[0].payload
        return f"-{show(t.args[1])}" if k == -1 else f"{k}*{show(t.args[1])}"
    if op == "select":
        return f"sel({show(t.args[0])}, {show(t.args[1])})"
    if op == "store":
        return f"store({show(t.args[0])}, {show(t.args[1])}, {show(t.args[2])})"
    if op == "ite":
        return f"ite({show(t.args[0])}, {show(t.args[1])}, {show(t.args[2])})"
    if op in ("<=", "="):
        if t.args[0].sort is not INT:
            return f"{show(t.args[0])} = {show(t.args[1])}"
        lhs, rhs = _split_sides(t.args[0], t.args[1].payload)
        if op == "<=" and rhs.op == "+" and rhs.args[-1] is T.IntVal(-1):
            return f"{show(lhs)} < {show(T.Add(rhs, 1))}"
        if op == "<=" and lhs.op == "int" and rhs.op != "int":
            c = lhs.payload
            return f"{c - 1} < {show(rhs)}" if c >= 1 else f"{c} <= {show(rhs)}"
        return f"{show(lhs)} {op} {show(rhs)}"
    if op == "dvd":
        k, p, r = t.args
        return f"{show(p)} mod {k.payload} = {r.payload}"
    if op == "not":
        a = t.args[0]
        if a.op == "=":
            return show(a).replace(" = ", " != ", 1)
        return f"!({show(a)})"
    if op == "and":
        return " & ".join(_paren(a) for a in t.args)
    if op == "or":
        return " | ".join(_paren(a) for a in t.args)
    return f"{op}({', '.join(show(a) for a in t.args)})"


def _paren(t: Term) -> str:
    s = show(t)
    return f"({s})" if t.op in ("and", "or") else s


# ---------------------------------------------------------------------------
# parsing

def parse_sort(e) -> Sort:
    if isinstance(e, str):
        if e == "Int":
            return INT
        if e == "Bool":
            return BOOL
    elif len(e) == 3 and e[0] == "Array" and e[1] == "Int" and e[2] == "Int":
        return ARRAY
    line, col = getattr(e, "line", 0), getattr(e, "col", 0)
    raise ParseError(f"unsupported sort {write_sexpr(e)}", line, col)


_INT_RE = re.compile(r"^[0-9]+$")
_VAR_RE = re.compile(r"^v([0-9]+)$")


def parse_term(e, env: dict, *, allow_vars: bool = False) -> Term:
    """Build a term from an s-expression (or text) over symbols in ``env``.

    ``env`` maps symbol names to terms.  With ``allow_vars``, unbound symbols
    ``v<i>`` denote free variables.
    """
    if isinstance(e, str) and not isinstance(e, Atom):
        es = read_sexprs(e)
        if len(es) != 1:
            raise ParseError("expected exactly one term")
        e = es[0]
    return _Builder(env, allow_vars).term(e)


class _Builder:
    def __init__(self, env: dict, allow_vars: bool):
        self.scopes = [env]
        self.allow_vars = allow_vars

    def err(self, e, msg):
        raise ParseError(msg, getattr(e, "line", 0), getattr(e, "col", 0))

    def lookup(self, a: Atom) -> Optional[Term]:
        for sc in reversed(self.scopes):
            if a in sc:
                return sc[a]
        return None

    def term(self, e) -> Term:
        try:
            return self._term(e)
        except T.SortError as ex:
            self.err(e, f"sort error: {ex}")

    def _term(self, e) -> Term:
        if isinstance(e, str):
            if _INT_RE.match(e):
                return T.IntVal(int(e))
            if e == "true":
                return T.TRUE
            if e == "false":
                return T.FALSE
            t = self.lookup(e)
            if t is not None:
                return t
            m = _VAR_RE.match(e)
            if m and self.allow_vars:
                return T.Var(int(m.group(1)))
            self.err(e, f"unknown symbol {e!r}")
        if not e:
            self.err(e, "empty application")
        head = e[0]
        if isinstance(head, list):
            self.err(e, "unsupported application head")
        args = e[1:]
        if head in ("forall", "exists"):
            raise QuantifierError(f"quantifier '{head}' not allowed here", e.line, e.col)
        if head == "let":
            scope = {}
            for b in args[0]:
                scope[b[0]] = self.term(b[1])
            self.scopes.append(scope)
            try:
                return self.term(args[1])
            finally:
                self.scopes.pop()
        if head == "!":
            return self.term(args[0])
        if head == "=" and len(args) == 2 and isinstance(args[0], list) and args[0] and args[0][0] == "mod":
            p = self.term(args[0][1])
            k = self.term(args[0][2])
            r = self.term(args[1])
            if k.op != "int" or r.op != "int":
                self.err(e, "mod needs literal modulus and residue")
            return T.Dvd(k.payload, p, r.payload)
        xs = [self.term(a) for a in args]
        if head == "+":
            return T.Add(*xs)
        if head == "-":
            if len(xs) == 1:
                return T.Neg(xs[0])
            out = xs[0]
            for x in xs[1:]:
                out = T.Sub(out, x)
            return out
        if head == "*":
            out = xs[0]
            for x in xs[1:]:
                out = T.Mul(out, x)
            return out
        if head in ("<", "<=", ">", ">=", "="):
            fn = {"<": T.Lt, "<=": T.Le, ">": T.Gt, ">=": T.Ge, "=": T.Eq}[head]
            if len(xs) < 2:
                self.err(e, f"'{head}' needs two arguments")
            return T.And(*(fn(a, b) for a, b in zip(xs, xs[1:])))
        if head == "distinct":
            return T.And(*(T.Ne(xs[i], xs[j]) for i in range(len(xs)) for j in range(i + 1, len(xs))))
        if head == "not":
            return T.Not(xs[0])
        if head == "and":
            return T.And(*xs)
        if head == "or":
            return T.Or(*xs)
        if head == "=>":
            out = xs[-1]
            for x in reversed(xs[:-1]):
                out = T.Implies(x, out)
            return out
        if head == "ite":
            return T.Ite(*xs)
        if head == "select":
            return T.Select(xs[0], xs[1])
        if head == "store":
            return T.Store(xs[0], xs[1], xs[2])
        if head == "dvd":
            return T.Dvd(xs[0].payload, xs[1], xs[2].payload)
        self.err(e, f"unsupported operator {head!r}")
