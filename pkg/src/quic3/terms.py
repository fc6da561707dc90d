"""Hash-consed sorted terms over linear integer arithmetic and Int->Int arrays.

Every term is built through a normalizing smart constructor, so two terms
are semantically-trivially equal iff they are the same Python object.
Arithmetic atoms are kept in a canonical linear form::

    p <= c        p = c        k | p + r   (written ``(dvd k p r)``)

where ``p`` is a sum of monomials without constant part and with coprime
coefficients.  Boolean structure is kept in negation normal form with
flattened, sorted and de-duplicated ``and``/``or`` arguments.
"""
from __future__ import annotations

import enum
import threading
from collections.abc import Iterable, Iterator, Mapping
from math import gcd
from typing import Optional


class SortError(TypeError):
    pass


class AbstractionError(ValueError):
    pass


class Sort(enum.Enum):
    INT = "Int"
    ARRAY = "(Array Int Int)"
    BOOL = "Bool"

    def __repr__(self) -> str:
        return self.name


INT = Sort.INT
ARRAY = Sort.ARRAY
BOOL = Sort.BOOL


class Kind(enum.IntEnum):
    """Class of an uninterpreted constant."""

    STATE = 0
    PRIMED = 1
    SKOLEM = 2
    AUX = 3  # fresh witnesses, unrolling copies, validation skolems


_RANK = {
    "int": 0, "bool": 1, "var": 2, "const": 3, "*": 4, "+": 5, "select": 6,
    "store": 7, "ite": 8, "=": 9, "<=": 10, "dvd": 11, "not": 12, "and": 13,
    "or": 14,
}


class Term:
    """An immutable, interned term node.  Compare with ``is``/``==`` freely."""

    __slots__ = ("op", "args", "payload", "sort", "key", "_hash",
                 "_fv", "_consts", "_lin")

    def __init__(self, op, args, payload, sort, key, h):
        self.op = op
        self.args = args
        self.payload = payload
        self.sort = sort
        self.key = key
        self._hash = h
        self._fv = None
        self._consts = None
        self._lin = None

    def __hash__(self) -> int:
        return self._hash

    def __eq__(self, other) -> bool:
        return self is other

    def __ne__(self, other) -> bool:
        return self is not other

    def __lt__(self, other: "Term") -> bool:
        return self.key < other.key

    def __repr__(self) -> str:
        from .smtlib import show
        return show(self)

    # convenience accessors
    @property
    def value(self) -> int:
        assert self.op == "int"
        return self.payload

    @property
    def name(self) -> str:
        assert self.op == "const"
        return self.payload[0]

    @property
    def kind(self) -> Kind:
        assert self.op == "const"
        return self.payload[1]

    @property
    def index(self) -> int:
        assert self.op == "var"
        return self.payload

    def is_const(self) -> bool:
        return self.op == "const"

    def is_var(self) -> bool:
        return self.op == "var"

    def is_int(self) -> bool:
        return self.op == "int"

    def is_true(self) -> bool:
        return self is TRUE

    def is_false(self) -> bool:
        return self is FALSE


_table: dict = {}
_lock = threading.Lock()


def _mk(op: str, args: tuple, payload, sort: Sort) -> Term:
    ident = (op, payload, tuple(id(a) for a in args))
    t = _table.get(ident)
    if t is not None:
        return t
    with _lock:
        t = _table.get(ident)
        if t is None:
            key = (_RANK[op], _payload_key(op, payload), tuple(a.key for a in args))
            t = Term(op, args, payload, sort, key, hash(key))
            _table[ident] = t
    return t


def _payload_key(op, payload):
    if op == "const":
        name, kind, sort = payload
        return (int(kind), name, sort.value)
    if op == "bool":
        return int(payload)
    return payload


# ---------------------------------------------------------------------------
# leaves

TRUE = _mk("bool", (), True, BOOL)
FALSE = _mk("bool", (), False, BOOL)


def BoolVal(b: bool) -> Term:
    return TRUE if b else FALSE


def IntVal(v: int) -> Term:
    return _mk("int", (), int(v), INT)


def Var(i: int) -> Term:
    if i < 0:
        raise ValueError("variable index must be a natural number")
    return _mk("var", (), int(i), INT)


def Const(name: str, sort: Sort = INT, kind: Kind = Kind.STATE) -> Term:
    return _mk("const", (), (name, kind, sort), sort)


def Skolem(i: int) -> Term:
    return Const(f"sk!{i}", INT, Kind.SKOLEM)


def Ints(names: str, kind: Kind = Kind.STATE) -> list[Term]:
    return [Const(n, INT, kind) for n in names.split()]


def Array(name: str, kind: Kind = Kind.STATE) -> Term:
    return Const(name, ARRAY, kind)


def skolem_index(c: Term) -> Optional[int]:
    if c.op == "const" and c.kind is Kind.SKOLEM and c.name.startswith("sk!"):
        return int(c.name[3:])
    return None


# ---------------------------------------------------------------------------
# linear arithmetic normal form

def linear(t: Term) -> tuple[dict, int]:
    """Return ``(coeffs, const)`` with ``t == sum(k*a) + const``."""
    if t._lin is None:
        if t.sort is not INT:
            raise SortError(f"not an Int term: {t!r}")
        if t.op == "int":
            lin = ((), t.payload)
        elif t.op == "+":
            acc: dict = {}
            c = 0
            for a in t.args:
                ca, cc = linear(a)
                c += cc
                for atom, k in ca.items():
                    acc[atom] = acc.get(atom, 0) + k
            lin = (tuple((a, k) for a, k in acc.items() if k), c)
        elif t.op == "*":
            k = t.args[0].payload
            ca, cc = linear(t.args[1])
            lin = (tuple((a, k * v) for a, v in ca.items()), k * cc)
        else:
            lin = (((t, 1),), 0)
        t._lin = lin
    coeffs, c = t._lin
    return dict(coeffs), c


def poly(coeffs: Mapping, const: int = 0) -> Term:
    """Canonical Int term for ``sum(k*a) + const``."""
    items = sorted(((a, k) for a, k in coeffs.items() if k), key=lambda p: p[0].key)
    mons = [a if k == 1 else _mk("*", (IntVal(k), a), None, INT) for a, k in items]
    if const:
        mons.append(IntVal(const))
    if not mons:
        return IntVal(const)
    if len(mons) == 1:
        return mons[0]
    return _mk("+", tuple(mons), None, INT)


def _lin_of(*terms_with_sign) -> tuple[dict, int]:
    acc: dict = {}
    c = 0
    for t, s in terms_with_sign:
        if isinstance(t, int):
            c += s * t
            continue
        ct, cc = linear(t)
        c += s * cc
        for a, k in ct.items():
            acc[a] = acc.get(a, 0) + s * k
    return {a: k for a, k in acc.items() if k}, c


def _as_term(x) -> Term:
    if isinstance(x, Term):
        return x
    if isinstance(x, bool):
        return BoolVal(x)
    if isinstance(x, int):
        return IntVal(x)
    raise TypeError(f"cannot convert {x!r} to a term")


def _check_int(*ts):
    for t in ts:
        if t.sort is not INT:
            raise SortError(f"expected Int, got {t.sort.name}: {t!r}")


def Add(*ts) -> Term:
    ts = [_as_term(t) for t in ts]
    _check_int(*ts)
    coeffs, c = _lin_of(*((t, 1) for t in ts))
    return poly(coeffs, c)


def Sub(a, b) -> Term:
    a, b = _as_term(a), _as_term(b)
    _check_int(a, b)
    coeffs, c = _lin_of((a, 1), (b, -1))
    return poly(coeffs, c)


def Neg(a) -> Term:
    a = _as_term(a)
    _check_int(a)
    coeffs, c = _lin_of((a, -1))
    return poly(coeffs, c)


def Mul(a, b) -> Term:
    a, b = _as_term(a), _as_term(b)
    _check_int(a, b)
    if a.op != "int":
        a, b = b, a
    if a.op != "int":
        if b.op == "int":
            a, b = b, a
        else:
            raise SortError(f"nonlinear multiplication: {a!r} * {b!r}")
    k = a.payload
    coeffs, c = linear(b)
    return poly({x: k * v for x, v in coeffs.items()}, k * c)


def _gcd_all(vals: Iterable[int]) -> int:
    g = 0
    for v in vals:
        g = gcd(g, v)
    return g


def _le_lin(coeffs: dict, bound: int) -> Term:
    """sum(coeffs) <= bound"""
    if not coeffs:
        return BoolVal(0 <= bound)
    g = _gcd_all(coeffs.values())
    if g > 1:
        coeffs = {a: k // g for a, k in coeffs.items()}
        bound = bound // g
    return _mk("<=", (poly(coeffs), IntVal(bound)), None, BOOL)


def _eq_lin(coeffs: dict, rhs: int) -> Term:
    if not coeffs:
        return BoolVal(rhs == 0)
    g = _gcd_all(coeffs.values())
    if rhs % g:
        return FALSE
    coeffs = {a: k // g for a, k in coeffs.items()}
    rhs //= g
    first = min(coeffs, key=lambda a: a.key)
    if coeffs[first] < 0:
        coeffs = {a: -k for a, k in coeffs.items()}
        rhs = -rhs
    return _mk("=", (poly(coeffs), IntVal(rhs)), None, BOOL)


def Le(a, b) -> Term:
    a, b = _as_term(a), _as_term(b)
    _check_int(a, b)
    coeffs, c = _lin_of((a, 1), (b, -1))
    return _le_lin(coeffs, -c)


def Lt(a, b) -> Term:
    a, b = _as_term(a), _as_term(b)
    _check_int(a, b)
    coeffs, c = _lin_of((a, 1), (b, -1))
    return _le_lin(coeffs, -c - 1)


def Ge(a, b) -> Term:
    return Le(b, a)


def Gt(a, b) -> Term:
    return Lt(b, a)


def Eq(a, b) -> Term:
    a, b = _as_term(a), _as_term(b)
    if a.sort is not b.sort:
        raise SortError(f"equality between {a.sort.name} and {b.sort.name}")
    if a.sort is INT:
        coeffs, c = _lin_of((a, 1), (b, -1))
        return _eq_lin(coeffs, -c)
    if a.sort is BOOL:
        return Or(And(a, b), And(Not(a), Not(b)))
    if a is b:
        return TRUE
    if b.key < a.key:
        a, b = b, a
    return _mk("=", (a, b), None, BOOL)


def Ne(a, b) -> Term:
    return Not(Eq(a, b))


def Dvd(k: int, t, r: int = 0) -> Term:
    """``t ≡ r (mod k)`` for a positive literal ``k``."""
    t = _as_term(t)
    _check_int(t)
    if k <= 0:
        raise ValueError("modulus must be positive")
    coeffs, c = linear(t)
    coeffs = {a: v % k for a, v in coeffs.items() if v % k}
    r = (r - c) % k
    if not coeffs:
        return BoolVal(r == 0)
    g = gcd(_gcd_all(coeffs.values()), k)
    if g > 1:
        if r % g:
            return FALSE
        k //= g
        r //= g
        coeffs = {a: v // g for a, v in coeffs.items()}
    if k == 1:
        return TRUE
    return _mk("dvd", (IntVal(k), poly(coeffs), IntVal(r)), None, BOOL)


def Select(a: Term, i) -> Term:
    i = _as_term(i)
    if a.sort is not ARRAY:
        raise SortError(f"select on non-array {a!r}")
    _check_int(i)
    while a.op == "store":
        j = a.args[1]
        if j is i:
            return a.args[2]
        if j.op == "int" and i.op == "int":
            a = a.args[0]
            continue
        break
    return _mk("select", (a, i), None, INT)


def Store(a: Term, i, v) -> Term:
    i, v = _as_term(i), _as_term(v)
    if a.sort is not ARRAY:
        raise SortError(f"store on non-array {a!r}")
    _check_int(i, v)
    if a.op == "store" and a.args[1] is i:
        a = a.args[0]
    if v.op == "select" and v.args[0] is a and v.args[1] is i:
        return a
    return _mk("store", (a, i, v), None, ARRAY)


def Ite(c, a, b) -> Term:
    c, a, b = _as_term(c), _as_term(a), _as_term(b)
    if c.sort is not BOOL:
        raise SortError("ite condition must be Bool")
    if a.sort is not b.sort:
        raise SortError("ite branches of different sorts")
    if c is TRUE:
        return a
    if c is FALSE:
        return b
    if a is b:
        return a
    if a.sort is BOOL:
        return Or(And(c, a), And(Not(c), b))
    return _mk("ite", (c, a, b), None, a.sort)


def Not(a) -> Term:
    a = _as_term(a)
    if a.sort is not BOOL:
        raise SortError("not of non-Bool")
    op = a.op
    if op == "bool":
        return BoolVal(not a.payload)
    if op == "not":
        return a.args[0]
    if op == "<=":
        coeffs, _ = linear(a.args[0])
        return _le_lin({x: -k for x, k in coeffs.items()}, -a.args[1].payload - 1)
    if op == "and":
        return Or(*(Not(x) for x in a.args))
    if op == "or":
        return And(*(Not(x) for x in a.args))
    return _mk("not", (a,), None, BOOL)


def is_literal(t: Term) -> bool:
    return t.op in ("=", "<=", "dvd", "const", "bool") or (t.op == "not")


def _junction(op: str, ts, unit: Term, zero: Term) -> Term:
    flat: dict = {}
    stack = [_as_term(t) for t in ts]
    stack.reverse()
    while stack:
        t = stack.pop()
        if t.sort is not BOOL:
            raise SortError(f"{op} of non-Bool {t!r}")
        if t is zero:
            return zero
        if t is unit:
            continue
        if t.op == op:
            stack.extend(reversed(t.args))
            continue
        flat[t] = None
    if not flat:
        return unit
    for t in flat:
        if t.op in ("<=", "not", "=", "dvd", "const") and Not(t) in flat:
            return zero
    if len(flat) == 1:
        return next(iter(flat))
    args = tuple(sorted(flat, key=lambda x: x.key))
    return _mk(op, args, None, BOOL)


def And(*ts) -> Term:
    if len(ts) == 1 and not isinstance(ts[0], (Term, bool, int)):
        ts = tuple(ts[0])
    return _junction("and", ts, TRUE, FALSE)


def Or(*ts) -> Term:
    if len(ts) == 1 and not isinstance(ts[0], (Term, bool, int)):
        ts = tuple(ts[0])
    return _junction("or", ts, FALSE, TRUE)


def Implies(a, b) -> Term:
    return Or(Not(a), b)


# ---------------------------------------------------------------------------
# traversal

def rebuild(t: Term, args: tuple) -> Term:
    """Re-apply the smart constructor of ``t`` to new arguments."""
    op = t.op
    if op == "+":
        return Add(*args)
    if op == "*":
        return Mul(args[0], args[1])
    if op == "<=":
        return Le(args[0], args[1])
    if op == "=":
        return Eq(args[0], args[1])
    if op == "dvd":
        return Dvd(args[0].payload, args[1], args[2].payload)
    if op == "not":
        return Not(args[0])
    if op == "and":
        return And(*args)
    if op == "or":
        return Or(*args)
    if op == "ite":
        return Ite(*args)
    if op == "select":
        return Select(args[0], args[1])
    if op == "store":
        return Store(args[0], args[1], args[2])
    raise ValueError(f"cannot rebuild leaf {op}")


def substitute(t: Term, mapping: Mapping, cache: Optional[dict] = None) -> Term:
    """Simultaneously replace subterms (keys of ``mapping``) by their images."""
    if not mapping:
        return t
    if cache is None:
        cache = {}

    def go(x: Term) -> Term:
        r = mapping.get(x)
        if r is not None:
            return r
        if not x.args:
            return x
        r = cache.get(x)
        if r is None:
            new = tuple(go(a) for a in x.args)
            r = x if all(n is o for n, o in zip(new, x.args)) else rebuild(x, new)
            cache[x] = r
        return r

    return go(t)


def subterms(t: Term) -> Iterator[Term]:
    """All distinct subterms, pre-order, leftmost first."""
    seen = set()
    stack = [t]
    while stack:
        x = stack.pop()
        if x in seen:
            continue
        seen.add(x)
        yield x
        stack.extend(reversed(x.args))


def free_vars(t: Term) -> frozenset:
    """Indices of the free variables occurring in ``t``."""
    if t._fv is None:
        if t.op == "var":
            t._fv = frozenset((t.payload,))
        elif not t.args:
            t._fv = frozenset()
        else:
            acc = frozenset()
            for a in t.args:
                acc |= free_vars(a)
            t._fv = acc
    return t._fv


def consts(t: Term) -> frozenset:
    """Uninterpreted constants occurring in ``t``."""
    if t._consts is None:
        if t.op == "const":
            t._consts = frozenset((t,))
        elif not t.args:
            t._consts = frozenset()
        else:
            acc = frozenset()
            for a in t.args:
                acc |= consts(a)
            t._consts = acc
    return t._consts


def is_ground(t: Term) -> bool:
    return not free_vars(t)


def conjuncts(t: Term) -> tuple:
    if t is TRUE:
        return ()
    return t.args if t.op == "and" else (t,)


def disjuncts(t: Term) -> tuple:
    if t is FALSE:
        return ()
    return t.args if t.op == "or" else (t,)


# ---------------------------------------------------------------------------
# substitutions

class Subst(Mapping):
    """Partial map from variable indices to Int terms.

    ``s1 | s2`` is left-biased: ``(s1 | s2)(x) = s1(x)`` if defined, else
    ``s2(x)``.
    """

    __slots__ = ("_m",)

    def __init__(self, mapping=()):
        m = dict(mapping)
        for k, v in m.items():
            if not isinstance(k, int) or k < 0:
                raise ValueError(f"bad variable index {k!r}")
            if v.sort is not INT:
                raise SortError(f"v{k} is Int but image has sort {v.sort.name}")
        self._m = m

    def __getitem__(self, k: int) -> Term:
        return self._m[k]

    def __iter__(self):
        return iter(sorted(self._m))

    def __len__(self) -> int:
        return len(self._m)

    def __or__(self, other: Mapping) -> "Subst":
        m = dict(other)
        m.update(self._m)
        return Subst(m)

    def __eq__(self, other) -> bool:
        return isinstance(other, Mapping) and dict(self.items()) == dict(other.items())

    def __hash__(self) -> int:
        return hash(tuple(sorted((k, v.key) for k, v in self._m.items())))

    def __repr__(self) -> str:
        inner = ", ".join(f"v{k} -> {v!r}" for k, v in sorted(self._m.items()))
        return "{" + inner + "}"

    def restrict(self, indices: Iterable[int]) -> "Subst":
        idx = set(indices)
        return Subst({k: v for k, v in self._m.items() if k in idx})

    def apply(self, t: Term) -> Term:
        return apply_subst(t, self)


EMPTY = Subst()


def apply_subst(t: Term, sigma: Mapping) -> Term:
    if not sigma:
        return t
    mapping = {}
    for k, v in sigma.items():
        if v.sort is not INT:
            raise SortError(f"v{k} is Int but image has sort {v.sort.name}")
        mapping[Var(k)] = v
    return substitute(t, mapping)


def skolemize(t: Term) -> Term:
    """Replace every free ``v_i`` by the fixed skolem constant ``sk_i``."""
    fv = free_vars(t)
    if not fv:
        return t
    return substitute(t, {Var(i): Skolem(i) for i in fv})


def abstract(U: Iterable[Term], phi: Term) -> tuple[Term, Subst]:
    """``abs(U, phi)``: replace the constants of ``U`` by fresh variables.

    Skolem ``sk_i`` becomes ``v_i``; any other constant takes the lowest index
    not otherwise in use, in order of first (leftmost, depth-first)
    occurrence.
    """
    U = set(U)
    present = [c for c in subterms(phi) if c.op == "const" and c in U]
    if not present:
        return phi, EMPTY
    used = set(free_vars(phi))
    for c in present:
        if c.sort is not INT:
            raise AbstractionError(f"cannot abstract {c.sort.name}-sorted {c!r}")
        i = skolem_index(c)
        if i is not None:
            used.add(i)
    mapping: dict = {}
    sigma: dict = {}
    nxt = 0
    for c in present:
        i = skolem_index(c)
        if i is None:
            while nxt in used:
                nxt += 1
            i = nxt
            used.add(i)
        mapping[c] = Var(i)
        sigma[i] = c
    return substitute(phi, mapping), Subst(sigma)


def _rekind(t: Term, src: Kind, dst: Kind, forbid: Kind) -> Term:
    cs = consts(t)
    if any(c.kind is forbid for c in cs):
        raise ValueError(f"mixed state/primed constants in {t!r}")
    mapping = {c: Const(c.name, c.sort, dst) for c in cs if c.kind is src}
    return substitute(t, mapping)


def prime(t: Term) -> Term:
    return _rekind(t, Kind.STATE, Kind.PRIMED, Kind.PRIMED)


def unprime(t: Term) -> Term:
    return _rekind(t, Kind.PRIMED, Kind.STATE, Kind.STATE)


def rename_consts(t: Term, fn) -> Term:
    """Apply ``fn`` to every constant; ``fn`` returns a term or None (keep)."""
    mapping = {}
    for c in consts(t):
        r = fn(c)
        if r is not None and r is not c:
            mapping[c] = r
    return substitute(t, mapping)
