"""Partial model-based projection for LIA + arrays.

``pmbp(U, phi, M)`` returns a ground cube ``psi`` and the set ``W`` of
constants of ``U`` that could not be projected, such that

* ``M |= psi`` and ``psi => exists (U \\ W). phi``;
* no array constant is ever kept;
* for fixed ``(U, phi)`` only finitely many results exist, because every
  choice below is driven by a finite amount of information about ``M``
  (truth values of atoms, orderings between terms, residues).

Arrays are eliminated first (equality substitution, model-guided
read-over-write, Ackermann reduction of residual reads), then integers
(equality substitution or virtual substitution of the greatest lower bound).
An integer that occurs under a ``select`` or ``store`` and has no unit
equality is kept in ``W``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from math import lcm
from typing import Iterable, Optional

from . import terms as T
from .smt import Model, evaluate
from .terms import ARRAY, BOOL, INT, Kind, Term


class MbpError(ValueError):
    pass


@dataclass(frozen=True)
class ProjectionResult:
    psi: Term
    kept: frozenset
    # model values of the fresh constants introduced for residual reads
    witness: dict = field(default_factory=dict, compare=False)

    def __iter__(self):
        return iter((self.psi, self.kept))


# ---------------------------------------------------------------------------
# implicants

def implicant(phi: Term, M: Model) -> list[Term]:
    """Literals of an ``M``-true implicant of ``phi``, ite-free."""
    values = M.values if isinstance(M, Model) else M
    cache: dict = {}
    out: dict = {}

    def val(t):
        return evaluate(values, t, cache)

    def lits(f: Term):
        if f is T.TRUE:
            return
        if f.op == "and":
            for a in f.args:
                lits(a)
        elif f.op == "or":
            for a in f.args:
                if val(a):
                    lits(a)
                    return
            raise MbpError(f"model does not satisfy {f!r}")
        else:
            if not val(f):
                raise MbpError(f"model does not satisfy literal {f!r}")
            g = elim_ite(f)
            out[g] = None

    def elim_ite(t: Term) -> Term:
        if not any(x.op == "ite" for x in T.subterms(t)):
            return t
        mapping = {}
        for x in T.subterms(t):
            if x.op == "ite" and x not in mapping:
                c = x.args[0]
                if val(c):
                    lits(c)
                    mapping[x] = elim_ite(x.args[1])
                else:
                    lits(T.Not(c))
                    mapping[x] = elim_ite(x.args[2])
        return elim_ite(T.substitute(t, mapping))

    lits(phi)
    return [l for l in out if l is not T.TRUE]


# ---------------------------------------------------------------------------
# projection state

class _Projection:
    def __init__(self, U: Iterable[Term], M: Model, order_split: bool = True):
        self.order_split = order_split
        self.U = set(U)
        self.values = dict(M.values if isinstance(M, Model) else M)
        self.kept: set = set()
        self.fresh_count = 0

    def val(self, t: Term):
        return evaluate(self.values, t)

    def fresh(self, value: int) -> Term:
        c = T.Const(f"mbp!k{self.fresh_count}", INT, Kind.AUX)
        self.fresh_count += 1
        self.values[c] = value
        self.U.add(c)
        return c

    @staticmethod
    def clean(cube) -> list[Term]:
        out: dict = {}
        for l in cube:
            for c in T.conjuncts(l):
                if c is T.FALSE:
                    raise MbpError("projection produced an unsatisfiable literal")
                out[c] = None
        return sorted(out, key=lambda t: t.key)

    def check(self, cube):
        for l in cube:
            if self.val(l) is not True:
                raise MbpError(f"internal: literal {l!r} false in model")

    # -- arrays -------------------------------------------------------------
    def read_over_write(self, cube: list[Term]) -> list[Term]:
        """Rewrite every ``select(store(b, i, v), j)`` by the case ``M`` picks."""
        while True:
            found = None
            for l in cube:
                for x in T.subterms(l):
                    if x.op == "select" and x.args[0].op == "store":
                        found = x
                        break
                if found:
                    break
            if found is None:
                return cube
            st, j = found.args
            b, i, v = st.args
            if self.val(i) == self.val(j):
                repl, side = v, T.Eq(i, j)
            elif not self.order_split:
                repl, side = T.Select(b, j), T.Ne(i, j)
            else:
                # the strict side the model picks generalizes better than a disequality
                side = T.Lt(i, j) if self.val(i) < self.val(j) else T.Lt(j, i)
                repl = T.Select(b, j)
            cube = self.clean([T.substitute(l, {found: repl}) for l in cube] + [side])

    @staticmethod
    def chain(s: Term):
        writes = []
        while s.op == "store":
            writes.append((s.args[1], s.args[2]))
            s = s.args[0]
        writes.reverse()
        return s, writes

    def array_eq_step(self, cube: list[Term], a: Term) -> Optional[list[Term]]:
        """Use one array equality mentioning ``a``; None if there is none."""
        for l in cube:
            if l.op != "=" or l.args[0].sort is not ARRAY or a not in T.consts(l):
                continue
            s, t = l.args
            bs, ws = self.chain(s)
            bt, wt = self.chain(t)
            if bs is bt:
                idx = list(dict.fromkeys([i for i, _ in ws] + [i for i, _ in wt]))
                eqs = [T.Eq(T.Select(s, i), T.Select(t, i)) for i in idx]
                return self.clean([x for x in cube if x is not l] + eqs)
            for (lhs, base, writes, other) in ((s, bs, ws, t), (t, bt, wt, s)):
                if base is not a or a in T.consts(other):
                    continue
                if any(a in T.consts(i) or a in T.consts(v) for i, v in writes):
                    continue
                arr = self.val(a)
                repl = other
                for i, _ in writes:
                    repl = T.Store(repl, i, self.fresh(arr[self.val(i)]))
                new = [T.substitute(x, {a: repl}) for x in cube]
                return self.clean(new)
        return None

    def project_array(self, cube: list[Term], a: Term) -> list[Term]:
        while True:
            cube = self.read_over_write(cube)
            nxt = self.array_eq_step(cube, a)
            if nxt is None:
                break
            cube = nxt
        for l in cube:
            if l.op == "=" and l.args[0].sort is ARRAY and a in T.consts(l):
                raise MbpError(f"unsupported array equality {l!r}")
        # disequalities over a: a can always be made different far away
        cube = [l for l in cube if not (l.op == "not" and l.args[0].op == "=" and
                                        l.args[0].args[0].sort is ARRAY and a in T.consts(l))]
        return self.ackermannize(cube, a)

    def ackermannize(self, cube: list[Term], a: Term) -> list[Term]:
        while True:
            reads = []
            for l in cube:
                for x in T.subterms(l):
                    if x.op == "select" and x.args[0] is a and a not in T.consts(x.args[1]):
                        reads.append(x)
            reads = list(dict.fromkeys(reads))
            if not reads:
                break
            arr = self.val(a)
            classes: dict = {}
            for r in sorted(reads, key=lambda r: r.key):
                classes.setdefault(self.val(r.args[1]), []).append(r)
            mapping = {}
            side = []
            reps = []
            for n in sorted(classes):
                members = classes[n]
                rep = members[0].args[1]
                reps.append(rep)
                k = self.fresh(arr[n])
                for r in members:
                    mapping[r] = k
                    side.append(T.Eq(r.args[1], rep))
            for lo, hi in zip(reps, reps[1:]):
                side.append(T.Lt(lo, hi))
            cube = self.clean([T.substitute(l, mapping) for l in cube] + side)
        if any(a in T.consts(l) for l in cube):
            raise MbpError(f"could not eliminate array {a!r}")
        return cube

    # -- integers -----------------------------------------------------------
    def project_int(self, cube: list[Term], x: Term) -> list[Term]:
        rel = [l for l in cube if x in T.consts(l)]
        if not rel:
            return cube
        rest = [l for l in cube if x not in T.consts(l)]

        def top_coeff(l: Term) -> Optional[int]:
            """Coefficient of x if x occurs only linearly at the top of l."""
            if l.op == "not":
                l = l.args[0]
            if l.op in ("<=", "="):
                p = l.args[0]
            elif l.op == "dvd":
                p = l.args[1]
            else:
                return None
            if p.sort is not INT:
                return None
            coeffs, _ = T.linear(p)
            if any(x in T.consts(a) for a in coeffs if a is not x):
                return None
            return coeffs.get(x)

        coeffs = {l: top_coeff(l) for l in rel}
        # unit equality: substitute everywhere (also under select/store)
        for l in sorted(rel, key=lambda t: t.key):
            if l.op == "=" and coeffs[l] in (1, -1):
                p_coeffs, _ = T.linear(l.args[0])
                b = p_coeffs.pop(x)
                sol = T.Mul(b, T.Sub(l.args[1], T.poly(p_coeffs)))
                return self.clean(rest + [T.substitute(m, {x: sol}) for m in rel if m is not l])
        if any(c is None for c in coeffs.values()):
            self.kept.add(x)
            return cube
        # model-guided case splits on disequalities and negated divisibility
        lits = []
        for l in rel:
            if l.op == "not" and l.args[0].op == "=":
                p, c = l.args[0].args
                lits.append(T.Lt(p, c) if self.val(p) < c.payload else T.Gt(p, c))
            elif l.op == "not" and l.args[0].op == "dvd":
                k, p, _ = l.args[0].args
                lits.append(T.Dvd(k.payload, p, self.val(p) % k.payload))
            else:
                lits.append(l)
        lits = [l for l in self.clean(lits) if l is not T.TRUE]
        lits_x = [l for l in lits if x in T.consts(l)]
        rest += [l for l in lits if x not in T.consts(l)]

        def xcoef(l):
            p = l.args[1] if l.op == "dvd" else l.args[0]
            return T.linear(p)[0][x]

        L = 1
        for l in lits_x:
            L = lcm(L, abs(xcoef(l)))
        y_val = L * self.val(x)

        def rest_of(p: Term) -> Term:
            c, k = T.linear(p)
            c.pop(x, None)
            return T.poly(c, k)

        def with_y(l: Term, Y: Term) -> Term:
            """``l`` with ``L*x`` replaced by the term ``Y``."""
            if l.op == "dvd":
                k, p, r = l.args
                b = xcoef(l)
                m = L // abs(b)
                sgn = 1 if b > 0 else -1
                return T.Dvd(k.payload * m, T.Add(T.Mul(m, rest_of(p)), T.Mul(sgn, Y)), r.payload * m)
            p, c = l.args
            b = xcoef(l)
            m = L // abs(b)
            sgn = 1 if b > 0 else -1
            lhs = T.Add(T.Mul(m, rest_of(p)), T.Mul(sgn, Y))
            rhs = m * c.payload
            return T.Le(lhs, rhs) if l.op == "<=" else T.Eq(lhs, rhs)

        def finish(Y: Term) -> list[Term]:
            new = [with_y(l, Y) for l in lits_x]
            if L > 1:
                new.append(T.Dvd(L, Y, 0))
            return self.clean(rest + new)

        eqs = [l for l in lits_x if l.op == "="]
        if eqs:
            l = min(eqs, key=lambda t: t.key)
            p, c = l.args
            b = xcoef(l)
            m = L // abs(b)
            sgn = 1 if b > 0 else -1
            Y = T.Mul(sgn, T.Sub(m * c.payload, T.Mul(m, rest_of(p))))
            return finish(Y)
        lowers, uppers = [], []
        for l in lits_x:
            if l.op != "<=":
                continue
            p, c = l.args
            b = xcoef(l)
            m = L // abs(b)
            bound = T.Mul(m, T.Sub(c.payload, rest_of(p)))
            if b > 0:
                uppers.append(bound)
            else:
                lowers.append(T.Neg(bound))
        D = L
        for l in lits_x:
            if l.op == "dvd":
                D = lcm(D, l.args[0].payload * (L // abs(xcoef(l))))
        if lowers:
            best = max(sorted(set(lowers), key=lambda t: t.key), key=lambda t: self.val(t))
            delta = (y_val - self.val(best)) % D
            Y = T.Add(best, delta)
        elif uppers:
            best = min(sorted(set(uppers), key=lambda t: t.key), key=lambda t: self.val(t))
            delta = (self.val(best) - y_val) % D
            Y = T.Sub(best, delta)
        else:
            Y = T.IntVal(y_val % D)
        return finish(Y)

    # -- driver -------------------------------------------------------------
    def run(self, cube: list[Term]) -> list[Term]:
        cube = self.clean(cube)
        for c in sorted((c for c in self.U if c.sort is BOOL), key=lambda c: c.key):
            v = T.BoolVal(self.values[c]) if c in self.values else None
            if v is not None:
                cube = self.clean([T.substitute(l, {c: v}) for l in cube])
        while True:
            arrays = sorted((c for l in cube for c in T.consts(l) if c.sort is ARRAY and c in self.U),
                            key=lambda c: c.key)
            if not arrays:
                break
            cube = self.project_array(cube, arrays[0])
        while True:
            ints = sorted({c for l in cube for c in T.consts(l)
                           if c.sort is INT and c in self.U and c not in self.kept},
                          key=lambda c: c.key)
            if not ints:
                break
            cube = self.project_int(cube, ints[0])
        cube = [l for l in cube if l is not T.TRUE]
        self.check(cube)
        return cube


# ---------------------------------------------------------------------------
# public API

def pmbp(U: Iterable[Term], phi: Term, M: Model, *, order_split: bool = True) -> ProjectionResult:
    """Partial model-based projection of ``U`` out of ``phi`` under ``M``.

    With ``order_split`` a read past a write at a different index records the
    strict order of the two indices in ``M`` rather than just ``i != j``.
    """
    if not T.is_ground(phi):
        raise MbpError("pmbp needs a ground formula")
    proj = _Projection(U, M, order_split)
    cube = proj.run(implicant(phi, M))
    psi = T.And(*cube)
    present = T.consts(psi)
    kept = frozenset(c for c in proj.kept if c in present)
    fresh = {c: proj.values[c] for c in present if c.kind is Kind.AUX and c.name.startswith("mbp!")}
    return ProjectionResult(psi, kept, fresh)


def lia_project(u: Term, cube, M: Model) -> list[Term]:
    """Eliminate one Int constant from a cube; returns the new literal list."""
    proj = _Projection({u}, M)
    lits = list(T.conjuncts(cube)) if isinstance(cube, Term) else list(cube)
    out = proj.project_int(proj.clean(lits), u)
    if u in proj.kept:
        raise MbpError(f"{u!r} occurs non-linearly")
    out = [l for l in out if l is not T.TRUE]
    proj.check(out)
    return out


def array_project(a: Term, cube, M: Model) -> tuple[list[Term], frozenset]:
    """Eliminate one array constant; returns the literals and the fresh witnesses."""
    proj = _Projection({a}, M)
    lits = list(T.conjuncts(cube)) if isinstance(cube, Term) else list(cube)
    out = proj.clean(proj.read_over_write(proj.clean(lits)))
    out = proj.project_array(out, a)
    out = [l for l in out if l is not T.TRUE]
    proj.check(out)
    fresh = frozenset(c for l in out for c in T.consts(l) if c.kind is Kind.AUX and c.name.startswith("mbp!"))
    return out, fresh
