"""Quantified generalization of lemmas.

A candidate is a clause ``g`` with extra free variables and a substitution
``rho`` over them such that ``g rho`` is the original lemma.  A candidate is
admitted at frame ``i + 1`` only if ``F(qi(Q_i)) => forall g'``, checked
ground by skolemizing ``g'``.

Two candidate generators are provided:

* :func:`simple_qgen` abstracts one array index (or index offset), using
  bounds found among the lemma's own literals as guards;
* :func:`arith_qgen` treats literals sharing one shape as data points and
  replaces the conclusion's point by the hull of all points.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from fractions import Fraction
from math import gcd, lcm
from typing import Optional, Sequence

from . import terms as T
from .itp import generalize_lemma
from .smt import Unsat
from .terms import INT, Subst, Term

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class GenCandidate:
    body: Term
    rho: Subst
    kind: str = ""


def fresh_var_index(t: Term, avoid=()) -> int:
    used = set(T.free_vars(t)) | set(avoid)
    i = 0
    while i in used:
        i += 1
    return i


# ---------------------------------------------------------------------------
# simple generalization

def _first_coeff_positive(t: Term) -> bool:
    coeffs, _ = T.linear(t)
    if not coeffs:
        return False
    first = min(coeffs, key=lambda a: a.key)
    return coeffs[first] > 0


def _index_sites(clause: Term) -> list:
    """(select term, abstracted numeral, index with the numeral replaced by a hole) sites."""
    sites = []
    for s in T.subterms(clause):
        if s.op != "select":
            continue
        idx = s.args[1]
        if not T.is_ground(idx):
            continue
        sites.append((s, idx))
        coeffs, c = T.linear(idx)
        if coeffs and c != 0:
            sites.append((s, T.IntVal(c)))
    return sites


def simple_qgen(clause: Term) -> list[GenCandidate]:
    """Candidates that abstract a single index term (or offset) of a ``select``."""
    lits = T.disjuncts(clause)
    out: list[GenCandidate] = []
    seen = set()
    for sel, t in _index_sites(clause):
        v_idx = fresh_var_index(clause)
        v = T.Var(v_idx)
        idx = sel.args[1]
        if t.op == "int":
            c = t.payload
            if idx is t:
                new_idx = v
            else:
                new_idx = T.Add(T.Sub(idx, c), v)
            # rewrite every select that reads at the same index
            rename = {s: T.Select(s.args[0], new_idx) for s in T.subterms(clause)
                      if s.op == "select" and s.args[1] is idx}
            lowers, uppers, rest = [], [], []
            for d in lits:
                H = T.Not(d)
                if d.op == "<=" and not any(x.op == "select" for x in T.subterms(d)):
                    p, k = H.args[0], H.args[1].payload
                    if k - c in (0, -1) and _first_coeff_positive(p):
                        lowers.append(T.Le(T.Sub(p, v), k - c))
                        continue
                    if -k - c in (0, 1) and _first_coeff_positive(T.Neg(p)):
                        uppers.append(T.Le(T.Add(p, v), k + c))
                        continue
                rest.append(T.substitute(d, rename))
            if not lowers and not uppers:
                continue
            if not lowers:
                lowers.append(T.Le(c, v))
            if not uppers:
                uppers.append(T.Le(v, c))
            guards = lowers + uppers
            g = T.Or(*rest, *(T.Not(b) for b in guards))
        else:
            g = T.substitute(clause, {t: v})
            has_lo = has_hi = False
            for d in T.disjuncts(g):
                H = T.Not(d)
                if H.op == "<=" and v_idx in T.free_vars(H):
                    k = T.linear(H.args[0])[0].get(v)
                    if k == 1:
                        has_hi = True
                    elif k == -1:
                        has_lo = True
            if not (has_lo or has_hi):
                continue
            # the abstracted term itself bounds the missing side
            if not has_lo:
                g = T.Or(g, T.Lt(v, t))
            if not has_hi:
                g = T.Or(g, T.Lt(t, v))
        if g in seen or v_idx not in T.free_vars(g):
            continue
        seen.add(g)
        out.append(GenCandidate(g, Subst({v_idx: t}), "simple"))
    return out


# ---------------------------------------------------------------------------
# arithmetic generalization

def _skeleton(t: Term, leaves: list) -> Term:
    """Replace numeric leaves (indices, constant offsets, right-hand sides) by placeholders."""
    def hole(n: int) -> Term:
        leaves.append(n)
        return T.Const(f"hole!{len(leaves) - 1}", INT, T.Kind.AUX)

    def go(x: Term) -> Term:
        op = x.op
        if op == "int":
            return hole(x.payload)
        if op == "select":
            return T.Select(x.args[0], go(x.args[1]))
        if op in ("<=", "="):
            if x.args[0].sort is not INT:
                return x
            coeffs, c = T.linear(x.args[0])
            lhs = T.poly({go(a): k for a, k in coeffs.items()})
            return _raw(op, lhs, hole(x.args[1].payload - c))
        if op == "not":
            return T.Not(go(x.args[0]))
        if op == "+" or op == "*":
            coeffs, c = T.linear(x)
            return T.Add(T.poly({go(a): k for a, k in coeffs.items()}), hole(c))
        return x

    return go(t)


def _raw(op: str, lhs: Term, rhs: Term) -> Term:
    # holes are constants; the smart constructor moves them into the linear part
    return T.Le(lhs, rhs) if op == "<=" else T.Eq(lhs, rhs)


def _pattern(lit: Term):
    leaves: list = []
    sk = _skeleton(lit, leaves)
    return sk, tuple(leaves)


def arith_qgen(clause: Term) -> Optional[GenCandidate]:
    """Generalize the conclusion of ``(psi & phi_0 & ... ) => phi_n`` by a hull."""
    lits = T.disjuncts(clause)
    pats = {}
    for d in lits:
        if d.op == "=" and d.args[0].sort is INT and any(x.op == "select" for x in T.subterms(d)):
            pats[d] = ("concl", _pattern(d))
        elif d.op == "not" and d.args[0].op == "=" and any(x.op == "select" for x in T.subterms(d)):
            pats[d] = ("hyp", _pattern(d.args[0]))
    for concl in lits:
        if pats.get(concl, ("",))[0] != "concl":
            continue
        shape, point_n = pats[concl][1]
        hyps = [d for d in lits if d is not concl and pats.get(d, ("",))[0] == "hyp"
                and pats[d][1][0] is shape and len(pats[d][1][1]) == len(point_n)]
        if not hyps:
            continue
        points = [pats[d][1][1] for d in hyps] + [point_n]
        dim = len(point_n)
        base = fresh_var_index(clause)
        vs = [T.Var(base + k) for k in range(dim)]
        holes = {T.Const(f"hole!{k}", INT, T.Kind.AUX): vs[k] for k in range(dim)}
        p_v = T.substitute(shape, holes)
        hull = ch(points, vs)
        rest = [d for d in lits if d is not concl]
        g = T.Or(*rest, T.Not(hull), p_v)
        rho = Subst({base + k: T.IntVal(point_n[k]) for k in range(dim)})
        return GenCandidate(g, rho, "arith")
    return None


# ---------------------------------------------------------------------------
# hull

def _rref(rows: list, ncols: int, col_order: Sequence[int]) -> list:
    rows = [list(r) for r in rows]
    pivots = []
    r = 0
    for col in col_order:
        piv = next((k for k in range(r, len(rows)) if rows[k][col] != 0), None)
        if piv is None:
            continue
        rows[r], rows[piv] = rows[piv], rows[r]
        pv = rows[r][col]
        rows[r] = [x / pv for x in rows[r]]
        for k in range(len(rows)):
            if k != r and rows[k][col] != 0:
                f = rows[k][col]
                rows[k] = [a - f * b for a, b in zip(rows[k], rows[r])]
        pivots.append(col)
        r += 1
        if r == len(rows):
            break
    return [(col, rows[k]) for k, col in enumerate(pivots)]


def affine_equalities(points: Sequence[Sequence[int]]) -> tuple[list, list]:
    """Integer equalities ``a . x = b`` defining the affine hull of ``points``.

    Returns ``(equalities, free_coords)``; each equality is ``(coeffs, b)``
    with a pivot on one of the last coordinates.
    """
    d = len(points[0])
    p0 = points[0]
    diffs = [[Fraction(p[k] - p0[k]) for k in range(d)] for p in points[1:]]
    span = _rref(diffs, d, range(d)) if diffs else []
    # equality normals are orthogonal to every direction between points
    eq_rows = _complement([row for _, row in span], d)
    red = _rref(eq_rows, d, list(range(d - 1, -1, -1)))
    eqs = []
    pivots = set()
    for col, row in red:
        den = lcm(*(x.denominator for x in row)) if row else 1
        ints = [int(x * den) for x in row]
        g = 0
        for x in ints:
            g = gcd(g, x)
        ints = [x // g for x in ints] if g else ints
        if ints[col] < 0:
            ints = [-x for x in ints]
        b = sum(a * x for a, x in zip(ints, p0))
        eqs.append((ints, b))
        pivots.add(col)
    return eqs, [k for k in range(d) if k not in pivots]


def _complement(rows: list, d: int) -> list:
    """Basis of the vectors orthogonal to every row."""
    if not rows:
        return [[Fraction(int(i == k)) for i in range(d)] for k in range(d)]
    red = _rref(rows, d, range(d))
    piv = {c: row for c, row in red}
    out = []
    for f in range(d):
        if f in piv:
            continue
        vec = [Fraction(0)] * d
        vec[f] = Fraction(1)
        for c, row in piv.items():
            vec[c] = -row[f]
        out.append(vec)
    return out


def ch(points: Sequence[Sequence[int]], variables: Optional[Sequence[Term]] = None) -> Term:
    """Affine hull of the points conjoined with a box on the non-pivot coordinates."""
    if not points:
        raise ValueError("ch needs at least one point")
    d = len(points[0])
    if any(len(p) != d for p in points):
        raise ValueError("points of different dimensions")
    xs = list(variables) if variables is not None else [T.Var(k) for k in range(d)]
    eqs, free = affine_equalities(points)
    parts = []
    for k in free:
        lo = min(p[k] for p in points)
        hi = max(p[k] for p in points)
        parts += [T.Le(lo, xs[k]), T.Le(xs[k], hi)]
    for coeffs, b in eqs:
        parts.append(T.Eq(T.poly({xs[k]: a for k, a in enumerate(coeffs) if a}), b))
    return T.And(*parts)


# ---------------------------------------------------------------------------
# the rule

def candidates(clause: Term, mode: str) -> list[GenCandidate]:
    out = []
    if mode in ("simple", "both"):
        out += simple_qgen(clause)
    if mode in ("arith", "both"):
        c = arith_qgen(clause)
        if c is not None:
            out.append(c)
    return out


def conditions_hold(cand: GenCandidate, body: Term) -> bool:
    """Syntactic side conditions: ``g rho`` is the lemma and no variable is lost."""
    return T.apply_subst(cand.body, cand.rho) is body and T.free_vars(body) <= T.free_vars(cand.body)


def qgen(engine, body: Term, inst: Subst, frame: int) -> tuple[Term, Subst]:
    """Try to replace the lemma ``(body, inst)`` for ``frame`` by a more general one."""
    cfg = engine.config
    cands = candidates(body, cfg.qgen)
    if not cands:
        return body, inst
    if not cfg.qgen_all_candidates:
        cands = cands[:1]
    for cand in cands:
        if not conditions_hold(cand, body):
            engine.audit.qgen_condition_failures += 1
            log.error("qgen candidate violates its side conditions: %r", cand)
            continue
        goal = T.Not(T.skolemize(T.prime(cand.body)))
        A = engine.instantiated_image(frame - 1, goal)
        res = engine.check([("F", A), ("goal", goal)], want_model=False)
        if isinstance(res, Unsat):
            how = "image"
        elif engine.inductive_at(cand.body, frame - 1, check_init=True):
            # relatively inductive candidates are admitted exactly as by push
            how = "relative"
        else:
            continue
        engine.emit("qgen", frame=frame, kind=cand.kind, via=how)
        g = cand.body
        if how == "image":
            # standard generalization of the accepted candidate
            g_sk = generalize_lemma(T.skolemize(T.prime(g)), A, engine.solver, iterative=cfg.itp_iterative)
        else:
            g_sk = T.skolemize(T.prime(g))
        sks = {c for c in T.consts(g_sk) if c.kind is T.Kind.SKOLEM}
        g2, _ = T.abstract(sks, T.unprime(g_sk))
        xi = (inst | cand.rho).restrict(T.free_vars(g2))
        return g2, xi
    return body, inst
