"""Independent brute-force checks.

Nothing here calls the engine, the projection or the interpolation code; the
functions are meant to judge those.  ``bmc`` unrolls the transition relation
itself, and the contract checkers decide implications by enumerating a
bounded domain.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

from . import terms as T
from .problem import SafetyProblem
from .smt import (ArrayValue, Backend, DomainBound, DomainTooLarge, Model, Sat, SmtLibSolver,
                  Unknown, Unsat, compile_term, evaluate)
from .terms import ARRAY, BOOL, INT, Kind, Term


class OracleError(RuntimeError):
    """The oracle could not reach a decision."""


# ---------------------------------------------------------------------------
# bounded model checking

@dataclass(frozen=True)
class NoCexUpTo:
    k: int
    unsat_depths: tuple = ()


@dataclass(frozen=True)
class CexAt:
    k: int
    trace: list = field(compare=False)
    unsat_depths: tuple = ()


BmcResult = NoCexUpTo | CexAt


def _copy(x: Term, s: int) -> Term:
    return T.Const(f"{x.name}#{s}", x.sort, Kind.AUX)


def unroll(problem: SafetyProblem, k: int) -> list[Term]:
    """Init(X_0), Tr(X_0, X_1), ..., Tr(X_{k-1}, X_k), Bad(X_k)."""
    xs = problem.state_vars
    at = [{x: _copy(x, s) for x in xs} for s in range(k + 1)]
    parts = [T.substitute(problem.init, at[0])]
    for s in range(k):
        m = dict(at[s])
        m.update({T.prime(x): at[s + 1][x] for x in xs})
        parts.append(T.substitute(problem.trans, m))
    parts.append(T.substitute(problem.bad, at[k]))
    return parts


def bmc(problem: SafetyProblem, k_max: int, solver: Optional[Backend] = None) -> BmcResult:
    """Shortest counterexample of length at most ``k_max``, by ascending unrolling."""
    solver = solver or SmtLibSolver()
    unsat = []
    xs = problem.state_vars
    for k in range(k_max + 1):
        parts = unroll(problem, k)
        res = solver.check_sat(parts, want_model=True)
        if isinstance(res, Unknown):
            raise OracleError(f"solver returned unknown at depth {k}: {res.reason}")
        if isinstance(res, Sat):
            trace = []
            for s in range(k + 1):
                vals = {}
                for x in xs:
                    c = _copy(x, s)
                    vals[x] = res.model.values.get(c, 0 if x.sort is INT else ArrayValue(0))
                trace.append(Model(vals))
            return CexAt(k, trace, tuple(unsat))
        unsat.append(k)
    return NoCexUpTo(k_max, tuple(unsat))


def trace_ok(problem: SafetyProblem, trace: Sequence[Model]) -> bool:
    """Step-exact replay of a state sequence."""
    if not trace or not evaluate(trace[0], problem.init) or not evaluate(trace[-1], problem.bad):
        return False
    for s in range(len(trace) - 1):
        env = dict(trace[s].values)
        env.update({T.prime(x): v for x, v in trace[s + 1].values.items()})
        if not evaluate(env, problem.trans):
            return False
    return True


# ---------------------------------------------------------------------------
# bounded entailment

_CACHE: dict = {}


def _ordered(cs: Iterable[Term]) -> list[Term]:
    return sorted(cs, key=lambda c: c.key)


def _int_hints(t: Term, env: dict) -> list[int]:
    out = {0}
    for x in T.subterms(t):
        if x.sort is INT and T.is_ground(x):
            try:
                v = evaluate(env, x)
            except KeyError:
                continue
            out.update((v - 1, v, v + 1))
    return sorted(out, key=lambda v: (abs(v), v))


def _exists(conc: Term, f, env: dict, ex: list[Term], bound: DomainBound, hint: Optional[dict],
            cap: int) -> Optional[bool]:
    """Search an assignment of ``ex`` making ``conc`` true; None when the search gives up."""
    ints = [c for c in ex if c.sort is INT]
    arrays = [c for c in ex if c.sort is ARRAY]
    bools = [c for c in ex if c.sort is BOOL]
    if hint is not None and all(c in hint for c in ex):
        trial = dict(env)
        trial.update({c: hint[c] for c in ex})
        if f(trial):
            return True
    base = _int_hints(conc, env)
    wide = [v for v in bound.widen(4).ints if v not in base]
    cands = base + wide
    reads = {}
    for x in T.subterms(conc):
        if x.op == "select" and x.args[0] in arrays:
            reads.setdefault(x.args[0], []).append(x.args[1])
    eqs = {}
    for x in T.subterms(conc):
        if x.op == "=" and x.args[0].sort is ARRAY:
            for a, b in ((x.args[0], x.args[1]), (x.args[1], x.args[0])):
                if a in arrays and not (T.consts(b) & set(arrays)):
                    eqs.setdefault(a, []).append(b)
    tried = 0
    for ivals in itertools.product(cands, repeat=len(ints)):
        for bvals in itertools.product((False, True), repeat=len(bools)):
            trial = dict(env)
            trial.update(zip(ints, ivals))
            trial.update(zip(bools, bvals))
            # array witnesses: equal to a mentioned term, or free at the read indices
            options = []
            for a in arrays:
                opts = []
                for b in eqs.get(a, ()):
                    try:
                        opts.append(evaluate(trial, b))
                    except KeyError:
                        pass
                idx = []
                for i in reads.get(a, ()):
                    try:
                        idx.append(evaluate(trial, i))
                    except KeyError:
                        pass
                idx = sorted(set(idx))
                for vals in itertools.product(base[:5] or [0], repeat=len(idx)):
                    opts.append(ArrayValue.make(0, dict(zip(idx, vals))))
                options.append(opts)
            for avals in itertools.product(*options):
                trial.update(zip(arrays, avals))
                tried += 1
                if f(trial):
                    return True
                if tried >= cap:
                    return None
    return None


def bounded_entails(hyp: Term, conc: Term, bound: DomainBound = DomainBound(), *,
                    exists: Iterable[Term] = (), hint: Optional[dict] = None,
                    solver: Optional[Backend] = None, cap: int = 20000) -> bool:
    """Is ``hyp => exists E. conc`` true for every bounded assignment of the other constants?

    The universally quantified constants range over ``bound``.  Witnesses for
    ``E`` are searched by enumeration (the ``hint`` assignment first, then
    small values).  If enumeration gives up, the ground instance is decided
    by ``solver``; without a solver that counts as a failure.
    """
    ex = _ordered(set(exists))
    key = (hyp, conc, tuple(ex), bound)
    if key in _CACHE and hint is None:
        return _CACHE[key]
    univ = _ordered(T.consts(hyp) | (T.consts(conc) - set(ex)))
    if bound.size(univ) > bound.budget:
        raise DomainTooLarge(f"{bound.size(univ)} assignments exceed the budget")
    fh, fc = compile_term(hyp), compile_term(conc)
    ok = True
    for vals in itertools.product(*(bound.domain(c) for c in univ)):
        env = dict(zip(univ, vals))
        if not fh(env):
            continue
        if not ex:
            if not fc(env):
                ok = False
                break
            continue
        found = _exists(conc, fc, env, ex, bound, hint, cap)
        if found is None and solver is not None:
            inst = T.substitute(conc, {c: _value_term(c, env[c]) for c in univ if c.sort is not ARRAY})
            arrays = {c: env[c] for c in univ if c.sort is ARRAY}
            found = _solver_exists(inst, arrays, solver)
        if not found:
            ok = False
            break
    if hint is None:
        _CACHE[key] = ok
    return ok


def _value_term(c: Term, v) -> Term:
    return T.BoolVal(v) if c.sort is BOOL else T.IntVal(v)


def _solver_exists(inst: Term, arrays: dict, solver: Backend) -> bool:
    # every read of a fixed array becomes an ite over its finitely many exceptions
    def read(a: Term, i: Term) -> Term:
        val = arrays[a]
        out = T.IntVal(val.default)
        for k, v in reversed(val.exceptions):
            out = T.Ite(T.Eq(i, k), v, out)
        return out

    def go(x: Term) -> Term:
        if x.op == "select" and x.args[0] in arrays:
            return read(x.args[0], go(x.args[1]))
        if not x.args:
            if x in arrays:
                raise OracleError("fixed array outside a read; cannot decide by solver")
            return x
        return T.rebuild(x, tuple(go(a) for a in x.args))

    res = solver.check_sat([go(inst)], want_model=False)
    if isinstance(res, Unknown):
        raise OracleError(f"solver returned unknown: {res.reason}")
    return isinstance(res, Sat)


def clear_cache():
    _CACHE.clear()


# ---------------------------------------------------------------------------
# contracts

@dataclass
class ContractReport:
    conditions: dict
    notes: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(self.conditions.values())

    def failed(self) -> list:
        return [k for k, v in self.conditions.items() if not v]


def _is_cube(t: Term) -> bool:
    return all(T.is_literal(l) for l in T.conjuncts(t))


def _is_clause(t: Term) -> bool:
    return all(T.is_literal(l) for l in T.disjuncts(t))


def _fresh(c: Term) -> bool:
    return c.kind is Kind.AUX and c.name.startswith("mbp!")


def check_mbp_contract(U: Iterable[Term], phi: Term, M: Model, result, *,
                       bound: DomainBound = DomainBound(-2, 2, 2),
                       solver: Optional[Backend] = None) -> ContractReport:
    """Check conditions (1)-(4) of a projection result; (5) is :func:`finite_range`."""
    U = set(U)
    psi, kept = result.psi, set(result.kept)
    witness = dict(getattr(result, "witness", {}) or {})
    fresh = {c for c in T.consts(psi) if _fresh(c)}
    conds = {}
    conds["1_ground_cube"] = T.is_ground(psi) and _is_cube(psi)
    allowed = (T.consts(phi) - (U - kept)) | kept
    conds["2_constants"] = (kept <= U | fresh and T.consts(psi) <= allowed
                            and not any(c.sort is ARRAY for c in kept)
                            and not any(c.sort is ARRAY and c in U for c in T.consts(psi)))
    hint = {c: M.values[c] for c in U if c in M.values}
    try:
        conds["3_implies_projection"] = bounded_entails(psi, phi, bound, exists=U - kept,
                                                        hint=hint, solver=solver)
    except DomainTooLarge as ex:
        conds["3_implies_projection"] = False
        return ContractReport(conds, [str(ex)])
    env = dict(M.values)
    env.update(witness)
    try:
        conds["4_model"] = evaluate(env, psi) is True
    except KeyError:
        conds["4_model"] = False
    return ContractReport(conds)


def check_itp_contract(A: Term, B: Term, result, *, bound: DomainBound = DomainBound(-3, 3, 2),
                       solver: Optional[Backend] = None) -> ContractReport:
    """Conditions (1)-(4) of a partial interpolant ``(clause, extra)`` of ``(A, B)``."""
    clause, extra = result.clause, set(result.extra)
    conds = {}
    conds["1_ground_clause"] = T.is_ground(clause) and _is_clause(clause)
    cA, cB = T.consts(A), T.consts(B)
    conds["2_constants"] = extra <= (cB - cA) and T.consts(clause) <= ((cA & cB) | extra)
    # A => forall extra. clause; extra is absent from A so it already ranges freely
    ok3 = bounded_entails(A, clause, bound)
    if ok3 and solver is not None:
        ren = {c: T.Const(f"{c.name}#u", c.sort, Kind.AUX) for c in extra}
        res = solver.check_sat([A, T.Not(T.substitute(clause, ren))], want_model=False)
        if isinstance(res, Unknown):
            raise OracleError(f"solver returned unknown: {res.reason}")
        ok3 = isinstance(res, Unsat)
    conds["3_A_implies"] = ok3
    neg_b = {T.Not(l) for l in T.conjuncts(B)}
    syntactic = all(l in neg_b for l in T.disjuncts(clause))
    if syntactic or solver is None:
        conds["4_excludes_B"] = syntactic or bounded_entails(clause, T.Not(B), bound)
    else:
        res = solver.check_sat([clause, B], want_model=False)
        if isinstance(res, Unknown):
            raise OracleError(f"solver returned unknown: {res.reason}")
        conds["4_excludes_B"] = isinstance(res, Unsat)
    return ContractReport(conds)


# ---------------------------------------------------------------------------
# finite ranging

def _fubini(n: int) -> int:
    # number of weak orderings of n items
    a = [1]
    for m in range(1, n + 1):
        a.append(sum(math.comb(m, k) * a[m - k] for k in range(1, m + 1)))
    return a[n]


def case_split_bound(U: Iterable[Term], phi: Term) -> int:
    """Number of decision combinations a projection of ``U`` out of ``phi`` can make.

    The product of: disjunct choices, the side of each disequality, the case
    of each read past a write, the weak ordering of the read indices of
    eliminated arrays, and for each eliminated integer the choice of bound
    and residue.
    """
    U = set(U)
    subs = set(T.subterms(phi))
    n = 1
    for x in subs:
        if x.op == "or":
            n *= len(x.args)
        elif x.op == "not" and x.args[0].op in ("=", "dvd"):
            n *= 2
        elif x.op == "select" and x.args[0].op == "store":
            n *= 3
        elif x.op == "ite":
            n *= 2
    reads = {x.args[1] for x in subs if x.op == "select" and T.consts(x.args[0]) & U}
    stores = {x.args[1] for x in subs if x.op == "store"}
    n *= _fubini(len(reads | stores))
    atoms = [x for x in subs if x.sort is BOOL and x.op in ("<=", "=", "dvd")]
    for u in U:
        if u.sort is not INT:
            continue
        coeffs = [abs(T.linear(l.args[0])[0].get(u, 1)) for l in atoms if l.op in ("<=", "=")
                  and l.args[0].sort is INT]
        mods = [l.args[0].payload for l in atoms if l.op == "dvd"]
        n *= (len(atoms) + len(reads) + 1) * math.lcm(1, *coeffs, *mods)
    return n


def finite_range(U: Iterable[Term], phi: Term, project, bound: DomainBound = DomainBound(-2, 2, 2)):
    """Run ``project(U, phi, M)`` on every bounded model of ``phi``.

    Returns ``(number of models, set of distinct outputs, case-split bound)``.
    """
    cs = _ordered(T.consts(phi))
    if bound.size(cs) > bound.budget:
        raise DomainTooLarge("too many models to exhaust")
    f = compile_term(phi)
    outputs = set()
    n = 0
    for vals in itertools.product(*(bound.domain(c) for c in cs)):
        env = dict(zip(cs, vals))
        if not f(env):
            continue
        n += 1
        r = project(set(U), phi, Model(env))
        outputs.add((r.psi, frozenset(r.kept)))
    return n, outputs, case_split_bound(U, phi)
