"""Partial interpolation by literal dropping.

``pitp(A, B)`` for an unsatisfiable ``A & B`` with ``B`` a cube returns a
clause made of negated literals of ``B`` together with the set of its
constants that do not occur in ``A``.  Since those constants are absent
from ``A``, ``A => clause`` already gives ``A => forall U. clause``.

The starting point is the trivial interpolant ``not B``.  It is shrunk first
by the solver's unsat core and then by greedy dropping in term order.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

from . import terms as T
from .smt import Backend, Sat, Unknown, Unsat
from .terms import Term

log = logging.getLogger(__name__)


class ItpError(ValueError):
    pass


@dataclass(frozen=True)
class ItpResult:
    clause: Term
    extra: frozenset

    def __iter__(self):
        return iter((self.clause, self.extra))


def trivial_pitp(A: Term, B: Term) -> ItpResult:
    return ItpResult(T.Not(B), frozenset(T.consts(B) - T.consts(A)))


def _unsat(solver: Backend, A: Term, lits, labels=None, want_core=False):
    asserts = [("A", A)] + [(labels[l] if labels else f"b{k}", l) for k, l in enumerate(lits)]
    return solver.check_sat(asserts, want_model=False, want_core=want_core)


def pitp(A: Term, B: Term, solver: Backend, *, use_core: bool = True,
         iterative: bool = False) -> ItpResult:
    """Partial interpolant of ``(A, B)``; raises :class:`ItpError` if ``A & B`` is satisfiable."""
    lits = list(T.conjuncts(B))
    labels = {l: f"b{k}" for k, l in enumerate(lits)}
    res = _unsat(solver, A, lits, labels, want_core=use_core)
    if isinstance(res, Sat):
        raise ItpError("A & B is satisfiable")
    if isinstance(res, Unknown):
        log.info("pitp: unknown on the initial check, using the trivial interpolant")
        return trivial_pitp(A, B)
    keep = lits
    if use_core and res.core:
        core = [l for l in lits if labels[l] in res.core]
        if len(core) < len(lits):
            r2 = _unsat(solver, A, core)
            if isinstance(r2, Unsat):
                keep = core
    keep = _drop(solver, A, keep, iterative)
    clause = T.Or(*(T.Not(l) for l in keep))
    return ItpResult(clause, frozenset(T.consts(clause) - T.consts(A)))


def _drop(solver: Backend, A: Term, lits: list, iterative: bool) -> list:
    """Greedily remove cube literals while ``A & cube`` stays unsat."""
    lits = sorted(lits, key=lambda t: t.key)
    while True:
        changed = False
        for l in list(lits):
            if len(lits) == 1:
                break
            trial = [m for m in lits if m is not l]
            if isinstance(_unsat(solver, A, trial), Unsat):
                lits = trial
                changed = True
        if not (iterative and changed):
            return lits


def generalize_lemma(clause: Term, A: Term, solver: Backend, *, iterative: bool = False) -> Term:
    """Drop literals of ``clause`` while ``A => clause`` stays valid."""
    lits = list(T.disjuncts(clause))
    kept = _drop(solver, A, [T.Not(l) for l in lits], iterative)
    return T.Or(*(T.Not(l) for l in kept))
