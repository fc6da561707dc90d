"""The QUIC3 search: quantified proof obligations over a quantified trace.

A proof obligation (POB) ``<m, sigma, i>`` is a cube ``m`` over state
constants and free Int variables, a substitution recording the ground
instance ``m sigma``, and a frame ``i``.  A lemma ``(l, sigma)`` is a
clause with free Int variables (read universally) plus one recorded ground
instance.  Only recorded instances, and a bounded set of trigger
instances during pushing, ever reach the solver, so every query is ground.
"""
from __future__ import annotations

import heapq
import itertools
import json
import logging
import time
from dataclasses import dataclass, field
from typing import Optional, TextIO, Union

from . import terms as T
from .itp import ItpError, pitp
from .mbp import pmbp
from .problem import SafetyProblem
from .smt import Backend, Model, QuantifiedQueryError, Sat, SmtLibSolver, Unknown, Unsat, evaluate
from .smtlib import forall_smt, show, to_smt
from .terms import EMPTY, Kind, Subst, Term

log = logging.getLogger(__name__)

QGEN_MODES = ("off", "simple", "arith", "both")


@dataclass
class EngineConfig:
    max_depth: int = 30
    qgen: str = "both"
    max_instances: int = 64
    push_pobs: bool = False
    itp_iterative: bool = False
    qgen_all_candidates: bool = True
    time_limit: Optional[float] = None
    max_pobs: int = 200_000
    audit: bool = True

    def __post_init__(self):
        if self.qgen not in QGEN_MODES:
            raise ValueError(f"qgen must be one of {QGEN_MODES}")
        if self.max_depth < 0 or self.max_instances < 1:
            raise ValueError("max_depth must be >= 0 and max_instances >= 1")


@dataclass(eq=False)
class Pob:
    cube: Term
    inst: Subst
    frame: int
    parent: Optional["Pob"]
    order: int
    sk_primed: Term = field(init=False)
    sk_text: str = field(init=False)

    def __post_init__(self):
        self.sk_primed = T.skolemize(T.prime(self.cube))
        self.sk_text = to_smt(self.sk_primed)

    def __lt__(self, other: "Pob") -> bool:
        return (self.frame, self.order) < (other.frame, other.order)

    def __repr__(self) -> str:
        return f"<{show(self.cube)}, {self.inst!r}, {self.frame}>"


@dataclass(frozen=True)
class QLemma:
    id: int
    body: Term
    inst: Subst
    origin: str

    @property
    def instance(self) -> Term:
        return T.apply_subst(self.body, self.inst)

    def __repr__(self) -> str:
        return f"({show(self.body)}, {self.inst!r})"


@dataclass
class Stats:
    depth: int = 0
    lemmas: int = 0
    inv: Optional[int] = None
    time_s: float = 0.0
    pobs: int = 0
    queries: int = 0
    qgen_accepted: int = 0

    def as_dict(self) -> dict:
        return {"depth": self.depth, "lemmas": self.lemmas, "inv": self.inv,
                "time_s": round(self.time_s, 3), "pobs": self.pobs, "queries": self.queries,
                "qgen_accepted": self.qgen_accepted}


@dataclass
class Safe:
    invariant: list
    frame: int
    stats: Stats

    name = "safe"

    def formulas(self) -> list[str]:
        return [forall_smt(b) for b in self.invariant]


@dataclass
class Cex:
    trace: list
    length: int
    stats: Stats

    name = "cex"


@dataclass
class ResourceLimit:
    reason: str
    stats: Stats

    name = "unknown"


Verdict = Union[Safe, Cex, ResourceLimit]


class _Abort(Exception):
    pass


@dataclass
class AuditLog:
    monotonicity_violations: int = 0
    nonground_queries: int = 0
    skolem_mismatches: int = 0
    qgen_condition_failures: int = 0
    checks: int = 0

    def clean(self) -> bool:
        return not (self.monotonicity_violations or self.nonground_queries
                    or self.skolem_mismatches or self.qgen_condition_failures)


class Engine:
    def __init__(self, problem: SafetyProblem, config: Optional[EngineConfig] = None,
                 solver: Optional[Backend] = None, event_log: Optional[TextIO] = None):
        self.problem = problem
        self.config = config or EngineConfig()
        self.solver = solver if solver is not None else SmtLibSolver()
        self.event_log = event_log
        self.init = problem.init
        self.trans = problem.trans
        self.init_primed = T.prime(problem.init)
        self.lemmas: list[QLemma] = []
        self._lemma_index: dict = {}
        self.frames: list[set] = [set()]
        self.N = 0
        self.stats = Stats()
        self.audit = AuditLog()
        self._order = itertools.count()
        self._t0 = 0.0
        self.queue: list = []
        self._trigger_cache: dict = {}

    # -- trace ---------------------------------------------------------------
    def add_lemma(self, body: Term, inst: Subst, origin: str, upto: int) -> QLemma:
        inst = inst.restrict(T.free_vars(body))
        key = (body, inst)
        lem = self._lemma_index.get(key)
        if lem is None:
            lem = QLemma(len(self.lemmas), body, inst, origin)
            self.lemmas.append(lem)
            self._lemma_index[key] = lem
            self.stats.lemmas = len(self.lemmas)
        while len(self.frames) <= upto:
            self.frames.append(set())
        for j in range(upto + 1):
            self.frames[j].add(lem.id)
        self.emit("lemma", frame=upto, lemma=lem.id, origin=origin, body=show(body), inst=repr(inst))
        self.audit_trace()
        return lem

    def frame_lemmas(self, i: int) -> list[QLemma]:
        return [self.lemmas[k] for k in sorted(self.frames[i])] if i < len(self.frames) else []

    def bodies(self, i: int) -> set:
        return {l.body for l in self.frame_lemmas(i)}

    def qi(self, i: int) -> list[Term]:
        """Recorded ground instances of frame ``i`` (frame 0 also holds Init)."""
        out = [self.init] if i == 0 else []
        out += [l.instance for l in self.frame_lemmas(i)]
        return out

    def qi_labeled(self, i: int) -> list:
        out = [("init", self.init)] if i == 0 else []
        out += [(f"lemma{l.id}", l.instance) for l in self.frame_lemmas(i)]
        return out

    def forward_image(self, i: int) -> Term:
        """F(qi(Q_i)) = (qi(Q_i) & Tr) | Init'."""
        return T.Or(T.And(*self.qi(i), self.trans), self.init_primed)

    def instantiated_image(self, i: int, goal: Term) -> Term:
        """Like :meth:`forward_image` with extra trigger instances for ``goal``."""
        hyps = ([self.init] if i == 0 else []) + self.instantiate(self.frame_lemmas(i), goal)
        return T.Or(T.And(*hyps, self.trans), self.init_primed)

    def audit_trace(self):
        if not self.config.audit:
            return
        self.audit.checks += 1
        for j in range(1, len(self.frames)):
            if not self.frames[j] <= self.frames[j - 1]:
                self.audit.monotonicity_violations += 1
                log.error("monotonicity violated between frames %d and %d", j - 1, j)

    # -- infrastructure --------------------------------------------------------
    def emit(self, rule: str, **kw):
        if self.event_log is None:
            return
        rec = {"rule": rule, "t": round(time.perf_counter() - self._t0, 6), "N": self.N}
        rec.update(kw)
        self.event_log.write(json.dumps(rec, default=str) + "\n")

    def check(self, labeled: list, want_model=True, want_core=False):
        try:
            res = self.solver.check_sat(labeled, want_model=want_model, want_core=want_core)
        except QuantifiedQueryError:
            self.audit.nonground_queries += 1
            raise
        self.stats.queries += 1
        return res

    def _check_budget(self):
        lim = self.config.time_limit
        if lim is not None and time.perf_counter() - self._t0 > lim:
            raise _Abort(f"time limit of {lim}s exceeded")
        if self.stats.pobs > self.config.max_pobs:
            raise _Abort(f"more than {self.config.max_pobs} proof obligations")

    def new_pob(self, cube: Term, inst: Subst, frame: int, parent: Optional[Pob]) -> Pob:
        p = Pob(cube, inst, frame, parent, next(self._order))
        self.stats.pobs += 1
        return p

    # -- main loop -------------------------------------------------------------
    def run(self) -> Verdict:
        self.solver.reset()
        self._t0 = time.perf_counter()
        try:
            v = self._run()
        except _Abort as ex:
            v = ResourceLimit(str(ex), self.stats)
        self.stats.depth = self.N
        self.stats.time_s = time.perf_counter() - self._t0
        self.emit("verdict", verdict=v.name)
        return v

    def _run(self) -> Verdict:
        bad_cubes = dnf_cubes(self.problem.bad)
        res = self.check([("init", self.init), ("bad", self.problem.bad)])
        if isinstance(res, Unknown):
            raise _Abort(f"solver unknown on Init & Bad: {res.reason}")
        if isinstance(res, Sat):
            root = self.new_pob(self.problem.bad, EMPTY, 0, None)
            return self.make_cex(root)
        while True:
            if self.N >= self.config.max_depth:
                raise _Abort(f"reached max depth {self.N}")
            self.N += 1
            while len(self.frames) <= self.N:
                self.frames.append(set())
            self.emit("unfold", frame=self.N)
            for cube in bad_cubes:
                cex = self.make_safe(self.new_pob(cube, EMPTY, self.N, None))
                if cex is not None:
                    return self.make_cex(cex)
            inv_frame = self.push()
            if inv_frame is not None:
                inv = sorted(self.bodies(inv_frame), key=lambda t: t.key)
                self.stats.inv = len(inv)
                self.emit("safe", frame=inv_frame)
                return Safe(inv, inv_frame, self.stats)

    def make_safe(self, root: Pob) -> Optional[Pob]:
        """Block ``root`` or return a POB that reached frame 0."""
        self.emit("candidate", frame=root.frame, pob=root.order, cube=show(root.cube))
        self.queue = [root]
        while self.queue:
            self._check_budget()
            pob = self.queue[0]
            if pob.frame == 0:
                return pob
            if self.config.audit:
                self.audit.checks += 1
                if to_smt(T.skolemize(T.prime(pob.cube))) != pob.sk_text:
                    self.audit.skolem_mismatches += 1
            labeled = self.qi_labeled(pob.frame - 1) + [("tr", self.trans), (f"pob{pob.order}", pob.sk_primed)]
            res = self.check(labeled)
            if isinstance(res, Unknown):
                raise _Abort(f"solver unknown on predecessor check: {res.reason}")
            if isinstance(res, Sat):
                pred = self.predecessor(pob, res.model)
                heapq.heappush(self.queue, pred)
            else:
                heapq.heappop(self.queue)
                self.block(pob)
        return None

    def predecessor(self, pob: Pob, M: Model) -> Pob:
        phi = T.And(self.trans, pob.sk_primed)
        U = {c for c in T.consts(phi) if c.kind in (Kind.PRIMED, Kind.SKOLEM)}
        psi, W = pmbp(U, phi, M)
        cube, sigma = T.abstract(W, psi)
        new = self.new_pob(cube, sigma, pob.frame - 1, pob)
        self.emit("predecessor", frame=new.frame, pob=new.order, parent=pob.order,
                  cube=show(cube), inst=repr(sigma))
        return new

    def block(self, pob: Pob) -> QLemma:
        i = pob.frame - 1
        A = self.forward_image(i)
        try:
            L_primed, extra = pitp(A, pob.sk_primed, self.solver, iterative=self.config.itp_iterative)
        except ItpError:
            # the unsat answer came from a different (incremental) check; recheck once
            raise _Abort("interpolation precondition failed")
        L = T.unprime(L_primed)
        sks = {c for c in T.consts(L) if c.kind is Kind.SKOLEM}
        body, _ = T.abstract(sks, L)
        inst = pob.inst.restrict(T.free_vars(body))
        origin = "interpolant"
        if self.config.qgen != "off":
            from .qgen import qgen
            body2, inst2 = qgen(self, body, inst, pob.frame)
            if body2 is not body:
                body, inst, origin = body2, inst2, "qgen"
                self.stats.qgen_accepted += 1
        lem = self.add_lemma(body, inst, origin, pob.frame)
        if self.config.push_pobs and pob.frame < self.N:
            heapq.heappush(self.queue, self.new_pob(pob.cube, pob.inst, pob.frame + 1, pob.parent))
        return lem

    # -- push ------------------------------------------------------------------
    def push(self) -> Optional[int]:
        for i in range(1, self.N):
            self._check_budget()
            nxt = self.bodies(i + 1)
            for lem in self.frame_lemmas(i):
                if lem.id in self.frames[i + 1]:
                    continue
                if lem.body in nxt or self.inductive_at(lem.body, i):
                    for j in range(i + 2):
                        self.frames[j].add(lem.id)
                    nxt.add(lem.body)
                    self.emit("push", frame=i + 1, lemma=lem.id)
                    continue
                sub = self.push_disjuncts(lem, i)
                if sub is not None:
                    self.add_lemma(sub, lem.inst, "push", i + 1)
                    nxt.add(sub)
            self.audit_trace()
        for i in range(1, self.N):
            if self.bodies(i) <= self.bodies(i + 1):
                return i
        return None

    def inductive_at(self, body: Term, i: int, check_init: bool = False) -> bool:
        """Does frame ``i`` (instantiated) together with ``body`` make ``body'`` hold?"""
        goal = T.Not(T.skolemize(T.prime(body)))
        if check_init:
            r = self.check([("init", self.init), ("goal", T.Not(T.skolemize(body)))], want_model=False)
            if not isinstance(r, Unsat):
                return False
        hyps = self.instantiate(self.frame_lemmas(i), goal, extra_bodies=[body])
        labeled = [(f"h{k}", h) for k, h in enumerate(hyps)] + [("tr", self.trans), ("goal", goal)]
        return isinstance(self.check(labeled, want_model=False), Unsat)

    def push_disjuncts(self, lem: QLemma, i: int) -> Optional[Term]:
        """Try to push a strict sub-clause of ``lem`` (the ``phi`` of ``phi | psi``)."""
        lits = T.disjuncts(lem.body)
        if len(lits) < 2:
            return None
        cur = list(lits)
        for l in lits:
            if len(cur) == 1:
                break
            trial = [x for x in cur if x is not l]
            if self.inductive_at(T.Or(*trial), i, check_init=True):
                cur = trial
        if len(cur) == len(lits):
            return None
        return T.Or(*cur)

    # -- instantiation ---------------------------------------------------------
    def triggers(self, goal: Term, frame_lemmas) -> list[Term]:
        cands: dict = {}
        for src in (self.trans, goal):
            for x in T.subterms(src):
                if x.op == "select":
                    cands[x.args[1]] = None
                elif x.op == "store":
                    cands[x.args[1]] = None
                    cands[x.args[2]] = None
        for lem in frame_lemmas:
            for v in lem.inst.values():
                cands[v] = None
        return sorted((c for c in cands if T.is_ground(c)), key=lambda t: t.key)

    def instantiate(self, frame_lemmas, goal: Term, extra_bodies=()) -> list[Term]:
        """qi(Q) plus trigger instances of every quantified body, capped per lemma."""
        out: dict = {}
        for lem in frame_lemmas:
            if T.is_ground(lem.instance):
                out[lem.instance] = None
        cands = self.triggers(goal, frame_lemmas)
        bodies = list(dict.fromkeys([l.body for l in frame_lemmas] + list(extra_bodies)))
        cap = self.config.max_instances
        for body in bodies:
            fv = sorted(T.free_vars(body))
            if not fv:
                out[body] = None
                continue
            for combo in itertools.islice(itertools.product(cands, repeat=len(fv)), cap):
                out[T.apply_subst(body, Subst(dict(zip(fv, combo))))] = None
        return [t for t in out if t is not T.TRUE]

    # -- counterexamples -------------------------------------------------------
    def make_cex(self, pob: Pob) -> Cex:
        chain = []
        p = pob
        while p is not None:
            chain.append(p)
            p = p.parent
        k = len(chain) - 1
        trace = self.concretize([c.cube for c in chain], k)
        if trace is None:
            trace = bmc_trace(self.problem, k, self.solver)
        if trace is None:
            raise _Abort("could not concretize counterexample")
        self.emit("cex", length=k)
        return Cex(trace, k, self.stats)

    def concretize(self, cubes: list[Term], k: int) -> Optional[list[Model]]:
        xs = self.problem.state_vars
        steps = [step_copy(xs, s) for s in range(k + 1)]
        parts = [("init", T.substitute(self.init, steps[0]))]
        for s in range(k):
            parts.append((f"tr{s}", T.substitute(self.trans, {**steps[s], **primed_copy(xs, s + 1)})))
        for s, cube in enumerate(cubes):
            fv = T.free_vars(cube)
            vm = {T.Var(v): T.Const(f"v{v}@{s}", T.INT, Kind.AUX) for v in fv}
            parts.append((f"pob{s}", T.substitute(T.substitute(cube, vm), steps[s])))
        parts.append(("bad", T.substitute(self.problem.bad, steps[k])))
        res = self.check(parts)
        if not isinstance(res, Sat):
            return None
        return extract_trace(res.model, xs, k)


# ---------------------------------------------------------------------------
# helpers shared with the oracle

def dnf_cubes(f: Term) -> list[Term]:
    """Split a formula into a list of cubes whose disjunction is equivalent."""
    if f.op == "or":
        out = []
        for a in f.args:
            out += dnf_cubes(a)
        return out
    if f.op == "and":
        parts = [dnf_cubes(a) for a in f.args]
        if len(parts) > 6 or any(len(p) > 1 for p in parts) and _prod_size(parts) > 64:
            return [f]
        return [T.And(*combo) for combo in itertools.product(*parts)]
    return [f]


def _prod_size(parts) -> int:
    n = 1
    for p in parts:
        n *= len(p)
    return n


def step_copy(xs, s: int) -> dict:
    return {x: T.Const(f"{x.name}@{s}", x.sort, Kind.AUX) for x in xs}


def primed_copy(xs, s: int) -> dict:
    return {T.prime(x): T.Const(f"{x.name}@{s}", x.sort, Kind.AUX) for x in xs}


def extract_trace(M: Model, xs, k: int) -> list[Model]:
    out = []
    for s in range(k + 1):
        vals = {}
        for x in xs:
            c = T.Const(f"{x.name}@{s}", x.sort, Kind.AUX)
            if c in M:
                vals[x] = M[c]
            else:
                vals[x] = _default_value(x)
        out.append(Model(vals))
    return out


def _default_value(x: Term):
    from .smt import ArrayValue
    if x.sort is T.ARRAY:
        return ArrayValue(0)
    if x.sort is T.BOOL:
        return False
    return 0


def bmc_formula(problem: SafetyProblem, k: int) -> list:
    xs = problem.state_vars
    steps = [step_copy(xs, s) for s in range(k + 1)]
    parts = [("init", T.substitute(problem.init, steps[0]))]
    for s in range(k):
        parts.append((f"tr{s}", T.substitute(problem.trans, {**steps[s], **primed_copy(xs, s + 1)})))
    parts.append(("bad", T.substitute(problem.bad, steps[k])))
    return parts


def bmc_trace(problem: SafetyProblem, k: int, solver: Backend) -> Optional[list[Model]]:
    res = solver.check_sat(bmc_formula(problem, k))
    if isinstance(res, Sat):
        return extract_trace(res.model, problem.state_vars, k)
    return None


def replay(problem: SafetyProblem, trace: list[Model]) -> dict:
    """Exact step-by-step check of a counterexample under evaluation."""
    report = {"init": bool(evaluate(trace[0], problem.init)), "trans": True,
              "bad": bool(evaluate(trace[-1], problem.bad))}
    for s in range(len(trace) - 1):
        env = dict(trace[s].values)
        env.update({T.prime(x): v for x, v in trace[s + 1].values.items()})
        if not evaluate(env, problem.trans):
            report["trans"] = False
    return report


# ---------------------------------------------------------------------------
# verdict validation

CERTIFIED, UNKNOWN, FAILED = "certified", "unknown", "failed"


def validate_verdict(v: Verdict, problem: SafetyProblem, solver: Optional[Backend] = None,
                     max_instances: int = 64) -> dict:
    """Per-condition status of a verdict.

    A counterexample is replayed exactly.  For an invariant, ``Init => Inv``
    is decided exactly (the negated clause is skolemized).  Consecution and
    safety have quantified hypotheses; they are first checked with those
    replaced by trigger instances, which certifies on unsat.  Otherwise the
    quantified query goes to the external solver as a best effort.
    """
    if isinstance(v, Cex):
        r = replay(problem, v.trace)
        r["length"] = len(v.trace) == v.length + 1
        return {k: CERTIFIED if ok else FAILED for k, ok in r.items()}
    if not isinstance(v, Safe):
        return {}
    solver = solver or SmtLibSolver()
    inv = list(v.invariant)
    quantified = any(T.free_vars(b) for b in inv)
    eng = Engine(problem, EngineConfig(max_instances=max_instances, audit=False), solver)
    fake = [QLemma(k, b, EMPTY, "inv") for k, b in enumerate(inv)]

    def status(ground_parts, goal, quantified_parts):
        hyps = eng.instantiate(fake, goal)
        labeled = [(f"h{k}", h) for k, h in enumerate(hyps)]
        labeled += [(f"p{k}", t) for k, t in enumerate(ground_parts)] + [("goal", goal)]
        r = solver.check_sat(labeled, want_model=False)
        if isinstance(r, Unsat):
            return CERTIFIED
        if isinstance(r, Sat) and not quantified:
            return FAILED
        return _quantified_check(solver, inv, quantified_parts)

    report = {"init": CERTIFIED}
    for b in inv:
        r = solver.check_sat([("init", problem.init), ("goal", T.Not(T.skolemize(b)))], want_model=False)
        if not isinstance(r, Unsat):
            report["init"] = FAILED if isinstance(r, Sat) else UNKNOWN
            break
    report["consecution"] = CERTIFIED
    for b in inv:
        goal = T.Not(T.skolemize(T.prime(b)))
        st = status([problem.trans], goal, [problem.trans, goal])
        if st != CERTIFIED:
            report["consecution"] = st
            if st == FAILED:
                break
    report["safety"] = status([], problem.bad, [problem.bad])
    return report


def _quantified_check(solver: Backend, inv: list, ground: list) -> str:
    """Best-effort check of ``forall inv & ground`` by the external solver."""
    if not isinstance(solver, SmtLibSolver):
        return UNKNOWN
    from .smtlib import const_name, sort_smt
    cs = set()
    for t in list(inv) + list(ground):
        cs |= T.consts(t)
    lines = [f"(declare-fun {const_name(c)} () {sort_smt(c.sort)})" for c in sorted(cs, key=lambda c: c.key)]
    lines += [f"(assert {forall_smt(b)})" for b in inv]
    lines += [f"(assert {to_smt(t)})" for t in ground]
    qs = SmtLibSolver(solver.command, timeout=solver.timeout, logic=None)
    try:
        ans = qs.raw("\n".join(lines))
    finally:
        qs.close()
    if ans == "unsat":
        return CERTIFIED
    if ans == "sat":
        return FAILED
    return UNKNOWN


def run(problem: SafetyProblem, config: Optional[EngineConfig] = None, solver: Optional[Backend] = None,
        event_log: Optional[TextIO] = None) -> tuple[Verdict, Engine]:
    eng = Engine(problem, config, solver, event_log)
    return eng.run(), eng
