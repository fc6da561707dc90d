import json

import pytest

from quic3 import terms as T
from quic3.engine import (Cex, Engine, EngineConfig, ResourceLimit, Safe, dnf_cubes, run,
                          validate_verdict)
from quic3.oracle import CexAt, NoCexUpTo, bmc, trace_ok
from quic3.problem import load_problem, parse_problem
from quic3.smt import Unsat
from quic3.terms import Subst

pc, i, j, sz, k, x = T.Ints("pc i j sz k x")
A = T.Array("A")
v0 = T.Var(0)


def test_config_validation():
    with pytest.raises(ValueError):
        EngineConfig(qgen="none")
    with pytest.raises(ValueError):
        EngineConfig(max_instances=0)


def test_init_array_predecessor(solver, bench):
    p = load_problem(bench / "init_array.qtr")
    eng = Engine(p, EngineConfig(), solver)
    pob = eng.new_pob(T.And(T.Eq(pc, 3), T.Ne(T.Select(A, j), 0)), Subst(), 1, None)
    r = eng.check([("tr", p.trans), ("pob", pob.sk_primed)])
    pred = eng.predecessor(pob, r.model)
    want = T.And(T.Eq(pc, 2), T.Ne(T.Select(A, v0), 0), T.Le(0, v0), T.Lt(v0, sz))
    assert set(T.conjuncts(pred.cube)) == set(T.conjuncts(want))
    assert pred.inst == {0: T.prime(j)}
    assert pred.frame == 0


def test_deterministic_predecessor(solver):
    p = parse_problem("(declare-state x Int) (init (= x 5)) (trans (= x! (- x 1))) (bad (= x 0))")
    eng = Engine(p, EngineConfig(), solver)
    pob = eng.new_pob(T.Eq(x, 0), Subst(), 3, None)
    r = eng.check([("tr", p.trans), ("pob", pob.sk_primed)])
    pred = eng.predecessor(pob, r.model)
    assert pred.cube is T.Eq(x, 1) and pred.inst == Subst()


def test_ground_pob_blocked_by_ground_lemma(solver):
    p = parse_problem("(declare-state x Int) (init (= x 0)) (trans (= x! (+ x 1))) (bad (= x 5))")
    eng = Engine(p, EngineConfig(), solver)
    eng.N = 1
    eng.frames.append(set())
    lem = eng.block(eng.new_pob(T.Eq(x, 5), Subst(), 1, None))
    assert T.is_ground(lem.body) and lem.inst == Subst()
    # the lemma excludes the obligation
    assert isinstance(solver.check_sat([lem.body, T.Eq(x, 5)], want_model=False), Unsat)


def test_init_array_quantified_lemma_recorded_with_instance(solver, bench):
    p = load_problem(bench / "init_array.qtr")
    v, eng = run(p, EngineConfig(qgen="off"), solver)
    assert isinstance(v, Safe)
    want = T.Implies(T.And(T.Eq(pc, 2), T.Le(0, v0), T.Lt(v0, sz)), T.Eq(T.Select(A, v0), 0))
    assert any(l.body is want and l.inst == {0: T.prime(j)} for l in eng.lemmas)


def test_init_and_bad_overlap_gives_zero_length_cex(solver, bench):
    p = load_problem(bench / "init_bad.qtr")
    v, _ = run(p, EngineConfig(), solver)
    assert isinstance(v, Cex) and v.length == 0 and len(v.trace) == 1
    assert trace_ok(p, v.trace)


def test_init_array_one_is_shortest(solver, bench):
    p = load_problem(bench / "init_array_one.qtr")
    v, _ = run(p, EngineConfig(), solver)
    b = bmc(p, v.length, solver)
    assert isinstance(b, CexAt) and b.k == v.length
    assert validate_verdict(v, p, solver) == {"init": "certified", "trans": "certified",
                                              "bad": "certified", "length": "certified"}


def test_identity_transition_cex_at_one(solver):
    p = parse_problem("(declare-state x Int) (init (= x 0)) (trans (= x! x)) (bad (= x 1))")
    assert isinstance(run(p, EngineConfig(), solver)[0], Safe)
    p = parse_problem("(declare-state x Int) (init (= x 0)) (trans (= x! (+ x 1))) (bad (= x 1))")
    v, _ = run(p, EngineConfig(), solver)
    assert isinstance(v, Cex) and v.length == 1


def test_blocked_at_depth_agrees_with_bmc(solver):
    p = parse_problem("(declare-state x Int) (init (= x 0)) (trans (= x! (+ x 1))) (bad (= x 6))")
    v, eng = run(p, EngineConfig(max_depth=4), solver)
    assert isinstance(v, ResourceLimit) and v.stats.depth == 4
    assert isinstance(bmc(p, 4, solver), NoCexUpTo)


def _two_cell():
    return parse_problem("""
        (declare-state k Int) (declare-state A (Array Int Int))
        (init (and (= (select A 0) 0) (= (select A 1) 0)))
        (trans (and (= A! A) (= k! (- 1 k))))
        (bad (and (<= 0 k) (<= k 1) (not (= (select A k) 0))))""")


def test_push_uses_trigger_instances(solver):
    p = _two_cell()
    eng = Engine(p, EngineConfig(), solver)
    eng.N = 2
    eng.frames += [set(), set()]
    body = T.Or(T.Lt(v0, 0), T.Lt(1, v0), T.Eq(T.Select(A, v0), 0))
    lem = eng.add_lemma(body, Subst({0: T.IntVal(0)}), "test", 1)
    # the recorded instance alone does not make the lemma inductive
    goal = T.Not(T.skolemize(T.prime(body)))
    assert eng.check([lem.instance, p.trans, goal], want_model=False)
    eng.push()
    assert lem.id in eng.frames[2]


def test_ground_lemma_pushed(solver):
    p = parse_problem("(declare-state x Int) (init (= x 0)) (trans (= x! x)) (bad (= x 1))")
    eng = Engine(p, EngineConfig(), solver)
    eng.N = 2
    eng.frames += [set(), set()]
    lem = eng.add_lemma(T.Eq(x, 0), Subst(), "test", 1)
    assert eng.push() == 1
    assert lem.id in eng.frames[2]


def test_instantiate(solver):
    p = parse_problem("""(declare-state i Int) (declare-state j Int) (declare-state A (Array Int Int))
        (init (= i 0)) (trans (and (= i! i) (= j! j) (= A! A))) (bad (= (select A i) 1))""")
    eng = Engine(p, EngineConfig(max_instances=64), solver)
    ground = eng.add_lemma(T.Le(0, i), Subst(), "t", 1)
    assert eng.instantiate(eng.frame_lemmas(1), T.TRUE) == [ground.body]
    body = T.Eq(T.Select(A, v0), 0)
    eng.add_lemma(body, Subst({0: j}), "t", 1)
    goal = T.And(T.Eq(T.Select(A, i), 1), T.Eq(T.Select(A, j), 1))
    got = set(eng.instantiate(eng.frame_lemmas(1), goal))
    assert got == {ground.body, T.Eq(T.Select(A, i), 0), T.Eq(T.Select(A, j), 0)}
    capped = Engine(p, EngineConfig(max_instances=1), solver)
    capped.add_lemma(body, Subst(), "t", 1)
    assert len(capped.instantiate(capped.frame_lemmas(1), goal)) == 1


def test_pob_order(solver):
    p = _two_cell()
    eng = Engine(p, EngineConfig(), solver)
    m = T.Eq(k, 0)
    a = eng.new_pob(m, Subst(), 2, None)
    b = eng.new_pob(m, Subst(), 1, None)
    c = eng.new_pob(m, Subst(), 1, None)
    assert min([a, b, c]) is b
    assert min([a]) is a


def test_validate_rejects_mutated_invariant(solver, bench):
    p = load_problem(bench / "init_array.qtr")
    v, _ = run(p, EngineConfig(), solver)
    assert validate_verdict(v, p, solver) == {"init": "certified", "consecution": "certified",
                                              "safety": "certified"}
    # dropping the 0 <= v0 guard keeps initiation but breaks consecution
    want = T.Or(T.Eq(T.Select(A, v0), 0), T.Lt(v0, 0), T.Le(sz, v0), T.Ne(pc, 2))
    mutated = [T.Or(T.Eq(T.Select(A, v0), 0), T.Le(sz, v0), T.Ne(pc, 2)) if b is want else b
               for b in v.invariant]
    assert mutated != v.invariant
    bad = Safe(mutated, v.frame, v.stats)
    report = validate_verdict(bad, p, solver)
    assert report["init"] == "certified"
    assert report["consecution"] != "certified"


def test_event_log_and_audit(solver, bench, tmp_path):
    p = load_problem(bench / "std_copy1.qtr")
    with open(tmp_path / "ev.jsonl", "w") as f:
        v, eng = run(p, EngineConfig(max_depth=10), solver, f)
    recs = [json.loads(l) for l in (tmp_path / "ev.jsonl").read_text().splitlines()]
    assert {"unfold", "lemma", "verdict"} <= {r["rule"] for r in recs}
    assert eng.audit.clean() and eng.audit.checks > 0
    assert isinstance(v, Safe)


def test_dnf_cubes():
    f = T.Or(T.And(T.Eq(x, 1), T.Or(T.Eq(k, 0), T.Eq(k, 1))), T.Eq(x, 3))
    cubes = dnf_cubes(f)
    assert len(cubes) == 3
    assert all(T.is_literal(l) for c in cubes for l in T.conjuncts(c))
