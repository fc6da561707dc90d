"""End-to-end acceptance checks, one test per criterion.

Each test records a one-line verdict; the lines are printed in criterion
order at the end of the session (see ``conftest.py``).
"""
import itertools
import time
from contextlib import contextmanager

import pytest

from quic3 import terms as T
from quic3.engine import Cex, EngineConfig, ResourceLimit, Safe, run, validate_verdict
from quic3.itp import pitp, trivial_pitp
from quic3.mbp import pmbp
from quic3.oracle import CexAt, bmc, check_itp_contract, check_mbp_contract, finite_range, trace_ok
from quic3.problem import load_problem
from quic3.qgen import ch, simple_qgen
from quic3.report import expected_verdict, problem_files
from quic3.smt import SmtLibSolver, Unsat
from quic3.testgen import adversarial_itp, itp_instance, mbp_instance, small_mbp_pair
from quic3.terms import Subst

RESULTS: dict = {}
AUDITS: list = []

STD_COPY = ("std_copy1", "std_copy2", "std_copy_init")
LEVERAGE_DEPTH = 20


@contextmanager
def criterion(n: int, title: str):
    detail = []
    try:
        yield detail
    except BaseException as ex:
        RESULTS[n] = f"criterion {n} FAIL  {title}: {type(ex).__name__}: {str(ex)[:200]}"
        raise
    RESULTS[n] = f"criterion {n} PASS  {title}" + (f": {'; '.join(detail)}" if detail else "")


def run_fresh(problem, **cfg):
    solver = SmtLibSolver()
    try:
        v, eng = run(problem, EngineConfig(**cfg), solver)
    finally:
        solver.close()
    AUDITS.append((problem.name, cfg.get("qgen", "both"), eng.audit))
    return v, eng


def corpus(bench):
    return [(f, load_problem(f), expected_verdict(f)) for f in problem_files(bench)]


def alpha_equiv(a, b) -> bool:
    """Equal clauses up to a renaming of free variables (and disjunct order)."""
    fa, fb = sorted(T.free_vars(a)), sorted(T.free_vars(b))
    if len(fa) != len(fb):
        return False
    target = set(T.disjuncts(b))
    for perm in itertools.permutations(fb):
        ren = Subst({i: T.Var(j) for i, j in zip(fa, perm)})
        if set(T.disjuncts(T.apply_subst(a, ren))) == target:
            return True
    return False


def test_criterion_1_init_array(bench):
    with criterion(1, "init_array is Safe with the quantified lemma, certified, under 60 s") as d:
        p = load_problem(bench / "init_array.qtr")
        t0 = time.perf_counter()
        v, _ = run_fresh(p, qgen="both")
        elapsed = time.perf_counter() - t0
        assert isinstance(v, Safe), v
        pc, sz = T.Ints("pc sz")
        A = T.Array("A")
        v0 = T.Var(0)
        want = T.Implies(T.And(T.Eq(pc, 2), T.Le(0, v0), T.Lt(v0, sz)), T.Eq(T.Select(A, v0), 0))
        assert any(alpha_equiv(b, want) for b in v.invariant)
        with SmtLibSolver() as s:
            report = validate_verdict(v, p, s)
        assert report == {"init": "certified", "consecution": "certified", "safety": "certified"}, report
        assert elapsed < 60
        d.append(f"{len(v.invariant)} clauses, {elapsed:.2f} s")


def test_criterion_2_shortest_cex(bench):
    with criterion(2, "counterexamples are BMC-minimal and replay") as d:
        n = 0
        with SmtLibSolver() as s:
            for f, p, exp in corpus(bench):
                if exp != "cex":
                    continue
                v, _ = run_fresh(p, qgen="both")
                assert isinstance(v, Cex), (f.stem, v)
                b = bmc(p, v.length, s)
                assert isinstance(b, CexAt) and b.k == v.length, (f.stem, v.length, b)
                assert trace_ok(p, v.trace), f.stem
                assert all(r == "certified" for r in validate_verdict(v, p, s).values()), f.stem
                n += 1
        assert n >= 10
        d.append(f"{n} unsafe instances")


def test_criterion_3_mbp_contract():
    with criterion(3, "MBP conditions (1)-(4) on 500 triples, finite range on 50 pairs") as d:
        with SmtLibSolver() as s:
            for seed in range(500):
                U, phi, M = mbp_instance(seed)
                rep = check_mbp_contract(U, phi, M, pmbp(U, phi, M), solver=s)
                assert rep.ok, (seed, rep.failed())
        models = 0
        for seed in range(50):
            U, phi = small_mbp_pair(seed)
            n, outs, bound = finite_range(U, phi, pmbp)
            assert len(outs) <= bound, (seed, len(outs), bound)
            models += n
        d.append(f"500/500 triples, 50 pairs over {models} models")


def test_criterion_4_itp_contract():
    with criterion(4, "ITP conditions (1)-(4) on 500 unsat pairs, trivial fallback on adversarial pairs") as d:
        n = seed = 0
        with SmtLibSolver() as s:
            while n < 500:
                A, B = itp_instance(seed)
                seed += 1
                if not isinstance(s.check_sat([A, B], want_model=False), Unsat):
                    continue
                rep = check_itp_contract(A, B, pitp(A, B, s), solver=s)
                assert rep.ok, (seed - 1, rep.failed())
                n += 1
            for k in range(20):
                A, B = adversarial_itp(k)
                r = pitp(A, B, s)
                assert r.clause is trivial_pitp(A, B).clause
                assert check_itp_contract(A, B, r, solver=s).ok
        d.append(f"500 pairs from {seed} seeds, 20 adversarial")


def test_criterion_5_progress(bench):
    with criterion(5, "qgen off, max_depth 8: every instance is Safe, Cex, or reaches depth 8") as d:
        tally = {"safe": 0, "cex": 0, "unknown": 0}
        for f, p, _ in corpus(bench):
            v, _ = run_fresh(p, qgen="off", max_depth=8)
            if isinstance(v, ResourceLimit):
                assert v.stats.depth == 8 and "max depth" in v.reason, (f.stem, v.reason)
            tally[v.name] += 1
        d.append(", ".join(f"{k} {n}" for k, n in tally.items()))


def test_criterion_7_qgen_examples():
    with criterion(7, "QGen worked examples reproduce exactly") as d:
        sz = T.Const("sz")
        A = T.Array("A")
        v0, v1 = T.Var(0), T.Var(1)
        (c,) = simple_qgen(T.Implies(T.Lt(0, sz), T.Eq(T.Select(A, 0), 42)))
        assert c.body is T.Implies(T.And(T.Le(0, v0), T.Lt(v0, sz)), T.Eq(T.Select(A, v0), 42))
        assert c.rho == {0: T.IntVal(0)}
        hull = ch([(0, 42), (1, 44)], [v0, v1])
        assert hull is T.And(T.Le(0, v0), T.Le(v0, 1), T.Eq(v1, T.Add(T.Mul(2, v0), 42)))
        d.append("simple candidate and hull match")


@pytest.mark.slow
def test_criterion_8_leverage(bench):
    with criterion(8, f"std_copy family at depth {LEVERAGE_DEPTH}: qgen both uses >= 5x fewer lemmas") as d:
        totals = {"off": 0, "both": 0}
        for name in STD_COPY:
            p = load_problem(bench / f"{name}.qtr")
            for mode in totals:
                v, _ = run_fresh(p, qgen=mode, max_depth=LEVERAGE_DEPTH)
                assert not isinstance(v, Cex), (name, mode)
                totals[mode] += v.stats.lemmas
        ratio = totals["off"] / totals["both"]
        d.append(f"off {totals['off']} vs both {totals['both']} lemmas, ratio {ratio:.1f}")
        assert ratio >= 5, d[-1]


def test_criterion_6_audits(bench):
    with criterion(6, "audits clean: monotonicity, ground queries, skolem stability") as d:
        for f, p, exp in corpus(bench):
            if exp == "safe":
                v, _ = run_fresh(p, qgen="both")
                assert isinstance(v, Safe), f.stem
        dirty = [(name, mode, a) for name, mode, a in AUDITS if not a.clean()]
        assert not dirty, dirty
        checks = sum(a.checks for _, _, a in AUDITS)
        assert checks > 0
        d.append(f"{len(AUDITS)} runs, {checks} audit checks")
