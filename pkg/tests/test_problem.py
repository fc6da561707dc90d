import pytest
from hypothesis import given, settings, strategies as st

from quic3 import terms as T
from quic3.engine import EngineConfig, Safe, run
from quic3.problem import SafetyProblem, load_problem, parse_problem, print_problem
from quic3.smtlib import ParseError, QuantifierError

x, n, y = T.Ints("x n y")
A = T.Array("A")


def test_counter(bench):
    p = load_problem(bench / "counter.qtr")
    assert p.state_vars == (x, n) and p.name == "counter"
    assert T.consts(p.trans) <= {x, n, T.prime(x), T.prime(n)}


def test_init_array_has_five_vars(bench):
    p = load_problem(bench / "init_array.qtr")
    assert len(p.state_vars) == 5
    assert sum(v.sort is T.ARRAY for v in p.state_vars) == 1


def test_quantifier_rejected():
    with pytest.raises(QuantifierError):
        parse_problem("""(declare-state A (Array Int Int)) (init true)
            (trans (forall ((k Int)) (= (select A! k) 0))) (bad false)""")


@pytest.mark.parametrize("text", [
    "(declare-state x Int) (init (= x 0)) (trans (= x! x))",
    "(declare-state x Int) (declare-state x Int) (init true) (trans true) (bad true)",
    "(declare-state x Int) (init (= x! 0)) (trans true) (bad true)",
    "(declare-state x Int) (init (= z 0)) (trans true) (bad true)",
    "(declare-state x Int) (init (+ x 1)) (trans true) (bad true)",
    "(declare-state x Int) (init (= x 0) (trans true) (bad true)",
    "(declare-state sk!1 Int) (init true) (trans true) (bad true)",
    "(frobnicate)",
])
def test_bad_inputs(text):
    with pytest.raises(ParseError):
        parse_problem(text)


def test_parse_error_has_position():
    with pytest.raises(ParseError) as ei:
        parse_problem("(declare-state x Int)\n(init (= x 0))\n(trans (= x! y))\n(bad true)")
    assert ei.value.args


def test_chc_converter(bench):
    p = load_problem(bench / "counter_chc.smt2")
    assert len(p.state_vars) == 2
    v, _ = run(p, EngineConfig())
    assert isinstance(v, Safe)


def _problems():
    xs = [x, y]
    lin = st.tuples(st.integers(-2, 2), st.sampled_from(xs + [T.Select(A, x)]), st.integers(-3, 3)).map(
        lambda p: T.Add(T.Mul(p[0], p[1]), p[2]))
    atom = st.tuples(st.sampled_from([T.Le, T.Eq, T.Ne, T.Lt]), lin, st.sampled_from(xs + [T.IntVal(0)])).map(
        lambda p: p[0](p[1], p[2]))
    cube = st.lists(atom, min_size=1, max_size=3).map(lambda ls: T.And(*ls))
    form = st.lists(cube, min_size=1, max_size=2).map(lambda cs: T.Or(*cs))
    return st.tuples(form, form, form).map(lambda f: SafetyProblem(
        (x, y, A), f[0], T.And(f[1], T.Eq(T.prime(x), T.Add(x, 1)),
                               T.Eq(T.prime(A), T.Store(A, y, T.prime(y)))), f[2], "p"))


@settings(max_examples=60)
@given(_problems())
def test_print_parse_round_trip(p):
    assert parse_problem(print_problem(p), "p") == p
