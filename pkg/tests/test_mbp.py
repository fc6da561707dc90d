from hypothesis import given, settings, strategies as st

from quic3 import terms as T
from quic3.mbp import ProjectionResult, array_project, lia_project, pmbp
from quic3.oracle import check_mbp_contract, finite_range
from quic3.smt import ArrayValue, Model
from quic3.testgen import mbp_instance, small_mbp_pair

x, y, z, w, u, i, j = T.Ints("x y z w u i j")
A, a, b = T.Array("A"), T.Array("a"), T.Array("b")
Ap = T.prime(A)


def test_int_elimination_example(solver):
    U, phi, M = {x}, T.And(T.Eq(x, y), T.Gt(x, 0)), Model({x: 1, y: 1})
    r = pmbp(U, phi, M)
    assert r.psi is T.Gt(y, 0) and not r.kept
    assert check_mbp_contract(U, phi, M, r, solver=solver).ok


def test_store_read_split_example(solver):
    phi = T.And(T.Eq(Ap, T.Store(A, i, 0)), T.Gt(T.Select(Ap, j), 0))
    M = Model({Ap: ArrayValue.make(0, {2: 3}), A: ArrayValue.make(0, {2: 3}), i: 1, j: 2})
    r = pmbp({Ap}, phi, M, order_split=False)
    assert set(T.conjuncts(r.psi)) == {T.Ne(i, j), T.Gt(T.Select(A, j), 0)}
    assert check_mbp_contract({Ap}, phi, M, r, solver=solver).ok
    # the default splits the disequality by the model's order instead
    r2 = pmbp({Ap}, phi, M)
    assert set(T.conjuncts(r2.psi)) == {T.Lt(i, j), T.Gt(T.Select(A, j), 0)}
    assert check_mbp_contract({Ap}, phi, M, r2, solver=solver).ok


def test_empty_u_selects_implicant():
    r = pmbp(set(), T.Or(T.Gt(x, 0), T.Lt(x, -5)), Model({x: 3}))
    assert r.psi is T.Gt(x, 0) and not r.kept


def test_lia_project_examples():
    assert lia_project(u, [T.Eq(u, T.Add(y, 1)), T.Lt(u, z)], Model({u: 5, y: 4, z: 9})) == \
        [T.Lt(T.Add(y, 1), z)]
    out = lia_project(u, [T.Le(0, u), T.Lt(u, z), T.Lt(u, w)], Model({u: 0, z: 3, w: 5}))
    assert set(out) == {T.Lt(0, z), T.Lt(0, w)}
    assert lia_project(u, [T.Eq(T.Mul(2, u), y)], Model({u: 3, y: 6})) == [T.Dvd(2, y)]


def test_array_project_examples():
    M = Model({a: ArrayValue.make(0, {2: 3}), b: ArrayValue.make(0, {2: 3}), i: 1, j: 2})
    lits, W = array_project(a, [T.Eq(a, T.Store(b, i, 0)), T.Gt(T.Select(a, j), 0)], M)
    assert T.Gt(T.Select(b, j), 0) in lits and not W
    M = Model({a: ArrayValue(0), b: ArrayValue(0), i: 1, j: 1})
    lits, W = array_project(a, [T.Eq(a, T.Store(b, i, 0)), T.Ge(T.Select(a, j), 0)], M)
    assert lits == [T.Eq(i, j)]
    lits, W = array_project(a, [T.Eq(T.Select(a, i), 5)], Model({a: ArrayValue(5), i: 1}))
    (k,) = W
    assert lits == [T.Eq(k, 5)]


def test_corrupted_projection_fails_condition_3(solver):
    U, phi, M = {x}, T.And(T.Eq(x, y), T.Gt(x, 0)), Model({x: 1, y: 1})
    bad = ProjectionResult(T.TRUE, frozenset())
    rep = check_mbp_contract(U, phi, M, bad, solver=solver)
    assert rep.failed() == ["3_implies_projection"]


def test_projection_leaving_array_fails_condition_2(solver):
    U, phi = {a}, T.Eq(T.Select(a, i), 1)
    M = Model({a: ArrayValue(1), i: 0})
    rep = check_mbp_contract(U, phi, M, ProjectionResult(phi, frozenset()), solver=solver)
    assert "2_constants" in rep.failed()


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 10**6))
def test_mbp_contract_property(solver, seed):
    U, phi, M = mbp_instance(seed)
    r = pmbp(U, phi, M)
    rep = check_mbp_contract(U, phi, M, r, solver=solver)
    assert rep.ok, (seed, rep.failed())


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10**4))
def test_finite_range_property(seed):
    U, phi = small_mbp_pair(seed)
    n, outs, bound = finite_range(U, phi, pmbp)
    assert len(outs) <= bound
