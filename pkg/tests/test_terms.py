import pytest
from hypothesis import given, settings, strategies as st

from quic3 import terms as T
from quic3.terms import Kind, Subst

x, y, i, j, sz = T.Ints("x y i j sz")
A = T.Array("A")
Ap = T.prime(A)
jp = T.prime(j)


def test_hash_consing_shares_structure():
    assert T.Add(x, 1) is T.Add(x, 1)
    assert T.Select(A, i) is T.Select(A, i)


def test_free_vars_examples():
    assert T.free_vars(T.Eq(T.Select(A, T.Var(2)), 0)) == {2}
    assert T.free_vars(T.Lt(T.Add(x, 1), y)) == frozenset()
    assert T.free_vars(T.Le(T.Var(0), T.Var(0))) == {0} or T.Le(T.Var(0), T.Var(0)) is T.TRUE


def test_consts_examples():
    sk1 = T.Skolem(1)
    assert T.consts(T.Gt(T.Select(A, sk1), x)) == {A, sk1, x}
    assert T.consts(T.Lt(3, 5)) == frozenset()
    assert T.consts(T.Eq(T.Store(A, i, 0), Ap)) == {A, i, Ap}


def test_subst_examples():
    v0, v1 = T.Var(0), T.Var(1)
    body = T.Eq(T.Select(A, v0), 0)
    assert T.apply_subst(body, Subst({0: j})) is T.Eq(T.Select(A, j), 0)
    assert T.apply_subst(body, Subst()) is body
    assert T.apply_subst(T.Lt(v0, v1), Subst({0: T.IntVal(1)})) is T.Lt(1, v1)


def test_subst_sort_checked():
    with pytest.raises(T.SortError):
        Subst({0: A})


def test_subst_union_left_biased():
    s = Subst({0: x}) | Subst({0: y, 1: i})
    assert s[0] is x and s[1] is i


def test_skolemize_examples():
    v0, v3 = T.Var(0), T.Var(3)
    assert T.skolemize(T.Ne(T.Select(Ap, v0), 0)) is T.Ne(T.Select(Ap, T.Skolem(0)), 0)
    g = T.Lt(x, 5)
    assert T.skolemize(g) is g
    assert T.skolemize(T.Lt(T.Add(v3, v0), 5)) is T.Lt(T.Add(T.Skolem(3), T.Skolem(0)), 5)


def test_abs_examples():
    sk2 = T.Skolem(2)
    body, sigma = T.abstract({sk2}, T.Eq(T.Select(A, sk2), 0))
    assert body is T.Eq(T.Select(A, T.Var(2)), 0)
    assert sigma == {2: sk2}
    phi = T.Lt(x, 3)
    assert T.abstract(set(), phi) == (phi, Subst())
    cube = T.And(T.Ne(T.Select(A, jp), 0), T.Le(0, jp), T.Lt(jp, sz))
    body, sigma = T.abstract({jp}, cube)
    v0 = T.Var(0)
    assert body is T.And(T.Ne(T.Select(A, v0), 0), T.Le(0, v0), T.Lt(v0, sz))
    assert sigma == {0: jp}


def test_abs_rejects_array_constants():
    with pytest.raises(T.AbstractionError):
        T.abstract({A}, T.Eq(T.Select(A, 0), 1))


def test_prime_examples():
    assert T.prime(T.Lt(x, 5)) is T.Lt(T.prime(x), 5)
    assert T.prime(T.Eq(T.Select(A, i), 0)) is T.Eq(T.Select(Ap, T.prime(i)), 0)
    assert T.prime(x).kind is Kind.PRIMED


def test_linear_normal_form():
    assert T.Le(T.Add(x, x), 4) is T.Le(x, 2)
    assert T.Lt(x, 0) is T.Le(x, -1)
    assert T.Eq(T.Add(x, 1), T.Add(x, 1)) is T.TRUE


def test_sort_errors():
    with pytest.raises(T.SortError):
        T.Add(x, A)
    with pytest.raises(T.SortError):
        T.Select(x, 0)


# ---------------------------------------------------------------------------
# properties

INTS = [x, y, i, j]


def int_terms():
    leaf = st.one_of(st.sampled_from(INTS), st.integers(-3, 3).map(T.IntVal),
                     st.integers(0, 2).map(T.Var), st.integers(0, 2).map(T.Skolem))
    return st.recursive(leaf, lambda sub: st.one_of(
        st.tuples(sub, sub).map(lambda p: T.Add(*p)),
        st.tuples(st.integers(-2, 2), sub).map(lambda p: T.Mul(*p)),
        sub.map(lambda t: T.Select(A, t))), max_leaves=6)


def formulas():
    atom = st.tuples(st.sampled_from([T.Le, T.Lt, T.Eq, T.Ne]), int_terms(), int_terms()).map(
        lambda p: p[0](p[1], p[2]))
    return st.recursive(atom, lambda sub: st.one_of(
        st.lists(sub, min_size=1, max_size=3).map(lambda xs: T.And(*xs)),
        st.lists(sub, min_size=1, max_size=3).map(lambda xs: T.Or(*xs)),
        sub.map(T.Not)), max_leaves=5)


def ground_formulas():
    return formulas().map(lambda f: T.substitute(f, {T.Var(k): T.IntVal(k) for k in range(3)}))


@given(formulas())
def test_skolemize_is_ground_and_uses_matching_skolems(f):
    g = T.skolemize(f)
    assert T.is_ground(g)
    had = {T.skolem_index(c) for c in T.consts(f) if c.kind is Kind.SKOLEM}
    got = {T.skolem_index(c) for c in T.consts(g) if c.kind is Kind.SKOLEM}
    assert got <= had | set(T.free_vars(f))
    assert T.skolemize(g) is g


@given(formulas())
def test_abs_of_skolemize_round_trips(f):
    sks = {c for c in T.consts(T.skolemize(f)) if c.kind is Kind.SKOLEM}
    body, sigma = T.abstract(sks, T.skolemize(f))
    # skolems already present in f also become variables
    assert T.skolemize(body) is T.skolemize(f)
    assert T.apply_subst(body, sigma) is T.skolemize(f)


@given(ground_formulas(), st.sampled_from(INTS))
def test_abs_then_apply_is_identity(f, c):
    body, sigma = T.abstract({c}, f)
    assert T.apply_subst(body, sigma) is f
    assert c not in T.consts(body)


@given(formulas(), st.dictionaries(st.integers(0, 2), int_terms(), max_size=3),
       st.dictionaries(st.integers(0, 2), int_terms(), max_size=3))
@settings(max_examples=60)
def test_subst_composition(f, s1, s2):
    # applying s1 then s2 equals applying the composed map
    a, b = Subst(s1), Subst(s2)
    composed = Subst({k: T.apply_subst(v, b) for k, v in a.items()}) | b
    assert T.apply_subst(T.apply_subst(f, a), b) is T.apply_subst(f, composed)


@given(ground_formulas())
def test_prime_unprime_round_trip(f):
    assert T.unprime(T.prime(f)) is f
