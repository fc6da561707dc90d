"""Seeded generators of small projection and interpolation instances."""
from __future__ import annotations

import itertools
import random
from typing import Optional

from . import terms as T
from .smt import ArrayValue, DomainBound, Model, compile_term
from .terms import Term

X, Y, Z = T.Ints("x y z")
I, J = T.Ints("i j")
A, B = T.Array("a"), T.Array("b")
INTS = (X, Y, Z, I, J)


def _lin(rng: random.Random, pool) -> Term:
    ts = rng.sample(pool, rng.randint(1, 2))
    return T.Add(*(T.Mul(rng.choice((-2, -1, 1, 1, 2)), t) for t in ts))


def _read(rng: random.Random, arrays) -> Term:
    arr = rng.choice(arrays)
    if arr is B and rng.random() < 0.3:
        arr = T.Store(B, rng.choice((I, J)), rng.choice((X, T.IntVal(0), T.IntVal(1))))
    return T.Select(arr, rng.choice((I, J, X)))


def literal(rng: random.Random, ints, arrays) -> Term:
    r = rng.random()
    k = rng.randint(-2, 2)
    if arrays and r < 0.15 and A in arrays:
        rhs = rng.choice((B, T.Store(B, rng.choice((I, J)), rng.choice((X, Y, T.IntVal(1))))))
        return T.Eq(A, rhs)
    if arrays and r < 0.45:
        lhs = _read(rng, arrays)
        other = rng.choice((T.IntVal(k), rng.choice(ints)))
        return rng.choice((T.Le, T.Lt, T.Eq, T.Ne))(lhs, other)
    lhs = _lin(rng, ints)
    if rng.random() < 0.1:
        return T.Dvd(2, lhs, rng.randint(0, 1))
    return rng.choice((T.Le, T.Lt, T.Eq, T.Ne, T.Ge))(lhs, k)


def formula(rng: random.Random, ints, arrays, n: Optional[int] = None) -> Term:
    n = n or rng.randint(2, 4)
    lits = [literal(rng, ints, arrays) for _ in range(n)]
    if rng.random() < 0.3 and len(lits) >= 2:
        k = rng.randint(1, len(lits) - 1)
        return T.Or(T.And(*lits[:k]), T.And(*lits[k:]))
    return T.And(*lits)


def random_model(rng: random.Random, phi: Term, bound: DomainBound, tries: int = 400) -> Optional[Model]:
    """A random bounded model of ``phi`` (None if sampling finds none)."""
    cs = sorted(T.consts(phi), key=lambda c: c.key)
    f = compile_term(phi)
    for _ in range(tries):
        env = {}
        for c in cs:
            if c.sort is T.INT:
                env[c] = rng.choice(bound.ints)
            else:
                env[c] = ArrayValue.make(0, {k: rng.choice(bound.ints) for k in range(bound.index_size)})
        if f(env):
            return Model(env)
    return None


def mbp_instance(seed: int, bound: DomainBound = DomainBound(-2, 2, 2)):
    """``(U, phi, M)`` with at least one constant to eliminate."""
    rng = random.Random(seed)
    while True:
        arrays = [A, B] if rng.random() < 0.6 else []
        ints = [X, Y, Z]
        phi = formula(rng, ints, arrays)
        if phi.op == "bool":
            continue
        cs = T.consts(phi)
        cand = [c for c in (X, Y, A) if c in cs]
        if not cand:
            continue
        U = set(rng.sample(cand, rng.randint(1, len(cand))))
        M = random_model(rng, phi, bound)
        if M is not None:
            return U, phi, M


def small_mbp_pair(seed: int):
    """``(U, phi)`` over few enough constants to enumerate all of its models."""
    rng = random.Random(10_000 + seed)
    while True:
        arrays = [A] if rng.random() < 0.5 else []
        ints = [X, Y] if arrays else [X, Y, Z]
        lits = []
        for _ in range(rng.randint(2, 3)):
            if arrays and rng.random() < 0.5:
                lits.append(rng.choice((T.Le, T.Eq, T.Ne))(T.Select(A, rng.choice(ints)), rng.choice((0, 1, Y))))
            else:
                lits.append(literal(rng, ints, []))
        phi = T.And(*lits)
        if phi.op == "bool":
            continue
        cs = T.consts(phi)
        U = {c for c in (X, A) if c in cs}
        if U and any(c.sort is T.INT and c not in U for c in cs):
            return U, phi


def itp_instance(seed: int, bound: DomainBound = DomainBound(-3, 3, 2)):
    """``(A, B)`` with ``B`` a cube; unsatisfiability is checked by the caller."""
    rng = random.Random(20_000 + seed)
    shared = [X, Y]
    a_only = [Z]
    b_only = [I]
    arrays = [B] if rng.random() < 0.3 else []
    Af = formula(rng, shared + a_only, [], rng.randint(1, 3))
    Bl = [literal(rng, shared + b_only, arrays) for _ in range(rng.randint(1, 4))]
    return Af, T.And(*Bl)


def adversarial_itp(seed: int):
    """Pairs where every literal of ``B`` is needed, so nothing can be dropped."""
    rng = random.Random(30_000 + seed)
    n = rng.randint(2, 4)
    xs = [T.Const(f"p{k}") for k in range(n)]
    lo = rng.randint(-2, 2)
    # A: the sum of the p's is below lo; B: each p_k is at least its share
    A_ = T.Lt(T.Add(*xs), lo + n)
    Bc = T.And(*(T.Le(1 + (lo if k == 0 else 0), x) for k, x in enumerate(xs)))
    return A_, Bc


def all_models(phi: Term, bound: DomainBound):
    cs = sorted(T.consts(phi), key=lambda c: c.key)
    f = compile_term(phi)
    for vals in itertools.product(*(bound.domain(c) for c in cs)):
        env = dict(zip(cs, vals))
        if f(env):
            yield Model(env)
