import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import reference as R
from conftest import binary_edge, small_models
from maxsum_bethe.errors import ModelError
from maxsum_bethe.model import (
    Hypergraph,
    MessageVector,
    Model,
    TildeTheta,
    compatibility_violations,
    evaluate,
    hat_theta,
    materialize_reparam,
    reparam_factor,
    reparam_unary,
)

NEG = -math.inf


def test_hypergraph_rejects_bad_edges():
    with pytest.raises(ModelError, match="singleton"):
        Hypergraph((2, 2), ((0,),))
    with pytest.raises(ModelError, match="duplicates"):
        Hypergraph((2, 2), ((0, 1), (0, 1)))
    with pytest.raises(ModelError, match="strictly increasing"):
        Hypergraph((2, 2), ((1, 0),))
    with pytest.raises(ModelError, match="outside"):
        Hypergraph((2, 2), ((0, 2),))


def test_acyclicity():
    assert Hypergraph((2, 2, 2), ((0, 1), (1, 2))).is_acyclic()
    assert not Hypergraph((2, 2, 2), ((0, 1), (1, 2), (0, 2))).is_acyclic()
    # a ternary factor plus a pair inside it forms a cycle in the factor graph
    assert not Hypergraph((2, 2, 2), ((0, 1, 2), (0, 1))).is_acyclic()


def test_model_rejects_bad_tables():
    with pytest.raises(ModelError):
        Model([2], [[0.0, math.nan]])
    with pytest.raises(ModelError):
        Model([2], [[0.0, math.inf]])
    with pytest.raises(ModelError):
        Model([2], [[NEG, NEG]])
    with pytest.raises(ModelError):
        Model([2, 2], [[0, 0], [0, 0]], [((0, 1), [1, 2, 3])])


def test_tables_are_read_only_and_flat_layout_is_row_major():
    m = Model([2, 3], [[0, 0], [0, 0, 0]], [((0, 1), list(range(6)))])
    assert m.factors[0].table[1, 0] == 3.0  # last variable varies fastest
    with pytest.raises(ValueError):
        m.factors[0].table[0, 0] = 9.0


def test_evaluate_examples():
    m = Model([2, 2], [[0, 1], [0, 0]], [((0, 1), [[0, 0], [0, 2]])])
    assert evaluate(m, (1, 1)) == 3.0
    z = Model([2, 3], [[0, 0], [0, 0, 0]], [((0, 1), np.zeros((2, 3)))])
    assert evaluate(z, (1, 2)) == 0.0
    chain = Model([2, 2, 2], [[0, 0]] * 3, [((0, 1), [0, 1, 2, 3]), ((1, 2), [0, 1, 2, 3])])
    assert evaluate(chain, (1, 0, 1)) == R.energy(chain, (1, 0, 1)) == 3.0
    with pytest.raises(ModelError):
        evaluate(m, (2, 0))
    dead = Model([2, 2], [[NEG, 0], [0, 0]], [((0, 1), [[NEG, NEG], [0, 0]])])
    assert evaluate(dead, (0, 1)) == NEG


def test_reparam_examples():
    m = Model([2, 2, 2], [[0, 2], [0, 0], [0, 0]], [((0, 1), np.zeros((2, 2))), ((0, 2), np.zeros((2, 2)))])
    alpha = MessageVector.zeros(m)
    assert reparam_unary(m, alpha, 0, 1) == 2.0
    alpha[0, 0] = [0.0, 0.5]
    alpha[1, 0] = [0.0, -0.25]
    assert reparam_unary(m, alpha, 0, 1) == 1.75
    e = binary_edge(table=np.zeros((2, 2)))
    a = MessageVector.zeros(e)
    a[0, 0] = [1.0, 1.0]
    assert reparam_unary(e, a, 0, 0) == -1.0
    a[0, 1] = [2.0, 2.0]
    assert reparam_factor(e, a, 0, (0, 0)) == 3.0
    d = Model([2, 2], [[0, 0], [NEG, 0]], [((0, 1), [[NEG, 0], [NEG, 0]])])
    assert reparam_factor(d, MessageVector.random(d, np.random.default_rng(0)), 0, (1, 0)) == NEG


def test_messages_must_be_finite():
    m = binary_edge()
    with pytest.raises(ModelError):
        MessageVector(m, [0, 0, math.inf, 0])
    a = MessageVector.zeros(m)
    with pytest.raises(ModelError):
        a[0, 1] = [NEG, 0]


def test_hat_theta_examples():
    m = binary_edge(table=np.zeros((2, 2)))
    h = hat_theta(m, [[0.0, -1.0], [0.0, -2.0]])
    np.testing.assert_array_equal(h.factors[0].table, [[0, -2], [-1, -3]])
    assert hat_theta(m, TildeTheta.zeros(m)).equals(m)
    with pytest.raises(ModelError):
        hat_theta(m, [[0.0], [0.0, 0.0]])


def test_tilde_constructors():
    m = Model([3, 2], [[0, NEG, 1], [0, 0]], [((0, 1), [[0, 0], [NEG, NEG], [1, 1]])])
    u = TildeTheta.uniform(m, 1.0)
    np.testing.assert_allclose(u[0], [-math.log(2), NEG, -math.log(2)])
    assert u.normalization_error(1.0) < 1e-12
    assert TildeTheta.uniform(m, "inf")[1].tolist() == [0.0, 0.0]
    r = TildeTheta.random(m, np.random.default_rng(1), 2.0)
    assert r.normalization_error(2.0) < 1e-12 and r[0][1] == NEG


def test_compatibility_violations():
    ok = Model([2, 2], [[NEG, 0], [0, 0]], [((0, 1), [[NEG, NEG], [0, 0]])])
    assert compatibility_violations(ok) == []
    bad = Model([2, 2], [[0, 0], [0, 0]], [((0, 1), [[NEG, NEG], [0, 0]])])
    assert compatibility_violations(bad) == [(0, 0, 0)]


@given(small_models(), st.integers(0, 2**32 - 1))
def test_reparameterization_preserves_energy(m, seed):
    rng = np.random.default_rng(seed)
    alpha = MessageVector.random(m, rng, 3.0)
    rm = materialize_reparam(m, alpha)
    for _ in range(5):
        x = tuple(int(rng.integers(d)) for d in m.domains)
        assert abs(evaluate(rm, x) - evaluate(m, x)) <= 1e-9
        for v in range(m.num_vars):
            assert rm.unary[v][x[v]] == pytest.approx(reparam_unary(m, alpha, v, x[v]), abs=1e-12)


@given(small_models(), st.integers(0, 2**32 - 1))
def test_materialize_round_trip_and_compatibility(m, seed):
    alpha = MessageVector.random(m, np.random.default_rng(seed))
    back = materialize_reparam(materialize_reparam(m, alpha), -alpha)
    for u, w in zip(back.unary, m.unary):
        np.testing.assert_allclose(u, w, atol=1e-9)
    for f, g in zip(back.factors, m.factors):
        np.testing.assert_allclose(f.table, g.table, atol=1e-9)
    assert compatibility_violations(materialize_reparam(m, alpha)) == []
    assert materialize_reparam(m, MessageVector.zeros(m)).equals(m)


@given(small_models(allow_ternary=True), st.integers(0, 2**32 - 1))
def test_hat_theta_matches_broadcast_sums(m, seed):
    rng = np.random.default_rng(seed)
    tilde = TildeTheta.random(m, rng, 1.0)
    h = hat_theta(m, tilde)
    for f, g in zip(m.factors, h.factors):
        for xa in np.ndindex(*f.table.shape):
            want = f.table[xa] + sum(tilde[v][s] for v, s in zip(f.vars, xa))
            assert g.table[xa] == pytest.approx(want, abs=1e-12)
