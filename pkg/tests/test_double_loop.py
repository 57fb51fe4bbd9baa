import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import reference as R
from conftest import binary_edge, small_models
from maxsum_bethe import diffusion as D
from maxsum_bethe import double_loop as dl
from maxsum_bethe.errors import ModelError
from maxsum_bethe.generators import InstanceSpec, generate
from maxsum_bethe.model import MessageVector, Model, TildeTheta
from maxsum_bethe.oracle import exact_marginals

temperatures = st.sampled_from([1.0, math.inf])


def _messages_dict(m, alpha):
    mv = MessageVector(m, alpha)
    return {(a, v): list(mv[a, v]) for a, f in enumerate(m.factors) for v in f.vars}


def test_bp_residual_hand_example():
    s = dl.DoubleLoopState(binary_edge())
    assert dl.bp_residual(s) == 1.0


@given(small_models(), temperatures, st.integers(0, 2**32 - 1))
def test_bp_residual_matches_reference(m, beta, seed):
    msgs = MessageVector.random(m, np.random.default_rng(seed))
    s = dl.DoubleLoopState(m, beta, messages=msgs)
    assert dl.bp_residual(s) == pytest.approx(R.bp_residual(m, beta, _messages_dict(m, s.alpha)), abs=1e-10)


@given(small_models(), temperatures, st.integers(0, 2**32 - 1))
def test_inner_loop_is_diffusion_on_hat_model(m, beta, seed):
    tilde = TildeTheta.random(m, np.random.default_rng(seed), beta)
    s = dl.DoubleLoopState(m, beta, tilde=tilde)
    plain = D.DiffusionState(dl.hat_model(s), beta)
    for _ in range(5):
        dl.inner_solve(s, 1e-300, max_sweeps=1)
        D.sweep(plain)
        np.testing.assert_allclose(s.alpha, plain.alpha, atol=1e-12)
    assert dl.u_hat(s) == pytest.approx(D.dual_objective(plain), abs=1e-10)


@given(small_models())
def test_first_inner_loop_at_zero_temperature_is_plain_diffusion(m):
    s = dl.DoubleLoopState(m)
    assert not s.tilde.data.any()
    plain = D.DiffusionState(m)
    dl.inner_solve(s, 1e-10)
    D.run_to_convergence(plain, 1e-10)
    np.testing.assert_array_equal(s.alpha, plain.alpha)


def test_single_edge_converges_and_is_exact():
    m = binary_edge()
    for beta in (1.0, math.inf):
        s = dl.DoubleLoopState(m, beta)
        trace = dl.run(s, outer_tol=1e-10, inner_tol=1e-13)
        assert trace.converged
        got = dl.bp_marginals(s)
        want = exact_marginals(m, beta).to_log() if beta == 1.0 else exact_marginals(m, beta)
        for g, w in zip(got.tables(), want.tables()):
            np.testing.assert_allclose(g, w, atol=1e-8)


def test_uniform_tilde_and_bp_marginals_of_zero_model():
    m = Model([2, 3], [[0, 0], [0, 0, 0]], [((0, 1), np.zeros((2, 3)))])
    s = dl.DoubleLoopState(m, 1.0)
    np.testing.assert_allclose(s.tilde[1], [-math.log(3)] * 3)
    b = dl.bp_marginals(s)
    np.testing.assert_allclose(b.unary[0], [-math.log(2)] * 2)
    np.testing.assert_allclose(b.factors[0], np.full((2, 3), -math.log(6)))
    assert dl.bp_residual(s) == 0.0


def test_unnormalized_tilde_is_rejected():
    m = binary_edge()
    with pytest.raises(ModelError, match="normalized"):
        dl.DoubleLoopState(m, 1.0, tilde=TildeTheta.zeros(m))


def test_fixed_point_leaves_tilde_unchanged():
    m = generate(InstanceSpec(topology="chain", n=4, labels=3, seed=4))
    s = dl.DoubleLoopState(m, 1.0)
    trace = dl.run(s, outer_tol=1e-11, inner_tol=1e-13)
    assert trace.converged
    before = s.tilde.data.copy()
    dl.update_tilde(s)
    np.testing.assert_allclose(s.tilde.data, before, atol=1e-9)


@settings(max_examples=30)
@given(small_models(), temperatures)
def test_tilde_update_invariants(m, beta):
    s = dl.DoubleLoopState(m, beta)
    for _ in range(3):
        dl.outer_step(s, 1e-10)
        assert dl.tilde_mismatch(s) == 0.0
        assert s.tilde.normalization_error(beta) <= 1e-12


@settings(max_examples=30)
@given(small_models())
def test_finite_beta_bound_sequence(m):
    # the inner loop never raises U(theta_hat); the tilde reset never lowers it;
    # so the value at the end of each inner loop never decreases
    s = dl.DoubleLoopState(m, 1.0)
    before = dl.u_hat(s)
    prev_v = -math.inf
    for _ in range(6):
        rec = dl.outer_step(s, 1e-12)
        assert rec.u_hat <= before + 1e-9
        assert rec.u_hat_after_update >= rec.u_hat - 1e-9
        assert rec.u_hat >= prev_v - 1e-9
        prev_v, before = rec.u_hat, rec.u_hat_after_update


def _record(i, u, digest="a"):
    return dl.OuterRecord(i, 0.0, u, u, digest, 1, True, 0.0)


def test_key_observation_verdicts():
    ok = dl.OuterTrace(1.0, [_record(1, 0.0, "x"), _record(2, 5.0, "a"), _record(3, 5.0, "a")])
    assert dl.key_observation(ok).holds is False  # record 1 vs 2 is compared
    ok.records = ok.records[1:]
    v = dl.key_observation(ok)
    assert v.holds and v.mask_changes == 0 and v.first_violation is None
    bad = dl.OuterTrace(1.0, [_record(1, 5.0), _record(2, 5.0), _record(3, 5.0, "b"), _record(4, 5.1, "b")])
    v = dl.key_observation(bad)
    assert not v.holds and v.first_violation == 3 and v.mask_changes == 1
    assert v.max_u_change == pytest.approx(0.1)
    assert bad.mask_changes() == [0, 0, 1, 0]


def test_trace_rows_and_schedule():
    m = generate(InstanceSpec(topology="grid", rows=3, cols=3, labels=3, seed=1))
    s = dl.DoubleLoopState(m)
    trace = dl.run(s, outer_tol=1e-6, max_outer=200)
    assert trace.converged
    rows = trace.csv_rows()
    assert [r[0] for r in rows] == list(range(1, len(rows) + 1))
    assert rows[-1][1] <= -6
    assert dl.scheduled_inner_tol(1.0, 1) == dl.FIRST_INNER_TOL
    assert dl.scheduled_inner_tol(1.0, 2) == 1e-3
    assert dl.scheduled_inner_tol(1e-9, 5) == dl.MIN_INNER_TOL
    with pytest.raises(ValueError):
        dl.run(s, outer_tol=0.0)
