import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from emlsr_isac.config import CvOffdiag
from emlsr_isac.kalman import (H, Measurement, MotionModel, initial_belief, predict, predict_state,
                               process_noise_block, process_noise_cov, propagate_truth,
                               synthesize_measurement, transition_matrix, update)
from emlsr_isac.model import BeliefKind, TargetState, TrackBelief
from emlsr_isac.streams import Stream

STD = CvOffdiag.STANDARD
PRINTED = CvOffdiag.PRINTED


def belief(state, mse, kind=BeliefKind.UPDATED):
    return TrackBelief(TargetState(*state), np.asarray(mse, float), kind)


def random_spd(rng, n=4):
    a = rng.normal(size=(n, n))
    return a @ a.T + 1e-3 * np.eye(n)


def rel_err(a, b):
    return np.max(np.abs(a - b)) / np.max(np.abs(b))


class TestTransition:
    def test_zero_elapsed_is_identity(self):
        assert np.array_equal(transition_matrix(0.0), np.eye(4))

    def test_unit_elapsed(self):
        expect = np.array([[1, 1, 0, 0], [0, 1, 0, 0], [0, 0, 1, 1], [0, 0, 0, 1]], float)
        assert np.array_equal(transition_matrix(1.0), expect)

    def test_half_second_propagation(self):
        x = transition_matrix(0.5) @ np.array([0.0, 1.0, 0.0, 2.0])
        assert (x[0], x[2]) == (0.5, 1.0)

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            transition_matrix(-1e-9)

    @given(st.floats(0, 100))
    def test_kronecker_structure(self, t):
        F = transition_matrix(t)
        assert np.array_equal(F, np.kron(np.eye(2), np.array([[1.0, t], [0.0, 1.0]])))


class TestProcessNoise:
    def test_zero_elapsed(self):
        assert np.array_equal(process_noise_cov(0.0, 0.1), np.zeros((4, 4)))

    def test_printed_block(self):
        blk = process_noise_block(1.0, 0.1, PRINTED)
        np.testing.assert_allclose(blk, [[0.1 / 3, 0.1], [0.1, 0.1]], rtol=1e-15)

    def test_standard_block(self):
        blk = process_noise_block(1.0, 0.1, STD)
        np.testing.assert_allclose(blk, [[0.1 / 3, 0.05], [0.05, 0.1]], rtol=1e-15)

    def test_block_diagonal(self):
        Q = process_noise_cov(0.7, 0.3, STD)
        assert np.array_equal(Q[:2, 2:], np.zeros((2, 2)))
        assert np.array_equal(Q[:2, :2], Q[2:, 2:])

    @given(st.floats(1e-4, 50), st.floats(1e-4, 10))
    def test_standard_is_psd(self, t, g):
        ev = np.linalg.eigvalsh(process_noise_block(t, g, STD))
        assert ev.min() >= -1e-12 * ev.max()

    @given(st.floats(1e-3, 50))
    def test_printed_is_indefinite(self, t):
        # det = g^2 T^4 (1/3 - 1) < 0 for every T > 0
        ev = np.linalg.eigvalsh(process_noise_block(t, 0.1, PRINTED))
        assert ev.min() < 0


class TestPredict:
    def test_zero_elapsed_flips_kind(self):
        prior = belief((1, 2, 3, 4), np.diag([1.0, 2, 3, 4]))
        out = predict(prior, 0.0, MotionModel(0.1, STD))
        assert out.kind is BeliefKind.PREDICTED
        assert out.state == prior.state
        assert np.array_equal(out.mse, prior.mse)

    def test_position_after_two_seconds(self):
        out = predict(belief((0, 1, 0, 1), np.eye(4)), 2.0, MotionModel(0.1, STD))
        assert out.state.position == (2.0, 2.0)

    def test_mse_hand_oracle_printed(self):
        out = predict(belief((0, 0, 0, 0), np.eye(4)), 1.0, MotionModel(0.1, PRINTED))
        expect = np.array([[2.0 + 0.1 / 3, 1.1], [1.1, 1.1]])
        np.testing.assert_allclose(out.mse[:2, :2], expect, rtol=1e-14)
        np.testing.assert_allclose(out.mse[2:, 2:], expect, rtol=1e-14)

    def test_time_stamp_advances(self):
        out = predict(belief((0, 0, 0, 0), np.eye(4)), 0.25, MotionModel(0.1))
        assert out.time == 250_000_000

    @given(st.lists(st.floats(-100, 100), min_size=8, max_size=8),
           st.floats(-3, 3), st.floats(-3, 3), st.floats(0, 10))
    def test_linear_in_state(self, v, a, b, t):
        x1, x2 = np.array(v[:4]), np.array(v[4:])
        p1 = predict_state(TargetState(*x1), t).as_vector()
        p2 = predict_state(TargetState(*x2), t).as_vector()
        p = predict_state(TargetState(*(a * x1 + b * x2)), t).as_vector()
        np.testing.assert_allclose(p, a * p1 + b * p2, rtol=1e-9, atol=1e-9)

    def test_composition_standard(self):
        # F2 Q1 F2^T + Q2 == Q(T1+T2) only for the T^2/2 convention
        t1, t2, g = 0.3, 1.7, 0.2
        F2 = transition_matrix(t2)
        lhs = F2 @ process_noise_cov(t1, g, STD) @ F2.T + process_noise_cov(t2, g, STD)
        np.testing.assert_allclose(lhs, process_noise_cov(t1 + t2, g, STD), rtol=1e-12)

    def test_composition_fails_for_printed(self):
        t1, t2, g = 0.3, 1.7, 0.2
        F2 = transition_matrix(t2)
        lhs = F2 @ process_noise_cov(t1, g, PRINTED) @ F2.T + process_noise_cov(t2, g, PRINTED)
        assert not np.allclose(lhs, process_noise_cov(t1 + t2, g, PRINTED), rtol=1e-6)


def information_form(P, sigma2, x, z):
    Rinv = np.eye(2) / sigma2
    info = np.linalg.inv(P) + H.T @ Rinv @ H
    mse = np.linalg.inv(info)
    state = x + mse @ H.T @ Rinv @ (z - H @ x)
    return state, mse


class TestUpdate:
    def test_huge_noise_keeps_prediction(self):
        pred = belief((1, 2, 3, 4), np.eye(4), BeliefKind.PREDICTED)
        out = update(pred, Measurement((100.0, -50.0), 1e18))
        np.testing.assert_allclose(out.state.as_vector(), [1, 2, 3, 4], atol=1e-6)

    def test_perfect_prior_ignores_measurement(self):
        pred = belief((1, 2, 3, 4), np.zeros((4, 4)), BeliefKind.PREDICTED)
        out = update(pred, Measurement((9.0, 9.0), 1.0))
        assert out.state == pred.state

    def test_hand_gain(self):
        pred = belief((0, 0, 0, 0), np.eye(4), BeliefKind.PREDICTED)
        out = update(pred, Measurement((1.0, 0.0), 1.0))
        assert out.state.x == pytest.approx(0.5, abs=1e-15)
        assert (out.state.vx, out.state.y, out.state.vy) == (0.0, 0.0, 0.0)
        assert out.kind is BeliefKind.UPDATED

    def test_requires_predicted(self):
        with pytest.raises(ValueError):
            update(belief((0, 0, 0, 0), np.eye(4)), Measurement((0.0, 0.0), 1.0))

    def test_measurement_noise_positive(self):
        with pytest.raises(ValueError):
            Measurement((0.0, 0.0), 0.0)

    def test_information_filter_oracle(self):
        rng = np.random.default_rng(7)
        for _ in range(1000):
            P = random_spd(rng)
            x = rng.normal(size=4) * 10
            z = rng.normal(size=2) * 10
            s2 = 10 ** rng.uniform(-4, 2)
            out = update(belief(x, P, BeliefKind.PREDICTED), Measurement(tuple(z), s2))
            state, mse = information_form(P, s2, x, z)
            assert rel_err(out.mse, mse) < 1e-9
            assert rel_err(out.state.as_vector(), state) < 1e-9
            assert out.is_consistent(1e-9)


class TestTruth:
    def test_zero_elapsed_returns_input(self):
        s = TargetState(1.0, 2.0, 3.0, 4.0)
        assert propagate_truth(s, 0.0, MotionModel(0.1), Stream(0, "motion")) is s

    def test_deterministic_limit(self):
        s = propagate_truth(TargetState(0, 1, 0, 0), 3.0, MotionModel(1e-12), Stream(0, "motion"))
        assert abs(s.x - 3.0) < 1e-3 and abs(s.y) < 1e-3

    def test_monte_carlo_covariance(self):
        model = MotionModel(0.1)
        rng = Stream(3, "motion")
        start = TargetState(0, 0, 0, 0)
        draws = np.array([propagate_truth(start, 1.0, model, rng).as_vector()
                          for _ in range(100_000)])
        emp = np.cov(draws.T)
        Q = process_noise_cov(1.0, 0.1, STD)
        blocks = [(0, 0), (0, 1), (1, 1), (2, 2), (2, 3), (3, 3)]
        for i, j in blocks:
            assert abs(emp[i, j] - Q[i, j]) <= 0.05 * abs(Q[i, j])
        assert abs(emp[0, 2]) < 0.05 * Q[0, 0]

    def test_same_seed_same_path(self):
        model = MotionModel(0.1)
        a, b = Stream(11, "motion"), Stream(11, "motion")
        s1 = s2 = TargetState(0, 1, 0, 0)
        for _ in range(50):
            s1 = propagate_truth(s1, 0.01, model, a)
            s2 = propagate_truth(s2, 0.01, model, b)
        assert s1 == s2


class TestMeasurement:
    def test_noiseless_limit(self):
        m = synthesize_measurement(TargetState(3, 0, -4, 0), 1e-18, Stream(0, "measurement"))
        assert abs(m.z[0] - 3) < 1e-6 and abs(m.z[1] + 4) < 1e-6

    def test_seeded(self):
        s = TargetState(0, 0, 0, 0)
        a = synthesize_measurement(s, 0.5, Stream(5, "measurement"))
        b = synthesize_measurement(s, 0.5, Stream(5, "measurement"))
        assert a == b

    def test_empirical_variance(self):
        rng = Stream(9, "measurement")
        s = TargetState(1, 0, 2, 0)
        z = np.array([synthesize_measurement(s, 0.25, rng).z for _ in range(100_000)])
        var = z.var(axis=0)
        assert np.all(np.abs(var - 0.25) <= 0.05 * 0.25)


def test_initial_belief():
    b = initial_belief(TargetState(0, 1, 0, 0))
    assert b.kind is BeliefKind.UPDATED and b.time == 0
    assert np.array_equal(b.mse, np.eye(4))
