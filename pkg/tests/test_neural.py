import numpy as np
import pytest

from _suites import LOSSES, gradient_check, loss_and_seeds, _problem
from metaseq.core import DivergedTrainingError, RandomSource
from metaseq.neural import (
    AdamState,
    CellParams,
    adam_step,
    backward,
    clip_global_norm,
    cross_entropy_and_grad,
    encode_decision_input,
    encode_prediction_input,
    finite_difference_check,
    forward_step,
    load_checkpoint,
    save_checkpoint,
    softmax_temperature,
    stop_gradient,
    td_loss_and_grad,
    unroll,
)


def small_params(seed=0, n_in=2, hidden=4, n_obs=2, n_act=2):
    return CellParams.initialize(n_in, hidden, n_obs, n_act, RandomSource(seed))


class TestForward:
    def test_zero_params_uniform(self):
        p = CellParams.zeros(2, 5, 2, 3)
        heads, h, _ = forward_step(p, encode_prediction_input(None, 4, 2), p.initial_memory(4))
        np.testing.assert_array_equal(heads["pred"], 0.0)
        np.testing.assert_allclose(softmax_temperature(heads["pred"]), 0.5)
        np.testing.assert_array_equal(h, 0.0)

    def test_deterministic(self):
        p = small_params()
        x, h0 = np.random.default_rng(0).normal(size=(3, 2)), np.zeros((3, 4))
        a, ha, _ = forward_step(p, x, h0)
        b, hb, _ = forward_step(p, x, h0)
        np.testing.assert_array_equal(a["pred"], b["pred"])
        np.testing.assert_array_equal(ha, hb)

    def test_causal(self):
        p = small_params(3)
        xs = np.eye(2)[np.random.default_rng(1).integers(0, 2, size=(6, 1))]
        xs[0] = 0.0
        out_a, _, _ = unroll(p, xs)
        xs_b = xs.copy()
        xs_b[4] = 1.0 - xs_b[4]
        out_b, _, _ = unroll(p, xs_b)
        for t in range(4):
            np.testing.assert_array_equal(out_a[t]["pred"], out_b[t]["pred"])
        assert not np.array_equal(out_a[4]["pred"], out_b[4]["pred"])

    def test_initialization(self):
        p = small_params(hidden=16)
        assert np.all(p.weights["bz"] == 1.0)
        assert np.all(p.weights["bn"] == 0.0)
        assert np.abs(p.weights["Uz"]).max() <= 0.25

    def test_divergence(self):
        p = small_params()
        p.weights["Wn"][0, 0] = np.nan
        with pytest.raises(DivergedTrainingError):
            forward_step(p, np.ones((1, 2)), np.zeros((1, 4)))


class TestSoftmax:
    def test_zero_beta_uniform(self):
        np.testing.assert_allclose(softmax_temperature(np.array([3.0, -1.0, 7.0]), 0.0), 1 / 3)

    def test_large_beta_argmax(self):
        p = softmax_temperature(np.array([1.0, 2.0]), 200.0)
        assert p[1] > 1 - 1e-12

    def test_normalized(self):
        p = softmax_temperature(np.random.default_rng(0).normal(size=(50, 4)) * 30, 5.0)
        np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-9)

    def test_negative_beta(self):
        with pytest.raises(ValueError):
            softmax_temperature(np.zeros(2), -1.0)


class TestLosses:
    def test_cross_entropy_uniform(self):
        l, g = cross_entropy_and_grad(np.zeros((1, 2)), np.array([[1.0, 0.0]]))
        assert l[0] == pytest.approx(np.log(2))
        np.testing.assert_allclose(g, [[-0.5, 0.5]])

    def test_td(self):
        l, g = td_loss_and_grad(np.array([[1.0, 2.0]]), np.array([1]), np.array([0.5]))
        assert l[0] == pytest.approx(2.25)
        np.testing.assert_allclose(g, [[0.0, 3.0]])

    def test_stop_gradient_is_frozen_copy(self):
        x = np.array([1.0, 2.0])
        y = stop_gradient(x)
        np.testing.assert_array_equal(x, y)
        with pytest.raises(ValueError):
            y[0] = 3.0
        x[0] = 5.0
        assert y[0] == 1.0


class TestGradients:
    @pytest.mark.parametrize("kind", LOSSES)
    def test_bptt_matches_finite_differences(self, kind):
        res = gradient_check(kind, hidden=6, horizon=4, batch=2, seed=11, n_params=None)
        assert res.n_checked > 200
        assert res.passed(1e-4), res

    def test_td_target_carries_no_gradient(self):
        # Against a loss whose targets move with the parameters the hand
        # gradient must disagree: the stop-gradient actually cuts the path.
        rng = RandomSource(4)
        params, inputs, data = _problem("td", 5, 4, 2, rng)
        _, tape, seeds, _ = loss_and_seeds("td", params, inputs, data)
        grads = backward(params, tape, seeds)
        live = finite_difference_check(params, lambda p: loss_and_seeds("td", p, inputs, data)[0], grads,
                                       n_params=None)
        assert live.max_rel_error > 1e-2

    def test_rejects_non_finite_gradient(self):
        params, inputs, data = _problem("log_loss", 3, 3, 1, RandomSource(0))
        _, tape, seeds, _ = loss_and_seeds("log_loss", params, inputs, data)
        seeds[0]["pred"] = np.full_like(seeds[0]["pred"], np.inf)
        with pytest.raises(DivergedTrainingError):
            backward(params, tape, seeds)


class TestEncoding:
    def test_sentinel(self):
        np.testing.assert_array_equal(encode_prediction_input(None, 2, 3), 0.0)
        np.testing.assert_array_equal(encode_decision_input(None, None, None, 2, 2, 2), 0.0)

    def test_decision_layout(self):
        x = encode_decision_input(np.array([1]), np.array([0]), np.array([0.0]), 1, 2, 2)
        np.testing.assert_array_equal(x, [[0, 1, 1, 0, 0]])


class TestAdam:
    def test_first_step_size(self):
        # bias correction makes the first step lr * sign(g)
        p = CellParams.zeros(1, 1, 2, 0)
        g = {k: np.full_like(v, 3.0) for k, v in p.weights.items()}
        new, state = adam_step(p, g, AdamState.for_params(p), lr=0.01)
        np.testing.assert_allclose(new.weights["Wz"], -0.01, rtol=1e-6)
        assert state.step == 1

    def test_minimizes_quadratic(self):
        p = CellParams.zeros(1, 1, 2, 0)
        state = AdamState.for_params(p)
        for _ in range(3000):
            g = {k: 2 * (v - 1.0) for k, v in p.weights.items()}
            p, state = adam_step(p, g, state, lr=0.01)
        np.testing.assert_allclose(p.weights["W_pred"], 1.0, atol=1e-3)

    def test_clip(self):
        g = {"a": np.array([30.0, 40.0])}
        clipped, norm = clip_global_norm(g, 10.0)
        assert norm == 50.0
        np.testing.assert_allclose(clipped["a"], [6.0, 8.0])
        same, _ = clip_global_norm({"a": np.array([3.0, 4.0])}, 10.0)
        np.testing.assert_array_equal(same["a"], [3.0, 4.0])


class TestCheckpoint:
    def test_round_trip_exact(self, tmp_path):
        p = small_params(5, n_in=5, hidden=6, n_act=2)
        state = AdamState.for_params(p)
        state.m["Wz"][:] = 1 / 3
        path = tmp_path / "ck.json"
        save_checkpoint(path, p, state, meta={"batch": 7})
        q, s2, meta = load_checkpoint(path)
        for k in p.weights:
            np.testing.assert_array_equal(p.weights[k], q.weights[k])
        np.testing.assert_array_equal(s2.m["Wz"], state.m["Wz"])
        assert meta == {"batch": 7}
        x = np.random.default_rng(0).normal(size=(3, 5))
        a, _, _ = forward_step(p, x, np.zeros((3, 6)))
        b, _, _ = forward_step(q, x, np.zeros((3, 6)))
        np.testing.assert_allclose(a["q"], b["q"], atol=1e-12, rtol=0)

    def test_rejects_other_files(self, tmp_path):
        path = tmp_path / "x.json"
        path.write_text('{"format": "other"}')
        with pytest.raises(ValueError):
            load_checkpoint(path)

    def test_save_is_stable(self, tmp_path):
        p = small_params(2)
        save_checkpoint(tmp_path / "a.json", p)
        save_checkpoint(tmp_path / "b.json", p)
        assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
