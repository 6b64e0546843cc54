"""Error signals, trainers, reductions, and gradient spot checks."""

import numpy as np
import pytest

from rootgrowth.ensembles import (
    EnsembleModel,
    GatingNetwork,
    MlpNetwork,
    TrainConfig,
    ensemble_output,
    expert_increments,
    gate_forward,
    gate_increments,
    gncl_target,
    init_gate,
    init_mlp,
    load_model,
    mlp_forward,
    mnce_output_error,
    mnce_penalty_grad,
    mnce_posterior,
    ncl_output_error,
    ncl_penalty,
    predict_batch,
    save_model,
    softmax,
    train_backprop,
    train_gated_ncl,
    train_me,
    train_mnce,
    train_ncl,
)
from rootgrowth.errors import DataFormatError
from rootgrowth.seeding import derive

from oracles import central_diff_grad


def blob_problem(n=12, seed=0):
    """1-D threshold task: negative inputs are class 0, positive class 1."""
    rng = np.random.default_rng(seed)
    x = np.concatenate([rng.uniform(-2.0, -0.5, n // 2), rng.uniform(0.5, 2.0, n // 2)])
    y = (x > 0).astype(np.float64)
    return x[:, None], y


class TestErrorSignals:
    def test_penalty_two_experts(self):
        # outputs 0.8, 0.2: deviations +-0.3, so P_0 = 0.3 * (-0.3)
        outs = np.array([0.8, 0.2])
        assert ncl_penalty(outs, 0) == pytest.approx(-0.09)
        assert ncl_penalty(outs, 1) == pytest.approx(-0.09)

    def test_penalties_sum_symmetric(self):
        outs = np.array([0.9, 0.4, 0.1, 0.6])
        dev = outs - outs.mean()
        for i in range(4):
            assert ncl_penalty(outs, i) == pytest.approx(dev[i] * (dev.sum() - dev[i]))

    def test_ncl_error_lambda_zero_is_plain(self):
        outs = np.array([0.7, 0.3])
        assert ncl_output_error(1.0, outs, 0, 0.0) == pytest.approx(0.3)

    def test_ncl_error_penalty_term(self):
        outs = np.array([0.7, 0.3])
        # (t - O_0) + lam * (O_0 - mean) = 0.3 + 0.5 * 0.2
        assert ncl_output_error(1.0, outs, 0, 0.5) == pytest.approx(0.4)

    def test_gncl_target_known(self):
        # errors 0 and 1: shares sigmoid(0.5) and 1 - sigmoid(0.5)
        h = gncl_target(1.0, np.array([1.0, 0.0]))
        assert h == pytest.approx([0.6224593312018546, 0.3775406687981454])
        assert h.sum() == pytest.approx(1.0)

    def test_gncl_identical_experts_uniform(self):
        h = gncl_target(1.0, np.full(5, 0.42))
        assert h == pytest.approx(np.full(5, 0.2))

    def test_mnce_posterior_reduces_to_gncl(self):
        outs = np.array([1.0, 0.0])
        g = np.array([0.5, 0.5])
        assert mnce_posterior(1.0, outs, g, 0.0) == pytest.approx(gncl_target(1.0, outs))

    def test_mnce_posterior_prior_weighting(self):
        outs = np.array([0.5, 0.5])
        g = np.array([0.9, 0.1])
        # equal fits: posterior follows the gate prior
        assert mnce_posterior(1.0, outs, g, 0.0) == pytest.approx(g)

    def test_mnce_penalty_grad_formula(self):
        outs = np.array([0.9, 0.4, 0.2])
        g = np.array([0.5, 0.3, 0.2])
        m = 3
        o_bar = outs.mean()
        for i in range(m):
            others = outs.sum() - outs[i] - (m - 1) * o_bar
            want = g[i] * others + g[i] * (m - 1) * (outs[i] - o_bar)
            assert mnce_penalty_grad(outs, g, i) == pytest.approx(want)

    def test_mnce_error_posterior_weighted(self):
        outs = np.array([0.6, 0.4])
        g = np.array([0.5, 0.5])
        h = mnce_posterior(1.0, outs, g, 0.0)
        err = mnce_output_error(1.0, outs, g, h, 0, 0.0)
        assert err == pytest.approx(h[0] * (1.0 - 0.6))

    def test_softmax(self):
        s = softmax(np.array([1.0, 1.0, 1.0]))
        assert s == pytest.approx(np.full(3, 1 / 3))
        big = softmax(np.array([1000.0, 0.0]))
        assert np.isfinite(big).all() and big.sum() == pytest.approx(1.0)


def flatten_net(w_hidden, w_out):
    return np.concatenate([w_hidden.ravel(), w_out.ravel()])


def unflatten_net(flat, hidden_shape, out_shape):
    cut = int(np.prod(hidden_shape))
    return flat[:cut].reshape(hidden_shape), flat[cut:].reshape(out_shape)


class TestIncrementGradients:
    """Increments must be exact gradients of their per-pattern objectives."""

    def test_expert_increments_descend_squared_error(self):
        rng = np.random.default_rng(20)
        net = init_mlp(3, 2, seed=1)
        x = rng.standard_normal(3)
        x_aug = np.append(x, 1.0)
        target = 1.0

        def loss(flat):
            wh, wo = unflatten_net(flat, net.w_hidden.shape, net.w_out.shape)
            probe = MlpNetwork(wh, wo)
            _, o = mlp_forward(probe, x)
            return 0.5 * (target - o) ** 2

        o_h, o = mlp_forward(net, x)
        inc_h, inc_out = expert_increments(net.w_out, x_aug, o_h, o, target - o)
        analytic = -flatten_net(inc_h, inc_out)
        fd = central_diff_grad(loss, flatten_net(net.w_hidden, net.w_out))
        assert np.allclose(analytic, fd, atol=1e-8)

    def test_gate_increments_descend_frozen_residual_loss(self):
        rng = np.random.default_rng(21)
        gate = init_gate(3, 2, n_experts=4, seed=2)
        x = rng.standard_normal(3)
        x_aug = np.append(x, 1.0)
        resid = rng.standard_normal(4) * 0.3  # frozen h - g surrogate

        def loss(flat):
            wh, wo = unflatten_net(flat, gate.w_hidden.shape, gate.w_out.shape)
            probe = GatingNetwork(wh, wo)
            _, o_sig, _ = gate_forward(probe, x)
            return -float(resid @ o_sig)

        go_h, o_sig, _ = gate_forward(gate, x)
        inc_h, inc_out = gate_increments(gate.w_out, x_aug, go_h, o_sig, resid)
        analytic = -flatten_net(inc_h, inc_out)
        fd = central_diff_grad(loss, flatten_net(gate.w_hidden, gate.w_out))
        assert np.allclose(analytic, fd, atol=1e-8)

    def test_ncl_error_is_penalized_gradient_for_two_experts(self):
        # with M = 2 the update convention equals the true derivative of
        # E = (t - O)^2 / 2 + lam * P, the partner output held fixed
        rng = np.random.default_rng(22)
        net = init_mlp(3, 2, seed=3)
        other_out = 0.35
        lam = 0.7
        x = rng.standard_normal(3)
        x_aug = np.append(x, 1.0)
        target = 0.0

        def loss(flat):
            wh, wo = unflatten_net(flat, net.w_hidden.shape, net.w_out.shape)
            _, o = mlp_forward(MlpNetwork(wh, wo), x)
            outs = np.array([o, other_out])
            return 0.5 * (target - o) ** 2 + lam * ncl_penalty(outs, 0)

        o_h, o = mlp_forward(net, x)
        outs = np.array([o, other_out])
        err = ncl_output_error(target, outs, 0, lam)
        inc_h, inc_out = expert_increments(net.w_out, x_aug, o_h, o, err)
        analytic = -flatten_net(inc_h, inc_out)
        fd = central_diff_grad(loss, flatten_net(net.w_hidden, net.w_out))
        assert np.allclose(analytic, fd, atol=1e-8)


class TestTrainers:
    def small_cfg(self, **kw):
        base = dict(n_experts=2, hidden=3, epochs=40, seed=5)
        base.update(kw)
        return TrainConfig(**base)

    def test_backprop_learns_threshold(self):
        x, y = blob_problem()
        net = train_backprop(x, y, TrainConfig(hidden=3, epochs=300, seed=1))
        outs = np.array([mlp_forward(net, row)[1] for row in x])
        assert np.mean((outs > 0.5) != y) == 0.0

    def test_ncl_lambda_zero_is_independent_backprop(self):
        x, y = blob_problem(seed=2)
        cfg = self.small_cfg()
        model = train_ncl(x, y, cfg, 0.0)
        for i, net in enumerate(model.experts):
            solo = train_backprop(
                x, y, cfg,
                init_seed=derive(cfg.seed, "expert-init", i),
                shuffle_seed=derive(cfg.seed, "shuffle"),
            )
            assert np.array_equal(net.w_hidden, solo.w_hidden)
            assert np.array_equal(net.w_out, solo.w_out)

    def test_me_is_mnce_lambda_zero(self):
        x, y = blob_problem(seed=3)
        cfg = self.small_cfg()
        me = train_me(x, y, cfg)
        mnce = train_mnce(x, y, cfg, 0.0)
        for a, b in zip(me.experts, mnce.experts):
            assert np.array_equal(a.w_hidden, b.w_hidden)
            assert np.array_equal(a.w_out, b.w_out)
        assert np.array_equal(me.gate.w_out, mnce.gate.w_out)
        assert me.variant == "me" and mnce.variant == "mnce"

    def test_gated_stage_two_leaves_experts_alone(self):
        x, y = blob_problem(seed=4)
        cfg = self.small_cfg()
        plain = train_ncl(x, y, cfg, 0.5)
        gated = train_gated_ncl(x, y, cfg, 0.5)
        for a, b in zip(plain.experts, gated.experts):
            assert np.array_equal(a.w_hidden, b.w_hidden)
            assert np.array_equal(a.w_out, b.w_out)
        assert not gated.experts[0].w_hidden.flags.writeable
        assert gated.gate is not None

    def test_deterministic(self):
        x, y = blob_problem(seed=6)
        cfg = self.small_cfg()
        a = train_mnce(x, y, cfg, 0.25)
        b = train_mnce(x, y, cfg, 0.25)
        assert np.array_equal(a.experts[0].w_hidden, b.experts[0].w_hidden)
        assert np.array_equal(a.gate.w_hidden, b.gate.w_hidden)

    def test_seed_matters(self):
        x, y = blob_problem(seed=7)
        a = train_ncl(x, y, self.small_cfg(seed=1), 0.5)
        b = train_ncl(x, y, self.small_cfg(seed=2), 0.5)
        assert not np.array_equal(a.experts[0].w_hidden, b.experts[0].w_hidden)

    def test_label_validation(self):
        x, _ = blob_problem()
        with pytest.raises(ValueError, match="0/1"):
            train_ncl(x, np.full(len(x), 2.0), self.small_cfg(), 0.0)

    def test_non_finite_inputs(self):
        x, y = blob_problem()
        x = x.copy()
        x[0, 0] = np.nan
        with pytest.raises(DataFormatError, match="non-finite"):
            train_me(x, y, self.small_cfg())

    def test_ensembles_learn_threshold(self):
        x, y = blob_problem(n=16, seed=8)
        cfg = TrainConfig(n_experts=2, hidden=3, epochs=200, seed=9)
        for model in (
            train_ncl(x, y, cfg, 0.5),
            train_gated_ncl(x, y, cfg, 0.5),
            train_me(x, y, cfg),
            train_mnce(x, y, cfg, 0.5),
        ):
            _, pred = predict_batch(model, x)
            assert np.mean(pred != y) <= 0.25, model.variant


class TestPrediction:
    def test_ncl_output_is_mean(self):
        x, y = blob_problem(seed=10)
        model = train_ncl(x, y, TrainConfig(n_experts=3, hidden=2, epochs=5, seed=11), 0.0)
        point = x[0]
        outs = [mlp_forward(net, point)[1] for net in model.experts]
        assert ensemble_output(model, point) == pytest.approx(np.mean(outs))

    def test_gated_output_is_weighted(self):
        x, y = blob_problem(seed=12)
        model = train_mnce(x, y, TrainConfig(n_experts=3, hidden=2, epochs=5, seed=13), 0.5)
        point = x[0]
        outs = np.array([mlp_forward(net, point)[1] for net in model.experts])
        _, _, g = gate_forward(model.gate, point)
        assert ensemble_output(model, point) == pytest.approx(float(outs @ g))

    def test_variant_gate_consistency_enforced(self):
        x, y = blob_problem(seed=14)
        model = train_ncl(x, y, TrainConfig(n_experts=2, hidden=2, epochs=2, seed=15), 0.0)
        with pytest.raises(ValueError, match="gate"):
            EnsembleModel("mnce", model.experts, None, 0.0, model.config)


class TestSerialization:
    def test_round_trip_bitwise(self, tmp_path):
        x, y = blob_problem(seed=16)
        model = train_mnce(x, y, TrainConfig(n_experts=2, hidden=2, epochs=10, seed=17), 0.5)
        path = tmp_path / "m.json"
        save_model(model, path)
        back = load_model(path)
        for a, b in zip(model.experts, back.experts):
            assert np.array_equal(a.w_hidden, b.w_hidden)
            assert np.array_equal(a.w_out, b.w_out)
        assert np.array_equal(model.gate.w_hidden, back.gate.w_hidden)
        assert back.config == model.config
        outs_a, _ = predict_batch(model, x)
        outs_b, _ = predict_batch(back, x)
        assert np.array_equal(outs_a, outs_b)

    def test_rejects_other_files(self, tmp_path):
        path = tmp_path / "m.json"
        path.write_text('{"format": "svm-model", "version": 1}')
        with pytest.raises(DataFormatError):
            load_model(path)
