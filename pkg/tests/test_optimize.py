"""Tests for Adam, the plateau schedule, and the training loop."""

import math

import numpy as np
import pytest

from uqreg import network, optimize, synth
from uqreg.network import init_parameters
from uqreg.optimize import (
    AdamState,
    OptimizationError,
    TrainConfig,
    adam_step,
    plateau_schedule,
    train,
)


def _scalar_params():
    p = init_parameters(1, [], "mean_only", seed=0)
    p.weights[0][:] = 0.5
    p.biases[0][:] = 0.0
    return p


def _grads_like(params, fill):
    return network.Gradients(
        weights=[np.full_like(w, fill) for w in params.weights],
        biases=[np.full_like(b, fill) for b in params.biases],
    )


class TestAdamStep:
    def test_zero_gradient_leaves_parameters(self):
        p = _scalar_params()
        state = AdamState.for_parameters(p)
        before = [a.copy() for a in p.arrays()]
        adam_step(p, _grads_like(p, 0.0), state, lr=1e-3)
        for a, b in zip(p.arrays(), before):
            np.testing.assert_array_equal(a, b)
        assert state.step_count == 1

    def test_first_step_magnitude(self):
        # Bias correction makes the first update ~ lr * g / (|g| + eps).
        p = _scalar_params()
        state = AdamState.for_parameters(p)
        before = float(p.weights[0][0, 0])
        g = _grads_like(p, 0.0)
        g.weights[0][:] = 1.0
        adam_step(p, g, state, lr=1e-3)
        delta = before - float(p.weights[0][0, 0])
        assert delta == pytest.approx(1e-3, rel=1e-6)

    def test_equal_gradients_equal_updates(self):
        p = init_parameters(2, [3], "mean_only", seed=1)
        state = AdamState.for_parameters(p)
        before = p.weights[0].copy()
        adam_step(p, _grads_like(p, 0.7), state, lr=1e-3)
        updates = before - p.weights[0]
        np.testing.assert_allclose(updates, updates.flat[0], rtol=1e-12)

    def test_moments_decay_on_zero_gradient(self):
        p = _scalar_params()
        state = AdamState.for_parameters(p)
        g = _grads_like(p, 0.0)
        g.weights[0][:] = 1.0
        adam_step(p, g, state, lr=1e-3)
        m_before = state.first_moment[0].copy()
        adam_step(p, _grads_like(p, 0.0), state, lr=1e-3)
        assert np.all(np.abs(state.first_moment[0]) < np.abs(m_before))

    def test_non_finite_gradient_aborts(self):
        p = _scalar_params()
        state = AdamState.for_parameters(p)
        g = _grads_like(p, 0.0)
        g.weights[0][:] = np.nan
        with pytest.raises(OptimizationError, match="non-finite"):
            adam_step(p, g, state, lr=1e-3)

    def test_shape_mismatch_rejected(self):
        p = _scalar_params()
        other = init_parameters(2, [3], "mean_only", seed=0)
        state = AdamState.for_parameters(p)
        with pytest.raises(ValueError):
            adam_step(p, _grads_like(other, 0.0), state, lr=1e-3)


class TestPlateauSchedule:
    CFG = TrainConfig()

    def test_decreasing_losses_keep_rate(self):
        history = [1.0, 0.9, 0.8, 0.7, 0.6]
        assert plateau_schedule(history, 1e-3, self.CFG) == 1e-3

    def test_three_flat_epochs_drop_rate(self):
        history = [1.0, 0.9, 0.9, 0.9, 0.9]
        assert plateau_schedule(history, 1e-3, self.CFG) == pytest.approx(9e-4)

    def test_two_flat_epochs_do_not_drop(self):
        history = [1.0, 0.9, 0.9, 0.9]
        assert plateau_schedule(history, 1e-3, self.CFG) == 1e-3

    def test_counter_resets_after_drop(self):
        # Epochs 1-3 after the best trigger a drop; the counter restarts,
        # so epochs 4-5 alone must not trigger another.
        history = [1.0] + [1.0] * 3
        assert plateau_schedule(history, 1e-3, self.CFG) == pytest.approx(9e-4)
        history = [1.0] + [1.0] * 4
        assert plateau_schedule(history, 1e-3, self.CFG) == 1e-3
        history = [1.0] + [1.0] * 6
        assert plateau_schedule(history, 1e-3, self.CFG) == pytest.approx(9e-4)

    def test_improvement_resets_counter(self):
        history = [1.0, 1.0, 1.0, 0.5, 0.6, 0.6]
        assert plateau_schedule(history, 1e-3, self.CFG) == 1e-3

    def test_floor(self):
        history = [1.0, 1.0, 1.0, 1.0]
        assert plateau_schedule(history, 1e-5, self.CFG) == 1e-5
        assert plateau_schedule(history, 1.05e-5, self.CFG) == 1e-5

    def test_strict_improvement_rule(self):
        # Equal-to-best epochs count as no improvement.
        history = [0.5, 0.5, 0.5, 0.5]
        assert plateau_schedule(history, 1e-3, self.CFG) == pytest.approx(9e-4)

    def test_empty_history_rejected(self):
        with pytest.raises(ValueError):
            plateau_schedule([], 1e-3, self.CFG)


@pytest.fixture(scope="module")
def small_synth():
    # 40 raters keep the empirical targets close to the true maps, so the
    # recovery test below is not capped by rater noise.
    cfg = synth.SynthConfig(n_stimuli=240, feature_dim=6, raters_per_stimulus=40,
                            seed=5, quantize=False)
    return synth.generate(cfg)


SMALL_TRAIN = dict(hidden_sizes=(24, 24), batches_per_epoch=16, batch_size=16,
                   dropout_rate=0.2)


class TestTrain:
    def test_deterministic(self, small_synth):
        cfg = TrainConfig(loss_kind="nll", max_epochs=3, seed=11, **SMALL_TRAIN)
        p1, r1 = train(small_synth.dataset, cfg)
        p2, r2_ = train(small_synth.dataset, cfg)
        for a, b in zip(p1.arrays(), p2.arrays()):
            assert np.array_equal(a, b)
        assert r1.to_dict() == r2_.to_dict()

    def test_zero_epochs_returns_initial_parameters(self, small_synth):
        cfg = TrainConfig(loss_kind="mse", max_epochs=0, seed=3, **SMALL_TRAIN)
        params, report = train(small_synth.dataset, cfg)
        fresh = init_parameters(small_synth.dataset.feature_dim, cfg.hidden_sizes,
                                cfg.head_mode, seed=3, dropout_rate=cfg.dropout_rate)
        for a, b in zip(params.arrays(), fresh.arrays()):
            assert np.array_equal(a, b)
        assert report.train_losses == [] and report.best_epoch is None

    def test_learning_rate_non_increasing_and_floored(self, small_synth):
        cfg = TrainConfig(loss_kind="mse_mean_only", max_epochs=12, seed=2,
                          **SMALL_TRAIN)
        _, report = train(small_synth.dataset, cfg)
        lrs = report.learning_rates
        assert all(a >= b for a, b in zip(lrs, lrs[1:]))
        assert all(lr >= cfg.min_lr for lr in lrs)

    def test_best_epoch_parameters_returned(self, small_synth):
        cfg = TrainConfig(loss_kind="mse_mean_only", max_epochs=8, seed=7,
                          **SMALL_TRAIN)
        params, report = train(small_synth.dataset, cfg)
        _, X_val, mu_val, sigma_val = small_synth.dataset.matrices("val", "valence")
        val = optimize.validation_loss(params, X_val, mu_val, sigma_val,
                                       cfg.loss_kind)
        assert val == pytest.approx(min(report.val_losses), rel=1e-12)
        assert report.best_epoch == int(np.argmin(report.val_losses))

    def test_epoch_sample_count_fixed(self, small_synth, monkeypatch):
        # 16 batches x 16 samples per epoch even though the train split is
        # larger: sampling is uniform with replacement.
        counted = []
        orig = network.forward

        def counting_forward(params, x, mode=network.MODE_EVAL, rng=None):
            if mode == network.MODE_TRAIN:
                counted.append(np.asarray(x).shape[0])
            return orig(params, x, mode=mode, rng=rng)

        monkeypatch.setattr(optimize.network, "forward", counting_forward)
        cfg = TrainConfig(loss_kind="mse_mean_only", max_epochs=2, seed=1,
                          **SMALL_TRAIN)
        train(small_synth.dataset, cfg)
        assert sum(counted) == 2 * cfg.batches_per_epoch * cfg.batch_size

    def test_empty_split_rejected(self, small_synth):
        ds = small_synth.dataset
        bad = optimize.Dataset(features=ds.features, targets=ds.targets,
                               split={sid: "train" for sid in ds.targets},
                               scale=ds.scale)
        with pytest.raises(ValueError, match="nonempty"):
            train(bad, TrainConfig(max_epochs=1, **SMALL_TRAIN))

    def test_mean_recovery_on_easy_task(self, small_synth):
        # Well-posed mean regression: the recipe must fit the smooth map.
        cfg = TrainConfig(loss_kind="mse_mean_only", max_epochs=30, seed=41,
                          **SMALL_TRAIN)
        params, _ = train(small_synth.dataset, cfg)
        ids, X, mu, _ = small_synth.dataset.matrices("test", "valence")
        pred, _ = network.forward(params, X)
        from uqreg.metrics import r2
        assert r2(mu, pred.mu_hat) >= 0.95

    def test_config_validation(self):
        with pytest.raises(ValueError):
            TrainConfig(lr_factor=1.5)
        with pytest.raises(ValueError):
            TrainConfig(min_lr=1.0, initial_lr=1e-3)
        with pytest.raises(ValueError):
            TrainConfig(loss_kind="huber")
        with pytest.raises(ValueError):
            TrainConfig(affect_dimension="dominance")
