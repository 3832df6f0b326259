"""Tests for method-level pipeline orchestration."""

import numpy as np
import pytest

from uqreg import benchmark, metrics, optimize, synth


@pytest.fixture(scope="module")
def tiny():
    cfg = synth.SynthConfig(n_stimuli=80, feature_dim=4, raters_per_stimulus=10,
                            seed=6)
    return synth.generate(cfg)


TINY_CFG = optimize.TrainConfig(hidden_sizes=(8,), batches_per_epoch=4,
                                batch_size=8, max_epochs=2, dropout_rate=0.3)


class TestRunMethod:
    def test_direct_method_shapes(self, tiny):
        result = benchmark.run_method("nll", tiny.dataset, TINY_CFG)
        n_test = len(tiny.dataset.split_ids("test"))
        assert result.mean_runs.shape == (1, n_test)
        assert result.sd_runs.shape == (1, n_test)
        assert result.train_runs == 1
        assert result.inference_runs_per_stimulus == 1
        assert result.ensemble_mean is None

    def test_multiple_runs_stack(self, tiny):
        result = benchmark.run_method("mse", tiny.dataset, TINY_CFG, runs=3)
        assert result.mean_runs.shape[0] == 3
        assert len(result.reports) == 3
        assert [r.seed for r in result.reports] == [41, 42, 43]

    def test_seeds_method(self, tiny):
        result = benchmark.run_method("seeds", tiny.dataset, TINY_CFG, n_seeds=3)
        n_test = len(tiny.dataset.split_ids("test"))
        assert result.mean_runs.shape == (3, n_test)
        assert result.sd_runs.shape == (1, n_test)
        assert result.ensemble_mean.shape == (n_test,)
        np.testing.assert_allclose(result.ensemble_mean,
                                   result.mean_runs.mean(axis=0), atol=1e-12)
        counts = result.run_counts()
        assert counts["requires_multiple_training_runs"] is True
        assert counts["training_runs"] == 3

    def test_mc_dropout_method(self, tiny):
        result = benchmark.run_method("mc_dropout", tiny.dataset, TINY_CFG,
                                      mc_draws=6)
        assert result.train_runs == 1
        assert result.inference_runs_per_stimulus == 6
        assert result.sampling is not None
        assert result.sampling.samples.shape[0] == 6

    def test_unknown_method(self, tiny):
        with pytest.raises(ValueError, match="method"):
            benchmark.run_method("bnn", tiny.dataset, TINY_CFG)

    def test_deterministic(self, tiny):
        a = benchmark.run_method("kld", tiny.dataset, TINY_CFG)
        b = benchmark.run_method("kld", tiny.dataset, TINY_CFG)
        np.testing.assert_array_equal(a.mean_runs, b.mean_runs)
        np.testing.assert_array_equal(a.sd_runs, b.sd_runs)


class TestReportAssembly:
    def test_cells_populated(self, tiny):
        report = metrics.MetricReport()
        result = benchmark.run_method("seeds", tiny.dataset, TINY_CFG, n_seeds=2)
        benchmark.add_to_report(report, result, tiny.dataset)
        assert ("seeds", "mean", "valence") in report.cells
        assert ("seeds", "sd", "valence") in report.cells
        assert ("seeds", "ensemble_mean", "valence") in report.cells
        mean_cell = report.get("seeds", "mean", "valence")
        assert mean_cell["r2"].spread is not None  # two members -> spread
        sd_cell = report.get("seeds", "sd", "valence")
        assert sd_cell["r2"].spread is None  # one spread estimate

    def test_scatter_vectors(self, tiny):
        result = benchmark.run_method("nll", tiny.dataset, TINY_CFG)
        np.testing.assert_array_equal(benchmark.mean_scatter(result),
                                      result.mean_runs[0])
        np.testing.assert_array_equal(benchmark.sd_scatter(result),
                                      result.sd_runs[0])
        seeds = benchmark.run_method("seeds", tiny.dataset, TINY_CFG, n_seeds=2)
        np.testing.assert_array_equal(benchmark.mean_scatter(seeds),
                                      seeds.ensemble_mean)
