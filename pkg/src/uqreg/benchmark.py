"""Method-level pipelines: train, estimate, evaluate, assemble report rows.

Each method yields per-stimulus mean predictions and SD estimates on the
test split. Single-model methods (nll, mse, kld, mc_dropout) can be
repeated over several base seeds ("runs") to produce the across-run
mean ± SD cells; the seed-ensemble method instead aggregates its members:
its mean-prediction cell summarizes the per-member metrics and its SD cell
is the single spread-of-members estimate.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np

from . import losses, metrics, network, optimize, uq
from .data import Dataset

logger = logging.getLogger(__name__)


@dataclass
class MethodResult:
    """Everything one method produced for one affect dimension."""

    method: str
    dimension: str
    ids: list[str]
    mean_runs: np.ndarray            # (n_runs, n_test) mean predictions
    sd_runs: np.ndarray | None       # (n_runs, n_test) SD estimates
    ensemble_mean: np.ndarray | None = None   # seeds only: the averaged prediction
    train_runs: int = 1
    inference_runs_per_stimulus: int = 1
    reports: list | None = None
    params: list | None = None
    sampling: uq.SamplingResult | None = None

    def run_counts(self) -> dict:
        multi_train, multi_infer = uq.RUN_REQUIREMENTS[self.method]
        return {
            "method": self.method,
            "requires_multiple_training_runs": multi_train,
            "requires_multiple_inference_runs": multi_infer,
            "training_runs": self.train_runs,
            "inference_runs_per_stimulus": self.inference_runs_per_stimulus,
        }


def _seed_for_run(base_seed: int, run: int) -> int:
    return base_seed + run


def run_method(method: str, dataset: Dataset, train_config: optimize.TrainConfig,
               *, n_seeds: int = uq.DEFAULT_SEED_COUNT,
               mc_draws: int = uq.DEFAULT_MC_DRAWS, runs: int = 1,
               base_seed: int = uq.BASE_SEED, jobs: int = 1) -> MethodResult:
    """Run one method end to end on one affect dimension.

    train_config.affect_dimension selects the dimension; its loss_kind is
    overridden to the method's training objective.
    """
    if method not in uq.METHODS:
        raise ValueError(f"method must be one of {uq.METHODS}, got {method!r}")
    dim = train_config.affect_dimension

    if method == uq.METHOD_SEEDS:
        cfg = _with_loss(train_config, losses.LOSS_MSE_MEAN_ONLY)
        ens = uq.EnsembleConfig(n=n_seeds, base_seed=base_seed)
        result = uq.seeds_pipeline(dataset, cfg, ens, jobs=jobs)
        return MethodResult(
            method=method, dimension=dim, ids=result.ids,
            mean_runs=result.samples,
            sd_runs=result.sd_estimate[None, :],
            ensemble_mean=result.mean_prediction,
            train_runs=n_seeds, inference_runs_per_stimulus=1,
            reports=result.member_reports, params=result.member_params,
            sampling=result,
        )

    mean_rows, sd_rows, reports, params_list = [], [], [], []
    ids = None
    last_sampling = None
    for run in range(runs):
        seed = _seed_for_run(base_seed, run)
        if method == uq.METHOD_MC_DROPOUT:
            cfg = _with_loss(_with_seed(train_config, seed), losses.LOSS_MSE_MEAN_ONLY)
            params, report = optimize.train(dataset, cfg)
            rng = np.random.default_rng([seed, 2])
            sampling = uq.mc_dropout_pipeline(
                params, dataset, uq.EnsembleConfig(n=mc_draws, base_seed=seed),
                rng, dimension=dim,
            )
            ids = sampling.ids
            mean_rows.append(sampling.mean_prediction)
            sd_rows.append(sampling.sd_estimate)
            last_sampling = sampling
        else:
            cfg = _with_loss(_with_seed(train_config, seed), method)
            params, report = optimize.train(dataset, cfg)
            ids, mu_hat, sigma_hat = uq.direct_estimator(params, dataset, dimension=dim)
            mean_rows.append(mu_hat)
            sd_rows.append(sigma_hat)
        reports.append(report)
        params_list.append(params)

    return MethodResult(
        method=method, dimension=dim, ids=ids,
        mean_runs=np.stack(mean_rows),
        sd_runs=np.stack(sd_rows),
        train_runs=runs,
        inference_runs_per_stimulus=mc_draws if method == uq.METHOD_MC_DROPOUT else 1,
        reports=reports, params=params_list,
        sampling=last_sampling,
    )


def _with_loss(config: optimize.TrainConfig, loss_kind: str) -> optimize.TrainConfig:
    return replace(config, loss_kind=loss_kind)


def _with_seed(config: optimize.TrainConfig, seed: int) -> optimize.TrainConfig:
    return optimize.with_seed(config, seed)


def add_to_report(report: metrics.MetricReport, result: MethodResult,
                  dataset: Dataset) -> None:
    """Evaluate a MethodResult against the empirical test targets."""
    dim = result.dimension
    _, _, mu_true, sigma_true = dataset.matrices("test", dim)
    report.add(result.method, "mean", dim, metrics.evaluate(mu_true, result.mean_runs))
    if result.sd_runs is not None:
        report.add(result.method, "sd", dim, metrics.evaluate(sigma_true, result.sd_runs))
    if result.ensemble_mean is not None:
        report.add(result.method, "ensemble_mean", dim,
                   metrics.evaluate(mu_true, result.ensemble_mean))


def mean_scatter(result: MethodResult) -> np.ndarray:
    """The single mean-prediction vector used for scatter output."""
    if result.ensemble_mean is not None:
        return result.ensemble_mean
    return result.mean_runs[0]


def sd_scatter(result: MethodResult) -> np.ndarray | None:
    if result.sd_runs is None:
        return None
    return result.sd_runs[0]
