"""Sampling-based uncertainty estimators and the direct-output adaptor.

Two sampling routes produce repeated mean predictions per stimulus:

- seed ensembles: n independently trained models differing only in seed;
  the spread of their eval-mode predictions is the uncertainty estimate.
- MC dropout: one trained model queried n times with dropout active at
  inference; the spread over stochastic passes is the estimate.

Both reduce a sample list to (mean, n-1 variance). The direct route simply
reads sigma_hat off a mean-variance model in a single eval-mode pass.

Run multiplicity contract per method:

    method       training runs   inference runs per stimulus
    seeds        multiple        one per member
    mc_dropout   one             multiple
    nll/mse/kld  one             one
"""

from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import losses, network, optimize
from .data import Dataset

logger = logging.getLogger(__name__)

DEFAULT_SEED_COUNT = 15
DEFAULT_MC_DRAWS = 50
# Anchor of the default seed list; member i trains with seed BASE_SEED + i.
BASE_SEED = 41

METHOD_SEEDS = "seeds"
METHOD_MC_DROPOUT = "mc_dropout"
METHOD_NLL = "nll"
METHOD_MSE = "mse"
METHOD_KLD = "kld"
METHODS = (METHOD_SEEDS, METHOD_MC_DROPOUT, METHOD_NLL, METHOD_MSE, METHOD_KLD)

# (multiple training runs?, multiple inference runs?) per method.
RUN_REQUIREMENTS = {
    METHOD_SEEDS: (True, True),
    METHOD_MC_DROPOUT: (False, True),
    METHOD_NLL: (False, False),
    METHOD_MSE: (False, False),
    METHOD_KLD: (False, False),
}


@dataclass(frozen=True)
class EnsembleConfig:
    """How many runs/draws to aggregate and which seeds to use."""

    n: int = DEFAULT_SEED_COUNT
    base_seed: int = BASE_SEED
    seed_list: tuple[int, ...] | None = None

    def __post_init__(self) -> None:
        if self.n < 2:
            raise ValueError(f"ensemble needs n >= 2 for a sample variance, got {self.n}")
        if self.seed_list is not None and len(self.seed_list) != self.n:
            raise ValueError("seed_list length must equal n")

    def seeds(self) -> tuple[int, ...]:
        if self.seed_list is not None:
            return tuple(self.seed_list)
        return tuple(self.base_seed + i for i in range(self.n))


@dataclass(frozen=True)
class UncertaintyEstimate:
    """Sample mean and n-1 sample variance over repeated predictions."""

    mean: float
    variance: float
    sd: float


def sample_statistics(samples) -> UncertaintyEstimate:
    """Reduce one stimulus' prediction samples to an UncertaintyEstimate.

    Samples are put in canonical (sorted) order before summation, so any
    permutation of the draws yields bit-identical results.
    """
    arr = np.sort(np.asarray(samples, dtype=np.float64))
    n = arr.size
    if n < 2:
        raise ValueError(f"sample variance needs n >= 2, got {n}")
    if arr[0] == arr[-1]:
        # All samples equal: the variance is exactly zero, with no
        # summation dust.
        return UncertaintyEstimate(mean=float(arr[0]), variance=0.0, sd=0.0)
    mean = float(arr.sum() / n)
    variance = float(((arr - mean) ** 2).sum() / (n - 1))
    return UncertaintyEstimate(mean=mean, variance=variance, sd=math.sqrt(variance))


def statistics_per_stimulus(ids, samples: np.ndarray) -> dict[str, UncertaintyEstimate]:
    """Column-wise sample_statistics over a (n_draws, n_stimuli) matrix."""
    if samples.ndim != 2 or samples.shape[1] != len(ids):
        raise ValueError("samples must be (n_draws, n_stimuli)")
    return {sid: sample_statistics(samples[:, j]) for j, sid in enumerate(ids)}


def _train_member(args):
    dataset, config = args
    return optimize.train(dataset, config)


@dataclass
class SamplingResult:
    """Output of a sampling pipeline over the test split."""

    ids: list[str]
    samples: np.ndarray                       # (n_draws_or_members, n_stimuli)
    estimates: dict[str, UncertaintyEstimate]
    member_seeds: tuple[int, ...] | None = None
    member_params: list | None = None
    member_reports: list | None = None

    @property
    def mean_prediction(self) -> np.ndarray:
        return np.array([self.estimates[sid].mean for sid in self.ids])

    @property
    def sd_estimate(self) -> np.ndarray:
        return np.array([self.estimates[sid].sd for sid in self.ids])


def seeds_pipeline(dataset: Dataset, train_config: optimize.TrainConfig,
                   ensemble_config: EnsembleConfig, jobs: int = 1,
                   allow_mean_variance: bool = False) -> SamplingResult:
    """Train one model per seed and aggregate their test-split predictions.

    The protocol trains the mean-only objective; pass allow_mean_variance
    to ensemble mean-variance models anyway (off the standard protocol).
    """
    if train_config.loss_kind != losses.LOSS_MSE_MEAN_ONLY and not allow_mean_variance:
        raise ValueError(
            "seed ensembles train the mean-only objective; got "
            f"{train_config.loss_kind!r} (set allow_mean_variance to override)"
        )
    seeds = ensemble_config.seeds()
    if len(set(seeds)) < len(seeds):
        logger.warning("duplicate seeds in ensemble %s; members will coincide", seeds)

    configs = [optimize.with_seed(train_config, s) for s in seeds]
    members = []
    try:
        if jobs > 1:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                members = list(pool.map(_train_member, [(dataset, c) for c in configs]))
        else:
            for c in configs:
                members.append(_train_member((dataset, c)))
    except Exception as exc:
        failed = seeds[len(members)] if len(members) < len(seeds) else seeds
        raise RuntimeError(f"ensemble member seed {failed} failed: {exc}") from exc

    ids, X_test, _, _ = dataset.matrices("test", train_config.affect_dimension)
    rows = []
    for params, report in members:
        prediction, _ = network.forward(params, X_test, mode=network.MODE_EVAL)
        rows.append(np.atleast_1d(prediction.mu_hat))
    samples = np.stack(rows)
    return SamplingResult(
        ids=ids,
        samples=samples,
        estimates=statistics_per_stimulus(ids, samples),
        member_seeds=seeds,
        member_params=[p for p, _ in members],
        member_reports=[r for _, r in members],
    )


def mc_dropout_pipeline(params: network.NetworkParameters, dataset: Dataset,
                        ensemble_config: EnsembleConfig,
                        rng: np.random.Generator,
                        dimension: str = "valence") -> SamplingResult:
    """Repeated dropout-active forward passes over the test split.

    Each draw uses fresh masks from the given stream; requires a model
    built with dropout_rate > 0.
    """
    if params.dropout_rate <= 0.0:
        raise ValueError("MC dropout is undefined for dropout_rate = 0")
    ids, X_test, _, _ = dataset.matrices("test", dimension)
    rows = []
    for _ in range(ensemble_config.n):
        prediction, _ = network.forward(params, X_test, mode=network.MODE_MC_DROPOUT, rng=rng)
        rows.append(np.atleast_1d(prediction.mu_hat))
    samples = np.stack(rows)
    return SamplingResult(
        ids=ids,
        samples=samples,
        estimates=statistics_per_stimulus(ids, samples),
    )


def direct_estimator(params: network.NetworkParameters, dataset: Dataset,
                     dimension: str = "valence"):
    """Single eval-mode pass; sigma_hat is reported as the uncertainty.

    Returns (ids, mu_hat array, sigma_hat array).
    """
    if params.head_mode != network.HEAD_MEAN_VARIANCE:
        raise ValueError("direct estimation needs a mean_variance checkpoint")
    ids, X_test, _, _ = dataset.matrices("test", dimension)
    prediction, _ = network.forward(params, X_test, mode=network.MODE_EVAL)
    return ids, np.atleast_1d(prediction.mu_hat), np.atleast_1d(prediction.sigma_hat)


def save_ensemble_manifest(path, result: SamplingResult,
                           checkpoint_paths=None) -> None:
    """Persist seeds, member checkpoints, and raw per-stimulus samples.

    The samples allow re-aggregation without retraining.
    """
    record = {
        "seeds": list(result.member_seeds) if result.member_seeds else None,
        "checkpoints": list(checkpoint_paths) if checkpoint_paths else None,
        "stimulus_ids": list(result.ids),
        "samples": [[float(v) for v in row] for row in result.samples],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(record, fh, indent=1)


def load_ensemble_manifest(path) -> SamplingResult:
    with open(path, "r", encoding="utf-8") as fh:
        record = json.load(fh)
    ids = [str(s) for s in record["stimulus_ids"]]
    samples = np.array(record["samples"], dtype=np.float64)
    return SamplingResult(
        ids=ids,
        samples=samples,
        estimates=statistics_per_stimulus(ids, samples),
        member_seeds=tuple(record["seeds"]) if record.get("seeds") else None,
    )
