"""Synthetic-data oracle with analytically known mean and spread maps.

Each stimulus is a standard-normal feature vector x. The true rating
distribution per affect dimension is Gaussian with

    mu(x)    = (1 - delta) * tanh(w_mu . x + b_mu)          in (-0.8, 0.8)
    sigma(x) = 0.05 + 0.45 * logistic(w_sd . x + b_sd)      in (0.05, 0.5)

for the default 9-point scale. Simulated raters draw i.i.d. from
N(mu(x), sigma(x)^2); draws are clipped to the normalized rating range and,
by default, quantized to the nearest Likert grid point so the data shares
the discreteness of real rating collection (a flag disables quantization
for exact-Gaussian studies). Targets then come from the same aggregation
path as file ingestion. The true (mu, sigma) table is retained separately
as the evaluation oracle.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from . import data as data_mod
from .data import (
    AnnotationSet,
    Dataset,
    EmotionTarget,
    FeatureVector,
    RatingScale,
    aggregate,
    normalize_rating,
    stratified_split,
)

DIMENSIONS = ("valence", "arousal")

SIGMA_LOW = 0.05
SIGMA_SPAN = 0.45


@dataclass(frozen=True)
class AffineMap:
    """w . x + b feeding a squashing nonlinearity."""

    weights: np.ndarray
    bias: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "weights", np.asarray(self.weights, dtype=np.float64))

    def __call__(self, X: np.ndarray) -> np.ndarray:
        return X @ self.weights + self.bias


@dataclass(frozen=True)
class SynthConfig:
    """Desk-scale defaults: 2000 stimuli, 16 features, 10 raters."""

    n_stimuli: int = 2000
    feature_dim: int = 16
    raters_per_stimulus: int = 10
    seed: int = 0
    quantize: bool = True
    mean_maps: dict | None = None   # dimension -> AffineMap; drawn from seed if None
    sd_maps: dict | None = None
    split_ratios: tuple[float, float, float] = (0.7, 0.15, 0.15)
    scale: RatingScale = field(default_factory=RatingScale.nine_point)

    def __post_init__(self) -> None:
        if self.n_stimuli < 1 or self.feature_dim < 1:
            raise ValueError("n_stimuli and feature_dim must be positive")
        if self.raters_per_stimulus < 2:
            raise ValueError("raters_per_stimulus must be at least 2")
        for maps in (self.mean_maps, self.sd_maps):
            if maps is not None:
                missing = set(DIMENSIONS) - set(maps)
                if missing:
                    raise ValueError(f"maps missing dimensions: {sorted(missing)}")
                for m in maps.values():
                    if m.weights.shape != (self.feature_dim,):
                        raise ValueError("map weights must have length feature_dim")


@dataclass
class OracleTable:
    """True per-stimulus distribution parameters, per affect dimension."""

    ids: list[str]
    true_mu: dict[str, np.ndarray]       # dimension -> (n,)
    true_sigma: dict[str, np.ndarray]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["stimulus_id", "dimension", "true_mu", "true_sigma"])
            for j, sid in enumerate(self.ids):
                for dim in DIMENSIONS:
                    writer.writerow([
                        sid, dim,
                        repr(float(self.true_mu[dim][j])),
                        repr(float(self.true_sigma[dim][j])),
                    ])

    @classmethod
    def read_csv(cls, path) -> "OracleTable":
        with open(path, "r", newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if header != ["stimulus_id", "dimension", "true_mu", "true_sigma"]:
                raise ValueError(f"{path}: unexpected oracle header {header}")
            mus: dict[str, dict[str, float]] = {d: {} for d in DIMENSIONS}
            sigmas: dict[str, dict[str, float]] = {d: {} for d in DIMENSIONS}
            for sid, dim, mu, sigma in reader:
                mus[dim][sid] = float(mu)
                sigmas[dim][sid] = float(sigma)
        ids = sorted(mus[DIMENSIONS[0]])
        return cls(
            ids=ids,
            true_mu={d: np.array([mus[d][i] for i in ids]) for d in DIMENSIONS},
            true_sigma={d: np.array([sigmas[d][i] for i in ids]) for d in DIMENSIONS},
        )

    def for_ids(self, ids, dimension: str):
        """(true_mu, true_sigma) arrays aligned to the given id order."""
        index = {sid: j for j, sid in enumerate(self.ids)}
        rows = [index[i] for i in ids]
        return self.true_mu[dimension][rows], self.true_sigma[dimension][rows]


@dataclass
class SynthOutput:
    dataset: Dataset
    oracle: OracleTable
    annotations: list[AnnotationSet] | None   # None when quantization is off


# Default map geometry. Weight vectors are drawn as random directions and
# rescaled to a fixed norm, so every affect dimension carries the same
# signal power under x ~ N(0, I): mean logits ~ N(0, 1), spread logits
# ~ N(SD_MAP_BIAS, SD_MAP_NORM^2). The spread settings put most sigma mass
# in 0.1-0.45 with a tail toward 0.5, mirroring rating corpora where
# roughly half the interrater SDs exceed 0.3; spreads hugging the 0.05
# floor would also make the divergence objectives needlessly stiff at desk
# scale.
MEAN_MAP_NORM = 1.0
SD_MAP_NORM = 2.0
SD_MAP_BIAS = 0.05


def _unit_direction(rng: np.random.Generator, dim: int) -> np.ndarray:
    v = rng.normal(size=dim)
    return v / np.linalg.norm(v)


def _default_maps(rng: np.random.Generator, dim: int) -> tuple[dict, dict]:
    mean_maps, sd_maps = {}, {}
    for d in DIMENSIONS:
        mean_maps[d] = AffineMap(MEAN_MAP_NORM * _unit_direction(rng, dim))
        sd_maps[d] = AffineMap(SD_MAP_NORM * _unit_direction(rng, dim),
                               bias=SD_MAP_BIAS)
    return mean_maps, sd_maps


def true_mean(config: SynthConfig, X: np.ndarray, dimension: str,
              mean_maps: dict) -> np.ndarray:
    return (1.0 - config.scale.delta) * np.tanh(mean_maps[dimension](X))


def true_sd(config: SynthConfig, X: np.ndarray, dimension: str,
            sd_maps: dict) -> np.ndarray:
    u = sd_maps[dimension](X)
    return SIGMA_LOW + SIGMA_SPAN / (1.0 + np.exp(-u))


def generate(config: SynthConfig) -> SynthOutput:
    """Draw a full synthetic dataset plus its evaluation oracle.

    Byte-deterministic for a fixed config: the seed feeds separate child
    streams for map parameters, features, and rater noise.
    """
    ss = np.random.SeedSequence(config.seed)
    rng_maps, rng_features, rng_raters = (
        np.random.default_rng(c) for c in ss.spawn(3)
    )
    mean_maps, sd_maps = config.mean_maps, config.sd_maps
    if mean_maps is None or sd_maps is None:
        default_mean, default_sd = _default_maps(rng_maps, config.feature_dim)
        mean_maps = mean_maps or default_mean
        sd_maps = sd_maps or default_sd

    n = config.n_stimuli
    width = max(4, len(str(n - 1)))
    ids = [f"s{j:0{width}d}" for j in range(n)]
    X = rng_features.standard_normal((n, config.feature_dim))

    scale = config.scale
    lo, hi = scale.normalized_min, scale.normalized_max
    mu_true = {d: true_mean(config, X, d, mean_maps) for d in DIMENSIONS}
    sigma_true = {d: true_sd(config, X, d, sd_maps) for d in DIMENSIONS}

    raw: dict[str, np.ndarray] = {}
    normalized: dict[str, np.ndarray] = {}
    for d in DIMENSIONS:
        draws = rng_raters.normal(
            mu_true[d][:, None], sigma_true[d][:, None],
            size=(n, config.raters_per_stimulus),
        )
        clipped = np.clip(draws, lo, hi)
        if config.quantize:
            grid = np.rint(clipped * (scale.R + 1)).astype(int) + scale.r_neutral
            grid = np.clip(grid, scale.r_min, scale.r_max)
            raw[d] = grid
            normalized[d] = normalize_rating(grid, scale)
        else:
            normalized[d] = clipped

    targets: dict[str, EmotionTarget] = {}
    annotations: list[AnnotationSet] | None = [] if config.quantize else None
    rater_width = len(str(config.raters_per_stimulus - 1))
    for j, sid in enumerate(ids):
        if config.quantize:
            ann = AnnotationSet(sid, tuple(
                (f"r{k:0{rater_width}d}", int(raw["valence"][j, k]), int(raw["arousal"][j, k]))
                for k in range(config.raters_per_stimulus)
            ))
            annotations.append(ann)
            targets[sid] = aggregate(ann, scale)
        else:
            v = normalized["valence"][j]
            a = normalized["arousal"][j]
            targets[sid] = EmotionTarget(
                mu_v=float(np.mean(v)), mu_a=float(np.mean(a)),
                sigma_v=float(np.std(v, ddof=1)), sigma_a=float(np.std(a, ddof=1)),
            )

    split = stratified_split({sid: "all" for sid in ids},
                             ratios=config.split_ratios, seed=config.seed)
    dataset = Dataset(
        features={sid: FeatureVector(sid, X[j]) for j, sid in enumerate(ids)},
        targets=targets,
        split=split,
        scale=scale,
    )
    dataset.validate()
    oracle = OracleTable(ids=ids, true_mu=mu_true, true_sigma=sigma_true)
    return SynthOutput(dataset=dataset, oracle=oracle, annotations=annotations)


def write_dataset_files(out_dir, output: SynthOutput) -> dict[str, str]:
    """Emit features/annotations/splits CSVs plus oracle.csv into out_dir.

    Annotation files hold raw integer Likert values, so quantization must
    be on. Returns the written paths.
    """
    from pathlib import Path

    if output.annotations is None:
        raise ValueError(
            "cannot write annotation files for an unquantized dataset; "
            "generate with quantize=True"
        )
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "features": str(out / "features.csv"),
        "annotations": str(out / "annotations.csv"),
        "splits": str(out / "splits.csv"),
        "oracle": str(out / "oracle.csv"),
    }
    data_mod.write_features_csv(paths["features"], output.dataset.features)
    data_mod.write_annotations_csv(paths["annotations"], output.annotations)
    data_mod.write_splits_csv(paths["splits"], output.dataset.split)
    output.oracle.write_csv(paths["oracle"])
    return paths
