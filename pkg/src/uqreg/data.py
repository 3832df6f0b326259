"""Rating ingestion, normalization, aggregation, and split management.

File formats (CSV, UTF-8, '.' decimal separator, byte-deterministic):

- features:     header ``stimulus_id,f0,...,f{D-1}``, one row per stimulus.
- annotations:  header ``stimulus_id,rater_id,valence,arousal``, raw integer
  Likert values, one row per (stimulus, rater).
- splits:       header ``stimulus_id,split`` with split in {train,val,test}.

Raw ratings live on a symmetric Likert scale (default 9-point, neutral 5).
They are normalized to (r - r_neutral)/(R + 1), which maps the scale onto
[-1+delta, 1-delta] with delta = 1/(R+1), so the extreme ratings stay
reachable by a tanh/sigmoid head without saturating logits. Per-stimulus
ground truth is the sample mean and sample standard deviation (divisor n-1)
of the normalized ratings, one pair per affect dimension.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

logger = logging.getLogger(__name__)

SPLIT_NAMES = ("train", "val", "test")

# Below this many raters the sample SD is a noisy spread estimate; ingestion
# still accepts the stimulus but warns.
MIN_RECOMMENDED_RATERS = 10


class DataValidationError(ValueError):
    """Raised when an input file or record violates the data contract."""


@dataclass(frozen=True)
class RatingScale:
    """Geometry of a symmetric Likert scale.

    The neutral point sits exactly midway, leaving R non-neutral options on
    each side. The smoothing margin delta = 1/(R+1) keeps the normalized
    extremes strictly inside (-1, 1).
    """

    r_min: int
    r_max: int
    r_neutral: int

    def __post_init__(self) -> None:
        if not (self.r_min < self.r_neutral < self.r_max):
            raise ValueError(
                f"rating scale must satisfy r_min < r_neutral < r_max, "
                f"got ({self.r_min}, {self.r_neutral}, {self.r_max})"
            )
        if self.r_max - self.r_neutral != self.r_neutral - self.r_min:
            raise ValueError(
                f"rating scale must be symmetric around the neutral point, "
                f"got ({self.r_min}, {self.r_neutral}, {self.r_max})"
            )

    @property
    def R(self) -> int:
        """Non-neutral options per side."""
        return self.r_max - self.r_neutral

    @property
    def delta(self) -> float:
        """Smoothing margin 1/(R+1)."""
        return 1.0 / (self.R + 1)

    @property
    def normalized_min(self) -> float:
        return -1.0 + self.delta

    @property
    def normalized_max(self) -> float:
        return 1.0 - self.delta

    @classmethod
    def nine_point(cls) -> "RatingScale":
        """The 9-point scale from 1 to 9 with neutral point 5."""
        return cls(r_min=1, r_max=9, r_neutral=5)


def normalize_rating(r, scale: RatingScale):
    """Map a raw rating to (r - r_neutral)/(R + 1).

    Accepts a scalar or an integer array; result lies in
    [scale.normalized_min, scale.normalized_max] and is strictly monotone
    in r. Raises DataValidationError for out-of-range ratings.
    """
    arr = np.asarray(r)
    if np.any(arr < scale.r_min) or np.any(arr > scale.r_max):
        bad = np.asarray(arr[(arr < scale.r_min) | (arr > scale.r_max)]).ravel()
        raise DataValidationError(
            f"rating {bad[0]} outside [{scale.r_min}, {scale.r_max}]"
        )
    out = (arr - scale.r_neutral) / (scale.R + 1)
    return out if isinstance(r, np.ndarray) else float(out)


def denormalize_rating(y, scale: RatingScale):
    """Inverse of normalize_rating, rounded to the nearest integer rating.

    Exact round-trip for integer inputs: denormalize(normalize(r)) == r.
    """
    arr = np.rint(np.asarray(y) * (scale.R + 1)) + scale.r_neutral
    arr = np.clip(arr, scale.r_min, scale.r_max).astype(int)
    return arr if isinstance(y, np.ndarray) else int(arr)


@dataclass(frozen=True)
class AnnotationSet:
    """All raw ratings collected for one stimulus.

    ratings: list of (rater_id, valence_raw, arousal_raw).
    """

    stimulus_id: str
    ratings: tuple[tuple[str, int, int], ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "ratings", tuple(tuple(r) for r in self.ratings))


@dataclass(frozen=True)
class EmotionTarget:
    """Per-stimulus empirical (mean, SD) of normalized ratings, per dimension."""

    mu_v: float
    mu_a: float
    sigma_v: float
    sigma_a: float

    def __post_init__(self) -> None:
        for name in ("mu_v", "mu_a", "sigma_v", "sigma_a"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise ValueError(f"EmotionTarget.{name} must be finite, got {v}")
        if self.sigma_v < 0 or self.sigma_a < 0:
            raise ValueError("EmotionTarget sigmas must be nonnegative")

    def mu(self, dimension: str) -> float:
        return self.mu_v if dimension == "valence" else self.mu_a

    def sigma(self, dimension: str) -> float:
        return self.sigma_v if dimension == "valence" else self.sigma_a


@dataclass(frozen=True)
class FeatureVector:
    stimulus_id: str
    values: np.ndarray

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 1:
            raise ValueError(f"feature vector for {self.stimulus_id} must be 1-D")
        if not np.all(np.isfinite(values)):
            raise DataValidationError(
                f"non-finite feature value for stimulus {self.stimulus_id}"
            )
        object.__setattr__(self, "values", values)


def aggregate(annotations: AnnotationSet, scale: RatingScale) -> EmotionTarget:
    """Collapse one stimulus' ratings into an EmotionTarget.

    Per dimension: mu = sample mean and sigma = sample standard deviation
    (divisor n-1) of the normalized ratings. Requires at least 2 ratings;
    warns below MIN_RECOMMENDED_RATERS.
    """
    sid = annotations.stimulus_id
    n = len(annotations.ratings)
    if n < 2:
        raise DataValidationError(
            f"stimulus {sid}: sample SD needs at least 2 ratings, got {n}"
        )
    if n < MIN_RECOMMENDED_RATERS:
        logger.warning(
            "stimulus %s has only %d raters (< %d); spread estimate is noisy",
            sid, n, MIN_RECOMMENDED_RATERS,
        )
    for rater_id, v_raw, a_raw in annotations.ratings:
        for dim, raw in (("valence", v_raw), ("arousal", a_raw)):
            if not (scale.r_min <= raw <= scale.r_max):
                raise DataValidationError(
                    f"stimulus {sid}, rater {rater_id}: {dim} rating {raw} "
                    f"outside [{scale.r_min}, {scale.r_max}]"
                )
    v = normalize_rating(np.array([r[1] for r in annotations.ratings]), scale)
    a = normalize_rating(np.array([r[2] for r in annotations.ratings]), scale)
    return EmotionTarget(
        mu_v=float(np.mean(v)),
        mu_a=float(np.mean(a)),
        sigma_v=float(np.std(v, ddof=1)),
        sigma_a=float(np.std(a, ddof=1)),
    )


@dataclass
class Dataset:
    """Immutable-after-load container tying features, targets, and splits.

    Invariants (checked by validate): feature and target id sets coincide,
    the split assignment partitions that id set, and all feature vectors
    share one length.
    """

    features: dict[str, FeatureVector]
    targets: dict[str, EmotionTarget]
    split: dict[str, str]
    scale: RatingScale = field(default_factory=RatingScale.nine_point)

    def validate(self) -> None:
        fids, tids, sids = set(self.features), set(self.targets), set(self.split)
        if fids != tids:
            missing = sorted(tids - fids) or sorted(fids - tids)
            raise DataValidationError(
                f"feature/target id mismatch; first dangling id: {missing[0]} "
                f"({len(missing)} total)"
            )
        if sids != tids:
            missing = sorted(tids - sids) or sorted(sids - tids)
            raise DataValidationError(
                f"split/target id mismatch; first dangling id: {missing[0]} "
                f"({len(missing)} total)"
            )
        bad = {s for s in self.split.values() if s not in SPLIT_NAMES}
        if bad:
            raise DataValidationError(f"unknown split names: {sorted(bad)}")
        dims = {fv.values.shape[0] for fv in self.features.values()}
        if len(dims) > 1:
            raise DataValidationError(f"inconsistent feature lengths: {sorted(dims)}")
        lo, hi = self.scale.normalized_min, self.scale.normalized_max
        for sid, t in self.targets.items():
            if not (lo <= t.mu_v <= hi and lo <= t.mu_a <= hi):
                raise DataValidationError(
                    f"stimulus {sid}: target mean outside normalized range"
                )

    @property
    def feature_dim(self) -> int:
        return next(iter(self.features.values())).values.shape[0]

    @property
    def ids(self) -> list[str]:
        return sorted(self.targets)

    def split_ids(self, name: str) -> list[str]:
        return sorted(i for i, s in self.split.items() if s == name)

    def split_counts(self) -> dict[str, int]:
        return {name: len(self.split_ids(name)) for name in SPLIT_NAMES}

    def matrices(self, split: str, dimension: str):
        """Dense arrays for one split: (ids, X, mu, sigma) in sorted-id order."""
        ids = self.split_ids(split)
        X = np.stack([self.features[i].values for i in ids]) if ids else np.empty((0, 0))
        mu = np.array([self.targets[i].mu(dimension) for i in ids])
        sigma = np.array([self.targets[i].sigma(dimension) for i in ids])
        return ids, X, mu, sigma


def _format_float(x: float) -> str:
    # repr gives the shortest string that round-trips to the same float64,
    # independent of locale.
    return repr(float(x))


def write_features_csv(path, features: Mapping[str, FeatureVector] | Mapping[str, np.ndarray]) -> None:
    ids = sorted(features)
    first = features[ids[0]]
    dim = (first.values if isinstance(first, FeatureVector) else np.asarray(first)).shape[0]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["stimulus_id"] + [f"f{j}" for j in range(dim)])
        for sid in ids:
            vec = features[sid]
            values = vec.values if isinstance(vec, FeatureVector) else np.asarray(vec)
            writer.writerow([sid] + [_format_float(v) for v in values])


def write_annotations_csv(path, annotation_sets: Iterable[AnnotationSet]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["stimulus_id", "rater_id", "valence", "arousal"])
        for ann in sorted(annotation_sets, key=lambda a: a.stimulus_id):
            for rater_id, v, a in ann.ratings:
                writer.writerow([ann.stimulus_id, rater_id, int(v), int(a)])


def write_splits_csv(path, split: Mapping[str, str]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["stimulus_id", "split"])
        for sid in sorted(split):
            writer.writerow([sid, split[sid]])


def _read_rows(path, expected_header: Sequence[str] | None):
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"input file not found: {path}")
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataValidationError(f"{path}: empty file") from None
        if expected_header is not None and header != list(expected_header):
            raise DataValidationError(
                f"{path}: bad header {header!r}, expected {list(expected_header)!r}"
            )
        rows = [(lineno, row) for lineno, row in enumerate(reader, start=2) if row]
    return header, rows


def read_features_csv(path) -> dict[str, FeatureVector]:
    header, rows = _read_rows(path, None)
    if not header or header[0] != "stimulus_id":
        raise DataValidationError(f"{path}: first column must be stimulus_id")
    dim = len(header) - 1
    if header[1:] != [f"f{j}" for j in range(dim)]:
        raise DataValidationError(f"{path}: feature columns must be f0..f{dim - 1}")
    features: dict[str, FeatureVector] = {}
    for lineno, row in rows:
        if len(row) != dim + 1:
            raise DataValidationError(
                f"{path}:{lineno}: expected {dim + 1} fields, got {len(row)}"
            )
        sid = row[0]
        if sid in features:
            raise DataValidationError(f"{path}:{lineno}: duplicate stimulus_id {sid}")
        try:
            values = np.array([float(v) for v in row[1:]], dtype=np.float64)
        except ValueError as exc:
            raise DataValidationError(f"{path}:{lineno}: {exc}") from None
        features[sid] = FeatureVector(sid, values)
    return features


def read_annotations_csv(path) -> dict[str, AnnotationSet]:
    _, rows = _read_rows(path, ["stimulus_id", "rater_id", "valence", "arousal"])
    ratings: dict[str, list[tuple[str, int, int]]] = {}
    for lineno, row in rows:
        if len(row) != 4:
            raise DataValidationError(f"{path}:{lineno}: expected 4 fields")
        sid, rater_id = row[0], row[1]
        try:
            v, a = int(row[2]), int(row[3])
        except ValueError:
            raise DataValidationError(
                f"{path}:{lineno}: ratings must be integers, got {row[2]!r}, {row[3]!r}"
            ) from None
        ratings.setdefault(sid, []).append((rater_id, v, a))
    return {sid: AnnotationSet(sid, tuple(r)) for sid, r in ratings.items()}


def read_splits_csv(path) -> dict[str, str]:
    _, rows = _read_rows(path, ["stimulus_id", "split"])
    split: dict[str, str] = {}
    for lineno, row in rows:
        if len(row) != 2:
            raise DataValidationError(f"{path}:{lineno}: expected 2 fields")
        sid, name = row
        if name not in SPLIT_NAMES:
            raise DataValidationError(
                f"{path}:{lineno}: split must be one of {SPLIT_NAMES}, got {name!r}"
            )
        if sid in split:
            raise DataValidationError(f"{path}:{lineno}: duplicate stimulus_id {sid}")
        split[sid] = name
    return split


def load_dataset(features_path, annotations_path, splits_path,
                 scale: RatingScale | None = None) -> Dataset:
    """Read the three CSV files into a fully validated Dataset.

    Ids must cross-reference exactly; every mismatch is reported with the
    offending id. Logs the resulting per-split counts.
    """
    scale = scale or RatingScale.nine_point()
    features = read_features_csv(features_path)
    annotations = read_annotations_csv(annotations_path)
    split = read_splits_csv(splits_path)

    ann_ids = set(annotations)
    for sid in sorted(ann_ids - set(features)):
        raise DataValidationError(f"annotated stimulus {sid} missing from {features_path}")
    targets = {sid: aggregate(annotations[sid], scale) for sid in sorted(ann_ids)}

    dataset = Dataset(features=features, targets=targets, split=split, scale=scale)
    dataset.validate()
    counts = dataset.split_counts()
    logger.info(
        "loaded dataset: %d stimuli, dim %d, splits %s",
        len(targets), dataset.feature_dim, counts,
    )
    return dataset


def largest_remainder_counts(n: int, ratios: Sequence[float]) -> list[int]:
    """Integer allocation of n items proportional to ratios.

    Floors the exact quotas, then hands leftovers to the largest fractional
    remainders; remainder ties go to the later entry. Exact rational
    arithmetic on the (binary) ratio values keeps the result platform-stable.
    """
    quotas = [Fraction(r) * n for r in ratios]
    base = [int(q) for q in quotas]
    leftover = n - sum(base)
    remainders = [q - b for q, b in zip(quotas, base)]
    # Sort by (remainder desc, index desc): later entries win ties.
    order = sorted(range(len(ratios)), key=lambda i: (remainders[i], i), reverse=True)
    for i in order[:leftover]:
        base[i] += 1
    return base


def stratified_split(ids_with_labels: Mapping[str, str],
                     ratios: Sequence[float] = (0.7, 0.15, 0.15),
                     seed: int = 0) -> dict[str, str]:
    """Assign train/val/test within each label group at the given ratios.

    Deterministic for a fixed seed: groups are processed in sorted label
    order and shuffled with a seeded generator before slicing.
    """
    if not ids_with_labels:
        raise ValueError("stratified_split needs a nonempty id set")
    if len(ratios) != len(SPLIT_NAMES):
        raise ValueError(f"need {len(SPLIT_NAMES)} ratios, got {len(ratios)}")
    if any(r <= 0 for r in ratios):
        raise ValueError(f"ratios must be positive, got {ratios}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must sum to 1, got {sum(ratios)}")

    groups: dict[str, list[str]] = {}
    for sid, label in ids_with_labels.items():
        groups.setdefault(str(label), []).append(sid)

    rng = np.random.default_rng(seed)
    assignment: dict[str, str] = {}
    for label in sorted(groups):
        ids = sorted(groups[label])
        perm = rng.permutation(len(ids))
        shuffled = [ids[i] for i in perm]
        counts = largest_remainder_counts(len(ids), ratios)
        start = 0
        for name, count in zip(SPLIT_NAMES, counts):
            for sid in shuffled[start:start + count]:
                assignment[sid] = name
            start += count
    return assignment
