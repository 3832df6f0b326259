"""Evaluation metrics and report assembly.

Three test-split metrics per (affect dimension, target) cell: coefficient
of determination R^2, Pearson correlation r_p, and Spearman rank
correlation r_s. When a method is run under several seeds the report
carries the across-run mean and SD of each metric (the "m ± s" cells);
single runs carry the plain value.

The plain-text rendering writes one block for mean prediction and one for
SD prediction, methods as rows and Valence/Arousal columns per metric,
with R^2 below -10 printed as "≪0" (the JSON keeps exact values).
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

# R^2 values this far below zero carry no more information than "far worse
# than a constant predictor"; the text table compresses them.
R2_PRINT_FLOOR = -10.0

METHOD_LABELS = {
    "seeds": "Random Seeds",
    "mc_dropout": "MC Dropout",
    "nll": "NLL Loss",
    "mse": "MSE Loss",
    "kld": "KLD Loss",
}

# Published DEAM-benchmark results, embedded in reports for comparison:
# mean-prediction R^2 of the NLL method, as (value, across-seed SD).
DEAM_REFERENCE_MEAN_R2 = {
    "valence": (0.61, 0.03),
    "arousal": (0.61, 0.02),
}
DEAM_REFERENCE_SD_NOTE = (
    "published DEAM benchmark: SD-prediction R^2 was well below zero (printed"
    " ≪0) for every method, with correlations weakly negative or near zero"
)


class ConstantInputError(ValueError):
    """Raised when a metric is undefined because an input vector is constant."""


def _check_pair(truth, pred):
    truth = np.asarray(truth, dtype=np.float64)
    pred = np.asarray(pred, dtype=np.float64)
    if truth.ndim != 1 or pred.ndim != 1 or truth.shape != pred.shape:
        raise ValueError("metric inputs must be 1-D vectors of equal length")
    if truth.shape[0] < 2:
        raise ValueError("metrics need at least 2 points")
    return truth, pred


def r2(truth, pred) -> float:
    """1 - sum((y - yhat)^2) / sum((y - ybar)^2); <= 1, unbounded below."""
    truth, pred = _check_pair(truth, pred)
    ss_tot = float(np.sum((truth - truth.mean()) ** 2))
    if ss_tot == 0.0:
        raise ConstantInputError("R^2 undefined: truth vector is constant")
    ss_res = float(np.sum((truth - pred) ** 2))
    return 1.0 - ss_res / ss_tot


def pearson(x, y) -> float:
    x, y = _check_pair(x, y)
    dx = x - x.mean()
    dy = y - y.mean()
    denom = math.sqrt(float(dx @ dx) * float(dy @ dy))
    if denom == 0.0:
        raise ConstantInputError("Pearson undefined: constant input vector")
    return float(dx @ dy) / denom


def average_ranks(x) -> np.ndarray:
    """1-based ranks; ties receive the mean of their rank range."""
    x = np.asarray(x, dtype=np.float64)
    order = np.argsort(x, kind="stable")
    ranks = np.empty(x.shape[0], dtype=np.float64)
    i = 0
    while i < x.shape[0]:
        j = i
        while j + 1 < x.shape[0] and x[order[j + 1]] == x[order[i]]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def spearman(x, y) -> float:
    """Pearson correlation of the average-ranked data."""
    x, y = _check_pair(x, y)
    return pearson(average_ranks(x), average_ranks(y))


METRIC_FUNCTIONS = {"r2": r2, "pearson": pearson, "spearman": spearman}


@dataclass(frozen=True)
class MetricSummary:
    """One metric cell: across-run mean and SD, plus the per-run values.

    spread is None for single runs; value is None when the metric was
    undefined (note says why).
    """

    value: float | None
    spread: float | None
    per_run: tuple
    note: str | None = None


def summarize_metric(name: str, truth, runs) -> MetricSummary:
    """Evaluate one metric over one or more prediction runs.

    runs: one vector, or a (n_runs, n_stimuli) matrix of predictions.
    """
    fn = METRIC_FUNCTIONS[name]
    runs = np.asarray(runs, dtype=np.float64)
    if runs.ndim == 1:
        runs = runs[None, :]
    values, note = [], None
    for row in runs:
        try:
            values.append(fn(truth, row))
        except ConstantInputError as exc:
            values.append(None)
            note = f"undefined: {exc}"
    defined = [v for v in values if v is not None]
    if not defined:
        return MetricSummary(None, None, tuple(values), note)
    value = float(np.mean(defined))
    if len(defined) == 1:
        spread = None
    elif all(v == defined[0] for v in defined):
        spread = 0.0
    else:
        spread = float(np.std(defined, ddof=1))
    return MetricSummary(value, spread, tuple(values), note)


def evaluate(truth, runs) -> dict[str, MetricSummary]:
    """All three metrics for one (dimension, target) cell on the test split."""
    truth = np.asarray(truth, dtype=np.float64)
    if truth.shape[0] == 0:
        raise ValueError("evaluate needs a nonempty test split")
    return {name: summarize_metric(name, truth, runs) for name in METRIC_FUNCTIONS}


@dataclass
class MetricReport:
    """Benchmark results keyed by (method, target, dimension).

    target is "mean" or "sd"; cells map metric name -> MetricSummary.
    """

    cells: dict = field(default_factory=dict)
    reference_notes: list[str] = field(default_factory=list)

    def add(self, method: str, target: str, dimension: str,
            summaries: dict[str, MetricSummary]) -> None:
        self.cells[(method, target, dimension)] = summaries

    def get(self, method: str, target: str, dimension: str):
        return self.cells.get((method, target, dimension))

    def methods(self) -> list[str]:
        seen = []
        for method, _, _ in self.cells:
            if method not in seen:
                seen.append(method)
        return seen

    def to_dict(self) -> dict:
        out = {"cells": [], "reference": {
            "mean_r2_nll": DEAM_REFERENCE_MEAN_R2,
            "sd_note": DEAM_REFERENCE_SD_NOTE,
            "notes": self.reference_notes,
        }}
        for (method, target, dimension), summaries in sorted(self.cells.items()):
            out["cells"].append({
                "method": method,
                "target": target,
                "dimension": dimension,
                "metrics": {
                    name: {
                        "value": s.value,
                        "spread": s.spread,
                        "per_run": list(s.per_run),
                        "note": s.note,
                    }
                    for name, s in summaries.items()
                },
            })
        return out

    def to_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=1)


def format_cell(summary: MetricSummary | None, metric: str) -> str:
    if summary is None or summary.value is None:
        return "undef" if summary is not None else "-"
    if metric == "r2" and summary.value < R2_PRINT_FLOOR:
        return "≪0"
    if summary.spread is None:
        return f"{summary.value:.2f}"
    return f"{summary.value:.2f}±{summary.spread:.2f}"


def render_table(report: MetricReport) -> str:
    """Aligned plain-text tables: one block per target (mean, then SD)."""
    metric_titles = [("r2", "R^2"), ("pearson", "Pearson r_p"), ("spearman", "Spearman r_s")]
    dims = ("valence", "arousal")
    lines = []
    for target, title in (("mean", "Mean"), ("sd", "Standard Deviation")):
        rows = []
        header1 = [""]
        header2 = [""]
        for _, mt in metric_titles:
            header1.extend([mt, ""])
            header2.extend(["Valence", "Arousal"])
        rows.append(header1)
        rows.append(header2)
        for method in report.methods():
            row = [METHOD_LABELS.get(method, method)]
            has_any = False
            for name, _ in metric_titles:
                for dim in dims:
                    summary = report.get(method, target, dim)
                    cell = format_cell(summary.get(name) if summary else None, name)
                    has_any = has_any or cell != "-"
                    row.append(cell)
            if has_any:
                rows.append(row)
        if target == "mean":
            ref_row = ["reference: NLL on DEAM (published)"]
            for name, _ in metric_titles:
                for dim in dims:
                    if name == "r2":
                        v, s = DEAM_REFERENCE_MEAN_R2[dim]
                        ref_row.append(f"{v:.2f}±{s:.2f}")
                    else:
                        ref_row.append("-")
            rows.append(ref_row)
        widths = [max(len(r[c]) for r in rows) for c in range(len(rows[0]))]
        lines.append(title)
        for r in rows:
            lines.append("  ".join(cell.ljust(w) for cell, w in zip(r, widths)).rstrip())
        if target == "sd":
            lines.append(f"note: {DEAM_REFERENCE_SD_NOTE}")
        for note in report.reference_notes:
            lines.append(f"note: {note}")
        lines.append("")
    return "\n".join(lines)


def write_scatter_csv(path, ids, empirical, predicted) -> None:
    """Per-stimulus empirical vs predicted values, for external plotting."""
    empirical = np.asarray(empirical, dtype=np.float64)
    predicted = np.asarray(predicted, dtype=np.float64)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["stimulus_id", "empirical", "predicted"])
        for sid, e, p in zip(ids, empirical, predicted):
            writer.writerow([sid, repr(float(e)), repr(float(p))])
