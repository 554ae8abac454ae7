"""Shift-recovery metrics, clustering-agreement metrics, replicate summaries."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.special import gammaln

from .dataset import CohortDataset


@dataclass(frozen=True)
class RecoveryMetrics:
    exact_rate: float
    within_one_rate: float
    mae_days: float
    runtime_minutes: float = float("nan")

    def as_dict(self) -> dict[str, float]:
        return {
            "exact_rate": self.exact_rate,
            "within_one_rate": self.within_one_rate,
            "mae_days": self.mae_days,
            "runtime_minutes": self.runtime_minutes,
        }


@dataclass(frozen=True)
class AgreementMetrics:
    ari: float
    ami: float
    acc: float

    def as_dict(self) -> dict[str, float]:
        return {"ari": self.ari, "ami": self.ami, "acc": self.acc}


def recovery(true_shifts, estimated_shifts, runtime_minutes: float = float("nan")) -> RecoveryMetrics:
    """Exact-recovery rate, within-one-day rate, and mean absolute error in days."""
    truth = np.asarray(true_shifts, dtype=float)
    est = np.asarray(estimated_shifts, dtype=float)
    if truth.shape != est.shape or truth.ndim != 1 or truth.size == 0:
        raise ValueError("shift arrays must be nonempty, 1-D, and aligned")
    err = np.abs(est - truth)
    return RecoveryMetrics(
        exact_rate=float(np.mean(err == 0.0)),
        within_one_rate=float(np.mean(err <= 1.0)),
        mae_days=float(err.mean()),
        runtime_minutes=runtime_minutes,
    )


def _contingency(labels_a: np.ndarray, labels_b: np.ndarray) -> np.ndarray:
    _, a = np.unique(labels_a, return_inverse=True)
    _, b = np.unique(labels_b, return_inverse=True)
    table = np.zeros((a.max() + 1, b.max() + 1), dtype=np.int64)
    np.add.at(table, (a, b), 1)
    return table


def _comb2(x: np.ndarray) -> np.ndarray:
    x = x.astype(float)
    return x * (x - 1.0) / 2.0


def adjusted_rand_index(labels_true, labels_pred) -> float:
    """Pair-counting agreement, adjusted so random labelings score ~0."""
    table = _contingency(np.asarray(labels_true), np.asarray(labels_pred))
    n = table.sum()
    if n < 2:
        return 1.0  # a single subject agrees with itself
    sum_cells = _comb2(table).sum()
    sum_rows = _comb2(table.sum(axis=1)).sum()
    sum_cols = _comb2(table.sum(axis=0)).sum()
    expected = sum_rows * sum_cols / _comb2(np.array([n]))[0]
    max_index = 0.5 * (sum_rows + sum_cols)
    if max_index == expected:
        return 1.0  # both partitions trivial in the same way
    return float((sum_cells - expected) / (max_index - expected))


def _entropy(counts: np.ndarray) -> float:
    p = counts[counts > 0].astype(float)
    p /= p.sum()
    return float(-(p * np.log(p)).sum())


def _mutual_information(table: np.ndarray) -> float:
    n = table.sum()
    nz = table > 0
    nij = table[nz].astype(float)
    outer = np.outer(table.sum(axis=1), table.sum(axis=0))[nz].astype(float)
    return float((nij / n * np.log(nij * n / outer)).sum())


def _expected_mutual_information(row_sums: np.ndarray, col_sums: np.ndarray, n: int) -> float:
    """Expectation of MI over random permutations of one labeling.

    Cell counts follow a hypergeometric law given the margins; the sum runs
    over the feasible counts for every (row, column) pair.
    """
    emi = 0.0
    log_n = math.log(n)
    base = gammaln(n + 1)
    for a in row_sums:
        for b in col_sums:
            lo = max(1, a + b - n)
            hi = min(a, b)
            if hi < lo:
                continue
            nij = np.arange(lo, hi + 1, dtype=float)
            term = nij / n * (np.log(nij) + log_n - math.log(a) - math.log(b))
            logp = (
                gammaln(a + 1)
                + gammaln(b + 1)
                + gammaln(n - a + 1)
                + gammaln(n - b + 1)
                - base
                - gammaln(nij + 1)
                - gammaln(a - nij + 1)
                - gammaln(b - nij + 1)
                - gammaln(n - a - b + nij + 1)
            )
            emi += float((term * np.exp(logp)).sum())
    return emi


def adjusted_mutual_information(labels_true, labels_pred) -> float:
    """AMI under the permutation model, normalized by the larger entropy."""
    lt = np.asarray(labels_true)
    lp = np.asarray(labels_pred)
    table = _contingency(lt, lp)
    rows, cols = table.shape
    n = int(table.sum())
    if (rows == 1 and cols == 1) or (rows == n and cols == n):
        return 1.0  # both trivial: single cluster, or all singletons
    mi = _mutual_information(table)
    emi = _expected_mutual_information(table.sum(axis=1), table.sum(axis=0), n)
    h_true = _entropy(table.sum(axis=1))
    h_pred = _entropy(table.sum(axis=0))
    denominator = max(h_true, h_pred) - emi
    eps = np.finfo(float).eps
    if denominator < 0:
        denominator = min(denominator, -eps)
    else:
        denominator = max(denominator, eps)
    return float((mi - emi) / denominator)


def clustering_accuracy(labels_true, labels_pred) -> float:
    """Best label-matching accuracy via optimal assignment on the confusion matrix."""
    table = _contingency(np.asarray(labels_true), np.asarray(labels_pred))
    r, c = linear_sum_assignment(-table)
    return float(table[r, c].sum() / table.sum())


def agreement(labels_true, labels_pred) -> AgreementMetrics:
    lt = np.asarray(labels_true)
    lp = np.asarray(labels_pred)
    if lt.shape != lp.shape or lt.ndim != 1 or lt.size == 0:
        raise ValueError("label arrays must be nonempty, 1-D, and aligned")
    return AgreementMetrics(
        ari=adjusted_rand_index(lt, lp),
        ami=adjusted_mutual_information(lt, lp),
        acc=clustering_accuracy(lt, lp),
    )


@dataclass(frozen=True)
class MetricInterval:
    mean: float
    lower: float
    upper: float


@dataclass(frozen=True)
class ReplicateSummary:
    n_replicates: int
    stats: dict[str, MetricInterval]


def summarize(records: Sequence[Mapping[str, float]]) -> ReplicateSummary:
    """Mean and empirical 95% percentile interval per metric across replicates."""
    if not records:
        raise ValueError("need at least one replicate")
    keys = list(records[0])
    stats = {}
    for key in keys:
        vals = np.asarray([float(r[key]) for r in records])
        lo, hi = np.percentile(vals, [2.5, 97.5])
        stats[key] = MetricInterval(float(vals.mean()), float(lo), float(hi))
    return ReplicateSummary(n_replicates=len(records), stats=stats)


def window_coverage_mask(
    data: CohortDataset,
    early: tuple[float, float] = (0.0, 8.0),
    mid: tuple[float, float] = (8.0, 13.0),
) -> np.ndarray:
    """True for subjects observed in both the early (closed) and mid (left-open) windows.

    Comparison profiles exclude subjects without coverage in both windows
    before scoring agreement.
    """
    keep = np.zeros(len(data), dtype=bool)
    for i, tr in enumerate(data.trajectories):
        t = tr.times
        has_early = bool(np.any((t >= early[0]) & (t <= early[1])))
        has_mid = bool(np.any((t > mid[0]) & (t <= mid[1])))
        keep[i] = has_early and has_mid
    return keep


def write_metrics_table(path, rows: Sequence[Mapping[str, float]]) -> None:
    """Benchmark-style table: scenario, exact, within-one, MAE, runtime columns."""
    with open(path, "w") as fh:
        fh.write("scenario,exact_rate,within_one_rate,mae_days,runtime_minutes\n")
        for row in rows:
            fh.write(
                f"{row['scenario']},{row['exact_rate']!r},{row['within_one_rate']!r},"
                f"{row['mae_days']!r},{row['runtime_minutes']!r}\n"
            )
