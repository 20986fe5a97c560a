"""Evaluation of stage-pair predictions.

Errors are measured on the positive set of the conditioning stage:
for pair (t', t) only cells with ``y^{t'} = +1`` are scored, and a cell
counts as an error when the predicted label differs from ``y^t``.  The
predicted label is the sign of the decision value with zero mapped to
-1, so a zero margin always errs on a positive cell and never on a
negative one.  The overall figure pools weighted error counts across
pairs; the unweighted mean of the per-pair rates is reported alongside.

The inconsistency rate looks at the raw decision values of *all* stage
pairs of a cell and flags the cell if the sign pattern ever claims a
later stage while denying an earlier one, in either direction:
``sign f(t', t) = -1`` with ``sign f(t', t+1) = +1``, or
``sign f(t'+1, t) = -1`` with ``sign f(t', t) = +1``.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .data import Dataset, build_omega
from .model import PairPredictions, all_pairs, expand_weights


def _check_alignment(pred: PairPredictions, dataset: Dataset) -> None:
    cells = tuple((x.i, x.j) for x in dataset.interactions)
    if pred.cells != cells:
        raise ValueError("predictions are not aligned with the dataset interactions")


def pairwise_error(
    pred: PairPredictions, dataset: Dataset, t_prime: int, t: int
) -> float | None:
    """Error rate of pair (t', t) on the test positives at t'; None if empty."""
    _check_alignment(pred, dataset)
    col = pred.column((t_prime, t))
    pos = build_omega(dataset, t_prime)
    if pos.size == 0:
        return None
    f = pred.f[pos, col]
    y = dataset.Y[pos, t - 1]
    phi = np.where(f > 0.0, 1, -1)
    return float(np.mean(phi != y))


def balanced_error(
    pred: PairPredictions, dataset: Dataset, t_prime: int, t: int
) -> float | None:
    """Mean of the per-class error rates; falls back to the plain rate
    when only one class is present."""
    _check_alignment(pred, dataset)
    col = pred.column((t_prime, t))
    pos = build_omega(dataset, t_prime)
    if pos.size == 0:
        return None
    f = pred.f[pos, col]
    y = dataset.Y[pos, t - 1]
    err = np.where(f > 0.0, 1, -1) != y
    pos_mask = y == 1
    neg_mask = y == -1
    if pos_mask.any() and neg_mask.any():
        return float(0.5 * np.mean(err[pos_mask]) + 0.5 * np.mean(err[neg_mask]))
    return float(np.mean(err))


def overall_error(pred: PairPredictions, dataset: Dataset, weights="all") -> float:
    """Pooled weighted error across stage pairs:
    sum_w(errors) / sum_w(counts) over the pairs present in ``pred``."""
    _check_alignment(pred, dataset)
    wfull = expand_weights(weights, dataset.schema.T)
    num = 0.0
    den = 0.0
    for pidx, (tp, t) in enumerate(pred.pairs):
        w = wfull[(tp, t)]
        if w <= 0:
            continue
        pos = build_omega(dataset, tp)
        if pos.size == 0:
            continue
        f = pred.f[pos, pidx]
        y = dataset.Y[pos, t - 1]
        num += w * float(np.sum(np.where(f > 0.0, 1, -1) != y))
        den += w * pos.size
    if den == 0:
        raise ValueError("no weighted pair has test data")
    return num / den


def inconsistency_rate(pred: PairPredictions) -> float:
    """Fraction of cells whose raw sign matrix is not monotone.

    Requires predictions for the full stage-pair triangle.  Signs use
    the zero-goes-negative convention, matching prediction.
    """
    if not pred.cells:
        raise ValueError("no cells to score")
    T = max(t for _, t in pred.pairs)
    need = set(all_pairs(T))
    have = set(pred.pairs)
    if need - have:
        raise ValueError(f"inconsistency needs all stage pairs; missing {sorted(need - have)}")
    col = {p: pred.pairs.index(p) for p in need}
    sgn = np.where(pred.f > 0.0, 1, -1)
    bad = np.zeros(len(pred.cells), dtype=bool)
    for tp in range(T):
        for t in range(tp + 1, T):
            bad |= (sgn[:, col[(tp, t)]] == -1) & (sgn[:, col[(tp, t + 1)]] == 1)
    for tp in range(T - 1):
        for t in range(tp + 2, T + 1):
            bad |= (sgn[:, col[(tp + 1, t)]] == -1) & (sgn[:, col[(tp, t)]] == 1)
    return float(np.mean(bad))


@dataclass(frozen=True)
class PairMetrics:
    t_prime: int
    t: int
    count: int
    weight: float
    error: float | None
    balanced: float | None
    balanced_fallback: bool


@dataclass(frozen=True)
class EvalReport:
    """Per-pair and aggregate scores of one method on one dataset."""

    method: str
    pairs: tuple[PairMetrics, ...]
    overall_pooled: float
    overall_mean: float
    inconsistency: float

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "pairs": [
                {
                    "t_prime": p.t_prime,
                    "t": p.t,
                    "count": p.count,
                    "weight": p.weight,
                    "error": p.error,
                    "balanced": p.balanced,
                    "balanced_fallback": p.balanced_fallback,
                }
                for p in self.pairs
            ],
            "overall_pooled": self.overall_pooled,
            "overall_mean": self.overall_mean,
            "inconsistency": self.inconsistency,
        }

    def save_json(self, path: str) -> None:
        with open(path, "w", encoding="utf8") as fh:
            json.dump(self.to_dict(), fh, indent=1, sort_keys=True)
            fh.write("\n")


def evaluate_model(
    pred: PairPredictions, dataset: Dataset, weights="all", method: str = "model"
) -> EvalReport:
    """Full report: per-pair rates, pooled and mean overall, inconsistency."""
    _check_alignment(pred, dataset)
    wfull = expand_weights(weights, dataset.schema.T)
    rows = []
    rates = []
    for tp, t in pred.pairs:
        pos = build_omega(dataset, tp)
        err = pairwise_error(pred, dataset, tp, t)
        bal = balanced_error(pred, dataset, tp, t)
        fallback = False
        if err is not None:
            y = dataset.Y[pos, t - 1]
            fallback = not ((y == 1).any() and (y == -1).any())
        rows.append(
            PairMetrics(
                t_prime=tp, t=t, count=int(pos.size), weight=wfull[(tp, t)],
                error=err, balanced=bal, balanced_fallback=fallback,
            )
        )
        if err is not None and wfull[(tp, t)] > 0:
            rates.append(err)
    pooled = overall_error(pred, dataset, weights)
    mean = float(np.mean(rates)) if rates else float("nan")
    inco = inconsistency_rate(pred)
    return EvalReport(
        method=method, pairs=tuple(rows), overall_pooled=pooled,
        overall_mean=mean, inconsistency=inco,
    )


def reports_table(reports: Sequence[EvalReport]) -> list[list[str]]:
    """Rows x methods summary table: one row per stage pair, then the
    pooled overall error, then the inconsistency percentage."""
    if not reports:
        raise ValueError("need at least one report")
    pair_keys: list[tuple[int, int]] = []
    for rep in reports:
        for p in rep.pairs:
            if (p.t_prime, p.t) not in pair_keys:
                pair_keys.append((p.t_prime, p.t))
    pair_keys.sort()
    header = ["", *[rep.method for rep in reports]]
    rows = [header]
    for tp, t in pair_keys:
        row = [f"({tp},{t})"]
        for rep in reports:
            hit = next((p for p in rep.pairs if (p.t_prime, p.t) == (tp, t)), None)
            row.append("NA" if hit is None or hit.error is None else f"{hit.error:.6f}")
        rows.append(row)
    rows.append(["Overall", *[f"{rep.overall_pooled:.6f}" for rep in reports]])
    rows.append(["%Inconsist", *[f"{100.0 * rep.inconsistency:.4f}" for rep in reports]])
    return rows


def save_table(reports: Sequence[EvalReport], path: str) -> None:
    with open(path, "w", newline="", encoding="utf8") as fh:
        csv.writer(fh).writerows(reports_table(reports))
