"""Flat baselines on one-hot pair features.

Two reference model families share the evaluation pipeline with the
factor model:

* standard: one independent hinge+ridge classifier per stage pair
  (t', t), trained on the positive set at t' against the labels at t,
  with a free coefficient vector on the flattened pair features.
* ordinal: one model per conditioning stage t', parametrized as a base
  vector minus nonnegative per-stage increments,
  ``f(t', t) = (beta_0 - sum_{tau=t'+1}^{t} beta_tau) . x``.  Because
  features are nonnegative, later target stages can only score lower,
  so predictions are monotone in t within a stage slice (though not
  necessarily across slices).

Both apply the stopped-chain rule at prediction time: an observed -1
at t' forces the prediction for (t', t) to -1.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .data import Dataset, FeatureSchema, build_omega, one_hot_encode
from .model import PairPredictions, _mask_phi, all_pairs, expand_weights
from .solver import SubproblemSpec, primal_objective, solve_subproblem


@dataclass(frozen=True)
class StandardModel:
    """Per-pair free-coefficient classifiers on one-hot features."""

    schema: FeatureSchema
    betas: Mapping[tuple[int, int], np.ndarray]
    lam: float

    def __post_init__(self) -> None:
        width = self.schema.one_hot_width
        betas = {}
        for key, beta in dict(self.betas).items():
            arr = np.asarray(beta, dtype=np.float64).reshape(-1)
            if arr.shape[0] != width:
                raise ValueError(f"beta for pair {key} has wrong width {arr.shape[0]}")
            betas[(int(key[0]), int(key[1]))] = arr
        object.__setattr__(self, "betas", betas)

    def n_scalars(self) -> int:
        return sum(beta.size for beta in self.betas.values())


@dataclass(frozen=True)
class OrdinalModel:
    """Per-stage base-minus-increments classifiers on one-hot features.

    ``stages[t']`` holds ``(base, {t: increment})`` with the base free
    and every increment elementwise nonnegative.
    """

    schema: FeatureSchema
    stages: Mapping[int, tuple[np.ndarray, Mapping[int, np.ndarray]]]
    lam: float

    def __post_init__(self) -> None:
        width = self.schema.one_hot_width
        stages = {}
        for tp, (base, incs) in dict(self.stages).items():
            base = np.asarray(base, dtype=np.float64).reshape(-1)
            if base.shape[0] != width:
                raise ValueError(f"base for stage {tp} has wrong width")
            fixed = {}
            for t, inc in dict(incs).items():
                arr = np.asarray(inc, dtype=np.float64).reshape(-1)
                if arr.shape[0] != width:
                    raise ValueError(f"increment ({tp}, {t}) has wrong width")
                if arr.size and np.min(arr) < 0:
                    raise ValueError(f"increment ({tp}, {t}) must be nonnegative")
                fixed[int(t)] = arr
            stages[int(tp)] = (base, fixed)
        object.__setattr__(self, "stages", stages)

    def n_scalars(self) -> int:
        return sum(
            base.size + sum(inc.size for inc in incs.values())
            for base, incs in self.stages.values()
        )


def _pair_costs(y: np.ndarray, base: float, class_balance: bool) -> np.ndarray:
    cost = np.full(y.shape[0], base, dtype=np.float64)
    if class_balance:
        n_pos = int(np.sum(y == 1.0))
        n_neg = y.shape[0] - n_pos
        if n_pos and n_neg:
            factor = np.where(y == 1.0, y.shape[0] / (2.0 * n_pos), y.shape[0] / (2.0 * n_neg))
            cost = cost * factor
    return cost


def fit_standard_pair(
    dataset: Dataset,
    t_prime: int,
    t: int,
    lam: float,
    class_balance: bool = False,
    tol: float = 1e-4,
    max_iter: int = 1000,
) -> np.ndarray:
    """Coefficients of one pairwise classifier (mean hinge + lam ridge)."""
    T = dataset.schema.T
    if not 0 <= t_prime < t <= T:
        raise ValueError(f"need 0 <= t' < t <= {T}, got ({t_prime}, {t})")
    pos = build_omega(dataset, t_prime)
    if pos.size == 0:
        raise ValueError(f"positive set at stage {t_prime} is empty")
    X = one_hot_encode(dataset)[pos]
    y = dataset.Y[pos, t - 1].astype(np.float64)
    cost = _pair_costs(y, 1.0 / pos.size, class_balance)
    spec = SubproblemSpec(
        X=X, y=y, c=cost, d=np.zeros(pos.size), ridge=lam,
        nonneg=np.zeros(X.shape[1], dtype=bool), tol=tol, max_iter=max_iter,
    )
    return solve_subproblem(spec).beta


def fit_standard(
    dataset: Dataset,
    lam: float,
    weights="all",
    class_balance: bool = False,
    tol: float = 1e-4,
    max_iter: int = 1000,
) -> StandardModel:
    """Fit one pairwise classifier per positively weighted stage pair."""
    wfull = expand_weights(weights, dataset.schema.T)
    betas = {}
    for tp, t in all_pairs(dataset.schema.T):
        if wfull[(tp, t)] <= 0:
            continue
        betas[(tp, t)] = fit_standard_pair(
            dataset, tp, t, lam, class_balance=class_balance, tol=tol, max_iter=max_iter
        )
    if not betas:
        raise ValueError("no stage pair has positive weight")
    return StandardModel(schema=dataset.schema, betas=betas, lam=float(lam))


def predict_standard(
    model: StandardModel, dataset: Dataset, pairs: Sequence[tuple[int, int]] | None = None
) -> PairPredictions:
    """Decision values and stage-compatible labels for every interaction."""
    if model.schema != dataset.schema:
        raise ValueError("model and dataset disagree on the feature schema")
    pr = [(int(a), int(b)) for a, b in (pairs if pairs is not None else all_pairs(dataset.schema.T))]
    missing = [p for p in pr if p not in model.betas]
    if missing:
        raise ValueError(f"model was not fit for stage pairs {missing}")
    X = one_hot_encode(dataset)
    F = np.column_stack([X @ model.betas[p] for p in pr])
    phi, assumed = _mask_phi(F, pr, dataset.Y)
    cells = tuple((x.i, x.j) for x in dataset.interactions)
    return PairPredictions(tuple(pr), cells, F, phi, assumed)


def _ordinal_objective(Xb0, Xincs, targets, lam, base, incs) -> float:
    """Stage objective from cached feature products (see fit_ordinal_stage)."""
    obj = lam * float(base @ base) + lam * sum(float(v @ v) for v in incs.values())
    for t, y, cost in targets:
        margin = Xb0.copy()
        for tau in sorted(Xincs):
            if tau <= t:
                margin = margin - Xincs[tau]
        obj += float(cost @ np.maximum(0.0, 1.0 - y * margin))
    return obj


def fit_ordinal_stage(
    dataset: Dataset,
    t_prime: int,
    lam: float,
    weights="all",
    class_balance: bool = False,
    tol: float = 1e-4,
    max_iter: int = 1000,
    max_passes: int = 50,
) -> tuple[np.ndarray, dict[int, np.ndarray]]:
    """Fit the base and increments of one conditioning stage by block descent.

    Blocks are solved in the order base, then increments by target
    stage; each is the canonical subproblem restricted to the samples
    that involve it, and passes repeat until the stage objective stops
    improving by ``tol``.
    """
    sc = dataset.schema
    T = sc.T
    if not 0 <= t_prime < T:
        raise ValueError(f"conditioning stage {t_prime} outside 0..{T - 1}")
    wfull = expand_weights(weights, T)
    targets_t = [t for t in range(t_prime + 1, T + 1) if wfull[(t_prime, t)] > 0]
    if not targets_t:
        raise ValueError(f"no positively weighted pair conditions on stage {t_prime}")
    pos = build_omega(dataset, t_prime)
    if pos.size == 0:
        raise ValueError(f"positive set at stage {t_prime} is empty")
    X = one_hot_encode(dataset)[pos]
    width = X.shape[1]
    n_w = float(sum(wfull[(t_prime, t)] * pos.size for t in targets_t))
    targets = []
    for t in targets_t:
        y = dataset.Y[pos, t - 1].astype(np.float64)
        cost = _pair_costs(y, wfull[(t_prime, t)] / n_w, class_balance)
        targets.append((t, y, cost))
    # Increments exist for every stage up to the last weighted target,
    # weighted or not: unweighted middle stages still enter later sums.
    inc_stages = list(range(t_prime + 1, max(targets_t) + 1))

    base = np.zeros(width)
    incs = {t: np.zeros(width) for t in inc_stages}
    Xb0 = X @ base
    Xincs = {t: X @ incs[t] for t in inc_stages}
    prev = _ordinal_objective(Xb0, Xincs, targets, lam, base, incs)
    for _ in range(max_passes):
        # Base block: every (sample, target stage) row with drift from the
        # increments at or below the target.
        rows, ys, costs, drifts = [], [], [], []
        for t, y, cost in targets:
            drift = np.zeros(pos.size)
            for tau in inc_stages:
                if tau <= t:
                    drift = drift - Xincs[tau]
            rows.append(X)
            ys.append(y)
            costs.append(cost)
            drifts.append(drift)
        spec = SubproblemSpec(
            X=np.vstack(rows), y=np.concatenate(ys), c=np.concatenate(costs),
            d=np.concatenate(drifts), ridge=lam,
            nonneg=np.zeros(width, dtype=bool), tol=tol, max_iter=max_iter,
        )
        sol = solve_subproblem(spec)
        if sol.primal_objective <= primal_objective(spec, base):
            base = sol.beta
            Xb0 = X @ base
        # Increment blocks: only target stages at or above tau see beta_tau.
        for tau in inc_stages:
            rows, ys, costs, drifts = [], [], [], []
            for t, y, cost in targets:
                if t < tau:
                    continue
                drift = Xb0.copy()
                for tau2 in inc_stages:
                    if tau2 <= t and tau2 != tau:
                        drift = drift - Xincs[tau2]
                rows.append(-X)
                ys.append(y)
                costs.append(cost)
                drifts.append(drift)
            spec = SubproblemSpec(
                X=np.vstack(rows), y=np.concatenate(ys), c=np.concatenate(costs),
                d=np.concatenate(drifts), ridge=lam,
                nonneg=np.ones(width, dtype=bool), tol=tol, max_iter=max_iter,
            )
            sol = solve_subproblem(spec)
            if sol.primal_objective <= primal_objective(spec, incs[tau]):
                incs[tau] = sol.beta
                Xincs[tau] = X @ incs[tau]
        cur = _ordinal_objective(Xb0, Xincs, targets, lam, base, incs)
        if prev - cur < tol:
            break
        prev = cur
    return base, incs


def fit_ordinal(
    dataset: Dataset,
    lam: float,
    weights="all",
    class_balance: bool = False,
    tol: float = 1e-4,
    max_iter: int = 1000,
) -> OrdinalModel:
    """Fit one ordinal slice per conditioning stage that has weight and data."""
    T = dataset.schema.T
    wfull = expand_weights(weights, T)
    stages = {}
    for tp in range(T):
        if not any(wfull[(tp, t)] > 0 for t in range(tp + 1, T + 1)):
            continue
        if build_omega(dataset, tp).size == 0:
            continue
        stages[tp] = fit_ordinal_stage(
            dataset, tp, lam, weights=weights, class_balance=class_balance,
            tol=tol, max_iter=max_iter,
        )
    if not stages:
        raise ValueError("no conditioning stage has weighted data")
    return OrdinalModel(schema=dataset.schema, stages=stages, lam=float(lam))


def predict_ordinal(
    model: OrdinalModel, dataset: Dataset, pairs: Sequence[tuple[int, int]] | None = None
) -> PairPredictions:
    """Decision values and stage-compatible labels for every interaction."""
    if model.schema != dataset.schema:
        raise ValueError("model and dataset disagree on the feature schema")
    pr = [(int(a), int(b)) for a, b in (pairs if pairs is not None else all_pairs(dataset.schema.T))]
    missing = [p for p in pr if p[0] not in model.stages]
    if missing:
        raise ValueError(f"model has no slice for stage pairs {missing}")
    X = one_hot_encode(dataset)
    cols = []
    for tp, t in pr:
        base, incs = model.stages[tp]
        beta = base.copy()
        for tau, inc in incs.items():
            if tau <= t:
                beta = beta - inc
        cols.append(X @ beta)
    F = np.column_stack(cols)
    phi, assumed = _mask_phi(F, pr, dataset.Y)
    cells = tuple((x.i, x.j) for x in dataset.interactions)
    return PairPredictions(tuple(pr), cells, F, phi, assumed)
