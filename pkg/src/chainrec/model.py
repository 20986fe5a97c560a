"""Core two-level monotone factor model.

The decision function for a user-item pair and a stage pair (t', t),
0 <= t' < t <= T, is

    f(t', t) = (a(u, s) * b(v, o)) . q_{t' t}

where ``a(u, s) = A u + sum_l a_{l, s_l}`` maps user features to a
K-vector, ``b(v, o)`` does the same for items, ``*`` is the entrywise
product, and ``q_{t' t} = 1 - sum_{r = t'+1}^{t} q_r`` is the stage
vector.  All parameter blocks are elementwise nonnegative.  That single
constraint makes the sign of f automatically monotone in both stage
arguments: moving the target stage t forward can only lower f, and
moving the conditioning stage t' forward can only raise it, because the
difference in each case is the nonnegative quantity
``(a * b) . q_r``.  Predictions therefore never claim a later stage
while denying an earlier one.

Prediction for (t', t) is -1 outright when the observed label at t' is
-1 (the chain has already stopped), otherwise the sign of f, with the
convention sign(0) = -1.

The training objective averages the weighted hinge over observed
stage-pair samples and adds per-family ridge penalties:

    (1/N_w) sum_{t'<t} w_{t't} sum_{(i,j) in omega(t')} V(y^t f(t',t))
      + lambda1 (||A||^2 + ||B||^2) + lambda2 (sum ||a||^2 + ||b||^2)
      + lambda3 sum ||q_r||^2

with V(u) = max(0, 1 - u) and N_w = sum_{t'<t} w_{t't} |omega(t')| so
that the loss term is a weighted mean rather than scale-dependent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .data import Dataset, FeatureSchema, ItemFeatures, UserFeatures, build_omega

METHOD_PROPOSED = "proposed"
METHOD_STANDARD = "standard"
METHOD_ORDINAL = "ordinal"


def label_from_value(f):
    """Hard label for a decision value; zero margins go negative."""
    return np.where(np.asarray(f) > 0, 1, -1)


def all_pairs(T: int) -> list[tuple[int, int]]:
    """All stage pairs (t', t) with 0 <= t' < t <= T, lexicographic."""
    return [(tp, t) for tp in range(T) for t in range(tp + 1, T + 1)]


def expand_weights(weights, T: int) -> dict[tuple[int, int], float]:
    """Resolve a weight preset or mapping into a full pair-weight dict.

    Presets: ``"all"`` (every pair weight 1), ``"next"`` (adjacent pairs
    only), ``"last"`` (pairs targeting stage T only).  Mappings may omit
    pairs, which get weight 0; at least one pair must be positive.
    """
    pairs = all_pairs(T)
    if isinstance(weights, str):
        if weights == "all":
            return {p: 1.0 for p in pairs}
        if weights == "next":
            return {(tp, t): (1.0 if t == tp + 1 else 0.0) for tp, t in pairs}
        if weights == "last":
            return {(tp, t): (1.0 if t == T else 0.0) for tp, t in pairs}
        raise ValueError(f"unknown weight preset {weights!r}")
    out = {p: 0.0 for p in pairs}
    for key, val in dict(weights).items():
        tp, t = int(key[0]), int(key[1])
        if (tp, t) not in out:
            raise ValueError(f"stage pair {key} outside 0 <= t' < t <= {T}")
        v = float(val)
        if v < 0 or not math.isfinite(v):
            raise ValueError(f"weight for pair {key} must be finite and >= 0")
        out[(tp, t)] = v
    if not any(v > 0 for v in out.values()):
        raise ValueError("at least one stage-pair weight must be positive")
    return out


@dataclass(frozen=True)
class ModelParams:
    """All trainable blocks of the factor model; every entry is >= 0.

    Shapes: ``A`` is (K, p1), ``B`` is (K, p2), ``a[l]`` is (n_l, K) with
    one row per level of user category l, ``b[l]`` likewise for items,
    and ``q`` is (T, K) with row r-1 holding the stage-r decrement.
    """

    schema: FeatureSchema
    K: int
    A: np.ndarray
    B: np.ndarray
    a: tuple[np.ndarray, ...]
    b: tuple[np.ndarray, ...]
    q: np.ndarray

    def __post_init__(self) -> None:
        sc = self.schema
        K = int(self.K)
        if K < 1:
            raise ValueError("K must be at least 1")
        object.__setattr__(self, "K", K)

        def block(arr, shape, name):
            out = np.asarray(arr, dtype=np.float64)
            if out.shape != shape:
                raise ValueError(f"{name} must have shape {shape}, got {out.shape}")
            if not np.all(np.isfinite(out)):
                raise ValueError(f"{name} contains non-finite values")
            if out.size and np.min(out) < 0:
                raise ValueError(f"{name} must be elementwise nonnegative")
            return out

        object.__setattr__(self, "A", block(self.A, (K, sc.p1), "A"))
        object.__setattr__(self, "B", block(self.B, (K, sc.p2), "B"))
        if len(self.a) != sc.d1:
            raise ValueError(f"need {sc.d1} user factor tables, got {len(self.a)}")
        if len(self.b) != sc.d2:
            raise ValueError(f"need {sc.d2} item factor tables, got {len(self.b)}")
        object.__setattr__(
            self,
            "a",
            tuple(
                block(arr, (card, K), f"a[{l}]")
                for l, (arr, card) in enumerate(zip(self.a, sc.user_cardinalities))
            ),
        )
        object.__setattr__(
            self,
            "b",
            tuple(
                block(arr, (card, K), f"b[{l}]")
                for l, (arr, card) in enumerate(zip(self.b, sc.item_cardinalities))
            ),
        )
        object.__setattr__(self, "q", block(self.q, (sc.T, K), "q"))

    def n_scalars(self) -> int:
        """Number of stored parameter scalars."""
        return (
            self.A.size
            + self.B.size
            + sum(arr.size for arr in self.a)
            + sum(arr.size for arr in self.b)
            + self.q.size
        )


@dataclass(frozen=True)
class HyperParams:
    """Training configuration for :func:`chainrec.train.fit`.

    ``weights`` is a preset name or a mapping {(t', t): w >= 0}; the
    ridge strengths pair with the block families (lambda1 for A/B,
    lambda2 for the category factors, lambda3 for the stage vectors).
    ``class_balance`` rescales sample costs inversely to the label
    frequency within each stage pair (normalized to mean one).
    """

    K: int
    lambda1: float = 0.005
    lambda2: float = 0.05
    lambda3: float = 0.0005
    weights: object = "all"
    tol_outer: float = 1e-4
    max_outer: int = 50
    seed: int = 0
    class_balance: bool = False
    inner_tol: float = 1e-4
    inner_max_iter: int = 1000

    def __post_init__(self) -> None:
        if int(self.K) < 1:
            raise ValueError("K must be at least 1")
        object.__setattr__(self, "K", int(self.K))
        for name in ("lambda1", "lambda2", "lambda3"):
            v = float(getattr(self, name))
            if v < 0 or not math.isfinite(v):
                raise ValueError(f"{name} must be finite and >= 0")
            object.__setattr__(self, name, v)
        if float(self.tol_outer) <= 0:
            raise ValueError("tol_outer must be positive")
        if int(self.max_outer) < 1:
            raise ValueError("max_outer must be at least 1")
        if float(self.inner_tol) <= 0:
            raise ValueError("inner_tol must be positive")
        if int(self.inner_max_iter) < 1:
            raise ValueError("inner_max_iter must be at least 1")
        if not isinstance(self.weights, str):
            # Fail fast on malformed mappings; range checks happen per-T.
            for key, val in dict(self.weights).items():
                tp, t = int(key[0]), int(key[1])
                if not 0 <= tp < t:
                    raise ValueError(f"stage pair {key} must satisfy 0 <= t' < t")
                if float(val) < 0 or not math.isfinite(float(val)):
                    raise ValueError(f"weight for pair {key} must be finite and >= 0")


def map_user_rows(params: ModelParams, U: np.ndarray, S: np.ndarray) -> np.ndarray:
    """User map for stacked feature rows: A u + sum_l a_{l, s_l}, row-wise."""
    out = U @ params.A.T
    for l in range(params.schema.d1):
        out = out + params.a[l][S[:, l] - 1]
    return out


def map_item_rows(params: ModelParams, V: np.ndarray, O: np.ndarray) -> np.ndarray:
    """Item map for stacked feature rows: B v + sum_l b_{l, o_l}, row-wise."""
    out = V @ params.B.T
    for l in range(params.schema.d2):
        out = out + params.b[l][O[:, l] - 1]
    return out


def user_map(params: ModelParams, uf: UserFeatures) -> np.ndarray:
    """K-vector a(u, s) for one user."""
    return map_user_rows(
        params, uf.u.reshape(1, -1), np.asarray(uf.s, dtype=np.int64).reshape(1, -1)
    )[0]


def item_map(params: ModelParams, itf: ItemFeatures) -> np.ndarray:
    """K-vector b(v, o) for one item."""
    return map_item_rows(
        params, itf.v.reshape(1, -1), np.asarray(itf.o, dtype=np.int64).reshape(1, -1)
    )[0]


def stage_vector(params: ModelParams, t_prime: int, t: int) -> np.ndarray:
    """q_{t' t} = 1 - sum_{r = t'+1}^{t} q_r (the all-ones vector at t' = t)."""
    T = params.schema.T
    if not 0 <= t_prime <= t <= T:
        raise ValueError(f"need 0 <= t' <= t <= {T}, got ({t_prime}, {t})")
    out = np.ones(params.K, dtype=np.float64)
    for r in range(t_prime + 1, t + 1):
        out = out - params.q[r - 1]
    return out


def decision_value(
    params: ModelParams, uf: UserFeatures, itf: ItemFeatures, t_prime: int, t: int
) -> float:
    """f(t', t) for one user-item pair."""
    if not 0 <= t_prime < t <= params.schema.T:
        raise ValueError(f"need 0 <= t' < t <= {params.schema.T}, got ({t_prime}, {t})")
    av = user_map(params, uf)
    bv = item_map(params, itf)
    return float((av * bv) @ stage_vector(params, t_prime, t))


def predict_label(
    params: ModelParams,
    uf: UserFeatures,
    itf: ItemFeatures,
    t_prime: int,
    t: int,
    y_t_prime: int = 1,
) -> int:
    """Stage-compatible prediction: -1 if the chain already stopped at t',
    otherwise the sign of the decision value (zero counts as -1)."""
    if t_prime >= 1 and y_t_prime == -1:
        return -1
    return int(label_from_value(decision_value(params, uf, itf, t_prime, t)))


def penalty_terms(params: ModelParams, hyper: HyperParams) -> float:
    """Ridge part of the training objective."""
    pen = hyper.lambda1 * (float(np.sum(params.A**2)) + float(np.sum(params.B**2)))
    pen += hyper.lambda2 * (
        sum(float(np.sum(arr**2)) for arr in params.a)
        + sum(float(np.sum(arr**2)) for arr in params.b)
    )
    pen += hyper.lambda3 * float(np.sum(params.q**2))
    return pen


@dataclass(frozen=True)
class SampleTable:
    """Flat enumeration of the weighted training samples of a dataset.

    One row per (interaction, stage pair) with positive weight: ``pos``
    indexes the interaction, ``urow``/``irow`` the dense feature rows,
    ``pair_idx`` the entry of ``pairs``, ``y`` the target-stage label,
    and ``cost`` the per-sample hinge cost w_{t't} / N_w (times the
    class-balance factor when enabled).
    """

    pairs: tuple[tuple[int, int], ...]
    pair_weights: tuple[float, ...]
    pos: np.ndarray
    urow: np.ndarray
    irow: np.ndarray
    pair_idx: np.ndarray
    y: np.ndarray
    cost: np.ndarray
    n_w: float

    @property
    def n_samples(self) -> int:
        return self.pos.shape[0]


def sample_table(dataset: Dataset, weights, class_balance: bool = False) -> SampleTable:
    """Enumerate weighted stage-pair samples; raises if nothing has weight."""
    T = dataset.schema.T
    wfull = expand_weights(weights, T)
    pairs = [p for p in all_pairs(T) if wfull[p] > 0]
    omegas = {tp: build_omega(dataset, tp) for tp in sorted({p[0] for p in pairs})}
    n_w = float(sum(wfull[(tp, t)] * omegas[tp].size for tp, t in pairs))
    if n_w <= 0:
        raise ValueError("no weighted training samples (all positive sets empty)")
    pos_parts, pidx_parts, y_parts, cost_parts = [], [], [], []
    for idx, (tp, t) in enumerate(pairs):
        pos = omegas[tp]
        if pos.size == 0:
            continue
        y = dataset.Y[pos, t - 1].astype(np.float64)
        cost = np.full(pos.size, wfull[(tp, t)] / n_w, dtype=np.float64)
        if class_balance:
            n_pos = int(np.sum(y == 1.0))
            n_neg = pos.size - n_pos
            if n_pos and n_neg:
                # Inverse class frequency, normalized to mean one per pair.
                factor = np.where(y == 1.0, pos.size / (2.0 * n_pos), pos.size / (2.0 * n_neg))
                cost = cost * factor
        pos_parts.append(pos)
        pidx_parts.append(np.full(pos.size, idx, dtype=np.int64))
        y_parts.append(y)
        cost_parts.append(cost)
    pos = np.concatenate(pos_parts) if pos_parts else np.zeros(0, dtype=np.int64)
    pair_idx = np.concatenate(pidx_parts) if pidx_parts else np.zeros(0, dtype=np.int64)
    y = np.concatenate(y_parts) if y_parts else np.zeros(0, dtype=np.float64)
    cost = np.concatenate(cost_parts) if cost_parts else np.zeros(0, dtype=np.float64)
    return SampleTable(
        pairs=tuple(pairs),
        pair_weights=tuple(wfull[p] for p in pairs),
        pos=pos,
        urow=dataset.inter_user_row[pos],
        irow=dataset.inter_item_row[pos],
        pair_idx=pair_idx,
        y=y,
        cost=cost,
        n_w=n_w,
    )


def sample_decision_values(
    dataset: Dataset, params: ModelParams, table: SampleTable
) -> np.ndarray:
    """Decision value of every sample in the table under ``params``."""
    amap = map_user_rows(params, dataset.U, dataset.S)
    bmap = map_item_rows(params, dataset.V, dataset.O)
    Q = np.stack([stage_vector(params, tp, t) for tp, t in table.pairs]) if table.pairs else np.zeros((0, params.K))
    g = amap[table.urow] * bmap[table.irow]
    return np.einsum("nk,nk->n", g, Q[table.pair_idx])


def model_objective(dataset: Dataset, params: ModelParams, hyper: HyperParams) -> float:
    """Normalized weighted hinge risk plus ridge penalties."""
    if params.schema != dataset.schema:
        raise ValueError("params and dataset disagree on the feature schema")
    table = sample_table(dataset, hyper.weights, hyper.class_balance)
    f = sample_decision_values(dataset, params, table)
    hinge = np.maximum(0.0, 1.0 - table.y * f)
    return float(table.cost @ hinge) + penalty_terms(params, hyper)


# ---------------------------------------------------------------------------
# Predictions


@dataclass(frozen=True)
class PairPredictions:
    """Decision values and hard labels for a list of cells and stage pairs.

    ``f[n, p]`` is the decision value of cell n at ``pairs[p]``;
    ``phi[n, p]`` the stage-compatible label.  ``assumed[n, p]`` marks
    predictions whose conditioning label y^{t'} was unavailable and was
    taken to be +1.
    """

    pairs: tuple[tuple[int, int], ...]
    cells: tuple[tuple[int, int], ...]
    f: np.ndarray
    phi: np.ndarray
    assumed: np.ndarray

    def column(self, pair: tuple[int, int]) -> int:
        return self.pairs.index((int(pair[0]), int(pair[1])))


def _mask_phi(F: np.ndarray, pairs, Y: np.ndarray | None):
    """Apply the stopped-chain rule to raw decision values."""
    phi = label_from_value(F).astype(np.int64)
    assumed = np.zeros(F.shape, dtype=bool)
    for pidx, (tp, _t) in enumerate(pairs):
        if tp == 0:
            continue  # y^0 is +1 by convention, nothing to assume
        if Y is None:
            assumed[:, pidx] = True
        else:
            phi[Y[:, tp - 1] == -1, pidx] = -1
    return phi, assumed


def predict_dataset(
    params: ModelParams, dataset: Dataset, pairs: Sequence[tuple[int, int]] | None = None
) -> PairPredictions:
    """Predictions for every interaction of a dataset (labels drive masking)."""
    if params.schema != dataset.schema:
        raise ValueError("params and dataset disagree on the feature schema")
    T = dataset.schema.T
    pr = [(int(a), int(b)) for a, b in (pairs if pairs is not None else all_pairs(T))]
    for tp, t in pr:
        if not 0 <= tp < t <= T:
            raise ValueError(f"stage pair ({tp}, {t}) outside 0 <= t' < t <= {T}")
    amap = map_user_rows(params, dataset.U, dataset.S)
    bmap = map_item_rows(params, dataset.V, dataset.O)
    g = amap[dataset.inter_user_row] * bmap[dataset.inter_item_row]
    Q = np.stack([stage_vector(params, tp, t) for tp, t in pr])
    F = g @ Q.T
    phi, assumed = _mask_phi(F, pr, dataset.Y)
    cells = tuple((x.i, x.j) for x in dataset.interactions)
    return PairPredictions(tuple(pr), cells, F, phi, assumed)


def predict_cells(
    params: ModelParams,
    users: Mapping[int, UserFeatures],
    items: Mapping[int, ItemFeatures],
    cells: Sequence[tuple[int, int]],
    pairs: Sequence[tuple[int, int]],
    labels: np.ndarray | None = None,
) -> PairPredictions:
    """Predictions for explicit (i, j) cells, optionally without labels.

    Without labels, pairs conditioned on t' >= 1 fall back to the
    assumed-positive convention and are flagged in ``assumed``.
    """
    T = params.schema.T
    pr = [(int(a), int(b)) for a, b in pairs]
    for tp, t in pr:
        if not 0 <= tp < t <= T:
            raise ValueError(f"stage pair ({tp}, {t}) outside 0 <= t' < t <= {T}")
    F = np.zeros((len(cells), len(pr)), dtype=np.float64)
    Q = np.stack([stage_vector(params, tp, t) for tp, t in pr])
    for n, (i, j) in enumerate(cells):
        if i not in users:
            raise ValueError(f"unknown user id {i}")
        if j not in items:
            raise ValueError(f"unknown item id {j}")
        g = user_map(params, users[i]) * item_map(params, items[j])
        F[n] = Q @ g
    phi, assumed = _mask_phi(F, pr, labels)
    return PairPredictions(tuple(pr), tuple((int(i), int(j)) for i, j in cells), F, phi, assumed)


# ---------------------------------------------------------------------------
# Probability chains and the additive construction behind the model shape


@dataclass(frozen=True)
class ProbabilityChain:
    """Marginal stage probabilities pi_0 = 1 >= pi_1 >= ... >= pi_T >= 0."""

    pi: tuple[float, ...]

    def __post_init__(self) -> None:
        pi = tuple(float(x) for x in self.pi)
        if len(pi) < 2:
            raise ValueError("chain needs pi_0 and at least one stage")
        if pi[0] != 1.0:
            raise ValueError(f"pi_0 must be exactly 1, got {pi[0]!r}")
        for r in range(1, len(pi)):
            if not (0.0 <= pi[r] <= pi[r - 1]):
                raise ValueError("stage probabilities must be nonincreasing in [0, 1]")
        object.__setattr__(self, "pi", pi)

    @property
    def T(self) -> int:
        return len(self.pi) - 1


def bayes_from_chain(
    chain: ProbabilityChain | Sequence[float], scale: float = 1.0, base: float = math.e
) -> tuple[np.ndarray, dict[tuple[int, int], float]]:
    """Additive scores whose signs reproduce the optimal rule of a chain.

    Returns nonnegative increments ``h[0..T]`` with
    ``h[0] = scale * log_base(2)`` and
    ``h[r] = scale * log_base(pi_{r-1} / pi_r)``, plus the score matrix
    ``f(t', t) = h[0] - sum_{r=t'+1}^{t} h[r]``, which satisfies
    ``sign(f(t', t)) = sign(pi_t / pi_{t'} - 1/2)`` whenever that ratio
    is off the 1/2 boundary.  Requires base > 1 and strictly positive
    stage probabilities.
    """
    if not isinstance(chain, ProbabilityChain):
        chain = ProbabilityChain(tuple(chain))
    if base <= 1.0:
        raise ValueError("base must exceed 1")
    if scale <= 0.0:
        raise ValueError("scale must be positive")
    if min(chain.pi) <= 0.0:
        raise ValueError("all stage probabilities must be positive to build scores")
    T = chain.T
    log_base = math.log(base)
    h = np.empty(T + 1, dtype=np.float64)
    h[0] = scale * math.log(2.0) / log_base
    for r in range(1, T + 1):
        h[r] = scale * math.log(chain.pi[r - 1] / chain.pi[r]) / log_base
    f = {}
    for tp, t in all_pairs(T):
        f[(tp, t)] = float(h[0] - np.sum(h[tp + 1 : t + 1]))
    return h, f


def count_params(schema: FeatureSchema, K: int, method: str = METHOD_PROPOSED) -> int:
    """Reference parameter-count formulas for the three model families.

    With flattened pair-feature width L = p1 + p2 + sum(n_l) + sum(m_l):
    proposed (L + T) K, per-pair standard L K T (T + 1) / 2, ordinal
    L K T.  For the proposed model this equals the number of stored
    scalars in :class:`ModelParams`.
    """
    if K < 1:
        raise ValueError("K must be at least 1")
    L = schema.one_hot_width
    T = schema.T
    if method == METHOD_PROPOSED:
        return (L + T) * K
    if method == METHOD_STANDARD:
        return L * K * T * (T + 1) // 2
    if method == METHOD_ORDINAL:
        return L * K * T
    raise ValueError(f"unknown method {method!r}")
