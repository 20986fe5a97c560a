"""Independent reference implementations used to pin expected values.

Nothing here calls the fast paths under test: every function recomputes
its answer from the documented definitions, usually with plain loops.
Unit tests freeze values produced by these oracles and property tests
compare the library against them on random inputs.
"""

from __future__ import annotations

import numpy as np
from numba import njit

# ---------------------------------------------------------------------------
# Weighted hinge + ridge subproblem: objective and a projected-gradient solver


def hinge_ridge_objective(beta, X, y, c, d, ridge) -> float:
    """P(beta) = sum_k c_k max(0, 1 - y_k (x_k . beta + d_k)) + ridge ||beta||^2."""
    beta = np.asarray(beta, dtype=np.float64)
    margins = y * (X @ beta + d)
    return float(c @ np.maximum(0.0, 1.0 - margins) + ridge * beta @ beta)


@njit(cache=True)
def _pgd_kernel(X, y, c, d, ridge, nonneg, iters):
    n, dim = X.shape
    beta = np.zeros(dim, dtype=np.float64)
    best = beta.copy()
    # Objective at zero: hinge is c_k * max(0, 1 - y_k d_k).
    best_obj = 0.0
    for k in range(n):
        m = 1.0 - y[k] * d[k]
        if m > 0.0:
            best_obj += c[k] * m
    # Step cap from the problem scale, so early (large) diminishing
    # steps cannot blow the iterate up when ridge is small.
    scale = 2.0 * ridge
    for k in range(n):
        nk = 0.0
        for j in range(dim):
            nk += X[k, j] * X[k, j]
        scale += c[k] * nk
    cap = 1.0 / scale if scale > 0.0 else 1.0
    grad = np.empty(dim, dtype=np.float64)
    for it in range(iters):
        for j in range(dim):
            grad[j] = 2.0 * ridge * beta[j]
        for k in range(n):
            m = d[k]
            for j in range(dim):
                m += X[k, j] * beta[j]
            if y[k] * m < 1.0:
                for j in range(dim):
                    grad[j] -= c[k] * y[k] * X[k, j]
        step = 1.0 / (2.0 * ridge * (it + 1.0))
        if step > cap:
            step = cap
        for j in range(dim):
            bj = beta[j] - step * grad[j]
            if nonneg[j] and bj < 0.0:
                bj = 0.0
            beta[j] = bj
        obj = 0.0
        for j in range(dim):
            obj += ridge * beta[j] * beta[j]
        for k in range(n):
            m = d[k]
            for j in range(dim):
                m += X[k, j] * beta[j]
            v = 1.0 - y[k] * m
            if v > 0.0:
                obj += c[k] * v
        if obj < best_obj:
            best_obj = obj
            for j in range(dim):
                best[j] = beta[j]
    return best, best_obj


def pgd_solve(X, y, c, d, ridge, nonneg, iters=1_000_000):
    """Best iterate of projected subgradient descent with diminishing steps."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    beta, obj = _pgd_kernel(
        X,
        np.asarray(y, dtype=np.float64),
        np.asarray(c, dtype=np.float64),
        np.asarray(d, dtype=np.float64),
        float(ridge),
        np.asarray(nonneg, dtype=np.bool_),
        int(iters),
    )
    return beta, obj


# ---------------------------------------------------------------------------
# Full training objective, recomputed with per-cell loops


def slow_stage_vector(q: np.ndarray, tp: int, t: int) -> np.ndarray:
    vec = np.ones(q.shape[1], dtype=np.float64)
    for r in range(tp + 1, t + 1):
        vec = vec - q[r - 1]
    return vec


def slow_user_map(params, uf) -> np.ndarray:
    g = np.zeros(params.K, dtype=np.float64)
    for k in range(params.K):
        for p in range(params.schema.p1):
            g[k] += params.A[k, p] * uf.u[p]
        for l, level in enumerate(uf.s):
            g[k] += params.a[l][level - 1, k]
    return g


def slow_item_map(params, itf) -> np.ndarray:
    g = np.zeros(params.K, dtype=np.float64)
    for k in range(params.K):
        for p in range(params.schema.p2):
            g[k] += params.B[k, p] * itf.v[p]
        for l, level in enumerate(itf.o):
            g[k] += params.b[l][level - 1, k]
    return g


def slow_decision(params, uf, itf, tp: int, t: int) -> float:
    gu = slow_user_map(params, uf)
    gi = slow_item_map(params, itf)
    qv = slow_stage_vector(params.q, tp, t)
    return float(np.sum(gu * gi * qv))


def _expand(weights, T: int) -> dict:
    pairs = [(tp, t) for tp in range(T) for t in range(tp + 1, T + 1)]
    if weights == "all":
        return {p: 1.0 for p in pairs}
    if weights == "next":
        return {(tp, t): (1.0 if t == tp + 1 else 0.0) for tp, t in pairs}
    if weights == "last":
        return {(tp, t): (1.0 if t == T else 0.0) for tp, t in pairs}
    full = {p: 0.0 for p in pairs}
    for key, val in dict(weights).items():
        full[(int(key[0]), int(key[1]))] = float(val)
    return full


def slow_objective(
    dataset, params, lambda1, lambda2, lambda3, weights="all", class_balance=False
) -> float:
    """Weighted hinge risk over stage pairs plus ridge penalties.

    The risk normalizer is the total weighted sample count over all
    stage pairs (weight times the size of the conditioning positive
    set), so the hinge part of the objective is a weighted mean.
    """
    T = dataset.schema.T
    wfull = _expand(weights, T)
    members: dict = {}
    for (tp, t), w in wfull.items():
        rows = []
        for n, inter in enumerate(dataset.interactions):
            if tp == 0 or inter.y[tp - 1] == 1:
                rows.append(n)
        members[(tp, t)] = rows
    n_w = sum(w * len(members[p]) for p, w in wfull.items())
    risk = 0.0
    for (tp, t), w in wfull.items():
        if w == 0.0 or not members[(tp, t)]:
            continue
        rows = members[(tp, t)]
        labels = [dataset.interactions[n].y[t - 1] for n in rows]
        factors = {1: 1.0, -1: 1.0}
        if class_balance:
            n_pos = sum(1 for v in labels if v == 1)
            n_neg = len(labels) - n_pos
            if n_pos and n_neg:
                factors = {1: len(rows) / (2.0 * n_pos), -1: len(rows) / (2.0 * n_neg)}
        for n, y in zip(rows, labels):
            inter = dataset.interactions[n]
            f = slow_decision(params, dataset.users[inter.i], dataset.items[inter.j], tp, t)
            risk += (w / n_w) * factors[y] * max(0.0, 1.0 - y * f)
    penalty = lambda1 * (np.sum(params.A**2) + np.sum(params.B**2))
    penalty += lambda2 * (
        sum(np.sum(tab**2) for tab in params.a) + sum(np.sum(tab**2) for tab in params.b)
    )
    penalty += lambda3 * np.sum(params.q**2)
    return float(risk + penalty)


# ---------------------------------------------------------------------------
# Simulator stream replay, following the documented draw order


def replay_generate(cfg):
    """Replay the generator's contractual draw order with its substream.

    Returns (tables, S, O, Y) where tables is (a, b, q); the caller
    compares these against what generate_dataset produced.
    """
    from chainrec.seeding import substream

    rng = substream(cfg.seed, "simulate")
    a = [rng.chisquare(1.0, size=(card, cfg.K)) for card in cfg.user_cardinalities]
    b = [rng.chisquare(1.0, size=(card, cfg.K)) for card in cfg.item_cardinalities]
    q = rng.chisquare(1.0, size=(cfg.T, cfg.K))

    def encode(levels, cards):
        uid, radix = 0, 1
        for l, card in enumerate(cards):
            uid += (levels[l] - 1) * radix
            radix *= card
        return uid

    seen = set()
    S_rows, O_rows = [], []
    batch = cfg.n_pairs
    while len(S_rows) < cfg.n_pairs:
        S = np.empty((batch, len(cfg.user_cardinalities)), dtype=np.int64)
        for l, card in enumerate(cfg.user_cardinalities):
            S[:, l] = rng.integers(1, card + 1, size=batch)
        O = np.empty((batch, len(cfg.item_cardinalities)), dtype=np.int64)
        for l, card in enumerate(cfg.item_cardinalities):
            O[:, l] = rng.integers(1, card + 1, size=batch)
        for r in range(batch):
            key = (encode(S[r], cfg.user_cardinalities), encode(O[r], cfg.item_cardinalities))
            if key in seen:
                continue
            seen.add(key)
            S_rows.append(S[r].copy())
            O_rows.append(O[r].copy())
            if len(S_rows) == cfg.n_pairs:
                break
        batch = cfg.n_pairs - len(S_rows)
    S = np.array(S_rows, dtype=np.int64)
    O = np.array(O_rows, dtype=np.int64)

    n = cfg.n_pairs
    g = np.zeros((n, cfg.K))
    gu = np.zeros((n, cfg.K))
    gi = np.zeros((n, cfg.K))
    for l in range(len(cfg.user_cardinalities)):
        gu += a[l][S[:, l] - 1]
    for l in range(len(cfg.item_cardinalities)):
        gi += b[l][O[:, l] - 1]
    g = gu * gi
    Y = np.empty((n, cfg.T), dtype=np.int64)
    alive = np.ones(n, dtype=bool)
    for t in range(1, cfg.T + 1):
        p_t = g @ (1.0 - q[t - 1])
        eps = rng.normal(0.0, np.sqrt(0.1), size=n)
        score = p_t + float(np.std(p_t)) * cfg.noise_scale * eps
        y_t = np.where(score > 0.0, 1, -1)
        Y[:, t - 1] = np.where(alive, y_t, -1)
        alive &= Y[:, t - 1] == 1
    return (a, b, q), S, O, Y
