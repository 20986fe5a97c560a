"""Blockwise training of the monotone factor model.

Each outer iteration sweeps the parameter blocks in a fixed order: the
user numeric matrix A, then every user category table (all levels of
one category solved from a common snapshot, since their samples are
disjoint), then the item side, then the stage decrements q_1..q_T in
sequence.  Holding everything else fixed, each block minimizes exactly
the canonical weighted-hinge-plus-ridge subproblem of
:mod:`chainrec.solver` with nonnegativity bounds on every coordinate,
so the outer objective can only go down; a keep-the-incumbent guard
makes that monotone even under early inner stopping.

The per-block sample layouts (derivable by expanding the decision
function around one block):

* A: features ``u_i (x) (b_j * q_pair)`` against column-stacked vec(A),
  drift from the user category sum;
* a(l, h): samples whose user sits at level h of category l, features
  ``b_j * q_pair``, drift from A u_i plus the other category tables;
* B / b(l, h): mirror images on the item side;
* q(r): samples whose stage pair straddles r (t' < r <= t), features
  ``-(a_i * b_j)``, drift ``(1 - sum_{r' != r} q_{r'}) . (a_i * b_j)``
  over the straddled decrements.

Stopping: the outer loop ends when the objective decrement falls below
``tol_outer`` or after ``max_outer`` iterations.  At termination no
single block re-solve can improve the objective more than marginally
(blockwise stationarity), which the acceptance suite checks.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Iterator

import numpy as np

from .data import Dataset, FeatureSchema, validate_chain
from .model import (
    HyperParams,
    ModelParams,
    SampleTable,
    map_item_rows,
    map_user_rows,
    model_objective,
    sample_table,
    stage_vector,
)
from .seeding import substream
from .solver import SubproblemSpec, primal_objective, solve_subproblem

INIT_STD = np.sqrt(0.1)


@dataclass(frozen=True)
class BlockId:
    """Names one parameter block: kind "A" or "B" (whole matrix),
    "a" or "b" with 1-based category ``l`` and level ``h``, or "q" with
    1-based stage ``r``."""

    kind: str
    l: int = 0
    h: int = 0
    r: int = 0

    def __post_init__(self) -> None:
        if self.kind not in ("A", "B", "a", "b", "q"):
            raise ValueError(f"unknown block kind {self.kind!r}")
        if self.kind in ("a", "b") and (self.l < 1 or self.h < 1):
            raise ValueError("category blocks need 1-based l and h")
        if self.kind == "q" and self.r < 1:
            raise ValueError("stage blocks need 1-based r")

    def __str__(self) -> str:
        if self.kind in ("A", "B"):
            return self.kind
        if self.kind == "q":
            return f"q({self.r})"
        return f"{self.kind}({self.l},{self.h})"


def enumerate_blocks(schema: FeatureSchema) -> Iterator[BlockId]:
    """All blocks of a schema in the training sweep order."""
    if schema.p1:
        yield BlockId("A")
    for l, card in enumerate(schema.user_cardinalities, start=1):
        for h in range(1, card + 1):
            yield BlockId("a", l=l, h=h)
    if schema.p2:
        yield BlockId("B")
    for l, card in enumerate(schema.item_cardinalities, start=1):
        for h in range(1, card + 1):
            yield BlockId("b", l=l, h=h)
    for r in range(1, schema.T + 1):
        yield BlockId("q", r=r)


@dataclass(frozen=True)
class TraceRow:
    iteration: int
    objective: float
    seconds: float
    subproblems: int
    nonconverged: int


@dataclass(frozen=True)
class TrainTrace:
    """Per-iteration objective log; row 0 is the freshly initialized model."""

    rows: tuple[TraceRow, ...]
    converged: bool

    @property
    def objectives(self) -> np.ndarray:
        return np.array([r.objective for r in self.rows])

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf8") as fh:
            fh.write("iteration,objective,seconds,subproblems,nonconverged\n")
            for r in self.rows:
                fh.write(
                    f"{r.iteration},{r.objective!r},{r.seconds!r},{r.subproblems},{r.nonconverged}\n"
                )


def init_params(schema: FeatureSchema, K: int, seed: int = 0) -> ModelParams:
    """Random starting point for training.

    A, B, and the category tables draw i.i.d. absolute normals with
    variance 0.1 (in that order, from the "init" substream); every stage
    decrement starts at the constant 1/(2T), which keeps every stage
    vector entry at least 1/2 initially.
    """
    rng = substream(seed, "init")
    A = np.abs(rng.normal(0.0, INIT_STD, size=(K, schema.p1)))
    B = np.abs(rng.normal(0.0, INIT_STD, size=(K, schema.p2)))
    a = tuple(
        np.abs(rng.normal(0.0, INIT_STD, size=(card, K))) for card in schema.user_cardinalities
    )
    b = tuple(
        np.abs(rng.normal(0.0, INIT_STD, size=(card, K))) for card in schema.item_cardinalities
    )
    q = np.full((schema.T, K), 1.0 / (2.0 * schema.T))
    return ModelParams(schema=schema, K=K, A=A, B=B, a=a, b=b, q=q)


def apply_block(params: ModelParams, block: BlockId, beta: np.ndarray) -> ModelParams:
    """New params with one block replaced by ``beta`` (solver layout)."""
    K = params.K
    sc = params.schema
    beta = np.asarray(beta, dtype=np.float64)
    if block.kind == "A":
        return replace(params, A=beta.reshape(sc.p1, K).T)
    if block.kind == "B":
        return replace(params, B=beta.reshape(sc.p2, K).T)
    if block.kind == "a":
        tables = list(params.a)
        table = tables[block.l - 1].copy()
        table[block.h - 1] = beta
        tables[block.l - 1] = table
        return replace(params, a=tuple(tables))
    if block.kind == "b":
        tables = list(params.b)
        table = tables[block.l - 1].copy()
        table[block.h - 1] = beta
        tables[block.l - 1] = table
        return replace(params, b=tuple(tables))
    q = params.q.copy()
    q[block.r - 1] = beta
    return replace(params, q=q)


def block_value(params: ModelParams, block: BlockId) -> np.ndarray:
    """Current value of a block in the solver layout (flat vector)."""
    if block.kind == "A":
        return params.A.T.reshape(-1).copy()
    if block.kind == "B":
        return params.B.T.reshape(-1).copy()
    if block.kind == "a":
        return params.a[block.l - 1][block.h - 1].copy()
    if block.kind == "b":
        return params.b[block.l - 1][block.h - 1].copy()
    return params.q[block.r - 1].copy()


class _FamilyArrays:
    """Per-sample feature/drift arrays for one block family at a snapshot.

    For matrix and stage blocks ``level_of`` is None and (X, drift)
    describe every sample; for category families ``level_of[n]`` gives
    the 1-based level owning sample n, and a level's subproblem is the
    corresponding slice of the shared arrays.
    """

    def __init__(self, X, drift, level_of, ridge, dim):
        self.X = X
        self.drift = drift
        self.level_of = level_of
        self.ridge = ridge
        self.dim = dim


def _family_arrays(
    kind: str,
    l: int,
    params: ModelParams,
    dataset: Dataset,
    hyper: HyperParams,
    table: SampleTable,
) -> tuple[_FamilyArrays, np.ndarray | None]:
    """Shared assembly for a family; also returns the sample mask (q only)."""
    sc = params.schema
    K = params.K
    amap = map_user_rows(params, dataset.U, dataset.S)
    bmap = map_item_rows(params, dataset.V, dataset.O)
    Q = np.stack([stage_vector(params, tp, t) for tp, t in table.pairs])
    q_pair = Q[table.pair_idx]

    if kind in ("A", "a"):
        w_vec = bmap[table.irow] * q_pair
        if kind == "A":
            U_rows = dataset.U[table.urow]
            X = (U_rows[:, :, None] * w_vec[:, None, :]).reshape(table.n_samples, sc.p1 * K)
            cat = np.zeros((dataset.S.shape[0], K))
            for ll in range(sc.d1):
                cat += params.a[ll][dataset.S[:, ll] - 1]
            drift = np.einsum("nk,nk->n", cat[table.urow], w_vec)
            return _FamilyArrays(X, drift, None, hyper.lambda1, sc.p1 * K), None
        rest = amap - params.a[l - 1][dataset.S[:, l - 1] - 1]
        drift = np.einsum("nk,nk->n", rest[table.urow], w_vec)
        return _FamilyArrays(w_vec, drift, dataset.S[table.urow, l - 1], hyper.lambda2, K), None

    if kind in ("B", "b"):
        w_vec = amap[table.urow] * q_pair
        if kind == "B":
            V_rows = dataset.V[table.irow]
            X = (V_rows[:, :, None] * w_vec[:, None, :]).reshape(table.n_samples, sc.p2 * K)
            cat = np.zeros((dataset.O.shape[0], K))
            for ll in range(sc.d2):
                cat += params.b[ll][dataset.O[:, ll] - 1]
            drift = np.einsum("nk,nk->n", cat[table.irow], w_vec)
            return _FamilyArrays(X, drift, None, hyper.lambda1, sc.p2 * K), None
        rest = bmap - params.b[l - 1][dataset.O[:, l - 1] - 1]
        drift = np.einsum("nk,nk->n", rest[table.irow], w_vec)
        return _FamilyArrays(w_vec, drift, dataset.O[table.irow, l - 1], hyper.lambda2, K), None

    # q(r): kind == "q", l carries r here.  Only samples straddling r.
    pairs_arr = np.asarray(table.pairs, dtype=np.int64)
    tp_arr = pairs_arr[table.pair_idx, 0]
    t_arr = pairs_arr[table.pair_idx, 1]
    g = amap[table.urow] * bmap[table.irow]
    sel = (tp_arr < l) & (l <= t_arr)
    gs = g[sel]
    drift = np.einsum("nk,nk->n", gs, q_pair[sel] + params.q[l - 1])
    return _FamilyArrays(-gs, drift, None, hyper.lambda3, K), sel


def _level_spec(fam: _FamilyArrays, h: int, table: SampleTable, hyper: HyperParams) -> SubproblemSpec:
    sel = fam.level_of == h
    return SubproblemSpec(
        X=fam.X[sel],
        y=table.y[sel],
        c=table.cost[sel],
        d=fam.drift[sel],
        ridge=fam.ridge,
        nonneg=np.ones(fam.dim, dtype=bool),
        tol=hyper.inner_tol,
        max_iter=hyper.inner_max_iter,
    )


def assemble_block(
    block: BlockId,
    params: ModelParams,
    dataset: Dataset,
    hyper: HyperParams,
    table: SampleTable | None = None,
) -> SubproblemSpec:
    """Canonical subproblem for one block at the current parameters.

    The margin of every assembled sample equals ``y * f(t', t)`` of the
    full model, so solving the subproblem minimizes the full objective
    over that block (the other blocks' ridge terms are constant there).
    """
    if params.schema != dataset.schema:
        raise ValueError("params and dataset disagree on the feature schema")
    sc = params.schema
    if block.kind == "A" and sc.p1 == 0:
        raise ValueError("schema has no user numeric features, A is empty")
    if block.kind == "B" and sc.p2 == 0:
        raise ValueError("schema has no item numeric features, B is empty")
    if block.kind == "a":
        if not 1 <= block.l <= sc.d1:
            raise ValueError(f"user category {block.l} outside 1..{sc.d1}")
        if not 1 <= block.h <= sc.user_cardinalities[block.l - 1]:
            raise ValueError(
                f"level {block.h} outside 1..{sc.user_cardinalities[block.l - 1]}"
            )
    if block.kind == "b":
        if not 1 <= block.l <= sc.d2:
            raise ValueError(f"item category {block.l} outside 1..{sc.d2}")
        if not 1 <= block.h <= sc.item_cardinalities[block.l - 1]:
            raise ValueError(
                f"level {block.h} outside 1..{sc.item_cardinalities[block.l - 1]}"
            )
    if block.kind == "q" and not 1 <= block.r <= sc.T:
        raise ValueError(f"stage {block.r} outside 1..{sc.T}")
    if table is None:
        table = sample_table(dataset, hyper.weights, hyper.class_balance)

    if block.kind == "q":
        fam, sel = _family_arrays("q", block.r, params, dataset, hyper, table)
        return SubproblemSpec(
            X=fam.X, y=table.y[sel], c=table.cost[sel], d=fam.drift,
            ridge=fam.ridge, nonneg=np.ones(fam.dim, dtype=bool),
            tol=hyper.inner_tol, max_iter=hyper.inner_max_iter,
        )
    fam, _ = _family_arrays(block.kind, block.l, params, dataset, hyper, table)
    if block.kind in ("A", "B"):
        return SubproblemSpec(
            X=fam.X, y=table.y, c=table.cost, d=fam.drift,
            ridge=fam.ridge, nonneg=np.ones(fam.dim, dtype=bool),
            tol=hyper.inner_tol, max_iter=hyper.inner_max_iter,
        )
    return _level_spec(fam, block.h, table, hyper)


def _solve_guarded(
    spec: SubproblemSpec,
    incumbent: np.ndarray,
    alpha0: np.ndarray | None = None,
) -> tuple[np.ndarray, bool, np.ndarray]:
    """Solve a block; fall back to the incumbent if it scores no worse.

    The returned dual point is kept either way: the dual ascends
    monotonically, so feeding it back as the next sweep's warm start
    always resumes progress, even on sweeps where the primal is held.
    """
    sol = solve_subproblem(spec, alpha0=alpha0)
    if primal_objective(spec, incumbent) < sol.primal_objective:
        return incumbent, sol.converged, sol.alpha
    return sol.beta, sol.converged, sol.alpha


def fit(
    dataset: Dataset,
    hyper: HyperParams,
    threads: int = 1,
    init: ModelParams | None = None,
) -> tuple[ModelParams, TrainTrace]:
    """Train the factor model by blockwise descent.

    Raises on invalid label chains and on an effectively empty training
    set.  ``threads > 1`` solves the per-level subproblems of each
    category pass concurrently; results are identical to the sequential
    schedule because the subproblems of one pass are disjoint.

    ``init`` replaces the random starting point, e.g. to continue from
    an earlier fit while tightening the penalties (a continuation run).
    The default start is :func:`init_params` seeded from the hyper seed.
    """
    report = validate_chain(dataset)
    if not report.ok:
        raise ValueError(f"refusing to train on invalid chains: {report}")
    sc = dataset.schema
    if (sc.p1 or sc.p2) and hyper.lambda1 <= 0:
        raise ValueError("lambda1 must be positive when numeric features are present")
    if (sc.d1 or sc.d2) and hyper.lambda2 <= 0:
        raise ValueError("lambda2 must be positive when categorical features are present")
    if hyper.lambda3 <= 0:
        raise ValueError("lambda3 must be positive")
    if threads < 1:
        raise ValueError("threads must be at least 1")
    table = sample_table(dataset, hyper.weights, hyper.class_balance)
    if init is None:
        params = init_params(sc, hyper.K, hyper.seed)
    else:
        if init.schema != sc:
            raise ValueError("init params were built for a different schema")
        if init.K != hyper.K:
            raise ValueError(f"init params have K={init.K}, hyper has K={hyper.K}")
        params = init
    duals: dict[str, np.ndarray] = {}

    rows = [TraceRow(0, model_objective(dataset, params, hyper), 0.0, 0, 0)]
    converged = False
    pool = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None
    try:
        for it in range(1, hyper.max_outer + 1):
            t0 = time.perf_counter()
            n_sub = 0
            n_bad = 0

            if sc.p1:
                blk = BlockId("A")
                spec = assemble_block(blk, params, dataset, hyper, table)
                beta, ok, duals[str(blk)] = _solve_guarded(
                    spec, block_value(params, blk), duals.get(str(blk))
                )
                params = apply_block(params, blk, beta)
                n_sub += 1
                n_bad += 0 if ok else 1
            for l in range(1, sc.d1 + 1):
                cards = sc.user_cardinalities[l - 1]
                fam, _ = _family_arrays("a", l, params, dataset, hyper, table)
                results = _level_pass(fam, cards, params, "a", l, table, hyper, pool, duals)
                for h, (beta, ok, alpha) in enumerate(results, start=1):
                    blk = BlockId("a", l=l, h=h)
                    params = apply_block(params, blk, beta)
                    duals[str(blk)] = alpha
                    n_sub += 1
                    n_bad += 0 if ok else 1

            if sc.p2:
                blk = BlockId("B")
                spec = assemble_block(blk, params, dataset, hyper, table)
                beta, ok, duals[str(blk)] = _solve_guarded(
                    spec, block_value(params, blk), duals.get(str(blk))
                )
                params = apply_block(params, blk, beta)
                n_sub += 1
                n_bad += 0 if ok else 1
            for l in range(1, sc.d2 + 1):
                cards = sc.item_cardinalities[l - 1]
                fam, _ = _family_arrays("b", l, params, dataset, hyper, table)
                results = _level_pass(fam, cards, params, "b", l, table, hyper, pool, duals)
                for h, (beta, ok, alpha) in enumerate(results, start=1):
                    blk = BlockId("b", l=l, h=h)
                    params = apply_block(params, blk, beta)
                    duals[str(blk)] = alpha
                    n_sub += 1
                    n_bad += 0 if ok else 1

            for r in range(1, sc.T + 1):
                blk = BlockId("q", r=r)
                spec = assemble_block(blk, params, dataset, hyper, table)
                beta, ok, duals[str(blk)] = _solve_guarded(
                    spec, block_value(params, blk), duals.get(str(blk))
                )
                params = apply_block(params, blk, beta)
                n_sub += 1
                n_bad += 0 if ok else 1

            obj = model_objective(dataset, params, hyper)
            rows.append(TraceRow(it, obj, time.perf_counter() - t0, n_sub, n_bad))
            if rows[-2].objective - obj < hyper.tol_outer:
                converged = True
                break
    finally:
        if pool is not None:
            pool.shutdown(wait=True)

    return params, TrainTrace(tuple(rows), converged)


def _level_pass(fam, cards, params, kind, l, table, hyper, pool, duals):
    """Solve all levels of one category from a common snapshot.

    The level subproblems partition the samples (each sample sits at
    exactly one level), so solving them from the same snapshot is an
    exact block solve for the whole category table.
    """
    specs = [_level_spec(fam, h, table, hyper) for h in range(1, cards + 1)]
    incumbents = [block_value(params, BlockId(kind, l=l, h=h)) for h in range(1, cards + 1)]
    warm = [duals.get(str(BlockId(kind, l=l, h=h))) for h in range(1, cards + 1)]
    if pool is None:
        return [
            _solve_guarded(spec, inc, a0)
            for spec, inc, a0 in zip(specs, incumbents, warm)
        ]
    return list(pool.map(_solve_guarded, specs, incumbents, warm))
