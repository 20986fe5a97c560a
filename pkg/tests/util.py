"""Shared builders and measurement helpers for the test suite."""

from __future__ import annotations

import numpy as np

from chainrec import (
    Dataset,
    FeatureSchema,
    Interaction,
    ItemFeatures,
    UserFeatures,
    assemble_block,
    enumerate_blocks,
    model_objective,
    solve_subproblem,
)
from chainrec.train import apply_block


def toy_schema(p1=1, p2=2, cards_u=(2, 3), cards_i=(2,), T=2) -> FeatureSchema:
    return FeatureSchema(
        p1=p1,
        p2=p2,
        d1=len(cards_u),
        d2=len(cards_i),
        user_cardinalities=tuple(cards_u),
        item_cardinalities=tuple(cards_i),
        T=T,
    )


def toy_dataset(
    n_users=5,
    n_items=4,
    p1=1,
    p2=2,
    cards_u=(2, 3),
    cards_i=(2,),
    T=2,
    density=1.0,
    stay_prob=0.6,
    seed=0,
) -> Dataset:
    """Random but chain-valid dataset over a small user-item grid."""
    rng = np.random.default_rng(seed)
    schema = toy_schema(p1, p2, cards_u, cards_i, T)
    users = {
        i: UserFeatures(
            rng.random(p1), tuple(int(rng.integers(1, c + 1)) for c in cards_u)
        )
        for i in range(n_users)
    }
    items = {
        j: ItemFeatures(
            rng.random(p2), tuple(int(rng.integers(1, c + 1)) for c in cards_i)
        )
        for j in range(n_items)
    }
    inters = []
    for i in range(n_users):
        for j in range(n_items):
            if rng.random() > density:
                continue
            labels = []
            alive = True
            for _ in range(T):
                if alive and rng.random() < stay_prob:
                    labels.append(1)
                else:
                    labels.append(-1)
                    alive = False
            inters.append(Interaction(i, j, tuple(labels)))
    return Dataset(schema, users, items, inters)


def max_block_resolve_gain(dataset, params, hyper) -> float:
    """Largest objective improvement any single exact block re-solve buys.

    At a blockwise-stationary point this is (numerically) zero; the
    trainer's convergence contract bounds it by a small multiple of the
    outer tolerance.
    """
    base = model_objective(dataset, params, hyper)
    best = 0.0
    for blk in enumerate_blocks(dataset.schema):
        spec = assemble_block(blk, params, dataset, hyper)
        sol = solve_subproblem(spec)
        trial = apply_block(params, blk, sol.beta)
        gain = base - model_objective(dataset, trial, hyper)
        if gain > best:
            best = gain
    return best
