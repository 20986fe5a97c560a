"""Synthetic staged-feedback data with known ground-truth parameters.

The generator draws a purely categorical world (no numeric features):
per-level user factors ``a_{l,h}``, item factors ``b_{l,h}``, and stage
decrements ``q_t``, all entrywise chi-square(1).  The user universe is
the full product of the user category spaces (ids encode the level
combination in mixed radix, first category least significant); items
likewise.  Observed pairs draw their category vectors uniformly and are
deduplicated by rejection.

Labels follow the stagewise recursion: with ``g = a(s) * b(o)`` the
stage-t score is ``p_t = g . (1 - q_t)`` and

    y^t = sign(p_t + sigma_t * noise_scale * eps),   if y^{t-1} = +1
    y^t = -1,                                        otherwise

where ``eps ~ N(0, 0.1)`` (variance 0.1) and ``sigma_t`` is the
standard deviation of ``p_t`` over all observed pairs.  Zero scores go
negative, matching the prediction convention.

Draw order (all from the "simulate" substream of the seed; this order
is part of the contract so the stream can be replayed independently):

1. user factor tables, one ``chisquare(1, (n_l, K))`` per category l;
2. item factor tables likewise;
3. stage decrements ``chisquare(1, (T, K))``;
4. pair candidates in batches: the first batch has ``n_pairs`` rows,
   each later batch exactly the current deficit; within a batch the
   user category columns are drawn first (``integers(1, n_l+1)`` per
   category), then the item columns; candidates are accepted in order,
   skipping already-seen (user, item) id pairs;
5. one ``normal(0, sqrt(0.1), n_pairs)`` noise vector per stage
   t = 1..T, aligned with the accepted pair order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import Dataset, FeatureSchema, Interaction, ItemFeatures, UserFeatures
from .model import ModelParams
from .seeding import substream

NOISE_STD = math.sqrt(0.1)


@dataclass(frozen=True)
class SimConfig:
    """Generator settings; the universe sizes are the category products."""

    user_cardinalities: tuple[int, ...]
    item_cardinalities: tuple[int, ...]
    K: int
    T: int
    n_pairs: int
    noise_scale: float = 1.0
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "user_cardinalities", tuple(int(c) for c in self.user_cardinalities)
        )
        object.__setattr__(
            self, "item_cardinalities", tuple(int(c) for c in self.item_cardinalities)
        )
        if not self.user_cardinalities or not self.item_cardinalities:
            raise ValueError("need at least one category per side")
        if any(c < 1 for c in self.user_cardinalities + self.item_cardinalities):
            raise ValueError("cardinalities must be >= 1")
        if int(self.K) < 1 or int(self.T) < 1:
            raise ValueError("K and T must be at least 1")
        if int(self.n_pairs) < 1:
            raise ValueError("n_pairs must be at least 1")
        if self.n_pairs > self.n_users * self.n_items:
            raise ValueError(
                f"cannot draw {self.n_pairs} distinct pairs from a "
                f"{self.n_users} x {self.n_items} universe"
            )
        if float(self.noise_scale) < 0:
            raise ValueError("noise_scale must be >= 0")
        object.__setattr__(self, "K", int(self.K))
        object.__setattr__(self, "T", int(self.T))
        object.__setattr__(self, "n_pairs", int(self.n_pairs))
        object.__setattr__(self, "noise_scale", float(self.noise_scale))

    @property
    def n_users(self) -> int:
        return int(np.prod(self.user_cardinalities))

    @property
    def n_items(self) -> int:
        return int(np.prod(self.item_cardinalities))

    @property
    def schema(self) -> FeatureSchema:
        return FeatureSchema(
            p1=0,
            p2=0,
            d1=len(self.user_cardinalities),
            d2=len(self.item_cardinalities),
            user_cardinalities=self.user_cardinalities,
            item_cardinalities=self.item_cardinalities,
            T=self.T,
        )

    @property
    def missing_ratio(self) -> float:
        """Fraction of the product universe left unobserved."""
        return 1.0 - self.n_pairs / (self.n_users * self.n_items)


def default_config(seed: int = 0) -> SimConfig:
    """Reference scale: user levels (50, 30, 50), item levels (100, 40),
    K = 20, T = 2, 50000 observed pairs (about 99.98% of the universe
    missing)."""
    return SimConfig(
        user_cardinalities=(50, 30, 50),
        item_cardinalities=(100, 40),
        K=20,
        T=2,
        n_pairs=50000,
        seed=seed,
    )


def encode_levels(levels: np.ndarray, cardinalities: tuple[int, ...]) -> np.ndarray:
    """Mixed-radix id of 1-based level vectors (first category least significant)."""
    levels = np.atleast_2d(np.asarray(levels, dtype=np.int64))
    ids = np.zeros(levels.shape[0], dtype=np.int64)
    radix = 1
    for l, card in enumerate(cardinalities):
        ids += (levels[:, l] - 1) * radix
        radix *= card
    return ids


def _draw_pairs(rng: np.random.Generator, cfg: SimConfig) -> tuple[np.ndarray, np.ndarray]:
    """Distinct pair category matrices (S, O) in acceptance order."""
    d1, d2 = len(cfg.user_cardinalities), len(cfg.item_cardinalities)
    seen: set[tuple[int, int]] = set()
    S_rows: list[np.ndarray] = []
    O_rows: list[np.ndarray] = []
    batch = cfg.n_pairs
    while len(S_rows) < cfg.n_pairs:
        S = np.empty((batch, d1), dtype=np.int64)
        for l, card in enumerate(cfg.user_cardinalities):
            S[:, l] = rng.integers(1, card + 1, size=batch)
        O = np.empty((batch, d2), dtype=np.int64)
        for l, card in enumerate(cfg.item_cardinalities):
            O[:, l] = rng.integers(1, card + 1, size=batch)
        uids = encode_levels(S, cfg.user_cardinalities)
        iids = encode_levels(O, cfg.item_cardinalities)
        for r in range(batch):
            key = (int(uids[r]), int(iids[r]))
            if key in seen:
                continue
            seen.add(key)
            S_rows.append(S[r])
            O_rows.append(O[r])
            if len(S_rows) == cfg.n_pairs:
                break
        batch = cfg.n_pairs - len(S_rows)
    return np.array(S_rows, dtype=np.int64), np.array(O_rows, dtype=np.int64)


def generate_dataset(cfg: SimConfig) -> tuple[Dataset, ModelParams]:
    """Draw a dataset and return it with the generating parameters."""
    rng = substream(cfg.seed, "simulate")
    a = tuple(rng.chisquare(1.0, size=(card, cfg.K)) for card in cfg.user_cardinalities)
    b = tuple(rng.chisquare(1.0, size=(card, cfg.K)) for card in cfg.item_cardinalities)
    q = rng.chisquare(1.0, size=(cfg.T, cfg.K))
    S, O = _draw_pairs(rng, cfg)
    n = cfg.n_pairs

    amap = np.zeros((n, cfg.K))
    for l in range(len(cfg.user_cardinalities)):
        amap += a[l][S[:, l] - 1]
    bmap = np.zeros((n, cfg.K))
    for l in range(len(cfg.item_cardinalities)):
        bmap += b[l][O[:, l] - 1]
    g = amap * bmap

    Y = np.empty((n, cfg.T), dtype=np.int64)
    alive = np.ones(n, dtype=bool)
    for t in range(1, cfg.T + 1):
        p_t = g @ (1.0 - q[t - 1])
        sigma_t = float(np.std(p_t))
        eps = rng.normal(0.0, NOISE_STD, size=n)
        score = p_t + sigma_t * cfg.noise_scale * eps
        y_t = np.where(score > 0.0, 1, -1)
        Y[:, t - 1] = np.where(alive, y_t, -1)
        alive = alive & (Y[:, t - 1] == 1)

    uids = encode_levels(S, cfg.user_cardinalities)
    iids = encode_levels(O, cfg.item_cardinalities)
    users = {}
    items = {}
    empty = np.zeros(0, dtype=np.float64)
    for r in range(n):
        uid, iid = int(uids[r]), int(iids[r])
        if uid not in users:
            users[uid] = UserFeatures(empty, tuple(int(v) for v in S[r]))
        if iid not in items:
            items[iid] = ItemFeatures(empty, tuple(int(v) for v in O[r]))
    interactions = [
        Interaction(int(uids[r]), int(iids[r]), tuple(int(v) for v in Y[r])) for r in range(n)
    ]
    schema = cfg.schema
    dataset = Dataset(schema, users, items, interactions)
    truth = ModelParams(
        schema=schema,
        K=cfg.K,
        A=np.zeros((cfg.K, 0)),
        B=np.zeros((cfg.K, 0)),
        a=a,
        b=b,
        q=q,
    )
    return dataset, truth
