"""Datasets of staged user-item feedback.

A dataset couples a feature schema, user and item feature tables, and a
list of interactions.  Each interaction carries a full label chain
``(y^1, ..., y^T)`` with values in {+1, -1} recording whether the pair
reached each behavior stage.  A chain is *valid* when a -1 at stage
``t-1`` forces -1 at stage ``t``; ``y^0`` is +1 by convention (stage 0
is "the pair was observed at all").

The positive index set at stage ``t'``, written ``omega(t')`` here, is
the set of interactions with ``y^{t'} = +1``; ``omega(0)`` is every
observed interaction.  Valid chains make these sets nested.

On-disk layout (all CSV with headers):

* ``interactions.csv``: columns ``i,j,y1,...,yT``; labels exactly 1 or -1.
* ``users.csv``: columns ``i,u1,...,u{p1},s1,...,s{d1}``; numerics in
  [0, 1], categories 1-based level indices.
* ``items.csv``: columns ``j,v1,...,v{p2},o1,...,o{d2}``.
* ``schema.cfg``: ``key = value`` lines declaring p1, p2, d1, d2, the
  category cardinalities, and T.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .seeding import substream

SCHEMA_FILENAME = "schema.cfg"
INTERACTIONS_FILENAME = "interactions.csv"
USERS_FILENAME = "users.csv"
ITEMS_FILENAME = "items.csv"


@dataclass(frozen=True)
class FeatureSchema:
    """Declares the shape of user/item features and the number of stages.

    ``p1``/``p2`` count numeric features, ``d1``/``d2`` categorical ones;
    ``user_cardinalities[l]`` is the number of levels of user category
    ``l`` (1-based level values in the data).  Each side must have at
    least one feature of some kind and ``T >= 1``.
    """

    p1: int
    p2: int
    d1: int
    d2: int
    user_cardinalities: tuple[int, ...]
    item_cardinalities: tuple[int, ...]
    T: int

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "user_cardinalities", tuple(int(c) for c in self.user_cardinalities)
        )
        object.__setattr__(
            self, "item_cardinalities", tuple(int(c) for c in self.item_cardinalities)
        )
        for name in ("p1", "p2", "d1", "d2", "T"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or isinstance(v, bool):
                raise ValueError(f"schema field {name} must be an int, got {v!r}")
            object.__setattr__(self, name, int(v))
        if self.p1 < 0 or self.p2 < 0 or self.d1 < 0 or self.d2 < 0:
            raise ValueError("feature counts must be nonnegative")
        if len(self.user_cardinalities) != self.d1:
            raise ValueError(
                f"user_cardinalities has {len(self.user_cardinalities)} entries, expected d1={self.d1}"
            )
        if len(self.item_cardinalities) != self.d2:
            raise ValueError(
                f"item_cardinalities has {len(self.item_cardinalities)} entries, expected d2={self.d2}"
            )
        if any(c < 1 for c in self.user_cardinalities + self.item_cardinalities):
            raise ValueError("category cardinalities must be >= 1")
        if self.p1 + self.d1 < 1:
            raise ValueError("users need at least one feature (p1 + d1 >= 1)")
        if self.p2 + self.d2 < 1:
            raise ValueError("items need at least one feature (p2 + d2 >= 1)")
        if self.T < 1:
            raise ValueError("need at least one stage (T >= 1)")

    @property
    def one_hot_width(self) -> int:
        """Width of the flattened one-hot encoding of a user-item pair."""
        return (
            self.p1
            + self.p2
            + sum(self.user_cardinalities)
            + sum(self.item_cardinalities)
        )


@dataclass(frozen=True)
class UserFeatures:
    """Feature values of one user: numeric vector ``u`` and 1-based category levels ``s``."""

    u: np.ndarray
    s: tuple[int, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "u", np.asarray(self.u, dtype=np.float64))
        object.__setattr__(self, "s", tuple(int(v) for v in self.s))


@dataclass(frozen=True)
class ItemFeatures:
    """Feature values of one item: numeric vector ``v`` and 1-based category levels ``o``."""

    v: np.ndarray
    o: tuple[int, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "v", np.asarray(self.v, dtype=np.float64))
        object.__setattr__(self, "o", tuple(int(v) for v in self.o))


@dataclass(frozen=True)
class Interaction:
    """One observed user-item pair with its full stage label chain."""

    i: int
    j: int
    y: tuple[int, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "i", int(self.i))
        object.__setattr__(self, "j", int(self.j))
        object.__setattr__(self, "y", tuple(int(v) for v in self.y))


@dataclass(frozen=True)
class ValidationReport:
    """Chain-validity report: (i, j, t) triples where y^{t-1} = -1 but y^t = +1."""

    violations: tuple[tuple[int, int, int], ...]

    @property
    def ok(self) -> bool:
        return not self.violations

    def __str__(self) -> str:
        if self.ok:
            return "all label chains valid"
        head = ", ".join(f"(i={i}, j={j}, t={t})" for i, j, t in self.violations[:5])
        more = "" if len(self.violations) <= 5 else f" and {len(self.violations) - 5} more"
        return f"{len(self.violations)} chain violation(s): {head}{more}"


class Dataset:
    """Immutable container of schema, feature tables, and interactions.

    Construction validates everything against the schema: feature
    dimensions, numeric ranges ([0, 1]), category ranges, label values,
    referential integrity, and uniqueness of (i, j) pairs.  Chain
    validity is *not* enforced here (see :func:`validate_chain`); loaders
    report it and training refuses invalid chains.

    Internally the constructor builds dense index caches (row-aligned
    feature matrices and per-interaction row pointers) that the trainer
    and evaluator use; treat all attributes as read-only.
    """

    def __init__(
        self,
        schema: FeatureSchema,
        users: Mapping[int, UserFeatures],
        items: Mapping[int, ItemFeatures],
        interactions: Sequence[Interaction],
    ) -> None:
        self.schema = schema
        self.users = dict(users)
        self.items = dict(items)
        self.interactions = tuple(interactions)

        for uid, uf in self.users.items():
            if uf.u.shape != (schema.p1,):
                raise ValueError(f"user {uid}: expected {schema.p1} numeric features, got {uf.u.shape}")
            if np.any(uf.u < 0.0) or np.any(uf.u > 1.0) or not np.all(np.isfinite(uf.u)):
                raise ValueError(f"user {uid}: numeric features must lie in [0, 1]")
            if len(uf.s) != schema.d1:
                raise ValueError(f"user {uid}: expected {schema.d1} categories, got {len(uf.s)}")
            for l, (val, card) in enumerate(zip(uf.s, schema.user_cardinalities)):
                if not 1 <= val <= card:
                    raise ValueError(
                        f"user {uid}: category {l + 1} value {val} outside 1..{card}"
                    )
        for iid, itf in self.items.items():
            if itf.v.shape != (schema.p2,):
                raise ValueError(f"item {iid}: expected {schema.p2} numeric features, got {itf.v.shape}")
            if np.any(itf.v < 0.0) or np.any(itf.v > 1.0) or not np.all(np.isfinite(itf.v)):
                raise ValueError(f"item {iid}: numeric features must lie in [0, 1]")
            if len(itf.o) != schema.d2:
                raise ValueError(f"item {iid}: expected {schema.d2} categories, got {len(itf.o)}")
            for l, (val, card) in enumerate(zip(itf.o, schema.item_cardinalities)):
                if not 1 <= val <= card:
                    raise ValueError(
                        f"item {iid}: category {l + 1} value {val} outside 1..{card}"
                    )

        seen: set[tuple[int, int]] = set()
        for inter in self.interactions:
            if inter.i not in self.users:
                raise ValueError(f"interaction ({inter.i}, {inter.j}) references unknown user {inter.i}")
            if inter.j not in self.items:
                raise ValueError(f"interaction ({inter.i}, {inter.j}) references unknown item {inter.j}")
            if len(inter.y) != schema.T:
                raise ValueError(
                    f"interaction ({inter.i}, {inter.j}): expected {schema.T} labels, got {len(inter.y)}"
                )
            if any(v not in (1, -1) for v in inter.y):
                raise ValueError(f"interaction ({inter.i}, {inter.j}): labels must be +1 or -1")
            key = (inter.i, inter.j)
            if key in seen:
                raise ValueError(f"duplicate interaction for pair {key}")
            seen.add(key)

        # Dense caches.  User/item rows are ordered by id so that the
        # layout is a pure function of the contents.
        self.user_ids = tuple(sorted(self.users))
        self.item_ids = tuple(sorted(self.items))
        self._user_row = {uid: r for r, uid in enumerate(self.user_ids)}
        self._item_row = {iid: r for r, iid in enumerate(self.item_ids)}
        self.U = np.array([self.users[uid].u for uid in self.user_ids], dtype=np.float64).reshape(
            len(self.user_ids), schema.p1
        )
        self.S = np.array(
            [self.users[uid].s for uid in self.user_ids], dtype=np.int64
        ).reshape(len(self.user_ids), schema.d1)
        self.V = np.array([self.items[iid].v for iid in self.item_ids], dtype=np.float64).reshape(
            len(self.item_ids), schema.p2
        )
        self.O = np.array(
            [self.items[iid].o for iid in self.item_ids], dtype=np.int64
        ).reshape(len(self.item_ids), schema.d2)
        n = len(self.interactions)
        self.inter_user_row = np.fromiter(
            (self._user_row[x.i] for x in self.interactions), dtype=np.int64, count=n
        )
        self.inter_item_row = np.fromiter(
            (self._item_row[x.j] for x in self.interactions), dtype=np.int64, count=n
        )
        self.Y = np.array([x.y for x in self.interactions], dtype=np.int64).reshape(n, schema.T)

    def __len__(self) -> int:
        return len(self.interactions)

    def user_row(self, uid: int) -> int:
        return self._user_row[uid]

    def item_row(self, iid: int) -> int:
        return self._item_row[iid]

    def subset(self, positions: Iterable[int]) -> "Dataset":
        """New dataset restricted to the given interaction positions (feature tables shared)."""
        inter = [self.interactions[p] for p in positions]
        return Dataset(self.schema, self.users, self.items, inter)


def validate_chain(dataset: Dataset) -> ValidationReport:
    """Check every label chain for a +1 following a -1.

    Returns a report listing the offending (i, j, t) triples, where ``t``
    is the stage holding the impossible +1.  Loaders surface this as a
    warning; training treats a non-empty report as a hard error.
    """
    violations: list[tuple[int, int, int]] = []
    for inter in dataset.interactions:
        for t in range(1, dataset.schema.T):
            if inter.y[t - 1] == -1 and inter.y[t] == 1:
                violations.append((inter.i, inter.j, t + 1))
    return ValidationReport(tuple(violations))


def build_omega(dataset: Dataset, t_prime: int) -> np.ndarray:
    """Positions of interactions with ``y^{t'} = +1`` (all of them for t' = 0).

    The result indexes ``dataset.interactions`` in input order.
    """
    T = dataset.schema.T
    if not 0 <= t_prime <= T:
        raise ValueError(f"stage index {t_prime} outside 0..{T}")
    if t_prime == 0:
        return np.arange(len(dataset.interactions), dtype=np.int64)
    return np.nonzero(dataset.Y[:, t_prime - 1] == 1)[0].astype(np.int64)


def one_hot_encode(dataset: Dataset) -> np.ndarray:
    """Flattened pair features, one row per interaction.

    Column layout: user numerics (p1), item numerics (p2), one block of
    dummies per user category (cardinality columns each), then per item
    category.  Width equals ``schema.one_hot_width``.
    """
    sc = dataset.schema
    n = len(dataset.interactions)
    X = np.zeros((n, sc.one_hot_width), dtype=np.float64)
    ur = dataset.inter_user_row
    ir = dataset.inter_item_row
    col = 0
    if sc.p1:
        X[:, col : col + sc.p1] = dataset.U[ur]
        col += sc.p1
    if sc.p2:
        X[:, col : col + sc.p2] = dataset.V[ir]
        col += sc.p2
    rows = np.arange(n)
    for l, card in enumerate(sc.user_cardinalities):
        X[rows, col + dataset.S[ur, l] - 1] = 1.0
        col += card
    for l, card in enumerate(sc.item_cardinalities):
        X[rows, col + dataset.O[ir, l] - 1] = 1.0
        col += card
    return X


def split_dataset(
    dataset: Dataset,
    ratios: tuple[float, float, float] = (0.1, 0.1, 0.8),
    seed: int = 0,
    allow_empty: bool = False,
) -> tuple[Dataset, Dataset, Dataset]:
    """Randomly partition interactions into train/validation/test datasets.

    Part sizes are ``floor(r1 * n)``, ``floor(r2 * n)``, and the
    remainder, so (0.1, 0.1, 0.8) on 100 interactions gives 10/10/80.
    Feature tables are shared between the parts.  Ratios must be
    nonnegative and sum to 1; a ratio that leaves a part empty is
    rejected unless ``allow_empty`` is set.  The shuffle draws from the
    "split" substream of ``seed``.
    """
    r = tuple(float(x) for x in ratios)
    if len(r) != 3 or any(x < 0 for x in r):
        raise ValueError("ratios must be three nonnegative numbers")
    if abs(sum(r) - 1.0) > 1e-9:
        raise ValueError(f"ratios must sum to 1, got {sum(r)!r}")
    n = len(dataset.interactions)
    n1 = int(np.floor(r[0] * n))
    n2 = int(np.floor(r[1] * n))
    n3 = n - n1 - n2
    if not allow_empty and min(n1, n2, n3) == 0:
        raise ValueError(
            f"split {r} of {n} interactions leaves an empty part (sizes {n1}/{n2}/{n3}); "
            "pass allow_empty=True to permit this"
        )
    rng = substream(seed, "split")
    perm = rng.permutation(n)
    parts = (perm[:n1], perm[n1 : n1 + n2], perm[n1 + n2 :])
    return tuple(dataset.subset(sorted(int(p) for p in part)) for part in parts)


# ---------------------------------------------------------------------------
# CSV / config round trip


def save_schema(schema: FeatureSchema, path: str) -> None:
    with open(path, "w", encoding="utf8") as fh:
        fh.write(f"p1 = {schema.p1}\n")
        fh.write(f"p2 = {schema.p2}\n")
        fh.write(f"d1 = {schema.d1}\n")
        fh.write(f"d2 = {schema.d2}\n")
        fh.write(f"user_cardinalities = {','.join(str(c) for c in schema.user_cardinalities)}\n")
        fh.write(f"item_cardinalities = {','.join(str(c) for c in schema.item_cardinalities)}\n")
        fh.write(f"T = {schema.T}\n")


def load_schema(path: str) -> FeatureSchema:
    """Parse a ``key = value`` schema file (blank lines and # comments allowed)."""
    values: dict[str, str] = {}
    with open(path, encoding="utf8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
            key, _, val = line.partition("=")
            values[key.strip()] = val.strip()
    required = {"p1", "p2", "d1", "d2", "user_cardinalities", "item_cardinalities", "T"}
    missing = required - values.keys()
    if missing:
        raise ValueError(f"{path}: missing schema keys: {sorted(missing)}")

    def int_list(text: str) -> tuple[int, ...]:
        text = text.strip()
        if not text:
            return ()
        return tuple(int(tok) for tok in text.split(","))

    try:
        return FeatureSchema(
            p1=int(values["p1"]),
            p2=int(values["p2"]),
            d1=int(values["d1"]),
            d2=int(values["d2"]),
            user_cardinalities=int_list(values["user_cardinalities"]),
            item_cardinalities=int_list(values["item_cardinalities"]),
            T=int(values["T"]),
        )
    except ValueError as exc:
        raise ValueError(f"{path}: {exc}") from exc


def _parse_label(text: str, where: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise ValueError(f"{where}: label {text!r} is not an integer") from None
    if v not in (1, -1):
        raise ValueError(f"{where}: label must be 1 or -1, got {v}")
    return v


def load_users(path: str, schema: FeatureSchema) -> dict[int, UserFeatures]:
    expected = ["i"] + [f"u{k}" for k in range(1, schema.p1 + 1)] + [
        f"s{k}" for k in range(1, schema.d1 + 1)
    ]
    return _load_feature_table(path, expected, schema.p1, UserFeatures)


def load_items(path: str, schema: FeatureSchema) -> dict[int, ItemFeatures]:
    expected = ["j"] + [f"v{k}" for k in range(1, schema.p2 + 1)] + [
        f"o{k}" for k in range(1, schema.d2 + 1)
    ]
    return _load_feature_table(path, expected, schema.p2, ItemFeatures)


def _load_feature_table(path, expected_header, n_numeric, factory):
    out: dict[int, object] = {}
    with open(path, newline="", encoding="utf8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != expected_header:
            raise ValueError(f"{path}: expected header {','.join(expected_header)}")
        for lineno, row in enumerate(reader, 2):
            if not row:
                continue
            if len(row) != len(expected_header):
                raise ValueError(f"{path}:{lineno}: expected {len(expected_header)} fields")
            ident = int(row[0])
            numeric = [float(tok) for tok in row[1 : 1 + n_numeric]]
            cats = [int(tok) for tok in row[1 + n_numeric :]]
            if ident in out:
                raise ValueError(f"{path}:{lineno}: duplicate id {ident}")
            out[ident] = factory(np.array(numeric, dtype=np.float64), tuple(cats))
    return out


def load_interactions(path: str, T: int) -> list[Interaction]:
    expected = ["i", "j"] + [f"y{t}" for t in range(1, T + 1)]
    out: list[Interaction] = []
    with open(path, newline="", encoding="utf8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != expected:
            raise ValueError(f"{path}: expected header {','.join(expected)}")
        for lineno, row in enumerate(reader, 2):
            if not row:
                continue
            if len(row) != len(expected):
                raise ValueError(f"{path}:{lineno}: expected {len(expected)} fields")
            labels = tuple(
                _parse_label(tok, f"{path}:{lineno}") for tok in row[2:]
            )
            out.append(Interaction(int(row[0]), int(row[1]), labels))
    return out


def load_cells(path: str) -> list[tuple[int, int]]:
    """Load a label-free cell list (header exactly ``i,j``) for scoring."""
    out: list[tuple[int, int]] = []
    with open(path, newline="", encoding="utf8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["i", "j"]:
            raise ValueError(f"{path}: expected header i,j")
        for lineno, row in enumerate(reader, 2):
            if not row:
                continue
            if len(row) != 2:
                raise ValueError(f"{path}:{lineno}: expected 2 fields")
            out.append((int(row[0]), int(row[1])))
    return out


def load_dataset(data_dir: str, schema_path: str | None = None) -> Dataset:
    """Load schema + tables from a directory using the standard file names."""
    if schema_path is None:
        schema_path = os.path.join(data_dir, SCHEMA_FILENAME)
    schema = load_schema(schema_path)
    users = load_users(os.path.join(data_dir, USERS_FILENAME), schema)
    items = load_items(os.path.join(data_dir, ITEMS_FILENAME), schema)
    inter = load_interactions(os.path.join(data_dir, INTERACTIONS_FILENAME), schema.T)
    return Dataset(schema, users, items, inter)


def save_dataset(dataset: Dataset, data_dir: str) -> None:
    """Write schema + tables into a directory using the standard file names."""
    os.makedirs(data_dir, exist_ok=True)
    sc = dataset.schema
    save_schema(sc, os.path.join(data_dir, SCHEMA_FILENAME))
    with open(os.path.join(data_dir, USERS_FILENAME), "w", newline="", encoding="utf8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["i"]
            + [f"u{k}" for k in range(1, sc.p1 + 1)]
            + [f"s{k}" for k in range(1, sc.d1 + 1)]
        )
        for uid in dataset.user_ids:
            uf = dataset.users[uid]
            writer.writerow([uid] + [repr(float(x)) for x in uf.u] + list(uf.s))
    with open(os.path.join(data_dir, ITEMS_FILENAME), "w", newline="", encoding="utf8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["j"]
            + [f"v{k}" for k in range(1, sc.p2 + 1)]
            + [f"o{k}" for k in range(1, sc.d2 + 1)]
        )
        for iid in dataset.item_ids:
            itf = dataset.items[iid]
            writer.writerow([iid] + [repr(float(x)) for x in itf.v] + list(itf.o))
    with open(
        os.path.join(data_dir, INTERACTIONS_FILENAME), "w", newline="", encoding="utf8"
    ) as fh:
        writer = csv.writer(fh)
        writer.writerow(["i", "j"] + [f"y{t}" for t in range(1, sc.T + 1)])
        for inter in dataset.interactions:
            writer.writerow([inter.i, inter.j] + list(inter.y))
