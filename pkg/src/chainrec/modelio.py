"""Model files: one JSON envelope for all model families.

The document records the format tag, a method tag, the feature schema,
and every parameter block as nested lists in row-major order.  Floats
serialize via their shortest exact decimal representation, so a
save/load round trip reproduces the parameters bit for bit, and the
writer sorts keys so identical models produce identical bytes.
"""

from __future__ import annotations

import json

import numpy as np

from .baselines import OrdinalModel, StandardModel
from .data import FeatureSchema
from .model import METHOD_ORDINAL, METHOD_PROPOSED, METHOD_STANDARD, ModelParams

FORMAT_TAG = "chainrec-model"
FORMAT_VERSION = 1


def _schema_to_dict(schema: FeatureSchema) -> dict:
    return {
        "p1": schema.p1,
        "p2": schema.p2,
        "d1": schema.d1,
        "d2": schema.d2,
        "user_cardinalities": list(schema.user_cardinalities),
        "item_cardinalities": list(schema.item_cardinalities),
        "T": schema.T,
    }


def _schema_from_dict(doc: dict) -> FeatureSchema:
    return FeatureSchema(
        p1=doc["p1"],
        p2=doc["p2"],
        d1=doc["d1"],
        d2=doc["d2"],
        user_cardinalities=tuple(doc["user_cardinalities"]),
        item_cardinalities=tuple(doc["item_cardinalities"]),
        T=doc["T"],
    )


def _body(model) -> dict:
    if isinstance(model, ModelParams):
        return {
            "method": METHOD_PROPOSED,
            "schema": _schema_to_dict(model.schema),
            "k": model.K,
            "blocks": {
                "user_numeric": model.A.tolist(),
                "item_numeric": model.B.tolist(),
                "user_factors": [arr.tolist() for arr in model.a],
                "item_factors": [arr.tolist() for arr in model.b],
                "stage_factors": model.q.tolist(),
            },
        }
    if isinstance(model, StandardModel):
        return {
            "method": METHOD_STANDARD,
            "schema": _schema_to_dict(model.schema),
            "lambda": model.lam,
            "blocks": {
                "pairs": {f"{tp}:{t}": beta.tolist() for (tp, t), beta in model.betas.items()}
            },
        }
    if isinstance(model, OrdinalModel):
        return {
            "method": METHOD_ORDINAL,
            "schema": _schema_to_dict(model.schema),
            "lambda": model.lam,
            "blocks": {
                "stages": {
                    str(tp): {
                        "base": base.tolist(),
                        "increments": {str(t): inc.tolist() for t, inc in incs.items()},
                    }
                    for tp, (base, incs) in model.stages.items()
                }
            },
        }
    raise TypeError(f"cannot serialize {type(model).__name__}")


def save_model(model, path: str) -> None:
    doc = {"format": FORMAT_TAG, "version": FORMAT_VERSION}
    doc.update(_body(model))
    with open(path, "w", encoding="utf8") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_model(path: str):
    """Load any model file; the method tag selects the returned type."""
    with open(path, encoding="utf8") as fh:
        doc = json.load(fh)
    if doc.get("format") != FORMAT_TAG:
        raise ValueError(f"{path}: not a {FORMAT_TAG} file")
    if doc.get("version") != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported version {doc.get('version')!r}")
    schema = _schema_from_dict(doc["schema"])
    method = doc.get("method")
    blocks = doc["blocks"]
    if method == METHOD_PROPOSED:
        return ModelParams(
            schema=schema,
            K=doc["k"],
            A=np.array(blocks["user_numeric"], dtype=np.float64).reshape(doc["k"], schema.p1),
            B=np.array(blocks["item_numeric"], dtype=np.float64).reshape(doc["k"], schema.p2),
            a=tuple(np.array(arr, dtype=np.float64) for arr in blocks["user_factors"]),
            b=tuple(np.array(arr, dtype=np.float64) for arr in blocks["item_factors"]),
            q=np.array(blocks["stage_factors"], dtype=np.float64).reshape(schema.T, doc["k"]),
        )
    if method == METHOD_STANDARD:
        betas = {}
        for key, beta in blocks["pairs"].items():
            tp, _, t = key.partition(":")
            betas[(int(tp), int(t))] = np.array(beta, dtype=np.float64)
        return StandardModel(schema=schema, betas=betas, lam=float(doc["lambda"]))
    if method == METHOD_ORDINAL:
        stages = {}
        for key, entry in blocks["stages"].items():
            incs = {
                int(t): np.array(inc, dtype=np.float64)
                for t, inc in entry["increments"].items()
            }
            stages[int(key)] = (np.array(entry["base"], dtype=np.float64), incs)
        return OrdinalModel(schema=schema, stages=stages, lam=float(doc["lambda"]))
    raise ValueError(f"{path}: unknown method tag {method!r}")
