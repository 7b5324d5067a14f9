"""Per-field embedding tables and the concatenated instance embedding.

Categorical tables are stored rows-per-category, shape (vocab+1, k), which is
the transpose layout of the k x n one-hot matmul; row vocab_size is the OOV
slot.  Numerical fields own a single k-vector scaled by the raw value.  Every
field contributes exactly k dimensions, in schema order, so the instance
embedding has width m = f*k.
"""

from __future__ import annotations

import numpy as np

from .data import CATEGORICAL, FeatureSchema
from .errors import SchemaError
from .numeric import ParamStore


def embedding_param_names(schema: FeatureSchema) -> list[str]:
    return [f"emb.{f.name}" for f in schema.fields]


def init_embedding(store: ParamStore, schema: FeatureSchema, k: int, rng: np.random.Generator) -> None:
    """i.i.d. normal with std 1/sqrt(k); one table or vector per field."""
    std = 1.0 / np.sqrt(k)
    for fld in schema.fields:
        if fld.kind == CATEGORICAL:
            store.add(f"emb.{fld.name}", rng.normal(0.0, std, size=(fld.vocab_size + 1, k)))
        else:
            store.add(f"emb.{fld.name}", rng.normal(0.0, std, size=(k,)))


def embed_fwd(
    params: dict[str, np.ndarray], schema: FeatureSchema, cat: np.ndarray, num: np.ndarray, k: int
) -> np.ndarray:
    """Concatenate per-field embeddings: lookup for categorical (equivalent to
    the one-hot matmul), value-scaled vector for numerical.  Returns (B, f*k)."""
    n_rows = cat.shape[0] if cat.size or not num.size else num.shape[0]
    out = np.empty((n_rows, schema.f * k), dtype=np.float64)
    ci = ni = 0
    for pos, fld in enumerate(schema.fields):
        dst = out[:, pos * k : (pos + 1) * k]
        table = params[f"emb.{fld.name}"]
        if fld.kind == CATEGORICAL:
            idx = cat[:, ci]
            if idx.size and (idx.min() < 0 or idx.max() >= table.shape[0]):
                raise SchemaError(
                    f"field {fld.name!r}: index outside [0, {table.shape[0]}) in batch"
                )
            dst[...] = table[idx]
            ci += 1
        else:
            dst[...] = num[:, ni, None] * table
            ni += 1
    return out


def embed_bwd(
    dv: np.ndarray,
    grads: dict[str, np.ndarray],
    schema: FeatureSchema,
    cat: np.ndarray,
    num: np.ndarray,
    k: int,
) -> None:
    """Accumulate gradients only into touched rows (scatter-add per field)."""
    ci = ni = 0
    for pos, fld in enumerate(schema.fields):
        dslice = dv[:, pos * k : (pos + 1) * k]
        g = grads[f"emb.{fld.name}"]
        if fld.kind == CATEGORICAL:
            np.add.at(g, cat[:, ci], dslice)
            ci += 1
        else:
            g += (num[:, ni, None] * dslice).sum(axis=0)
            ni += 1
