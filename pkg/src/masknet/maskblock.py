"""MaskBlock: instance-guided mask + feed-forward layer + layer norm.

Two variants share one core and differ only in what gets masked: the first
kind masks the (per-field normalized) instance embedding, the second masks
the previous block's output.  The mask unit itself always reads the raw
instance embedding.  Ablation switches remove one component at a time so a
stack of blocks can be collapsed back to a plain MLP for equivalence checks.
"""

from __future__ import annotations

from dataclasses import dataclass, fields as dc_fields

import numpy as np

from .layers import (
    apply_mask,
    apply_mask_bwd,
    instance_mask_bwd,
    instance_mask_fwd,
    ln_hid_bwd,
    ln_hid_fwd,
)
from .numeric import affine_bwd, affine_fwd, relu_bwd, relu_fwd


@dataclass(frozen=True)
class Ablation:
    no_mask: bool = False  # skip the elementwise product
    no_ln: bool = False  # every LN site (embedding and hidden) becomes identity
    no_ffn: bool = False  # block output is the masked vector itself

    @classmethod
    def from_names(cls, names) -> "Ablation":
        valid = {f.name for f in dc_fields(cls)}
        names = list(names)
        for n in names:
            if n not in valid:
                raise ValueError(f"unknown ablation {n!r}; expected one of {sorted(valid)}")
        return cls(**{n: True for n in names})

    def names(self) -> list[str]:
        return [f.name for f in dc_fields(self) if getattr(self, f.name)]


@dataclass
class BlockParams:
    """Arrays for one block; mask/ffn/ln entries are None when ablated away."""

    w1: np.ndarray | None = None  # aggregation (t, m)
    b1: np.ndarray | None = None  # (t,)
    w2: np.ndarray | None = None  # projection (z, t)
    b2: np.ndarray | None = None  # (z,)
    w: np.ndarray | None = None  # feed-forward (q, z)
    g: np.ndarray | None = None  # output LN gain (q,)
    b: np.ndarray | None = None  # output LN bias (q,)


def block_output_width(target_width: int, q: int, ab: Ablation) -> int:
    return target_width if ab.no_ffn else q


def maskblock_fwd(
    v_emb: np.ndarray,
    target: np.ndarray,
    p: BlockParams,
    ab: Ablation,
    eps: float,
) -> tuple[np.ndarray, dict]:
    """Core block: mask(v_emb) * target, then ReLU(LN(W @ .)).

    `target` is the normalized embedding for an embedding block or the raw
    previous-block output for a stacked block (no re-normalization of it).
    """
    cache: dict = {"target": target}
    if ab.no_mask:
        masked = target
    else:
        mask, mcache = instance_mask_fwd(v_emb, p.w1, p.b1, p.w2, p.b2)
        masked = apply_mask(mask, target)
        cache["mask"] = mask
        cache["mcache"] = mcache
    cache["masked"] = masked
    if ab.no_ffn:
        return masked, cache
    if ab.no_ln:
        z = affine_fwd(masked, p.w)
        cache["z"] = z
        return relu_fwd(z), cache
    out, hcache = ln_hid_fwd(masked, p.w, p.g, p.b, eps)
    cache["hcache"] = hcache
    return out, cache


def maskblock_bwd(
    dout: np.ndarray, cache: dict, p: BlockParams, ab: Ablation
) -> tuple[np.ndarray | None, np.ndarray, dict[str, np.ndarray]]:
    """Returns (d_v_emb through the mask path or None, d_target, param grads)."""
    grads: dict[str, np.ndarray] = {}
    if ab.no_ffn:
        dmasked = dout
    elif ab.no_ln:
        dz = relu_bwd(dout, cache["z"])
        dmasked, dw, _ = affine_bwd(dz, cache["masked"], p.w, with_bias=False)
        grads["w"] = dw
    else:
        dmasked, dw, dg, db = ln_hid_bwd(dout, cache["hcache"], p.w, p.g)
        grads["w"] = dw
        grads["g"] = dg
        grads["b"] = db
    if ab.no_mask:
        return None, dmasked, grads
    dmask, dtarget = apply_mask_bwd(dmasked, cache["mask"], cache["target"])
    dv, dw1, db1, dw2, db2 = instance_mask_bwd(dmask, cache["mcache"], p.w1, p.w2)
    grads["w1"] = dw1
    grads["b1"] = db1
    grads["w2"] = dw2
    grads["b2"] = db2
    return dv, dtarget, grads


def block_on_embedding_fwd(
    v_emb: np.ndarray, ln_e: np.ndarray | None, p: BlockParams, ab: Ablation, eps: float
) -> tuple[np.ndarray, dict]:
    """Block whose masked target is the per-field-normalized embedding
    (or the raw embedding when LN is ablated)."""
    target = v_emb if ab.no_ln else ln_e
    return maskblock_fwd(v_emb, target, p, ab, eps)


def block_on_block_fwd(
    v_emb: np.ndarray, v_prev: np.ndarray, p: BlockParams, ab: Ablation, eps: float
) -> tuple[np.ndarray, dict]:
    """Block whose masked target is the previous block's output."""
    return maskblock_fwd(v_emb, v_prev, p, ab, eps)


def block_relu_pre(cache: dict, ab: Ablation) -> list[np.ndarray]:
    """Pre-ReLU arrays inside one block, for kink detection in gradcheck."""
    pre = []
    if not ab.no_mask:
        pre.append(cache["mcache"][1])  # aggregation-layer pre-activation
    if not ab.no_ffn:
        pre.append(cache["z"] if ab.no_ln else cache["hcache"][2])
    return pre
