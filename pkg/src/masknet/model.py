"""Model topologies and the prediction head.

Four topologies share one store/forward/backward interface:

- serial:   MaskBlock on the embedding, then MaskBlocks stacked on each other;
            every block's mask reads the same instance embedding
- parallel: a bank of MaskBlocks on the shared embedding, concatenated and fed
            to a plain ReLU MLP
- dnn:      embedding -> ReLU MLP baseline (no masks, no LN)
- linear:   per-feature logistic regression baseline (no embeddings)

The head is a single affine + sigmoid.  Head weights start at zero so the
initial prediction is exactly 0.5 and the initial log loss is ln 2, a handy
training anchor.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .data import CATEGORICAL, Dataset, FeatureSchema, Field
from .embedding import embed_bwd, embed_fwd, init_embedding
from .errors import CheckpointError, ConfigError
from .layers import DEFAULT_LN_EPS, ln_emb_bwd, ln_emb_fwd
from .maskblock import (
    Ablation,
    BlockParams,
    block_on_block_fwd,
    block_on_embedding_fwd,
    block_output_width,
    block_relu_pre,
    maskblock_bwd,
)
from .numeric import ParamStore, affine_bwd, affine_fwd, make_rng, relu_bwd, relu_fwd, sigmoid

INIT_STREAM = 0

TOPOLOGIES = ("serial", "parallel", "dnn", "linear")

# maskblock grad keys -> parameter name suffixes
_BLOCK_GRAD_KEYS = {
    "w1": "mask.w1",
    "b1": "mask.b1",
    "w2": "mask.w2",
    "b2": "mask.b2",
    "w": "ffn.w",
    "g": "ln.g",
    "b": "ln.b",
}


@dataclass(frozen=True)
class ModelSpec:
    """Full topology description; widths are per block, u = len(block_widths)."""

    topology: str = "serial"
    block_widths: tuple[int, ...] = (64, 64, 64)
    top_widths: tuple[int, ...] = (64, 64)  # parallel-only MLP on the merged blocks
    embed_dim: int = 10  # k
    reduction: int = 2  # r = t/z of the mask unit
    ablation: Ablation = field(default_factory=Ablation)
    mask_bias_init: float = 0.0  # initial projection bias; 1.0 gives near-identity masks
    dnn_bias: bool = True  # False makes dnn an exact twin of serial {no_mask, no_ln}
    ln_eps: float = DEFAULT_LN_EPS
    seed: int = 0

    def __post_init__(self) -> None:
        if self.topology not in TOPOLOGIES:
            raise ConfigError(f"unknown topology {self.topology!r}; expected one of {TOPOLOGIES}")
        if self.topology != "linear":
            if self.embed_dim < 1:
                raise ConfigError("embed_dim must be >= 1")
            if not self.block_widths or any(w < 1 for w in self.block_widths):
                raise ConfigError(f"bad block widths {self.block_widths}")
        if self.reduction < 1 or int(self.reduction) != self.reduction:
            raise ConfigError(f"reduction ratio must be a positive integer, got {self.reduction}")

    @property
    def u(self) -> int:
        return len(self.block_widths)


class Model:
    """Parameters plus hand-derived forward/backward for one topology.

    Construction draws every initial value from a single seeded generator in
    a fixed order, so identical (spec, schema) pairs are bit-identical.
    Inference is read-only; training mutates the store exclusively through
    `backward` + the optimizer.
    """

    def __init__(self, spec: ModelSpec, schema: FeatureSchema):
        self.spec = spec
        self.schema = schema
        self.store = ParamStore()
        self._blocks: list[BlockParams] = []
        self._build(make_rng(spec.seed, INIT_STREAM))

    # ----- construction ----------------------------------------------------

    def _build(self, rng: np.random.Generator) -> None:
        spec, schema, store = self.spec, self.schema, self.store
        ab = spec.ablation
        k = spec.embed_dim

        if spec.topology == "linear":
            for fld in schema.fields:
                width = fld.vocab_size + 1 if fld.kind == CATEGORICAL else 1
                store.add(f"lin.{fld.name}", np.zeros(width))
            store.add("lin.w0", np.zeros(1))
            return

        init_embedding(store, schema, k, rng)
        m = schema.f * k

        if spec.topology == "dnn":
            width = m
            for l, q in enumerate(spec.block_widths, start=1):
                store.add(f"mlp{l}.w", rng.normal(0.0, 1.0 / np.sqrt(width), size=(q, width)))
                if spec.dnn_bias:
                    store.add(f"mlp{l}.b", np.zeros(q))
                width = q
            self._add_head(width)
            return

        if not ab.no_ln:
            store.add("ln_emb.g", np.ones((schema.f, k)))
            store.add("ln_emb.b", np.zeros((schema.f, k)))

        width = m
        out_widths = []
        for i, q in enumerate(spec.block_widths, start=1):
            z = m if spec.topology == "parallel" or i == 1 else width
            bp = BlockParams()
            if not ab.no_mask:
                t = spec.reduction * z
                bp.w1 = store.add(f"block{i}.mask.w1", rng.normal(0.0, 1.0 / np.sqrt(m), size=(t, m)))
                bp.b1 = store.add(f"block{i}.mask.b1", np.zeros(t))
                bp.w2 = store.add(f"block{i}.mask.w2", rng.normal(0.0, 1.0 / np.sqrt(t), size=(z, t)))
                bp.b2 = store.add(f"block{i}.mask.b2", np.full(z, spec.mask_bias_init))
            if not ab.no_ffn:
                bp.w = store.add(f"block{i}.ffn.w", rng.normal(0.0, 1.0 / np.sqrt(z), size=(q, z)))
                if not ab.no_ln:
                    bp.g = store.add(f"block{i}.ln.g", np.ones(q))
                    bp.b = store.add(f"block{i}.ln.b", np.zeros(q))
            self._blocks.append(bp)
            width = block_output_width(z, q, ab)
            out_widths.append(width)

        if spec.topology == "parallel":
            width = sum(out_widths)
            for l, q in enumerate(spec.top_widths, start=1):
                store.add(f"mlp{l}.w", rng.normal(0.0, 1.0 / np.sqrt(width), size=(q, width)))
                store.add(f"mlp{l}.b", np.zeros(q))
                width = q
        self._add_head(width)

    def _add_head(self, width: int) -> None:
        self.store.add("head.w", np.zeros(width))
        self.store.add("head.w0", np.zeros(1))

    def block_params(self, i: int) -> BlockParams:
        """1-based accessor, mirroring block parameter names."""
        return self._blocks[i - 1]

    # ----- forward ---------------------------------------------------------

    def forward(self, cat: np.ndarray, num: np.ndarray) -> tuple[np.ndarray, dict]:
        """Predicted click probabilities for a batch: returns (probs (B,), cache).

        The cache carries every intermediate needed by `backward` plus the
        pre-ReLU arrays used for kink detection in gradient checking.
        """
        p = self.store.params
        spec = self.spec
        ab = spec.ablation
        cache: dict = {"cat": cat, "num": num, "relu_pre": []}

        if spec.topology == "linear":
            logit = np.full(cat.shape[0] if cat.size else num.shape[0], p["lin.w0"][0])
            for a, fld in enumerate(self.schema.categorical):
                logit = logit + p[f"lin.{fld.name}"][cat[:, a]]
            for j, fld in enumerate(self.schema.numerical):
                logit = logit + p[f"lin.{fld.name}"][0] * num[:, j]
        else:
            v_emb = embed_fwd(p, self.schema, cat, num, spec.embed_dim)
            cache["v_emb"] = v_emb
            if spec.topology == "dnn":
                h = self._mlp_fwd(v_emb, len(spec.block_widths), cache)
            else:
                if ab.no_ln:
                    ln_e = None
                else:
                    ln_e, ln_cache = ln_emb_fwd(
                        v_emb, p["ln_emb.g"], p["ln_emb.b"], spec.embed_dim, spec.ln_eps
                    )
                    cache["ln_cache"] = ln_cache
                bcaches = []
                if spec.topology == "serial":
                    h = None
                    for i in range(1, spec.u + 1):
                        bp = self._blocks[i - 1]
                        if i == 1:
                            h, bc = block_on_embedding_fwd(v_emb, ln_e, bp, ab, spec.ln_eps)
                        else:
                            h, bc = block_on_block_fwd(v_emb, h, bp, ab, spec.ln_eps)
                        cache["relu_pre"] += block_relu_pre(bc, ab)
                        bcaches.append(bc)
                else:  # parallel
                    outs = []
                    for i in range(1, spec.u + 1):
                        out, bc = block_on_embedding_fwd(v_emb, ln_e, self._blocks[i - 1], ab, spec.ln_eps)
                        cache["relu_pre"] += block_relu_pre(bc, ab)
                        bcaches.append(bc)
                        outs.append(out)
                    cache["merge_widths"] = [o.shape[1] for o in outs]
                    merged = np.concatenate(outs, axis=1)
                    h = self._mlp_fwd(merged, len(spec.top_widths), cache)
                cache["blocks"] = bcaches
            cache["head_in"] = h
            logit = h @ p["head.w"] + p["head.w0"][0]

        probs = sigmoid(logit)
        cache["probs"] = probs
        return probs, cache

    def _mlp_fwd(self, x: np.ndarray, depth: int, cache: dict) -> np.ndarray:
        p = self.store.params
        steps = []
        h = x
        for l in range(1, depth + 1):
            z = affine_fwd(h, p[f"mlp{l}.w"], p.get(f"mlp{l}.b"))
            steps.append((h, z))
            cache["relu_pre"].append(z)
            h = relu_fwd(z)
        cache["mlp"] = steps
        return h

    # ----- backward --------------------------------------------------------

    def backward(self, cache: dict, dlogit: np.ndarray) -> None:
        """Accumulate dL/dtheta into store.grads given dL/dlogit per instance."""
        p, g = self.store.params, self.store.grads
        spec = self.spec
        ab = spec.ablation
        cat, num = cache["cat"], cache["num"]

        if spec.topology == "linear":
            g["lin.w0"] += dlogit.sum()
            for a, fld in enumerate(self.schema.categorical):
                np.add.at(g[f"lin.{fld.name}"], cat[:, a], dlogit)
            for j, fld in enumerate(self.schema.numerical):
                g[f"lin.{fld.name}"] += (dlogit * num[:, j]).sum()
            return

        h = cache["head_in"]
        g["head.w"] += h.T @ dlogit
        g["head.w0"] += dlogit.sum()
        dh = dlogit[:, None] * p["head.w"][None, :]

        if spec.topology == "dnn":
            dv_emb = self._mlp_bwd(dh, cache)
        elif spec.topology == "serial":
            dv_emb = np.zeros_like(cache["v_emb"])
            dprev = dh
            for i in range(spec.u, 0, -1):
                dv, dprev, grads = maskblock_bwd(dprev, cache["blocks"][i - 1], self._blocks[i - 1], ab)
                self._accumulate_block(i, grads)
                if dv is not None:
                    dv_emb += dv
            dv_emb += self._ln_emb_bwd(dprev, cache)
        else:  # parallel
            dmerged = self._mlp_bwd(dh, cache)
            dv_emb = np.zeros_like(cache["v_emb"])
            dln_e = np.zeros_like(cache["v_emb"])
            off = 0
            for i, w in enumerate(cache["merge_widths"], start=1):
                dout = dmerged[:, off : off + w]
                off += w
                dv, dtarget, grads = maskblock_bwd(dout, cache["blocks"][i - 1], self._blocks[i - 1], ab)
                self._accumulate_block(i, grads)
                if dv is not None:
                    dv_emb += dv
                dln_e += dtarget
            dv_emb += self._ln_emb_bwd(dln_e, cache)

        embed_bwd(dv_emb, g, self.schema, cat, num, spec.embed_dim)

    def _ln_emb_bwd(self, dtarget: np.ndarray, cache: dict) -> np.ndarray:
        """Route the gradient on the blocks' embedding target back to v_emb."""
        if self.spec.ablation.no_ln:
            return dtarget
        g = self.store.grads
        dx, dg, db = ln_emb_bwd(dtarget, cache["ln_cache"], self.store.params["ln_emb.g"])
        g["ln_emb.g"] += dg
        g["ln_emb.b"] += db
        return dx

    def _accumulate_block(self, i: int, grads: dict[str, np.ndarray]) -> None:
        for key, val in grads.items():
            self.store.grads[f"block{i}.{_BLOCK_GRAD_KEYS[key]}"] += val

    def _mlp_bwd(self, dh: np.ndarray, cache: dict) -> np.ndarray:
        g = self.store.grads
        for l in range(len(cache["mlp"]), 0, -1):
            x, z = cache["mlp"][l - 1]
            dz = relu_bwd(dh, z)
            has_bias = f"mlp{l}.b" in g
            dh, dw, db = affine_bwd(dz, x, self.store.params[f"mlp{l}.w"], with_bias=has_bias)
            g[f"mlp{l}.w"] += dw
            if has_bias:
                g[f"mlp{l}.b"] += db
        return dh

    # ----- convenience -----------------------------------------------------

    def predict(self, ds: Dataset, batch_size: int = 4096) -> np.ndarray:
        """Probabilities over a dataset; forward-only, caches discarded."""
        out = np.empty(ds.n)
        for lo in range(0, ds.n, batch_size):
            hi = min(lo + batch_size, ds.n)
            out[lo:hi], _ = self.forward(ds.cat[lo:hi], ds.num[lo:hi])
        return out

    def mask_values(self, cat: np.ndarray, num: np.ndarray) -> list[np.ndarray]:
        """Per-block mask vectors for a batch (serial/parallel models only)."""
        if self.spec.topology not in ("serial", "parallel") or self.spec.ablation.no_mask:
            raise ConfigError(f"model {self.spec.topology!r} (ablation={self.spec.ablation.names()}) has no mask units")
        _, cache = self.forward(cat, num)
        return [bc["mask"] for bc in cache["blocks"]]


def relu_pattern(cache: dict) -> np.ndarray | None:
    """Concatenated activation signs of every ReLU site, for kink detection."""
    pre = cache["relu_pre"]
    if not pre:
        return None
    return np.concatenate([(a > 0.0).ravel() for a in pre])


# ---------------------------------------------------------------------------
# Parameter accounting
# ---------------------------------------------------------------------------


def param_count(model: Model) -> int:
    """Exact trainable-parameter count (equals enumeration over the store)."""
    return model.store.size()


def param_breakdown(model: Model) -> dict[str, int]:
    """Counts grouped by the first dotted name component (emb, block1, mlp2, ...)."""
    out: dict[str, int] = {}
    for name, arr in model.store.params.items():
        group = name.split(".", 1)[0]
        out[group] = out.get(group, 0) + arr.size
    return out


def group_count(model: Model, prefix: str) -> int:
    """Total size of parameters whose dotted name starts with `prefix`."""
    return sum(
        arr.size
        for name, arr in model.store.params.items()
        if name == prefix or name.startswith(prefix + ".")
    )


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

CHECKPOINT_FORMAT = "masknet-checkpoint"
CHECKPOINT_VERSION = 1


def save_checkpoint(model: Model, path: str) -> None:
    """One file: a JSON header line (spec, schema, array manifest) followed by
    the raw little-endian float64 array bytes in manifest order."""
    spec_dict = asdict(model.spec)
    header = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "spec": spec_dict,
        "schema": [
            {"name": f.name, "kind": f.kind, "vocab": list(f.vocab)} for f in model.schema.fields
        ],
        "arrays": [
            {"name": n, "shape": list(model.store.params[n].shape)} for n in model.store.names()
        ],
    }
    with open(path, "wb") as fh:
        fh.write((json.dumps(header) + "\n").encode("utf-8"))
        for n in model.store.names():
            fh.write(np.ascontiguousarray(model.store.params[n], dtype="<f8").tobytes())


def load_checkpoint(path: str) -> Model:
    with open(path, "rb") as fh:
        header_line = fh.readline()
        blob = fh.read()
    try:
        header = json.loads(header_line.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: malformed checkpoint header: {exc}") from None
    if header.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"{path}: not a {CHECKPOINT_FORMAT} file")
    if header.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {header.get('version')}")

    schema = FeatureSchema(
        tuple(Field(f["name"], f["kind"], tuple(f["vocab"])) for f in header["schema"])
    )
    sd = dict(header["spec"])
    sd["ablation"] = Ablation(**sd["ablation"])
    sd["block_widths"] = tuple(sd["block_widths"])
    sd["top_widths"] = tuple(sd["top_widths"])
    model = Model(ModelSpec(**sd), schema)

    manifest = header["arrays"]
    names = model.store.names()
    if [a["name"] for a in manifest] != names:
        raise CheckpointError(f"{path}: array manifest does not match the rebuilt model")
    offset = 0
    for entry in manifest:
        arr = model.store.params[entry["name"]]
        if list(arr.shape) != entry["shape"]:
            raise CheckpointError(
                f"{path}: shape mismatch for {entry['name']}: {entry['shape']} vs {list(arr.shape)}"
            )
        nbytes = arr.size * 8
        if offset + nbytes > len(blob):
            raise CheckpointError(f"{path}: truncated checkpoint payload")
        arr[...] = np.frombuffer(blob, dtype="<f8", count=arr.size, offset=offset).reshape(arr.shape)
        offset += nbytes
    if offset != len(blob):
        raise CheckpointError(f"{path}: trailing bytes in checkpoint payload")
    return model
