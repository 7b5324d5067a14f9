import numpy as np
import pytest

from conftest import random_batch, small_schema
from masknet.data import CATEGORICAL, Field, FeatureSchema
from masknet.errors import CheckpointError, ConfigError
from masknet.maskblock import Ablation
from masknet.model import (
    Model,
    ModelSpec,
    group_count,
    load_checkpoint,
    param_breakdown,
    param_count,
    save_checkpoint,
)
from masknet.numeric import make_rng
from oracles import o_forward_dnn, o_forward_parallel, o_forward_serial


def with_random_head(model, seed=9):
    rng = make_rng(seed, 13)
    model.store.params["head.w"] += rng.normal(size=model.store.params["head.w"].shape)
    model.store.params["head.w0"] += rng.normal(size=1)
    return model


def test_zero_head_predicts_half(rng):
    schema = small_schema()
    for topo in ("serial", "parallel", "dnn", "linear"):
        spec = ModelSpec(topology=topo, block_widths=(3, 3), embed_dim=2, seed=1)
        model = Model(spec, schema)
        cat, num, _ = random_batch(schema, rng, n=4)
        probs, _ = model.forward(cat, num)
        assert np.array_equal(probs, np.full(4, 0.5)), topo


def test_serial_u1_equals_parallel_u1_l0(rng):
    schema = small_schema()
    s = Model(ModelSpec(topology="serial", block_widths=(4,), embed_dim=3, seed=2), schema)
    p = Model(
        ModelSpec(topology="parallel", block_widths=(4,), top_widths=(), embed_dim=3, seed=2),
        schema,
    )
    with_random_head(s)
    with_random_head(p)
    cat, num, _ = random_batch(schema, rng, n=16)
    ps, _ = s.forward(cat, num)
    pp, _ = p.forward(cat, num)
    assert np.array_equal(ps, pp)


def test_serial_forward_matches_oracle(rng):
    schema = small_schema(f_cat=2, f_num=1, vocab=3)
    model = with_random_head(
        Model(ModelSpec(topology="serial", block_widths=(3, 2), embed_dim=2, reduction=1, seed=3), schema)
    )
    cat, num, _ = random_batch(schema, rng, n=6)
    probs, _ = model.forward(cat, num)
    for i in range(6):
        assert abs(probs[i] - o_forward_serial(model, cat[i], num[i])) <= 1e-12


def test_parallel_forward_matches_oracle(rng):
    schema = small_schema(f_cat=2, f_num=1, vocab=3)
    spec = ModelSpec(topology="parallel", block_widths=(3, 2), top_widths=(4,), embed_dim=2, reduction=1, seed=4)
    model = with_random_head(Model(spec, schema))
    cat, num, _ = random_batch(schema, rng, n=6)
    probs, _ = model.forward(cat, num)
    for i in range(6):
        assert abs(probs[i] - o_forward_parallel(model, cat[i], num[i])) <= 1e-12


def test_dnn_forward_matches_oracle(rng):
    schema = small_schema(f_cat=2, f_num=1, vocab=3)
    model = with_random_head(
        Model(ModelSpec(topology="dnn", block_widths=(4, 3), embed_dim=2, seed=5), schema)
    )
    cat, num, _ = random_batch(schema, rng, n=6)
    probs, _ = model.forward(cat, num)
    for i in range(6):
        assert abs(probs[i] - o_forward_dnn(model, cat[i], num[i])) <= 1e-12


def test_parallel_block_permutation_symmetry(rng):
    schema = small_schema()
    spec = ModelSpec(topology="parallel", block_widths=(3, 3), top_widths=(4,), embed_dim=2, seed=6)
    model = with_random_head(Model(spec, schema))
    cat, num, _ = random_batch(schema, rng, n=8)
    base, _ = model.forward(cat, num)
    # swap the two blocks and the matching first-layer column slices
    p = model.store.params
    for name in ("mask.w1", "mask.b1", "mask.w2", "mask.b2", "ffn.w", "ln.g", "ln.b"):
        a, b = p[f"block1.{name}"].copy(), p[f"block2.{name}"].copy()
        p[f"block1.{name}"][...], p[f"block2.{name}"][...] = b, a
    w = p["mlp1.w"]
    w[...] = np.concatenate([w[:, 3:6], w[:, 0:3]], axis=1)
    swapped, _ = model.forward(cat, num)
    assert np.allclose(swapped, base, atol=1e-15)


def test_ablated_masknet_equals_dnn(rng):
    # same seed gives bit-identical weight draws for the shared parameter shapes
    schema = small_schema(f_cat=2, f_num=1, vocab=4)
    ab = Ablation(no_mask=True, no_ln=True)
    mask = Model(
        ModelSpec(topology="serial", block_widths=(4, 3), embed_dim=3, ablation=ab, seed=7), schema
    )
    dnn = Model(ModelSpec(topology="dnn", block_widths=(4, 3), embed_dim=3, seed=7), schema)
    for i in (1, 2):
        assert np.array_equal(
            mask.store.params[f"block{i}.ffn.w"], dnn.store.params[f"mlp{i}.w"]
        )
    with_random_head(mask, seed=21)
    with_random_head(dnn, seed=21)
    cat, num, _ = random_batch(schema, rng, n=100)
    pm, _ = mask.forward(cat, num)
    pd, _ = dnn.forward(cat, num)
    assert np.abs(pm - pd).max() <= 1e-12


def test_param_count_linear_closed_form():
    n = 6
    fields = tuple(Field(f"f{i}", CATEGORICAL, tuple(str(j) for j in range(n))) for i in range(4))
    schema = FeatureSchema(fields)
    model = Model(ModelSpec(topology="linear", block_widths=()), schema)
    assert param_count(model) == 4 * (n + 1) + 1


def wide_schema_39_fields():
    return FeatureSchema(
        tuple(Field(f"f{i}", CATEGORICAL, tuple(str(j) for j in range(5))) for i in range(39))
    )


def test_param_count_mask_unit_609570():
    schema = wide_schema_39_fields()
    spec = ModelSpec(topology="serial", block_widths=(64,), embed_dim=10, reduction=2, seed=0)
    model = Model(spec, schema)
    assert group_count(model, "block1.mask") == 609_570


def test_param_count_dnn_477601():
    schema = wide_schema_39_fields()
    spec = ModelSpec(topology="dnn", block_widths=(400, 400, 400), embed_dim=10, seed=0)
    model = Model(spec, schema)
    mlp_and_head = sum(
        size for group, size in param_breakdown(model).items() if group.startswith(("mlp", "head"))
    )
    assert mlp_and_head == 477_601
    assert param_count(model) == sum(param_breakdown(model).values())


def test_strictly_inside_unit_interval(rng):
    schema = small_schema()
    model = Model(ModelSpec(topology="dnn", block_widths=(3,), embed_dim=2, seed=8), schema)
    model.store.params["head.w"] += 1e6  # force saturated logits
    model.store.params["head.w0"] -= 1e9
    cat, num, _ = random_batch(schema, rng, n=8)
    probs, _ = model.forward(cat, num)
    assert np.all(probs > 0.0) and np.all(probs < 1.0)


def test_equal_encodings_give_equal_predictions(rng):
    schema = small_schema()
    model = with_random_head(
        Model(ModelSpec(topology="serial", block_widths=(3,), embed_dim=2, seed=9), schema)
    )
    cat, num, _ = random_batch(schema, rng, n=1)
    cat2 = np.repeat(cat, 2, axis=0)
    num2 = np.repeat(num, 2, axis=0)
    probs, _ = model.forward(cat2, num2)
    assert probs[0] == probs[1]


def test_checkpoint_round_trip(tmp_path, rng):
    schema = small_schema(f_cat=2, f_num=1, vocab=3)
    spec = ModelSpec(topology="parallel", block_widths=(3, 2), top_widths=(4,), embed_dim=2, seed=10)
    model = with_random_head(Model(spec, schema))
    path = tmp_path / "model.ckpt"
    save_checkpoint(model, str(path))
    loaded = load_checkpoint(str(path))
    assert loaded.spec == model.spec
    assert loaded.schema == model.schema
    for name in model.store.names():
        assert np.array_equal(loaded.store.params[name], model.store.params[name]), name
    cat, num, _ = random_batch(schema, rng, n=5)
    a, _ = model.forward(cat, num)
    b, _ = loaded.forward(cat, num)
    assert np.array_equal(a, b)


def test_checkpoint_round_trip_ablated_spec(tmp_path, rng):
    schema = small_schema()
    spec = ModelSpec(
        topology="serial", block_widths=(3, 3), embed_dim=2,
        ablation=Ablation(no_ffn=True), mask_bias_init=1.0, seed=11,
    )
    model = with_random_head(Model(spec, schema))
    path = tmp_path / "ablated.ckpt"
    save_checkpoint(model, str(path))
    loaded = load_checkpoint(str(path))
    assert loaded.spec.ablation == spec.ablation
    cat, num, _ = random_batch(schema, rng, n=3)
    a, _ = model.forward(cat, num)
    b, _ = loaded.forward(cat, num)
    assert np.array_equal(a, b)


def test_checkpoint_rejects_garbage(tmp_path):
    path = tmp_path / "bad.ckpt"
    path.write_bytes(b"\x00\x01 not a checkpoint\n")
    with pytest.raises(CheckpointError):
        load_checkpoint(str(path))


def test_checkpoint_rejects_truncated(tmp_path):
    schema = small_schema()
    model = Model(ModelSpec(topology="linear", block_widths=()), schema)
    path = tmp_path / "trunc.ckpt"
    save_checkpoint(model, str(path))
    data = path.read_bytes()
    path.write_bytes(data[:-8])
    with pytest.raises(CheckpointError, match="truncated"):
        load_checkpoint(str(path))


def test_mask_values_requires_mask_units():
    schema = small_schema()
    dnn = Model(ModelSpec(topology="dnn", block_widths=(3,), embed_dim=2), schema)
    with pytest.raises(ConfigError):
        dnn.mask_values(np.zeros((1, 2), dtype=np.int64), np.zeros((1, 1)))


def test_bad_spec_rejected():
    with pytest.raises(ConfigError):
        ModelSpec(topology="tree")
    with pytest.raises(ConfigError):
        ModelSpec(topology="serial", block_widths=())
    with pytest.raises(ConfigError):
        ModelSpec(topology="serial", reduction=0)
