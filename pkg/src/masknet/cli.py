"""Command-line interface: data generation, training, gradient checking,
mask inspection, ablation grids, and hyper-parameter sweeps.

Run configuration is a flat key=value file with [data], [model], [train] and
[run] sections; every key has a default and unknown keys are errors.  Command
line flags override the file.  Exit codes: 0 success, 2 usage/config error,
3 undefined metric, 1 any other runtime failure.
"""

from __future__ import annotations

import argparse
import configparser
import sys
import time
from dataclasses import dataclass, replace
from pathlib import Path

from .data import (
    Dataset,
    SyntheticSpec,
    build_manifest,
    dataset_to_csv,
    gen_synthetic,
    ingest_csv,
    manifest_text,
    parse_column_spec,
    schema_spec_text,
    split_dataset,
    standardize_numerical,
)
from .errors import CheckpointError, ConfigError, MaskNetError, MetricError
from .evaluate import inspect_masks
from .experiments import run_ablation_grid, run_experiment
from .gradchecks import run_suite
from .layers import DEFAULT_LN_EPS
from .maskblock import Ablation
from .model import ModelSpec, load_checkpoint, param_count, save_checkpoint
from .train import TrainConfig


@dataclass
class DataConfig:
    source: str = "synthetic"  # synthetic | csv
    path: str = ""
    schema: str = ""
    delimiter: str = "comma"  # comma | tab
    standardize: bool = False
    fields: int = 8
    vocab: int = 50
    latent_dim: int = 4
    instances: int = 60_000
    logit_scale: float = 4.0
    seed: int = -1  # -1: inherit the run seed


@dataclass
class RunConfig:
    data: DataConfig
    model: ModelSpec
    train: TrainConfig
    seed: int = 1
    out_dir: str = "runs/out"


_KNOWN_KEYS = {
    "data": {
        "source", "path", "schema", "delimiter", "standardize",
        "fields", "vocab", "latent_dim", "instances", "logit_scale", "seed",
    },
    "model": {
        "topology", "blocks", "width", "top_widths", "embed_dim",
        "reduction", "ablate", "mask_bias_init", "ln_eps",
    },
    "train": {
        "batch_size", "learning_rate", "beta1", "beta2", "adam_eps",
        "l2", "epochs", "patience",
    },
    "run": {"seed", "out_dir"},
}


def _parse_bool(v: str) -> bool:
    if v.lower() in ("true", "1", "yes"):
        return True
    if v.lower() in ("false", "0", "no"):
        return False
    raise ConfigError(f"expected a boolean, got {v!r}")


def _parse_widths(v: str) -> tuple[int, ...]:
    v = v.strip()
    if not v:
        return ()
    try:
        return tuple(int(p) for p in v.split(","))
    except ValueError:
        raise ConfigError(f"expected comma-separated integers, got {v!r}") from None


def parse_config_file(path: str) -> dict[str, dict[str, str]]:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {path}")
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(p.read_text())
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    raw: dict[str, dict[str, str]] = {}
    for section in cp.sections():
        if section not in _KNOWN_KEYS:
            raise ConfigError(f"{path}: unknown config section [{section}]")
        for key, value in cp[section].items():
            if key not in _KNOWN_KEYS[section]:
                raise ConfigError(f"{path}: unknown key {key!r} in [{section}]")
            raw.setdefault(section, {})[key] = value
    return raw


def build_run_config(raw: dict[str, dict[str, str]]) -> RunConfig:
    d = raw.get("data", {})
    m = raw.get("model", {})
    t = raw.get("train", {})
    r = raw.get("run", {})
    try:
        data = DataConfig(
            source=d.get("source", "synthetic"),
            path=d.get("path", ""),
            schema=d.get("schema", ""),
            delimiter=d.get("delimiter", "comma"),
            standardize=_parse_bool(d.get("standardize", "false")),
            fields=int(d.get("fields", 8)),
            vocab=int(d.get("vocab", 50)),
            latent_dim=int(d.get("latent_dim", 4)),
            instances=int(d.get("instances", 60000)),
            logit_scale=float(d.get("logit_scale", 4.0)),
            seed=int(d.get("seed", -1)),
        )
        seed = int(r.get("seed", 1))
        blocks = int(m.get("blocks", 3))
        width = int(m.get("width", 64))
        model = ModelSpec(
            topology=m.get("topology", "serial"),
            block_widths=(width,) * blocks,
            top_widths=_parse_widths(m.get("top_widths", "64,64")),
            embed_dim=int(m.get("embed_dim", 10)),
            reduction=int(m.get("reduction", 2)),
            ablation=Ablation.from_names(
                n.strip() for n in m.get("ablate", "").split(",") if n.strip()
            ),
            mask_bias_init=float(m.get("mask_bias_init", 0.0)),
            ln_eps=float(m.get("ln_eps", DEFAULT_LN_EPS)),
            seed=seed,
        )
        train = TrainConfig(
            batch_size=int(t.get("batch_size", 1024)),
            learning_rate=float(t.get("learning_rate", 1e-4)),
            beta1=float(t.get("beta1", 0.9)),
            beta2=float(t.get("beta2", 0.999)),
            adam_eps=float(t.get("adam_eps", 1e-8)),
            l2=float(t.get("l2", 0.0)),
            epochs=int(t.get("epochs", 20)),
            patience=int(t.get("patience", 5)),
            seed=seed,
        )
    except ValueError as exc:
        raise ConfigError(f"bad config value: {exc}") from None
    return RunConfig(data=data, model=model, train=train, seed=seed, out_dir=r.get("out_dir", "runs/out"))


def _apply_overrides(raw: dict[str, dict[str, str]], args: argparse.Namespace) -> None:
    pairs = [
        ("model", "topology", "topology"),
        ("model", "blocks", "blocks"),
        ("model", "width", "width"),
        ("model", "embed_dim", "embedding_dim"),
        ("model", "reduction", "reduction_ratio"),
        ("model", "ablate", "ablate"),
        ("train", "epochs", "epochs"),
        ("train", "batch_size", "batch_size"),
        ("train", "learning_rate", "learning_rate"),
        ("train", "l2", "l2"),
        ("run", "seed", "seed"),
        ("run", "out_dir", "out"),
    ]
    for section, key, attr in pairs:
        val = getattr(args, attr, None)
        if val is not None:
            raw.setdefault(section, {})[key] = str(val)


def load_splits(cfg: RunConfig) -> tuple[tuple[Dataset, Dataset, Dataset], SyntheticSpec | None, Dataset | None]:
    """Materialize (train, valid, test) from the configured source."""
    data_seed = cfg.data.seed if cfg.data.seed >= 0 else cfg.seed
    if cfg.data.source == "synthetic":
        spec = SyntheticSpec(
            fields=cfg.data.fields,
            vocab=cfg.data.vocab,
            latent_dim=cfg.data.latent_dim,
            instances=cfg.data.instances,
            logit_scale=cfg.data.logit_scale,
            seed=data_seed,
        )
        full = gen_synthetic(spec)
        splits = split_dataset(full, cfg.seed)
        return splits, spec, full
    if cfg.data.source == "csv":
        if not cfg.data.path or not cfg.data.schema:
            raise ConfigError("csv source needs both [data] path and [data] schema")
        data_path, schema_path = Path(cfg.data.path), Path(cfg.data.schema)
        if not data_path.is_file():
            raise ConfigError(f"data file not found: {data_path}")
        if not schema_path.is_file():
            raise ConfigError(f"schema file not found: {schema_path}")
        delim = {"comma": ",", "tab": "\t"}.get(cfg.data.delimiter)
        if delim is None:
            raise ConfigError(f"unknown delimiter {cfg.data.delimiter!r} (use comma or tab)")
        cols = parse_column_spec(schema_path.read_text())
        _, train_ds, valid_ds, test_ds = ingest_csv(data_path.read_text(), cols, cfg.seed, delim)
        if cfg.data.standardize:
            train_ds, valid_ds, test_ds = standardize_numerical(train_ds, valid_ds, test_ds)
        return (train_ds, valid_ds, test_ds), None, None
    raise ConfigError(f"unknown data source {cfg.data.source!r} (use synthetic or csv)")


def _out_dir(path: str) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_gen_synth(args: argparse.Namespace) -> int:
    if args.fields < 2 or args.instances < 10 or args.vocab < 1 or args.latent_dim < 1:
        raise ConfigError("gen-synth needs fields >= 2, vocab >= 1, latent-dim >= 1, instances >= 10")
    spec = SyntheticSpec(
        fields=args.fields,
        vocab=args.vocab,
        latent_dim=args.latent_dim,
        instances=args.instances,
        logit_scale=args.scale,
        seed=args.seed,
    )
    full = gen_synthetic(spec)
    splits = split_dataset(full, args.seed)
    out = _out_dir(args.out)
    (out / "data.csv").write_text(dataset_to_csv(full))
    (out / "schema.txt").write_text(schema_spec_text(full.schema, with_logit=True))
    man = build_manifest(full, spec=spec, splits=splits, split_seed=args.seed)
    (out / "manifest.txt").write_text(manifest_text(man))
    print(f"wrote {full.n} instances to {out}/data.csv (positive rate {full.positive_rate:.4f})")
    print(f"manifest: bayes_auc_test={man.get('bayes_auc_test')} marginal_auc_test={man.get('marginal_auc_test')}")
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    raw = parse_config_file(args.config)
    _apply_overrides(raw, args)
    cfg = build_run_config(raw)
    splits, _, _ = load_splits(cfg)
    label = f"{cfg.model.topology}" + (f"[{','.join(cfg.model.ablation.names())}]" if cfg.model.ablation.names() else "")
    t0 = time.time()
    model, result = run_experiment(cfg.model, splits, cfg.train, label=label)
    seconds = time.time() - t0

    out = _out_dir(cfg.out_dir)
    save_checkpoint(model, str(out / "checkpoint.ckpt"))
    (out / "history.csv").write_text(result.history.to_csv())
    lines = [
        f"label={label}",
        f"topology={cfg.model.topology}",
        f"blocks={cfg.model.u}",
        f"params={param_count(model)}",
        f"seed={cfg.seed}",
        f"train_seconds={seconds:.1f}",
        f"best_epoch={result.history.best_epoch}",
    ]
    lines += ["valid." + ln for ln in result.valid.lines()]
    test = result.test
    if args.baseline_auc is not None:
        from .evaluate import relaimp

        test = replace(test)
        test.baseline_name = args.baseline_name
        test.baseline_auc = args.baseline_auc
        test.relaimp_pct = relaimp(test.auc, args.baseline_auc)
    lines += ["test." + ln for ln in test.lines()]
    (out / "eval_report.txt").write_text("\n".join(lines) + "\n")
    print("\n".join(lines))
    print(f"checkpoint: {out / 'checkpoint.ckpt'}")
    return 0


def cmd_gradcheck(args: argparse.Namespace) -> int:
    t0 = time.time()
    reports = run_suite(seed=args.seed)
    for rep in reports:
        print(rep.line())
        if not rep.passed:
            for line in rep.group_lines():
                print(line)
    failed = [r for r in reports if not r.passed]
    print(f"{len(reports) - len(failed)}/{len(reports)} gradient checks passed in {time.time() - t0:.1f}s")
    return 1 if failed else 0


def cmd_inspect_mask(args: argparse.Namespace) -> int:
    model = load_checkpoint(args.checkpoint)
    if model.spec.topology not in ("serial", "parallel") or model.spec.ablation.no_mask:
        raise CheckpointError(
            f"checkpoint topology {model.spec.topology!r} "
            f"(ablation={model.spec.ablation.names()}) has no mask units to inspect"
        )
    raw = parse_config_file(args.config)
    cfg = build_run_config(raw)
    splits, _, full = load_splits(cfg)
    by_name = {"train": splits[0], "valid": splits[1], "test": splits[2], "full": full}
    ds = by_name.get(args.split)
    if ds is None:
        raise ConfigError(f"split {args.split!r} unavailable for this data source")
    if ds.schema != model.schema:
        raise CheckpointError("checkpoint schema does not match the configured data source")
    insp = inspect_masks(model, ds, sample_size=args.sample, n_examples=args.examples, seed=cfg.seed)
    out = _out_dir(args.out)
    for hist in insp.histograms:
        (out / f"mask_hist_block{hist.block}.txt").write_text(hist.text())
    (out / "mask_examples.txt").write_text(insp.examples_text())
    print(f"wrote {len(insp.histograms)} histograms and {len(insp.example_indices)} example masks to {out}")
    return 0


def cmd_ablation(args: argparse.Namespace) -> int:
    raw = parse_config_file(args.config)
    _apply_overrides(raw, args)
    cfg = build_run_config(raw)
    splits, _, _ = load_splits(cfg)
    serial = replace(cfg.model, topology="serial")
    parallel = replace(cfg.model, topology="parallel")
    results, table = run_ablation_grid(splits, serial, parallel, cfg.train)
    out = _out_dir(cfg.out_dir)
    (out / "ablation_report.txt").write_text(table)
    detail = [
        f"{topo}.{variant}: test_auc={res.test.auc:.6f} valid_auc={res.valid.auc:.6f}"
        for (topo, variant), res in results.items()
    ]
    (out / "ablation_detail.txt").write_text("\n".join(detail) + "\n")
    print(table, end="")
    return 0


_SWEEP_PARAMS = {"blocks": ("model", "blocks"), "embed-dim": ("model", "embed_dim"), "reduction": ("model", "reduction")}


def cmd_sweep(args: argparse.Namespace) -> int:
    if args.param not in _SWEEP_PARAMS:
        raise ConfigError(f"unknown sweep parameter {args.param!r} (use {sorted(_SWEEP_PARAMS)})")
    values = [v.strip() for v in args.values.split(",") if v.strip()]
    if not values:
        raise ConfigError("sweep needs at least one value")
    section, key = _SWEEP_PARAMS[args.param]
    summary = []
    base_raw = parse_config_file(args.config)
    _apply_overrides(base_raw, args)
    base_out = build_run_config(base_raw).out_dir
    for v in values:
        raw = {s: dict(kv) for s, kv in base_raw.items()}
        raw.setdefault(section, {})[key] = v
        cfg = build_run_config(raw)
        splits, _, _ = load_splits(cfg)
        out = _out_dir(str(Path(base_out) / f"sweep_{args.param}_{v}"))
        model, result = run_experiment(cfg.model, splits, cfg.train, label=f"{args.param}={v}")
        save_checkpoint(model, str(out / "checkpoint.ckpt"))
        (out / "history.csv").write_text(result.history.to_csv())
        report = [f"label={result.label}"] + ["test." + ln for ln in result.test.lines()]
        (out / "eval_report.txt").write_text("\n".join(report) + "\n")
        summary.append(f"{args.param}={v}: test_auc={result.test.auc:.6f}")
        print(summary[-1])
    (_out_dir(base_out) / f"sweep_{args.param}_summary.txt").write_text("\n".join(summary) + "\n")
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="masknet", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-synth", help="generate the synthetic multiplicative-interaction dataset")
    g.add_argument("--out", default="data/synth")
    g.add_argument("--fields", type=int, default=8)
    g.add_argument("--vocab", type=int, default=50)
    g.add_argument("--latent-dim", type=int, default=4)
    g.add_argument("--instances", type=int, default=60_000)
    g.add_argument("--scale", type=float, default=4.0)
    g.add_argument("--seed", type=int, default=1)
    g.set_defaults(func=cmd_gen_synth)

    def add_train_flags(p):
        p.add_argument("--config", required=True, help="run config file (key=value sections)")
        p.add_argument("--topology", choices=("serial", "parallel", "dnn", "linear"))
        p.add_argument("--blocks", type=int)
        p.add_argument("--width", type=int)
        p.add_argument("--embedding-dim", type=int, dest="embedding_dim")
        p.add_argument("--reduction-ratio", type=int, dest="reduction_ratio")
        p.add_argument("--ablate", help="comma list from {no_mask,no_ln,no_ffn}")
        p.add_argument("--epochs", type=int)
        p.add_argument("--batch-size", type=int, dest="batch_size")
        p.add_argument("--learning-rate", type=float, dest="learning_rate")
        p.add_argument("--l2", type=float)
        p.add_argument("--seed", type=int)
        p.add_argument("--out")

    t = sub.add_parser("train", help="train one model and write checkpoint/history/report")
    add_train_flags(t)
    t.add_argument("--baseline-auc", type=float, dest="baseline_auc")
    t.add_argument("--baseline-name", default="baseline", dest="baseline_name")
    t.set_defaults(func=cmd_train)

    c = sub.add_parser("gradcheck", help="finite-difference check of every layer and topology")
    c.add_argument("--seed", type=int, default=0)
    c.set_defaults(func=cmd_gradcheck)

    i = sub.add_parser("inspect-mask", help="dump per-block mask histograms and example vectors")
    i.add_argument("--checkpoint", required=True)
    i.add_argument("--config", required=True)
    i.add_argument("--split", default="test", choices=("train", "valid", "test", "full"))
    i.add_argument("--sample", type=int, default=10_000)
    i.add_argument("--examples", type=int, default=2)
    i.add_argument("--out", default="runs/inspect")
    i.set_defaults(func=cmd_inspect_mask)

    a = sub.add_parser("ablation", help="train full + single-component-removed variants of both topologies")
    add_train_flags(a)
    a.set_defaults(func=cmd_ablation)

    s = sub.add_parser("sweep", help="rerun training over a list of values for one hyper-parameter")
    add_train_flags(s)
    s.add_argument("--param", required=True, help="blocks | embed-dim | reduction")
    s.add_argument("--values", required=True, help="comma-separated values")
    s.set_defaults(func=cmd_sweep)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except MetricError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except MaskNetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
