"""Feature schema, CSV ingestion, 8:1:1 splitting, and the synthetic benchmark.

The synthetic generator produces a pure multiplicative-interaction task: each
(field, category) pair owns a latent vector, the instance logit is the sum of
pairwise dot products of the chosen categories' latents, and the label is a
Bernoulli draw through the sigmoid.  True logits are stored with the data so
any run can compute its own Bayes-oracle AUC ceiling instead of trusting a
hard-coded constant.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, replace
from functools import cached_property

import numpy as np

from .errors import ConfigError, IngestError, SchemaError
from .numeric import make_rng, sigmoid

CATEGORICAL = "categorical"
NUMERICAL = "numerical"
LABEL = "label"
LOGIT = "logit"

# rng stream ids, so independent uses of one seed never share a draw sequence
STREAM_SPLIT = 1
STREAM_SYNTH = 2
STREAM_SHUFFLE = 3


@dataclass(frozen=True)
class Field:
    """One input column. Categorical fields carry a dense vocabulary; index
    len(vocab) is the reserved out-of-vocabulary slot."""

    name: str
    kind: str
    vocab: tuple[str, ...] = ()

    @cached_property
    def _index(self) -> dict[str, int]:
        return {tok: i for i, tok in enumerate(self.vocab)}

    @property
    def vocab_size(self) -> int:
        return len(self.vocab)

    def encode(self, token: str) -> int:
        return self._index.get(token, len(self.vocab))

    def decode(self, index: int) -> str:
        return self.vocab[index] if index < len(self.vocab) else "<OOV>"


@dataclass(frozen=True)
class FeatureSchema:
    fields: tuple[Field, ...]

    def __post_init__(self) -> None:
        names = [f.name for f in self.fields]
        if len(set(names)) != len(names):
            raise SchemaError("duplicate field names in schema")
        if not self.fields:
            raise SchemaError("schema needs at least one field")
        for f in self.fields:
            if f.kind not in (CATEGORICAL, NUMERICAL):
                raise SchemaError(f"field {f.name!r} has unknown kind {f.kind!r}")

    @property
    def f(self) -> int:
        return len(self.fields)

    @cached_property
    def categorical(self) -> tuple[Field, ...]:
        return tuple(f for f in self.fields if f.kind == CATEGORICAL)

    @cached_property
    def numerical(self) -> tuple[Field, ...]:
        return tuple(f for f in self.fields if f.kind == NUMERICAL)


@dataclass(frozen=True)
class EncodedInstance:
    """Row view of a Dataset: dense categorical indices + raw numerical values."""

    cat: tuple[int, ...]
    num: tuple[float, ...]
    label: float
    logit: float | None = None


@dataclass(frozen=True)
class Dataset:
    """Immutable columnar dataset.  cat columns follow schema.categorical order,
    num columns follow schema.numerical order."""

    schema: FeatureSchema
    cat: np.ndarray  # (N, n_categorical) int64
    num: np.ndarray  # (N, n_numerical) float64
    labels: np.ndarray  # (N,) float64 in {0, 1}
    logits: np.ndarray | None = None  # true generator logits, synthetic only
    split: str = "full"

    @property
    def n(self) -> int:
        return len(self.labels)

    @property
    def positive_rate(self) -> float:
        return float(self.labels.mean())

    def instance(self, i: int) -> EncodedInstance:
        return EncodedInstance(
            cat=tuple(int(v) for v in self.cat[i]),
            num=tuple(float(v) for v in self.num[i]),
            label=float(self.labels[i]),
            logit=None if self.logits is None else float(self.logits[i]),
        )

    def take(self, idx: np.ndarray, split: str) -> "Dataset":
        return Dataset(
            schema=self.schema,
            cat=self.cat[idx],
            num=self.num[idx],
            labels=self.labels[idx],
            logits=None if self.logits is None else self.logits[idx],
            split=split,
        )


# ---------------------------------------------------------------------------
# Delimited-text ingestion
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ColumnSpec:
    name: str
    kind: str  # categorical | numerical | label | logit


def parse_column_spec(text: str) -> list[ColumnSpec]:
    """Sidecar schema format: one 'name,kind' line per column, '#' comments."""
    cols: list[ColumnSpec] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != 2:
            raise SchemaError(f"schema spec line {lineno}: expected 'name,kind', got {line!r}")
        name, kind = parts
        if kind not in (CATEGORICAL, NUMERICAL, LABEL, LOGIT):
            raise SchemaError(f"schema spec line {lineno}: unknown kind {kind!r}")
        cols.append(ColumnSpec(name, kind))
    if sum(c.kind == LABEL for c in cols) != 1:
        raise SchemaError("schema spec must declare exactly one label column")
    if sum(c.kind == LOGIT for c in cols) > 1:
        raise SchemaError("schema spec may declare at most one logit column")
    if not any(c.kind in (CATEGORICAL, NUMERICAL) for c in cols):
        raise SchemaError("schema spec declares no feature columns")
    return cols


@dataclass
class RawTable:
    """Parsed delimited text: header-ordered columns and string cells."""

    columns: list[ColumnSpec]
    rows: list[list[str]]

    @property
    def n(self) -> int:
        return len(self.rows)


def read_delimited(text: str, columns: list[ColumnSpec], delimiter: str = ",") -> RawTable:
    """Parse delimited text with a required header row.

    The header must contain exactly the declared column names; column order is
    taken from the header.  Rows with the wrong cell count raise IngestError
    naming the file line.
    """
    reader = csv.reader(io.StringIO(text), delimiter=delimiter)
    try:
        header = next(reader)
    except StopIteration:
        raise IngestError("empty input: missing header row") from None
    header = [h.strip() for h in header]
    by_name = {c.name: c for c in columns}
    if sorted(header) != sorted(by_name):
        missing = set(by_name) - set(header)
        extra = set(header) - set(by_name)
        raise SchemaError(f"header does not match schema spec (missing={sorted(missing)}, extra={sorted(extra)})")
    ordered = [by_name[h] for h in header]
    rows: list[list[str]] = []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != len(ordered):
            raise IngestError(f"line {lineno}: expected {len(ordered)} cells, got {len(row)}")
        rows.append([c.strip() for c in row])
    return RawTable(columns=ordered, rows=rows)


def _parse_label(token: str, lineno: int) -> float:
    try:
        v = float(token)
    except ValueError:
        raise IngestError(f"line {lineno}: label {token!r} is not a number") from None
    if v not in (0.0, 1.0):
        raise SchemaError(f"line {lineno}: label must be 0 or 1, got {token!r}")
    return v


def build_schema_and_encode(
    raw: RawTable, train_rows: np.ndarray | None = None
) -> tuple[FeatureSchema, Dataset]:
    """Build vocabularies and encode every row.

    Vocabularies are built only from `train_rows` (all rows when None), in
    first-seen order; categories outside them encode to the reserved OOV
    index.  Numerical cells pass through as raw scalars.
    """
    n = raw.n
    if train_rows is None:
        train_rows = np.arange(n)
    vocab_source = set(int(i) for i in train_rows)

    fields: list[Field] = []
    col_of: dict[str, int] = {}
    for j, col in enumerate(raw.columns):
        if col.kind == CATEGORICAL:
            seen: dict[str, None] = {}
            for i in sorted(vocab_source):
                seen.setdefault(raw.rows[i][j], None)
            fields.append(Field(col.name, CATEGORICAL, tuple(seen)))
            col_of[col.name] = j
        elif col.kind == NUMERICAL:
            fields.append(Field(col.name, NUMERICAL))
            col_of[col.name] = j
    schema = FeatureSchema(tuple(fields))

    label_j = next(j for j, c in enumerate(raw.columns) if c.kind == LABEL)
    logit_j = next((j for j, c in enumerate(raw.columns) if c.kind == LOGIT), None)

    cat = np.zeros((n, len(schema.categorical)), dtype=np.int64)
    num = np.zeros((n, len(schema.numerical)), dtype=np.float64)
    labels = np.zeros(n, dtype=np.float64)
    logits = np.zeros(n, dtype=np.float64) if logit_j is not None else None
    for i, row in enumerate(raw.rows):
        lineno = i + 2
        labels[i] = _parse_label(row[label_j], lineno)
        if logits is not None:
            try:
                logits[i] = float(row[logit_j])
            except ValueError:
                raise IngestError(f"line {lineno}: logit {row[logit_j]!r} is not a number") from None
        for a, fld in enumerate(schema.categorical):
            cat[i, a] = fld.encode(row[col_of[fld.name]])
        for a, fld in enumerate(schema.numerical):
            tok = row[col_of[fld.name]]
            try:
                num[i, a] = float(tok)
            except ValueError:
                raise IngestError(f"line {lineno}: field {fld.name!r} value {tok!r} is not a number") from None
    return schema, Dataset(schema=schema, cat=cat, num=num, labels=labels, logits=logits)


# ---------------------------------------------------------------------------
# Splitting
# ---------------------------------------------------------------------------


def split_indices(n: int, seed: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Deterministic shuffled 8:1:1 split (floor rule, remainder to train)."""
    if n < 10:
        raise ConfigError(f"need at least 10 instances to split, got {n}")
    perm = make_rng(seed, STREAM_SPLIT).permutation(n)
    tenth = n // 10
    train = np.sort(perm[: n - 2 * tenth])
    valid = np.sort(perm[n - 2 * tenth : n - tenth])
    test = np.sort(perm[n - tenth :])
    return train, valid, test


def split_dataset(d: Dataset, seed: int) -> tuple[Dataset, Dataset, Dataset]:
    tr, va, te = split_indices(d.n, seed)
    return d.take(tr, "train"), d.take(va, "valid"), d.take(te, "test")


def ingest_csv(
    text: str, columns: list[ColumnSpec], seed: int, delimiter: str = ","
) -> tuple[FeatureSchema, Dataset, Dataset, Dataset]:
    """Full pipeline: parse, split rows 8:1:1, build vocab from the training
    rows only, encode all three splits."""
    raw = read_delimited(text, columns, delimiter)
    tr, va, te = split_indices(raw.n, seed)
    schema, full = build_schema_and_encode(raw, train_rows=tr)
    return schema, full.take(tr, "train"), full.take(va, "valid"), full.take(te, "test")


def standardize_numerical(
    train: Dataset, *others: Dataset
) -> tuple[Dataset, ...]:
    """Z-score numerical columns using training-split statistics."""
    if train.num.shape[1] == 0:
        return (train, *others)
    mean = train.num.mean(axis=0)
    std = train.num.std(axis=0)
    std[std < 1e-12] = 1.0
    out = []
    for ds in (train, *others):
        out.append(replace(ds, num=(ds.num - mean) / std))
    return tuple(out)


# ---------------------------------------------------------------------------
# Synthetic multiplicative-interaction benchmark
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SyntheticSpec:
    fields: int = 8
    vocab: int = 50
    latent_dim: int = 4
    instances: int = 60_000
    logit_scale: float = 4.0
    seed: int = 1


def gen_synthetic(spec: SyntheticSpec) -> Dataset:
    """Draw the benchmark dataset; labels carry no main effects by construction.

    Each (field, category) latent is i.i.d. normal with std 1/sqrt(latent_dim);
    the instance logit is logit_scale times the sum of pairwise latent dot
    products, so only feature interactions are informative.
    """
    if spec.fields < 2 or spec.latent_dim < 1 or spec.instances < 1 or spec.vocab < 1:
        raise ConfigError(f"invalid synthetic spec: {spec}")
    rng = make_rng(spec.seed, STREAM_SYNTH)
    f, nv, d, n = spec.fields, spec.vocab, spec.latent_dim, spec.instances
    latents = rng.normal(0.0, 1.0, size=(f, nv, d)) / np.sqrt(d)
    cat = rng.integers(0, nv, size=(n, f), dtype=np.int64)
    chosen = latents[np.arange(f)[None, :], cat]  # (n, f, d)
    total = chosen.sum(axis=1)
    pair_sum = 0.5 * ((total * total).sum(axis=1) - (chosen * chosen).sum(axis=(1, 2)))
    logits = spec.logit_scale * pair_sum
    labels = (rng.uniform(size=n) < sigmoid(logits)).astype(np.float64)

    fields = tuple(
        Field(f"f{i}", CATEGORICAL, tuple(f"v{j}" for j in range(nv))) for i in range(f)
    )
    schema = FeatureSchema(fields)
    num = np.zeros((n, 0), dtype=np.float64)
    return Dataset(schema=schema, cat=cat, num=num, labels=labels, logits=logits)


def marginal_ctr_scores(train: Dataset, eval_ds: Dataset) -> np.ndarray:
    """Score by summing per-field empirical CTRs estimated on the training split.

    This is the strongest purely additive single-field predictor; on the
    synthetic task it should sit near chance because latents are zero-mean.
    """
    base = train.labels.mean()
    scores = np.zeros(eval_ds.n)
    for a, fld in enumerate(train.schema.categorical):
        size = fld.vocab_size + 1
        counts = np.bincount(train.cat[:, a], minlength=size).astype(np.float64)
        pos = np.bincount(train.cat[:, a], weights=train.labels, minlength=size)
        rates = np.where(counts > 0, pos / np.maximum(counts, 1.0), base)
        scores += rates[eval_ds.cat[:, a]]
    return scores


# ---------------------------------------------------------------------------
# Manifest and file output
# ---------------------------------------------------------------------------


def build_manifest(
    full: Dataset,
    spec: SyntheticSpec | None = None,
    splits: tuple[Dataset, Dataset, Dataset] | None = None,
    split_seed: int | None = None,
) -> dict[str, str]:
    """Flat key=value summary: sizes, field stats, positive rate, and (for
    synthetic data) generator parameters plus Bayes / marginal-predictor AUCs."""
    from .evaluate import auc  # local import: evaluate has no data dependency

    man: dict[str, str] = {
        "instances": str(full.n),
        "fields": str(full.schema.f),
        "positive_rate": f"{full.positive_rate:.6f}",
    }
    for fld in full.schema.fields:
        if fld.kind == CATEGORICAL:
            man[f"field.{fld.name}"] = f"categorical,vocab={fld.vocab_size}"
        else:
            man[f"field.{fld.name}"] = "numerical"
    if spec is not None:
        man["generator"] = "multiplicative-latent"
        man["generator.fields"] = str(spec.fields)
        man["generator.vocab"] = str(spec.vocab)
        man["generator.latent_dim"] = str(spec.latent_dim)
        man["generator.logit_scale"] = f"{spec.logit_scale:g}"
        man["generator.seed"] = str(spec.seed)
    if full.logits is not None:
        man["bayes_auc_full"] = f"{auc(full.logits, full.labels):.6f}"
    if splits is not None:
        train, valid, test = splits
        man["split_seed"] = str(split_seed)
        man["n_train"] = str(train.n)
        man["n_valid"] = str(valid.n)
        man["n_test"] = str(test.n)
        if test.logits is not None:
            man["bayes_auc_test"] = f"{auc(test.logits, test.labels):.6f}"
        man["marginal_auc_test"] = f"{auc(marginal_ctr_scores(train, test), test.labels):.6f}"
    return man


def manifest_text(man: dict[str, str]) -> str:
    return "".join(f"{k}={v}\n" for k, v in man.items())


def dataset_to_csv(ds: Dataset, delimiter: str = ",") -> str:
    """Serialize a dataset back to delimited text (with label and, when
    present, true_logit columns)."""
    buf = io.StringIO()
    writer = csv.writer(buf, delimiter=delimiter, lineterminator="\n")
    header = [f.name for f in ds.schema.fields] + ["label"]
    if ds.logits is not None:
        header.append("true_logit")
    writer.writerow(header)
    cat_pos = {f.name: a for a, f in enumerate(ds.schema.categorical)}
    num_pos = {f.name: a for a, f in enumerate(ds.schema.numerical)}
    for i in range(ds.n):
        row = []
        for fld in ds.schema.fields:
            if fld.kind == CATEGORICAL:
                row.append(fld.decode(int(ds.cat[i, cat_pos[fld.name]])))
            else:
                row.append(repr(float(ds.num[i, num_pos[fld.name]])))
        row.append(str(int(ds.labels[i])))
        if ds.logits is not None:
            row.append(repr(float(ds.logits[i])))
        writer.writerow(row)
    return buf.getvalue()


def schema_spec_text(schema: FeatureSchema, with_logit: bool = False) -> str:
    lines = [f"{f.name},{f.kind}" for f in schema.fields]
    lines.append("label,label")
    if with_logit:
        lines.append("true_logit,logit")
    return "\n".join(lines) + "\n"
