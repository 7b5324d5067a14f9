"""Log loss, the L2-regularized objective, Adam, and the training loop.

The loop is single-threaded and owns the model exclusively; validation runs
on read-only snapshots.  Everything is deterministic given the config seed:
rerunning produces a bit-identical loss history and parameter trajectory.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import Dataset, STREAM_SHUFFLE
from .errors import TrainingError
from .evaluate import auc
from .model import Model, relu_pattern
from .numeric import ParamStore, make_rng

LOGLOSS_EPS = 1e-12


@dataclass
class TrainConfig:
    batch_size: int = 1024
    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    l2: float = 0.0  # lambda of the regularized objective
    epochs: int = 20
    patience: int = 5  # epochs without a validation-AUC improvement
    seed: int = 0

    def __post_init__(self) -> None:
        assert self.batch_size >= 1 and self.learning_rate > 0 and self.l2 >= 0


def logloss(probs: np.ndarray, labels: np.ndarray) -> float:
    """Mean binary log loss; probabilities clamped to [1e-12, 1-1e-12] first."""
    p = np.clip(probs, LOGLOSS_EPS, 1.0 - LOGLOSS_EPS)
    return float(-(labels * np.log(p) + (1.0 - labels) * np.log1p(-p)).mean())


def l2_penalty(store: ParamStore, lam: float) -> float:
    return lam * store.l2_sq() if lam > 0.0 else 0.0


def objective(model: Model, cat: np.ndarray, num: np.ndarray, labels: np.ndarray, lam: float) -> float:
    """Mean log loss plus lam * ||theta||^2 over every trainable parameter."""
    probs, _ = model.forward(cat, num)
    return logloss(probs, labels) + l2_penalty(model.store, lam)


def objective_closure(model: Model, cat: np.ndarray, num: np.ndarray, labels: np.ndarray, lam: float = 0.0):
    """f(store) -> (objective, relu pattern) running forward + backward; the
    shape gradcheck expects."""

    def f(store: ParamStore):
        probs, cache = model.forward(cat, num)
        loss = logloss(probs, labels) + l2_penalty(store, lam)
        model.backward(cache, (probs - labels) / len(labels))
        if lam > 0.0:
            for name, param in store.params.items():
                store.grads[name] += 2.0 * lam * param
        return loss, relu_pattern(cache)

    return f


def adam_step(store: ParamStore, cfg: TrainConfig) -> None:
    """Standard Adam with bias correction; one shared step counter per store."""
    store.step += 1
    t = store.step
    c1 = 1.0 - cfg.beta1**t
    c2 = 1.0 - cfg.beta2**t
    for name in store.params:
        g = store.grads[name]
        m = store.adam_m[name]
        v = store.adam_v[name]
        m[...] = cfg.beta1 * m + (1.0 - cfg.beta1) * g
        v[...] = cfg.beta2 * v + (1.0 - cfg.beta2) * (g * g)
        store.params[name] -= cfg.learning_rate * (m / c1) / (np.sqrt(v / c2) + cfg.adam_eps)


@dataclass
class History:
    """Per-epoch trace; train_loss is the mean log loss (no L2 term)."""

    first_batch_loss: float = float("nan")
    rows: list[tuple[int, float, float]] = field(default_factory=list)  # (epoch, train_loss, valid_auc)
    best_epoch: int = 0
    best_valid_auc: float = float("nan")

    def to_csv(self) -> str:
        lines = [f"# first_batch_loss={self.first_batch_loss!r}", "epoch,train_logloss,valid_auc"]
        lines += [f"{e},{tl!r},{va!r}" for e, tl, va in self.rows]
        return "\n".join(lines) + "\n"


def train(model: Model, train_ds: Dataset, valid_ds: Dataset | None, cfg: TrainConfig) -> History:
    """Shuffled-minibatch epochs with validation-AUC model selection.

    Keeps the best-validation parameter snapshot and restores it before
    returning; stops early after `patience` epochs without improvement.
    Aborts with the offending batch named if the loss goes non-finite.
    """
    store = model.store
    rng = make_rng(cfg.seed, STREAM_SHUFFLE)
    hist = History()
    best_snap = None
    since_best = 0
    n = train_ds.n

    for epoch in range(1, cfg.epochs + 1):
        perm = rng.permutation(n)
        loss_sum = 0.0
        for b, lo in enumerate(range(0, n, cfg.batch_size)):
            idx = perm[lo : lo + cfg.batch_size]
            probs, cache = model.forward(train_ds.cat[idx], train_ds.num[idx])
            loss = logloss(probs, train_ds.labels[idx])
            if not np.isfinite(loss):
                raise TrainingError(f"non-finite loss at epoch {epoch}, batch {b}")
            if epoch == 1 and b == 0:
                hist.first_batch_loss = loss
            store.zero_grads()
            model.backward(cache, (probs - train_ds.labels[idx]) / len(idx))
            if cfg.l2 > 0.0:
                for name, param in store.params.items():
                    store.grads[name] += 2.0 * cfg.l2 * param
            adam_step(store, cfg)
            loss_sum += loss * len(idx)
        train_loss = loss_sum / n

        if valid_ds is not None:
            valid_auc = auc(model.predict(valid_ds), valid_ds.labels)
        else:
            valid_auc = float("nan")
        hist.rows.append((epoch, train_loss, valid_auc))

        if valid_ds is not None:
            if best_snap is None or valid_auc > hist.best_valid_auc:
                hist.best_valid_auc = valid_auc
                hist.best_epoch = epoch
                best_snap = store.snapshot()
                since_best = 0
            else:
                since_best += 1
                if since_best >= cfg.patience:
                    break

    if best_snap is not None:
        store.restore(best_snap)
    return hist
