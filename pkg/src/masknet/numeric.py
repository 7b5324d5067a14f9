"""Dense float64 arithmetic with hand-derived backward passes.

Conventions used across the package:

- everything is float64; weight matrices are C-order with shape (out, in)
- batches put instances in rows: an op on width-t vectors takes (B, t) and
  returns (B, out); a single instance is a one-row batch
- every ``*_fwd`` has a matching ``*_bwd`` mapping the upstream gradient to
  gradients for each input; backprop is derived per layer, there is no tape

Randomness: `make_rng` wraps numpy's PCG64, whose stream for a given seed is
documented and stable across platforms and numpy releases.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, MaskNetError

# Sigmoid outputs are kept strictly inside (0, 1) so log-loss terms and the
# prediction contract stay well-defined even for extreme logits.
SIGMOID_FLOOR = 1e-15


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Deterministic PCG64 generator; `stream` separates independent uses."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, stream])))


def assert_finite(name: str, *arrays: np.ndarray) -> None:
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise MaskNetError(f"non-finite values in {name}")


class ParamStore:
    """Named float64 parameter arrays with matching gradient and Adam buffers.

    Every parameter has exactly one gradient buffer of identical shape;
    `zero_grads` is called at the start of each minibatch.  The Adam moment
    buffers and the shared step counter live here so the optimizer is a pure
    function of the store.
    """

    def __init__(self) -> None:
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self.adam_m: dict[str, np.ndarray] = {}
        self.adam_v: dict[str, np.ndarray] = {}
        self.step = 0

    def add(self, name: str, value: np.ndarray) -> np.ndarray:
        if name in self.params:
            raise MaskNetError(f"duplicate parameter {name!r}")
        arr = np.ascontiguousarray(value, dtype=np.float64)
        self.params[name] = arr
        self.grads[name] = np.zeros_like(arr)
        self.adam_m[name] = np.zeros_like(arr)
        self.adam_v[name] = np.zeros_like(arr)
        return arr

    def names(self) -> list[str]:
        return list(self.params)

    def zero_grads(self) -> None:
        for g in self.grads.values():
            g.fill(0.0)

    def size(self) -> int:
        return sum(p.size for p in self.params.values())

    def l2_sq(self) -> float:
        """Sum of squares over every parameter coordinate."""
        return float(sum(float(np.dot(p.ravel(), p.ravel())) for p in self.params.values()))

    def snapshot(self) -> dict[str, np.ndarray]:
        return {k: v.copy() for k, v in self.params.items()}

    def restore(self, snap: dict[str, np.ndarray]) -> None:
        for k, v in snap.items():
            self.params[k][...] = v


# ---------------------------------------------------------------------------
# Elementary ops
# ---------------------------------------------------------------------------


def affine_fwd(x: np.ndarray, w: np.ndarray, b: np.ndarray | None = None) -> np.ndarray:
    """y = x @ w.T (+ b). x (B, t), w (m, t), b (m,) -> (B, m)."""
    if x.ndim != 2 or w.ndim != 2 or x.shape[1] != w.shape[1]:
        raise DimensionError(f"affine: x {x.shape} incompatible with w {w.shape}")
    y = x @ w.T
    if b is not None:
        if b.shape != (w.shape[0],):
            raise DimensionError(f"affine: b {b.shape} incompatible with w {w.shape}")
        y += b
    return y


def affine_bwd(
    dy: np.ndarray, x: np.ndarray, w: np.ndarray, with_bias: bool = True
) -> tuple[np.ndarray, np.ndarray, np.ndarray | None]:
    """Gradients of y = x @ w.T + b: returns (dx, dw, db)."""
    dx = dy @ w
    dw = dy.T @ x
    db = dy.sum(axis=0) if with_bias else None
    return dx, dw, db


def relu_fwd(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def relu_bwd(dy: np.ndarray, x: np.ndarray) -> np.ndarray:
    # subgradient at exactly 0 is 0
    return dy * (x > 0.0)


def sigmoid(s):
    """Numerically stable logistic function, elementwise.

    Uses the sign-split form (1/(1+e^-s) vs e^s/(1+e^s)) and clips the result
    to [SIGMOID_FLOOR, 1-SIGMOID_FLOOR] so outputs stay strictly inside (0, 1).
    Accepts scalars or arrays; returns the same kind.
    """
    arr = np.asarray(s, dtype=np.float64)
    out = np.empty_like(arr)
    pos = arr >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-arr[pos]))
    es = np.exp(arr[~pos])
    out[~pos] = es / (1.0 + es)
    np.clip(out, SIGMOID_FLOOR, 1.0 - SIGMOID_FLOOR, out=out)
    return float(out) if np.isscalar(s) else out


def sigmoid_bwd(dy, y):
    """dL/ds for y = sigmoid(s)."""
    return dy * y * (1.0 - y)


# ---------------------------------------------------------------------------
# Finite-difference gradient oracle
# ---------------------------------------------------------------------------


@dataclass
class GradcheckReport:
    """Result of comparing analytic gradients against central differences."""

    name: str
    tol: float
    max_rel_err: float
    worst: str
    checked: int
    skipped: int
    failure: str | None = None
    per_param: dict | None = None  # name -> (max rel err, flat index)

    @property
    def passed(self) -> bool:
        return self.failure is None and self.max_rel_err <= self.tol

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        msg = (
            f"{status} {self.name}: max_rel_err={self.max_rel_err:.3e} tol={self.tol:.0e} "
            f"worst={self.worst} checked={self.checked} kink_skipped={self.skipped}"
        )
        if self.failure:
            msg += f" [{self.failure}]"
        return msg

    def group_lines(self) -> list[str]:
        """Worst coordinate per parameter group, for failure diagnostics."""
        if not self.per_param:
            return []
        return [
            f"  {name}[{idx}]: rel_err={err:.3e}"
            for name, (err, idx) in sorted(self.per_param.items(), key=lambda kv: -kv[1][0])
        ]


def gradcheck(f, store: ParamStore, h: float = 1e-4, tol: float = 1e-4, name: str = "gradcheck") -> GradcheckReport:
    """Check every parameter coordinate of `store` against (f(th+h)-f(th-h))/2h.

    `f(store) -> (loss, kink_pattern)` must run forward and backward,
    accumulating gradients into `store.grads` (the store is zeroed here before
    the analytic call).  `kink_pattern` is an optional bool array of ReLU
    activation signs: a coordinate whose +h/-h evaluations disagree on the
    pattern straddles a kink, where central differences are invalid, and is
    skipped.  Relative error is |a-n| / max(|a|, |n|, 1), i.e. absolute below
    unit gradient scale.
    """
    if not 1e-6 <= h <= 1e-3:
        raise MaskNetError(f"gradcheck step h={h} outside [1e-6, 1e-3]")
    store.zero_grads()
    loss0, _ = f(store)
    if not np.isfinite(loss0):
        return GradcheckReport(name, tol, np.inf, "-", 0, 0, failure="non-finite loss at base point")
    analytic = {k: g.copy() for k, g in store.grads.items()}

    max_err = 0.0
    worst = "-"
    checked = 0
    skipped = 0
    per_param: dict = {}
    for pname, arr in store.params.items():
        flat = arr.reshape(-1)
        aflat = analytic[pname].reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            lp, pat_p = f(store)
            flat[i] = orig - h
            lm, pat_m = f(store)
            flat[i] = orig
            if not (np.isfinite(lp) and np.isfinite(lm)):
                return GradcheckReport(
                    name, tol, np.inf, f"{pname}[{i}]", checked, skipped,
                    failure="non-finite loss at perturbed point", per_param=per_param,
                )
            if pat_p is not None and pat_m is not None and not np.array_equal(pat_p, pat_m):
                skipped += 1
                continue
            numeric = (lp - lm) / (2.0 * h)
            a = aflat[i]
            err = abs(a - numeric) / max(abs(a), abs(numeric), 1.0)
            checked += 1
            if pname not in per_param or err > per_param[pname][0]:
                per_param[pname] = (err, i)
            if err > max_err:
                max_err = err
                worst = f"{pname}[{i}]"
    return GradcheckReport(name, tol, max_err, worst, checked, skipped, per_param=per_param)
