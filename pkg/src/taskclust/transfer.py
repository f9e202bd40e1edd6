"""Per-task models and cross-task transfer scores.

Each task gets a small linear encoder plus softmax classifier trained by
mini-batch gradient descent. Transfer from task i to task j is measured by
freezing i's encoder, fitting a fresh classifier on j's training split, and
scoring accuracy on j's validation split. Scores for a sampled set of task
pairs are assembled into an asymmetric, partially observed matrix with unit
diagonal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError
from .seeding import derive_rng


@dataclass
class TaskDataset:
    task_id: str
    label_count: int
    train: tuple[np.ndarray, np.ndarray]
    valid: tuple[np.ndarray, np.ndarray]
    test: tuple[np.ndarray, np.ndarray]

    def __post_init__(self):
        if self.label_count < 1:
            raise InputError("bad-label-count", "label_count must be positive")
        dims = set()
        for name in ("train", "valid", "test"):
            X, y = getattr(self, name)
            X = np.asarray(X, dtype=float)
            y = np.asarray(y, dtype=int)
            if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
                raise InputError("bad-shape", f"{name} split of {self.task_id} is malformed")
            if y.size and (y.min() < 0 or y.max() >= self.label_count):
                raise InputError(
                    "label-out-of-range",
                    f"{name} split of {self.task_id} has labels outside [0, {self.label_count})",
                )
            if X.shape[0] > 0:
                dims.add(X.shape[1])
            setattr(self, name, (X, y))
        if len(dims) > 1:
            raise InputError("dim-mismatch", f"splits of {self.task_id} disagree on feature dim")

    @property
    def dim(self) -> int:
        return self.train[0].shape[1]


@dataclass
class TransferMatrix:
    """Asymmetric transfer scores with an observation mask; diagonal fixed at 1."""

    scores: np.ndarray
    observed: np.ndarray

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=float)
        self.observed = np.asarray(self.observed, dtype=bool)
        n = self.scores.shape[0]
        if self.scores.ndim != 2 or self.scores.shape != (n, n) or self.observed.shape != (n, n):
            raise InputError("bad-shape", "scores and observed must be square and match")
        if not np.array_equal(self.observed, self.observed.T):
            raise InputError("asymmetric-input", "pair (i,j) must be observed iff (j,i) is")
        d = np.arange(n)
        if not self.observed[d, d].all() or not np.allclose(self.scores[d, d], 1.0):
            raise InputError("bad-value", "diagonal must be observed with value 1")
        obs = self.scores[self.observed]
        if not np.isfinite(obs).all():
            raise InputError("non-finite", "observed scores must be finite")
        if obs.size and (obs.min() < 0 or obs.max() > 1):
            raise InputError("bad-value", "observed scores must lie in [0,1]")

    @property
    def n(self) -> int:
        return self.scores.shape[0]

@dataclass
class TrainConfig:
    hidden: int = 16
    lr: float = 0.1
    epochs: int = 200
    batch_size: int = 32
    transfer_epochs: int = 50
    seed: int = 0
    reuse_source_classifier: bool = False  # identical-label-set shortcut

    def __post_init__(self):
        if self.hidden < 1 or self.epochs < 1 or self.transfer_epochs < 1 or self.batch_size < 1:
            raise InputError("bad-config", "hidden, epochs and batch_size must be positive")
        if self.lr <= 0:
            raise InputError("bad-config", "learning rate must be positive")


@dataclass
class TaskModel:
    W_enc: np.ndarray  # (d, h)
    b_enc: np.ndarray  # (h,)
    W_cls: np.ndarray  # (h, L)
    b_cls: np.ndarray  # (L,)

    def encode(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.shape[1] != self.W_enc.shape[0]:
            raise InputError(
                "dim-mismatch",
                f"encoder expects dim {self.W_enc.shape[0]}, got {X.shape[1]}",
            )
        return X @ self.W_enc + self.b_enc

    def logits(self, X: np.ndarray) -> np.ndarray:
        return self.encode(X) @ self.W_cls + self.b_cls

    def accuracy(self, X: np.ndarray, y: np.ndarray) -> float:
        if len(y) == 0:
            raise InputError("empty-split", "cannot score an empty split")
        return float(np.mean(np.argmax(self.logits(X), axis=1) == y))


def softmax(Z: np.ndarray) -> np.ndarray:
    Z = Z - Z.max(axis=1, keepdims=True)
    P = np.exp(Z)
    return P / P.sum(axis=1, keepdims=True)


def _onehot(y: np.ndarray, L: int) -> np.ndarray:
    H = np.zeros((y.size, L))
    H[np.arange(y.size), y] = 1.0
    return H


def _fit_classifier(Z, y, L, config, rng):
    """Softmax head on fixed features Z by mini-batch gradient descent."""
    h = Z.shape[1]
    W = 0.01 * rng.standard_normal((h, L))
    b = np.zeros(L)
    m = Z.shape[0]
    for _ in range(config.transfer_epochs):
        order = rng.permutation(m)
        for start in range(0, m, config.batch_size):
            idx = order[start:start + config.batch_size]
            Zb, yb = Z[idx], y[idx]
            G = (softmax(Zb @ W + b) - _onehot(yb, L)) / len(idx)
            W -= config.lr * (Zb.T @ G)
            b -= config.lr * G.sum(axis=0)
    return W, b


def train_single_task(dataset: TaskDataset, config: TrainConfig | None = None) -> TaskModel:
    """Jointly train encoder and classifier on the task's training split."""
    config = config or TrainConfig()
    X, y = dataset.train
    if X.shape[0] == 0:
        raise InputError("empty-train", f"task {dataset.task_id} has no training data")
    d, h, L = dataset.dim, config.hidden, dataset.label_count
    rng = derive_rng(config.seed, "single", dataset.task_id)
    W_e = 0.01 * rng.standard_normal((d, h))
    b_e = np.zeros(h)
    W_c = 0.01 * rng.standard_normal((h, L))
    b_c = np.zeros(L)
    m = X.shape[0]
    for _ in range(config.epochs):
        order = rng.permutation(m)
        for start in range(0, m, config.batch_size):
            idx = order[start:start + config.batch_size]
            Xb, yb = X[idx], y[idx]
            Z = Xb @ W_e + b_e
            G = (softmax(Z @ W_c + b_c) - _onehot(yb, L)) / len(idx)
            dZ = G @ W_c.T
            W_c -= config.lr * (Z.T @ G)
            b_c -= config.lr * G.sum(axis=0)
            W_e -= config.lr * (Xb.T @ dZ)
            b_e -= config.lr * dZ.sum(axis=0)
    return TaskModel(W_enc=W_e, b_enc=b_e, W_cls=W_c, b_cls=b_c)


def transfer_score(source: TaskModel, target: TaskDataset, config: TrainConfig | None = None) -> float:
    """Accuracy on target.valid of a fresh classifier over source's frozen encoder.

    With reuse_source_classifier set the unmodified source model is scored
    directly on target.train instead, which only makes sense when the label
    sets coincide.
    """
    config = config or TrainConfig()
    if target.dim != source.W_enc.shape[0]:
        raise InputError(
            "dim-mismatch",
            f"source encoder dim {source.W_enc.shape[0]} vs target dim {target.dim}",
        )
    if config.reuse_source_classifier:
        Xt, yt = target.train
        if len(yt) == 0:
            raise InputError("empty-train", f"task {target.task_id} has no training data")
        return source.accuracy(Xt, yt)
    Xt, yt = target.train
    if len(yt) == 0:
        raise InputError("empty-train", f"task {target.task_id} has no training data")
    Xv, yv = target.valid
    if len(yv) == 0:
        raise InputError("empty-split", f"task {target.task_id} has no validation data")
    rng = derive_rng(config.seed, "transfer", target.task_id)
    Z = Xt @ source.W_enc + source.b_enc
    W, b = _fit_classifier(Z, yt, target.label_count, config, rng)
    Zv = Xv @ source.W_enc + source.b_enc
    return float(np.mean(np.argmax(Zv @ W + b, axis=1) == yv))


def _pair_offset(i: int, n: int) -> int:
    """Rank of pair (i, i+1) in the lexicographic list of all i<j pairs."""
    return i * (2 * n - i - 1) // 2


def _unrank_pair(t: int, n: int) -> tuple[int, int]:
    i = (2 * n - 1 - math.isqrt((2 * n - 1) ** 2 - 8 * t)) // 2
    while _pair_offset(i + 1, n) <= t:
        i += 1
    while _pair_offset(i, n) > t:
        i -= 1
    j = t - _pair_offset(i, n) + i + 1
    return i, j


def sample_task_pairs(n: int, budget: int, seed: int = 0) -> set[tuple[int, int]]:
    """Uniformly sample `budget` distinct unordered task pairs."""
    total = n * (n - 1) // 2
    if budget <= 0:
        raise InputError("bad-budget", "budget must be positive")
    if budget > total:
        raise InputError(
            "budget-too-large", f"asked for {budget} pairs but only {total} exist"
        )
    rng = derive_rng(seed, "pairs")
    ranks = rng.choice(total, size=budget, replace=False)
    return {_unrank_pair(int(t), n) for t in ranks}


def build_transfer_matrix(
    tasks: list[TaskDataset],
    pairs: set[tuple[int, int]],
    config: TrainConfig | None = None,
) -> TransferMatrix:
    """Evaluate both directions of every sampled pair into a score matrix."""
    config = config or TrainConfig()
    n = len(tasks)
    for i, j in pairs:
        if not (0 <= i < n and 0 <= j < n and i != j):
            raise InputError("bad-pair", f"pair ({i},{j}) out of range for {n} tasks")
    scores = np.zeros((n, n))
    observed = np.zeros((n, n), dtype=bool)
    needed = sorted({i for p in pairs for i in p})
    models = {i: train_single_task(tasks[i], config) for i in needed}
    for i, j in sorted(set((min(p), max(p)) for p in pairs)):
        try:
            scores[i, j] = transfer_score(models[i], tasks[j], config)
            scores[j, i] = transfer_score(models[j], tasks[i], config)
        except InputError as exc:
            raise InputError(exc.code, f"pair ({i},{j}): {exc.message}") from exc
        observed[i, j] = observed[j, i] = True
    d = np.arange(n)
    scores[d, d] = 1.0
    observed[d, d] = True
    return TransferMatrix(scores=scores, observed=observed)


