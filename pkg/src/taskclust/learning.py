"""Cluster-level models and few-shot prediction on new tasks.

Three cluster model kinds are supported: a single encoder+classifier trained
on pooled data (shared_classifier), a shared encoder with one classifier head
per member task (shared_encoder_multihead), and a metric encoder trained
episodically so that examples sit closer to same-label anchors
(metric_encoder). A new task with a small support set is served either by a
learned convex combination of frozen cluster predictors or, when every
cluster scores at or below an accuracy threshold on the support set, by a
fresh model trained on the support set alone.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InputError
from .seeding import derive_rng
from .transfer import TaskDataset, TaskModel, TrainConfig, softmax, train_single_task, _onehot

KINDS = ("shared_classifier", "shared_encoder_multihead", "metric_encoder")


@dataclass
class FewShotTask:
    support: tuple[np.ndarray, np.ndarray]
    query: tuple[np.ndarray, np.ndarray]
    label_count: int

    def __post_init__(self):
        Xs, ys = self.support
        Xs = np.asarray(Xs, dtype=float)
        ys = np.asarray(ys, dtype=int)
        if len(ys) == 0:
            raise InputError("no-support", "support set is empty")
        if set(range(self.label_count)) - set(ys.tolist()):
            raise InputError("missing-label", "every label must appear in the support set")
        self.support = (Xs, ys)
        Xq, yq = self.query
        self.query = (np.asarray(Xq, dtype=float), np.asarray(yq, dtype=int))

    @property
    def dim(self) -> int:
        return self.support[0].shape[1]


@dataclass
class ClusterModel:
    """One trained model covering a task cluster; behavior depends on kind."""

    cluster_id: int
    kind: str
    W_enc: np.ndarray
    b_enc: np.ndarray
    W_cls: np.ndarray | None = None            # shared_classifier
    b_cls: np.ndarray | None = None
    heads: dict[str, tuple[np.ndarray, np.ndarray]] = field(default_factory=dict)
    label_count: int | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InputError("bad-kind", f"kind must be one of {KINDS}")

    @property
    def dim(self) -> int:
        return self.W_enc.shape[0]

    def encode(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.W_enc.shape[0]:
            raise InputError(
                "dim-mismatch",
                f"encoder expects dim {self.W_enc.shape[0]}, got {X.shape[1]}",
            )
        return X @ self.W_enc + self.b_enc

    def predict_proba(self, X, task_id: str | None = None, support=None) -> np.ndarray:
        """Distribution over labels for each row of X; row sums are 1."""
        if self.kind == "shared_classifier":
            return softmax(self.encode(X) @ self.W_cls + self.b_cls)
        if self.kind == "shared_encoder_multihead":
            if task_id is None or task_id not in self.heads:
                raise InputError("no-head", f"no classifier head for task {task_id!r}")
            W, b = self.heads[task_id]
            return softmax(self.encode(X) @ W + b)
        if support is None:
            raise InputError("no-support", "metric_encoder prediction needs a support set")
        return metric_predict(self, support, X)


def metric_predict(model: ClusterModel, support: tuple[np.ndarray, np.ndarray], x) -> np.ndarray:
    """Label distribution from inner products with per-label anchor encodings.

    The anchor for a label is the mean encoding of that label's support
    examples; probabilities are the softmax of anchor-query inner products.
    """
    Xs, ys = support
    Xs = np.asarray(Xs, dtype=float)
    ys = np.asarray(ys, dtype=int)
    if len(ys) == 0:
        raise InputError("no-support", "support set is empty")
    L = int(ys.max()) + 1
    Zs = model.encode(Xs)
    anchors = np.empty((L, Zs.shape[1]))
    for l in range(L):
        members = ys == l
        if not members.any():
            raise InputError("missing-label", f"label {l} has no support example")
        anchors[l] = Zs[members].mean(axis=0)
    Zq = model.encode(x)
    return softmax(Zq @ anchors.T)


def _pool(cluster: list[TaskDataset]) -> tuple[np.ndarray, np.ndarray]:
    Xs = np.vstack([t.train[0] for t in cluster])
    ys = np.concatenate([t.train[1] for t in cluster])
    return Xs, ys


def train_cluster_model(
    cluster: list[TaskDataset],
    kind: str,
    config: TrainConfig | None = None,
    cluster_id: int = 0,
) -> ClusterModel:
    """Fit one model of the requested kind on all tasks in the cluster."""
    config = config or TrainConfig()
    if kind not in KINDS:
        raise InputError("bad-kind", f"kind must be one of {KINDS}")
    if not cluster:
        raise InputError("empty-cluster", "cannot train on an empty cluster")
    dims = {t.dim for t in cluster}
    if len(dims) != 1:
        raise InputError("dim-mismatch", "cluster tasks disagree on feature dimension")
    d = dims.pop()
    h = config.hidden
    rng = derive_rng(config.seed, "cluster", cluster_id, kind)

    if kind == "shared_classifier":
        counts = {t.label_count for t in cluster}
        if len(counts) != 1:
            raise InputError(
                "label-space-mismatch",
                "shared_classifier needs identical label spaces across the cluster",
            )
        L = counts.pop()
        X, y = _pool(cluster)
        if X.shape[0] == 0:
            raise InputError("empty-train", "cluster has no training data")
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
        return ClusterModel(cluster_id=cluster_id, kind=kind, W_enc=W_e, b_enc=b_e,
                            W_cls=W_c, b_cls=b_c, label_count=L)

    if kind == "shared_encoder_multihead":
        W_e = 0.01 * rng.standard_normal((d, h))
        b_e = np.zeros(h)
        heads = {}
        for t in cluster:
            if t.train[0].shape[0] == 0:
                raise InputError("empty-train", f"task {t.task_id} has no training data")
            heads[t.task_id] = (0.01 * rng.standard_normal((h, t.label_count)),
                                np.zeros(t.label_count))
        for _ in range(config.epochs):
            for t in cluster:
                X, y = t.train
                W_c, b_c = heads[t.task_id]
                order = rng.permutation(X.shape[0])
                for start in range(0, X.shape[0], config.batch_size):
                    idx = order[start:start + config.batch_size]
                    Xb, yb = X[idx], y[idx]
                    Z = Xb @ W_e + b_e
                    G = (softmax(Z @ W_c + b_c) - _onehot(yb, t.label_count)) / len(idx)
                    dZ = G @ W_c.T
                    W_c -= config.lr * (Z.T @ G)
                    b_c -= config.lr * G.sum(axis=0)
                    W_e -= config.lr * (Xb.T @ dZ)
                    b_e -= config.lr * dZ.sum(axis=0)
                heads[t.task_id] = (W_c, b_c)
        return ClusterModel(cluster_id=cluster_id, kind=kind, W_enc=W_e, b_enc=b_e, heads=heads)

    # metric_encoder: episodic training; each episode draws one anchor per
    # label and a query batch from one task, then steps the encoder on the
    # softmax loss over anchor-query inner products.
    W = 0.01 * rng.standard_normal((d, h))
    b = np.zeros(h)
    episodes = config.epochs * len(cluster)
    for ep in range(episodes):
        t = cluster[ep % len(cluster)]
        X, y = t.train
        if X.shape[0] == 0:
            raise InputError("empty-train", f"task {t.task_id} has no training data")
        labels = np.unique(y)
        if labels.size < 2:
            continue
        anchor_idx = np.array([rng.choice(np.flatnonzero(y == l)) for l in labels])
        q_idx = rng.choice(X.shape[0], size=min(config.batch_size, X.shape[0]), replace=False)
        Xa = X[anchor_idx]
        Xq, yq = X[q_idx], y[q_idx]
        pos = np.searchsorted(labels, yq)
        keep = np.isin(yq, labels)
        Xq, pos = Xq[keep], pos[keep]
        if Xq.shape[0] == 0:
            continue
        Ua = Xa @ W + b
        Vq = Xq @ W + b
        P = softmax(Vq @ Ua.T)
        G = (P - _onehot(pos, labels.size)) / Xq.shape[0]
        # logit_{ql} = u_l . v_q, so dW = x_l^T (g_ql v_q) + x_q^T (g_ql u_l)
        dW = Xa.T @ (G.T @ Vq) + Xq.T @ (G @ Ua)
        db = (G @ Ua).sum(axis=0) + (G.T @ Vq).sum(axis=0)
        W -= config.lr * dW
        b -= config.lr * db
    return ClusterModel(cluster_id=cluster_id, kind=kind, W_enc=W, b_enc=b)


@dataclass
class CombineConfig:
    steps: int = 500
    lr: float = 0.1

    def __post_init__(self):
        if self.steps < 1 or self.lr <= 0:
            raise InputError("bad-config", "steps and lr must be positive")


@dataclass
class CombinationWeights:
    logits: np.ndarray
    indices: list[int]  # positions of the participating models in the input list

    @property
    def alpha(self) -> np.ndarray:
        z = self.logits - self.logits.max()
        e = np.exp(z)
        return e / e.sum()


class MixturePredictor:
    """Convex combination of frozen cluster predictors for one few-shot task."""

    def __init__(self, models, weights: CombinationWeights, task: FewShotTask):
        self.models = models
        self.weights = weights
        self.task = task
        self.used_fallback = False

    def _component_probs(self, X) -> np.ndarray:
        cols = []
        for idx in self.weights.indices:
            cols.append(_model_proba(self.models[idx], X, self.task))
        return np.stack(cols, axis=0)  # (K, m, L)

    def predict_proba(self, X) -> np.ndarray:
        P = self._component_probs(X)
        return np.tensordot(self.weights.alpha, P, axes=1)

    def accuracy(self, X, y) -> float:
        y = np.asarray(y, dtype=int)
        return float(np.mean(self.predict_proba(X).argmax(axis=1) == y))


class SingleTaskPredictor:
    """A model trained on the support set alone (the fallback path)."""

    def __init__(self, model: TaskModel):
        self.model = model
        self.used_fallback = True

    def predict_proba(self, X) -> np.ndarray:
        return softmax(self.model.logits(np.atleast_2d(np.asarray(X, dtype=float))))

    def accuracy(self, X, y) -> float:
        y = np.asarray(y, dtype=int)
        return float(np.mean(self.predict_proba(X).argmax(axis=1) == y))


def _model_proba(model: ClusterModel, X, task: FewShotTask) -> np.ndarray:
    if model.kind == "metric_encoder":
        return model.predict_proba(X, support=task.support)
    return model.predict_proba(X)


def _compatible(model: ClusterModel, task: FewShotTask) -> bool:
    if model.dim != task.dim:
        return False
    if model.kind == "metric_encoder":
        return True
    if model.kind == "shared_classifier":
        return model.label_count == task.label_count
    return False  # per-task heads cannot score an unseen task


def fsl_combine(
    models: list[ClusterModel],
    task: FewShotTask,
    config: CombineConfig | None = None,
) -> tuple[CombinationWeights, MixturePredictor]:
    """Learn mixture weights over cluster predictors on the support set.

    Only the K mixture logits are trained; the cluster models stay frozen.
    Models that cannot emit a distribution over the task's label space are
    left out of the mixture.
    """
    config = config or CombineConfig()
    indices = [i for i, m in enumerate(models) if _compatible(m, task)]
    if not indices:
        raise InputError("no-compatible-cluster", "no cluster model covers the label space")
    Xs, ys = task.support
    # Q[k, i] = model k's probability of the true label of support example i
    Q = np.stack([
        _model_proba(models[i], Xs, task)[np.arange(len(ys)), ys]
        for i in indices
    ])
    Q = np.maximum(Q, 1e-300)
    logits = np.zeros(len(indices))
    for _ in range(config.steps):
        z = logits - logits.max()
        alpha = np.exp(z)
        alpha /= alpha.sum()
        mix = alpha @ Q
        g_alpha = -(Q / mix).mean(axis=1)
        g_logits = alpha * (g_alpha - alpha @ g_alpha)
        logits = logits - config.lr * g_logits
    weights = CombinationWeights(logits=logits, indices=indices)
    return weights, MixturePredictor(models, weights, task)


def adaptive_fsl(
    models: list[ClusterModel],
    task: FewShotTask,
    threshold: float = 0.20,
    fallback_config: TrainConfig | None = None,
    combine_config: CombineConfig | None = None,
):
    """Mixture prediction with a fallback to support-set-only training.

    When no cluster model beats `threshold` accuracy on the support set the
    clusters evidently do not cover the task, so a fresh model is trained on
    the support set instead.
    """
    if not 0 <= threshold < 1:
        raise InputError("bad-threshold", "threshold must lie in [0, 1)")
    Xs, ys = task.support
    best = 0.0
    for m in models:
        if not _compatible(m, task):
            continue
        acc = float(np.mean(_model_proba(m, Xs, task).argmax(axis=1) == ys))
        best = max(best, acc)
    if best <= threshold:
        d = task.dim
        ds = TaskDataset(
            task_id="support-only",
            label_count=task.label_count,
            train=task.support,
            valid=(np.zeros((0, d)), np.zeros(0, dtype=int)),
            test=(np.zeros((0, d)), np.zeros(0, dtype=int)),
        )
        return SingleTaskPredictor(train_single_task(ds, fallback_config or TrainConfig()))
    _, predictor = fsl_combine(models, task, combine_config)
    return predictor
