"""Synthetic task families and transfer-score matrices with planted clusters.

Two generators: one fabricates the transfer-score matrix directly (scores
concentrated around a high within-cluster level and a low cross-cluster
level), the other fabricates actual classification tasks as Gaussian blobs
whose class means are shared, up to perturbation, within a cluster. The
first exercises the filtering/completion/clustering chain, the second the
multi-task and few-shot learning paths.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError
from .learning import FewShotTask
from .seeding import derive_rng
from .transfer import TaskDataset, TransferMatrix, sample_task_pairs


def balanced_membership(n: int, K: int) -> np.ndarray:
    """Contiguous cluster blocks whose sizes differ by at most one."""
    if K < 1 or K > n:
        raise InputError("bad-K", f"need 1 <= K <= n, got K={K}, n={n}")
    base, extra = divmod(n, K)
    sizes = [base + (1 if c < extra else 0) for c in range(K)]
    return np.repeat(np.arange(K), sizes)


def _anchored_pairs(membership: np.ndarray, budget: int, rng) -> set[tuple[int, int]]:
    """Pair sample that keeps the planted clustering identifiable.

    A uniform sample this small routinely leaves tasks with no within-cluster
    pair, and no method can then place them. Spend the budget on a random
    spanning tree inside each cluster, then one cross-cluster pair per task,
    then uniform draws from the remaining pairs.
    """
    n = membership.size
    K = membership.max() + 1
    clusters = [np.flatnonzero(membership == c) for c in range(K)]
    need = sum(max(len(c) - 1, 0) for c in clusters) + (n + 1) // 2
    if budget < need:
        raise InputError(
            "infeasible-budget",
            f"anchored sampling needs at least {need} pairs for this plant, got {budget}",
        )
    pairs: set[tuple[int, int]] = set()

    def add(i, j):
        pairs.add((min(i, j), max(i, j)))

    for members in clusters:
        path = rng.permutation(members)
        for a, b in zip(path, path[1:]):
            add(a, b)
    covered = np.zeros(n, dtype=bool)
    for i in rng.permutation(n):
        if covered[i]:
            continue
        others = np.flatnonzero(membership != membership[i])
        uncovered = others[~covered[others]]
        j = rng.choice(uncovered) if uncovered.size else rng.choice(others)
        add(i, j)
        covered[i] = covered[j] = True
    rest = [(i, j) for i in range(n) for j in range(i + 1, n) if (i, j) not in pairs]
    extra = budget - len(pairs)
    if extra > 0:
        for idx in rng.choice(len(rest), size=min(extra, len(rest)), replace=False):
            add(*rest[idx])
    return pairs


def synthetic_transfer_matrix(
    n: int,
    K: int,
    pair_budget: int,
    seed: int = 0,
    within: tuple[float, float] = (0.9, 0.05),
    cross: tuple[float, float] = (0.1, 0.05),
    sampling: str = "uniform",
) -> tuple[TransferMatrix, np.ndarray]:
    """Sampled pairwise transfer scores around planted cluster levels.

    Both directions of a sampled pair are drawn independently, so the matrix
    is asymmetric the way a real transfer evaluation would be. Scores are
    clipped to [0, 1]. sampling="uniform" draws pairs uniformly at random;
    "anchored" guarantees every task at least one within-cluster and one
    cross-cluster pair so the plant remains identifiable at small budgets.
    """
    if sampling not in ("uniform", "anchored"):
        raise InputError("bad-config", "sampling must be 'uniform' or 'anchored'")
    membership = balanced_membership(n, K)
    if sampling == "anchored":
        pairs = _anchored_pairs(membership, pair_budget, derive_rng(seed, "anchored", n, K))
    else:
        pairs = sample_task_pairs(n, pair_budget, seed=seed)
    rng = derive_rng(seed, "synthscores", n, K)
    scores = np.zeros((n, n))
    observed = np.zeros((n, n), dtype=bool)
    for i, j in sorted(pairs):
        mean, sd = within if membership[i] == membership[j] else cross
        scores[i, j] = np.clip(mean + sd * rng.standard_normal(), 0.0, 1.0)
        scores[j, i] = np.clip(mean + sd * rng.standard_normal(), 0.0, 1.0)
        observed[i, j] = observed[j, i] = True
    d = np.arange(n)
    scores[d, d] = 1.0
    observed[d, d] = True
    return TransferMatrix(scores=scores, observed=observed), membership


@dataclass
class FamilyConfig:
    dim: int = 8
    label_count: int = 3
    train_per_class: int = 20
    valid_per_class: int = 8
    test_per_class: int = 12
    separation: float = 2.5   # spread of class means within a prototype
    task_noise: float = 0.3   # how far a task's means drift from its prototype
    sample_spread: float = 0.8

    def __post_init__(self):
        if self.dim < 1 or self.label_count < 2:
            raise InputError("bad-config", "need dim >= 1 and at least 2 labels")
        if min(self.train_per_class, self.valid_per_class, self.test_per_class) < 1:
            raise InputError("bad-config", "per-class split sizes must be positive")


def _sample_task(task_id: str, means: np.ndarray, fc: FamilyConfig, rng) -> TaskDataset:
    L, d = means.shape
    splits = {}
    for name, per in (("train", fc.train_per_class),
                      ("valid", fc.valid_per_class),
                      ("test", fc.test_per_class)):
        X = np.vstack([means[l] + fc.sample_spread * rng.standard_normal((per, d))
                       for l in range(L)])
        y = np.repeat(np.arange(L), per)
        order = rng.permutation(len(y))
        splits[name] = (X[order], y[order])
    return TaskDataset(task_id=task_id, label_count=L,
                       train=splits["train"], valid=splits["valid"], test=splits["test"])


def cluster_prototypes(K: int, fc: FamilyConfig, seed: int, opposed: bool = False) -> np.ndarray:
    """One (label_count x dim) class-mean matrix per cluster.

    With opposed=True every cluster shares the same class means but shifts
    the label names cyclically, so models from one cluster are actively
    wrong on another cluster's tasks rather than merely uninformative.
    """
    rng = derive_rng(seed, "prototypes", K, fc.dim, fc.label_count)
    if not opposed:
        return fc.separation * rng.standard_normal((K, fc.label_count, fc.dim))
    if K > fc.label_count:
        raise InputError("bad-K", "opposed prototypes need label_count >= K")
    base = fc.separation * rng.standard_normal((fc.label_count, fc.dim))
    return np.stack([np.roll(base, c, axis=0) for c in range(K)])


def make_task_family(
    n_tasks: int,
    K: int,
    fc: FamilyConfig | None = None,
    seed: int = 0,
    opposed: bool = False,
) -> tuple[list[TaskDataset], np.ndarray]:
    """Planted-cluster classification tasks as perturbed Gaussian blobs."""
    fc = fc or FamilyConfig()
    membership = balanced_membership(n_tasks, K)
    protos = cluster_prototypes(K, fc, seed, opposed=opposed)
    tasks = []
    for t in range(n_tasks):
        rng = derive_rng(seed, "task", t)
        means = protos[membership[t]] + fc.task_noise * rng.standard_normal(protos[membership[t]].shape)
        tasks.append(_sample_task(f"task{t:03d}", means, fc, rng))
    return tasks, membership


def make_target_task(
    cluster_id: int,
    K: int,
    fc: FamilyConfig | None = None,
    seed: int = 0,
    tag: int = 0,
    opposed: bool = False,
) -> TaskDataset:
    """A fresh task drawn from an existing cluster's prototype."""
    fc = fc or FamilyConfig()
    protos = cluster_prototypes(K, fc, seed, opposed=opposed)
    if not 0 <= cluster_id < K:
        raise InputError("bad-K", f"cluster_id {cluster_id} outside [0, {K})")
    rng = derive_rng(seed, "target", cluster_id, tag)
    means = protos[cluster_id] + fc.task_noise * rng.standard_normal(protos[cluster_id].shape)
    return _sample_task(f"target-c{cluster_id}-{tag}", means, fc, rng)


def make_outlier_task(K: int, fc: FamilyConfig | None = None, seed: int = 0, tag: int = 0) -> TaskDataset:
    """A task whose class means are unrelated to every cluster prototype."""
    fc = fc or FamilyConfig()
    rng = derive_rng(seed, "outlier", tag)
    means = fc.separation * rng.standard_normal((fc.label_count, fc.dim))
    return _sample_task(f"outlier-{tag}", means, fc, rng)


def make_adversarial_task(
    cluster_id: int,
    K: int,
    fc: FamilyConfig | None = None,
    seed: int = 0,
    tag: int = 0,
) -> TaskDataset:
    """A cluster's task with cyclically relabeled classes.

    Every cluster model recognizes the features but names them wrongly, so
    its support accuracy lands below chance. This is the regime where a
    fallback to support-only training should win.
    """
    fc = fc or FamilyConfig()
    protos = cluster_prototypes(K, fc, seed)
    if not 0 <= cluster_id < K:
        raise InputError("bad-K", f"cluster_id {cluster_id} outside [0, {K})")
    rng = derive_rng(seed, "adversarial", cluster_id, tag)
    means = protos[cluster_id] + fc.task_noise * rng.standard_normal(protos[cluster_id].shape)
    means = np.roll(means, 1, axis=0)
    return _sample_task(f"adversarial-c{cluster_id}-{tag}", means, fc, rng)


def fewshot_from_dataset(ds: TaskDataset, shots: int, seed: int = 0) -> FewShotTask:
    """Support = `shots` training examples per label; query = the test split."""
    if shots < 1:
        raise InputError("bad-config", "shots must be positive")
    X, y = ds.train
    rng = derive_rng(seed, "fewshot", ds.task_id, shots)
    idx = []
    for l in range(ds.label_count):
        pool = np.flatnonzero(y == l)
        if pool.size < shots:
            raise InputError("no-support", f"label {l} has only {pool.size} training examples")
        idx.extend(rng.choice(pool, size=shots, replace=False).tolist())
    idx = np.array(sorted(idx))
    return FewShotTask(support=(X[idx], y[idx]), query=ds.test, label_count=ds.label_count)
