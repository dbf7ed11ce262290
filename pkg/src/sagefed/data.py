"""Synthetic tasks, Dirichlet client partitioning, and feature augmentation.

The partition produces per-client shards whose labeled and unlabeled class
mixes are drawn independently, so clients differ both from each other and
internally between their two pools. Unlabeled samples keep their true label
in storage for diagnostics; the training path reads features only.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, replace

import numpy as np


@dataclass(frozen=True)
class Sample:
    features: np.ndarray
    label: int


@dataclass(frozen=True)
class SyntheticTaskSpec:
    """Gaussian-mixture classification task: one isotropic blob per class."""

    classes: int = 10
    input_dim: int = 10
    samples_per_class: int = 120
    class_separation: float = 1.5
    noise_scale: float = 1.0

    def __post_init__(self) -> None:
        if self.classes < 2:
            raise ValueError(f"need >= 2 classes, got {self.classes}")
        if self.samples_per_class < 1:
            raise ValueError(f"need >= 1 sample per class, got {self.samples_per_class}")
        if self.input_dim < 1:
            raise ValueError(f"input_dim must be >= 1, got {self.input_dim}")


@dataclass(frozen=True)
class LabeledData:
    """Feature matrix plus integer labels, row-aligned."""

    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "features", np.asarray(self.features, dtype=np.float64))
        object.__setattr__(self, "labels", np.asarray(self.labels, dtype=np.int64))
        if self.features.shape[0] != self.labels.shape[0]:
            raise ValueError("features and labels row counts differ")

    def __len__(self) -> int:
        return self.features.shape[0]


def generate_synthetic(task: SyntheticTaskSpec, seed: int) -> LabeledData:
    """Deterministic mixture dataset: class means scaled by class_separation,
    samples_per_class isotropic-Gaussian draws around each."""
    rng = np.random.default_rng(seed)
    means = rng.normal(0.0, 1.0, (task.classes, task.input_dim)) * task.class_separation
    features = np.concatenate(
        [means[c] + rng.normal(0.0, task.noise_scale, (task.samples_per_class, task.input_dim))
         for c in range(task.classes)]
    )
    labels = np.repeat(np.arange(task.classes), task.samples_per_class)
    return LabeledData(features, labels)


def generate_with_holdout(
    task: SyntheticTaskSpec, seed: int, test_per_class: int
) -> tuple[LabeledData, LabeledData]:
    """Single generation split positionally into train/test per class.

    The train half is a function of (task, seed, test_per_class): drawing
    train and test from one stream keeps the pair jointly deterministic.
    """
    if test_per_class < 1:
        raise ValueError(f"test_per_class must be >= 1, got {test_per_class}")
    n = task.samples_per_class
    full = generate_synthetic(replace(task, samples_per_class=n + test_per_class), seed)
    block = n + test_per_class
    train_idx = np.concatenate([np.arange(c * block, c * block + n) for c in range(task.classes)])
    test_idx = np.concatenate([np.arange(c * block + n, (c + 1) * block) for c in range(task.classes)])
    return (
        LabeledData(full.features[train_idx], full.labels[train_idx]),
        LabeledData(full.features[test_idx], full.labels[test_idx]),
    )


@dataclass(frozen=True)
class PartitionConfig:
    num_clients: int
    dirichlet_alpha: float
    label_fraction: float
    seed: int
    classes: int
    samples_per_class: int

    def __post_init__(self) -> None:
        if self.num_clients < 1:
            raise ValueError(f"num_clients must be >= 1, got {self.num_clients}")
        if not self.dirichlet_alpha > 0:
            raise ValueError(f"dirichlet_alpha must be > 0, got {self.dirichlet_alpha}")
        if not 0 < self.label_fraction < 1:
            raise ValueError(f"label_fraction must be in (0,1), got {self.label_fraction}")


@dataclass
class ClientShard:
    """One client's data. Unlabeled true labels exist for diagnostics only;
    training code reads unlabeled_features and never the label array.

    The last n_copies unlabeled rows are label-stripped duplicates of this
    client's labeled samples; rows before them are unlabeled originals.
    """

    client_id: int
    labeled_features: np.ndarray
    labeled_labels: np.ndarray
    unlabeled_features: np.ndarray
    unlabeled_true_labels: np.ndarray
    n_copies: int

    def __post_init__(self) -> None:
        if self.labeled_features.shape[0] != self.labeled_labels.shape[0]:
            raise ValueError("labeled features/labels row counts differ")
        if self.unlabeled_features.shape[0] != self.unlabeled_true_labels.shape[0]:
            raise ValueError("unlabeled features/labels row counts differ")
        if not 0 <= self.n_copies <= self.unlabeled_features.shape[0]:
            raise ValueError("n_copies exceeds unlabeled pool size")
        if self.n_labeled + self.n_unlabeled < 1:
            raise ValueError(f"client {self.client_id} has no data")

    @property
    def n_labeled(self) -> int:
        return self.labeled_features.shape[0]

    @property
    def n_unlabeled(self) -> int:
        return self.unlabeled_features.shape[0]

    @property
    def n_originals(self) -> int:
        return self.n_unlabeled - self.n_copies

    def labeled_samples(self) -> list[Sample]:
        return [Sample(f, int(l)) for f, l in zip(self.labeled_features, self.labeled_labels)]

    def unlabeled_samples(self) -> list[Sample]:
        """Diagnostic view only: exposes the hidden true labels."""
        return [Sample(f, int(l)) for f, l in zip(self.unlabeled_features, self.unlabeled_true_labels)]


def dirichlet_partition(data: LabeledData, cfg: PartitionConfig) -> list[ClientShard]:
    """Split a dataset into per-client shards with Dirichlet class skew.

    Per class: shuffle, peel off round(label_fraction * n_c) rows as the
    labeled pool, then assign each pool to clients by an independent
    Dir(alpha) proportion draw and a multinomial count draw. A client left
    with zero labeled samples is repaired by moving one sample of its most
    probable class from the client holding the most of that class. Finally
    each client's labeled samples are appended, stripped, to its unlabeled
    pool.
    """
    rng = np.random.default_rng(cfg.seed)
    K, C = cfg.num_clients, cfg.classes
    lab_idx: list[list[np.ndarray]] = [[] for _ in range(K)]
    unlab_idx: list[list[np.ndarray]] = [[] for _ in range(K)]
    lab_props = np.zeros((C, K))
    for c in range(C):
        pool = rng.permutation(np.flatnonzero(data.labels == c))
        n_lab = int(round(cfg.label_fraction * pool.size))
        for name, part in (("labeled", pool[:n_lab]), ("unlabeled", pool[n_lab:])):
            props = rng.dirichlet(np.full(K, cfg.dirichlet_alpha))
            if name == "labeled":
                lab_props[c] = props
            counts = rng.multinomial(part.size, props)
            for k, chunk in enumerate(np.split(part, np.cumsum(counts)[:-1])):
                (lab_idx if name == "labeled" else unlab_idx)[k].append(chunk)

    flat_lab = [np.concatenate(chunks) if chunks else np.array([], dtype=int) for chunks in lab_idx]
    flat_unlab = [np.concatenate(chunks) if chunks else np.array([], dtype=int) for chunks in unlab_idx]
    _repair_empty_labeled(flat_lab, lab_props, data.labels)

    shards = []
    for k in range(K):
        li, ui = flat_lab[k], flat_unlab[k]
        shards.append(
            ClientShard(
                client_id=k,
                labeled_features=data.features[li],
                labeled_labels=data.labels[li],
                unlabeled_features=np.concatenate([data.features[ui], data.features[li]]),
                unlabeled_true_labels=np.concatenate([data.labels[ui], data.labels[li]]),
                n_copies=li.size,
            )
        )
    return shards


def _repair_empty_labeled(flat_lab: list[np.ndarray], lab_props: np.ndarray, labels: np.ndarray) -> None:
    K = len(flat_lab)
    for k in range(K):
        if flat_lab[k].size > 0:
            continue
        # classes by this client's draw probability, ties to the lower index
        preference = np.argsort(-lab_props[:, k], kind="stable")
        moved = False
        for c in preference:
            counts = [
                (labels[flat_lab[j]] == c).sum() if j != k and flat_lab[j].size >= 2 else 0
                for j in range(K)
            ]
            donor = int(np.argmax(counts))
            if counts[donor] == 0:
                continue
            of_class = np.flatnonzero(labels[flat_lab[donor]] == c)
            take = of_class[-1]
            flat_lab[k] = np.array([flat_lab[donor][take]])
            flat_lab[donor] = np.delete(flat_lab[donor], take)
            moved = True
            break
        if not moved:
            raise ValueError(f"cannot repair client {k}: no donor has a spare labeled sample")


def class_distribution(pool, num_classes: int) -> np.ndarray:
    """Empirical class frequencies over a pool of Samples or raw labels."""
    if len(pool) == 0:
        raise ValueError("cannot take class distribution of an empty pool")
    first = pool[0]
    labels = np.asarray([s.label for s in pool] if isinstance(first, Sample) else pool, dtype=int)
    if labels.min() < 0 or labels.max() >= num_classes:
        raise ValueError("labels outside [0, num_classes)")
    counts = np.bincount(labels, minlength=num_classes)
    return counts / counts.sum()


@dataclass(frozen=True)
class AugmentConfig:
    """Weak/strong perturbation scales, tied to the task's feature scale."""

    sigma_weak: float
    sigma_strong: float
    p_drop: float = 0.1

    @classmethod
    def for_feature_scale(cls, scale: float) -> "AugmentConfig":
        return cls(sigma_weak=0.05 * scale, sigma_strong=0.2 * scale, p_drop=0.1)


def weak_augment(x: np.ndarray, sigma: float, rng: np.random.Generator) -> np.ndarray:
    return x + rng.normal(0.0, sigma, x.shape)


def strong_augment(x: np.ndarray, sigma: float, p_drop: float, rng: np.random.Generator) -> np.ndarray:
    """Heavier noise plus independent coordinate dropout."""
    noisy = x + rng.normal(0.0, sigma, x.shape)
    return noisy * (rng.random(x.shape) >= p_drop)


def weak_augment_batch(X: np.ndarray, sigma: float, rng: np.random.Generator) -> np.ndarray:
    return X + rng.normal(0.0, sigma, X.shape)


def strong_augment_batch(X: np.ndarray, sigma: float, p_drop: float, rng: np.random.Generator) -> np.ndarray:
    noisy = X + rng.normal(0.0, sigma, X.shape)
    return noisy * (rng.random(X.shape) >= p_drop)


_POOLS = ("labeled", "unlabeled", "unlabeled_copy")


def export_shards(shards: list[ClientShard], path: str) -> None:
    """One JSON object per line: client id, pool tag, true label, features.

    Copies are tagged so an importer can reconstruct pools exactly; float
    formatting is repr-based, so identical shards serialize byte-identically.
    """
    with open(path, "w") as f:
        for shard in shards:
            rows = (
                [("labeled", shard.labeled_features, shard.labeled_labels, range(shard.n_labeled))]
                + [("unlabeled", shard.unlabeled_features, shard.unlabeled_true_labels, range(shard.n_originals))]
                + [("unlabeled_copy", shard.unlabeled_features, shard.unlabeled_true_labels,
                    range(shard.n_originals, shard.n_unlabeled))]
            )
            for pool, feats, labs, idx in rows:
                for i in idx:
                    rec = {
                        "client": shard.client_id,
                        "features": [float(v) for v in feats[i]],
                        "label": int(labs[i]),
                        "pool": pool,
                    }
                    f.write(json.dumps(rec, sort_keys=True) + "\n")


def import_shards(path: str) -> list[ClientShard]:
    by_client: dict[int, dict[str, list]] = {}
    with open(path) as f:
        for line_no, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            if rec.get("pool") not in _POOLS:
                raise ValueError(f"line {line_no}: unknown pool tag {rec.get('pool')!r}")
            k = int(rec["client"])
            slot = by_client.setdefault(k, {p: [] for p in _POOLS})
            slot[rec["pool"]].append((np.asarray(rec["features"], dtype=np.float64), int(rec["label"])))
    shards = []
    for k in sorted(by_client):
        slot = by_client[k]
        lab = slot["labeled"]
        unlab = slot["unlabeled"] + slot["unlabeled_copy"]
        d = len(lab[0][0]) if lab else len(unlab[0][0])
        shards.append(
            ClientShard(
                client_id=k,
                labeled_features=np.array([f for f, _ in lab]).reshape(len(lab), d),
                labeled_labels=np.array([l for _, l in lab], dtype=np.int64),
                unlabeled_features=np.array([f for f, _ in unlab]).reshape(len(unlab), d),
                unlabeled_true_labels=np.array([l for _, l in unlab], dtype=np.int64),
                n_copies=len(slot["unlabeled_copy"]),
            )
        )
    return shards
