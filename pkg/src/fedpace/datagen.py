"""Synthetic dataset generation and non-IID client partitioning.

The generators are pure functions of (spec, rng): Gaussian class blobs
stand in for embedded text corpora, a label-skew Dirichlet split and a
quantity-skew Dirichlet split distribute them over clients, and a sparse
Dirichlet allocation reveals a handful of gold labels.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import ClientShard, Rng, Sample, largest_remainder


@dataclass(frozen=True)
class SyntheticTaskSpec:
    """Gaussian-blob classification task.

    per_class_count may be one integer (balanced) or a per-class sequence
    (used by the imbalanced stress tasks). class_center_separation is the
    exact pairwise distance between class centers when num_classes <= dim
    (centers are scaled orthonormal directions).
    """

    num_classes: int = 4
    dim: int = 16
    per_class_count: int | tuple[int, ...] = 500
    cluster_spread: float = 0.9
    class_center_separation: float = 4.5
    test_per_class: int = 200
    public_per_class: int = 4

    def train_counts(self) -> list[int]:
        if isinstance(self.per_class_count, int):
            return [self.per_class_count] * self.num_classes
        counts = list(self.per_class_count)
        if len(counts) != self.num_classes:
            raise ValueError("per_class_count sequence must have one entry per class")
        return counts


@dataclass(frozen=True)
class PartitionSpec:
    """How training data and gold labels spread over clients."""

    num_clients: int = 32
    alpha: float = 0.5          # label-skew concentration
    beta: float | None = None   # quantity-skew concentration; None = label-skew mode
    gold_total: int = 64
    gold_gamma: float = 0.1     # gold-label sparsity concentration
    gold_client_cap: int = 32   # xi: number of clients that may own gold
    uniform_labels: bool = False    # explicit alpha -> infinity switch
    uniform_quantity: bool = False  # explicit beta -> infinity switch


@dataclass
class Dataset:
    """A generated task with its server-side splits.

    Sample ids are dense and global: train first, then public, val, test.
    X and y are id-indexed so X[s.id] is the embedding of sample s.
    """

    num_classes: int
    dim: int
    train: list[Sample]
    public: list[Sample]
    val: list[Sample]
    test: list[Sample]
    X: np.ndarray = field(repr=False)
    y: np.ndarray = field(repr=False)

    def embeddings(self, ids: Sequence[int]) -> np.ndarray:
        return self.X[np.asarray(ids, dtype=int)]

    def labels(self, ids: Sequence[int]) -> np.ndarray:
        return self.y[np.asarray(ids, dtype=int)]

    def split_arrays(self, split: str) -> tuple[np.ndarray, np.ndarray]:
        samples = getattr(self, split)
        ids = [s.id for s in samples]
        return self.embeddings(ids), self.labels(ids)


def _class_centers(spec: SyntheticTaskSpec, rng: Rng) -> np.ndarray:
    C, d = spec.num_classes, spec.dim
    if C <= d:
        # QR of a Gaussian matrix gives random orthonormal directions;
        # scaling by sep/sqrt(2) makes every pairwise distance exactly sep.
        g = rng.gen.standard_normal((d, C))
        q, _ = np.linalg.qr(g)
        return (spec.class_center_separation / np.sqrt(2.0)) * q[:, :C].T
    dirs = rng.gen.standard_normal((C, d))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    return spec.class_center_separation * dirs


def _draw_split(centers: np.ndarray, counts: Sequence[int], spread: float, rng: Rng):
    xs, ys = [], []
    for c, count in enumerate(counts):
        xs.append(centers[c] + spread * rng.gen.standard_normal((count, len(centers[c]))))
        ys.append(np.full(count, c, dtype=int))
    return np.concatenate(xs), np.concatenate(ys)


def gen_blobs(spec: SyntheticTaskSpec, rng: Rng) -> Dataset:
    """Generate train/public/val/test splits of Gaussian class blobs.

    All splits are drawn from the same class-conditional distribution with
    disjoint ids. The val split takes ceil(10%) of the held-out draw per
    class and is reserved server-side; public is the tiny labeled split
    used for centroid initialization.
    """
    centers = _class_centers(spec, rng.split("centers"))
    parts: list[tuple[str, np.ndarray, np.ndarray]] = []
    X_tr, y_tr = _draw_split(centers, spec.train_counts(), spec.cluster_spread, rng.split("train"))
    parts.append(("train", X_tr, y_tr))
    X_pub, y_pub = _draw_split(
        centers, [spec.public_per_class] * spec.num_classes, spec.cluster_spread, rng.split("public")
    )
    parts.append(("public", X_pub, y_pub))
    held_rng = rng.split("heldout")
    X_h, y_h = _draw_split(centers, [spec.test_per_class] * spec.num_classes, spec.cluster_spread, held_rng)
    n_val_per_class = max(1, int(np.ceil(0.1 * spec.test_per_class)))
    val_mask = np.zeros(len(y_h), dtype=bool)
    for c in range(spec.num_classes):
        idx = np.nonzero(y_h == c)[0]
        val_mask[idx[:n_val_per_class]] = True
    parts.append(("val", X_h[val_mask], y_h[val_mask]))
    parts.append(("test", X_h[~val_mask], y_h[~val_mask]))

    X_all = np.concatenate([p[1] for p in parts])
    y_all = np.concatenate([p[2] for p in parts])
    splits: dict[str, list[Sample]] = {}
    next_id = 0
    for name, Xp, yp in parts:
        samples = [
            Sample(id=next_id + i, embedding=Xp[i], gold_label=int(yp[i])) for i in range(len(yp))
        ]
        next_id += len(yp)
        splits[name] = samples
    return Dataset(
        num_classes=spec.num_classes,
        dim=spec.dim,
        train=splits["train"],
        public=splits["public"],
        val=splits["val"],
        test=splits["test"],
        X=X_all,
        y=y_all,
    )


def _class_pools(samples: Sequence[Sample], num_classes: int, rng: Rng) -> list[list[int]]:
    pools: list[list[int]] = [[] for _ in range(num_classes)]
    for s in samples:
        if s.gold_label is None:
            raise ValueError("partitioning requires labeled samples")
        pools[s.gold_label].append(s.id)
    for pool in pools:
        rng.gen.shuffle(pool)
    return pools


def _allocate_counts(q: np.ndarray, size: int, stock: np.ndarray) -> np.ndarray:
    """Integer per-class allocation proportional to q, capped by stock.

    When a class pool cannot cover its quota the deficit is re-spread over
    the classes that still have stock, renormalizing the remaining mass of
    q (falling back to stock-proportional weights if q has no mass there).
    """
    take = np.minimum(largest_remainder(q, size), stock)
    deficit = size - int(take.sum())
    while deficit > 0:
        room = stock - take
        open_mask = room > 0
        if not open_mask.any():
            raise ValueError("not enough samples to satisfy the partition")
        weights = np.where(open_mask, q, 0.0)
        if weights.sum() <= 0:
            weights = np.where(open_mask, room.astype(float), 0.0)
        extra = np.minimum(largest_remainder(weights, deficit), room)
        if extra.sum() == 0:
            # every open class got rounded to zero; hand units out greedily
            for c in np.nonzero(open_mask)[0]:
                grant = min(deficit, int(room[c]))
                take[c] += grant
                deficit -= grant
                if deficit == 0:
                    break
            continue
        take += extra
        deficit -= int(extra.sum())
    return take


def partition_labels_dirichlet(
    samples: Sequence[Sample],
    num_clients: int,
    alpha: float,
    rng: Rng,
    uniform: bool = False,
) -> list[ClientShard]:
    """Label-skew partition: each client draws a class mix q_j from a
    symmetric Dirichlet with concentration alpha (times a uniform prior)
    and receives a near-equal share of samples allocated to that mix.

    Small alpha pushes every client toward a single class; the explicit
    `uniform` switch is the exact alpha -> infinity limit. Exhausted class
    pools re-spread their quota over the remaining classes.
    """
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    num_classes = int(max(s.gold_label for s in samples)) + 1
    pools = _class_pools(samples, num_classes, rng.split("pools"))
    stock = np.array([len(p) for p in pools])
    cursors = [0] * num_classes
    sizes = largest_remainder(np.ones(num_clients), len(samples))
    prior = np.full(num_classes, 1.0 / num_classes)
    draw_rng = rng.split("mix")
    shards = []
    for j in range(num_clients):
        q = prior.copy() if uniform else draw_rng.gen.dirichlet(alpha * prior)
        take = _allocate_counts(q, int(sizes[j]), stock)
        ids: list[int] = []
        for c in range(num_classes):
            t = int(take[c])
            ids.extend(pools[c][cursors[c] : cursors[c] + t])
            cursors[c] += t
        stock = stock - take
        shards.append(ClientShard(client_id=j, unlabeled=ids))
    return shards


def partition_quantity_dirichlet(
    samples: Sequence[Sample],
    num_clients: int,
    beta: float,
    rng: Rng,
    uniform: bool = False,
) -> list[ClientShard]:
    """Quantity-skew partition: client sizes follow z ~ Dir_N(beta) scaled
    to the pool size (largest-remainder rounding, so counts conserve
    exactly); label composition is uniform-random."""
    if beta <= 0:
        raise ValueError("beta must be positive")
    if uniform:
        z = np.full(num_clients, 1.0 / num_clients)
    else:
        z = rng.split("sizes").gen.dirichlet(np.full(num_clients, beta))
    counts = largest_remainder(z, len(samples))
    ids = np.array([s.id for s in samples])
    rng.split("shuffle").gen.shuffle(ids)
    shards, start = [], 0
    for j in range(num_clients):
        c = int(counts[j])
        shards.append(ClientShard(client_id=j, unlabeled=list(ids[start : start + c])))
        start += c
    return shards


def assign_gold_labels(
    shards: Sequence[ClientShard],
    gold_total: int,
    gamma: float,
    client_cap: int,
    rng: Rng,
) -> list[ClientShard]:
    """Reveal true labels for gold_total samples, spread over at most
    client_cap clients with quotas z ~ Dir_xi(gamma).

    Small gamma concentrates the gold on a few clients. A client whose
    quota exceeds its local pool spills the excess to the next chosen
    client. Mutates and returns the shards (gold ids move out of the
    unlabeled pool).
    """
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    xi = min(client_cap, len(shards))
    order = sorted(range(len(shards)), key=lambda i: shards[i].client_id)
    chosen = list(rng.split("clients").gen.choice(order, size=xi, replace=False))
    z = rng.split("quota").gen.dirichlet(np.full(xi, gamma))
    quotas = largest_remainder(z, gold_total)
    capacity = np.array([len(shards[i].unlabeled) for i in chosen])
    take = np.minimum(quotas, capacity)
    deficit = gold_total - int(take.sum())
    # spill leftover quota forward over clients that still have room
    k = 0
    while deficit > 0 and k < xi:
        room = int(capacity[k] - take[k])
        grant = min(room, deficit)
        take[k] += grant
        deficit -= grant
        k += 1
    if deficit > 0:
        raise ValueError("chosen clients hold fewer samples than gold_total")
    reveal_rng = rng.split("reveal")
    for pos, i in enumerate(chosen):
        t = int(take[pos])
        if t == 0:
            continue
        shard = shards[i]
        picked = reveal_rng.split(f"client{shard.client_id}").gen.choice(
            np.array(sorted(shard.unlabeled)), size=t, replace=False
        )
        picked_set = set(int(p) for p in picked)
        shard.gold = sorted(set(shard.gold) | picked_set)
        shard.unlabeled = [u for u in shard.unlabeled if u not in picked_set]
    return list(shards)


def partition_dataset(dataset: Dataset, part: PartitionSpec, rng: Rng) -> list[ClientShard]:
    """Apply the configured partition and gold assignment to a dataset."""
    if part.beta is not None or part.uniform_quantity:
        shards = partition_quantity_dirichlet(
            dataset.train,
            part.num_clients,
            part.beta if part.beta is not None else 1.0,
            rng.split("partition"),
            uniform=part.uniform_quantity,
        )
    else:
        shards = partition_labels_dirichlet(
            dataset.train,
            part.num_clients,
            part.alpha,
            rng.split("partition"),
            uniform=part.uniform_labels,
        )
    gold_total = min(part.gold_total, len(dataset.train))
    return assign_gold_labels(shards, gold_total, part.gold_gamma, part.gold_client_cap, rng.split("gold"))
