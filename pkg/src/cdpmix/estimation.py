"""Posterior summarisation: pairwise-coincidence similarity, expected pairwise
loss, loss-optimal partition search, and per-cluster profile summaries."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import ValidationError
from .partitions import MAX_ENUM_N, Partition, enumerate_partitions


class SimilarityMatrix:
    """Pairwise coincidence counts over sampled partitions.

    ``matrix[i, j]`` is the fraction of samples placing items i and j in the
    same cluster (diagonal exactly one). Accumulators merge associatively,
    so per-chain counts can be combined afterwards.
    """

    def __init__(self, counts: np.ndarray, sample_count: int):
        counts = np.asarray(counts)
        if counts.ndim != 2 or counts.shape[0] != counts.shape[1]:
            raise ValidationError("counts must be a square matrix")
        if sample_count < 1:
            raise ValidationError("sample_count must be >= 1")
        self.counts = counts.astype(np.int64)
        self.sample_count = int(sample_count)

    @property
    def n(self) -> int:
        return self.counts.shape[0]

    @property
    def matrix(self) -> np.ndarray:
        rho = self.counts / self.sample_count
        np.fill_diagonal(rho, 1.0)
        return rho

    def merge(self, other: "SimilarityMatrix") -> "SimilarityMatrix":
        if other.n != self.n:
            raise ValidationError("cannot merge accumulators of different sizes")
        return SimilarityMatrix(self.counts + other.counts,
                                self.sample_count + other.sample_count)


def _labels_of(sample) -> Sequence[int]:
    return sample.labels if hasattr(sample, "labels") else sample


def accumulate_similarity(samples: Iterable) -> SimilarityMatrix:
    """Coincidence accumulator over allocation vectors (or trace records)."""
    counts = None
    total = 0
    for sample in samples:
        labels = np.asarray(_labels_of(sample), dtype=np.int64)
        if counts is None:
            counts = np.zeros((labels.size, labels.size), dtype=np.int64)
        elif labels.size != counts.shape[0]:
            raise ValidationError("all samples must allocate the same items")
        onehot = (labels[:, None] == labels[None, :])
        counts += onehot
        total += 1
    if counts is None:
        raise ValidationError("no samples given")
    return SimilarityMatrix(counts, total)


@dataclass(frozen=True)
class LossSpec:
    """Pairwise loss weights: a false positive is a pair clustered together in
    the estimate but apart under the posterior draw, a false negative the
    reverse. Equal weights by default."""

    false_positive: float = 1.0
    false_negative: float = 1.0

    def __post_init__(self):
        if self.false_positive < 0 or self.false_negative < 0:
            raise ValidationError("loss weights must be >= 0")
        if self.false_positive == 0 and self.false_negative == 0:
            raise ValidationError("at least one loss weight must be positive")


def _together(p: Partition) -> np.ndarray:
    labels = np.asarray(p.allocation())
    return labels[:, None] == labels[None, :]


def expected_pairwise_loss(p: Partition, rho: np.ndarray, loss: LossSpec = LossSpec()) -> float:
    """Posterior expected pairwise loss of estimating with partition ``p``.

    Sums, over unordered item pairs, the false-positive weight times
    (1 - coincidence) for pairs joined by ``p`` and the false-negative
    weight times the coincidence for pairs split by ``p``.
    """
    rho = np.asarray(rho, dtype=float)
    if rho.shape != (p.n, p.n):
        raise ValidationError("similarity matrix shape does not match partition size")
    together = _together(p)
    off = ~np.eye(p.n, dtype=bool)
    fp = loss.false_positive * ((1.0 - rho) * (together & off)).sum()
    fn = loss.false_negative * (rho * (~together & off)).sum()
    return float(0.5 * (fp + fn))


def _pair_score(rho: np.ndarray, loss: LossSpec) -> np.ndarray:
    """Per-pair cost of being joined: positive entries favour splitting."""
    score = loss.false_positive * (1.0 - rho) - loss.false_negative * rho
    np.fill_diagonal(score, 0.0)
    return score


def optimal_partition(rho: np.ndarray, loss: LossSpec = LossSpec(), *,
                      strategy: str = "greedy") -> Partition:
    """Loss-minimising partition under the pairwise-coincidence loss.

    ``exact`` enumerates every partition (guarded to small n) and returns the
    canonically-first argmin. ``greedy`` merges agglomeratively from
    singletons, then runs single-item relocation passes to a fixed point;
    its loss never exceeds the all-singletons or one-cluster baselines.
    """
    rho = np.asarray(rho, dtype=float)
    n = rho.shape[0]
    if rho.shape != (n, n):
        raise ValidationError("similarity matrix must be square")
    if strategy == "exact":
        if n > MAX_ENUM_N:
            raise ValidationError(f"exact search limited to n <= {MAX_ENUM_N}")
        best, best_loss = None, np.inf
        for p in enumerate_partitions(n):
            val = expected_pairwise_loss(p, rho, loss)
            if val < best_loss - 1e-12:
                best, best_loss = p, val
        return best
    if strategy != "greedy":
        raise ValidationError(f"unknown strategy {strategy!r}")
    return _greedy_partition(rho, loss)


def _greedy_partition(rho: np.ndarray, loss: LossSpec) -> Partition:
    n = rho.shape[0]
    score = _pair_score(rho, loss)
    clusters: list[list[int]] = [[i] for i in range(n)]

    # agglomerative sweep: take the merge with the largest strict decrease.
    # pair_cost[a, b] tracks the loss change of joining clusters a and b and
    # updates additively under merges.
    pair_cost = score.copy()
    while len(clusters) > 1:
        d = len(clusters)
        iu = np.triu_indices(d, 1)
        vals = pair_cost[iu]
        k = int(vals.argmin())
        if vals[k] >= -1e-12:
            break
        a, b = int(iu[0][k]), int(iu[1][k])
        clusters[a] = sorted(clusters[a] + clusters[b])
        merged = pair_cost[a] + pair_cost[b]
        pair_cost[a, :] = merged
        pair_cost[:, a] = merged
        pair_cost[a, a] = 0.0
        pair_cost = np.delete(np.delete(pair_cost, b, axis=0), b, axis=1)
        del clusters[b]

    # single-item relocation passes until a fixed point. item_cost[i, c] is
    # the loss change of item i joining cluster c (0 for a new singleton).
    labels = np.empty(n, dtype=int)
    for ci, c in enumerate(clusters):
        labels[c] = ci
    onehot = np.zeros((n, len(clusters)))
    onehot[np.arange(n), labels] = 1.0
    item_cost = score @ onehot
    moved = True
    while moved:
        moved = False
        for i in range(n):
            src = int(labels[i])
            stay = float(item_cost[i, src])
            others = item_cost[i].copy()
            others[src] = np.inf
            dst = int(others.argmin())
            best_existing = float(others[dst])
            if min(best_existing, 0.0) >= stay - 1e-12:
                continue
            clusters[src].remove(i)
            item_cost[:, src] -= score[:, i]
            if best_existing <= 0.0:
                clusters[dst].append(i)
                clusters[dst].sort()
                item_cost[:, dst] += score[:, i]
            else:
                clusters.append([i])
                item_cost = np.hstack([item_cost, score[:, [i]]])
                dst = len(clusters) - 1
            labels[i] = dst
            if not clusters[src]:
                clusters.pop(src)
                item_cost = np.delete(item_cost, src, axis=1)
                labels[labels > src] -= 1
            moved = True
    return Partition(clusters)


@dataclass(frozen=True)
class ClusterSummary:
    """Per-coordinate mean and normal-approximation 95% band for one cluster."""

    items: tuple[int, ...]
    mean: np.ndarray
    lower: np.ndarray
    upper: np.ndarray


def cluster_summaries(p: Partition, data: np.ndarray) -> list[ClusterSummary]:
    """Mean profile and 95% interval (mean +/- 1.96 sd/sqrt(size)) per cluster.

    Singletons report their raw profile with a degenerate interval.
    """
    data = np.asarray(data, dtype=float)
    if data.ndim != 2 or data.shape[0] != p.n:
        raise ValidationError("data must have one row per item")
    out = []
    for c in p.clusters:
        rows = data[list(c)]
        mean = rows.mean(axis=0)
        if len(c) > 1:
            half = 1.96 * rows.std(axis=0, ddof=1) / np.sqrt(len(c))
        else:
            half = np.zeros(data.shape[1])
        out.append(ClusterSummary(c, mean, mean - half, mean + half))
    return out
