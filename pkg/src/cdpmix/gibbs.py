"""Collapsed urn-style Gibbs sampling over (coloured) partitions.

One chain owns a mutable ``ChainState``: the current coloured partition plus
per-cluster sufficient statistics and cached log marginal likelihoods, enough
to price any single-item reallocation in O(number of clusters). Plain priors
run as the one-colour case of the same machinery; the coloured priors add a
new-cluster option per colour with the occupancy-tilted weights.

Single-item moves use the prior's urn weights times the conjugate predictive.
Subset moves price each candidate directly through the full partition prior,
so structural constraints (at most one background cluster, bounded component
counts) fall out of the prior's log-zero sentinel with no special cases.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .conjugate import ClusterEvaluator, ClusterStats, DesignBlock, NormalGammaSpec
from .errors import NumericalError, ValidationError
from .partitions import ColouredPartition, Partition
from .priors import (LOG_ZERO, BackgroundDirichletProcess, PartitionPrior, log_eppf)


class NIGEngine:
    """Per-colour marginal-likelihood engine over a fixed dataset.

    Precomputes each item's sufficient-statistic contribution and the
    single-item log marginals, so reallocation weights touch only small
    cached quadratic forms.
    """

    def __init__(self, design: DesignBlock, spec: NormalGammaSpec, Y: np.ndarray):
        self.evaluator = ClusterEvaluator(design, spec)
        self.item_wty, self.item_yty = self.evaluator.prepare(Y)
        self.n_coeffs = spec.n_coeffs
        self._singles = np.array([
            self.evaluator.log_marginal_parts(1, self.item_wty[i], self.item_yty[i])
            for i in range(len(self.item_yty))
        ])

    def empty_stats(self) -> ClusterStats:
        return ClusterStats.empty(self.n_coeffs)

    def stats_of(self, items: Sequence[int]) -> ClusterStats:
        idx = list(items)
        return ClusterStats(len(idx), self.item_wty[idx].sum(axis=0),
                            float(self.item_yty[idx].sum()))

    def add_(self, stats: ClusterStats, i: int) -> None:
        stats.add_(self.item_wty[i], self.item_yty[i])

    def remove_(self, stats: ClusterStats, i: int) -> None:
        stats.remove_(self.item_wty[i], self.item_yty[i])

    def log_marginal(self, stats: ClusterStats) -> float:
        return self.evaluator.log_marginal(stats)

    def log_plus_item(self, stats: ClusterStats, i: int) -> float:
        return self.evaluator.log_marginal_parts(
            stats.count + 1, stats.wty + self.item_wty[i],
            stats.yty + self.item_yty[i])

    def log_plus_block(self, stats: ClusterStats, block: ClusterStats) -> float:
        return self.evaluator.log_marginal_parts(
            stats.count + block.count, stats.wty + block.wty, stats.yty + block.yty)

    def single(self, i: int) -> float:
        return float(self._singles[i])


class FlatEngine:
    """Likelihood stub whose marginals are identically zero (prior-only chains)."""

    def __init__(self, n: int):
        self.n = n

    def empty_stats(self) -> ClusterStats:
        return ClusterStats.empty(0)

    def stats_of(self, items) -> ClusterStats:
        return ClusterStats(len(list(items)), np.zeros(0), 0.0)

    def add_(self, stats, i) -> None:
        stats.count += 1

    def remove_(self, stats, i) -> None:
        stats.count -= 1

    def log_marginal(self, stats) -> float:
        return 0.0

    def log_plus_item(self, stats, i) -> float:
        return 0.0

    def log_plus_block(self, stats, block) -> float:
        return 0.0

    def single(self, i) -> float:
        return 0.0


class _Cluster:
    __slots__ = ("colour", "members", "stats", "log_m")

    def __init__(self, colour: int, members: set[int], stats: ClusterStats, log_m: float):
        self.colour = colour
        self.members = members
        self.stats = stats
        self.log_m = log_m


def _sample_index(log_weights: list[float], rng: np.random.Generator) -> int:
    top = max(log_weights)
    if top == LOG_ZERO:
        raise NumericalError("all reallocation weights vanished")
    weights = [math.exp(x - top) for x in log_weights]
    u = rng.random() * sum(weights)
    acc = 0.0
    for idx, w in enumerate(weights):
        acc += w
        if u < acc:
            return idx
    return len(weights) - 1


@dataclass(frozen=True)
class SweepPlan:
    """Chain schedule: total sweeps, burn-in prefix, thinning, subset-move rate."""

    sweeps: int
    burn_in: int = 0
    thin: int = 1
    subset_move_rate: float = 0.0
    subset_max_size: int = 8
    seed: int | None = None

    def __post_init__(self):
        if self.sweeps < 1:
            raise ValidationError("sweeps must be >= 1")
        if not 0 <= self.burn_in < self.sweeps:
            raise ValidationError("burn_in must lie in [0, sweeps)")
        if self.thin < 1:
            raise ValidationError("thin must be >= 1")
        if not 0.0 <= self.subset_move_rate <= 1.0:
            raise ValidationError("subset_move_rate must lie in [0, 1]")


@dataclass(frozen=True)
class TraceRecord:
    """One retained sweep: canonical snapshot plus its log posterior score."""

    sweep: int
    labels: tuple[int, ...]
    colours: tuple[int, ...]
    degree: int
    colour_degrees: tuple[int, ...]
    log_posterior: float


class ChainState:
    """Mutable sampler state: coloured partition + cached per-cluster quantities."""

    def __init__(self, model: PartitionPrior, engines: Sequence, n: int,
                 rng: np.random.Generator,
                 initial: Partition | ColouredPartition | None = None):
        if len(engines) != model.n_colours:
            raise ValidationError(
                f"model has {model.n_colours} colours but {len(engines)} engines given")
        self.model = model
        self.engines = list(engines)
        self.n = n
        self.rng = rng
        self.clusters: dict[int, _Cluster] = {}
        self.item_cluster = [-1] * n
        self.colour_totals = [0] * model.n_colours
        self._next_cid = 0
        if initial is None:
            initial = self._default_initial()
        self._load(initial)

    # -- construction -----------------------------------------------------

    def _default_initial(self) -> Partition | ColouredPartition:
        col = (BackgroundDirichletProcess.REGULAR
               if isinstance(self.model, BackgroundDirichletProcess) else 0)
        singletons = [[i] for i in range(self.n)]
        if self.model.coloured:
            groups = [[] for _ in range(self.model.n_colours)]
            groups[col] = singletons
            return ColouredPartition(groups, n_colours=self.model.n_colours)
        return Partition(singletons)

    def _load(self, partition: Partition | ColouredPartition) -> None:
        if partition.n != self.n:
            raise ValidationError("partition size does not match data size")
        if isinstance(partition, ColouredPartition):
            if not self.model.coloured:
                raise ValidationError("plain prior cannot hold a coloured partition")
            if partition.n_colours != self.model.n_colours:
                raise ValidationError("partition colour count does not match the model")
            groups = [(col, c) for col, cs in enumerate(partition.clusters_by_colour)
                      for c in cs]
        else:
            if self.model.coloured:
                raise ValidationError("coloured prior requires a coloured partition")
            groups = [(0, c) for c in partition.clusters]
        for col, members in groups:
            eng = self.engines[col]
            stats = eng.stats_of(members)
            cid = self._next_cid
            self._next_cid += 1
            self.clusters[cid] = _Cluster(col, set(members), stats,
                                          eng.log_marginal(stats))
            for i in members:
                self.item_cluster[i] = cid
            self.colour_totals[col] += len(members)

    @classmethod
    def from_partition(cls, model, engines, partition, rng=None) -> "ChainState":
        rng = rng if rng is not None else np.random.default_rng()
        return cls(model, engines, partition.n, rng, initial=partition)

    # -- snapshots ---------------------------------------------------------

    def snapshot(self) -> Partition | ColouredPartition:
        if self.model.coloured:
            groups = [[] for _ in range(self.model.n_colours)]
            for cl in self.clusters.values():
                groups[cl.colour].append(sorted(cl.members))
            return ColouredPartition(groups, n_colours=self.model.n_colours, n=self.n)
        return Partition([sorted(cl.members) for cl in self.clusters.values()], n=self.n)

    def log_likelihood(self) -> float:
        return float(sum(cl.log_m for cl in self.clusters.values()))

    def log_joint(self) -> float:
        """Log prior of the current partition plus all cached cluster marginals."""
        return log_eppf(self.model, self.snapshot()) + self.log_likelihood()

    def refresh_cache_(self) -> float:
        """Recompute every cached log marginal; returns the largest absolute drift."""
        worst = 0.0
        for cl in self.clusters.values():
            fresh = self.engines[cl.colour].log_marginal(cl.stats)
            worst = max(worst, abs(fresh - cl.log_m))
            cl.log_m = fresh
        return worst

    # -- single-item kernel --------------------------------------------------

    def _withdraw(self, i: int) -> None:
        cid = self.item_cluster[i]
        cl = self.clusters[cid]
        cl.members.discard(i)
        self.colour_totals[cl.colour] -= 1
        self.item_cluster[i] = -1
        if not cl.members:
            del self.clusters[cid]
        else:
            eng = self.engines[cl.colour]
            eng.remove_(cl.stats, i)
            cl.log_m = eng.log_marginal(cl.stats)

    def item_candidates(self, i: int):
        """Placement options for withdrawn item i.

        Returns parallel lists: move descriptors ``("existing", cid)`` or
        ``("new", colour)``, their unnormalized log weights, and the log
        marginal the receiving cluster would have after the move.
        """
        order = list(self.clusters.items())
        sizes = [len(cl.members) for _, cl in order]
        colours = [cl.colour for _, cl in order]
        w_exist, w_new = self.model.weight_lists(sizes, colours, self.colour_totals)
        moves, logw, after = [], [], []
        for (cid, cl), w in zip(order, w_exist):
            if w <= 0:
                continue
            lm = self.engines[cl.colour].log_plus_item(cl.stats, i)
            moves.append(("existing", cid))
            logw.append(math.log(w) + lm - cl.log_m)
            after.append(lm)
        for k, w in enumerate(w_new):
            if w <= 0:
                continue
            lm = self.engines[k].single(i)
            moves.append(("new", k))
            logw.append(math.log(w) + lm)
            after.append(lm)
        return moves, logw, after

    def _insert(self, i: int, move: tuple[str, int], log_m_after: float) -> None:
        kind, key = move
        if kind == "existing":
            cl = self.clusters[key]
            cl.members.add(i)
            self.engines[cl.colour].add_(cl.stats, i)
            cl.log_m = log_m_after
            colour = cl.colour
            cid = key
        else:
            colour = key
            eng = self.engines[colour]
            stats = eng.empty_stats()
            eng.add_(stats, i)
            cid = self._next_cid
            self._next_cid += 1
            self.clusters[cid] = _Cluster(colour, {i}, stats, log_m_after)
        self.item_cluster[i] = cid
        self.colour_totals[colour] += 1

    def reallocate_item(self, i: int) -> None:
        """Withdraw item i and redraw its placement from the full conditional."""
        if not 0 <= i < self.n:
            raise ValidationError(f"item {i} out of range")
        self._withdraw(i)
        moves, logw, after = self.item_candidates(i)
        idx = _sample_index(logw, self.rng)
        self._insert(i, moves[idx], after[idx])

    # -- subset kernel ---------------------------------------------------

    def _candidate_partition(self, block: list[int], target_cid: int | None,
                             target_colour: int):
        labels = list(self.item_cluster)
        fresh = -2 if target_cid is None else target_cid
        for i in block:
            labels[i] = fresh
        if not self.model.coloured:
            return Partition.from_allocation(labels)
        colour_of = {cid: cl.colour for cid, cl in self.clusters.items()}
        colour_of[fresh] = target_colour
        colours = [colour_of[lab] for lab in labels]
        remap = {lab: j for j, lab in enumerate(dict.fromkeys(labels))}
        return ColouredPartition.from_allocation([remap[lab] for lab in labels],
                                                 colours, self.model.n_colours)

    def subset_candidates(self, block: list[int]):
        """Placement options for a withdrawn block, priced via the full prior."""
        blocks = {}

        def block_stats(colour: int) -> ClusterStats:
            if colour not in blocks:
                blocks[colour] = self.engines[colour].stats_of(block)
            return blocks[colour]

        moves, logw, after = [], [], []
        for cid, cl in self.clusters.items():
            prior = log_eppf(self.model, self._candidate_partition(block, cid, cl.colour))
            if prior == LOG_ZERO:
                continue
            lm = self.engines[cl.colour].log_plus_block(cl.stats, block_stats(cl.colour))
            moves.append(("existing", cid))
            logw.append(prior + lm - cl.log_m)
            after.append(lm)
        for k in range(self.model.n_colours):
            prior = log_eppf(self.model, self._candidate_partition(block, None, k))
            if prior == LOG_ZERO:
                continue
            lm = self.engines[k].log_marginal(block_stats(k))
            moves.append(("new", k))
            logw.append(prior + lm)
            after.append(lm)
        return moves, logw, after

    def _withdraw_block(self, block: list[int]) -> tuple[int | None, int]:
        """Remove a co-clustered block; returns (origin cid or None if emptied, colour)."""
        cids = {self.item_cluster[i] for i in block}
        if len(cids) != 1 or -1 in cids:
            raise ValidationError("subset must lie inside a single current cluster")
        origin_cid = cids.pop()
        origin = self.clusters[origin_cid]
        colour = origin.colour
        eng = self.engines[colour]
        for i in block:
            origin.members.discard(i)
            eng.remove_(origin.stats, i)
            self.item_cluster[i] = -1
        self.colour_totals[colour] -= len(block)
        if not origin.members:
            del self.clusters[origin_cid]
            return None, colour
        origin.log_m = eng.log_marginal(origin.stats)
        return origin_cid, colour

    def _apply_block(self, block: list[int], move: tuple[str, int],
                     log_m_after: float) -> None:
        kind, key = move
        if kind == "existing":
            cl = self.clusters[key]
            tgt_eng = self.engines[cl.colour]
            for i in block:
                cl.members.add(i)
                tgt_eng.add_(cl.stats, i)
                self.item_cluster[i] = key
            cl.log_m = log_m_after
            self.colour_totals[cl.colour] += len(block)
        else:
            tgt_eng = self.engines[key]
            stats = tgt_eng.stats_of(block)
            cid = self._next_cid
            self._next_cid += 1
            self.clusters[cid] = _Cluster(key, set(block), stats,
                                          tgt_eng.log_marginal(stats))
            for i in block:
                self.item_cluster[i] = cid
            self.colour_totals[key] += len(block)

    def reallocate_subset(self, items: Sequence[int]) -> None:
        """Move a block of items (all from one cluster) as a unit.

        For a fixed block this is an exact conditional update: the block
        joins an existing cluster or opens a fresh one of some colour, with
        probability proportional to the candidate partition's prior times
        the block's predictive density there. With a single item it
        coincides with ``reallocate_item``.
        """
        block = sorted(set(items))
        if not block:
            raise ValidationError("subset must be nonempty")
        self._withdraw_block(block)
        moves, logw, after = self.subset_candidates(block)
        idx = _sample_index(logw, self.rng)
        self._apply_block(block, moves[idx], after[idx])

    @staticmethod
    def _n_subsets(cluster_size: int, max_size: int) -> float:
        return float(sum(math.comb(cluster_size, s)
                         for s in range(1, min(max_size, cluster_size) + 1)))

    def random_subset_move(self, max_size: int = 8) -> None:
        """One randomly-selected block move, corrected for selection asymmetry.

        A uniform current cluster and a uniform nonempty subset of it (size
        capped) are selected, and the block placement is redrawn from its
        conditional. Because the selection probability depends on the state,
        the redraw alone would bias the chain; a Metropolis-Hastings factor
        min(1, sel(S|new)/sel(S|old)) restores exact invariance.
        """
        cids = list(self.clusters)
        cid = cids[int(self.rng.integers(len(cids)))]
        members = sorted(self.clusters[cid].members)
        m = len(members)
        cap = min(max_size, m)
        counts = np.array([math.comb(m, s) for s in range(1, cap + 1)], dtype=float)
        size = int(self.rng.choice(np.arange(1, cap + 1), p=counts / counts.sum()))
        picked = self.rng.choice(m, size=size, replace=False)
        block = sorted(members[j] for j in picked)

        degree_before = len(self.clusters)
        sel_before = 1.0 / (degree_before * self._n_subsets(m, max_size))
        origin_cid, origin_colour = self._withdraw_block(block)
        remaining = len(self.clusters)

        moves, logw, after = self.subset_candidates(block)
        idx = _sample_index(logw, self.rng)
        kind, key = moves[idx]
        if kind == "existing":
            degree_after = remaining
            target_size = len(self.clusters[key].members) + len(block)
        else:
            degree_after = remaining + 1
            target_size = len(block)
        sel_after = 1.0 / (degree_after * self._n_subsets(target_size, max_size))

        if self.rng.random() < min(1.0, sel_after / sel_before):
            self._apply_block(block, moves[idx], after[idx])
        elif origin_cid is not None:
            self._apply_block(block, ("existing", origin_cid),
                              self.engines[origin_colour].log_plus_block(
                                  self.clusters[origin_cid].stats,
                                  self.engines[origin_colour].stats_of(block)))
        else:
            self._apply_block(block, ("new", origin_colour), 0.0)


def gibbs_reallocate_item(state: ChainState, i: int) -> ChainState:
    """Single-item full-conditional update (coloured priors dispatch on the model)."""
    state.reallocate_item(i)
    return state


def gibbs_reallocate_subset(state: ChainState, items: Sequence[int]) -> ChainState:
    state.reallocate_subset(items)
    return state


def build_engines(Y: np.ndarray, design: DesignBlock,
                  specs: NormalGammaSpec | Sequence[NormalGammaSpec],
                  model: PartitionPrior) -> list[NIGEngine]:
    """One marginal-likelihood engine per model colour."""
    if isinstance(specs, NormalGammaSpec):
        specs = [specs]
    specs = list(specs)
    if len(specs) == 1 and model.n_colours > 1:
        specs = specs * model.n_colours
    if len(specs) != model.n_colours:
        raise ValidationError(
            f"model has {model.n_colours} colours but {len(specs)} priors given")
    return [NIGEngine(design, spec, Y) for spec in specs]


def run_chain(Y: np.ndarray, design: DesignBlock, model: PartitionPrior,
              specs: NormalGammaSpec | Sequence[NormalGammaSpec],
              plan: SweepPlan, *, engines: Sequence | None = None,
              initial: Partition | ColouredPartition | None = None) -> list[TraceRecord]:
    """Run one chain and return the retained trace.

    A sweep reallocates items 0..n-1 in order, then performs one random
    subset move with probability ``plan.subset_move_rate``. The chain starts
    from all-singleton clusters unless ``initial`` is given, and is fully
    determined by ``plan.seed``.
    """
    Y = np.asarray(Y, dtype=float)
    if Y.ndim != 2 or Y.shape[0] < 1:
        raise ValidationError("data must be a nonempty n x S matrix")
    if Y.shape[1] != design.n_samples:
        raise ValidationError(
            f"data has {Y.shape[1]} samples per item, design expects {design.n_samples}")
    n = Y.shape[0]
    rng = np.random.default_rng(plan.seed)
    if engines is None:
        engines = build_engines(Y, design, specs, model)
    state = ChainState(model, engines, n, rng, initial=initial)
    trace: list[TraceRecord] = []
    for sweep in range(plan.sweeps):
        for i in range(n):
            state.reallocate_item(i)
        if plan.subset_move_rate > 0 and rng.random() < plan.subset_move_rate:
            state.random_subset_move(plan.subset_max_size)
        if sweep >= plan.burn_in and (sweep - plan.burn_in) % plan.thin == 0:
            trace.append(_record(state, sweep))
    return trace


def _record(state: ChainState, sweep: int) -> TraceRecord:
    snap = state.snapshot()
    if isinstance(snap, ColouredPartition):
        labels, colours = snap.allocation()
        colour_degrees = snap.colour_degrees()
    else:
        labels = snap.allocation()
        colours = (0,) * snap.n
        colour_degrees = (snap.degree,)
    log_post = log_eppf(state.model, snap) + state.log_likelihood()
    return TraceRecord(sweep, labels, colours, snap.degree, colour_degrees, log_post)
