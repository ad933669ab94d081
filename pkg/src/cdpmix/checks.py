"""The verification suite behind ``cdpmix verify``.

Each check is an independent oracle over a small, exactly-enumerable
instance: normalization sums, configuration-formula agreement, sampler
goodness-of-fit against exact partition laws, conjugate telescoping
identities, transition-matrix invariance of every Gibbs kernel, chain
convergence against an enumerated posterior, and the loss optimizer against
brute force. All randomness is seeded; every check reports a measured
statistic alongside its pass verdict.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, fields, replace
from typing import Callable

import numpy as np
from scipy import stats as sstats
from scipy.special import logsumexp

from . import priors
from .conjugate import ClusterEvaluator, DesignBlock, NormalGammaSpec, log_mvt
from .errors import ValidationError
from .estimation import LossSpec, expected_pairwise_loss, optimal_partition
from .gibbs import ChainState, SweepPlan, build_engines, run_chain
from .generators import (make_rng, sample_dp_partition_via_sticks,
                         sample_finite_mixture_alloc, sample_polya_sequence,
                         UniformBase)
from .partitions import (ColouredPartition, ConfigurationCounts, Partition,
                         enumerate_coloured_partitions, enumerate_configurations,
                         enumerate_partitions)
from .priors import (LOG_ZERO, BackgroundDirichletProcess, ColouredDirichletProcess,
                     DirichletMultinomial, DirichletProcess, PitmanYor, log_eppf)


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


@dataclass(frozen=True)
class VerifySettings:
    """Tunable knobs for the verification suite (defaults match the shipped gates)."""

    dp_thetas: tuple = (0.3, 1.0, 5.0)
    dp_max_n: int = 8
    ewens_max_n: int = 8
    ewens_agreement_max_n: int = 7
    coloured_max_n: int = 5
    cdp_colours: tuple = ((1.0, 0.5), (2.0, 1.5))
    background_params: tuple = (1.5, 1.0)
    norm_tol: float = 1e-10
    equiv_n: int = 4
    equiv_theta: float = 1.0
    equiv_samples: int = 100_000
    finite_components: int = 2000
    chi2_level: float = 0.99
    moment_thetas: tuple = (1.0, 5.0)
    moment_reps: int = 100_000
    moment_event: float = 0.3
    conjugate_instances: int = 100
    conjugate_tol: float = 1e-8
    invariance_tol: float = 1e-10
    chain_sweeps: int = 200_000
    chain_burn_in: int = 2_000
    chain_thin: int = 10
    loss_instances: int = 50
    seed: int = 20260810

    @classmethod
    def from_overrides(cls, overrides: dict | None) -> "VerifySettings":
        if not overrides:
            return cls()
        known = {f.name for f in fields(cls)}
        bad = set(overrides) - known
        if bad:
            raise ValidationError(f"unknown verify settings: {sorted(bad)}")
        fixed = {k: tuple(v) if isinstance(v, list) else v for k, v in overrides.items()}
        return replace(cls(), **fixed)


def _norm_gap(terms) -> float:
    finite = [t for t in terms if t != LOG_ZERO]
    return abs(math.exp(logsumexp(finite)) - 1.0)


def check_eppf_normalization(cfg: VerifySettings) -> CheckResult:
    """Criterion: every prior's log-EPPF sums to one over its enumerated support."""
    start = time.perf_counter()
    worst = 0.0
    for n in range(1, cfg.dp_max_n + 1):
        parts = list(enumerate_partitions(n))
        for theta in cfg.dp_thetas:
            DirichletProcess(theta)  # domain gate
            worst = max(worst, _norm_gap([priors.log_eppf_dp(p, theta) for p in parts]))
        for theta in cfg.dp_thetas:
            worst = max(worst, _norm_gap(
                [priors.log_ewens_config(c, theta) for c in enumerate_configurations(n)]))
    cdp = ColouredDirichletProcess(cfg.cdp_colours)
    BackgroundDirichletProcess(*cfg.background_params)  # domain gate
    for n in range(1, cfg.coloured_max_n + 1):
        coloured = list(enumerate_coloured_partitions(n, 2))
        worst = max(worst, _norm_gap([priors.log_eppf_cdp(p, cdp) for p in coloured]))
        worst = max(worst, _norm_gap(
            [priors.log_eppf_background(p, *cfg.background_params) for p in coloured]))
    elapsed = time.perf_counter() - start
    passed = worst <= cfg.norm_tol and elapsed < 10.0
    return CheckResult(
        "eppf-normalization", passed,
        f"max |sum-1| = {worst:.3e} (tol {cfg.norm_tol:.0e}), {elapsed:.1f}s (budget 10s)")


def check_ewens_agreement(cfg: VerifySettings) -> CheckResult:
    """Criterion: the configuration formula equals the partition law summed
    over partitions sharing each size configuration."""
    worst = 0.0
    for n in range(1, cfg.ewens_agreement_max_n + 1):
        by_config: dict = {}
        for p in enumerate_partitions(n):
            key = tuple(sorted(p.sizes))
            by_config.setdefault(key, []).append(p)
        for theta in cfg.dp_thetas:
            for key, parts in by_config.items():
                counts = [0] * n
                for r in key:
                    counts[r - 1] += 1
                lhs = priors.log_ewens_config(ConfigurationCounts(counts, n=n), theta)
                rhs = logsumexp([priors.log_eppf_dp(p, theta) for p in parts])
                worst = max(worst, abs(lhs - rhs))
    passed = worst <= cfg.norm_tol
    return CheckResult("ewens-agreement", passed,
                       f"max |config - summed partitions| = {worst:.3e} (tol {cfg.norm_tol:.0e})")


def _chi2_ok(observed: np.ndarray, probs: np.ndarray, level: float,
             min_expected: float = 5.0) -> tuple[bool, float, float, int]:
    """Pearson test with small-expected-cell pooling; returns (ok, stat, crit, df)."""
    total = observed.sum()
    expected = probs * total
    big = expected >= min_expected
    obs_cells = list(observed[big])
    exp_cells = list(expected[big])
    if (~big).any():
        obs_cells.append(observed[~big].sum())
        exp_cells.append(expected[~big].sum())
    obs_cells = np.asarray(obs_cells, dtype=float)
    exp_cells = np.asarray(exp_cells, dtype=float)
    keep = exp_cells > 0
    stat = float((((obs_cells - exp_cells) ** 2) / np.where(keep, exp_cells, 1.0))[keep].sum())
    df = int(keep.sum()) - 1
    crit = float(sstats.chi2.ppf(level, df))
    return stat < crit, stat, crit, df


def check_construction_equivalence(cfg: VerifySettings) -> CheckResult:
    """Criterion: stick-breaking, urn-sequence, and finite-mixture-limit draws
    all match the exact partition law (goodness-of-fit at the set level)."""
    start = time.perf_counter()
    n, theta = cfg.equiv_n, cfg.equiv_theta
    states = list(enumerate_partitions(n))
    index = {p: i for i, p in enumerate(states)}
    probs = np.array([math.exp(priors.log_eppf_dp(p, theta)) for p in states])

    def freq(sampler: Callable[[np.random.Generator], Partition], seed) -> np.ndarray:
        rng = make_rng(seed)
        counts = np.zeros(len(states))
        for _ in range(cfg.equiv_samples):
            counts[index[sampler(rng)]] += 1
        return counts

    draws = {
        "sticks": freq(lambda rng: sample_dp_partition_via_sticks(n, theta, rng),
                       cfg.seed + 1),
        "urn": freq(lambda rng: Partition.from_allocation(
            sample_polya_sequence(n, theta, UniformBase(), rng)[0]), cfg.seed + 2),
        "finite": freq(lambda rng: Partition.from_allocation(
            sample_finite_mixture_alloc(cfg.finite_components,
                                        theta / cfg.finite_components, n, rng)),
            cfg.seed + 3),
    }
    details, ok = [], True
    for name, counts in draws.items():
        good, stat, crit, df = _chi2_ok(counts, probs, cfg.chi2_level)
        ok &= good
        details.append(f"{name} X2={stat:.1f}<{crit:.1f}(df{df}):{'ok' if good else 'FAIL'}")
    elapsed = time.perf_counter() - start
    ok &= elapsed < 60.0
    return CheckResult("construction-equivalence", ok,
                       "; ".join(details) + f", {elapsed:.1f}s (budget 60s)")


def check_dp_moments(cfg: VerifySettings) -> CheckResult:
    """Criterion: the random measure's mass on a fixed event has mean equal to
    the base probability and variance base*(1-base)/(1+concentration)."""
    q = cfg.moment_event
    rng = make_rng(cfg.seed + 4)
    details, ok = [], True
    for theta in cfg.moment_thetas:
        n_sticks = int(math.ceil(math.log(1e-8) / math.log(theta / (1.0 + theta))))
        estimates = np.empty(cfg.moment_reps)
        done = 0
        while done < cfg.moment_reps:
            chunk = min(20_000, cfg.moment_reps - done)
            breaks = rng.beta(1.0, theta, size=(chunk, n_sticks))
            keep = np.cumprod(1.0 - breaks, axis=1)
            w = breaks * np.concatenate([np.ones((chunk, 1)), keep[:, :-1]], axis=1)
            hits = rng.random(size=(chunk, n_sticks)) < q
            estimates[done:done + chunk] = (w * hits).sum(axis=1)
            done += chunk
        mean_err = abs(estimates.mean() - q)
        var_target = q * (1.0 - q) / (1.0 + theta)
        var_err = abs(estimates.var() - var_target) / var_target
        good = mean_err <= 0.01 and var_err <= 0.10
        ok &= good
        details.append(
            f"theta={theta:g}: |mean-{q}|={mean_err:.4f}, var rel err={var_err:.3f}"
            f":{'ok' if good else 'FAIL'}")
    return CheckResult("dp-moments", ok, "; ".join(details))


def _random_conjugate_instance(rng) -> tuple[DesignBlock, NormalGammaSpec]:
    S = int(rng.integers(1, 4))
    kp = int(rng.integers(1, 3))
    kx = int(rng.integers(0, 3))
    design = DesignBlock(rng.normal(size=(S, kp)),
                         rng.normal(size=(S, kx)) if kx else None)
    background = kx > 0 and rng.random() < 0.3
    p = kx if background else kp + kx
    A = rng.normal(size=(p, p))
    precision = A @ A.T + (p + 1) * np.eye(p)
    spec = NormalGammaSpec(
        0.5 + rng.random() * 2, 0.5 + rng.random() * 2, rng.normal(size=p), precision,
        fixed_z_coeffs=rng.normal(size=kp) if background else None)
    return design, spec


def check_conjugate_identities(cfg: VerifySettings) -> CheckResult:
    """Criterion: marginals telescope over any insertion order, and the
    sufficient-statistics route equals the stacked multivariate-t density."""
    rng = make_rng(cfg.seed + 5)
    worst_chain, worst_stack = 0.0, 0.0
    for _ in range(cfg.conjugate_instances):
        design, spec = _random_conjugate_instance(rng)
        ev = ClusterEvaluator(design, spec)
        e = int(rng.integers(1, 6))
        Y = rng.normal(size=(e, design.n_samples))
        full = ev.log_marginal(ev.stats_for(Y))
        order = rng.permutation(e)
        acc = 0.0
        stats = ev.stats_for(np.zeros((0, design.n_samples)))
        for i in order:
            item = ev.stats_for(Y[i])
            acc += ev.log_predictive(item, stats)
            stats = stats.plus(item)
        worst_chain = max(worst_chain, abs(acc - full))

        e3 = min(e, 3)
        Y3 = Y[:e3]
        lm = ev.log_marginal(ev.stats_for(Y3))
        W = np.vstack([ev.free] * e3)
        offset = np.tile(ev.offset, e3)
        mean = W @ spec.mean + offset
        if spec.n_coeffs:
            core = W @ np.linalg.inv(spec.precision) @ W.T
        else:
            core = np.zeros((e3 * design.n_samples, e3 * design.n_samples))
        scale = (spec.rate / spec.shape) * (core + np.eye(e3 * design.n_samples))
        direct = log_mvt(Y3.reshape(-1), 2.0 * spec.shape, mean, scale)
        worst_stack = max(worst_stack, abs(lm - direct))
    passed = worst_chain <= cfg.conjugate_tol and worst_stack <= cfg.conjugate_tol
    return CheckResult(
        "conjugate-identities", passed,
        f"max telescoping gap = {worst_chain:.2e}, max stacked-t gap = {worst_stack:.2e} "
        f"(tol {cfg.conjugate_tol:.0e})")


def _exact_posterior(model, engines, states) -> np.ndarray:
    logp = []
    for p in states:
        lp = log_eppf(model, p)
        if lp == LOG_ZERO:
            logp.append(LOG_ZERO)
            continue
        if isinstance(p, ColouredPartition):
            groups = [(col, c) for col, cs in enumerate(p.clusters_by_colour) for c in cs]
        else:
            groups = [(0, c) for c in p.clusters]
        for col, c in groups:
            lp += engines[col].log_marginal(engines[col].stats_of(list(c)))
        logp.append(lp)
    logp = np.asarray(logp)
    out = np.zeros(len(states))
    finite = logp != LOG_ZERO
    out[finite] = np.exp(logp[finite] - logsumexp(logp[finite]))
    return out


def _one_sweep_matrix(model, engines, states, n) -> np.ndarray:
    index = {p: i for i, p in enumerate(states)}
    size = len(states)
    T = np.eye(size)
    support = [log_eppf(model, p) != LOG_ZERO for p in states]
    for i in range(n):
        Ti = np.zeros((size, size))
        for j, p in enumerate(states):
            if not support[j]:
                Ti[j, j] = 1.0
                continue
            st = ChainState.from_partition(model, engines, p)
            st._withdraw(i)
            moves, logw, after = st.item_candidates(i)
            w = np.exp(np.asarray(logw) - max(logw))
            w /= w.sum()
            for mv, weight, lm in zip(moves, w, after):
                nxt = ChainState.from_partition(model, engines, p)
                nxt._withdraw(i)
                nxt._insert(i, mv, lm)
                Ti[j, index[nxt.snapshot()]] += weight
        T = T @ Ti
    return T


def _invariance_cases(cfg: VerifySettings):
    rng = make_rng(cfg.seed + 6)
    n_plain, n_col = 4, 3
    Y4 = rng.normal(size=(n_plain, 2)) + np.array([0.0, 0.0, 1.5, 1.5])[:, None]
    design = DesignBlock(np.array([[1.0, 0.4], [1.0, -0.4]]).T)
    spec = NormalGammaSpec(1.0, 1.0, np.zeros(2), np.eye(2))
    bg_spec = NormalGammaSpec(1.0, 1.0, np.zeros(0), np.zeros((0, 0)),
                              fixed_z_coeffs=np.zeros(2))
    cases = [
        (DirichletProcess(1.0), [spec], n_plain, Y4),
        (DirichletMultinomial(3, 0.8), [spec], n_plain, Y4),
        (PitmanYor(0.3, 1.0), [spec], n_plain, Y4),
        (ColouredDirichletProcess(cfg.cdp_colours), [spec, spec], n_col, Y4[:n_col]),
        (BackgroundDirichletProcess(*cfg.background_params), [bg_spec, spec],
         n_col, Y4[:n_col]),
    ]
    return design, cases


def check_gibbs_invariance(cfg: VerifySettings) -> CheckResult:
    """Criterion: a full systematic sweep leaves the enumerated posterior
    exactly invariant for all five prior families."""
    start = time.perf_counter()
    design, cases = _invariance_cases(cfg)
    details, ok = [], True
    for model, specs, n, Y in cases:
        engines = build_engines(Y, design, specs, model)
        states = (list(enumerate_coloured_partitions(n, model.n_colours))
                  if model.coloured else list(enumerate_partitions(n)))
        pi = _exact_posterior(model, engines, states)
        T = _one_sweep_matrix(model, engines, states, n)
        err = float(np.abs(pi @ T - pi).max())
        good = err <= cfg.invariance_tol
        ok &= good
        details.append(f"{type(model).__name__}: {err:.1e}:{'ok' if good else 'FAIL'}")
    elapsed = time.perf_counter() - start
    ok &= elapsed < 60.0
    return CheckResult("gibbs-invariance", ok,
                       "; ".join(details) + f" (tol {cfg.invariance_tol:.0e}), "
                       f"{elapsed:.1f}s (budget 60s)")


def check_gibbs_convergence(cfg: VerifySettings) -> CheckResult:
    """Criterion: long-run sampled partition frequencies on a small conjugate
    dataset match the exactly enumerated posterior."""
    n = 5
    Y = np.array([-1.1, -0.9, 0.05, 0.95, 1.15]).reshape(n, 1)
    design = DesignBlock(np.array([[1.0]]))
    spec = NormalGammaSpec(1.0, 1.0, [0.0], [[1.0]])
    model = DirichletProcess(1.0)
    engines = build_engines(Y, design, spec, model)
    states = list(enumerate_partitions(n))
    index = {p: i for i, p in enumerate(states)}
    pi = _exact_posterior(model, engines, states)
    plan = SweepPlan(sweeps=cfg.chain_sweeps, burn_in=cfg.chain_burn_in,
                     thin=cfg.chain_thin, seed=cfg.seed + 7)
    trace = run_chain(Y, design, model, spec, plan, engines=engines)
    counts = np.zeros(len(states))
    for rec in trace:
        counts[index[Partition.from_allocation(rec.labels)]] += 1
    good, stat, crit, df = _chi2_ok(counts, pi, cfg.chi2_level)
    return CheckResult(
        "gibbs-convergence", good,
        f"{len(trace)} retained sweeps over {len(states)} partitions, "
        f"X2={stat:.1f} < {crit:.1f} (df {df}): {'ok' if good else 'FAIL'}")


def _brute_force_argmin(rho: np.ndarray, loss: LossSpec) -> tuple[Partition, float]:
    """Independent minimiser: direct pair loops, no shared loss code."""
    n = rho.shape[0]
    best, best_val = None, math.inf
    for p in enumerate_partitions(n):
        labels = p.allocation()
        val = 0.0
        for i in range(n):
            for j in range(i + 1, n):
                if labels[i] == labels[j]:
                    val += loss.false_positive * (1.0 - rho[i, j])
                else:
                    val += loss.false_negative * rho[i, j]
        if val < best_val - 1e-12:
            best, best_val = p, val
    return best, best_val


def check_loss_optimizer(cfg: VerifySettings) -> CheckResult:
    """Criterion: exact search equals brute force; greedy beats both trivial
    baselines and matches exact on most instances."""
    rng = make_rng(cfg.seed + 8)
    loss = LossSpec()
    agree = 0
    ok = True
    for _ in range(cfg.loss_instances):
        n = int(rng.integers(4, 10))
        A = rng.random((n, n))
        rho = (A + A.T) / 2.0
        np.fill_diagonal(rho, 1.0)
        exact = optimal_partition(rho, loss, strategy="exact")
        brute, brute_val = _brute_force_argmin(rho, loss)
        if exact != brute:
            ok = False
        greedy = optimal_partition(rho, loss, strategy="greedy")
        g_val = expected_pairwise_loss(greedy, rho, loss)
        singles = expected_pairwise_loss(Partition([[i] for i in range(n)]), rho, loss)
        lump = expected_pairwise_loss(Partition([list(range(n))]), rho, loss)
        if g_val > min(singles, lump) + 1e-9:
            ok = False
        if abs(g_val - brute_val) < 1e-9:
            agree += 1
    rate = agree / cfg.loss_instances
    if rate < 0.5:
        ok = False
    note = "" if rate >= 0.8 else " (below the 80% reporting bar)"
    return CheckResult("loss-optimizer", ok,
                       f"exact==brute-force on all, greedy==exact on "
                       f"{agree}/{cfg.loss_instances} ({rate:.0%}){note}")


ALL_CHECKS = [
    check_eppf_normalization,
    check_ewens_agreement,
    check_construction_equivalence,
    check_dp_moments,
    check_conjugate_identities,
    check_gibbs_invariance,
    check_gibbs_convergence,
    check_loss_optimizer,
]


def run_all(overrides: dict | None = None,
            report: Callable[[str], None] | None = None) -> list[CheckResult]:
    cfg = VerifySettings.from_overrides(overrides)
    results = []
    for fn in ALL_CHECKS:
        result = fn(cfg)
        results.append(result)
        if report is not None:
            report(f"[{'PASS' if result.passed else 'FAIL'}] {result.name}: {result.detail}")
    return results
