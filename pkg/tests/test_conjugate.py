import math

import numpy as np
import pytest
from scipy.integrate import quad

from cdpmix.conjugate import (ClusterEvaluator, ClusterStats, DesignBlock,
                              NormalGammaSpec, cluster_stats, log_marginal_background,
                              log_marginal_regular, log_mvt, log_predictive,
                              posterior_update)
from cdpmix.errors import NumericalError, ValidationError


def scalar_setup(prior_mean=0.0, prior_prec=1.0, shape=1.0, rate=1.0):
    design = DesignBlock(Z=[[1.0]])
    spec = NormalGammaSpec(shape, rate, [prior_mean], [[prior_prec]])
    return design, spec


def random_instance(rng, background=False):
    S = int(rng.integers(1, 4))
    kp = int(rng.integers(1, 3))
    kx = int(rng.integers(1, 3)) if background else int(rng.integers(0, 3))
    design = DesignBlock(rng.normal(size=(S, kp)),
                         rng.normal(size=(S, kx)) if kx else None)
    p = kx if background else kp + kx
    A = rng.normal(size=(p, p))
    spec = NormalGammaSpec(0.5 + rng.random(), 0.5 + rng.random(),
                           rng.normal(size=p), A @ A.T + (p + 1) * np.eye(p),
                           fixed_z_coeffs=rng.normal(size=kp) if background else None)
    return design, spec


# ------------------------------------------------------------------ posterior

def test_posterior_update_empty_cluster_returns_prior():
    design, spec = scalar_setup()
    assert posterior_update(spec, ClusterStats.empty(1), design) is spec


def test_posterior_update_scalar_case():
    design, spec = scalar_setup(prior_mean=0.4, prior_prec=2.0)
    y = 0.9
    stats = cluster_stats(np.array([[y]]), design, spec)
    post = posterior_update(spec, stats, design)
    assert post.mean[0] == pytest.approx((y + 2.0 * 0.4) / (1.0 + 2.0))
    assert post.precision[0, 0] == pytest.approx(3.0)
    assert post.shape == pytest.approx(1.5)


def test_posterior_update_order_invariant():
    rng = np.random.default_rng(2)
    design, spec = random_instance(rng)
    Y = rng.normal(size=(4, design.n_samples))
    a = posterior_update(spec, cluster_stats(Y, design, spec), design)
    b = posterior_update(spec, cluster_stats(Y[::-1], design, spec), design)
    np.testing.assert_allclose(a.mean, b.mean, atol=1e-12)
    np.testing.assert_allclose(a.precision, b.precision, atol=1e-12)
    assert a.rate == pytest.approx(b.rate, abs=1e-12)


def test_prior_rejects_non_spd_precision():
    with pytest.raises((ValidationError, NumericalError)):
        NormalGammaSpec(1.0, 1.0, [0.0, 0.0], [[1.0, 2.0], [2.0, 1.0]])
    with pytest.raises(ValidationError):
        NormalGammaSpec(1.0, 1.0, [0.0, 0.0], [[1.0, 0.5], [0.0, 1.0]])


# ------------------------------------------------------------------ marginals

def test_empty_cluster_marginal_is_one():
    design, spec = scalar_setup()
    assert log_marginal_regular(ClusterStats.empty(1), design, spec) == 0.0


def test_single_observation_matches_direct_t_density():
    design, spec = scalar_setup()
    for y in (0.0, 0.7, -2.3):
        stats = cluster_stats(np.array([[y]]), design, spec)
        lm = log_marginal_regular(stats, design, spec)
        assert lm == pytest.approx(log_mvt([y], 2.0, [0.0], [[2.0]]), abs=1e-12)


def test_chain_rule_telescopes():
    rng = np.random.default_rng(4)
    for _ in range(20):
        background = bool(rng.random() < 0.3)
        design, spec = random_instance(rng, background=background)
        ev = ClusterEvaluator(design, spec)
        e = int(rng.integers(2, 6))
        Y = rng.normal(size=(e, design.n_samples))
        full = ev.log_marginal(ev.stats_for(Y))
        total = 0.0
        stats = ClusterStats.empty(spec.n_coeffs)
        for i in rng.permutation(e):
            item = ev.stats_for(Y[i])
            total += ev.log_predictive(item, stats)
            stats = stats.plus(item)
        assert total == pytest.approx(full, abs=1e-8)


def test_background_spherical_when_delta_zero_and_no_x():
    design = DesignBlock(Z=np.array([[1.0], [2.0]]))
    spec = NormalGammaSpec(1.5, 2.0, np.zeros(0), np.zeros((0, 0)),
                           fixed_z_coeffs=[0.0])
    y = np.array([[0.3, -0.4]])
    lm = log_marginal_background(cluster_stats(y, design, spec), design, spec)
    direct = log_mvt(y[0], 3.0, np.zeros(2), (2.0 / 1.5) * np.eye(2))
    assert lm == pytest.approx(direct, abs=1e-12)


def test_background_offset_is_a_location_shift():
    rng = np.random.default_rng(5)
    design, spec = random_instance(rng, background=True)
    zero_spec = NormalGammaSpec(spec.shape, spec.rate, spec.mean, spec.precision,
                                fixed_z_coeffs=np.zeros(design.n_z))
    Y = rng.normal(size=(3, design.n_samples))
    shifted = Y - design.Z @ spec.fixed_z_coeffs
    lm = log_marginal_background(cluster_stats(Y, design, spec), design, spec)
    lm0 = log_marginal_background(cluster_stats(shifted, design, zero_spec),
                                  design, zero_spec)
    assert lm == pytest.approx(lm0, abs=1e-10)


def test_marginal_guards():
    design, spec = scalar_setup()
    bg = NormalGammaSpec(1.0, 1.0, np.zeros(0), np.zeros((0, 0)), fixed_z_coeffs=[0.0])
    stats = ClusterStats.empty(1)
    with pytest.raises(ValidationError):
        log_marginal_background(stats, design, spec)
    with pytest.raises(ValidationError):
        log_marginal_regular(stats, design, bg)


def test_zero_x_block_equals_dropping_it():
    rng = np.random.default_rng(6)
    S, kp, kx = 3, 2, 2
    Z = rng.normal(size=(S, kp))
    with_x = DesignBlock(Z, np.zeros((S, kx)))
    without_x = DesignBlock(Z)
    mean_z, A = rng.normal(size=kp), rng.normal(size=(kp, kp))
    prec_z = A @ A.T + 3 * np.eye(kp)
    full_prec = np.zeros((kp + kx, kp + kx))
    full_prec[:kp, :kp] = prec_z
    full_prec[kp:, kp:] = np.eye(kx)
    spec_full = NormalGammaSpec(1.2, 0.9, np.concatenate([mean_z, rng.normal(size=kx)]),
                                full_prec)
    spec_z = NormalGammaSpec(1.2, 0.9, mean_z, prec_z)
    Y = rng.normal(size=(2, S))
    lm_full = log_marginal_regular(cluster_stats(Y, with_x, spec_full), with_x, spec_full)
    lm_z = log_marginal_regular(cluster_stats(Y, without_x, spec_z), without_x, spec_z)
    assert lm_full == pytest.approx(lm_z, abs=1e-12)


def test_downdate_restores_stats_and_marginal():
    rng = np.random.default_rng(7)
    design, spec = random_instance(rng)
    ev = ClusterEvaluator(design, spec)
    Y = rng.normal(size=(4, design.n_samples))
    stats = ev.stats_for(Y[:3])
    before = ev.log_marginal(stats)
    wty_before = stats.wty.copy()
    item = ev.item_stats(Y[3])
    stats.add_(*item)
    stats.remove_(*item)
    assert ev.log_marginal(stats) == pytest.approx(before, abs=1e-10)
    np.testing.assert_allclose(stats.wty, wty_before, atol=1e-10)


# ----------------------------------------------------------------- predictive

def test_predictive_on_empty_cluster_is_single_marginal():
    design, spec = scalar_setup()
    item = cluster_stats(np.array([[0.6]]), design, spec)
    pred = log_predictive(item, ClusterStats.empty(1), design, spec)
    assert pred == pytest.approx(log_marginal_regular(item, design, spec), abs=1e-12)


def test_borrowing_strength():
    # seeing the same value once makes seeing it again more likely
    rng = np.random.default_rng(3)
    design, spec = scalar_setup()
    y = float(rng.normal())
    item = cluster_stats(np.array([[y]]), design, spec)
    alone = log_predictive(item, ClusterStats.empty(1), design, spec)
    informed = log_predictive(item, item, design, spec)
    assert informed > alone


def test_predictive_integrates_to_one():
    design, spec = scalar_setup(prior_mean=0.3, prior_prec=1.5, shape=2.0, rate=1.5)
    cluster = cluster_stats(np.array([[0.5], [1.2]]), design, spec)

    def density(y):
        item = cluster_stats(np.array([[y]]), design, spec)
        return math.exp(log_predictive(item, cluster, design, spec))

    total, err = quad(density, -40, 40, limit=200)
    assert total == pytest.approx(1.0, abs=1e-4)


# ----------------------------------------------------------------- mvt density

def test_mvt_standard_cauchy_at_zero():
    assert log_mvt([0.0], 1.0, [0.0], [[1.0]]) == pytest.approx(math.log(1 / math.pi))


def test_mvt_symmetry():
    rng = np.random.default_rng(8)
    mu = rng.normal(size=3)
    A = rng.normal(size=(3, 3))
    sigma = A @ A.T + np.eye(3)
    v = rng.normal(size=3)
    assert log_mvt(mu + v, 2.5, mu, sigma) == pytest.approx(
        log_mvt(mu - v, 2.5, mu, sigma), abs=1e-12)


def test_mvt_integrates_to_one():
    # a dof-3 t keeps ~1.8e-5 of its mass beyond +/-50, so integrate the
    # whole line to test normalization at the 1e-6 level
    total, _ = quad(lambda x: math.exp(log_mvt([x], 3.0, [0.2], [[1.3]])),
                    -np.inf, np.inf, limit=300)
    assert total == pytest.approx(1.0, abs=1e-6)


def test_mvt_large_dof_approaches_gaussian():
    x, mu, var = 1.3, 0.2, 0.8
    gauss = -0.5 * math.log(2 * math.pi * var) - 0.5 * (x - mu) ** 2 / var
    assert log_mvt([x], 1e6, [mu], [[var]]) == pytest.approx(gauss, abs=1e-4)


def test_mvt_rejects_bad_inputs():
    with pytest.raises(ValidationError):
        log_mvt([0.0], 0.0, [0.0], [[1.0]])
    with pytest.raises(NumericalError):
        log_mvt([0.0, 0.0], 1.0, [0.0, 0.0], [[1.0, 2.0], [2.0, 1.0]])


# ------------------------------------------------- stacked-form equivalence

def test_sufficient_stats_equal_stacked_t_evaluation():
    rng = np.random.default_rng(9)
    for _ in range(10):
        background = bool(rng.random() < 0.4)
        design, spec = random_instance(rng, background=background)
        ev = ClusterEvaluator(design, spec)
        e = int(rng.integers(1, 4))
        Y = rng.normal(size=(e, design.n_samples))
        lm = ev.log_marginal(ev.stats_for(Y))
        W = np.vstack([ev.free] * e)
        mean = W @ spec.mean + np.tile(ev.offset, e)
        if spec.n_coeffs:
            core = W @ np.linalg.inv(spec.precision) @ W.T
        else:
            core = np.zeros((e * design.n_samples,) * 2)
        scale = (spec.rate / spec.shape) * (core + np.eye(e * design.n_samples))
        direct = log_mvt(Y.reshape(-1), 2 * spec.shape, mean, scale)
        assert lm == pytest.approx(direct, abs=1e-8)
