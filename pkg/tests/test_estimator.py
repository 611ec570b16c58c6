import math
import random

import numpy as np
import pytest

import oracles
from homloc import (
    ConvergenceError,
    DetectionEvent,
    Offset3D,
    SearchConfig,
    SourceSpec,
    ValidationError,
    crb,
    fi_quadrature,
    log_likelihood,
    mle_fit,
    non_tuned_setting,
    replicate,
    sample_batch,
    score,
    tuned_setting,
)

RT2 = 1.0 / math.sqrt(2.0)
S111 = SourceSpec(1.0, 1.0, 1.0)


def test_zero_visibility_likelihood_is_flat():
    p = non_tuned_setting(0.0)
    batch = sample_batch(1, 500, Offset3D(1.0, 0.0, 0.0), p, S111)
    a = log_likelihood(batch, Offset3D(0.0, 0.0, 0.0), p, S111)
    b = log_likelihood(batch, Offset3D(2.0, -1.0, 3.0), p, S111)
    assert a == 0.0 and b == 0.0


def test_likelihood_permutation_invariant():
    """fsum makes the value independent of event order, bit for bit."""
    p = non_tuned_setting(0.8)
    batch = sample_batch(2, 2_000, Offset3D(0.7, -0.3, 0.4), p, S111)
    events = batch.events
    th = Offset3D(0.5, 0.1, -0.2)
    ref = log_likelihood(events, th, p, S111)
    rng = random.Random(3)
    for _ in range(5):
        shuffled = events[:]
        rng.shuffle(shuffled)
        assert log_likelihood(shuffled, th, p, S111) == ref


def test_likelihood_accepts_batch_and_list():
    p = tuned_setting(0.5, RT2)
    batch = sample_batch(4, 1_000, Offset3D(1.0, 1.0, 0.0), p, S111)
    th = Offset3D(0.9, 1.1, 0.1)
    assert log_likelihood(batch, th, p, S111) == pytest.approx(
        log_likelihood(batch.events, th, p, S111), abs=1e-9
    )


def test_likelihood_gradient_is_summed_score():
    """Finite differences of the public likelihood match the per-event score."""
    p = non_tuned_setting(0.7)
    batch = sample_batch(5, 300, Offset3D(0.8, 0.2, -0.5), p, S111)
    events = batch.events
    rng = np.random.default_rng(6)
    for _ in range(5):
        th = rng.uniform(-1.5, 1.5, size=3)

        def ll(x):
            return log_likelihood(events, Offset3D(*x), p, S111)

        fd = oracles.central_diff(ll, th, 1e-6)
        summed = np.sum(
            [score(e, Offset3D(*th), p, S111) for e in events], axis=0
        )
        assert np.allclose(fd, summed, rtol=1e-5, atol=1e-5)


def test_single_coincidence_peak_location():
    # one coincidence at k = (1, 0, 0), visibility 1: the likelihood term
    # 1 - cos(dx) peaks at dx = pi
    p = tuned_setting(1.0, 1.0)
    e = [DetectionEvent(1.0, 0.0, 0.0, -1)]
    best = log_likelihood(e, Offset3D(math.pi, 0.0, 0.0), p, S111)
    for dx in (0.5, 1.0, 2.0, 3.0):
        assert log_likelihood(e, Offset3D(dx, 0.0, 0.0), p, S111) < best


def test_mle_recovers_truth():
    p = tuned_setting(0.5, RT2)
    truth = Offset3D(2.0, 2.0, 0.0)
    batch = sample_batch(7, 5_000, truth, p, S111)
    fit = mle_fit(batch, p, S111)
    assert fit.converged
    bound = crb(fi_quadrature(p, S111, truth), batch.n_emitted)
    for got, want, b in zip(
        fit.theta_hat.as_tuple(), truth.as_tuple(), bound.as_tuple()
    ):
        assert abs(got - want) < 4.0 * b
    assert fit.n_events_used == batch.n_detected
    eigs = np.linalg.eigvalsh(fit.observed_information)
    assert eigs[0] > 0.0
    assert fit.trace["boundary"] is False


def test_mle_canonical_sign():
    """Data from theta and -theta are indistinguishable; the reported fit
    always has its first nonzero component positive on a symmetric box."""
    p = tuned_setting(0.5, RT2)
    truth = Offset3D(-2.0, 1.0, 0.0)
    batch = sample_batch(8, 5_000, truth, p, S111)
    fit = mle_fit(batch, p, S111)
    assert fit.converged
    assert fit.theta_hat.dx > 0.0
    # canonical representative of the tied pair is (2, -1, 0)
    assert abs(fit.theta_hat.dx - 2.0) < 0.2
    assert abs(fit.theta_hat.dy + 1.0) < 0.2
    assert abs(fit.theta_hat.dt) < 0.2


def test_mle_branch_choice_respected_by_asymmetric_box():
    # a box that excludes the positive branch keeps the raw negative fit
    p = tuned_setting(0.5, RT2)
    truth = Offset3D(2.0, 2.0, 0.0)
    batch = sample_batch(9, 4_000, truth, p, S111)
    cfg = SearchConfig(box=((-5.0, -0.5), (-5.0, 5.0), (-5.0, 5.0)))
    fit = mle_fit(batch, p, S111, cfg)
    assert fit.theta_hat.dx < 0.0
    assert fit.trace["sign_flipped"] is False
    assert abs(fit.theta_hat.dx + 2.0) < 0.2
    assert abs(fit.theta_hat.dy + 2.0) < 0.2


def test_mle_boundary_flagged():
    p = tuned_setting(0.5, RT2)
    truth = Offset3D(2.0, 2.0, 0.0)
    batch = sample_batch(10, 3_000, truth, p, S111)
    cfg = SearchConfig(box=((0.2, 1.0), (-5.0, 5.0), (-5.0, 5.0)))
    fit = mle_fit(batch, p, S111, cfg)
    assert fit.trace["boundary"] is True
    assert not fit.converged


def test_mle_input_validation():
    p = tuned_setting(0.5, RT2)
    small = sample_batch(11, 60, Offset3D(1.0, 0.0, 0.0), p, S111)
    with pytest.raises(ConvergenceError):
        mle_fit(small, p, S111)  # ~30 detected, below min_events
    flat = non_tuned_setting(0.0)
    batch = sample_batch(12, 500, Offset3D(1.0, 0.0, 0.0), flat, S111)
    with pytest.raises(ConvergenceError):
        mle_fit(batch, flat, S111)


def test_search_config_validation():
    with pytest.raises(ValidationError):
        SearchConfig(box=((1.0, -1.0), (-5.0, 5.0), (-5.0, 5.0)))
    with pytest.raises(ValidationError):
        SearchConfig(box=((-5.0, 5.0), (-5.0, 5.0)))
    with pytest.raises(ValidationError):
        SearchConfig(grid_points=1)
    with pytest.raises(ValidationError):
        SearchConfig(min_events=0)


def test_mle_deterministic():
    p = non_tuned_setting(0.8)
    truth = Offset3D(1.2, -0.6, 0.9)
    batch = sample_batch(13, 4_000, truth, p, S111)
    a = mle_fit(batch, p, S111)
    b = mle_fit(batch, p, S111)
    assert a.theta_hat.as_tuple() == b.theta_hat.as_tuple()
    assert a.log_likelihood == b.log_likelihood


def test_estimator_equivariance_paired():
    """Shifting the true offset shifts the fit: paired replicates with
    shared seeds estimate the induced displacement, which must match the
    applied shift well inside its own standard error."""
    p = tuned_setting(0.5, RT2)
    base = Offset3D(1.5, 0.5, 0.0)
    delta = np.array([0.8, 0.0, 0.0])
    shifted = Offset3D(base.dx + delta[0], base.dy + delta[1], base.dt + delta[2])
    diffs = []
    for j in range(16):
        seed = 1000 + j
        fa = mle_fit(sample_batch(seed, 1_500, base, p, S111), p, S111)
        fb = mle_fit(sample_batch(seed, 1_500, shifted, p, S111), p, S111)
        if fa.converged and fb.converged:
            diffs.append(
                np.array(fb.theta_hat.as_tuple()) - np.array(fa.theta_hat.as_tuple())
            )
    diffs = np.array(diffs)
    assert len(diffs) >= 12
    mean = diffs.mean(axis=0)
    se = diffs.std(axis=0, ddof=1) / math.sqrt(len(diffs))
    for i in range(3):
        assert abs(mean[i] - delta[i]) < 5.0 * se[i] + 0.02


def test_replicate_summary():
    p = tuned_setting(0.5, RT2)
    truth = Offset3D(2.0, 2.0, 0.0)
    out = replicate(seed=21, r=6, n_per_rep=1_500, theta=truth, p=p, s=S111)
    assert out.estimates.shape == (6, 3)
    assert out.r_total == 6
    assert out.n_excluded == int(np.sum(~out.converged))
    assert np.all(np.isfinite(out.empirical_std))
    want = crb(fi_quadrature(p, S111, truth), 1_500).as_tuple()
    assert out.crb_std == pytest.approx(want, rel=1e-12)
    # reported mean/bias are over converged rows only
    good = out.estimates[out.converged]
    assert out.mean == pytest.approx(good.mean(axis=0), rel=1e-12)
    assert out.bias == pytest.approx(good.mean(axis=0) - np.array(truth.as_tuple()), abs=1e-12)


def test_replicate_deterministic_and_parallel():
    p = non_tuned_setting(0.9)
    truth = Offset3D(1.0, 0.5, -0.5)
    a = replicate(seed=22, r=4, n_per_rep=800, theta=truth, p=p, s=S111)
    b = replicate(seed=22, r=4, n_per_rep=800, theta=truth, p=p, s=S111)
    assert np.array_equal(a.estimates, b.estimates, equal_nan=True)
    c = replicate(seed=22, r=4, n_per_rep=800, theta=truth, p=p, s=S111, n_jobs=2)
    assert np.array_equal(a.estimates, c.estimates, equal_nan=True)


def test_replicate_validation_and_failure():
    p = tuned_setting(0.5, RT2)
    truth = Offset3D(0.3, 0.3, 0.3)
    with pytest.raises(ValidationError):
        replicate(seed=23, r=1, n_per_rep=500, theta=truth, p=p, s=S111)
    with pytest.raises(ValidationError):
        replicate(seed=23, r=4, n_per_rep=0, theta=truth, p=p, s=S111)
    # batches below min_events make every replication fail, leaving no
    # usable statistics
    with pytest.raises(ConvergenceError):
        replicate(seed=23, r=3, n_per_rep=30, theta=truth,
                  p=non_tuned_setting(0.8), s=S111)
