import math

import numpy as np
import pytest

from conftest import bell_highl
from spiralbw import tomography as tomo
from spiralbw.errors import DomainError
from spiralbw.io import dumps_records, loads_records
from spiralbw.measurement import CALIBRATED_NOISE, ZERO_NOISE, NoiseModel, coincidence_probability
from spiralbw.qstate import (
    DensityMatrix,
    fidelity,
    maximally_mixed,
    product_labels,
    random_density,
    trace_distance,
)
from spiralbw.tomography import (
    linear_reconstruct,
    mc_uncertainty,
    min_eigenvalue,
    mle_reconstruct,
    rho_from_t,
    run_from_records,
    simulate_run,
    tomography_settings,
)

LABELS = product_labels([0, 2], [0, 2])


def noiseless(rho):
    return simulate_run(rho, ZERO_NOISE, 1.0, infinite=True)


# ---------------------------------------------------------------- TomographyRun


def test_settings_grid_is_sixteen_distinct_pairs():
    settings = tomography_settings((-28, -32), (28, 32))
    assert len(settings) == 16
    assert len({(a.name, b.name) for a, b in settings}) == 16


def test_run_rejects_wrong_record_count(bell):
    run = simulate_run(bell, CALIBRATED_NOISE, 10.0, 1)
    with pytest.raises(DomainError):
        tomo.TomographyRun(run.s1_pair, run.s2_pair, run.records[:15])


def test_run_rejects_mixed_durations(bell):
    a = simulate_run(bell, CALIBRATED_NOISE, 10.0, 1)
    b = simulate_run(bell, CALIBRATED_NOISE, 20.0, 1)
    with pytest.raises(DomainError):
        tomo.TomographyRun(a.s1_pair, a.s2_pair, a.records[:8] + b.records[8:])


def test_csv_round_trip_rebuilds_the_run(bell):
    run = simulate_run(bell, CALIBRATED_NOISE, 3000.0, 4)
    back = run_from_records(loads_records(dumps_records(run.records)))
    assert back.s1_pair == run.s1_pair and back.s2_pair == run.s2_pair
    assert np.array_equal(back.counts, run.counts)
    assert mle_reconstruct(back).rho.matrix.tolist() == mle_reconstruct(run).rho.matrix.tolist()


def test_run_from_records_rejects_shuffled_order(bell):
    run = simulate_run(bell, CALIBRATED_NOISE, 10.0, 1)
    recs = list(run.records)
    recs[0], recs[1] = recs[1], recs[0]
    with pytest.raises(DomainError):
        run_from_records(recs)


def test_simulated_counts_follow_the_measurement_model(bell):
    run = simulate_run(bell, CALIBRATED_NOISE, 3000.0, infinite=True)
    for (p1, p2), rec in zip(run.settings, run.records):
        p = coincidence_probability(bell, p1, p2)
        assert rec.counts == pytest.approx(3000.0 * (0.148 * p + 0.0101), rel=1e-12)


# ---------------------------------------------------------------- linear inversion


def test_linear_round_trip_bell(bell):
    rho = linear_reconstruct(noiseless(bell))
    assert np.max(np.abs(rho.matrix - bell.matrix)) < 1e-9


def test_linear_maximally_mixed():
    mm = maximally_mixed(LABELS)
    rho = linear_reconstruct(noiseless(mm))
    assert np.max(np.abs(rho.matrix - np.eye(4) / 4)) < 1e-9


def test_linear_random_states_round_trip(rng):
    for _ in range(20):
        truth = random_density(4, rng, labels=LABELS)
        rho = linear_reconstruct(noiseless(truth))
        assert np.max(np.abs(rho.matrix - truth.matrix)) < 1e-9


def test_linear_is_hermitian_trace_one_under_noise(bell):
    rho = linear_reconstruct(simulate_run(bell, CALIBRATED_NOISE, 300.0, 3))
    assert np.allclose(rho.matrix, rho.matrix.conj().T, atol=1e-12)
    assert abs(np.trace(rho.matrix) - 1) < 1e-12


def test_linear_flags_non_psd_under_poisson_noise(bell):
    # scale so the mean count per setting is about 100
    flagged = 0
    for seed in range(100):
        run = simulate_run(bell, NoiseModel(0.0, 400.0), 1.0, seed)
        assert 50 < run.counts.mean() < 150
        if not linear_reconstruct(run).is_physical():
            flagged += 1
    assert flagged >= 1


def test_linear_singular_design_raises(bell, monkeypatch):
    run = noiseless(bell)
    real = tomo._phis(run)
    degenerate = np.repeat(real[:1], 16, axis=0)
    monkeypatch.setattr(tomo, "_phis", lambda r: degenerate)
    with pytest.raises(DomainError):
        linear_reconstruct(run)


def test_linear_zero_counts_raise(bell):
    run = simulate_run(bell, CALIBRATED_NOISE, 10.0, 1).with_counts(np.zeros(16))
    with pytest.raises(DomainError):
        linear_reconstruct(run)


# ---------------------------------------------------------------- MLE


def test_mle_bell_fidelity(bell):
    res = mle_reconstruct(noiseless(bell))
    assert res.converged
    assert fidelity(res.rho, bell) >= 0.9999


def test_mle_random_round_trip(rng):
    for _ in range(25):
        truth = random_density(4, rng, labels=LABELS)
        assert fidelity(mle_reconstruct(noiseless(truth)).rho, truth) >= 0.999


def test_mle_matches_linear_on_noiseless_data(rng):
    for _ in range(10):
        truth = random_density(4, rng, labels=LABELS)
        run = noiseless(truth)
        assert trace_distance(mle_reconstruct(run).rho, linear_reconstruct(run)) < 1e-6


def _nll(rho, run):
    # Poisson negative log-likelihood with the scale profiled out
    phis = tomo._phis(run)
    p = np.real(np.einsum("ki,ij,kj->k", phis.conj(), rho, phis))
    n = run.counts
    lam = p * n.sum() / p.sum()
    return float(np.sum(lam - n * np.log(np.maximum(lam, 1e-300))))


def test_mle_equal_counts_give_maximally_mixed(bell, rng):
    run = simulate_run(bell, CALIBRATED_NOISE, 10.0, 1).with_counts(np.full(16, 100))
    rho = mle_reconstruct(run).rho
    mm = maximally_mixed(rho.labels)
    assert trace_distance(rho, mm) < 0.02
    # coarse brute-force scan: no sampled state beats I/4
    best = _nll(mm.matrix, run)
    for _ in range(500):
        cand = random_density(4, rng, labels=rho.labels).matrix
        for w in (0.05, 0.3, 1.0):
            assert _nll(w * cand + (1 - w) * mm.matrix, run) >= best - 1e-9


@pytest.mark.parametrize("background", [0.0, 0.0101, 0.5, 5.0])
def test_mle_output_physical_under_noise(bell, background):
    for seed in range(5):
        run = simulate_run(bell, NoiseModel(background, 0.148), 300.0, seed)
        rho = mle_reconstruct(run).rho
        assert abs(np.trace(rho.matrix).real - 1) < 1e-12
        assert min_eigenvalue(rho) >= -1e-14
        assert np.array_equal(rho.matrix, rho.matrix.conj().T)


def test_rho_from_t_is_always_physical(rng):
    for _ in range(50):
        rho = rho_from_t(rng.normal(size=16), 4)
        w = np.linalg.eigvalsh(rho)
        assert w.min() >= -1e-15
        assert abs(np.trace(rho) - 1) < 1e-12


def test_mle_background_fit_recovers_state_and_background(bell):
    run = simulate_run(bell, NoiseModel(0.5, 1.0), 1000.0, infinite=True)
    res = mle_reconstruct(run, fit_background=True)
    assert fidelity(res.rho, bell) > 0.999
    assert res.background == pytest.approx(500.0, rel=0.02)
    # ignoring the background mixes the state
    assert fidelity(mle_reconstruct(run).rho, bell) < 0.9


def test_mle_is_deterministic(bell):
    run = simulate_run(bell, CALIBRATED_NOISE, 3000.0, 9)
    a, b = mle_reconstruct(run), mle_reconstruct(run)
    assert a.rho.matrix.tobytes() == b.rho.matrix.tobytes()


def test_mle_nonconvergence_is_flagged_not_raised(bell):
    res = mle_reconstruct(simulate_run(bell, CALIBRATED_NOISE, 3000.0, 2), max_iterations=5)
    assert not res.converged
    assert res.rho.is_physical()


def test_mle_zero_counts_raise(bell):
    run = simulate_run(bell, CALIBRATED_NOISE, 10.0, 1).with_counts(np.zeros(16))
    with pytest.raises(DomainError):
        mle_reconstruct(run)


def test_calibrated_highl_fidelity_in_range(bell):
    rho = mle_reconstruct(simulate_run(bell, CALIBRATED_NOISE, 3000.0, 1)).rho
    assert 0.70 < fidelity(rho, bell) < 0.92


# ---------------------------------------------------------------- Monte Carlo


def _fid(target):
    return lambda rho: fidelity(rho, target)


def test_mc_std_scales_as_inverse_sqrt_counts(bell):
    run = simulate_run(bell, CALIBRATED_NOISE, 3000.0, 1)
    one = mc_uncertainty(run, 200, _fid(bell), 5)
    four = mc_uncertainty(run.with_counts(run.counts * 4), 200, _fid(bell), 5)
    assert 1.7 <= one.std / four.std <= 2.3


def test_mc_concentrates_at_high_counts(bell):
    run = simulate_run(bell, NoiseModel(0.0, 1e8), 1.0, infinite=True)
    run = run.with_counts(np.round(run.counts))
    summary = mc_uncertainty(run, 20, _fid(bell), 3)
    assert summary.std < 1e-3
    assert summary.failed == 0


def test_mc_two_replicas(bell):
    s = mc_uncertainty(simulate_run(bell, CALIBRATED_NOISE, 300.0, 1), 2, _fid(bell))
    assert math.isfinite(s.mean) and math.isfinite(s.std)


def test_mc_rejects_single_replica(bell):
    with pytest.raises(DomainError):
        mc_uncertainty(simulate_run(bell, CALIBRATED_NOISE, 300.0, 1), 1, _fid(bell))


def test_mc_mean_near_point_estimate(bell):
    run = simulate_run(bell, CALIBRATED_NOISE, 3000.0, 11)
    point = fidelity(mle_reconstruct(run).rho, bell)
    s = mc_uncertainty(run, 60, _fid(bell), 2)
    assert abs(s.mean - point) <= 2 * s.std


def test_mc_threads_do_not_change_results(bell):
    run = simulate_run(bell, CALIBRATED_NOISE, 3000.0, 1)
    a = mc_uncertainty(run, 16, _fid(bell), 8, threads=1)
    b = mc_uncertainty(run, 16, _fid(bell), 8, threads=4)
    assert a == b


def test_mc_excludes_failed_replicas(bell, monkeypatch):
    run = simulate_run(bell, CALIBRATED_NOISE, 300.0, 1)
    real = tomo.mle_reconstruct
    seen = []

    def flaky(r, **kw):
        seen.append(r)
        if len(seen) % 2 == 0:
            raise DomainError("reconstruction failed")
        return real(r, **kw)

    monkeypatch.setattr(tomo, "mle_reconstruct", flaky)
    s = mc_uncertainty(run, 6, _fid(bell))
    assert s.failed == 3
    assert math.isfinite(s.std)
