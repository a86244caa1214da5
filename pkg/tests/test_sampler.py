import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from blochtomo import qstate, tomography as tm
from blochtomo.drive import DriveSet, outcome_probabilities
from blochtomo.errors import ValidationError
from blochtomo.sampler import (
    ExperimentPlan,
    MeasurementRecord,
    RunLog,
    draw_times,
    run_experiment,
    sample_outcomes,
    simulate_shots,
)

from conftest import random_drives, random_rho


@pytest.mark.parametrize(
    "kwargs",
    [dict(n_unitaries=1), dict(n_unitaries=5, shots_per_unitary=0), dict(n_unitaries=5, window=-1.0), dict(n_unitaries=5, master_seed=-3)],
)
def test_plan_validation(kwargs):
    with pytest.raises(ValidationError):
        ExperimentPlan(**kwargs)


def test_plan_defaults():
    assert ExperimentPlan(10).shots_per_unitary == 10


def test_draw_times_deterministic():
    plan = ExperimentPlan(5, 1, 3.0, 99)
    assert np.array_equal(draw_times(plan, 2, 3), draw_times(plan, 2, 3))
    assert not np.array_equal(draw_times(plan, 2, 3), draw_times(plan, 3, 3))
    with pytest.raises(ValidationError):
        draw_times(plan, 5, 3)


def test_draw_times_moments():
    T = 7.0
    plan = ExperimentPlan(100_000, 1, T, 5)
    t = np.array([draw_times(plan, i, 2) for i in range(100_000)])
    sigma = T / np.sqrt(12) / np.sqrt(t.shape[0])
    assert np.all(np.abs(t.mean(axis=0) - T / 2) < 3 * sigma)
    assert t.min() >= 0 and t.max() <= T
    assert abs(np.corrcoef(t[:, 0], t[:, 1])[0, 1]) < 0.02


def test_run_times_match_draw_times(rng):
    ds = random_drives(2, rng)
    plan = ExperimentPlan(20, 3, 5.0, 17)
    log = run_experiment(ds, qstate.maximally_mixed(2), plan)
    for i in (0, 7, 19):
        assert np.array_equal(log.times[i], draw_times(plan, i, 2))


def test_shots_uniform_outcomes():
    ds = DriveSet.sweet_spot(2)
    rec = simulate_shots(ds, [0.3, 1.1], qstate.maximally_mixed(2), 100_000, np.random.default_rng(0))
    assert rec.n_shots == 100_000
    assert np.all(np.abs(rec.frequencies - 0.25) < 0.005)


def test_zero_shots():
    ds = DriveSet.sweet_spot(1)
    rec = simulate_shots(ds, [0.0], qstate.maximally_mixed(1), 0, np.random.default_rng(0))
    assert rec.n_shots == 0 and rec.counts.shape == (2,)


def test_multinomial_chisquare():
    rng = np.random.default_rng(21)
    pvals = []
    for _ in range(50):
        ds = random_drives(2, rng)
        rho = random_rho(2, rng)
        t = rng.uniform(0, 10, 2)
        p = outcome_probabilities(ds, t, rho)
        rec = simulate_shots(ds, t, rho, 5000, rng)
        keep = p > 1e-3
        exp = p[keep] / p[keep].sum() * rec.counts[keep].sum()
        pvals.append(stats.chisquare(rec.counts[keep], exp).pvalue)
    assert stats.kstest(pvals, "uniform").pvalue > 0.01


@given(st.lists(st.floats(0, 1, exclude_max=True), min_size=1, max_size=20), st.integers(0, 10**6))
@settings(max_examples=50, deadline=None)
def test_sample_outcomes_inverse_cdf(u, seed):
    p = np.random.default_rng(seed).dirichlet(np.ones(4))
    out = sample_outcomes(p[None], np.array(u)[None])[0]
    cdf = np.cumsum(p)
    for x, k in zip(u, out):
        # smallest k with cdf[k] > u
        assert k == min(int(np.searchsorted(cdf, x, side="right")), 3)


def test_sample_outcomes_skips_zero_probability():
    p = np.array([[0.5, 0.0, 0.5, 0.0]])
    u = np.linspace(0, 0.999, 200)[None]
    out = sample_outcomes(p, u)
    assert set(np.unique(out)) <= {0, 2}


def test_minimal_plan():
    ds = DriveSet.sweet_spot(1)
    log = run_experiment(ds, qstate.maximally_mixed(1), ExperimentPlan(2, 1, 1.0, 0))
    assert len(log) == 2 and all(r.n_shots == 1 for r in log.records)


@pytest.mark.parametrize("threads", [1, 3, 8])
def test_run_deterministic_and_thread_independent(threads, rng):
    ds = random_drives(2, rng)
    rho = random_rho(2, rng)
    plan = ExperimentPlan(1500, 4, 10.0, 123)
    ref = run_experiment(ds, rho, plan)
    assert run_experiment(ds, rho, plan, threads=threads) == ref


def test_runlog_text_roundtrip(tmp_path, rng):
    ds = random_drives(2, rng)
    log = run_experiment(ds, random_rho(2, rng), ExperimentPlan(7, 3, 2.5, 2**63 + 5))
    log.save(tmp_path / "log.txt")
    back = RunLog.load(tmp_path / "log.txt")
    assert back == log
    assert back.to_text() == log.to_text()
    assert log.to_text().splitlines()[1] == f"2 7 3 2.5 {2**63 + 5}"


def test_runlog_rejects_bad_text():
    with pytest.raises(ValidationError):
        RunLog.from_text("nonsense\n")
    good = "# blochtomo runlog v1\n1 2 1 1.0 0\n0.1 1 0\n"
    with pytest.raises(ValidationError):
        RunLog.from_text(good)  # one record short
    with pytest.raises(ValidationError):
        RunLog.from_text(good + "0.2 1 1\n")  # counts sum to 2


def test_record_frequencies():
    rec = MeasurementRecord(np.zeros(1), np.array([3, 1]))
    assert np.allclose(rec.frequencies, [0.75, 0.25])


def test_end_to_end_mean_statistics():
    rng = np.random.default_rng(8)
    ds = DriveSet.sweet_spot(2)
    rho = random_rho(2, rng)
    plan = ExperimentPlan(4000, 10, 2 * np.pi * 200, 1)
    est = tm.reconstruct(ds, run_experiment(ds, rho, plan))
    pred = tm.predict_total(ds, plan.n_unitaries, plan.shots_per_unitary, rho=rho)
    err = np.abs(est.rho_hat - rho) ** 2
    # each element's variance is a share of the predicted total
    assert err.max() < 9 * pred
    assert err.sum() < 3 * pred


def test_offset_and_shared_times():
    ds = DriveSet.sweet_spot(3)
    rho = qstate.maximally_mixed(3)
    log = run_experiment(ds, rho, ExperimentPlan(40, 2, 5.0, 3, offset=100.0))
    assert np.all((log.times >= 100.0) & (log.times <= 105.0))
    shared = run_experiment(ds, rho, ExperimentPlan(40, 2, 5.0, 3, shared_time=True))
    assert np.all(shared.times == shared.times[:, :1])
    assert np.array_equal(shared.times[0], draw_times(shared.plan, 0, 3))


def test_runlog_round_trip_with_sampling_options():
    ds = DriveSet.sweet_spot(2)
    log = run_experiment(ds, qstate.maximally_mixed(2), ExperimentPlan(5, 2, 3.0, 1, offset=0.5, shared_time=True))
    back = RunLog.from_text(log.to_text())
    assert back == log and back.plan.shared_time and back.plan.offset == 0.5


@pytest.mark.parametrize("offset", [-1.0, math.inf])
def test_bad_offset(offset):
    with pytest.raises(ValidationError):
        ExperimentPlan(5, 1, 1.0, 0, offset=offset)
