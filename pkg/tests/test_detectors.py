import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from runcons.detectors import (
    CENTRALIZED,
    ChangeDetectionResult,
    Decision,
    FssDetector,
    PageBank,
    PageDetector,
    PageMode,
    SequentialDetector,
    centralized_statistic,
    continuous_time_thresholds,
    fss_decide,
    fss_threshold,
    node_source,
    page_step,
    run_change_detection,
    sequential_design,
    sequential_run,
)
from runcons.network import full_ring
from runcons.stats import (
    Identity,
    gaussian_shift_model,
    moments,
    q_inverse,
    variance_change_model,
)


# ---------------------------------------------------------------------------
# Fixed sample size test
# ---------------------------------------------------------------------------

def test_fss_threshold_median_at_zero_mean():
    model = gaussian_shift_model(1.0, theta=0.1)
    m0 = moments(model, Identity(), 0.0, M=1)
    assert fss_threshold(0.5, 25, m0, 4) == pytest.approx(0.0, abs=1e-12)


def test_fss_threshold_gaussian_value():
    model = gaussian_shift_model(1.0, theta=0.1)
    m0 = moments(model, Identity(), 0.0, M=1)
    delta = fss_threshold(0.05, 100, m0, 10)
    assert delta == pytest.approx(math.sqrt(1000.0) * q_inverse(0.05), rel=1e-12)
    assert delta == pytest.approx(52.02, abs=0.01)


def test_fss_decide_threshold_rules():
    detector = FssDetector(sample_count=5, threshold=-math.inf)
    assert fss_decide(-1e9, detector) is Decision.H1  # everything crosses
    detector = FssDetector(sample_count=5, threshold=2.0)
    assert fss_decide(1.999, detector) is Decision.H0
    assert fss_decide(2.0, detector) is Decision.H1  # closed crossing


def test_centralized_statistic_sums_everything():
    values = np.arange(12, dtype=float).reshape(3, 4)
    assert centralized_statistic(values) == pytest.approx(values.sum())


def test_fss_detector_validation():
    with pytest.raises(ValueError):
        FssDetector(sample_count=0, threshold=1.0)


# ---------------------------------------------------------------------------
# Sequential test
# ---------------------------------------------------------------------------

def _gaussian_detector(p_f, p_d, r, M, sigma2=1.0):
    theta_r = 1.0 / math.sqrt(r)
    model = gaussian_shift_model(sigma2, theta=theta_r)
    m0 = moments(model, Identity(), 0.0, M=1)
    mr = moments(model, Identity(), theta_r, M=1)
    return sequential_design(p_f, p_d, r, m0, mr, M)


def test_symmetric_error_targets_give_antisymmetric_thresholds():
    det = _gaussian_detector(0.05, 0.95, 100.0, 8)
    assert det.a_r == pytest.approx(-det.b_r, rel=1e-12)


def test_gaussian_threshold_closed_form():
    r, sigma2 = 400.0, 1.7
    det = _gaussian_detector(0.1, 0.8, r, 5, sigma2)
    assert det.b_r == pytest.approx(math.sqrt(r) * sigma2 * math.log(0.8 / 0.1), rel=1e-10)
    assert det.a_r == pytest.approx(math.sqrt(r) * sigma2 * math.log(0.2 / 0.9), rel=1e-10)
    assert det.eta_r == pytest.approx(0.5 / math.sqrt(r), rel=1e-12)


def test_continuous_time_thresholds():
    d = 2.0
    alpha, beta = continuous_time_thresholds(0.1, 0.9, d)
    assert alpha == pytest.approx(math.log(0.1 / 0.9) / d, rel=1e-12)
    assert beta == pytest.approx(math.log(0.9 / 0.1) / d, rel=1e-12)
    with pytest.raises(ValueError):
        continuous_time_thresholds(0.9, 0.1, d)


def test_sequential_design_rejects_bad_error_pair():
    with pytest.raises(ValueError):
        _gaussian_detector(0.5, 0.5, 10.0, 2)


def test_sequential_run_immediate_crossing():
    det = SequentialDetector(r=1.0, M=1, eta_r=0.0, a_r=-1e-9, b_r=1e-9)
    decision, n = sequential_run([0.5, 0.7], det, max_n=10)
    assert decision is Decision.H1 and n == 1


def test_sequential_run_truncation_is_a_result():
    det = SequentialDetector(r=1.0, M=1, eta_r=0.0, a_r=-100.0, b_r=100.0)
    decision, n = sequential_run([0.0] * 5, det, max_n=5)
    assert decision is Decision.TRUNCATED and n == 5


def test_sequential_run_translation_invariance():
    rng = np.random.default_rng(4)
    values = np.cumsum(rng.standard_normal(500))
    det = SequentialDetector(r=1.0, M=1, eta_r=0.0, a_r=-5.0, b_r=7.0)
    base = sequential_run(values, det, max_n=500)
    shift = 11.5
    det_shifted = SequentialDetector(r=1.0, M=1, eta_r=0.0, a_r=-5.0 + shift, b_r=7.0 + shift)
    shifted = sequential_run(values + shift, det_shifted, max_n=500)
    assert base == shifted


def test_sequential_run_matches_barrier_signs():
    det = SequentialDetector(r=1.0, M=2, eta_r=0.5, a_r=-2.0, b_r=2.0)
    # centered path T_n - n: slot 1 gives -1.0 (inside), slot 2 gives -3.5
    decision, n = sequential_run([0.0, -1.5, -3.0], det, max_n=10)
    assert (decision, n) == (Decision.H0, 2)


# ---------------------------------------------------------------------------
# CUSUM state machines
# ---------------------------------------------------------------------------

def test_page_step_reset_rule():
    det = PageDetector(gamma=4.0)
    page_step(det, -1.0)
    assert det.cusum == 0.0
    page_step(det, 2.0)
    page_step(det, 3.0)
    assert det.cusum == pytest.approx(5.0)
    assert det.cusum >= det.gamma


@settings(max_examples=30, deadline=None)
@given(increments=st.lists(st.floats(min_value=-10, max_value=10), min_size=1, max_size=60))
def test_page_cusum_never_negative(increments):
    det = PageDetector(gamma=1.0)
    for inc in increments:
        page_step(det, inc)
        assert det.cusum >= 0.0


def test_page_bank_minimum_semantics():
    bank = PageBank(M=3, gamma=2.0)
    assert not bank.step(np.array([1.0, -1.0, 0.5]))
    assert (bank.cusums >= 0.0).all()
    assert bank.step(np.array([1.5, 0.0, 0.0]))  # filter 0 reaches 2.5


def test_zero_threshold_alarms_immediately():
    model = variance_change_model(1.0, 2.0)
    result = run_change_detection(
        model, PageMode.CENTRALIZED_ALL_SENSORS, 0.0, None, 100,
        np.random.default_rng(0), M=3,
    )
    assert result.alarm_time == 1 and result.is_false_alarm and not result.truncated


def test_change_detection_truncation_reported():
    model = variance_change_model(1.0, 1.0001)
    result = run_change_detection(
        model, PageMode.CENTRALIZED_ALL_SENSORS, 1e6, None, 50,
        np.random.default_rng(0), M=2,
    )
    assert result.truncated and result.alarm_time == 50


def test_single_node_running_equals_centralized_trial_by_trial():
    model = variance_change_model(1.0, 1.3)
    top = full_ring(1)
    for trial in range(30):
        a = run_change_detection(
            model, PageMode.CENTRALIZED_ALL_SENSORS, 3.0, None, 10_000,
            np.random.default_rng((9, trial)), M=1,
        )
        b = run_change_detection(
            model, PageMode.RUNNING_CONSENSUS_NODE, 3.0, None, 10_000,
            np.random.default_rng((9, trial)), topology=top, v=3,
        )
        assert a.alarm_time == b.alarm_time


def test_two_node_full_averaging_keeps_states_identical():
    # with M=2 every pairwise exchange is full averaging, so both node
    # statistics coincide and either node alarms at the same slot
    model = variance_change_model(1.0, 1.5)
    top = full_ring(2)
    for trial in range(10):
        a = run_change_detection(
            model, PageMode.RUNNING_CONSENSUS_NODE, 4.0, None, 10_000,
            np.random.default_rng((5, trial)), topology=top, v=1, node=0,
        )
        b = run_change_detection(
            model, PageMode.RUNNING_CONSENSUS_NODE, 4.0, None, 10_000,
            np.random.default_rng((5, trial)), topology=top, v=1, node=1,
        )
        assert a.alarm_time == b.alarm_time


def test_change_time_splits_false_alarms_from_detections():
    model = variance_change_model(1.0, 4.0)
    rng = np.random.default_rng(123)
    result = run_change_detection(model, PageMode.CENTRALIZED_ALL_SENSORS, 5.0, 1, 10_000, rng, M=4)
    assert not result.is_false_alarm and result.alarm_time >= 1


def test_bank_mode_runs_disjoint_streams():
    model = variance_change_model(1.0, 2.0)
    result = run_change_detection(
        model, PageMode.BANK, 3.0, 1, 100_000, np.random.default_rng(77), M=5,
    )
    assert result.alarm_time >= 1 and not result.truncated


def test_negative_drift_under_null_resets_dominate():
    # pre-change increments have negative mean, so the statistic keeps
    # touching zero: across a long run the reset state must recur often
    model = variance_change_model(1.0, 1.065024)
    det = PageDetector(gamma=math.inf)
    rng = np.random.default_rng(1)
    from runcons.stats import llr_nonlinearity

    llr = llr_nonlinearity(model)
    resets = 0
    increments = []
    slots = 20_000
    for _ in range(slots):
        x = model.null.sample(rng, 10)
        inc = float(llr(x).sum())
        increments.append(inc)
        page_step(det, inc)
        resets += det.cusum == 0.0
    from runcons.stats import kl_divergence

    drift = np.mean(increments)
    se = np.std(increments) / math.sqrt(slots)
    assert drift == pytest.approx(-10 * kl_divergence(model.null, model.alt), abs=4 * se)
    assert resets > 0.08 * slots


def test_statistic_source_helpers():
    assert CENTRALIZED.node == 0
    assert node_source(3).node == 3
