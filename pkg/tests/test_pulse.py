import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from apgate.cavity import ideal_gate
from apgate.pulse import (CoherentPulse, DetectionModel, ImperfectionConfig,
                          analyzer_error_channel, confusion_matrix,
                          detection_confusion, hyperfine_detection,
                          hyperfine_fidelity, jitter_nodes,
                          mode_mismatch_channel, multiphoton_fraction,
                          photon_number_dist, prep_error_channel, sample_jitter)
from apgate.qlin import PureState, UP, X_PLUS, apply_channel
from apgate.tomography import MeasurementSetting, born_probabilities


def _poisson(nbar, k):
    return math.exp(-nbar) * nbar ** k / math.factorial(k)


def test_photon_number_dist_vacuum():
    dist = photon_number_dist(CoherentPulse(0.0), 2)
    assert np.allclose(dist, [1.0, 0.0, 0.0], atol=1e-15)


def test_photon_number_dist_faint_pulse():
    dist = photon_number_dist(CoherentPulse(0.07), 2)
    assert dist[0] == pytest.approx(_poisson(0.07, 0), abs=1e-12)
    assert dist[1] == pytest.approx(_poisson(0.07, 1), abs=1e-12)
    assert np.round(dist, 4).tolist() == [0.9324, 0.0653, 0.0023]


@given(st.floats(min_value=0.0, max_value=1.0))
@settings(deadline=None, max_examples=40)
def test_photon_number_dist_sums_to_one(nbar):
    dist = photon_number_dist(CoherentPulse(nbar), 4)
    assert dist.sum() == pytest.approx(1.0, abs=1e-15)
    assert np.all(dist >= 0)


def test_multiphoton_fraction_matches_ratio():
    nbar = 0.07
    p0, p1 = _poisson(nbar, 0), _poisson(nbar, 1)
    expected = (1 - p0 - p1) / (1 - p0)
    assert multiphoton_fraction(CoherentPulse(nbar)) == pytest.approx(expected,
                                                                      abs=1e-12)
    assert expected == pytest.approx(0.034, abs=1e-3)
    assert multiphoton_fraction(CoherentPulse(0.0)) == 0.0


def test_pulse_warns_above_one_photon():
    with pytest.warns(UserWarning):
        CoherentPulse(1.5)


# --- preparation errors -------------------------------------------------------

def test_prep_error_identity_at_unit_fidelity():
    ch = prep_error_channel(1.0)
    rho = PureState(UP).density()
    out, _ = apply_channel(rho, ch)
    assert np.allclose(out.entries, rho.entries, atol=1e-14)


def test_prep_error_diagonal_mixture():
    out, _ = apply_channel(PureState(UP).density(), prep_error_channel(0.96))
    assert np.allclose(out.entries, np.diag([0.96, 0.04]), atol=1e-12)


def test_prep_error_total_failure():
    out, _ = apply_channel(PureState(UP).density(), prep_error_channel(0.0))
    assert np.allclose(out.entries, np.diag([0.0, 1.0]), atol=1e-12)


# --- mode mismatch ------------------------------------------------------------

def test_mode_mismatch_full_overlap_equals_gate():
    ch = mode_mismatch_channel(1.0, (0.0, 0.0))
    assert len(ch.kraus_ops) == 1
    assert np.allclose(ch.kraus_ops[0], ideal_gate().entries, atol=1e-12)


def test_mode_mismatch_zero_overlap_is_identity():
    ch = mode_mismatch_channel(0.0, (0.34, 0.30))
    rho = PureState(np.kron(X_PLUS, X_PLUS)).density()
    out, p = apply_channel(rho, ch)
    assert np.allclose(out.entries, rho.entries, atol=1e-13)
    assert p == pytest.approx(1.0, abs=1e-12)


def test_mode_mismatch_blends_gate_and_mirror():
    ch = mode_mismatch_channel(0.92, (0.0, 0.0))
    rho = PureState(np.kron(X_PLUS, X_PLUS)).density()
    out, _ = apply_channel(rho, ch)
    gate = ideal_gate().entries
    expected = 0.92 * gate @ rho.entries @ gate.conj().T + 0.08 * rho.entries
    assert np.allclose(out.entries, expected, atol=1e-12)


# --- jitter --------------------------------------------------------------------

def test_sample_jitter_zero_width():
    rng = np.random.default_rng(0)
    assert sample_jitter(rng, 0.0) == 0.0
    assert sample_jitter(rng, 0.0, bias_khz=100.0) == pytest.approx(
        2 * math.pi * 0.1, abs=1e-12)


def test_sample_jitter_statistics():
    rng = np.random.default_rng(1)
    sigma_khz = 300.0
    draws = np.array([sample_jitter(rng, sigma_khz) for _ in range(100_000)])
    sigma_angular = 2 * math.pi * sigma_khz * 1e-3
    assert abs(draws.mean()) < 3 * sigma_angular / math.sqrt(draws.size)
    assert draws.std() == pytest.approx(sigma_angular, rel=0.02)


def test_jitter_nodes_integrate_gaussian_moments():
    deltas, weights = jitter_nodes(300.0, bias_khz=50.0)
    assert weights.sum() == pytest.approx(1.0, abs=1e-12)
    mean = (weights * deltas).sum()
    var = (weights * deltas ** 2).sum() - mean ** 2
    assert mean == pytest.approx(2 * math.pi * 0.05, abs=1e-12)
    assert var == pytest.approx((2 * math.pi * 0.3) ** 2, rel=1e-10)
    d0, w0 = jitter_nodes(0.0, bias_khz=20.0)
    assert len(d0) == 1 and w0[0] == 1.0


# --- analyzer errors -----------------------------------------------------------

def test_analyzer_channel_identity_and_uniform():
    rho = PureState(X_PLUS).density()
    out, _ = apply_channel(rho, analyzer_error_channel(0.0))
    assert np.allclose(out.entries, rho.entries, atol=1e-14)
    out, _ = apply_channel(rho, analyzer_error_channel(0.5))
    for basis in "XYZ":
        p = born_probabilities(out, MeasurementSetting((basis,)))
        assert np.allclose(p, [0.5, 0.5], atol=1e-12)


@pytest.mark.parametrize("e", [0.0, 0.05, 0.3, 0.5])
def test_analyzer_channel_equals_classical_confusion(e):
    rng = np.random.default_rng(17)
    vec = rng.normal(size=2) + 1j * rng.normal(size=2)
    rho = PureState(vec).density()
    flipped, _ = apply_channel(rho, analyzer_error_channel(e))
    mix = confusion_matrix(e)
    for basis in "XYZ":
        setting = MeasurementSetting((basis,))
        direct = born_probabilities(flipped, setting)
        confused = mix @ born_probabilities(rho, setting)
        assert np.allclose(direct, confused, atol=1e-12)


def test_analyzer_channel_rejects_noncp_region():
    with pytest.raises(ValueError):
        analyzer_error_channel(0.8)


# --- atomic chain calibration ---------------------------------------------------

def test_atomic_coherence_factor_composition():
    imp = ImperfectionConfig()
    # prep * coherence reproduces the calibrated fringe: peak f_rr, contrast
    # 2 f_rr - 1.
    chain = imp.prep_fidelity * imp.atomic_coherence_factor
    assert 0.5 * (1 + chain) == pytest.approx(imp.rotation_readout_fidelity,
                                              abs=1e-12)
    ideal = ImperfectionConfig.ideal()
    assert ideal.atomic_coherence_factor == 1.0


def test_imperfection_validation():
    with pytest.raises(ValueError):
        ImperfectionConfig(mode_overlap=1.3)
    with pytest.raises(ValueError):
        ImperfectionConfig(freq_jitter_khz=-1.0)


# --- hyperfine detection ---------------------------------------------------------

def test_detection_model_calibration():
    d = DetectionModel()
    # mean signal inverts the Poisson zero term: P(>=1 | F2) = 0.996
    assert 1.0 - math.exp(-d.mean_signal_photons) == pytest.approx(0.996,
                                                                   abs=1e-12)
    assert 1.0 - math.exp(-d.dark_rate) == pytest.approx(0.003, abs=1e-12)
    assert hyperfine_fidelity(d) == pytest.approx(0.9965, abs=1e-6)


def test_detection_threshold_three_is_worse():
    base = DetectionModel()
    worse = DetectionModel(threshold=3)
    assert hyperfine_fidelity(worse) < hyperfine_fidelity(base)


def test_hyperfine_detection_sampling():
    d = DetectionModel()
    rng = np.random.default_rng(23)
    n = 100_000
    correct = 0
    for state in ("F1", "F2"):
        hits = sum(hyperfine_detection(state, d, rng)[0] == state
                   for _ in range(n))
        correct += hits / n
    fidelity = correct / 2
    se = math.sqrt(0.9965 * 0.0035 / n)
    assert abs(fidelity - 0.9965) < 3 * se


def test_detection_confusion_columns():
    m = detection_confusion(DetectionModel())
    assert np.allclose(m.sum(axis=0), [1.0, 1.0], atol=1e-12)
    assert m[0, 0] == pytest.approx(0.996, abs=1e-12)
    assert m[1, 1] == pytest.approx(0.997, abs=1e-12)


def test_channels_preserve_physicality():
    rng = np.random.default_rng(29)
    for ch in (prep_error_channel(0.9), analyzer_error_channel(0.1)):
        vec = rng.normal(size=2) + 1j * rng.normal(size=2)
        out, _ = apply_channel(PureState(vec).density(), ch)
        assert np.linalg.eigvalsh(out.entries)[0] >= -1e-10
        assert np.trace(out.entries).real == pytest.approx(1.0, abs=1e-12)
