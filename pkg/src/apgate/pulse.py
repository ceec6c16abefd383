"""Faint-pulse photon statistics, imperfection channels and detection models."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .cavity import TWO_PI, CavityParams, gate_branch_amplitudes
from .qlin import DOWN, KrausChannel, PAULI_I, PAULI_X, PAULI_Y, PAULI_Z, UP


@dataclass(frozen=True)
class CoherentPulse:
    """Faint Gaussian laser pulse: mean photon number and temporal FWHM."""

    mean_photons: float = 0.07
    fwhm_us: float = 0.7

    def __post_init__(self):
        if self.mean_photons < 0:
            raise ValueError("mean photon number must be nonnegative")
        if self.fwhm_us <= 0:
            raise ValueError("pulse FWHM must be positive")
        if self.mean_photons > 1:
            warnings.warn("mean photon number above 1; protocols assume faint pulses",
                          stacklevel=2)


def photon_number_dist(pulse: CoherentPulse, n_max: int) -> np.ndarray:
    """Poisson photon-number distribution, tail folded into the last bin.

    Returns ``n_max + 1`` probabilities for n = 0 .. n_max-or-more; the fold
    makes the vector sum to one exactly.
    """
    if n_max < 2:
        raise ValueError("n_max must be at least 2")
    nbar = pulse.mean_photons
    out = np.zeros(n_max + 1)
    if nbar == 0.0:
        out[0] = 1.0
        return out
    for k in range(n_max):
        out[k] = math.exp(k * math.log(nbar) - nbar - math.lgamma(k + 1))
    out[n_max] = max(0.0, 1.0 - out[:n_max].sum())
    return out


def multiphoton_fraction(pulse: CoherentPulse) -> float:
    """P(n >= 2 | n >= 1): odds that a detected pulse carried an extra photon."""
    nbar = pulse.mean_photons
    if nbar <= 0.0:
        return 0.0
    p0 = math.exp(-nbar)
    p1 = nbar * p0
    at_least_one = 1.0 - p0
    return max(0.0, (at_least_one - p1) / at_least_one)


def spectral_sigma_khz(pulse: CoherentPulse) -> float:
    """Rms spectral width of the transform-limited Gaussian pulse, in kHz.

    Gaussian time-bandwidth product: intensity FWHM_t * FWHM_f = 2 ln2 / pi.
    The 0.7 us default pulse spans about 0.63 MHz FWHM, i.e. a 270 kHz rms
    spread comparable to the cavity linewidth; the reflection model treats
    the pulse as monochromatic unless the spectral correction is enabled.
    """
    fwhm_f_mhz = (2.0 * math.log(2.0) / math.pi) / pulse.fwhm_us
    return 1e3 * fwhm_f_mhz / (2.0 * math.sqrt(2.0 * math.log(2.0)))


@dataclass(frozen=True)
class ImperfectionConfig:
    """Calibrated imperfection budget of the gate setup.

    mode_overlap         transverse overlap of photon and cavity mode
    prep_fidelity        probability the atom starts in the intended state
    freq_jitter_khz      rms laser-cavity detuning jitter (resampled per trial)
    freq_bias_khz        static detuning offset (default zero)
    drift_phase_per_reflection  net atomic-coherence phase per reflection
                         (radians) from the slow drift of the laser-cavity
                         offset over a dataset; calibrated from the reported
                         rotated-state phase maxima, default zero
    photonic_meas_error  outcome-flip probability per photon analyzer
    loss_coupled/-un     photon non-survival per reflection, by branch
    rotation_readout_fidelity  success of the whole atomic prepare-rotate-read
                         chain, as measured by two-pulse interferometry
    """

    mode_overlap: float = 0.92
    prep_fidelity: float = 0.96
    freq_jitter_khz: float = 300.0
    freq_bias_khz: float = 0.0
    drift_phase_per_reflection: float = 0.0
    photonic_meas_error: float = 0.01
    loss_coupled: float = 0.34
    loss_uncoupled: float = 0.30
    rotation_readout_fidelity: float = 0.95

    def __post_init__(self):
        probs = {
            "mode_overlap": self.mode_overlap,
            "prep_fidelity": self.prep_fidelity,
            "photonic_meas_error": self.photonic_meas_error,
            "loss_coupled": self.loss_coupled,
            "loss_uncoupled": self.loss_uncoupled,
            "rotation_readout_fidelity": self.rotation_readout_fidelity,
        }
        for name, val in probs.items():
            if not 0.0 <= val <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {val}")
        if self.freq_jitter_khz < 0:
            raise ValueError("freq_jitter_khz must be nonnegative")

    @classmethod
    def ideal(cls) -> "ImperfectionConfig":
        return cls(mode_overlap=1.0, prep_fidelity=1.0, freq_jitter_khz=0.0,
                   freq_bias_khz=0.0, drift_phase_per_reflection=0.0,
                   photonic_meas_error=0.0, loss_coupled=0.0,
                   loss_uncoupled=0.0, rotation_readout_fidelity=1.0)

    @property
    def atomic_coherence_factor(self) -> float:
        """Dephasing factor of the atomic qubit between preparation and readout.

        The two-pulse interference calibration fixes the aggregate chain: its
        fringe has peak ``f_rr`` and contrast ``2 f_rr - 1``.  With the
        preparation error modeled separately (error atoms give a random
        outcome under rotated readout), the residual pure-dephasing factor is
        (2 f_rr - 1) / f_prep, so composing both reproduces the calibration
        exactly.
        """
        contrast = max(0.0, 2.0 * self.rotation_readout_fidelity - 1.0)
        if self.prep_fidelity <= 0.0:
            return 0.0
        return min(1.0, contrast / self.prep_fidelity)


def prep_error_channel(f_prep: float) -> KrausChannel:
    """Atom preparation: with probability 1 - f the atom lands in an error
    state that behaves as uncoupled for the gate (down-slot in this qubit
    representation).  Trace-preserving."""
    if not 0.0 <= f_prep <= 1.0:
        raise ValueError("preparation fidelity must lie in [0, 1]")
    down = DOWN.reshape(2, 1)
    ops = [math.sqrt(f_prep) * np.eye(2, dtype=complex)]
    if f_prep < 1.0:
        err = math.sqrt(1.0 - f_prep)
        ops.append(err * (down @ UP.reshape(1, 2).conj()))
        ops.append(err * (down @ DOWN.reshape(1, 2).conj()))
    return KrausChannel(tuple(ops), trace_preserving=True)


def mode_mismatch_channel(overlap: float, losses,
                          params: CavityParams = CavityParams()) -> KrausChannel:
    """Gate with probability ``overlap``; otherwise the photon reflects off the
    mirror surface with amplitude +1 (no conditional phase, no loss)."""
    if not 0.0 <= overlap <= 1.0:
        raise ValueError("overlap must lie in [0, 1]")
    gate = np.diag(gate_branch_amplitudes(params, losses, delta=0.0))
    ops = []
    if overlap > 0.0:
        ops.append(math.sqrt(overlap) * gate)
    if overlap < 1.0:
        ops.append(math.sqrt(1.0 - overlap) * np.eye(4, dtype=complex))
    preserving = losses[0] == 0.0 and losses[1] == 0.0
    return KrausChannel(tuple(ops), trace_preserving=preserving)


def sample_jitter(rng: np.random.Generator, sigma_khz: float,
                  bias_khz: float = 0.0) -> float:
    """One per-trial laser-cavity detuning draw, in angular MHz."""
    if sigma_khz < 0:
        raise ValueError("jitter width must be nonnegative")
    khz = bias_khz + (rng.normal(0.0, sigma_khz) if sigma_khz > 0 else 0.0)
    return TWO_PI * khz * 1e-3


def jitter_nodes(sigma_khz: float, bias_khz: float = 0.0, n_nodes: int = 21):
    """Gauss-Hermite nodes/weights of the jitter distribution (angular MHz).

    Used by the deterministic mode to average channels over the Gaussian
    detuning; a zero width collapses to the single bias point.
    """
    if sigma_khz == 0.0:
        return np.array([TWO_PI * bias_khz * 1e-3]), np.array([1.0])
    x, w = np.polynomial.hermite.hermgauss(n_nodes)
    deltas_khz = bias_khz + math.sqrt(2.0) * sigma_khz * x
    return TWO_PI * deltas_khz * 1e-3, w / math.sqrt(math.pi)


def confusion_matrix(e: float) -> np.ndarray:
    """Binary outcome confusion [[1-e, e], [e, 1-e]] applied to Born vectors."""
    if not 0.0 <= e <= 1.0:
        raise ValueError("flip probability must lie in [0, 1]")
    return np.array([[1.0 - e, e], [e, 1.0 - e]])


def analyzer_error_channel(e: float) -> KrausChannel:
    """State-channel form of a basis-symmetric analyzer flip.

    A flip with probability ``e`` in every measurement basis equals the
    depolarizing channel with parameter 3e/2, which is completely positive
    only for e <= 2/3.  Protocol code applies the equivalent classical
    confusion to Born probabilities instead, which carries no such cap.
    """
    if not 0.0 <= e <= 2.0 / 3.0:
        raise ValueError("channel form requires e in [0, 2/3]")
    p = 1.5 * e
    ops = [math.sqrt(1.0 - p) * PAULI_I]
    if p > 0.0:
        ops += [math.sqrt(p / 3.0) * s for s in (PAULI_X, PAULI_Y, PAULI_Z)]
    return KrausChannel(tuple(ops), trace_preserving=True)


@dataclass(frozen=True)
class DetectionModel:
    """Fluorescence hyperfine-state detection with a count threshold.

    The upper hyperfine state scatters Poissonian signal photons; the lower
    one produces clicks only through the dark channel.  Calibrated defaults
    give the balanced discrimination fidelity 0.9965.
    """

    mean_signal_photons: float = -math.log(0.004)
    dark_prob: float = 0.003
    threshold: int = 1

    def __post_init__(self):
        if self.mean_signal_photons < 0:
            raise ValueError("mean signal photon number must be nonnegative")
        if not 0.0 <= self.dark_prob < 1.0:
            raise ValueError("dark probability must lie in [0, 1)")
        if self.threshold < 1:
            raise ValueError("threshold must be at least 1")

    @property
    def dark_rate(self) -> float:
        """Poisson rate reproducing P(at least one dark count) = dark_prob."""
        return -math.log(1.0 - self.dark_prob)


def _poisson_cdf(k: int, lam: float) -> float:
    if k < 0:
        return 0.0
    if lam == 0.0:
        return 1.0
    term = math.exp(-lam)
    total = term
    for i in range(1, k + 1):
        term *= lam / i
        total += term
    return min(1.0, total)


def hyperfine_detection(true_state: str, model: DetectionModel,
                        rng: np.random.Generator):
    """Simulate one detection interval; returns (measured label, photon count)."""
    if true_state == "F2":
        count = int(rng.poisson(model.mean_signal_photons))
    elif true_state == "F1":
        count = int(rng.poisson(model.dark_rate))
    else:
        raise ValueError("true_state must be 'F1' or 'F2'")
    label = "F2" if count >= model.threshold else "F1"
    return label, count


def hyperfine_fidelity(model: DetectionModel) -> float:
    """Closed-form balanced discrimination fidelity at the configured threshold."""
    p_correct_f2 = 1.0 - _poisson_cdf(model.threshold - 1, model.mean_signal_photons)
    p_correct_f1 = _poisson_cdf(model.threshold - 1, model.dark_rate)
    return 0.5 * (p_correct_f2 + p_correct_f1)


def detection_confusion(model: DetectionModel) -> np.ndarray:
    """Column-stochastic confusion M[measured, true] for direct hyperfine readout.

    Outcome order (F2, F1), matching the atom-outcome convention where index 0
    is the detected-F2 outcome; applied to Born vectors as p' = M @ p.
    """
    p22 = 1.0 - _poisson_cdf(model.threshold - 1, model.mean_signal_photons)
    p11 = _poisson_cdf(model.threshold - 1, model.dark_rate)
    return np.array([[p22, 1.0 - p11], [1.0 - p22, p11]])
