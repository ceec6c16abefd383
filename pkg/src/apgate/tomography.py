"""Measurement simulation and density-matrix reconstruction.

Each qubit is read out in one of the three Pauli bases; a complete run covers
all 3^n basis combinations.  Counts feed either a direct linear inversion
(exact on infinite statistics, not guaranteed positive on finite counts) or
an iterative maximum-likelihood reconstruction that is always physical.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Union

import numpy as np

from .qlin import (DensityMatrix, PAULI_I, PAULI_X, PAULI_Y, PAULI_Z, X_MINUS,
                   X_PLUS, Y_MINUS, Y_PLUS, UP, DOWN)

PROB_FLOOR = 1e-12

_EIGENBASES = {
    "X": np.stack([X_PLUS, X_MINUS]),
    "Y": np.stack([Y_PLUS, Y_MINUS]),
    "Z": np.stack([UP, DOWN]),
}
_PAULIS = {"I": PAULI_I, "X": PAULI_X, "Y": PAULI_Y, "Z": PAULI_Z}


@dataclass(frozen=True)
class MeasurementSetting:
    """One basis label per qubit; outcomes are ordered by (+,-) bits."""

    labels: tuple

    def __post_init__(self):
        labels = tuple(str(l).upper() for l in self.labels)
        if not labels or any(l not in "XYZ" or len(l) != 1 for l in labels):
            raise ValueError(f"labels must each be one of X, Y, Z: {labels}")
        object.__setattr__(self, "labels", labels)

    @property
    def n_qubits(self) -> int:
        return len(self.labels)

    @property
    def name(self) -> str:
        return "".join(self.labels)

    def basis_matrix(self) -> np.ndarray:
        """Rows are the outcome bras; |amp|^2 of (matrix @ psi) are Born weights."""
        rows = np.array([[1.0 + 0j]])
        for label in self.labels:
            rows = np.kron(rows, _EIGENBASES[label])
        return rows.conj()

    def projectors(self) -> np.ndarray:
        """Stack of 2^n rank-1 projectors in outcome order."""
        b = self.basis_matrix().conj()  # rows are kets again
        return np.einsum("oi,oj->oij", b, b.conj())


def all_settings(n_qubits: int) -> List[MeasurementSetting]:
    """The complete set of 3^n basis combinations, lexicographic in (X, Y, Z)."""
    return [MeasurementSetting(labels)
            for labels in itertools.product("XYZ", repeat=n_qubits)]


def born_probabilities(rho: DensityMatrix, setting: MeasurementSetting) -> np.ndarray:
    """Born weights tr(Pi_o rho) per outcome, clamped at zero."""
    if rho.dim != 2 ** setting.n_qubits:
        raise ValueError("state and setting dimensions differ")
    bras = setting.basis_matrix()
    p = np.einsum("oi,ij,oj->o", bras, rho.entries, bras.conj()).real
    return np.clip(p, 0.0, None)


@dataclass(frozen=True)
class CountsRecord:
    """Observed outcome counts for one measurement setting."""

    setting: MeasurementSetting
    counts: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.counts, dtype=float).reshape(-1)
        if c.size != 2 ** self.setting.n_qubits:
            raise ValueError("counts length does not match the setting")
        if np.any(c < 0):
            raise ValueError("counts must be nonnegative")
        c.setflags(write=False)
        object.__setattr__(self, "counts", c)

    @property
    def total(self) -> float:
        return float(self.counts.sum())

    @property
    def frequencies(self) -> np.ndarray:
        total = self.total
        if total <= 0:
            raise ValueError("record has no counts")
        return self.counts / total


def _per_qubit_confusion(confusion, n: int) -> Optional[np.ndarray]:
    """Kron of per-qubit binary confusions; accepts a scalar or one per qubit."""
    if confusion is None:
        return None
    if np.isscalar(confusion):
        confusion = [float(confusion)] * n
    mats = []
    for e in confusion:
        e = float(e)
        if not 0.0 <= e <= 1.0:
            raise ValueError("confusion entries must lie in [0, 1]")
        mats.append(np.array([[1.0 - e, e], [e, 1.0 - e]]))
    full = np.array([[1.0]])
    for m in mats:
        full = np.kron(full, m)
    return full


def simulate_counts(rho: DensityMatrix, settings: Sequence[MeasurementSetting],
                    shots_per_setting: int, rng: np.random.Generator,
                    confusion=None) -> List[CountsRecord]:
    """Multinomial sampling of the (optionally confused) Born probabilities."""
    if shots_per_setting < 1:
        raise ValueError("shots_per_setting must be at least 1")
    records = []
    for setting in settings:
        p = born_probabilities(rho, setting)
        mix = _per_qubit_confusion(confusion, setting.n_qubits)
        if mix is not None:
            p = mix @ p
        p = np.clip(p, 0.0, None)
        p = p / p.sum()
        counts = rng.multinomial(shots_per_setting, p)
        records.append(CountsRecord(setting, counts))
    return records


def _outcome_signs(n: int) -> np.ndarray:
    """signs[q, o] = +-1 for qubit q in outcome o (bit 0 -> +1)."""
    outcomes = np.arange(2 ** n)
    signs = np.empty((n, 2 ** n))
    for q in range(n):
        bit = (outcomes >> (n - 1 - q)) & 1
        signs[q] = 1.0 - 2.0 * bit
    return signs


def linear_inversion(records: Sequence[CountsRecord]) -> np.ndarray:
    """Direct Pauli-expectation inversion of a tomographically complete run.

    Exact on exact probabilities; finite counts can produce small negative
    eigenvalues, so the raw Hermitian matrix is returned unclamped for
    diagnostic use.
    """
    if not records:
        raise ValueError("no records")
    n = records[0].setting.n_qubits
    wanted = {s.name for s in all_settings(n)}
    have = {r.setting.name for r in records}
    if wanted - have:
        raise ValueError("records do not form a tomographically complete set")
    signs = _outcome_signs(n)
    by_label: Dict[str, List[np.ndarray]] = {}
    for r in records:
        by_label.setdefault(r.setting.name, []).append(r.frequencies)
    rho = np.zeros((2 ** n, 2 ** n), dtype=complex)
    for pauli in itertools.product("IXYZ", repeat=n):
        estimates = []
        for name, freq_list in by_label.items():
            if any(p != "I" and p != name[q] for q, p in enumerate(pauli)):
                continue
            sign = np.ones(2 ** n)
            for q, p in enumerate(pauli):
                if p != "I":
                    sign = sign * signs[q]
            estimates.extend(float(freq @ sign) for freq in freq_list)
        op = np.array([[1.0 + 0j]])
        for p in pauli:
            op = np.kron(op, _PAULIS[p])
        rho += (sum(estimates) / len(estimates)) * op
    rho /= 2 ** n
    return 0.5 * (rho + rho.conj().T)


@dataclass
class ReconstructionReport:
    """Outcome of an iterative maximum-likelihood reconstruction."""

    rho: DensityMatrix
    log_likelihood: float
    iterations: int
    converged: bool
    ll_history: list = field(default_factory=list)
    mc_std: Optional[dict] = None


def _stack_records(records: Sequence[CountsRecord]):
    projs = []
    counts = []
    for r in records:
        projs.append(r.setting.projectors())
        counts.append(r.counts)
    return np.concatenate(projs, axis=0), np.concatenate(counts)


def log_likelihood(rho: DensityMatrix, records: Sequence[CountsRecord]) -> float:
    """Multinomial log-likelihood of the counts under the state."""
    projs, counts = _stack_records(records)
    p = np.einsum("rij,ji->r", projs, rho.entries).real
    return float(counts @ np.log(np.clip(p, PROB_FLOOR, None)))


def mle_reconstruct(records: Sequence[CountsRecord], max_iter: int = 5000,
                    tol: float = 1e-10, dilution: float = 0.1) -> ReconstructionReport:
    """Diluted R-rho-R fixed-point iteration.

    Updates rho <- N[(1 - d) R rho R + d rho] with
    R = sum_i (f_i / p_i(rho)) Pi_i, which keeps the iterate physical and the
    log-likelihood non-decreasing in practice; an iteration whose likelihood
    gain falls below ``tol`` stops the loop.  Probabilities are floored at
    1e-12 so occupied zero-probability bins cannot divide by zero.
    """
    if not records:
        raise ValueError("no records")
    if not 0.0 <= dilution < 1.0:
        raise ValueError("dilution must lie in [0, 1)")
    projs, counts = _stack_records(records)
    total = counts.sum()
    if total <= 0:
        raise ValueError("records contain no counts")
    dim = projs.shape[1]
    rho = np.eye(dim, dtype=complex) / dim

    def probs(m):
        return np.clip(np.einsum("rij,ji->r", projs, m).real, PROB_FLOOR, None)

    ll = float(counts @ np.log(probs(rho)))
    history = [ll]
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        weights = counts / probs(rho) / total
        r_op = np.einsum("r,rij->ij", weights, projs)
        cand = (1.0 - dilution) * (r_op @ rho @ r_op) + dilution * rho
        cand = 0.5 * (cand + cand.conj().T)
        cand /= np.trace(cand).real
        ll_new = float(counts @ np.log(probs(cand)))
        gain = ll_new - ll
        if gain < -1e-9 * (1.0 + abs(ll)):
            # Numerical stall; keep the previous (better) iterate.
            converged = True
            break
        rho = cand
        ll = ll_new
        history.append(ll)
        if gain < tol:
            converged = True
            break
    return ReconstructionReport(
        rho=DensityMatrix(rho),
        log_likelihood=ll,
        iterations=iterations,
        converged=converged,
        ll_history=history,
    )


MetricFn = Callable[[DensityMatrix], float]


def monte_carlo_errors(records: Sequence[CountsRecord],
                       metrics: Union[MetricFn, Dict[str, MetricFn]],
                       resamples: int = 100,
                       rng: Optional[np.random.Generator] = None,
                       **mle_options) -> Dict[str, float]:
    """Parametric-bootstrap standard errors of reconstruction metrics.

    Each replica redraws every setting's counts multinomially from the
    observed frequencies, reruns the maximum-likelihood reconstruction and
    evaluates the metrics; the sample standard deviation across replicas is
    the reported error.
    """
    if resamples < 2:
        raise ValueError("need at least two resamples")
    if rng is None:
        rng = np.random.default_rng()
    if callable(metrics):
        metrics = {"metric": metrics}
    values = {name: [] for name in metrics}
    for _ in range(resamples):
        replica = []
        for r in records:
            total = int(round(r.total))
            counts = rng.multinomial(total, r.frequencies)
            replica.append(CountsRecord(r.setting, counts))
        report = mle_reconstruct(replica, **mle_options)
        for name, fn in metrics.items():
            values[name].append(fn(report.rho))
    return {name: float(np.std(vals, ddof=1)) for name, vals in values.items()}


def records_to_json(records: Sequence[CountsRecord]) -> str:
    payload = {
        "settings": [r.setting.name for r in records],
        "counts": [r.counts.tolist() for r in records],
    }
    return json.dumps(payload, sort_keys=True)


def records_from_json(text: str) -> List[CountsRecord]:
    payload = json.loads(text)
    settings = payload["settings"]
    counts = payload["counts"]
    if len(settings) != len(counts):
        raise ValueError("settings and counts lengths differ")
    return [CountsRecord(MeasurementSetting(tuple(name)), np.asarray(c))
            for name, c in zip(settings, counts)]
