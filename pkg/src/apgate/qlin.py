"""Dense complex linear algebra for small multi-qubit systems.

States, density matrices, unitaries and Kraus channels for at most three
qubits, with the fixed tensor ordering (atom, photon 1, photon 2) used
throughout the package.  All containers are immutable values and every
operation is a pure function, so everything here is safe to call from
concurrent workers.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterable, Sequence, Union

import numpy as np

MAX_QUBITS = 3
HERMITICITY_TOL = 1e-10
UNITARITY_TOL = 1e-10
TRACE_TOL = 1e-10
EIGENVALUE_FLOOR = -1e-8


class PostSelectionError(RuntimeError):
    """All statistical weight was removed by post-selection."""


def _num_qubits(dim: int) -> int:
    n = dim.bit_length() - 1
    if dim < 2 or (1 << n) != dim:
        raise ValueError(f"dimension {dim} is not a power of two >= 2")
    if n > MAX_QUBITS:
        raise ValueError(f"{n} qubits exceed the supported {MAX_QUBITS}-qubit scope")
    return n


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class PureState:
    """Normalized state vector over 1..3 qubits, atom-first ordering."""

    amplitudes: np.ndarray

    def __post_init__(self):
        vec = np.array(self.amplitudes, dtype=complex).reshape(-1)
        _num_qubits(vec.size)
        norm = float(np.linalg.norm(vec))
        if norm < 1e-12:
            raise ValueError("cannot normalize a zero state vector")
        object.__setattr__(self, "amplitudes", _frozen(vec / norm))

    @property
    def dim(self) -> int:
        return self.amplitudes.size

    @property
    def n_qubits(self) -> int:
        return _num_qubits(self.dim)

    def overlap(self, other: "PureState") -> complex:
        if self.dim != other.dim:
            raise ValueError("dimension mismatch")
        return complex(np.vdot(self.amplitudes, other.amplitudes))

    def density(self) -> "DensityMatrix":
        v = self.amplitudes
        return DensityMatrix(np.outer(v, v.conj()))


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Hermitian, unit-trace, positive-semidefinite matrix over 1..3 qubits."""

    entries: np.ndarray

    def __post_init__(self):
        m = np.array(self.entries, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("density matrix must be square")
        _num_qubits(m.shape[0])
        if np.max(np.abs(m - m.conj().T)) > HERMITICITY_TOL:
            raise ValueError("matrix is not Hermitian within tolerance")
        tr = np.trace(m).real
        if abs(tr - 1.0) > TRACE_TOL:
            raise ValueError(f"trace {tr} differs from 1 beyond tolerance")
        m = 0.5 * (m + m.conj().T)
        m /= np.trace(m).real
        if np.linalg.eigvalsh(m)[0] < EIGENVALUE_FLOOR:
            raise ValueError("matrix has a negative eigenvalue beyond the floor")
        object.__setattr__(self, "entries", _frozen(m))

    @classmethod
    def from_unnormalized(cls, m: np.ndarray) -> "DensityMatrix":
        m = np.asarray(m, dtype=complex)
        tr = np.trace(m).real
        if tr < 1e-12:
            raise PostSelectionError("state has vanishing trace")
        return cls(m / tr)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    @property
    def n_qubits(self) -> int:
        return _num_qubits(self.dim)

    def to_json_dict(self) -> dict:
        return {
            "dim": self.dim,
            "re": self.entries.real.tolist(),
            "im": self.entries.imag.tolist(),
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "DensityMatrix":
        dim = int(data["dim"])
        re = np.asarray(data["re"], dtype=float)
        im = np.asarray(data["im"], dtype=float)
        if re.shape != (dim, dim) or im.shape != (dim, dim):
            raise ValueError("matrix payload does not match declared dimension")
        return cls(re + 1j * im)

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "DensityMatrix":
        return cls.from_json_dict(json.loads(text))


@dataclass(frozen=True, eq=False)
class UnitaryOp:
    """Square complex matrix with U U^dag = I within tolerance."""

    entries: np.ndarray

    def __post_init__(self):
        m = np.array(self.entries, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("unitary must be square")
        _num_qubits(m.shape[0])
        ident = np.eye(m.shape[0])
        if np.max(np.abs(m @ m.conj().T - ident)) > UNITARITY_TOL:
            raise ValueError("matrix is not unitary within tolerance")
        object.__setattr__(self, "entries", _frozen(m))

    @property
    def dim(self) -> int:
        return self.entries.shape[0]


@dataclass(frozen=True, eq=False)
class KrausChannel:
    """Set of Kraus operators; trace-decreasing channels model post-selected loss."""

    kraus_ops: tuple
    trace_preserving: bool = True

    def __post_init__(self):
        ops = tuple(_frozen(np.array(k, dtype=complex)) for k in self.kraus_ops)
        if not ops:
            raise ValueError("channel needs at least one Kraus operator")
        shape = ops[0].shape
        if len(shape) != 2 or shape[0] != shape[1]:
            raise ValueError("Kraus operators must be square")
        if any(k.shape != shape for k in ops):
            raise ValueError("Kraus operators must share one dimension")
        total = sum(k.conj().T @ k for k in ops)
        if self.trace_preserving:
            if np.max(np.abs(total - np.eye(shape[0]))) > HERMITICITY_TOL:
                raise ValueError("Kraus operators do not satisfy completeness")
        else:
            if np.linalg.eigvalsh(total)[-1] > 1.0 + HERMITICITY_TOL:
                raise ValueError("Kraus operators exceed the trace-decreasing bound")
        object.__setattr__(self, "kraus_ops", ops)

    @property
    def dim(self) -> int:
        return self.kraus_ops[0].shape[0]


# Pauli matrices and frequently used single-qubit kets.
PAULI_I = _frozen(np.eye(2, dtype=complex))
PAULI_X = _frozen(np.array([[0, 1], [1, 0]], dtype=complex))
PAULI_Y = _frozen(np.array([[0, -1j], [1j, 0]], dtype=complex))
PAULI_Z = _frozen(np.array([[1, 0], [0, -1]], dtype=complex))

UP = _frozen(np.array([1, 0], dtype=complex))
DOWN = _frozen(np.array([0, 1], dtype=complex))
X_PLUS = _frozen(np.array([1, 1], dtype=complex) / math.sqrt(2))
X_MINUS = _frozen(np.array([1, -1], dtype=complex) / math.sqrt(2))
Y_PLUS = _frozen(np.array([1, 1j], dtype=complex) / math.sqrt(2))
Y_MINUS = _frozen(np.array([1, -1j], dtype=complex) / math.sqrt(2))


def product_state(*factors: Sequence[complex]) -> PureState:
    """Kronecker product of single-qubit kets, first factor = atom."""
    vec = np.array([1.0], dtype=complex)
    for f in factors:
        vec = np.kron(vec, np.asarray(f, dtype=complex))
    return PureState(vec)


Tensorable = Union[PureState, DensityMatrix, UnitaryOp]


def tensor(a: Tensorable, b: Tensorable) -> Tensorable:
    """Kronecker product of two operands of the same kind (atom-first order)."""
    if isinstance(a, PureState) and isinstance(b, PureState):
        return PureState(np.kron(a.amplitudes, b.amplitudes))
    if isinstance(a, DensityMatrix) and isinstance(b, DensityMatrix):
        return DensityMatrix(np.kron(a.entries, b.entries))
    if isinstance(a, UnitaryOp) and isinstance(b, UnitaryOp):
        return UnitaryOp(np.kron(a.entries, b.entries))
    raise TypeError("tensor expects two operands of the same kind")


def partial_trace(rho: DensityMatrix, keep: Iterable[int]) -> DensityMatrix:
    """Trace out every qubit not listed in ``keep`` (indices in atom-first order)."""
    keep = sorted(set(int(q) for q in keep))
    if not keep:
        raise ValueError("keep-set must not be empty")
    n = rho.n_qubits
    if any(q < 0 or q >= n for q in keep):
        raise ValueError(f"keep indices {keep} out of range for {n} qubits")
    if len(keep) == n:
        return rho
    letters = "abcdefgh"
    row = list(letters[:n])
    col = list(letters[n:2 * n])
    for q in range(n):
        if q not in keep:
            col[q] = row[q]
    sub_in = "".join(row + col)
    sub_out = "".join([row[q] for q in keep] + [col[q] for q in keep])
    t = rho.entries.reshape((2,) * (2 * n))
    out = np.einsum(f"{sub_in}->{sub_out}", t)
    d = 2 ** len(keep)
    return DensityMatrix(out.reshape(d, d))


def _embed_single_qubit(op: np.ndarray, subsystem: int, n: int) -> np.ndarray:
    full = np.array([[1.0 + 0j]])
    for q in range(n):
        full = np.kron(full, op if q == subsystem else np.eye(2))
    return full


def project_and_renormalize(state, projector, subsystem: int):
    """Apply a single-qubit projector at ``subsystem`` and renormalize.

    Returns ``(state', probability)``; a Born weight of zero yields the
    designated empty outcome ``(None, 0.0)``.
    """
    p = np.asarray(getattr(projector, "entries", projector), dtype=complex)
    if p.shape != (2, 2):
        raise ValueError("projector must be a 2x2 matrix")
    if np.max(np.abs(p - p.conj().T)) > HERMITICITY_TOL:
        raise ValueError("projector must be Hermitian")
    if np.max(np.abs(p @ p - p)) > HERMITICITY_TOL:
        raise ValueError("projector must be idempotent")
    n = state.n_qubits
    if subsystem < 0 or subsystem >= n:
        raise ValueError("subsystem index out of range")
    full = _embed_single_qubit(p, subsystem, n)
    if isinstance(state, PureState):
        vec = full @ state.amplitudes
        prob = float(np.vdot(vec, vec).real)
        if prob < 1e-24:
            return None, 0.0
        return PureState(vec), prob
    if isinstance(state, DensityMatrix):
        out = full @ state.entries @ full.conj().T
        prob = float(np.trace(out).real)
        if prob < 1e-24:
            return None, 0.0
        return DensityMatrix(out / prob), prob
    raise TypeError("state must be a PureState or DensityMatrix")


def rotation(theta: float, phi: float) -> UnitaryOp:
    """Single-qubit rotation exp(-i theta/2 (cos(phi) X + sin(phi) Y))."""
    axis = math.cos(phi) * PAULI_X + math.sin(phi) * PAULI_Y
    m = math.cos(theta / 2) * PAULI_I - 1j * math.sin(theta / 2) * axis
    return UnitaryOp(m)


def fidelity_pure(rho: DensityMatrix, target: PureState) -> float:
    """Overlap <psi| rho |psi>, clamped to [0, 1]."""
    if rho.dim != target.dim:
        raise ValueError("dimension mismatch between state and target")
    v = target.amplitudes
    f = float(np.real(v.conj() @ rho.entries @ v))
    return min(1.0, max(0.0, f))


def optimal_phase_fidelity(rho, u: PureState, v: PureState):
    """Best fidelity against (|u> + e^{-i phi}|v>)/sqrt(2) over the phase phi.

    Closed form: f_max = (rho_uu + rho_vv)/2 + |rho_uv| at phi* = arg(rho_uv).
    When the u-v coherence vanishes the phase is undetermined and 0 is
    reported.  ``rho`` may be a DensityMatrix or a raw Hermitian matrix.
    """
    m = np.asarray(getattr(rho, "entries", rho), dtype=complex)
    au, av = u.amplitudes, v.amplitudes
    if m.shape != (au.size, au.size) or au.size != av.size:
        raise ValueError("dimension mismatch")
    if abs(np.vdot(au, av)) > 1e-10:
        raise ValueError("u and v must be orthonormal")
    ruu = float(np.real(au.conj() @ m @ au))
    rvv = float(np.real(av.conj() @ m @ av))
    ruv = complex(au.conj() @ m @ av)
    base = 0.5 * (ruu + rvv)
    if abs(ruv) < 1e-12:
        return 0.0, min(1.0, max(0.0, base))
    return float(np.angle(ruv)), min(1.0, max(0.0, base + abs(ruv)))


def apply_channel(rho: DensityMatrix, ch: KrausChannel):
    """Apply a Kraus channel; returns (normalized state, success probability)."""
    if ch.dim != rho.dim:
        raise ValueError("channel and state dimensions differ")
    out = np.zeros_like(rho.entries)
    for k in ch.kraus_ops:
        out = out + k @ rho.entries @ k.conj().T
    if ch.trace_preserving:
        return DensityMatrix(out), 1.0
    prob = float(np.trace(out).real)
    if prob < 1e-12:
        raise PostSelectionError("channel output has zero trace")
    return DensityMatrix(out / prob), prob


def states_equal_up_to_phase(a: PureState, b: PureState, tol: float = 1e-10) -> bool:
    """Equality modulo a global phase: | |<a|b>| - 1 | <= tol."""
    return abs(abs(a.overlap(b)) - 1.0) <= tol
