"""Statevector and density-matrix simulation with the noise channels used in the experiments.

Qubit ``j`` is bit ``j`` of the basis index.  Two-qubit gate matrices act on
the local index ``2*bit(a) + bit(b)`` for ``gate.qubits == (a, b)``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from .ansatz import Circuit, Gate, eswap_matrix

DM_MAX_QUBITS = 12

SQ2 = 1 / np.sqrt(2)
GATES_1Q = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
    "H": np.array([[SQ2, SQ2], [SQ2, -SQ2]], dtype=complex),
    "S": np.array([[1, 0], [0, 1j]], dtype=complex),
    "SDG": np.array([[1, 0], [0, -1j]], dtype=complex),
}
CNOT_MATRIX = np.eye(4, dtype=complex)[[0, 1, 3, 2]]


@dataclass
class QuantumState:
    """Statevector (``data.ndim == 1``) or density matrix (``data.ndim == 2``)."""

    num_qubits: int
    data: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=complex)
        dim = 1 << self.num_qubits
        if self.data.ndim == 1 and self.data.shape == (dim,):
            return
        if self.data.ndim == 2 and self.data.shape == (dim, dim):
            return
        raise ValueError(f"array of shape {self.data.shape} is not a {self.num_qubits}-qubit state")

    @property
    def kind(self) -> str:
        return "statevector" if self.data.ndim == 1 else "density_matrix"

    @property
    def is_density_matrix(self) -> bool:
        return self.data.ndim == 2

    @classmethod
    def zero(cls, q: int) -> "QuantumState":
        psi = np.zeros(1 << q, dtype=complex)
        psi[0] = 1.0
        return cls(q, psi)

    @classmethod
    def basis(cls, q: int, index: int) -> "QuantumState":
        psi = np.zeros(1 << q, dtype=complex)
        psi[index] = 1.0
        return cls(q, psi)

    @classmethod
    def from_vector(cls, psi) -> "QuantumState":
        psi = np.asarray(psi, dtype=complex)
        q = psi.size.bit_length() - 1
        return cls(q, psi)

    @classmethod
    def maximally_mixed(cls, q: int) -> "QuantumState":
        dim = 1 << q
        return cls(q, np.eye(dim, dtype=complex) / dim)

    def copy(self) -> "QuantumState":
        return QuantumState(self.num_qubits, self.data.copy())

    def to_density_matrix(self, max_qubits: int = DM_MAX_QUBITS) -> "QuantumState":
        if self.is_density_matrix:
            return self.copy()
        if self.num_qubits > max_qubits:
            raise ValueError(f"density matrices are capped at {max_qubits} qubits")
        return QuantumState(self.num_qubits, np.outer(self.data, self.data.conj()))

    def probabilities(self) -> np.ndarray:
        if self.is_density_matrix:
            return np.clip(np.real(np.diagonal(self.data)), 0.0, None)
        return np.abs(self.data) ** 2

    def trace(self) -> float:
        if self.is_density_matrix:
            return float(np.real(np.trace(self.data)))
        return float(np.vdot(self.data, self.data).real)

    def check(self, tol: float = 1e-9) -> None:
        """Raise if the state is not normalized (and Hermitian PSD for a density matrix)."""
        if abs(self.trace() - 1.0) > tol:
            raise ValueError(f"state norm/trace {self.trace()} != 1")
        if self.is_density_matrix:
            if not np.allclose(self.data, self.data.conj().T, atol=tol, rtol=0):
                raise ValueError("density matrix is not Hermitian")
            if np.linalg.eigvalsh(self.data).min() < -tol:
                raise ValueError("density matrix is not positive semidefinite")


def trace_distance(a: QuantumState, b: QuantumState) -> float:
    ra = a.to_density_matrix().data
    rb = b.to_density_matrix().data
    return float(0.5 * np.abs(np.linalg.eigvalsh(ra - rb)).sum())


# noise specification ---------------------------------------------------------


@dataclass(frozen=True)
class DeviceParams:
    """Per-gate error rates; defaults are representative, not calibrated to any device."""

    eps_cx: float = 0.01
    eps_1q: float = 0.001
    readout_flip: float = 0.02
    alpha: float = 1.0

    def __post_init__(self):
        for name in ("eps_cx", "eps_1q", "readout_flip", "alpha"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")
        if self.readout_flip > 0.5:
            raise ValueError("readout_flip must be <= 0.5")

    @property
    def cx_rate(self) -> float:
        return self.alpha * self.eps_cx

    @property
    def one_qubit_rate(self) -> float:
        return self.alpha * self.eps_1q

    @property
    def readout_rate(self) -> float:
        return self.alpha * self.readout_flip

    def scaled(self, alpha: float) -> "DeviceParams":
        return DeviceParams(self.eps_cx, self.eps_1q, self.readout_flip, alpha)

    @classmethod
    def from_file(cls, path: str | Path) -> "DeviceParams":
        obj = json.loads(Path(path).read_text())
        return cls(**{k: float(obj[k]) for k in ("eps_cx", "eps_1q", "readout_flip", "alpha") if k in obj})

    def to_json(self) -> dict:
        return {"eps_cx": self.eps_cx, "eps_1q": self.eps_1q, "readout_flip": self.readout_flip, "alpha": self.alpha}


CHANNELS = ("none", "white", "depolarize", "dephase", "device")


@dataclass(frozen=True)
class NoiseSpec:
    channel: str = "none"
    p: float = 0.0
    device: DeviceParams = field(default_factory=DeviceParams)

    def __post_init__(self):
        if self.channel not in CHANNELS:
            raise ValueError(f"unknown channel {self.channel!r}; expected one of {CHANNELS}")
        _check_p(self.p)

    @property
    def readout_flip(self) -> float:
        return self.device.readout_rate if self.channel == "device" else 0.0

    def to_json(self) -> dict:
        return {"channel": self.channel, "p": self.p, "device": self.device.to_json()}


def _check_p(p: float) -> None:
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"noise probability must be in [0, 1], got {p}")


# gate kernels ----------------------------------------------------------------


@lru_cache(maxsize=None)
def _perm_swap(q: int, a: int, b: int) -> np.ndarray:
    idx = np.arange(1 << q, dtype=np.int64)
    diff = ((idx >> a) ^ (idx >> b)) & 1
    return idx ^ (diff * ((1 << a) | (1 << b)))


@lru_cache(maxsize=None)
def _perm_cnot(q: int, control: int, target: int) -> np.ndarray:
    idx = np.arange(1 << q, dtype=np.int64)
    return idx ^ (((idx >> control) & 1) << target)


def _apply_1q_rows(arr: np.ndarray, u: np.ndarray, j: int, q: int) -> np.ndarray:
    # rows split as (high bits, bit j, low bits and all columns)
    shape = arr.shape
    t = arr.reshape(1 << (q - 1 - j), 2, -1)
    return np.matmul(u, t).reshape(shape)


def _apply_2q_rows(arr: np.ndarray, u: np.ndarray, a: int, b: int, q: int) -> np.ndarray:
    shape = arr.shape
    t = arr.reshape([2] * q + [-1])
    ax_a, ax_b = q - 1 - a, q - 1 - b
    u4 = u.reshape(2, 2, 2, 2)
    out = np.tensordot(u4, t, axes=([2, 3], [ax_a, ax_b]))
    out = np.moveaxis(out, [0, 1], [ax_a, ax_b])
    return out.reshape(shape)


def apply_unitary(state: QuantumState, u: np.ndarray, qubits: tuple[int, ...]) -> QuantumState:
    """Apply a 1- or 2-qubit unitary (general dense kernel)."""
    q = state.num_qubits
    if len(qubits) == 1:
        fn = lambda arr, m: _apply_1q_rows(arr, m, qubits[0], q)
    elif len(qubits) == 2:
        fn = lambda arr, m: _apply_2q_rows(arr, m, qubits[0], qubits[1], q)
    else:
        raise ValueError("only 1- and 2-qubit unitaries are supported")
    data = state.data
    if state.is_density_matrix:
        # U rho U^dagger = U (U rho)^dagger for Hermitian rho
        half = fn(data, u)
        data = fn(half.conj().T, u)
    else:
        data = fn(data, u)
    return QuantumState(q, data)


def _apply_gate_inplace(state: QuantumState, gate: Gate, angle: float | None) -> None:
    q = state.num_qubits
    data = state.data
    dm = state.is_density_matrix
    if gate.kind == "ESWAP":
        perm = _perm_swap(q, *gate.qubits)
        c, s = np.cos(angle / 2), np.sin(angle / 2)
        if dm:
            srho = data[perm]
            rhos = data[:, perm]
            state.data = c * c * data + s * s * srho[:, perm] + 1j * c * s * (rhos - srho)
        else:
            state.data = c * data - 1j * s * data[perm]
        return
    if gate.kind == "CNOT":
        perm = _perm_cnot(q, *gate.qubits)
        state.data = data[perm][:, perm] if dm else data[perm]
        return
    u = GATES_1Q[gate.kind]
    j = gate.qubits[0]
    if dm:
        half = _apply_1q_rows(data, u, j, q)
        state.data = _apply_1q_rows(half.conj().T, u, j, q)
    else:
        state.data = _apply_1q_rows(data, u, j, q)


def apply_circuit(
    circuit: Circuit,
    state: QuantumState,
    noise: NoiseSpec | None = None,
    *,
    max_dm_qubits: int = DM_MAX_QUBITS,
) -> QuantumState:
    """Run ``circuit`` on ``state``.

    ``white``/``depolarize``/``dephase`` noise is applied once to the output
    state.  ``device`` noise interleaves depolarizing channels after every gate
    (rate ``alpha*eps_cx`` per CNOT-equivalent, ``alpha*eps_1q`` per
    single-qubit gate); its readout error is left to the measurement layer.
    """
    if circuit.num_qubits != state.num_qubits:
        raise ValueError(f"circuit has {circuit.num_qubits} qubits, state has {state.num_qubits}")
    channel = noise.channel if noise is not None else "none"
    if state.is_density_matrix and state.num_qubits > max_dm_qubits:
        raise ValueError(f"density-matrix simulation is capped at {max_dm_qubits} qubits")
    if channel == "device" and not state.is_density_matrix:
        raise ValueError("device noise requires a density-matrix input state")
    out = state.copy()
    dev = noise.device if channel == "device" else None
    for g in circuit.gates:
        _apply_gate_inplace(out, g, circuit.angle(g) if g.kind == "ESWAP" else None)
        if dev is None:
            continue
        if g.kind == "ESWAP":
            # three CNOT-equivalents, plus one rotation on each qubit
            for _ in range(3):
                out = depolarize(out, dev.cx_rate, g.qubits)
            for k in g.qubits:
                out = depolarize(out, dev.one_qubit_rate, (k,))
        elif g.kind == "CNOT":
            out = depolarize(out, dev.cx_rate, g.qubits)
        else:
            out = depolarize(out, dev.one_qubit_rate, g.qubits)
    if channel in ("white", "depolarize", "dephase"):
        if not out.is_density_matrix:
            out = out.to_density_matrix(max_dm_qubits)
        if channel == "white":
            out = channel_global(out, noise.p)
        else:
            out = channel_local(out, noise.p, channel)
    return out


# channels ------------------------------------------------------------------


def _require_dm(state: QuantumState) -> None:
    if not state.is_density_matrix:
        raise ValueError("channel requires a density-matrix state")


def channel_global(state: QuantumState, p: float) -> QuantumState:
    """Global white noise ``rho -> (1-p) rho + p I/2^q``."""
    _require_dm(state)
    _check_p(p)
    dim = 1 << state.num_qubits
    out = (1 - p) * state.data
    out[np.diag_indices(dim)] += p / dim
    return QuantumState(state.num_qubits, out)


def depolarize(state: QuantumState, p: float, qubits) -> QuantumState:
    """k-qubit depolarizing ``rho -> (1-p) rho + p (I/2^k (x) tr_Q rho)`` on ``qubits``."""
    _require_dm(state)
    _check_p(p)
    if p == 0.0:
        return state
    q = state.num_qubits
    qubits = tuple(qubits)
    k = len(qubits)
    t = state.data.reshape([2] * (2 * q))
    src = [q - 1 - j for j in qubits] + [2 * q - 1 - j for j in qubits]
    dst = list(range(2 * k))
    t = np.moveaxis(t, src, dst)
    rest_shape = t.shape[2 * k:]
    t = t.reshape(1 << k, 1 << k, 1 << (q - k), 1 << (q - k))
    reduced = np.einsum("aaij->ij", t)
    out = (1 - p) * t
    for a in range(1 << k):
        out[a, a] += (p / (1 << k)) * reduced
    out = out.reshape([2] * (2 * k) + list(rest_shape))
    out = np.moveaxis(out, dst, src)
    return QuantumState(q, out.reshape(state.data.shape))


def dephase(state: QuantumState, p: float, qubit: int) -> QuantumState:
    """``rho -> (1-p/2) rho + (p/2) Z rho Z`` on one qubit."""
    _require_dm(state)
    _check_p(p)
    q = state.num_qubits
    t = state.data.reshape(1 << (q - 1 - qubit), 2, 1 << qubit, 1 << (q - 1 - qubit), 2, 1 << qubit).copy()
    t[:, 0, :, :, 1, :] *= 1 - p
    t[:, 1, :, :, 0, :] *= 1 - p
    return QuantumState(q, t.reshape(state.data.shape))


def channel_local(state: QuantumState, p: float, kind: str = "depolarize", qubits=None) -> QuantumState:
    """Same single-qubit channel on each listed qubit (default: all)."""
    _require_dm(state)
    _check_p(p)
    qubits = range(state.num_qubits) if qubits is None else qubits
    out = state
    for j in qubits:
        if kind == "depolarize":
            out = depolarize(out, p, (j,))
        elif kind == "dephase":
            out = dephase(out, p, j)
        else:
            raise ValueError(f"unknown local channel {kind!r}")
    return out


def fidelity(state: QuantumState, phi0) -> float:
    """``<phi0|rho|phi0>`` (or ``|<phi0|psi>|^2`` for a statevector)."""
    phi0 = np.asarray(getattr(phi0, "data", phi0), dtype=complex)
    if phi0.shape[0] != state.data.shape[0]:
        raise ValueError("dimension mismatch")
    if state.is_density_matrix:
        f = np.real(np.vdot(phi0, state.data @ phi0))
    else:
        f = abs(np.vdot(phi0, state.data)) ** 2
    return float(min(max(f, 0.0), 1.0))


def measure_readout_noise(probs, flip: float) -> np.ndarray:
    """Flip every bit of the outcome independently with probability ``flip``."""
    if not 0.0 <= flip <= 0.5:
        raise ValueError("flip must be in [0, 0.5]")
    probs = np.asarray(probs, dtype=float)
    if flip == 0.0:
        return probs.copy()
    q = probs.size.bit_length() - 1
    t = probs.reshape([2] * q)
    for ax in range(q):
        t = (1 - flip) * t + flip * np.flip(t, axis=ax)
    return t.reshape(probs.shape)
