"""RVB trial-state circuits: singlet pairs followed by D brickwork layers of eSWAP gates."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

# CNOT cost charged per gate kind; eSWAP is costed as its 3-CNOT decomposition
CNOT_COST = {"CNOT": 1, "ESWAP": 3}
SINGLE_QUBIT_GATES = ("X", "H", "S", "SDG")
TWO_QUBIT_GATES = ("CNOT", "ESWAP")


@dataclass(frozen=True)
class Gate:
    kind: str
    qubits: tuple[int, ...]
    param: int | None = None  # index into Circuit.params (ESWAP only)

    def to_json(self) -> dict:
        out = {"kind": self.kind, "qubits": list(self.qubits)}
        if self.param is not None:
            out["param"] = self.param
        return out


@dataclass(frozen=True)
class Circuit:
    num_qubits: int
    gates: tuple[Gate, ...] = ()
    params: np.ndarray = field(default_factory=lambda: np.zeros(0))
    depth: int | None = None  # number of mixing layers for RVB circuits

    def __post_init__(self):
        object.__setattr__(self, "gates", tuple(self.gates))
        params = np.array(self.params, dtype=float).ravel()
        params.flags.writeable = False
        object.__setattr__(self, "params", params)
        for g in self.gates:
            if g.kind not in SINGLE_QUBIT_GATES + TWO_QUBIT_GATES:
                raise ValueError(f"unknown gate kind {g.kind!r}")
            want = 1 if g.kind in SINGLE_QUBIT_GATES else 2
            if len(g.qubits) != want or any(not 0 <= k < self.num_qubits for k in g.qubits):
                raise ValueError(f"bad qubits {g.qubits} for {g.kind}")
            if want == 2 and g.qubits[0] == g.qubits[1]:
                raise ValueError(f"{g.kind} needs two distinct qubits")
            if g.kind == "ESWAP" and not (g.param is not None and 0 <= g.param < params.size):
                raise ValueError("ESWAP gate must reference a parameter slot")

    def angle(self, gate: Gate) -> float:
        return float(self.params[gate.param])

    def bind(self, theta) -> "Circuit":
        theta = np.asarray(theta, dtype=float).ravel()
        if theta.size != self.params.size:
            raise ValueError(f"expected {self.params.size} parameters, got {theta.size}")
        return Circuit(self.num_qubits, self.gates, theta, self.depth)

    def to_json(self) -> dict:
        return {
            "q": self.num_qubits,
            "D": self.depth,
            "theta": [float(t) for t in self.params],
            "gates": [g.to_json() for g in self.gates],
        }

    @classmethod
    def from_json(cls, obj: dict | str) -> "Circuit":
        if isinstance(obj, str):
            obj = json.loads(obj)
        gates = [Gate(g["kind"], tuple(g["qubits"]), g.get("param")) for g in obj["gates"]]
        return cls(int(obj["q"]), gates, obj.get("theta", []), obj.get("D"))


def singlet_gates(a: int, b: int) -> list[Gate]:
    """|00> -> (|01> - |10>)/sqrt(2) on (a, b): X_a X_b, H_a, CNOT a->b."""
    return [Gate("X", (a,)), Gate("X", (b,)), Gate("H", (a,)), Gate("CNOT", (a, b))]


def brickwork_pairs(q: int) -> list[tuple[int, int]]:
    """Even bonds (0,1),(2,3),... then odd bonds (1,2),...,(q-1,0); q pairs in total."""
    even = [(i, i + 1) for i in range(0, q, 2)]
    odd = [(i, (i + 1) % q) for i in range(1, q, 2)]
    return even + odd


def rvb_circuit(q: int, D: int, theta=None) -> Circuit:
    if q < 2 or q % 2:
        raise ValueError(f"RVB circuits need an even qubit count >= 2, got {q}")
    if D < 0:
        raise ValueError("D must be >= 0")
    theta = np.zeros(D * q) if theta is None else np.asarray(theta, dtype=float).ravel()
    if theta.size != D * q:
        raise ValueError(f"expected D*q = {D * q} parameters, got {theta.size}")
    gates: list[Gate] = []
    for a in range(0, q, 2):
        gates += singlet_gates(a, a + 1)
    pairs = brickwork_pairs(q)
    slot = 0
    for _ in range(D):
        for a, b in pairs:
            gates.append(Gate("ESWAP", (a, b), slot))
            slot += 1
    return Circuit(q, gates, theta, D)


def cnot_count(c: Circuit) -> int:
    return sum(CNOT_COST.get(g.kind, 0) for g in c.gates)


def prima_facie_error(n_cx: int, eps_cx: float) -> float:
    """Probability that at least one of ``n_cx`` CNOTs fails at rate ``eps_cx``."""
    if not 0.0 <= eps_cx <= 1.0:
        raise ValueError("eps_cx must be in [0, 1]")
    return 1.0 - (1.0 - eps_cx) ** n_cx


def eswap_matrix(theta: float) -> np.ndarray:
    """``exp(-i theta/2 SWAP) = cos(theta/2) I - i sin(theta/2) SWAP``."""
    swap = np.eye(4)[[0, 2, 1, 3]]
    return np.cos(theta / 2) * np.eye(4) - 1j * np.sin(theta / 2) * swap
