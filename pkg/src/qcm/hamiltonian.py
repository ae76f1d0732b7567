"""Hamiltonian families: Heisenberg graphs, GUE matrices, truncated oscillator spectra.

Also the exact reference ground state used for every approximation-error axis.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from math import comb
from typing import Sequence

import numpy as np
import scipy.sparse.linalg as spla

from .pauli import PauliSum
from .rng import make_rng, spawn_seeds

DENSE_MAX_QUBITS = 12
GUE_MAX_DIM = 4096


@dataclass(frozen=True)
class Edge:
    i: int
    j: int
    jx: float = 1.0
    jy: float = 1.0
    jz: float = 1.0


@dataclass(frozen=True)
class SpinGraph:
    """Couplings of ``H = 1/(4q) sum_<ij> (Jx XX + Jy YY + Jz ZZ)``."""

    num_qubits: int
    edges: tuple[Edge, ...]
    seed: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "edges", tuple(self.edges))
        seen = set()
        for e in self.edges:
            if not (0 <= e.i < self.num_qubits and 0 <= e.j < self.num_qubits) or e.i == e.j:
                raise ValueError(f"invalid edge ({e.i}, {e.j}) for {self.num_qubits} qubits")
            key = (min(e.i, e.j), max(e.i, e.j))
            if key in seen:
                raise ValueError(f"duplicate edge {key}")
            seen.add(key)

    def to_pauli(self) -> PauliSum:
        q = self.num_qubits
        terms = []
        for e in self.edges:
            for p, J in (("X", e.jx), ("Y", e.jy), ("Z", e.jz)):
                chars = ["I"] * q
                chars[e.i] = chars[e.j] = p
                terms.append(("".join(chars), J / (4 * q)))
        return PauliSum.from_terms(q, terms)

    def to_json(self) -> dict:
        out = {
            "q": self.num_qubits,
            "edges": [{"i": e.i, "j": e.j, "jx": e.jx, "jy": e.jy, "jz": e.jz} for e in self.edges],
        }
        if self.seed is not None:
            out["seed"] = self.seed
        return out

    @classmethod
    def from_json(cls, obj: dict | str) -> "SpinGraph":
        if isinstance(obj, str):
            obj = json.loads(obj)
        edges = [Edge(int(e["i"]), int(e["j"]), float(e["jx"]), float(e["jy"]), float(e["jz"])) for e in obj["edges"]]
        return cls(int(obj["q"]), edges, obj.get("seed"))


def ring_edges(q: int) -> list[tuple[int, int]]:
    if q == 2:
        return [(0, 1)]
    if q < 3:
        raise ValueError("a periodic ring needs q >= 3 (q=2 gives a single open edge)")
    return [(i, (i + 1) % q) for i in range(q)]


def heisenberg_graph(q: int, couplings: str | Sequence[tuple[float, float, float]] = "uniform") -> SpinGraph:
    pairs = ring_edges(q)
    if isinstance(couplings, str):
        if couplings != "uniform":
            raise ValueError(f"unknown coupling preset {couplings!r}")
        couplings = [(1.0, 1.0, 1.0)] * len(pairs)
    if len(couplings) != len(pairs):
        raise ValueError(f"expected {len(pairs)} couplings, got {len(couplings)}")
    return SpinGraph(q, [Edge(i, j, *map(float, J)) for (i, j), J in zip(pairs, couplings)])


def heisenberg_ring(q: int, couplings: str | Sequence[tuple[float, float, float]] = "uniform") -> PauliSum:
    """Nearest-neighbour periodic Heisenberg ring (single open edge for q=2)."""
    return heisenberg_graph(q, couplings).to_pauli()


def random_heisenberg_graph(q: int, seed: int, low: float = 0.0, high: float = 1.0) -> SpinGraph:
    """Isotropic random ring: one ``J ~ U[low, high]`` per edge on all three axes."""
    rng = make_rng(seed)
    pairs = ring_edges(q)
    J = rng.uniform(low, high, size=len(pairs))
    return SpinGraph(q, [Edge(i, j, float(v), float(v), float(v)) for (i, j), v in zip(pairs, J)], seed=seed)


def random_heisenberg_ensemble(q: int, count: int, seed: int, low: float = 0.0, high: float = 1.0) -> list[SpinGraph]:
    if count < 1:
        raise ValueError("count must be >= 1")
    return [random_heisenberg_graph(q, s, low, high) for s in spawn_seeds(seed, count)]


# dense matrices --------------------------------------------------------------


@dataclass(frozen=True)
class DenseHamiltonian:
    matrix: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("matrix must be square")
        if m.shape[0] > GUE_MAX_DIM:
            raise ValueError(f"dense Hamiltonians are limited to dim {GUE_MAX_DIM}")
        if not np.allclose(m, m.conj().T, atol=1e-12, rtol=0):
            raise ValueError("matrix is not Hermitian")
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def num_qubits(self) -> int | None:
        q = self.dim.bit_length() - 1
        return q if 1 << q == self.dim else None

    def power(self, k: int) -> np.ndarray:
        return np.linalg.matrix_power(self.matrix, k)


def random_gue(dim: int, seed: int) -> DenseHamiltonian:
    """``(A + A^dagger)/2`` with ``A_ij`` standard complex Gaussian (E|A_ij|^2 = 1)."""
    if not 1 <= dim <= GUE_MAX_DIM:
        raise ValueError(f"dim must be in [1, {GUE_MAX_DIM}], got {dim}")
    rng = make_rng(seed)
    a = (rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))) / np.sqrt(2)
    m = (a + a.conj().T) / 2
    return DenseHamiltonian(m, seed=seed)


# ground states ---------------------------------------------------------------


class ConvergenceError(RuntimeError):
    pass


def exact_ground(h, *, method: str = "auto", tol: float = 1e-12, maxiter: int = 5000, seed: int = 0):
    """Lowest eigenvalue and a unit eigenvector.

    ``method='dense'`` diagonalizes the full matrix; ``'iterative'`` runs
    restarted Lanczos (ARPACK) with the matrix-free Pauli apply.  ``'auto'``
    picks dense up to 12 qubits.
    """
    if isinstance(h, DenseHamiltonian):
        w, v = np.linalg.eigh(h.matrix)
        return float(w[0]), v[:, 0]
    if not isinstance(h, PauliSum):
        raise TypeError(f"unsupported Hamiltonian type {type(h).__name__}")
    if method == "auto":
        method = "dense" if h.num_qubits <= DENSE_MAX_QUBITS else "iterative"
    if method == "dense":
        if h.num_qubits > DENSE_MAX_QUBITS:
            raise ValueError(f"dense path limited to {DENSE_MAX_QUBITS} qubits")
        m = h.to_matrix()
        if np.abs(m.imag).max(initial=0.0) < 1e-14:
            w, v = np.linalg.eigh(m.real)
        else:
            w, v = np.linalg.eigh(m)
        return float(w[0]), v[:, 0].astype(complex)
    if method != "iterative":
        raise ValueError(f"unknown method {method!r}")
    dim = 1 << h.num_qubits
    op = spla.LinearOperator((dim, dim), matvec=h.apply, dtype=complex)
    v0 = make_rng(seed).standard_normal(dim).astype(complex)
    try:
        w, v = spla.eigsh(op, k=1, which="SA", tol=tol, maxiter=maxiter, v0=v0, ncv=min(dim, 40))
    except spla.ArpackNoConvergence as exc:
        raise ConvergenceError(f"Lanczos did not converge in {maxiter} restarts") from exc
    psi = v[:, 0]
    return float(w[0]), psi / np.linalg.norm(psi)


# truncated harmonic oscillator ----------------------------------------------


@dataclass(frozen=True)
class OscillatorSpectrum:
    """Levels ``E_j = E0 + j*gap`` for ``j = 0 .. num_levels-1``."""

    ground_energy: float
    gap: float
    num_levels: int

    def __post_init__(self):
        if self.num_levels < 1:
            raise ValueError("num_levels must be >= 1")

    def levels(self) -> np.ndarray:
        return self.ground_energy + self.gap * np.arange(self.num_levels)


def power_sums(n_levels: int, max_power: int = 5) -> list[int]:
    """Exact ``sum_{j=0}^{N-1} j**m`` for ``m = 0..max_power`` (Faulhaber)."""
    if max_power > 5:
        raise ValueError("closed forms implemented up to m = 5")
    n = n_levels - 1
    s = [
        n_levels,
        n * (n + 1) // 2,
        n * (n + 1) * (2 * n + 1) // 6,
        (n * (n + 1) // 2) ** 2,
        n * (n + 1) * (2 * n + 1) * (3 * n * n + 3 * n - 1) // 30,
        n * n * (n + 1) ** 2 * (2 * n * n + 2 * n - 1) // 12,
    ]
    return s[: max_power + 1]


def oscillator_traces(spec: OscillatorSpectrum, k: int, *, exact: bool = False):
    """``tr(H^k) = sum_j (E0 + j*gap)**k`` evaluated in rational arithmetic."""
    if not 1 <= k <= 5:
        raise ValueError("k must be in [1, 5]")
    e0 = Fraction(spec.ground_energy)
    gap = Fraction(spec.gap)
    s = power_sums(spec.num_levels, k)
    total = sum(comb(k, m) * e0 ** (k - m) * gap**m * s[m] for m in range(k + 1))
    return total if exact else float(total)
