import functools

import numpy as np
import pytest

PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


def dense_label(label: str) -> np.ndarray:
    """Kronecker product with qubit 0 as the least significant factor."""
    out = np.eye(1, dtype=complex)
    for ch in reversed(label):
        out = np.kron(out, PAULI[ch])
    return out


def dense_sum(terms, q) -> np.ndarray:
    m = np.zeros((1 << q, 1 << q), dtype=complex)
    for lab, c in terms:
        m += c * dense_label(lab.ljust(q, "I"))
    return m


def dense_of(h) -> np.ndarray:
    """Independent dense oracle for a PauliSum (does not use PauliSum.to_sparse)."""
    return dense_sum(list(h), h.num_qubits)


@functools.lru_cache(maxsize=None)
def ring12():
    from qcm.hamiltonian import exact_ground, heisenberg_ring

    h = heisenberg_ring(12)
    e0, phi0 = exact_ground(h)
    return h, e0, phi0


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# acceptance report: one line per criterion, printed after the run
_ACCEPTANCE: list[tuple[str, str]] = []


@pytest.fixture
def acceptance():
    def record(cid: str, title: str, ok: bool, detail: str) -> None:
        _ACCEPTANCE.append((cid, f"{'PASS' if ok else 'FAIL'}  criterion {cid:<16} {title}: {detail}"))
        assert ok, detail

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(_ACCEPTANCE, key=lambda t: (int(t[0].split()[0]), t[0])):
            terminalreporter.write_line(line)
