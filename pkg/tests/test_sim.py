import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qcm.ansatz import Circuit, Gate, rvb_circuit, singlet_gates
from qcm.hamiltonian import heisenberg_ring
from qcm.pauli import expectation_exact, identity_coefficient, powers
from qcm.sim import (
    CNOT_MATRIX,
    GATES_1Q,
    DeviceParams,
    NoiseSpec,
    QuantumState,
    apply_circuit,
    apply_unitary,
    channel_global,
    channel_local,
    depolarize,
    dephase,
    fidelity,
    measure_readout_noise,
    trace_distance,
)

from conftest import PAULI

SINGLET = np.array([0, 1, -1, 0]) / np.sqrt(2)
SINGLET_DEPOL_02 = 0.73  # (1-p)^2 + (1 - (1-p)^2)/4 at p = 0.2


def kraus_depolarize_1q(p):
    """Operator-sum form of the single-qubit depolarizing channel."""
    return [np.sqrt(1 - 3 * p / 4) * PAULI["I"]] + [np.sqrt(p / 4) * PAULI[k] for k in "XYZ"]


def apply_kraus(rho, ops):
    return sum(k @ rho @ k.conj().T for k in ops)


def random_rho(rng, q, rank=None):
    dim = 1 << q
    a = rng.standard_normal((dim, rank or dim)) + 1j * rng.standard_normal((dim, rank or dim))
    rho = a @ a.conj().T
    return rho / np.trace(rho)


class TestQuantumState:
    def test_shapes_checked(self):
        with pytest.raises(ValueError):
            QuantumState(2, np.zeros(8))
        assert QuantumState.zero(3).kind == "statevector"
        assert QuantumState.maximally_mixed(2).kind == "density_matrix"

    def test_check(self):
        QuantumState.zero(2).check()
        with pytest.raises(ValueError):
            QuantumState(1, np.array([1.0, 1.0])).check()
        with pytest.raises(ValueError):
            QuantumState(1, np.diag([1.5, -0.5])).check()

    def test_density_cap(self):
        with pytest.raises(ValueError):
            QuantumState.zero(13).to_density_matrix()


class TestApplyCircuit:
    def test_empty_circuit(self, rng):
        psi = rng.standard_normal(8) + 0j
        s = QuantumState(3, psi / np.linalg.norm(psi))
        out = apply_circuit(Circuit(3), s)
        np.testing.assert_array_equal(out.data, s.data)

    def test_singlet_prep(self):
        out = apply_circuit(Circuit(2, singlet_gates(0, 1)), QuantumState.zero(2))
        assert abs(np.vdot(SINGLET, out.data)) == pytest.approx(1.0, abs=1e-14)

    def test_qubit_mismatch(self):
        with pytest.raises(ValueError):
            apply_circuit(Circuit(2), QuantumState.zero(3))

    def test_device_needs_density_matrix(self):
        with pytest.raises(ValueError, match="density"):
            apply_circuit(rvb_circuit(2, 1), QuantumState.zero(2), NoiseSpec("device"))

    def test_density_cap(self):
        with pytest.raises(ValueError):
            apply_circuit(Circuit(4), QuantumState.zero(4).to_density_matrix(), max_dm_qubits=3)

    def test_zero_alpha_device_equals_noiseless(self, rng):
        c = rvb_circuit(4, 1, rng.uniform(0, 2 * np.pi, 4))
        pure = apply_circuit(c, QuantumState.zero(4))
        dev = NoiseSpec("device", device=DeviceParams(alpha=0.0))
        mixed = apply_circuit(c, QuantumState.zero(4).to_density_matrix(), dev)
        assert trace_distance(pure, mixed) < 1e-10

    def test_statevector_and_density_paths_agree_against_dense_unitaries(self, rng):
        # dense oracle: build each gate as a full 2^q matrix with explicit bit manipulation
        q = 4
        c = rvb_circuit(q, 2, rng.uniform(0, 2 * np.pi, 2 * q))
        dim = 1 << q
        psi = np.zeros(dim, complex)
        psi[0] = 1
        for g in c.gates:
            psi = full_gate(g, c, q) @ psi
        out = apply_circuit(c, QuantumState.zero(q))
        np.testing.assert_allclose(out.data, psi, atol=1e-12)
        dm = apply_circuit(c, QuantumState.zero(q).to_density_matrix())
        np.testing.assert_allclose(dm.data, np.outer(psi, psi.conj()), atol=1e-12)

    def test_device_noise_lowers_fidelity_monotonically(self):
        c = rvb_circuit(4, 1, np.full(4, 0.7))
        pure = apply_circuit(c, QuantumState.zero(4))
        fs = []
        for alpha in (0.0, 0.5, 1.0):
            rho = apply_circuit(c, QuantumState.zero(4).to_density_matrix(), NoiseSpec("device", device=DeviceParams(alpha=alpha)))
            rho.check()
            fs.append(fidelity(rho, pure.data))
        assert fs[0] == pytest.approx(1.0, abs=1e-12)
        assert fs[0] > fs[1] > fs[2]


def full_gate(g, c, q):
    dim = 1 << q
    m = np.zeros((dim, dim), complex)
    if g.kind in GATES_1Q:
        u = GATES_1Q[g.kind]
        (j,) = g.qubits
        for col in range(dim):
            b = (col >> j) & 1
            for a in range(2):
                m[(col & ~(1 << j)) | (a << j), col] += u[a, b]
        return m
    a_, b_ = g.qubits
    if g.kind == "CNOT":
        u = CNOT_MATRIX
    else:
        from scipy.linalg import expm

        swap = np.eye(4)[[0, 2, 1, 3]]
        u = expm(-0.5j * c.angle(g) * swap)
    for col in range(dim):
        loc = 2 * ((col >> a_) & 1) + ((col >> b_) & 1)
        base = col & ~((1 << a_) | (1 << b_))
        for row_loc in range(4):
            row = base | ((row_loc >> 1) << a_) | ((row_loc & 1) << b_)
            m[row, col] += u[row_loc, loc]
    return m


class TestChannels:
    def test_global_examples(self):
        rho = QuantumState.zero(1).to_density_matrix()
        np.testing.assert_allclose(channel_global(rho, 0.3).data, np.diag([0.85, 0.15]))
        np.testing.assert_allclose(channel_global(rho, 0.0).data, rho.data)
        np.testing.assert_allclose(channel_global(rho, 1.0).data, np.eye(2) / 2)

    def test_probability_range(self):
        rho = QuantumState.maximally_mixed(1)
        for bad in (-0.1, 1.1):
            with pytest.raises(ValueError):
                channel_global(rho, bad)
            with pytest.raises(ValueError):
                channel_local(rho, bad)
        with pytest.raises(ValueError):
            NoiseSpec("white", 2.0)
        with pytest.raises(ValueError):
            NoiseSpec("amplitude")

    def test_statevector_rejected(self):
        with pytest.raises(ValueError):
            channel_global(QuantumState.zero(1), 0.1)

    def test_full_depolarize(self, rng):
        rho = QuantumState(1, random_rho(rng, 1))
        np.testing.assert_allclose(channel_local(rho, 1.0).data, np.eye(2) / 2, atol=1e-15)

    def test_full_dephase_plus(self):
        plus = QuantumState(1, np.full((2, 2), 0.5))
        np.testing.assert_allclose(channel_local(plus, 1.0, "dephase").data, np.eye(2) / 2)

    @pytest.mark.parametrize("p", [0.0, 0.13, 0.5, 1.0])
    def test_depolarize_matches_kraus(self, rng, p):
        rho = random_rho(rng, 3)
        ops = kraus_depolarize_1q(p)
        expected = rho
        for j in range(3):
            full = [np.kron(np.kron(np.eye(1 << (2 - j)), k), np.eye(1 << j)) for k in ops]
            expected = apply_kraus(expected, full)
        out = channel_local(QuantumState(3, rho), p)
        np.testing.assert_allclose(out.data, expected, atol=1e-13)

    @pytest.mark.parametrize("p", [0.0, 0.27, 1.0])
    def test_dephase_matches_kraus(self, rng, p):
        rho = random_rho(rng, 2)
        ops = [np.sqrt(1 - p / 2) * PAULI["I"], np.sqrt(p / 2) * PAULI["Z"]]
        expected = rho
        for j in range(2):
            full = [np.kron(np.kron(np.eye(1 << (1 - j)), k), np.eye(1 << j)) for k in ops]
            expected = apply_kraus(expected, full)
        np.testing.assert_allclose(channel_local(QuantumState(2, rho), p, "dephase").data, expected, atol=1e-14)

    def test_two_qubit_depolarize_matches_pauli_twirl(self, rng):
        p = 0.37
        rho = random_rho(rng, 2)
        paulis = [np.kron(PAULI[a], PAULI[b]) for a in "IXYZ" for b in "IXYZ"]
        expected = (1 - p) * rho + p * sum(P @ rho @ P for P in paulis) / 16
        np.testing.assert_allclose(depolarize(QuantumState(2, rho), p, (0, 1)).data, expected, atol=1e-14)

    def test_singlet_depolarize_regression(self):
        rho = np.outer(SINGLET, SINGLET)
        ops = kraus_depolarize_1q(0.2)
        two = [np.kron(a, b) for a in ops for b in ops]
        oracle = np.real(SINGLET @ apply_kraus(rho, two) @ SINGLET)
        assert oracle == pytest.approx(SINGLET_DEPOL_02, abs=1e-14)
        out = channel_local(QuantumState(2, rho), 0.2)
        assert fidelity(out, SINGLET) == pytest.approx(SINGLET_DEPOL_02, abs=1e-14)

    @settings(max_examples=30, deadline=None)
    @given(st.floats(0, 1), st.sampled_from(["white", "depolarize", "dephase"]), st.integers(0, 2**32 - 1))
    def test_trace_and_positivity(self, p, kind, seed):
        rho = QuantumState(3, random_rho(np.random.default_rng(seed), 3, rank=2))
        out = channel_global(rho, p) if kind == "white" else channel_local(rho, p, kind)
        assert out.trace() == pytest.approx(1.0, abs=1e-12)
        assert np.linalg.eigvalsh(out.data).min() >= -1e-9
        np.testing.assert_allclose(out.data, out.data.conj().T, atol=1e-14)

    @settings(max_examples=30, deadline=None)
    @given(st.floats(0, 1), st.integers(1, 4), st.integers(0, 2**32 - 1))
    def test_global_noise_moment_identity(self, p, k, seed):
        rng = np.random.default_rng(seed)
        h = heisenberg_ring(4, [tuple(rng.uniform(0, 1, 3)) for _ in range(4)])
        hk = powers(h, k)[-1]
        rho = QuantumState(4, random_rho(rng, 4, rank=1))
        lhs = expectation_exact(hk, channel_global(rho, p))
        rhs = (1 - p) * expectation_exact(hk, rho) + p * identity_coefficient(hk)
        assert lhs == pytest.approx(rhs, abs=1e-10)


class TestFidelity:
    def test_pure(self, rng):
        v = rng.standard_normal(4) + 1j * rng.standard_normal(4)
        v /= np.linalg.norm(v)
        assert fidelity(QuantumState(2, np.outer(v, v.conj())), v) == pytest.approx(1.0)
        assert fidelity(QuantumState(2, v), v) == pytest.approx(1.0)

    def test_mixed(self):
        assert fidelity(QuantumState.maximally_mixed(3), np.eye(8)[5]) == pytest.approx(1 / 8)

    @pytest.mark.parametrize("p", [0.0, 0.3, 1.0])
    def test_one_qubit_depolarized(self, p):
        phi = np.array([np.cos(0.4), np.exp(0.3j) * np.sin(0.4)])
        rho = depolarize(QuantumState(1, np.outer(phi, phi.conj())), p, (0,))
        assert fidelity(rho, phi) == pytest.approx(1 - p / 2, abs=1e-14)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            fidelity(QuantumState.zero(2), np.ones(8))


class TestReadout:
    def test_examples(self):
        np.testing.assert_allclose(measure_readout_noise([0.9, 0.1], 0.02), [0.884, 0.116])
        np.testing.assert_array_equal(measure_readout_noise([0.9, 0.1], 0.0), [0.9, 0.1])
        np.testing.assert_allclose(measure_readout_noise([0.7, 0.1, 0.15, 0.05], 0.5), [0.25] * 4)

    def test_range(self):
        with pytest.raises(ValueError):
            measure_readout_noise([1.0, 0.0], 0.6)

    def test_matches_confusion_matrix(self, rng):
        p = rng.dirichlet(np.ones(8))
        f = 0.07
        m1 = np.array([[1 - f, f], [f, 1 - f]])
        full = np.kron(np.kron(m1, m1), m1)
        np.testing.assert_allclose(measure_readout_noise(p, f), full @ p, atol=1e-15)


class TestGates:
    @pytest.mark.parametrize("name", sorted(GATES_1Q))
    def test_unitary(self, name):
        u = GATES_1Q[name]
        assert np.linalg.norm(u.conj().T @ u - np.eye(2)) < 1e-12

    def test_cnot(self):
        assert np.linalg.norm(CNOT_MATRIX.conj().T @ CNOT_MATRIX - np.eye(4)) < 1e-12
        # control is the high local bit (first listed qubit)
        s = apply_unitary(QuantumState.basis(2, 0b01), CNOT_MATRIX, (0, 1))
        np.testing.assert_allclose(s.data, np.eye(4)[0b11])

    def test_apply_unitary_density(self, rng):
        rho = QuantumState(2, random_rho(rng, 2))
        h = GATES_1Q["H"]
        out = apply_unitary(rho, h, (1,))
        u = np.kron(h, np.eye(2))
        np.testing.assert_allclose(out.data, u @ rho.data @ u.conj().T, atol=1e-14)


class TestDeviceParams:
    def test_alpha_scaling(self):
        d = DeviceParams(eps_cx=0.02, eps_1q=0.004, readout_flip=0.03, alpha=0.5)
        assert (d.cx_rate, d.one_qubit_rate, d.readout_rate) == (0.01, 0.002, 0.015)
        assert d.scaled(0.0).cx_rate == 0.0
        assert NoiseSpec("device", device=d).readout_flip == 0.015
        assert NoiseSpec("white", 0.1, d).readout_flip == 0.0

    def test_file_roundtrip(self, tmp_path):
        d = DeviceParams(eps_cx=0.015, alpha=0.25)
        path = tmp_path / "cal.json"
        path.write_text(json.dumps(d.to_json()))
        assert DeviceParams.from_file(path) == d

    def test_invalid(self):
        with pytest.raises(ValueError):
            DeviceParams(alpha=1.5)
        with pytest.raises(ValueError):
            DeviceParams(readout_flip=0.7)
