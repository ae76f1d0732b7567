import numpy as np
import pytest

from qcm.hamiltonian import exact_ground, heisenberg_ring, random_heisenberg_ensemble
from qcm.pauli import expectation_exact
from qcm.sim import QuantumState
from qcm.vqe import (
    OptimizerConfig,
    RVBStatevector,
    convergence_curve,
    energy_function,
    load_archive,
    optimize,
    optimize_campaign,
    save_archive,
)

FAST = OptimizerConfig(max_iters=400, restarts=2, seed=3)


@pytest.fixture(scope="module")
def ring6():
    h = heisenberg_ring(6)
    e0, _ = exact_ground(h)
    return h, e0, optimize_campaign(h, 3, FAST, hamiltonian_id="ring6")


class TestOptimize:
    def test_two_qubit_singlet_kept(self):
        run = optimize(heisenberg_ring(2), 1, OptimizerConfig(max_iters=300, restarts=3, seed=1))
        assert run.energy_star == pytest.approx(-0.375, abs=1e-12)

    def test_deterministic(self):
        h = heisenberg_ring(4, [(0.2, 0.2, 0.2), (1, 1, 1), (0.5, 0.5, 0.5), (0.7, 0.7, 0.7)])
        a = optimize(h, 1, FAST)
        b = optimize(h, 1, FAST)
        assert a.theta_star == b.theta_star
        assert a.energy_star == b.energy_star

    def test_depth_must_be_positive(self):
        with pytest.raises(ValueError):
            optimize(heisenberg_ring(4), 0)

    def test_best_restart_reported(self, ring6):
        for run in ring6[2]:
            assert run.energy_star == min(run.restart_energies)
            assert run.restarts == 2
            assert all(0 <= t < 2 * np.pi for t in run.theta_star)

    def test_energy_recomputed_from_theta(self, ring6):
        h, _, runs = ring6
        for run in runs:
            psi = RVBStatevector(6, run.D)(run.theta_star)
            assert expectation_exact(h, QuantumState(6, psi)) == pytest.approx(run.energy_star, abs=1e-12)

    def test_warm_start_reproduces_shallower_state(self, rng):
        theta = rng.uniform(0, 2 * np.pi, 6)
        shallow = RVBStatevector(6, 1)(theta)
        deep = RVBStatevector(6, 2)(np.concatenate([theta, np.zeros(6)]))
        np.testing.assert_allclose(deep, shallow, atol=1e-15)


class TestCampaign:
    def test_monotone_in_depth(self, ring6):
        energies = [r.energy_star for r in ring6[2]]
        assert all(b <= a + 1e-9 for a, b in zip(energies, energies[1:]))

    def test_variational_bound(self, ring6, rng):
        h, e0, runs = ring6
        assert all(r.energy_star >= e0 - 1e-9 for r in runs)
        energy, _ = energy_function(h, 2)
        for _ in range(50):
            assert energy(rng.uniform(0, 2 * np.pi, 12)) >= e0 - 1e-9

    def test_archive_roundtrip(self, ring6, tmp_path):
        path = tmp_path / "theta.json"
        save_archive(ring6[2], path)
        assert load_archive(path) == ring6[2]


class TestConvergenceCurve:
    def test_rows(self, ring6):
        h, e0, runs = ring6
        curve = convergence_curve(h, 3, runs=runs, e0=e0)
        assert [p.D for p in curve] == [0, 1, 2, 3]
        assert [p.n_cx for p in curve] == [3, 21, 39, 57]
        # D=0 is the singlet product: three bonds at <XX+YY+ZZ> = -3, the rest at 0, prefactor 1/24
        assert curve[0].variational == pytest.approx(-9 / 24, abs=1e-12)
        for p, r in zip(curve[1:], runs):
            assert p.variational == pytest.approx(r.energy_star, abs=1e-12)
            assert p.lanczos4 <= p.variational + 1e-9

    def test_depth_cap(self, ring6):
        with pytest.raises(ValueError):
            convergence_curve(ring6[0], 8, runs=ring6[2], e0=ring6[1])

    def test_lanczos_below_variational_on_ensemble(self):
        for g in random_heisenberg_ensemble(6, 3, seed=21):
            h = g.to_pauli()
            runs = optimize_campaign(h, 2, OptimizerConfig(max_iters=300, restarts=1, seed=0))
            for p in convergence_curve(h, 2, runs=runs)[1:]:
                assert p.lanczos4 <= p.variational + 1e-9
