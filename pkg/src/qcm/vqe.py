"""Noiseless minimization of <H> over RVB circuit parameters (Nelder-Mead simplex)."""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import scipy.optimize as so

from .ansatz import rvb_circuit
from .estimators import approx_error, cmx5, cumulants, lanczos4
from .hamiltonian import exact_ground
from .measure import exact_moments
from .pauli import PauliSum
from .rng import make_rng, spawn_seeds
from .sim import QuantumState, _perm_swap, apply_circuit

log = logging.getLogger(__name__)

TWO_PI = 2 * np.pi


class RVBStatevector:
    """Fast noiseless RVB state preparation for one (q, D); reused across objective calls."""

    def __init__(self, q: int, D: int):
        self.q, self.D = q, D
        base = rvb_circuit(q, 0)
        self.initial = apply_circuit(base, QuantumState.zero(q)).data
        self.pairs = [g.qubits for g in rvb_circuit(q, D).gates if g.kind == "ESWAP"]
        self.perms = [_perm_swap(q, a, b) for a, b in self.pairs]

    def __call__(self, theta) -> np.ndarray:
        psi = self.initial
        half = 0.5 * np.asarray(theta, dtype=float)
        for perm, t in zip(self.perms, half):
            psi = np.cos(t) * psi - 1j * np.sin(t) * psi[perm]
        return psi


@dataclass
class OptimizerConfig:
    max_iters: int | None = None  # default 2000 * D * q
    tol: float = 1e-7
    restarts: int = 4
    seed: int = 0
    max_evals: int | None = None


@dataclass
class OptimizationRun:
    hamiltonian_id: str
    D: int
    theta_star: list
    energy_star: float
    iterations: int
    evaluations: int
    restarts: int
    seed: int
    converged: bool
    restart_energies: list = field(default_factory=list)

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, obj: dict) -> "OptimizationRun":
        return cls(**obj)


def energy_function(h: PauliSum, D: int, matrix=None):
    prep = RVBStatevector(h.num_qubits, D)
    hm = h.to_sparse() if matrix is None else matrix

    def energy(theta):
        psi = prep(theta)
        return float(np.vdot(psi, hm @ psi).real)

    return energy, prep


def _simplex_diameter(simplex: np.ndarray) -> float:
    return float(np.max(np.abs(simplex[1:] - simplex[0])))


def optimize(
    h: PauliSum,
    D: int,
    config: OptimizerConfig | None = None,
    *,
    warm_start=None,
    hamiltonian_id: str = "",
    matrix=None,
) -> OptimizationRun:
    """Best of ``config.restarts`` seeded Nelder-Mead runs over ``theta in [0, 2pi)^(D q)``.

    If ``warm_start`` (a depth-(D-1) solution) is given, the first start uses
    it padded with zero angles, which reproduces the shallower state exactly.
    """
    if D < 1:
        raise ValueError("D must be >= 1")
    config = config or OptimizerConfig()
    q = h.num_qubits
    n = D * q
    max_iters = config.max_iters or 2000 * n
    energy, _ = energy_function(h, D, matrix)
    seeds = spawn_seeds(config.seed, max(config.restarts, 1))
    starts = []
    if warm_start is not None:
        w = np.zeros(n)
        w[: len(warm_start)] = warm_start
        starts.append(w)
    for s in seeds[len(starts):]:
        starts.append(make_rng(s).uniform(0, TWO_PI, n))
    best = None
    energies = []
    iters = evals = 0
    for x0 in starts[: max(config.restarts, 1)]:
        res = so.minimize(
            energy,
            x0,
            method="Nelder-Mead",
            options={
                "maxiter": max_iters,
                "maxfev": config.max_evals or 10 * max_iters,
                "xatol": config.tol,
                "fatol": 1e-12,
                "adaptive": True,
                "initial_simplex": _initial_simplex(x0),
            },
        )
        iters += int(res.nit)
        evals += int(res.nfev)
        energies.append(float(res.fun))
        diam = _simplex_diameter(res.final_simplex[0])
        cand = (float(res.fun), np.mod(res.x, TWO_PI), diam < config.tol)
        if best is None or cand[0] < best[0]:
            best = cand
        log.debug("D=%d start energy %.10f (nit=%d)", D, res.fun, res.nit)
    return OptimizationRun(
        hamiltonian_id=hamiltonian_id,
        D=D,
        theta_star=[float(t) for t in best[1]],
        energy_star=best[0],
        iterations=iters,
        evaluations=evals,
        restarts=len(energies),
        seed=config.seed,
        converged=bool(best[2]),
        restart_energies=energies,
    )


def _initial_simplex(x0: np.ndarray, step: float = 0.5) -> np.ndarray:
    sim = np.tile(x0, (x0.size + 1, 1))
    for i in range(x0.size):
        sim[i + 1, i] += step
    return sim


def optimize_campaign(
    h: PauliSum,
    D_max: int,
    config: OptimizerConfig | None = None,
    *,
    hamiltonian_id: str = "",
) -> list[OptimizationRun]:
    """Runs for D = 1..D_max, each warm-started from the previous depth."""
    hm = h.to_sparse()
    runs = []
    prev = None
    for D in range(1, D_max + 1):
        run = optimize(h, D, config, warm_start=prev, hamiltonian_id=hamiltonian_id, matrix=hm)
        runs.append(run)
        prev = run.theta_star
        log.info("%s D=%d energy %.8f", hamiltonian_id, D, run.energy_star)
    return runs


@dataclass
class CurvePoint:
    D: int
    n_cx: int
    e0: float
    variational: float
    lanczos4: float
    cmx5: float
    err_variational: float
    err_lanczos4: float
    err_cmx5: float


def convergence_curve(
    h: PauliSum,
    D_max: int,
    config: OptimizerConfig | None = None,
    *,
    runs: list[OptimizationRun] | None = None,
    e0: float | None = None,
) -> list[CurvePoint]:
    """Zero-noise estimator quality per depth (D=0 is the bare singlet product)."""
    if D_max > 7:
        raise ValueError("D_max must be <= 7")
    from .ansatz import cnot_count

    if e0 is None:
        e0, _ = exact_ground(h)
    if runs is None:
        runs = optimize_campaign(h, D_max, config)
    hm = h.to_sparse()
    q = h.num_qubits
    thetas = [np.zeros(0)] + [np.asarray(r.theta_star) for r in runs]
    out = []
    for D, th in enumerate(thetas[: D_max + 1]):
        psi = RVBStatevector(q, D)(th)
        c = cumulants(exact_moments(h, QuantumState(q, psi), 5, matrix=hm))
        var, l4, cm = float(c[1]), lanczos4(c), cmx5(c)
        out.append(
            CurvePoint(
                D, cnot_count(rvb_circuit(q, D)), e0, var, l4, cm,
                approx_error(var, e0), approx_error(l4, e0), approx_error(cm, e0),
            )
        )
    return out


def save_archive(runs: list[OptimizationRun], path: str | Path) -> None:
    Path(path).write_text(json.dumps([r.to_json() for r in runs], indent=2))


def load_archive(path: str | Path) -> list[OptimizationRun]:
    return [OptimizationRun.from_json(o) for o in json.loads(Path(path).read_text())]
