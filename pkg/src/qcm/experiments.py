"""Experiment configurations and runners that emit CSV datasets plus a JSON manifest.

Each experiment produces one reference dataset:

``fig1d``       zero-noise estimator convergence for the uniform ring
``fig2b``       zero-noise estimator convergence over a random-coupling ensemble
``fig2c_sim``   the same ensemble replayed under a noise model
``fig3``        GUE-rotated ground states under a local noise channel, on a (F, p) grid
``fig4``        device-noise replay with every error rate scaled by alpha
``whitenoise``  the oscillator white-noise cancellation table
``custom``      a user-supplied Hamiltonian through the ``fig1d`` pipeline
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import platform
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy

from . import __version__
from .ansatz import cnot_count, rvb_circuit
from .estimators import MomentSet, approx_error, cmx5, cumulants, ht_limit, lanczos4
from .hamiltonian import (
    OscillatorSpectrum,
    SpinGraph,
    exact_ground,
    heisenberg_ring,
    random_gue,
    random_heisenberg_ensemble,
)
from .measure import ShotPlan, exact_moments, group_tpb, sample_moments
from .pauli import PauliSum, powers
from .rng import spawn_seeds
from .sim import DeviceParams, NoiseSpec, QuantumState, apply_circuit, channel_global, channel_local, fidelity
from .vqe import OptimizationRun, OptimizerConfig, RVBStatevector, load_archive, optimize_campaign
from .whitenoise import MODELS, cancellation_experiment

log = logging.getLogger(__name__)

EXPERIMENTS = ("fig1d", "fig2b", "fig2c_sim", "fig3", "fig4", "whitenoise", "custom")

ESTIMATE_FIELDS = [
    "instance_id", "D", "n_cx", "e0", "variational", "lanczos4", "cmx5", "ht_lanczos4",
    "err_variational", "err_lanczos4", "err_cmx5", "flags",
]

DEFAULT_Q = {"fig1d": 12, "fig2b": 12, "fig2c_sim": 12, "fig3": 6, "fig4": 8, "custom": None}


class ConfigError(ValueError):
    """Invalid experiment configuration (CLI exit code 2)."""


@dataclass
class ExperimentConfig:
    experiment: str
    q: int | None = None
    D_max: int = 7
    ensemble_count: int = 10
    ensemble_seed: int = 0
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    shots: int | None = None  # None: exact moments
    output_dir: str = "out"
    seed: int = 0
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    p_grid: tuple[float, ...] = tuple(round(0.05 * i, 2) for i in range(11))
    f_grid: tuple[float, ...] = tuple(round(1.0 - 0.05 * i, 2) for i in range(11))
    alpha_grid: tuple[float, ...] = (0.0, 0.01, 0.05, 0.1, 0.25, 0.5, 1.0)
    depths: tuple[int, ...] | None = None  # fig4/fig2c_sim replay depths; default 1..D_max
    archive: str | None = None  # theta* archive to replay instead of optimizing
    hamiltonian: str | None = None  # custom: PauliSum or SpinGraph JSON, or "coeff LABEL" text
    whitenoise: dict = field(default_factory=lambda: {"e0": -1.0, "gap": 1e-3, "levels": 2**20, "model": "exact"})

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}; expected one of {EXPERIMENTS}")
        if self.q is None:
            self.q = DEFAULT_Q.get(self.experiment)
        if self.experiment in ("fig1d", "fig2b", "fig2c_sim", "fig3", "fig4"):
            if self.q is None or self.q < 2 or self.q % 2:
                raise ConfigError(f"q must be an even integer >= 2, got {self.q}")
        if not 1 <= self.D_max <= 7:
            raise ConfigError("D_max must be in [1, 7]")
        if self.shots is not None and self.shots < 1:
            raise ConfigError("shots must be >= 1 or null for exact moments")
        if self.ensemble_count < 0:
            raise ConfigError("ensemble_count must be >= 0")
        for name in ("p_grid", "f_grid", "alpha_grid"):
            vals = tuple(float(v) for v in getattr(self, name))
            if not vals or any(not 0.0 <= v <= 1.0 for v in vals):
                raise ConfigError(f"{name} must be a non-empty list in [0, 1]")
            setattr(self, name, vals)
        if self.depths is not None:
            self.depths = tuple(int(d) for d in self.depths)
            if any(not 1 <= d <= self.D_max for d in self.depths):
                raise ConfigError("depths must lie in [1, D_max]")
        if self.experiment == "custom" and not self.hamiltonian:
            raise ConfigError("custom experiments need a 'hamiltonian' file")
        if self.experiment == "fig3" and self.noise.channel == "none":
            self.noise = NoiseSpec("depolarize")
        if self.experiment == "fig3" and self.noise.channel not in ("depolarize", "dephase", "white"):
            raise ConfigError("fig3 needs a depolarize, dephase or white channel")
        if self.experiment == "whitenoise":
            wn = self.whitenoise
            if wn.get("model", "exact") not in MODELS:
                raise ConfigError(f"whitenoise model must be one of {MODELS}")
            if int(wn.get("levels", 1)) < 1:
                raise ConfigError("whitenoise levels must be >= 1")

    @classmethod
    def from_json(cls, obj: dict | str) -> "ExperimentConfig":
        if isinstance(obj, str):
            try:
                obj = json.loads(obj)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"config is not valid JSON: {exc}") from exc
        if not isinstance(obj, dict):
            raise ConfigError("config must be a JSON object")
        obj = dict(obj)
        known = set(cls.__dataclass_fields__) | {"ensemble"}
        unknown = set(obj) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "experiment" not in obj:
            raise ConfigError("config needs an 'experiment' key")
        try:
            ens = obj.pop("ensemble", None)
            if ens is not None:
                obj["ensemble_count"] = int(ens.get("count", 10))
                obj["ensemble_seed"] = int(ens.get("seed", 0))
            if "noise" in obj:
                n = dict(obj["noise"])
                dev = DeviceParams(**n.pop("device", {}) or {})
                obj["noise"] = NoiseSpec(n.get("channel", "none"), float(n.get("p", 0.0)), dev)
            if "optimizer" in obj:
                obj["optimizer"] = OptimizerConfig(**obj["optimizer"])
            if "whitenoise" in obj:
                obj["whitenoise"] = {**cls.__dataclass_fields__["whitenoise"].default_factory(), **obj["whitenoise"]}
            return cls(**obj)
        except ConfigError:
            raise
        except (TypeError, ValueError, AttributeError) as exc:
            raise ConfigError(str(exc)) from exc

    def to_json(self) -> dict:
        out = asdict(self)
        out["noise"] = self.noise.to_json()
        return out


@dataclass
class ExperimentResult:
    rows: list[dict]
    files: list[Path]
    manifest: dict
    flagged_rows: int


# shared pieces -----------------------------------------------------------------


def moments_of(
    h_powers: Sequence[PauliSum],
    state: QuantumState,
    *,
    shots: int | None,
    seed: int,
    readout_flip: float = 0.0,
    grouping=None,
    matrix=None,
) -> MomentSet:
    """Exact moments, or TPB-sampled moments when ``shots`` is set or readout error is on."""
    if shots is None and not readout_flip:
        return exact_moments(h_powers[0], state, len(h_powers), matrix=matrix)
    plan = ShotPlan(shots or 1, seed=seed, exact=shots is None)
    return sample_moments(h_powers, state, plan, grouping=grouping, readout_flip=readout_flip)


def estimate_row(instance_id: str, D: int, n_cx: int, m: MomentSet, e0: float, ht: float, **extra) -> dict:
    c = cumulants(m)
    var = float(c[1])
    l4, l4_flag = lanczos4(c, with_flag=True)
    cm, cm_flag = cmx5(c, with_flag=True) if m.order >= 5 else (float("nan"), False)
    flags = [name for name, f in (("lanczos4_degenerate", l4_flag), ("cmx5_degenerate", cm_flag)) if f]
    row = {
        "instance_id": instance_id,
        "D": D,
        "n_cx": n_cx,
        "e0": e0,
        "variational": var,
        "lanczos4": l4,
        "cmx5": cm,
        "ht_lanczos4": ht,
        "err_variational": approx_error(var, e0),
        "err_lanczos4": approx_error(l4, e0),
        "err_cmx5": approx_error(cm, e0) if m.order >= 5 else float("nan"),
        "flags": ";".join(flags),
    }
    row.update(extra)
    return row


def _campaign(h: PauliSum, cfg: ExperimentConfig, instance_id: str, archive: dict | None) -> list[OptimizationRun]:
    if archive is not None:
        runs = [r for r in archive.get(instance_id, []) if r.D <= cfg.D_max]
        if len(runs) >= cfg.D_max:
            return sorted(runs, key=lambda r: r.D)[: cfg.D_max]
        raise ConfigError(f"archive has no depth 1..{cfg.D_max} runs for {instance_id!r}")
    return optimize_campaign(h, cfg.D_max, cfg.optimizer, hamiltonian_id=instance_id)


def _load_archive(cfg: ExperimentConfig) -> dict | None:
    if not cfg.archive:
        return None
    try:
        runs = load_archive(cfg.archive)
    except (OSError, json.JSONDecodeError, TypeError) as exc:
        raise ConfigError(f"cannot read archive {cfg.archive}: {exc}") from exc
    out: dict[str, list[OptimizationRun]] = {}
    for r in runs:
        out.setdefault(r.hamiltonian_id, []).append(r)
    return out


def load_hamiltonian(path: str | Path) -> PauliSum:
    """PauliSum JSON, SpinGraph JSON, or ``coeff LABEL`` text."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read Hamiltonian file: {exc}") from exc
    try:
        obj = json.loads(text)
    except json.JSONDecodeError:
        return PauliSum.from_text(text)
    if "edges" in obj:
        return SpinGraph.from_json(obj).to_pauli()
    return PauliSum.from_json(obj)


def instances(cfg: ExperimentConfig) -> list[tuple[str, PauliSum]]:
    """The uniform ring plus ``ensemble_count`` random-coupling instances."""
    out = [("uniform", heisenberg_ring(cfg.q))]
    ensemble = random_heisenberg_ensemble(cfg.q, cfg.ensemble_count, cfg.ensemble_seed) if cfg.ensemble_count else []
    for n, g in enumerate(ensemble):
        out.append((f"random{n:02d}", g.to_pauli()))
    return out


# experiments -------------------------------------------------------------------


def _zero_noise(cfg: ExperimentConfig, items: list[tuple[str, PauliSum]]) -> list[dict]:
    archive = _load_archive(cfg)
    seeds = spawn_seeds(cfg.seed, len(items))
    rows = []
    for (iid, h), seed in zip(items, seeds):
        q = h.num_qubits
        e0, _ = exact_ground(h)
        hs = powers(h, 5)
        ht = ht_limit(hs[:4])
        hm = h.to_sparse()
        grouping = group_tpb(hs) if cfg.shots else None
        runs = _campaign(h, cfg, iid, archive)
        thetas = [np.zeros(0)] + [np.asarray(r.theta_star) for r in runs]
        for D, (th, s) in enumerate(zip(thetas, spawn_seeds(seed, len(thetas)))):
            psi = RVBStatevector(q, D)(th)
            m = moments_of(hs, QuantumState(q, psi), shots=cfg.shots, seed=s, grouping=grouping, matrix=hm)
            rows.append(estimate_row(iid, D, cnot_count(rvb_circuit(q, D)), m, e0, ht))
    return rows


def _replay(cfg: ExperimentConfig, items: list[tuple[str, PauliSum]], noises: list[tuple[dict, NoiseSpec]]) -> list[dict]:
    """Re-run optimized circuits on the density-matrix path under each noise spec."""
    archive = _load_archive(cfg)
    depths = cfg.depths or tuple(range(1, cfg.D_max + 1))
    rows = []
    for (iid, h), inst_seed in zip(items, spawn_seeds(cfg.seed, len(items))):
        q = h.num_qubits
        e0, _ = exact_ground(h)
        hs = powers(h, 5)
        ht = ht_limit(hs[:4])
        hm = h.to_sparse()
        grouping = group_tpb(hs)
        runs = {r.D: r for r in _campaign(h, cfg, iid, archive)}
        rho0 = QuantumState.zero(q).to_density_matrix()
        seeds = iter(spawn_seeds(inst_seed, len(depths) * len(noises)))
        for D in depths:
            circ = rvb_circuit(q, D, runs[D].theta_star)
            for extra, noise in noises:
                rho = apply_circuit(circ, rho0, noise)
                seed = next(seeds)
                m = moments_of(
                    hs, rho, shots=cfg.shots, seed=seed, readout_flip=noise.readout_flip,
                    grouping=grouping, matrix=hm,
                )
                rows.append(estimate_row(iid, D, cnot_count(circ), m, e0, ht, **extra))
    return rows


def run_fig3(cfg: ExperimentConfig) -> tuple[list[dict], list[dict]]:
    """Ground state rotated by ``exp(-i eps M)`` (M from the GUE) to hit each target fidelity,
    then passed through the configured local channel at each ``p``."""
    q = cfg.q
    h = heisenberg_ring(q)
    e0, phi0 = exact_ground(h)
    hs = powers(h, 5)
    ht = ht_limit(hs[:4])
    hm = h.to_sparse()
    m_gue = random_gue(1 << q, seed=cfg.seed).matrix
    m_gue = m_gue / np.linalg.norm(m_gue, 2)
    w, v = np.linalg.eigh(m_gue)

    def rotated(eps: float) -> np.ndarray:
        return v @ (np.exp(-1j * eps * w) * (v.conj().T @ phi0))

    def fid(eps: float) -> float:
        return float(abs(np.vdot(phi0, rotated(eps))) ** 2)

    rows, crossings = [], []
    seeds = spawn_seeds(cfg.seed, len(cfg.f_grid))
    for f_target, seed in zip(cfg.f_grid, seeds):
        eps = _solve_rotation(fid, f_target)
        phi = rotated(eps)
        rho = QuantumState(q, np.outer(phi, phi.conj()))
        f_actual = fidelity(rho, phi0)
        line = []
        for p, s in zip(cfg.p_grid, spawn_seeds(seed, len(cfg.p_grid))):
            if cfg.noise.channel == "white":
                noisy = channel_global(rho, p)
            else:
                noisy = channel_local(rho, p, cfg.noise.channel)
            m = moments_of(hs, noisy, shots=cfg.shots, seed=s, matrix=hm)
            row = estimate_row(
                "uniform", 0, 0, m, e0, ht,
                channel=cfg.noise.channel, p=p, fidelity_target=f_target, fidelity=f_actual, epsilon=eps,
            )
            rows.append(row)
            line.append(row)
        crossings.append({"fidelity_target": f_target, "fidelity": f_actual, "p_cross_ht": _crossing(line, ht)})
    return rows, crossings


def _solve_rotation(fid, target: float, eps_max: float = np.pi) -> float:
    """Smallest-branch ``eps`` with ``fid(eps) == target`` by bisection."""
    if target >= 1.0:
        return 0.0
    lo, hi = 0.0, eps_max
    # shrink the bracket to the first crossing
    grid = np.linspace(0.0, eps_max, 257)
    vals = [fid(e) for e in grid]
    for a, b, fa, fb in zip(grid, grid[1:], vals, vals[1:]):
        if fa >= target >= fb:
            lo, hi = a, b
            break
    else:
        raise ConfigError(f"fidelity {target} is not reachable by the GUE rotation")
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if fid(mid) > target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _crossing(line: list[dict], ht: float) -> float | None:
    """Noise level where lanczos4 first rises through the high-temperature limit (linear interpolation)."""
    for a, b in zip(line, line[1:]):
        da, db = a["lanczos4"] - ht, b["lanczos4"] - ht
        if da < 0 <= db:
            return a["p"] + (b["p"] - a["p"]) * (-da) / (db - da)
    return None


def run_whitenoise(cfg: ExperimentConfig) -> list[dict]:
    wn = cfg.whitenoise
    spec = OscillatorSpectrum(float(wn["e0"]), float(wn["gap"]), int(wn["levels"]))
    res = cancellation_experiment(spec, cfg.p_grid, wn.get("model", "exact"))
    out = []
    for r in res.csv_rows():
        out.append({**r, "e0": spec.ground_energy, "gap": spec.gap, "levels": spec.num_levels, "model": res.model,
                    "lanczos4_offset": res.lanczos4_offset, "degenerate": res.degenerate})
    return out


def ht_advantage_map(rows: Sequence[dict], tol: float = 1e-9) -> list[dict]:
    """Per (instance, D) cell: does lanczos4 fall strictly below its high-temperature limit?"""
    out = []
    for r in rows:
        l4, ht = float(r["lanczos4"]), float(r["ht_lanczos4"])
        out.append({
            "instance_id": r["instance_id"],
            "D": int(r["D"]),
            "lanczos4": l4,
            "ht_lanczos4": ht,
            "margin": ht - l4,
            "below_ht": l4 < ht - tol,
        })
    return out


# orchestration -----------------------------------------------------------------


def write_csv(path: Path, rows: Sequence[dict]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    fields = list(rows[0].keys()) if rows else list(ESTIMATE_FIELDS)
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: _fmt(r.get(k)) for k in fields})
    return path


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def read_csv(path: str | Path) -> list[dict]:
    with Path(path).open(newline="") as fh:
        return list(csv.DictReader(fh))


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    """Run ``cfg`` and write ``<experiment>.csv`` and ``manifest.json`` under ``cfg.output_dir``."""
    out = Path(cfg.output_dir)
    t0 = time.perf_counter()
    extra_files: list[Path] = []
    if cfg.experiment == "fig1d":
        rows = _zero_noise(cfg, [("uniform", heisenberg_ring(cfg.q))])
    elif cfg.experiment == "custom":
        h = load_hamiltonian(cfg.hamiltonian)
        if cfg.noise.channel == "none":
            rows = _zero_noise(cfg, [("custom", h)])
        else:
            rows = _replay(cfg, [("custom", h)], [({}, cfg.noise)])
    elif cfg.experiment == "fig2b":
        rows = _zero_noise(cfg, instances(cfg))
    elif cfg.experiment == "fig2c_sim":
        noise = cfg.noise if cfg.noise.channel != "none" else NoiseSpec("device")
        rows = _replay(cfg, instances(cfg), [({}, noise)])
    elif cfg.experiment == "fig4":
        dev = cfg.noise.device
        noises = [({"alpha": a}, NoiseSpec("device", device=dev.scaled(a))) for a in cfg.alpha_grid]
        rows = _replay(cfg, [("uniform", heisenberg_ring(cfg.q))], noises)
    elif cfg.experiment == "fig3":
        rows, crossings = run_fig3(cfg)
        extra_files.append(write_csv(out / "fig3_ht_crossings.csv", crossings))
    else:
        rows = run_whitenoise(cfg)
    csv_path = write_csv(out / f"{cfg.experiment}.csv", rows)
    if cfg.experiment in ("fig1d", "fig2b", "fig2c_sim", "fig4", "custom"):
        extra_files.append(write_csv(out / f"{cfg.experiment}_ht_map.csv", ht_advantage_map(rows)))
    files = [csv_path] + extra_files
    flagged = sum(1 for r in rows if r.get("flags") or r.get("flag_lanczos4") or r.get("flag_cmx5"))
    manifest = {
        "experiment": cfg.experiment,
        "config": cfg.to_json(),
        "seed": cfg.seed,
        "versions": {
            "artifact": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": platform.python_version(),
        },
        "wall_time_s": round(time.perf_counter() - t0, 3),
        "rows": len(rows),
        "flagged_rows": flagged,
        "outputs": {p.name: _sha256(p) for p in files},
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    log.info("%s: %d rows written to %s", cfg.experiment, len(rows), out)
    return ExperimentResult(rows, files + [out / "manifest.json"], manifest, flagged)
