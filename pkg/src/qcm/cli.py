"""Command line entry point (``qcm``).

Every verb writes its outputs under ``--out`` and prints a short JSON summary
on stdout.  Exit codes: 0 success, 2 configuration or input error, 3 the
fraction of numerically flagged rows exceeded ``--flag-threshold``.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_FLAGGED = 3

_THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")


def _global_flags(defaults: bool) -> argparse.ArgumentParser:
    # shared so that global flags work before or after the verb
    d = (lambda v: v) if defaults else (lambda v: argparse.SUPPRESS)
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--seed", type=int, default=d(None), help="master seed (overrides the config seed)")
    p.add_argument("--threads", type=int, default=d(None), help="BLAS/OpenMP thread count")
    p.add_argument("--out", default=d(None), help="output directory (default: config output_dir or ./out)")
    p.add_argument("--config", default=d(None), help="experiment config JSON")
    p.add_argument(
        "--flag-threshold", type=float, default=d(0.5),
        help="maximum fraction of flagged rows before exiting with code 3",
    )
    p.add_argument("-v", "--verbose", action="store_true", default=d(False))
    return p


def _ham_source(p: argparse.ArgumentParser) -> None:
    p.add_argument("--hamiltonian", help="PauliSum/SpinGraph JSON or 'coeff LABEL' text file")
    p.add_argument("-q", "--qubits", type=int, help="uniform Heisenberg ring size (if no --hamiltonian)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qcm", description=__doc__.splitlines()[0], parents=[_global_flags(True)])
    sub = parser.add_subparsers(dest="verb", required=True)
    g = [_global_flags(False)]

    p = sub.add_parser("build-ham", parents=g, help="write a Heisenberg ring as SpinGraph and PauliSum JSON")
    p.add_argument("-q", "--qubits", type=int, required=True)
    p.add_argument("--couplings", choices=("uniform", "random"), default="uniform")
    p.add_argument("--low", type=float, default=0.0)
    p.add_argument("--high", type=float, default=1.0)

    p = sub.add_parser("powers", parents=g, help="term counts of H^1..H^k")
    _ham_source(p)
    p.add_argument("-k", type=int, default=4)
    p.add_argument("--save", action="store_true", help="also write each power as JSON")

    p = sub.add_parser("group", parents=g, help="qubit-wise commuting grouping of the union of H^1..H^k")
    _ham_source(p)
    p.add_argument("-k", type=int, default=4)

    p = sub.add_parser("optimize", parents=g, help="VQE campaign for D=1..D_max, written as a theta* archive")
    _ham_source(p)
    p.add_argument("--D-max", type=int, default=4)
    p.add_argument("--max-iters", type=int)
    p.add_argument("--max-evals", type=int)
    p.add_argument("--restarts", type=int, default=4)
    p.add_argument("--id", default="uniform", help="hamiltonian_id stored in the archive")

    p = sub.add_parser("estimate", parents=g, help="energy estimates from moments or from an archived circuit")
    _ham_source(p)
    p.add_argument("--moments", type=float, nargs="+", help="<H>, <H^2>, ... (4 or 5 values)")
    p.add_argument("--archive", help="theta* archive; with --D, estimates that circuit's state")
    p.add_argument("--D", type=int)
    p.add_argument("--e0", type=float, help="reference ground energy for approximation errors")
    p.add_argument("--shots", type=int, help="shots per TPB group (default: exact moments)")

    p = sub.add_parser("sweep", parents=g, help="run a figure experiment from --config or --experiment")
    p.add_argument("--experiment", help="experiment name, if no --config")
    p.add_argument("-q", "--qubits", type=int)
    p.add_argument("--D-max", type=int)

    p = sub.add_parser("whitenoise", parents=g, help="white-noise cancellation table for an oscillator spectrum")
    p.add_argument("--e0", type=float, default=-1.0)
    p.add_argument("--gap", type=float, default=1e-3)
    p.add_argument("--levels", type=int, default=2**20)
    p.add_argument("--model", choices=("exact", "small_gap"), default="exact")

    p = sub.add_parser("ht-map", parents=g, help="lanczos4 vs high-temperature limit map from a dataset CSV")
    p.add_argument("csv", help="CSV with instance_id, D, lanczos4 and ht_lanczos4 columns")

    p = sub.add_parser("fig1-moments-only", parents=g, help="build H^1..H^4 and the grouping without simulation")
    p.add_argument("-q", "--qubits", type=int, default=20)
    return parser


# verbs ---------------------------------------------------------------------------


def _out_dir(args, default: str = "out") -> Path:
    out = Path(args.out or default)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _hamiltonian(args):
    from .experiments import ConfigError, load_hamiltonian
    from .hamiltonian import heisenberg_ring

    if args.hamiltonian:
        return load_hamiltonian(args.hamiltonian)
    if args.qubits:
        return heisenberg_ring(args.qubits)
    raise ConfigError("give --hamiltonian or -q")


def _write_json(path: Path, obj) -> Path:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True))
    return path


def cmd_build_ham(args) -> dict:
    from .hamiltonian import heisenberg_graph, random_heisenberg_graph

    if args.couplings == "uniform":
        g = heisenberg_graph(args.qubits)
    else:
        g = random_heisenberg_graph(args.qubits, args.seed or 0, args.low, args.high)
    out = _out_dir(args)
    a = _write_json(out / "graph.json", g.to_json())
    h = g.to_pauli()
    b = _write_json(out / "hamiltonian.json", h.to_json())
    return {"num_qubits": args.qubits, "terms": len(h), "files": [str(a), str(b)]}


def cmd_powers(args) -> dict:
    from .pauli import powers

    h = _hamiltonian(args)
    t0 = time.perf_counter()
    hs = powers(h, args.k)
    res = {"num_qubits": h.num_qubits, "term_counts": {str(k + 1): len(p) for k, p in enumerate(hs)}}
    res["wall_time_s"] = round(time.perf_counter() - t0, 3)
    if args.save:
        out = _out_dir(args)
        res["files"] = [str(_write_json(out / f"H{k + 1}.json", p.to_json())) for k, p in enumerate(hs)]
    return res


def cmd_group(args) -> dict:
    from .measure import group_tpb
    from .pauli import powers

    h = _hamiltonian(args)
    g = group_tpb(powers(h, args.k))
    g.check()
    path = _write_json(_out_dir(args) / "grouping.json", g.to_json())
    return {"num_qubits": h.num_qubits, "num_groups": len(g), "file": str(path)}


def cmd_optimize(args) -> dict:
    from .experiments import ConfigError
    from .hamiltonian import exact_ground
    from .vqe import OptimizerConfig, optimize_campaign, save_archive

    if not 1 <= args.D_max <= 7:
        raise ConfigError("--D-max must be in [1, 7]")
    h = _hamiltonian(args)
    cfg = OptimizerConfig(
        max_iters=args.max_iters, restarts=args.restarts, seed=args.seed or 0, max_evals=args.max_evals
    )
    runs = optimize_campaign(h, args.D_max, cfg, hamiltonian_id=args.id)
    path = _out_dir(args) / "archive.json"
    save_archive(runs, path)
    e0, _ = exact_ground(h)
    return {"e0": e0, "energies": {str(r.D): r.energy_star for r in runs}, "file": str(path)}


def cmd_estimate(args) -> dict:
    import numpy as np

    from .estimators import estimate_report, ht_limit
    from .experiments import ConfigError, moments_of
    from .measure import exact_moments
    from .pauli import powers
    from .sim import QuantumState
    from .vqe import RVBStatevector, load_archive

    ht = None
    e0 = args.e0
    if args.moments:
        if len(args.moments) not in (4, 5):
            raise ConfigError("--moments needs 4 or 5 values")
        m = args.moments
    elif args.archive is not None and args.D is not None:
        h = _hamiltonian(args)
        try:
            runs = {r.D: r for r in load_archive(args.archive)}
        except (OSError, ValueError, TypeError) as exc:
            raise ConfigError(f"cannot read archive: {exc}") from exc
        if args.D not in runs:
            raise ConfigError(f"archive has no D={args.D} run")
        psi = RVBStatevector(h.num_qubits, args.D)(np.asarray(runs[args.D].theta_star))
        hs = powers(h, 5)
        state = QuantumState(h.num_qubits, psi)
        if args.shots:
            m = moments_of(hs, state, shots=args.shots, seed=args.seed or 0)
        else:
            m = exact_moments(h, state, 5)
        ht = ht_limit(hs[:4])
        if e0 is None:
            from .hamiltonian import exact_ground

            e0, _ = exact_ground(h)
    else:
        raise ConfigError("give --moments, or --archive and --D with a Hamiltonian")
    rep = estimate_report(m, e0=e0, ht_lanczos4=ht)
    path = _write_json(_out_dir(args) / "estimate.json", rep.to_json())
    res = rep.to_json()
    res["file"] = str(path)
    flagged = any(rep.degenerate_flags.values())
    return {**res, "_flagged": (int(flagged), 1)}


def _load_config(args, **overrides):
    from .experiments import ConfigError, ExperimentConfig

    if args.config:
        try:
            obj = json.loads(Path(args.config).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        if not isinstance(obj, dict):
            raise ConfigError("config must be a JSON object")
    else:
        obj = {}
    obj.update({k: v for k, v in overrides.items() if v is not None})
    if args.seed is not None:
        obj["seed"] = args.seed
    if args.out is not None:
        obj["output_dir"] = args.out
    return ExperimentConfig.from_json(obj)


def _run(cfg) -> dict:
    from .experiments import run_experiment

    res = run_experiment(cfg)
    return {
        "experiment": cfg.experiment,
        "rows": len(res.rows),
        "flagged_rows": res.flagged_rows,
        "files": [str(p) for p in res.files],
        "_flagged": (res.flagged_rows, len(res.rows)),
    }


def cmd_sweep(args) -> dict:
    return _run(_load_config(args, experiment=args.experiment, q=args.qubits, D_max=args.D_max))


def cmd_whitenoise(args) -> dict:
    wn = {"e0": args.e0, "gap": args.gap, "levels": args.levels, "model": args.model}
    return _run(_load_config(args, experiment="whitenoise", whitenoise=wn))


def cmd_ht_map(args) -> dict:
    from .experiments import ConfigError, ht_advantage_map, read_csv, write_csv

    try:
        rows = read_csv(args.csv)
        table = ht_advantage_map(rows)
    except OSError as exc:
        raise ConfigError(f"cannot read {args.csv}: {exc}") from exc
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"{args.csv} lacks a usable lanczos4/ht_lanczos4 column: {exc}") from exc
    path = write_csv(_out_dir(args) / "ht_map.csv", table)
    below = sum(r["below_ht"] for r in table)
    return {"cells": len(table), "below_ht": below, "file": str(path)}


def cmd_fig1_moments_only(args) -> dict:
    from .hamiltonian import heisenberg_ring
    from .measure import group_tpb
    from .pauli import powers

    t0 = time.perf_counter()
    hs = powers(heisenberg_ring(args.qubits), 4)
    t1 = time.perf_counter()
    g = group_tpb(hs)
    g.check()
    t2 = time.perf_counter()
    res = {
        "num_qubits": args.qubits,
        "term_counts": {str(k + 1): len(p) for k, p in enumerate(hs)},
        "num_groups": len(g),
        "powers_time_s": round(t1 - t0, 3),
        "grouping_time_s": round(t2 - t1, 3),
    }
    res["file"] = str(_write_json(_out_dir(args) / "fig1_moments_only.json", res))
    return res


COMMANDS = {
    "build-ham": cmd_build_ham,
    "powers": cmd_powers,
    "group": cmd_group,
    "optimize": cmd_optimize,
    "estimate": cmd_estimate,
    "sweep": cmd_sweep,
    "whitenoise": cmd_whitenoise,
    "ht-map": cmd_ht_map,
    "fig1-moments-only": cmd_fig1_moments_only,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads:
        for var in _THREAD_VARS:
            os.environ[var] = str(args.threads)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")

    from .experiments import ConfigError

    try:
        res = COMMANDS[args.verb](args)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"qcm: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        # malformed Hamiltonian files and out-of-range parameters surface as ValueError
        print(f"qcm: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    flagged, total = res.pop("_flagged", (0, 0))
    print(json.dumps(res, indent=2, sort_keys=True, default=str))
    if total and flagged / total > args.flag_threshold:
        print(f"qcm: {flagged}/{total} rows flagged degenerate (threshold {args.flag_threshold})", file=sys.stderr)
        return EXIT_FLAGGED
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
