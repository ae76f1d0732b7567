import json
import subprocess
import sys

import pytest

from qcm.cli import EXIT_CONFIG, EXIT_FLAGGED, EXIT_OK, main


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, (json.loads(out.out) if code == EXIT_OK and out.out else None), out.err


class TestVerbs:
    def test_build_ham(self, capsys, tmp_path):
        code, res, _ = run(capsys, "build-ham", "-q", 6, "--out", tmp_path)
        assert code == EXIT_OK and res["terms"] == 18
        graph = json.loads((tmp_path / "graph.json").read_text())
        assert len(graph["edges"]) == 6

    def test_random_couplings_follow_seed(self, capsys, tmp_path):
        run(capsys, "--seed", 4, "build-ham", "-q", 4, "--couplings", "random", "--out", tmp_path / "a")
        run(capsys, "build-ham", "-q", 4, "--couplings", "random", "--seed", 4, "--out", tmp_path / "b")
        assert (tmp_path / "a/graph.json").read_text() == (tmp_path / "b/graph.json").read_text()

    def test_powers(self, capsys):
        code, res, _ = run(capsys, "powers", "-q", 6, "-k", 4)
        assert res["term_counts"] == {"1": 18, "2": 118, "3": 340, "4": 502}

    def test_powers_from_file(self, capsys, tmp_path):
        run(capsys, "build-ham", "-q", 4, "--out", tmp_path)
        code, res, _ = run(capsys, "powers", "--hamiltonian", tmp_path / "hamiltonian.json", "-k", 2, "--save", "--out", tmp_path)
        assert code == EXIT_OK and len(res["files"]) == 2

    def test_group(self, capsys, tmp_path):
        code, res, _ = run(capsys, "group", "-q", 4, "--out", tmp_path)
        grouping = json.loads((tmp_path / "grouping.json").read_text())
        assert res["num_groups"] == grouping["num_groups"]

    def test_optimize_then_estimate(self, capsys, tmp_path):
        code, res, _ = run(capsys, "optimize", "-q", 4, "--D-max", 2, "--restarts", 1, "--max-iters", 200, "--out", tmp_path)
        assert code == EXIT_OK
        code, rep, _ = run(
            capsys, "estimate", "-q", 4, "--archive", tmp_path / "archive.json", "--D", 2, "--out", tmp_path
        )
        assert rep["variational"] == pytest.approx(res["energies"]["2"], abs=1e-12)
        assert rep["lanczos4"] <= rep["variational"]
        assert rep["e0"] == pytest.approx(-0.5)

    def test_estimate_from_moments(self, capsys, tmp_path):
        # two-level: eigenvalues -1, 3 with weights 13/14, 1/14
        m = [(13 * (-1) ** k + 3**k) / 14 for k in range(1, 5)]
        code, rep, _ = run(capsys, "estimate", "--moments", *m, "--out", tmp_path)
        assert rep["lanczos4"] == pytest.approx(-1.0, abs=1e-12)

    def test_sweep_and_ht_map(self, capsys, tmp_path):
        code, res, _ = run(capsys, "sweep", "--experiment", "fig1d", "-q", 6, "--D-max", 1, "--out", tmp_path)
        assert code == EXIT_OK and res["rows"] == 2
        code, res, _ = run(capsys, "ht-map", tmp_path / "fig1d.csv", "--out", tmp_path)
        assert res["cells"] == 2 and res["below_ht"] >= 1

    def test_sweep_from_config(self, capsys, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({
            "experiment": "fig3", "q": 4, "p_grid": [0.0, 0.5], "f_grid": [1.0, 0.5],
            "output_dir": str(tmp_path / "o"),
        }))
        code, res, _ = run(capsys, "--config", cfg, "sweep")
        assert code == EXIT_OK and res["rows"] == 4
        assert (tmp_path / "o/fig3_ht_crossings.csv").exists()

    def test_whitenoise(self, capsys, tmp_path):
        code, res, _ = run(capsys, "whitenoise", "--levels", 1024, "--out", tmp_path)
        assert code == EXIT_OK and res["rows"] == 11 and res["flagged_rows"] == 1

    def test_fig1_moments_only(self, capsys, tmp_path):
        code, res, _ = run(capsys, "fig1-moments-only", "-q", 8, "--out", tmp_path)
        assert res["term_counts"]["1"] == 24
        assert res["num_groups"] > 0


class TestExitCodes:
    def test_unknown_experiment(self, capsys):
        code, _, err = run(capsys, "sweep", "--experiment", "fig9")
        assert code == EXIT_CONFIG and "fig9" in err

    def test_bad_config_json(self, capsys, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text("{oops")
        assert run(capsys, "--config", cfg, "sweep")[0] == EXIT_CONFIG

    def test_missing_config(self, capsys, tmp_path):
        assert run(capsys, "--config", tmp_path / "nope.json", "sweep")[0] == EXIT_CONFIG

    def test_missing_hamiltonian(self, capsys, tmp_path):
        assert run(capsys, "powers", "--hamiltonian", tmp_path / "nope.txt")[0] == EXIT_CONFIG

    def test_missing_source(self, capsys):
        assert run(capsys, "powers")[0] == EXIT_CONFIG

    def test_bad_csv(self, capsys, tmp_path):
        (tmp_path / "x.csv").write_text("a,b\n1,2\n")
        assert run(capsys, "ht-map", tmp_path / "x.csv")[0] == EXIT_CONFIG

    def test_wrong_moment_count(self, capsys, tmp_path):
        assert run(capsys, "estimate", "--moments", 1, 2, "--out", tmp_path)[0] == EXIT_CONFIG

    def test_flag_threshold(self, capsys, tmp_path):
        # one flagged row in eleven (p = 0) trips a threshold below 1/11
        code, _, err = run(capsys, "--flag-threshold", 0.05, "whitenoise", "--levels", 64, "--out", tmp_path)
        assert code == EXIT_FLAGGED and "flagged" in err

    def test_degenerate_moments_flagged(self, capsys, tmp_path):
        code, _, _ = run(capsys, "--flag-threshold", 0, "estimate", "--moments", -1, 1, -1, 1, "--out", tmp_path)
        assert code == EXIT_FLAGGED


def test_console_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "qcm.cli", "--threads", "1", "powers", "-q", "4", "-k", "2"],
        capture_output=True, text=True, cwd=tmp_path,
    )
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["term_counts"]["1"] == 12
