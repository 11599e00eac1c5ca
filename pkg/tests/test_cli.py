import json

import numpy as np
import pytest

from oqctrl.cli import main
from oqctrl.serialization import matrix_to_lists


def write_config(path, payload):
    path.write_text(json.dumps(payload, indent=2))
    return path


def qubit_simulate_config(n=1.0, dt=50.0):
    return {
        "system": {
            "energies": [0.0, 1.0],
            "dipole": [[[0, 0], [1, 0]], [[1, 0], [0, 0]]],
        },
        "decoherence": {"couplings": [[0, 0.5], [0.5, 0]], "epsilon": 1.0},
        "initial_state": [[[0.5, 0], [0, 0]], [[0, 0], [0.5, 0]]],
        "segments": [{"dt": dt, "u": 0.0, "n": n}, {"dt": dt, "u": 0.0, "n": n}],
    }


class TestSimulate:
    def test_detailed_balance_endpoint(self, tmp_path):
        cfg = write_config(tmp_path / "cfg.json", qubit_simulate_config(n=1.0))
        out = tmp_path / "out"
        assert main(["simulate", str(cfg), "--out", str(out)]) == 0
        final = json.loads((out / "final_state.json").read_text())["final_state"]
        assert final[0][0][0] == pytest.approx(2.0 / 3.0, abs=1e-6)
        assert final[1][1][0] == pytest.approx(1.0 / 3.0, abs=1e-6)
        rows = (out / "trajectory.csv").read_text().strip().splitlines()
        assert rows[0] == "t,x,y,z"
        assert len(rows) == 4  # header + initial + 2 segments
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["subcommand"] == "simulate"
        assert set(manifest["outputs"]) == {
            "trajectory.csv", "final_state.json", "manifest.json",
        }

    def test_missing_field_is_validation_error(self, tmp_path, capsys):
        payload = qubit_simulate_config()
        del payload["initial_state"]
        cfg = write_config(tmp_path / "cfg.json", payload)
        assert main(["simulate", str(cfg), "--out", str(tmp_path / "o")]) == 1
        assert "initial_state" in capsys.readouterr().err

    def test_invalid_state_is_validation_error(self, tmp_path, capsys):
        payload = qubit_simulate_config()
        payload["initial_state"] = [[[2.0, 0], [0, 0]], [[0, 0], [0.5, 0]]]
        cfg = write_config(tmp_path / "cfg.json", payload)
        assert main(["simulate", str(cfg), "--out", str(tmp_path / "o")]) == 1
        assert "initial_state" in capsys.readouterr().err

    def test_unknown_subcommand_is_validation_error(self, tmp_path, capsys):
        assert main(["frobnicate", "x.json", "--out", str(tmp_path)]) == 1

    def test_bad_json_is_validation_error(self, tmp_path):
        bad = tmp_path / "cfg.json"
        bad.write_text("{not json")
        assert main(["simulate", str(bad), "--out", str(tmp_path / "o")]) == 1

    def test_dense_output_format(self, tmp_path):
        payload = qubit_simulate_config()
        payload["output_format"] = "dense"
        cfg = write_config(tmp_path / "cfg.json", payload)
        out = tmp_path / "out"
        assert main(["simulate", str(cfg), "--out", str(out)]) == 0
        header = (out / "trajectory.csv").read_text().splitlines()[0]
        assert header.startswith("t,re_00,im_00")


class TestStiefelMax:
    def test_reaches_top_eigenvalue(self, tmp_path):
        cfg = write_config(
            tmp_path / "cfg.json",
            {
                "rho": [[[0.5, 0], [0.1, 0.05]], [[0.1, -0.05], [0.5, 0]]],
                "observable": [[[1, 0], [0, 0]], [[0, 0], [-1, 0]]],
                "starts": 2,
                "grad_tol": 1e-7,
                "seed": 4,
            },
        )
        out = tmp_path / "out"
        assert main(["stiefel-max", str(cfg), "--out", str(out)]) == 0
        report = json.loads((out / "report.json").read_text())
        assert report["best_objective"] == pytest.approx(1.0, abs=1e-6)
        assert report["observable_max_eigenvalue"] == pytest.approx(1.0)
        lines = (out / "iterations.csv").read_text().splitlines()
        assert lines[0] == "iter,objective,grad_norm,step"
        assert len(lines) > 2


class TestInGrape:
    def test_identity_gate_scan(self, tmp_path):
        cfg = write_config(
            tmp_path / "cfg.json",
            {
                "kind": "gate",
                "system": {"energies": [0, 0], "dipole": [[[0, 0], [1, 0]], [[1, 0], [0, 0]]]},
                "decoherence": {"couplings": [[0, 0], [0, 0]], "epsilon": 0.0},
                "target": [[[1, 0], [0, 0]], [[0, 0], [1, 0]]],
                "grid": {"segments": 4, "dt": 0.3},
                "bounds": {"u_max": 2.0, "n_max": 0.0},
                "starts": 3,
                "max_iter": 200,
                "seed": 1,
            },
        )
        out = tmp_path / "out"
        assert main(["ingrape", str(cfg), "--out", str(out)]) == 0
        scan = json.loads((out / "scan.json").read_text())
        assert scan["best_value"] < 1e-8
        runs = (out / "runs.csv").read_text().splitlines()
        assert runs[0] == "run,final_value,converged,iterations"
        assert len(runs) == 4

    def test_state_transfer_kind(self, tmp_path):
        cfg = write_config(
            tmp_path / "cfg.json",
            {
                "kind": "state",
                "system": {"energies": [0, 1], "dipole": [[[0, 0], [1, 0]], [[1, 0], [0, 0]]]},
                "decoherence": {"couplings": [[0, 0.2], [0.2, 0]]},
                "initial_state": [[[0.5, 0], [0, 0]], [[0, 0], [0.5, 0]]],
                "observable": [[[1, 0], [0, 0]], [[0, 0], [-1, 0]]],
                "grid": {"segments": 3, "dt": 2.0},
                "bounds": {"u_max": 1.0, "n_max": 1.0},
                "starts": 2,
                "max_iter": 150,
                "seed": 2,
            },
        )
        out = tmp_path / "out"
        assert main(["ingrape", str(cfg), "--out", str(out)]) == 0
        scan = json.loads((out / "scan.json").read_text())
        # expectation maximization drives <sigma_z> toward the ground state
        assert max(scan["cluster_centers"]) > 0.5


class TestKrausSearch:
    def test_flip_certificate(self, tmp_path):
        cfg = write_config(
            tmp_path / "cfg.json",
            {
                "alphabet": [
                    {"kraus": [[[[0, 0], [1, 0]], [[1, 0], [0, 0]]]]},
                ],
                "initial_state": [[[1, 0], [0, 0]], [[0, 0], [0, 0]]],
                "target_state": [[[0, 0], [0, 0]], [[0, 0], [1, 0]]],
                "max_depth": 3,
            },
        )
        out = tmp_path / "out"
        assert main(["kraus-search", str(cfg), "--out", str(out)]) == 0
        outcome = json.loads((out / "outcome.json").read_text())
        assert outcome["found"] is True
        assert outcome["sequence"] == [0]
        assert outcome["replay_verified"] is True

    def test_hadamard_orbit_negative(self, tmp_path):
        h = [
            [[{"sqrt2": "1/2"}, 0], [{"sqrt2": "1/2"}, 0]],
            [[{"sqrt2": "1/2"}, 0], [{"sqrt2": "-1/2"}, 0]],
        ]
        cfg = write_config(
            tmp_path / "cfg.json",
            {
                "alphabet": [{"kraus": [h]}],
                "initial_state": [[[1, 0], [0, 0]], [[0, 0], [0, 0]]],
                "target_state": [[[0, 0], [0, 0]], [[0, 0], [1, 0]]],
                "max_depth": 6,
            },
        )
        out = tmp_path / "out"
        assert main(["kraus-search", str(cfg), "--out", str(out)]) == 0
        outcome = json.loads((out / "outcome.json").read_text())
        assert outcome["found"] is False
        assert outcome["states_explored"] == 2

    def test_inexact_channel_is_validation_error(self, tmp_path, capsys):
        cfg = write_config(
            tmp_path / "cfg.json",
            {
                "alphabet": [{"kraus": [[[["1/2", 0], [0, 0]], [[0, 0], ["1/2", 0]]]]}],
                "initial_state": [[[1, 0], [0, 0]], [[0, 0], [0, 0]]],
                "target_state": [[[0, 0], [0, 0]], [[0, 0], [1, 0]]],
                "max_depth": 2,
            },
        )
        assert main(["kraus-search", str(cfg), "--out", str(tmp_path / "o")]) == 1
        assert "alphabet" in capsys.readouterr().err


class TestReachable:
    @pytest.fixture()
    def config(self, tmp_path):
        return write_config(
            tmp_path / "cfg.json",
            {
                "omega": 1.0,
                "mu": 1.0,
                "gamma": 0.1,
                "u_max": 10.0,
                "n_max": 1.0,
                "samples": 40000,
                "resolution": 8,
                "seed": 9,
            },
        )

    def test_report_and_points(self, tmp_path, config):
        out = tmp_path / "out"
        assert main(["reachable", str(config), "--out", str(out)]) == 0
        report = json.loads((out / "report.json").read_text())
        assert report["PASS"] is True
        assert report["max_radial_gap"] <= 0.3
        assert report["bound_gamma_over_omega"] == pytest.approx(0.1)
        points = (out / "points.csv").read_text().splitlines()
        assert points[0] == "x,y,z"
        assert len(points) > 40000
        grid = json.loads((out / "grid.json").read_text())
        assert grid["occupied_in_ball_cells"] <= grid["total_in_ball_cells"]

    def test_byte_identical_reruns(self, tmp_path, config):
        out1, out2 = tmp_path / "a", tmp_path / "b"
        assert main(["reachable", str(config), "--out", str(out1)]) == 0
        assert main(["reachable", str(config), "--out", str(out2)]) == 0
        for name in ("points.csv", "grid.json", "report.json", "manifest.json"):
            assert (out1 / name).read_bytes() == (out2 / name).read_bytes()

    def test_seed_override_changes_cloud(self, tmp_path, config):
        out1, out2 = tmp_path / "a", tmp_path / "b"
        assert main(["reachable", str(config), "--out", str(out1)]) == 0
        assert main(["reachable", str(config), "--out", str(out2), "--seed", "77"]) == 0
        assert (out1 / "points.csv").read_bytes() != (out2 / "points.csv").read_bytes()
        assert json.loads((out2 / "manifest.json").read_text())["seed"] == 77


class TestReproducibility:
    def test_simulate_byte_identical(self, tmp_path):
        cfg = write_config(tmp_path / "cfg.json", qubit_simulate_config())
        out1, out2 = tmp_path / "a", tmp_path / "b"
        assert main(["simulate", str(cfg), "--out", str(out1)]) == 0
        assert main(["simulate", str(cfg), "--out", str(out2)]) == 0
        for name in ("trajectory.csv", "final_state.json", "manifest.json"):
            assert (out1 / name).read_bytes() == (out2 / name).read_bytes()

    def test_ingrape_byte_identical(self, tmp_path):
        payload = {
            "kind": "gate",
            "system": {"energies": [0, 1], "dipole": [[[0, 0], [1, 0]], [[1, 0], [0, 0]]]},
            "decoherence": {"couplings": [[0, 1e-3], [1e-3, 0]]},
            "target": matrix_to_lists(np.array([[1, 1], [1, -1]]) / np.sqrt(2)),
            "grid": {"segments": 4, "dt": 0.5},
            "bounds": {"u_max": 3.0, "n_max": 0.5},
            "starts": 2,
            "max_iter": 60,
            "seed": 3,
        }
        cfg = write_config(tmp_path / "cfg.json", payload)
        out1, out2 = tmp_path / "a", tmp_path / "b"
        assert main(["ingrape", str(cfg), "--out", str(out1)]) == 0
        assert main(["ingrape", str(cfg), "--out", str(out2)]) == 0
        for name in ("runs.csv", "scan.json", "histogram.csv"):
            assert (out1 / name).read_bytes() == (out2 / name).read_bytes()

    def test_failure_leaves_marker(self, tmp_path, monkeypatch):
        # force a runtime failure inside the pipeline
        import oqctrl.cli as cli_mod

        def boom(*a, **k):
            raise RuntimeError("synthetic failure")

        monkeypatch.setitem(cli_mod._COMMANDS, "simulate", boom)
        cfg = write_config(tmp_path / "cfg.json", qubit_simulate_config())
        out = tmp_path / "out"
        assert main(["simulate", str(cfg), "--out", str(out)]) == 2
        assert (out / "FAILED").exists()
        assert "synthetic failure" in (out / "FAILED").read_text()
        assert not (out / "manifest.json").exists()
