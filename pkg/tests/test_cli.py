import json
from pathlib import Path

import numpy as np
import pytest

from oracles import tv_distance
from ovqueue.cli import build_parser, main

GOLDEN = Path(__file__).parent / "golden"

MM1_RESAMPLED = {
    "kind": "resampled_finite", "q": 1.0,
    "atoms": [{"lambda": 0.5, "mu": 1.0, "pi": 1.0}]}
MM1_ENDOGENOUS = {
    "kind": "endogenous_mg1",
    "arrival_law": {"family": "deterministic", "params": {"value": 0.5}},
    "service": {"family": "exponential", "params": {"rate": 1.0}}}


def read_dist(path):
    rows = Path(path).read_text().strip().split("\n")[1:]
    return np.array([float(r.split(",")[1]) for r in rows])


class TestHelp:
    @pytest.mark.parametrize("name", ["main", "solve", "compare", "simulate",
                                      "moments", "ht", "ld", "invert"])
    def test_help_golden(self, name, monkeypatch):
        monkeypatch.setenv("COLUMNS", "80")
        parser = build_parser()
        if name == "main":
            text = parser.format_help()
        else:
            import argparse
            subs = next(a for a in parser._actions
                        if isinstance(a, argparse._SubParsersAction))
            text = subs.choices[name].format_help()
        assert text == (GOLDEN / f"help_{name}.txt").read_text()

    def test_every_flag_listed(self, monkeypatch):
        monkeypatch.setenv("COLUMNS", "80")
        text = (GOLDEN / "help_simulate.txt").read_text()
        for flag in ("--model", "--preset", "--out", "--seed", "--events",
                     "--time", "--reps", "--warmup", "--t-grid", "--flow-grid",
                     "--format"):
            assert flag in text


class TestSolve:
    def test_mm1_geometric_csv(self, write_spec, tmp_path):
        model = write_spec(MM1_RESAMPLED)
        out = tmp_path / "out"
        out.mkdir()
        assert main(["solve", "--model", model, "--out", str(out),
                     "--n-max", "30"]) == 0
        probs = read_dist(out / "solve_model.csv")
        assert probs == pytest.approx(0.5 * 0.5 ** np.arange(31), abs=1e-10)

    def test_cross_route_endogenous_vs_qbd(self, write_spec, tmp_path):
        out = tmp_path / "out"
        out.mkdir()
        m1 = write_spec(MM1_RESAMPLED, "a.json")
        m2 = write_spec(MM1_ENDOGENOUS, "b.json")
        assert main(["solve", "--model", m1, "--out", str(out), "--n-max", "200"]) == 0
        assert main(["solve", "--model", m2, "--out", str(out), "--n-max", "200"]) == 0
        assert tv_distance(read_dist(out / "solve_a.csv"),
                           read_dist(out / "solve_b.csv")) < 1e-6

    def test_table1_preset_blocks(self, tmp_path):
        out = tmp_path / "out"
        out.mkdir()
        assert main(["solve", "--preset", "table1", "--out", str(out)]) == 0
        blocks = json.loads((out / "solve_summary.json").read_text())
        assert len(blocks) == 6
        by_label = {b["label"]: b for b in blocks}
        assert by_label["lam1.8_q0.5"]["R"][0][0] == pytest.approx(0.963, abs=5e-4)
        assert by_label["lam1.9_q2"]["zeta0"][1] == pytest.approx(0.0330, abs=5e-5)

    def test_rerun_byte_identical(self, write_spec, tmp_path):
        model = write_spec(MM1_RESAMPLED)
        out = tmp_path / "out"
        out.mkdir()
        main(["solve", "--model", model, "--out", str(out)])
        first = (out / "solve_model.csv").read_bytes()
        first_json = (out / "solve_summary.json").read_bytes()
        main(["solve", "--model", model, "--out", str(out)])
        assert (out / "solve_model.csv").read_bytes() == first
        assert (out / "solve_summary.json").read_bytes() == first_json

    def test_general_model_rejected(self, write_spec, tmp_path):
        model = write_spec({
            "kind": "resampled_general",
            "arrival_law": {"family": "independent",
                            "lambda_law": {"family": "exponential",
                                           "params": {"rate": 2.0}},
                            "mu_law": {"family": "deterministic",
                                       "params": {"value": 1.0}}},
            "clock": {"family": "exponential", "params": {"rate": 1.0}}})
        out = tmp_path / "out"
        out.mkdir()
        assert main(["solve", "--model", model, "--out", str(out)]) == 2


class TestValidationPaths:
    def test_unknown_flag_rejected(self):
        with pytest.raises(SystemExit) as exc:
            main(["solve", "--bogus", "x"])
        assert exc.value.code == 2

    def test_missing_out_dir(self, write_spec, tmp_path):
        model = write_spec(MM1_RESAMPLED)
        assert main(["solve", "--model", model,
                     "--out", str(tmp_path / "nope")]) == 2

    def test_zero_load_rejected(self, write_spec, tmp_path):
        model = write_spec(MM1_RESAMPLED)
        out = tmp_path / "out"
        out.mkdir()
        assert main(["compare", "--model", model, "--out", str(out),
                     "--rho", "0"]) == 2

    def test_model_and_preset_exclusive(self, write_spec, tmp_path):
        model = write_spec(MM1_RESAMPLED)
        assert main(["solve", "--model", model, "--preset", "table1"]) == 2
        assert main(["solve"]) == 2


class TestCompare:
    def test_figure_preset_gaps(self, tmp_path):
        out = tmp_path / "out"
        out.mkdir()
        assert main(["compare", "--preset", "figure1", "--out", str(out),
                     "--n-max", "300"]) == 0
        rows = json.loads((out / "compare_summary.json").read_text())
        gaps = {r["label"]: r["sup_norm_gap"] for r in rows}
        for q in ("q0.5", "q1", "q2"):
            assert gaps[f"lam1.9_{q}"] < gaps[f"lam1.8_{q}"]

    def test_csv_columns(self, write_spec, tmp_path):
        model = write_spec(MM1_RESAMPLED)
        out = tmp_path / "out"
        out.mkdir()
        assert main(["compare", "--model", model, "--out", str(out),
                     "--rho", "0.8", "--n-max", "20"]) == 0
        text = (out / "compare_model_rho0.8.csv").read_text()
        assert text.startswith("n,p_exact,p_ht\n")


class TestSimulateCommand:
    def test_deterministic_outputs(self, write_spec, tmp_path):
        model = write_spec(MM1_RESAMPLED)
        out = tmp_path / "out"
        out.mkdir()
        args = ["simulate", "--model", model, "--out", str(out),
                "--events", "50000", "--seed", "9"]
        assert main(args) == 0
        first = (out / "simulate_model.json").read_bytes()
        assert main(args) == 0
        assert (out / "simulate_model.json").read_bytes() == first
        doc = json.loads(first)
        assert doc["mean"] == pytest.approx(1.0, abs=0.15)


class TestThinDrivers:
    def test_ht_endogenous_prints_mean(self, write_spec, tmp_path, capsys):
        model = write_spec({
            "kind": "endogenous_mg1",
            "arrival_law": {"family": "discrete",
                            "params": {"values": [0.0, 1.6], "probs": [0.5, 0.5]}},
            "service": {"family": "exponential", "params": {"rate": 1.0}}})
        out = tmp_path / "out"
        out.mkdir()
        assert main(["ht", "--model", model, "--out", str(out)]) == 0
        doc = json.loads((out / "ht_model.json").read_text())
        # critical scaling: E[Lc^2] = 2, E[S^2] = 2 -> mean 2
        assert doc["mean"] == pytest.approx(2.0, rel=1e-12)
        assert "mean" in capsys.readouterr().out

    def test_moments_poisson(self, write_spec, tmp_path):
        model = write_spec(MM1_RESAMPLED)
        out = tmp_path / "out"
        out.mkdir()
        assert main(["moments", "--model", model, "--out", str(out)]) == 0
        doc = json.loads((out / "moments_model.json").read_text())
        assert doc["asymptotic_var_arrival"] == pytest.approx(0.5, rel=1e-12)

    def test_ld_combination_identity(self, tmp_path):
        out = tmp_path / "out"
        out.mkdir()
        assert main(["ld", "--preset", "appendix-demo", "--out", str(out)]) == 0
        doc = json.loads((out / "ld_two_point_ld.json").read_text())
        by_alpha = {r["alpha"]: r for r in doc["results"]}
        assert by_alpha[0.5]["variance"] == pytest.approx(
            doc["combination_check"]["v_half_from_constants"], rel=1e-6)

    def test_invert_matches_solve(self, write_spec, tmp_path):
        doc = {"kind": "resampled_finite", "q": 1.0,
               "atoms": [{"lambda": 1.2, "mu": 1.5, "pi": 0.5},
                         {"lambda": 0.4, "mu": 1.0, "pi": 0.5}]}
        model = write_spec(doc)
        out = tmp_path / "out"
        out.mkdir()
        assert main(["solve", "--model", model, "--out", str(out),
                     "--n-max", "150"]) == 0
        assert main(["invert", "--model", model, "--out", str(out),
                     "--n-max", "150"]) == 0
        assert tv_distance(read_dist(out / "solve_model.csv"),
                           read_dist(out / "invert_model.csv")) < 1e-7


class TestTrajectoriesAndEmitters:
    def test_trajectory_csv(self, write_spec, tmp_path):
        model = write_spec({
            "kind": "resampled_general",
            "arrival_law": {"family": "finite",
                            "atoms": [{"lambda": 1.8, "mu": 1.0, "pi": 0.5},
                                      {"lambda": 0.0, "mu": 1.0, "pi": 0.5}]},
            "clock": {"family": "exponential", "params": {"rate": 1.0}}})
        out = tmp_path / "out"
        out.mkdir()
        assert main(["simulate", "--model", model, "--out", str(out),
                     "--time", "200", "--t-grid", "0.5,1.0", "--reps", "3",
                     "--seed", "4"]) == 0
        text = (out / "simulate_model_traj.csv").read_text()
        lines = text.strip().split("\n")
        assert lines[0] == "t,scaled_q,replication_id"
        assert len(lines) == 1 + 3 * 2

    def test_tail_emitters_align(self):
        from ovqueue.heavy_traffic import exp_tail_curve, ht_tail_csv
        from ovqueue.qbd import tail_csv
        approx = ht_tail_csv(exp_tail_curve(1.81, 0.9, 2))
        exact = tail_csv(np.array([0.9, 0.8, 0.7]))
        assert approx.splitlines()[0] == "n,p_approx"
        assert exact.splitlines()[0] == "n,p_exact"
        # same row keys so the compare command can join them
        a_keys = [r.split(",")[0] for r in approx.splitlines()[1:]]
        e_keys = [r.split(",")[0] for r in exact.splitlines()[1:]]
        assert a_keys == e_keys

    def test_ld_on_general_finite_law(self, write_spec, tmp_path):
        model = write_spec({
            "kind": "resampled_general",
            "arrival_law": {"family": "finite",
                            "atoms": [{"lambda": 1.2, "mu": 1.5, "pi": 0.5},
                                      {"lambda": 0.4, "mu": 1.0, "pi": 0.5}]},
            "clock": {"family": "gamma", "params": {"shape": 2.0, "rate": 2.0}}})
        out = tmp_path / "out"
        out.mkdir()
        assert main(["ld", "--model", model, "--out", str(out),
                     "--alpha", "0.5"]) == 0
        doc = json.loads((out / "ld_model.json").read_text())
        assert doc["results"][0]["variance"] == pytest.approx(
            doc["combination_check"]["v_half_from_constants"], rel=1e-6)
