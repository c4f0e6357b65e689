import csv
import json

import pytest

from drymep.cli import EXIT_CONFIG, EXIT_MODEL, EXIT_NOT_CONVERGED, EXIT_OK, main
from drymep.config import document, load_config
from drymep.kinetics import Technology, equilibrium_moisture

X_D = 0.075


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture(scope="module")
def solved(tmp_path_factory):
    out = tmp_path_factory.mktemp("solve")
    code = main(["solve", "--set", "model.M=2", "--out", str(out)])
    return code, out


def test_solve_writes_its_files(solved):
    code, out = solved
    assert code == EXIT_OK
    result = json.loads((out / "result.json").read_text())
    for key in ("path", "params", "cost_J", "iterations", "x_final", "converged", "config"):
        assert key in result
    profile = rows(out / "profile.csv")
    assert [r["tech"] for r in profile] == result["path"].split("-")
    assert float(profile[-1]["x_out"]) <= X_D + 1e-6
    for a, b in zip(profile, profile[1:]):
        assert a["x_out"] == b["x_in"]
    assert rows(out / "trace.csv")


def test_result_config_reloads(solved, tmp_path):
    _, out = solved
    doc = json.loads((out / "result.json").read_text())["config"]
    path = tmp_path / "again.json"
    path.write_text(json.dumps(doc))
    assert document(load_config(path)) == doc


def test_simulate_reproduces_the_solve(solved, tmp_path):
    _, out = solved
    result = json.loads((out / "result.json").read_text())
    assert main(["simulate", "--from-result", str(out / "result.json"), "--out", str(tmp_path)]) == EXIT_OK
    traj = rows(tmp_path / "trajectory.csv")
    assert abs(float(traj[-1]["x_wet"]) - result["x_final"]) <= 1e-9
    total = sum(p["t_min"] for p in result["params"])
    assert float(traj[-1]["time_min"]) == pytest.approx(total, rel=1e-9)


def simulate(tmp_path, path, params, samples=4):
    cfg = tmp_path / "sim.json"
    cfg.write_text(json.dumps({"simulate": {"path": path, "params": params,
                                            "samples_per_stage": samples}}))
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path)]) == EXIT_OK
    return rows(tmp_path / "trajectory.csv")


def test_zero_duration_stages_give_a_flat_trajectory(tmp_path):
    traj = simulate(tmp_path, "HA-HAUS", [{"t_min": 0, "T_C": 40}, {"t_min": 0, "T_C": 60}])
    assert len(traj) == 1 + 2 * 4
    assert len({r["x_wet"] for r in traj}) == 1


def test_long_haus_stage_reaches_equilibrium(tmp_path):
    traj = simulate(tmp_path, "HAUS", [{"t_min": 5000, "T_C": 70}])
    m = equilibrium_moisture(Technology.HAUS, 343.15)
    assert float(traj[-1]["x_wet"]) == pytest.approx(m / (1 + m), abs=1e-9)
    xs = [float(r["x_wet"]) for r in traj]
    assert all(b <= a for a, b in zip(xs, xs[1:])) and xs[1] < xs[0]


def test_baseline_matches_a_single_stage_solve(tmp_path):
    assert main(["baseline", "--out", str(tmp_path)]) == EXIT_OK
    base = json.loads((tmp_path / "baseline.json").read_text())["baselines"]
    for b in base.values():
        assert b["feasible"] and b["x_final"] <= X_D + 1e-9
    out = tmp_path / "ha"
    assert main(["solve", "--set", "model.M=1", "--set", 'model.allowed=["HA"]',
                 "--out", str(out)]) == EXIT_OK
    result = json.loads((out / "result.json").read_text())
    assert result["cost_J"] == pytest.approx(base["HA"]["cost_J"], rel=1e-9)


def test_unheated_air_baseline_costs_nothing(tmp_path):
    # Ambient air at the lowest operating temperature still dries the product,
    # so the pure hot-air baseline needs no heating energy at all.
    assert main(["baseline", "--set", "process.T0_C=30", "--out", str(tmp_path)]) == EXIT_OK
    ha = json.loads((tmp_path / "baseline.json").read_text())["baselines"]["HA"]
    assert ha["cost_J"] == pytest.approx(0.0, abs=1e-6)
    assert ha["feasible"]


def test_single_stage_sweep_point_is_the_better_baseline(tmp_path):
    assert main(["sweep-m", "--set", "sweep.M=[1]", "--out", str(tmp_path)]) == EXIT_OK
    (row,) = rows(tmp_path / "sweep.csv")
    assert float(row["improvement_vs_HA_pct"]) == pytest.approx(0.0, abs=1e-6)
    assert float(row["improvement_vs_HAUS_pct"]) > 0


def test_cold_intake_four_stages_are_all_haus(tmp_path):
    code = main(["solve", "--set", "preset=cold-intake", "--set", "model.M=4", "--out", str(tmp_path)])
    assert code == EXIT_OK
    result = json.loads((tmp_path / "result.json").read_text())
    assert result["path"] == "HAUS-HAUS-HAUS-HAUS"


def test_config_errors_exit_2(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{\n  "model": {"M": 2},\n  "process": {"alpah": 1}\n}\n')
    assert main(["solve", "--config", str(bad), "--out", str(tmp_path)]) == EXIT_CONFIG
    assert "bad.json:3:" in capsys.readouterr().err
    assert main(["simulate", "--out", str(tmp_path)]) == EXIT_CONFIG
    assert not (tmp_path / "result.json").exists()


def test_iteration_cap_exits_3_with_partial_result(tmp_path):
    code = main(["solve", "--set", "model.M=2", "--set", "schedule.max_outer_iters=3",
                 "--out", str(tmp_path)])
    assert code == EXIT_NOT_CONVERGED
    result = json.loads((tmp_path / "result.json").read_text())
    assert result["converged"] is False and result["iterations"] == 3


def test_oversized_space_exits_4(tmp_path):
    assert main(["oracle", "--set", "model.M=7", "--out", str(tmp_path)]) == EXIT_MODEL


def test_verbose_streams_the_trace(tmp_path, capsys):
    main(["solve", "--set", "model.M=1", "--verbose", "--out", str(tmp_path)])
    err = capsys.readouterr().err.splitlines()
    assert err[0].startswith("beta,free_energy,max_p,t1_min")
    assert len([line for line in err if line[:1].isdigit()]) >= 2
