import json
import os

import numpy as np
import pytest

from conftest import SCENARIOS
from wfmpc import cli
from wfmpc.metrics import fatigue_report
from wfmpc.scenario import from_dict, load_scenario
from wfmpc.simulation import read_series, run, sweep, write_outputs


def small(**over):
    data = {"name": "small", "duration": 40.0,
            "layout": {"rows": 3, "columns": 1},
            "wind": {"mean": 9.0, "sigma": 0.1, "seed": 1},
            "mpc": {"horizon": 5, "w": 1e3, "s": 0.75}}
    for key, val in over.items():
        data.setdefault(key, {}).update(val) if isinstance(val, dict) else data.update({key: val})
    return from_dict(data)


@pytest.fixture(scope="module")
def bundle():
    return run(small())


def test_single_turbine_tracks_half_of_available():
    cfg = from_dict({"duration": 120.0, "layout": {"positions": [[0.0, 0.0]]},
                     "wind": {"mean": 9.0, "sigma": 0.0},
                     "frequency": {"source": "constant", "value": 50.0},
                     "dispatch": {"units": "fraction", "schedule": [[0.0, 0.5]]}})
    b = run(cfg)
    err = np.abs(b.p_total - b.p_ref) / b.p_ref
    assert b.p_ref[0] == pytest.approx(0.5 * b.extras["available_power"])
    assert np.all(err[-30:] <= 0.005)
    assert err[-1] <= err[5] + 1e-12


def test_step_change_in_dispatch_is_tracked():
    cfg = from_dict({"duration": 150.0, "layout": {"positions": [[0.0, 0.0]]},
                     "wind": {"mean": 9.0, "sigma": 0.0},
                     "frequency": {"source": "constant", "value": 50.0},
                     "mpc": {"w": 0.0},
                     "dispatch": {"units": "fraction", "schedule": [[0.0, 0.5], [20.0, 0.7]]}})
    b = run(cfg)
    assert abs(b.p_total[-1] - b.p_ref[-1]) <= 0.005 * b.p_ref[-1]


def test_series_lengths_and_protocol(bundle):
    n = 40
    for name in ("t", "u_inf", "frequency", "p_ref", "p_total", "p_command"):
        assert getattr(bundle, name).shape == (n,)
    for name in ("P", "F", "ct", "U", "p_star"):
        assert getattr(bundle, name).shape == (n, 3)
    assert len(bundle.diagnostics) == n
    assert [d["step"] for d in bundle.diagnostics] == list(range(n))


def test_energy_accounting(bundle):
    assert np.array_equal(bundle.p_total, bundle.P.sum(axis=1))


def test_all_solves_certified(bundle):
    for d in bundle.diagnostics:
        assert max(d["stationarity"], d["primal"], d["dual"], d["complementarity"]) <= 1e-6


def test_deterministic(bundle):
    again = run(small())
    for name in ("P", "F", "ct", "U", "p_ref", "p_star", "u_inf", "frequency"):
        assert np.array_equal(getattr(bundle, name), getattr(again, name))


def test_seed_isolation(bundle):
    other = run(small(mpc={"w": 0.0, "s": 1.0}))
    assert np.array_equal(bundle.u_inf, other.u_inf)
    assert np.array_equal(bundle.frequency, other.frequency)
    assert np.array_equal(bundle.p_command, other.p_command)


def test_baseline_mode_equals_s_one_without_rate_term():
    a = run(small(mpc={"mode": "baseline"}))
    b = run(small(mpc={"mode": "proposed", "s": 1.0, "drop_r": True}))
    np.testing.assert_allclose(a.p_star, b.p_star, rtol=1e-9, atol=0)


def test_sweep_single_cell_equals_run():
    cfg = small()
    rows, res = sweep(cfg, [(1e3, 0.75)], normalize=False)
    b = run(cfg)
    assert rows[0]["rms_error"] == b.report.rms_error
    assert rows[0]["dF"] == b.report.dF and rows[0]["eF"] == b.report.eF


def test_sweep_order_and_normalization():
    cfg = small(duration=20.0)
    grid = [(0.0, 1.0), (1e3, 1.0), (1e3, 0.5)]
    rows_a, _ = sweep(cfg, grid)
    rows_b, _ = sweep(cfg, grid[::-1])
    key = lambda r: (r["w"], r["s"])
    assert sorted(rows_a, key=key) == sorted(rows_b, key=key)
    base = next(r for r in rows_a if r["w"] == 0.0)
    assert base["dF_norm"] == 1.0 and base["eF_norm"] == 1.0


def test_sweep_needs_baseline_cell():
    with pytest.raises(ValueError):
        sweep(small(), [(1e3, 1.0)])
    with pytest.raises(ValueError):
        sweep(small(), [])


def test_outputs_round_trip(bundle, tmp_path):
    write_outputs(bundle, tmp_path)
    h, loads = read_series(tmp_path, "loads.csv")
    assert len(h) == 3 + 1 and h[0] == "t"
    np.testing.assert_allclose(loads[:, 1:], bundle.F, rtol=1e-9)
    h, power = read_series(tmp_path, "power.csv")
    assert h[:3] == ["t", "P_ref", "P_total"]
    np.testing.assert_allclose(power[:, 1], bundle.p_ref, rtol=1e-9)
    np.testing.assert_allclose(power[:, 3:], bundle.P, rtol=1e-9)
    for name in ("ct.csv", "wind.csv", "solver.csv", "metrics.json", "config.yaml"):
        assert (tmp_path / name).exists()
    echo = load_scenario(tmp_path / "config.yaml")
    assert echo.mpc.horizon == 5 and echo.wind.seed == 1


def test_metrics_file_equals_recomputation(bundle, tmp_path):
    write_outputs(bundle, tmp_path)
    _, loads = read_series(tmp_path, "loads.csv")
    _, power = read_series(tmp_path, "power.csv")
    rep = fatigue_report(loads[:, 1:], power[:, 2], power[:, 1])
    saved = json.loads((tmp_path / "metrics.json").read_text())
    assert saved["dF"] == rep.dF and saved["eF"] == rep.eF
    assert saved["rms_error"] == rep.rms_error
    assert saved["dF_i"] == list(rep.dF_i)


def test_csv_outputs_bit_identical(bundle, tmp_path):
    write_outputs(bundle, tmp_path / "a")
    write_outputs(run(small()), tmp_path / "b")
    for name in ("power.csv", "loads.csv", "ct.csv", "wind.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_failure_budget_aborts():
    b = run(small(step_failure_budget=0, mpc={"max_iter": 1, "tol": 1e-12}))
    assert b.aborted and b.solver_failures == 1 and b.n_steps == 1


def test_cli_run(tmp_path, capsys):
    src = tmp_path / "s.yaml"
    src.write_text("name: tiny\nduration: 10\nlayout:\n  rows: 2\nwind:\n  mean: 9.0\n"
                   "mpc:\n  horizon: 3\n")
    code = cli.main(["run", str(src), "--out", str(tmp_path / "o"), "--seed", "5",
                     "--mode", "tracking-only"])
    assert code == 0
    echo = load_scenario(tmp_path / "o" / "config.yaml")
    assert echo.wind.seed == 5 and echo.mpc.mode == "tracking-only"
    assert "tiny" in capsys.readouterr().out


def test_cli_sweep(tmp_path, capsys):
    src = tmp_path / "s.yaml"
    src.write_text("duration: 8\nlayout:\n  rows: 2\nwind:\n  mean: 9.0\nmpc:\n  horizon: 3\n")
    code = cli.main(["sweep", str(src), "--w", "0,1000", "--s", "1", "--out", str(tmp_path / "o")])
    assert code == 0
    assert (tmp_path / "o" / "sweep.csv").exists()
    assert "dF_norm" in capsys.readouterr().out


def test_cli_aborted_run_exits_nonzero(tmp_path):
    src = tmp_path / "s.yaml"
    src.write_text("duration: 5\nstep_failure_budget: 0\nlayout:\n  rows: 2\nwind:\n  mean: 9.0\n"
                   "mpc:\n  max_iter: 1\n  tol: 1e-12\n")
    assert cli.main(["run", str(src), "--out", str(tmp_path / "o")]) != 0


def test_cli_bad_config(tmp_path):
    src = tmp_path / "s.yaml"
    src.write_text("layout:\n  rows: 2\nwind:\n  mean: 9.0\nmpc:\n  horizon: 0\n")
    assert cli.main(["run", str(src)]) == 2


def test_default_scenario_file_is_the_desk_farm():
    cfg = load_scenario(os.path.join(SCENARIOS, "default_8wt.yaml"))
    lay = cfg.layout.build()
    assert lay.n_turbines == 8 and cfg.duration == 300.0 and cfg.wind.mean == 9.0
    assert np.allclose(np.diff(lay.streamwise()), 5 * 126.0)
