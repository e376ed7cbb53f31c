import csv
import json

from netplace.cli import main

from test_harness import tiny_spec


def _write_tiny_scenario(tmp_path):
    path = tmp_path / "tiny.json"
    path.write_text(tiny_spec().to_json())
    return str(path)


def test_gen_scenario_roundtrip(tmp_path):
    out = tmp_path / "out"
    rc = main(["gen-scenario", "--preset", "grid25", "--seed", "3",
               "--out", str(out)])
    assert rc == 0
    assert (out / "grid25.json").exists()


def test_optimize_gp_trace_schema(tmp_path):
    scen = _write_tiny_scenario(tmp_path)
    out = tmp_path / "out"
    rc = main(["optimize", "--scenario", scen, "--method", "gp",
               "--slots", "200", "--out", str(out)])
    assert rc == 0
    with open(out / "tinychain_gp_trace.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["slot", "T", "residual", "total_cache_size"]
    assert len(rows) > 2
    assert (out / "tinychain_gp_strategy.json").exists()


def test_optimize_gcfw_trace_schema(tmp_path):
    scen = _write_tiny_scenario(tmp_path)
    out = tmp_path / "out"
    rc = main(["optimize", "--scenario", scen, "--method", "gcfw",
               "--iters", "15", "--out", str(out)])
    assert rc == 0
    with open(out / "tinychain_gcfw_trace.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["iter", "G", "M", "N", "T"]
    assert len(rows) == 17  # header + N + final iterate


def test_validate_accepts_optimizer_output(tmp_path):
    scen = _write_tiny_scenario(tmp_path)
    out = tmp_path / "out"
    main(["optimize", "--scenario", scen, "--method", "gp",
          "--slots", "100", "--out", str(out)])
    rc = main(["validate", "--scenario", scen,
               "--strategy", str(out / "tinychain_gp_strategy.json")])
    assert rc == 0


def test_validate_rejects_non_link_entry(tmp_path):
    scen = _write_tiny_scenario(tmp_path)
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({
        "ci": {"0,0": {"0": {"2": 1.0}}},  # (0,2) is not a link on the path
        "di": {"0": {"0": {"1": 1.0}, "1": {"2": 1.0}}},
    }))
    rc = main(["validate", "--scenario", scen, "--strategy", str(bad)])
    assert rc == 1


def test_compare_plan(tmp_path):
    plan = {
        "scenarios": [json.loads(tiny_spec().to_json())],
        "methods": [{"name": "gp", "max_slots": 150},
                    {"name": "sep_lfu", "slots": 15}],
        "seeds": [0],
        "out_dir": str(tmp_path / "res"),
    }
    plan_path = tmp_path / "plan.json"
    plan_path.write_text(json.dumps(plan))
    rc = main(["compare", "--plan", str(plan_path)])
    assert rc == 0
    with open(tmp_path / "res" / "results.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 2


def test_sweep_cli(tmp_path):
    plan = {
        "scenarios": [json.loads(tiny_spec().to_json())],
        "methods": [{"name": "gp", "max_slots": 100}],
        "seeds": [0],
        "out_dir": str(tmp_path / "res"),
    }
    plan_path = tmp_path / "plan.json"
    plan_path.write_text(json.dumps(plan))
    rc = main(["sweep", "--plan", str(plan_path), "--knob", "rate_scale",
               "--values", "0.5,1.0"])
    assert rc == 0
    assert (tmp_path / "res" / "sweep_rate_scale.csv").exists()


def test_simulate_static(tmp_path):
    scen = _write_tiny_scenario(tmp_path)
    out = tmp_path / "out"
    rc = main(["simulate", "--scenario", scen, "--controller", "static",
               "--horizon", "80", "--seed", "2", "--out", str(out)])
    assert rc == 0
    assert (out / "tinychain_measurements.csv").exists()
    with open(out / "tinychain_events.json") as fh:
        summary = json.load(fh)
    assert summary["audit"]["cr_delivered"] == summary["audit"]["ci_generated"]


def test_hard_error_exit_code(tmp_path):
    rc = main(["optimize", "--method", "gp", "--out", str(tmp_path)])
    assert rc == 2  # no scenario given


def test_simulate_with_gp_controller(tmp_path):
    scen = _write_tiny_scenario(tmp_path)
    out = tmp_path / "out"
    rc = main(["simulate", "--scenario", scen, "--controller", "gp",
               "--horizon", "60", "--seed", "4", "--out", str(out)])
    assert rc == 0
    assert (out / "tinychain_measurements.csv").exists()
