import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from stochflow import cli, defaults

SMALL = {
    "simulate": {"n_paths": 500, "dt": 0.01, "functions": ["sin"]},
    "stability": {"n_paths": 200, "dt": 0.02, "epsilons": [0.4, 0.2], "nodes": 16},
    "gradient": {"n_paths": 2000, "dt": 0.1, "method": "both"},
    "jacobian": {"n_paths": 50, "dt": 0.01},
    "zvonkin": {"nodes": 128, "n_times": 20, "n_paths": 4000, "bins": 4},
    "nse-solve": {"grid": 8, "n_paths": 20, "horizon": 0.04, "dt": 0.02, "stride": 1, "max_iter": 3,
                  "vorticity_check": True},
    "nse-kernel-test": {"grid": 16},
}


def _write(tmp_path, sub, entries):
    path = tmp_path / f"{sub}.json"
    path.write_text(json.dumps({"experiments": entries}))
    return path


def _data_files(out):
    return {p.relative_to(out): p.read_bytes() for p in sorted(out.rglob("*"))
            if p.is_file() and p.name != "manifest.json"}


@pytest.mark.parametrize("sub", sorted(SMALL))
def test_every_subcommand_runs(tmp_path, sub):
    cfg = _write(tmp_path, sub, [SMALL[sub]])
    out = tmp_path / "out"
    assert cli.main([sub, "--config", str(cfg), "--out", str(out), "--seed", "3"]) == 0
    with open(out / f"{sub}.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["experiment", "parameter", "statistic", "value", "std_error"]
    assert len(rows) > 1
    for row in rows[1:]:
        float(row[3])
    man = json.loads((out / "manifest.json").read_text())
    assert man["subcommand"] == sub and man["seed"] == 3
    assert {"git_revision", "timestamp", "parameters", "files"} <= set(man)


def test_empty_experiment_list_is_a_no_op(tmp_path):
    out = tmp_path / "out"
    assert cli.main(["simulate", "--config", str(_write(tmp_path, "simulate", [])), "--out", str(out)]) == 0
    assert not out.exists() or not any(out.iterdir())


@pytest.mark.parametrize("entry", [{"n_pathz": 10}, {"n_paths": "many"}, {"dt": [1]}])
def test_schema_errors_exit_2(tmp_path, entry, capsys):
    assert cli.main(["simulate", "--config", str(_write(tmp_path, "simulate", [entry])),
                     "--out", str(tmp_path)]) == 2
    assert "config error" in capsys.readouterr().err


def test_bad_command_line_values_exit_2(tmp_path):
    assert cli.main(["simulate", "--seed", "-1", "--out", str(tmp_path)]) == 2
    assert cli.main(["simulate", "--workers", "0", "--out", str(tmp_path)]) == 2
    assert cli.main(["simulate", "--config", str(tmp_path / "missing.json")]) == 2


def test_numerical_failure_exits_3(tmp_path, capsys):
    cfg = _write(tmp_path, "zvonkin", [{"amplitude": 20.0, "s0": 1.0, "nodes": 128, "n_times": 20}])
    assert cli.main(["zvonkin", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 3
    doc = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert doc["error"] == "IntervalTooLongError"


@pytest.mark.parametrize("sub", ["simulate", "zvonkin", "nse-solve"])
def test_replay_is_byte_identical(tmp_path, sub):
    cfg = _write(tmp_path, sub, [SMALL[sub], {**SMALL[sub], "seed": 99}])
    runs = []
    for k in range(2):
        out = tmp_path / f"run{k}"
        assert cli.main([sub, "--config", str(cfg), "--out", str(out), "--seed", "5"]) == 0
        runs.append(_data_files(out))
    assert runs[0] == runs[1] and runs[0]


def test_worker_count_does_not_change_results(tmp_path):
    cfg = _write(tmp_path, "simulate", [SMALL["simulate"]])
    files = []
    for w in (1, 3):
        out = tmp_path / f"w{w}"
        assert cli.main(["simulate", "--config", str(cfg), "--out", str(out), "--workers", str(w)]) == 0
        files.append((out / "simulate.csv").read_bytes())
    assert files[0] == files[1]


def test_seed_changes_results(tmp_path):
    cfg = _write(tmp_path, "simulate", [SMALL["simulate"]])
    outs = []
    for s in (1, 2):
        out = tmp_path / f"s{s}"
        cli.main(["simulate", "--config", str(cfg), "--out", str(out), "--seed", str(s)])
        outs.append((out / "simulate.csv").read_bytes())
    assert outs[0] != outs[1]


def test_json_gradient_output(tmp_path):
    cfg = _write(tmp_path, "gradient", [SMALL["gradient"]])
    out = tmp_path / "out"
    assert cli.main(["gradient", "--config", str(cfg), "--out", str(out), "--format", "json"]) == 0
    doc = json.loads((out / "gradient.json").read_text())
    assert doc["subcommand"] == "gradient"
    entry = doc["gradients"][0]
    assert entry["experiment"] == "gradient"
    est = entry["bel"]
    assert set(entry["fd"]) == set(est)
    assert {"point", "horizon", "estimate", "std_error", "n_paths", "dt"} <= set(est)
    np.testing.assert_allclose(est["estimate"][0], np.exp(-0.5), atol=5 * est["std_error"][0] + 0.05)


def test_schema_is_generated_from_defaults():
    for sub, cls in defaults.CONFIGS.items():
        props = defaults.schema(sub)["properties"]["experiments"]["items"]["properties"]
        assert set(props) == {f for f in cls.__dataclass_fields__} | {"seed"}


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "stochflow.cli", "nse-kernel-test", "--out", str(tmp_path)],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "nse-kernel-test.csv").exists()
