import csv
import json
import subprocess
import sys

import pytest

from auvloc.bench import build_block_world
from auvloc.cli import main
from auvloc.world import load_map

TIMING_COLUMNS = {"weight_update_ns"}


def write_config(tmp_path, **overrides):
    doc = {"particles": 50, **overrides}
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(doc))
    return path


def strip_timing(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    keep = [i for i, name in enumerate(rows[0]) if name not in TIMING_COLUMNS]
    return [[row[i] for i in keep] for row in rows]


def test_map_export(tmp_path, capsys):
    out = tmp_path / "block_world.json"
    assert main(["map", "export", "--out", str(out)]) == 0
    assert load_map(out) == build_block_world()


@pytest.mark.parametrize("model", ["semantic", "geometric"])
def test_run_writes_outputs(tmp_path, capsys, model):
    cfg = write_config(tmp_path)
    out = tmp_path / "out"
    code = main(["run", "--config", str(cfg), "--model", model, "--trials", "2", "--seed", "4", "--out", str(out), "--quiet"])
    assert code == 0
    assert {p.name for p in out.iterdir()} == {"per_step.csv", "summary.csv", "report.txt"}
    assert f"[{model}] trials: 2" in capsys.readouterr().out


def test_run_reproducible(tmp_path):
    cfg = write_config(tmp_path)
    for name in ("a", "b"):
        assert main(["run", "--config", str(cfg), "--trials", "2", "--seed", "11", "--out", str(tmp_path / name), "--quiet"]) == 0
    for csv_name in ("per_step.csv", "summary.csv"):
        assert strip_timing(tmp_path / "a" / csv_name) == strip_timing(tmp_path / "b" / csv_name)
    assert (tmp_path / "a" / "per_step.csv").read_bytes() == (tmp_path / "b" / "per_step.csv").read_bytes()


def test_seed_flag_overrides_config(tmp_path):
    cfg = write_config(tmp_path, seed=1)
    main(["run", "--config", str(cfg), "--trials", "1", "--seed", "2", "--out", str(tmp_path / "a"), "--quiet"])
    main(["run", "--config", str(cfg), "--trials", "1", "--out", str(tmp_path / "b"), "--quiet"])
    assert strip_timing(tmp_path / "a" / "summary.csv") != strip_timing(tmp_path / "b" / "summary.csv")


def test_compare(tmp_path, capsys):
    cfg = write_config(tmp_path)
    assert main(["compare", "--config", str(cfg), "--trials", "1", "--seed", "0", "--out", str(tmp_path / "cmp"), "--quiet"]) == 0
    text = capsys.readouterr().out
    assert "semantic:geometric mean time = 1:" in text
    assert "[geometric] mean weight-update time (ns)" in text


def test_unknown_config_key(tmp_path, capsys):
    cfg = write_config(tmp_path, colour="red")
    assert main(["run", "--config", str(cfg), "--trials", "1", "--out", str(tmp_path / "o")]) == 2
    assert "unknown" in capsys.readouterr().err


def test_bad_trials(tmp_path):
    with pytest.raises(SystemExit):
        main(["run", "--trials", "0", "--out", str(tmp_path)])


def test_module_entry_point(tmp_path):
    out = tmp_path / "m.json"
    proc = subprocess.run([sys.executable, "-m", "auvloc", "map", "export", "--out", str(out)], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert out.exists()
