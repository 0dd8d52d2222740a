from __future__ import annotations

import json
import shutil
import subprocess
import sys

import pytest

from flapdesign.cli import main
from flapdesign.config import DEFAULT_CONFIG, serialize_config
from flapdesign.traces import decode_png


@pytest.fixture(scope="module")
def trial(tmp_path_factory):
    root = tmp_path_factory.mktemp("exp")
    assert main(["run", "--scenario", "too_tight_1", "--out", str(root)]) == 0
    return root, root / "metrics_text" / "too_tight_1" / "trial_000"


def test_run_writes_ten_iterations(trial):
    _, d = trial
    assert sorted(p.name for p in d.glob("iter_*")) == [f"iter_{i:02d}" for i in range(10)]
    assert json.loads((d / "trial.json").read_text())["status"] == "complete"


def test_run_prints_progress(tmp_path, capsys):
    assert main(["run", "--scenario", "too_tight_1", "--iterations", "1", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0].startswith("iter 00  iqm=")
    assert "dimensions.pipe.min_gap" in out[1]


def test_llm_without_key_fails(tmp_path, monkeypatch, capsys):
    monkeypatch.delenv("FLAPDESIGN_NO_SUCH_KEY", raising=False)
    code = main(["run", "--scenario", "too_fast", "--designer", "llm",
                 "--api-key-env", "FLAPDESIGN_NO_SUCH_KEY", "--out", str(tmp_path)])
    assert code != 0
    assert "FLAPDESIGN_NO_SUCH_KEY" in capsys.readouterr().err
    assert not any(tmp_path.rglob("iter_*"))


def test_validate(tmp_path, capsys):
    good = tmp_path / "good.yaml"
    good.write_text(serialize_config(DEFAULT_CONFIG))
    assert main(["validate", str(good)]) == 0
    assert capsys.readouterr().out.strip() == "valid"
    bad = tmp_path / "bad.yaml"
    bad.write_text(serialize_config(DEFAULT_CONFIG).replace("min_gap: 100", "min_gap: 400"))
    assert main(["validate", str(bad)]) == 1
    assert "min_gap" in capsys.readouterr().out


def test_validate_unknown_key(tmp_path, capsys):
    p = tmp_path / "c.yaml"
    p.write_text(serialize_config(DEFAULT_CONFIG) + "extra: 1\n")
    assert main(["validate", str(p)]) == 1
    assert "extra" in capsys.readouterr().err


def test_render_png(tmp_path):
    out = tmp_path / "strip.png"
    assert main(["render", "--scenario", "too_easy", "--seed", "3", "--image-scale", "4", "--out", str(out)]) == 0
    fb = decode_png(out.read_bytes())
    assert (fb.width, fb.height) == (5 * 72 + 8, 5 * 128 + 8)


def test_reeval_and_stats(trial, tmp_path, capsys):
    root, d = trial
    copy = tmp_path / "metrics_text" / "too_tight_1" / "trial_000"
    shutil.copytree(d, copy)
    assert main(["reeval", str(copy), "--episodes", "50"]) == 0
    first = {p: p.read_bytes() for p in copy.glob("iter_*/reeval.jsonl")}
    assert len(first) == 10
    assert all(len(b.decode().splitlines()) == 50 for b in first.values())
    assert main(["reeval", str(copy), "--episodes", "50"]) == 0
    assert {p: p.read_bytes() for p in copy.glob("iter_*/reeval.jsonl")} == first

    capsys.readouterr()
    assert main(["stats", "--root", str(tmp_path), "--cell", "metrics_text/too_tight_1", "--n-boot", "200"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0] == "iteration,iqm,ci_low,ci_high,n"
    assert len(lines) == 11
    assert all(line.endswith(",50") for line in lines[1:])


def test_reeval_names_corrupt_file(trial, tmp_path, capsys):
    _, d = trial
    copy = tmp_path / "t"
    shutil.copytree(d, copy)
    bad = copy / "iter_04" / "config.yaml"
    bad.write_text("speed: [unclosed\n")
    assert main(["reeval", str(copy), "--episodes", "2"]) == 1
    assert str(bad) in capsys.readouterr().err


def test_stats_missing_data(tmp_path, capsys):
    assert main(["stats", "--root", str(tmp_path), "--cell", "metrics_text/too_fast"]) == 1
    assert main(["stats", "--root", str(tmp_path), "--cell", "nonsense"]) == 2


def test_usage_errors_exit_2():
    with pytest.raises(SystemExit) as exc:
        main(["run", "--no-such-flag"])
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        main(["run", "--scenario", "too_fast", "--config", "x.yaml"])
    assert exc.value.code == 2


def test_iterations_out_of_range(tmp_path):
    assert main(["run", "--scenario", "too_fast", "--iterations", "12", "--out", str(tmp_path)]) == 2


def test_console_script_entry_point():
    r = subprocess.run([sys.executable, "-m", "flapdesign.cli", "--version"], capture_output=True, text=True)
    assert r.returncode == 0 and r.stdout.strip()
