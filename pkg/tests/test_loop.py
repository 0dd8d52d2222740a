from __future__ import annotations

import json
import shutil

import pytest

from flapdesign.agents import heuristic_gap_policy
from flapdesign.config import Scenario, broken_config, load_config
from flapdesign.designer import DesignerError, IdentityDesigner, ScriptedDesigner
from flapdesign.loop import (
    episode_seed,
    iteration_dirs,
    load_trial_configs,
    reeval_seed,
    reevaluate,
    run_experiment,
    run_trial,
    trial_seed_base,
    verify_trial,
    write_reeval,
)
from flapdesign.traces import PNG_SIGNATURE


def test_full_trial_shape():
    rec = run_trial(broken_config(Scenario.TOO_EASY), ScriptedDesigner(), heuristic_gap_policy, seed_base=10)
    assert len(rec.iterations) == 10
    assert sum(len(it.traces) for it in rec.iterations) == 50
    assert rec.iterations[0].exchange is None and rec.iterations[0].diff == []
    assert rec.iterations[0].config == broken_config(Scenario.TOO_EASY)
    seeds = [t.seed for it in rec.iterations for t in it.traces]
    assert seeds == [episode_seed(10, i, k) for i in range(10) for k in range(5)]


def test_identity_designer_keeps_config():
    rec = run_trial(broken_config(Scenario.TOO_TIGHT_1), IdentityDesigner(), heuristic_gap_policy, seed_base=3)
    assert all(it.config == broken_config(Scenario.TOO_TIGHT_1) for it in rec.iterations)


def test_chain_follows_designer():
    d = ScriptedDesigner()
    rec = run_trial(broken_config(Scenario.TOO_TIGHT_2), d, heuristic_gap_policy, seed_base=5, n_configs=4)
    for a, b in zip(rec.iterations, rec.iterations[1:]):
        assert b.config == d.propose(a.config, a.traces, [])[0]


def test_trial_deterministic(tmp_path):
    args = (broken_config(Scenario.TOO_FAST), ScriptedDesigner(), heuristic_gap_policy)
    run_trial(*args, seed_base=99, n_configs=3, out_dir=tmp_path / "a")
    run_trial(*args, seed_base=99, n_configs=3, out_dir=tmp_path / "b")
    files_a = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
    files_b = sorted(p.relative_to(tmp_path / "b") for p in (tmp_path / "b").rglob("*") if p.is_file())
    assert files_a == files_b
    for rel in files_a:
        assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes(), rel


def test_persistence_layout_and_verification(tmp_path):
    out = tmp_path / "trial_000"
    run_trial(broken_config(Scenario.TOO_TIGHT_1), ScriptedDesigner(), heuristic_gap_policy,
              seed_base=1, n_configs=3, out_dir=out)
    dirs = iteration_dirs(out)
    assert [d.name for d in dirs] == ["iter_00", "iter_01", "iter_02"]
    for d in dirs:
        names = {p.name for p in d.iterdir()}
        assert {"config.yaml", "episodes.jsonl", "diff.json"} <= names
        assert {f"strip_ep{k}.png" for k in range(1, 6)} <= names
        assert (d / "strip_ep1.png").read_bytes().startswith(PNG_SIGNATURE)
        assert len((d / "episodes.jsonl").read_text().splitlines()) == 5
    meta = json.loads((out / "trial.json").read_text())
    assert meta["status"] == "complete" and meta["designer"] == "scripted"
    assert verify_trial(out) == []


def test_verify_detects_tampering(tmp_path):
    out = tmp_path / "t"
    run_trial(broken_config(Scenario.TOO_TIGHT_1), ScriptedDesigner(), heuristic_gap_policy,
              seed_base=1, n_configs=2, out_dir=out)
    cfg_path = out / "iter_01" / "config.yaml"
    cfg_path.write_text(cfg_path.read_text().replace("min_gap: ", "min_gap: 1"))
    assert verify_trial(out)


def test_designer_failure_recorded_not_fatal(tmp_path):
    class Flaky:
        kind = "llm"

        def propose(self, cfg, traces, strips):
            raise DesignerError("endpoint unreachable")

    rec = run_trial(broken_config(Scenario.TOO_FAST), Flaky(), heuristic_gap_policy, seed_base=0,
                    n_configs=2, out_dir=tmp_path / "t")
    assert rec.iterations[1].config == rec.iterations[0].config
    assert "unreachable" in rec.iterations[1].error
    assert (tmp_path / "t" / "iter_01" / "error.json").exists()


def test_interrupted_trial_leaves_whole_iterations(tmp_path):
    class Boom:
        kind = "scripted"
        calls = 0

        def propose(self, cfg, traces, strips):
            Boom.calls += 1
            if Boom.calls == 2:
                raise KeyboardInterrupt
            return cfg, None

    with pytest.raises(KeyboardInterrupt):
        run_trial(broken_config(Scenario.TOO_FAST), Boom(), heuristic_gap_policy, seed_base=0, out_dir=tmp_path / "t")
    names = sorted(p.name for p in (tmp_path / "t").iterdir())
    assert names == ["iter_00", "iter_01", "trial.json"]
    assert json.loads((tmp_path / "t" / "trial.json").read_text())["status"] == "running"


def test_reevaluate_seeds_disjoint_and_deterministic():
    base = trial_seed_base(0, "metrics_text", "too_fast", 0)
    trial = {episode_seed(base, i, k) for i in range(10) for k in range(5)}
    reeval = {reeval_seed(base, i, k) for i in range(10) for k in range(50)}
    assert not trial & reeval
    cfgs = [broken_config(Scenario.TOO_TIGHT_1)] * 2
    a = reevaluate(cfgs, 4, heuristic_gap_policy, base)
    assert a == reevaluate(cfgs, 4, heuristic_gap_policy, base)
    assert set(a) == {0, 1} and all(len(v) == 4 for v in a.values())
    assert reevaluate(cfgs, 3, heuristic_gap_policy, base, iterations=[1]).keys() == {1}


def test_trial_seed_bases_are_separated():
    variants = ("metrics_text", "metrics_and_images")
    scenarios = [s.value for s in Scenario]
    bases = {trial_seed_base(0, v, s, t) for v in variants for s in scenarios for t in range(5)}
    assert len(bases) == 2 * 5 * 5
    assert all(b % 2**34 == 0 for b in bases)


def test_write_reeval(tmp_path):
    out = tmp_path / "t"
    run_trial(broken_config(Scenario.TOO_TIGHT_1), IdentityDesigner(), heuristic_gap_policy,
              seed_base=2, n_configs=2, out_dir=out)
    configs = load_trial_configs(out)
    scores = reevaluate(configs, 3, heuristic_gap_policy, 2)
    write_reeval(out, scores, 2, 3)
    lines = (out / "iter_01" / "reeval.jsonl").read_text().splitlines()
    assert [json.loads(x)["score"] for x in lines] == scores[1]


def test_experiment_counts_and_resume(tmp_path, monkeypatch):
    import flapdesign.loop as loop_mod

    monkeypatch.setattr(loop_mod, "N_CONFIGS", 2)
    real = loop_mod.run_trial
    calls = []

    def short_trial(*a, **kw):
        calls.append(kw["trial_id"])
        kw["n_configs"] = 2
        return real(*a, **kw)

    monkeypatch.setattr(loop_mod, "run_trial", short_trial)
    root = tmp_path / "exp"
    run_experiment(root, list(Scenario), ["metrics_text"], 2)
    trials = sorted(root.glob("metrics_text/*/trial_*"))
    assert len(trials) == 10 and len(calls) == 10
    manifest = json.loads((root / "manifest.json").read_text())
    assert len(manifest["trials"]) == 10
    assert all(t["status"] == "complete" for t in manifest["trials"].values())

    # an interrupted trial is redone; completed ones are not
    key = "metrics_text/too_fast/trial_001"
    manifest["trials"][key]["status"] = "running"
    (root / "manifest.json").write_text(json.dumps(manifest))
    shutil.rmtree(root / key / "iter_01")
    calls.clear()
    run_experiment(root, list(Scenario), ["metrics_text"], 2)
    assert calls == [key]
    assert load_config(root / key / "iter_01" / "config.yaml")
