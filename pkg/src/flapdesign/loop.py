"""Trial orchestration: play, summarise, redesign, repeat, and persist.

On-disk layout::

    <root>/manifest.json
    <root>/<variant>/<scenario>/trial_###/trial.json
    <root>/<variant>/<scenario>/trial_###/iter_##/
        config.yaml  episodes.jsonl  strip_ep#.png  diff.json  [exchange.json]  [reeval.jsonl]

Every iteration directory is written under a temporary name and renamed
into place, so an interrupted trial leaves only whole iterations.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import shutil
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

from .agents import PolicyDescriptor, PolicyKind, make_policy, run_batch
from .config import (
    GameConfig,
    InvalidConfig,
    Scenario,
    broken_config,
    diff_configs,
    enforce_designer_constraints,
    ensure_valid,
    load_config,
    parse_config,
    serialize_config,
)
from .designer import (
    Designer,
    DesignerError,
    DesignerExchange,
    IdentityDesigner,
    PromptVariant,
    ScriptedDesigner,
    scripted_designer_propose,
)
from .rng import mix
from .sim import EpisodeTrace, replay_episode
from .traces import DEFAULT_DOWNSCALE, composite_strip, encode_png

log = logging.getLogger(__name__)

N_CONFIGS = 10
EPISODES_PER_ITER = 5
REEVAL_EPISODES = 50
REEVAL_OFFSET = 2**33
TRIAL_STRIDE = 2**34


@dataclass
class IterationRecord:
    index: int
    config: GameConfig
    traces: list[EpisodeTrace]
    exchange: DesignerExchange | None = None
    diff: list[tuple[str, object, object]] = field(default_factory=list)
    error: str | None = None


@dataclass
class TrialRecord:
    trial_id: str
    scenario: str
    variant: PromptVariant
    designer: str
    policy: PolicyDescriptor
    seed_base: int
    iterations: list[IterationRecord] = field(default_factory=list)

    def header(self) -> dict:
        return {
            "trial_id": self.trial_id,
            "scenario": self.scenario,
            "variant": self.variant.value,
            "designer": self.designer,
            "policy": self.policy.to_json(),
            "seed_base": self.seed_base,
        }

    def scores(self) -> list[list[int]]:
        return [[t.score for t in it.traces] for it in self.iterations]


def episode_seed(seed_base: int, iteration: int, k: int, per_iter: int = EPISODES_PER_ITER) -> int:
    return seed_base + iteration * per_iter + k


def reeval_seed(seed_base: int, iteration: int, k: int, n: int = REEVAL_EPISODES) -> int:
    return seed_base + REEVAL_OFFSET + iteration * n + k


def trial_seed_base(seed: int, variant: str, scenario: str, trial: int) -> int:
    """Pure function of the cell and trial index; trials sit 2**34 apart."""
    tag = int.from_bytes(hashlib.blake2b(f"{variant}/{scenario}".encode(), digest_size=8).digest(), "little")
    return (mix(seed, tag, trial) % (1 << 28)) * TRIAL_STRIDE


# --------------------------------------------------------------------------
# persistence helpers
# --------------------------------------------------------------------------

def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _atomic_json(path: Path, obj) -> None:
    tmp = path.with_name(path.name + ".tmp")
    _write_json(tmp, obj)
    os.replace(tmp, path)


def _diff_json(diff) -> list[dict]:
    return [{"path": p, "old": a, "new": b} for p, a, b in diff]


def _persist_iteration(
    trial_dir: Path, rec: IterationRecord, strips: Sequence[bytes]
) -> None:
    final = trial_dir / f"iter_{rec.index:02d}"
    tmp = trial_dir / f".iter_{rec.index:02d}.tmp"
    if tmp.exists():
        shutil.rmtree(tmp)
    tmp.mkdir(parents=True)
    (tmp / "config.yaml").write_text(serialize_config(rec.config), encoding="utf-8")
    with (tmp / "episodes.jsonl").open("w", encoding="utf-8") as fh:
        for t in rec.traces:
            fh.write(json.dumps(t.to_json(), separators=(",", ":")) + "\n")
    for k, png in enumerate(strips, 1):
        (tmp / f"strip_ep{k}.png").write_bytes(png)
    _write_json(tmp / "diff.json", _diff_json(rec.diff))
    if rec.exchange is not None:
        _write_json(tmp / "exchange.json", rec.exchange.to_json())
    if rec.error is not None:
        _write_json(tmp / "error.json", {"error": rec.error})
    if final.exists():
        shutil.rmtree(final)
    os.replace(tmp, final)


def _strips(traces: Sequence[EpisodeTrace], cfg: GameConfig, scale: int) -> list[bytes]:
    return [encode_png(composite_strip(t, cfg, scale)) for t in traces]


# --------------------------------------------------------------------------
# trials
# --------------------------------------------------------------------------

def run_trial(
    start: GameConfig,
    designer: Designer,
    policy: Callable,
    variant: PromptVariant | str = PromptVariant.METRICS_TEXT,
    seed_base: int = 0,
    *,
    trial_id: str = "trial_000",
    scenario: str = "custom",
    policy_desc: PolicyDescriptor | None = None,
    n_configs: int = N_CONFIGS,
    episodes: int = EPISODES_PER_ITER,
    out_dir: Path | str | None = None,
    image_scale: int = DEFAULT_DOWNSCALE,
    jobs: int = 1,
    on_iteration: Callable[[IterationRecord], None] | None = None,
) -> TrialRecord:
    """Play ``n_configs`` configurations in sequence, redesigning between them.

    Episode ``k`` of iteration ``i`` uses seed ``seed_base + i*episodes + k``.
    Designer failures are recorded and the config is kept unchanged.
    """
    variant = PromptVariant(variant)
    ensure_valid(start)
    if not 1 <= n_configs <= N_CONFIGS:
        raise ValueError(f"n_configs must be in 1..{N_CONFIGS}")
    policy_desc = policy_desc or PolicyDescriptor(getattr(policy, "__name__", "policy"), PolicyKind.HEURISTIC_GAP)
    trial = TrialRecord(trial_id, scenario, variant, designer.kind, policy_desc, seed_base)
    trial_dir = Path(out_dir) if out_dir is not None else None
    if trial_dir is not None:
        trial_dir.mkdir(parents=True, exist_ok=True)
        _atomic_json(trial_dir / "trial.json", {**trial.header(), "status": "running"})

    need_images = trial_dir is not None or (designer.kind == "llm" and variant.uses_images)
    cfg, diff, exchange, error = start, [], None, None
    for i in range(n_configs):
        traces = run_batch(
            cfg, policy, episodes, episode_seed(seed_base, i, 0, episodes),
            record=True, jobs=jobs, id_prefix="ep",
        )
        rec = IterationRecord(i, cfg, traces, exchange, diff, error)
        strips = _strips(traces, cfg, image_scale) if need_images else []
        if trial_dir is not None:
            _persist_iteration(trial_dir, rec, strips)
        trial.iterations.append(rec)
        if on_iteration is not None:
            on_iteration(rec)
        if i == n_configs - 1:
            break
        error = None
        try:
            new_cfg, exchange = designer.propose(cfg, traces, strips)
        except DesignerError as exc:
            log.warning("%s iteration %d: designer failed: %s", trial_id, i, exc)
            new_cfg, exchange, error = cfg, None, f"{type(exc).__name__}: {exc}"
        diff = diff_configs(cfg, new_cfg)
        cfg = new_cfg

    if trial_dir is not None:
        _atomic_json(trial_dir / "trial.json", {**trial.header(), "status": "complete"})
    return trial


def reevaluate(
    configs: Sequence[GameConfig],
    n: int,
    policy: Callable,
    seed_base: int,
    *,
    iterations: Iterable[int] | None = None,
    jobs: int = 1,
) -> dict[int, list[int]]:
    """Fresh scores for each config, on seeds disjoint from the trial's."""
    if n < 1:
        raise ValueError("n must be >= 1")
    idx = range(len(configs)) if iterations is None else iterations
    out = {}
    for i in idx:
        cfg = ensure_valid(configs[i])
        traces = run_batch(cfg, policy, n, reeval_seed(seed_base, i, 0, n), record=False, jobs=jobs)
        out[i] = [t.score for t in traces]
    return out


# --------------------------------------------------------------------------
# loading and verification
# --------------------------------------------------------------------------

def iteration_dirs(trial_dir: Path | str) -> list[Path]:
    return sorted(Path(trial_dir).glob("iter_[0-9][0-9]"))


def load_trial_configs(trial_dir: Path | str) -> list[GameConfig]:
    """Configs in iteration order; errors name the offending file."""
    out = []
    for d in iteration_dirs(trial_dir):
        out.append(load_config(d / "config.yaml"))
    if not out:
        raise FileNotFoundError(f"no iteration directories in {trial_dir}")
    return out


def load_traces(iter_dir: Path) -> list[EpisodeTrace]:
    with (iter_dir / "episodes.jsonl").open(encoding="utf-8") as fh:
        return [EpisodeTrace.from_json(json.loads(line)) for line in fh if line.strip()]


def write_reeval(trial_dir: Path | str, scores: dict[int, list[int]], seed_base: int, n: int) -> None:
    dirs = iteration_dirs(trial_dir)
    for i, values in scores.items():
        path = dirs[i] / "reeval.jsonl"
        tmp = path.with_name(path.name + ".tmp")
        with tmp.open("w", encoding="utf-8") as fh:
            for k, s in enumerate(values):
                fh.write(json.dumps({"seed": reeval_seed(seed_base, i, k, n), "score": s}) + "\n")
        os.replace(tmp, path)


def verify_trial(trial_dir: Path | str) -> list[str]:
    """Re-check a persisted trial; returns a list of problems (empty = ok).

    Checks that every diff matches its neighbouring configs, that recorded
    episodes replay to the same outcome, and that each config follows from
    the previous one through the designer (re-run for scripted, re-parsed
    from the stored response for llm).
    """
    trial_dir = Path(trial_dir)
    meta = json.loads((trial_dir / "trial.json").read_text(encoding="utf-8"))
    problems = []
    dirs = iteration_dirs(trial_dir)
    configs = load_trial_configs(trial_dir)
    prev_cfg, prev_traces = None, None
    for d, cfg in zip(dirs, configs):
        traces = load_traces(d)
        try:
            for t in traces:
                r = replay_episode(cfg, t.seed, t.actions)
                if (r.score, r.ticks, r.termination) != (t.score, t.ticks, t.termination):
                    problems.append(f"{d.name}: episode {t.episode_id} does not replay")
        except InvalidConfig as exc:
            problems.append(f"{d.name}: {exc}")
        diff = json.loads((d / "diff.json").read_text(encoding="utf-8"))
        if prev_cfg is not None:
            if diff != _diff_json(diff_configs(prev_cfg, cfg)):
                problems.append(f"{d.name}: diff.json does not match configs")
            expected = _expected_next(meta["designer"], prev_cfg, prev_traces, d)
            if expected is not None and expected != cfg:
                problems.append(f"{d.name}: config is not the designer output for the previous iteration")
        prev_cfg, prev_traces = cfg, traces
    return problems


def _expected_next(kind: str, prev: GameConfig, traces, iter_dir: Path) -> GameConfig | None:
    if (iter_dir / "error.json").exists():
        return prev
    if kind == "identity":
        return prev
    if kind == "scripted":
        return scripted_designer_propose(prev, traces)
    ex_path = iter_dir / "exchange.json"
    if not ex_path.exists():
        return None
    ex = DesignerExchange.from_json(json.loads(ex_path.read_text(encoding="utf-8")))
    if ex.failed or ex.extracted_yaml is None:
        return prev
    return enforce_designer_constraints(prev, parse_config(ex.extracted_yaml))[0]


# --------------------------------------------------------------------------
# experiments
# --------------------------------------------------------------------------

def _load_manifest(root: Path) -> dict:
    path = root / "manifest.json"
    if path.exists():
        return json.loads(path.read_text(encoding="utf-8"))
    return {"trials": {}}


def run_experiment(
    root: Path | str,
    scenarios: Sequence[Scenario | str],
    variants: Sequence[PromptVariant | str],
    trials_per_cell: int,
    designer_factory: Callable[[PromptVariant], Designer] | None = None,
    *,
    policy_kind: PolicyKind | str = PolicyKind.HEURISTIC_GAP,
    policy_command: list[str] | None = None,
    seed: int = 0,
    image_scale: int = DEFAULT_DOWNSCALE,
    jobs: int = 1,
    on_trial: Callable[[str, TrialRecord | None], None] | None = None,
) -> Path:
    """Full factorial sweep under ``root``; trials already marked complete
    in the manifest are skipped, so an interrupted sweep can be resumed."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    manifest = _load_manifest(root)
    manifest.update({"seed": seed, "policy": PolicyKind(policy_kind).value})
    designer_factory = designer_factory or (lambda v: ScriptedDesigner())
    policy = make_policy(policy_kind, policy_command)
    desc = PolicyDescriptor(PolicyKind(policy_kind).value, PolicyKind(policy_kind))
    try:
        for v in map(PromptVariant, variants):
            designer = designer_factory(v)
            for s in map(Scenario, scenarios):
                for t in range(trials_per_cell):
                    key = f"{v.value}/{s.value}/trial_{t:03d}"
                    entry = manifest["trials"].get(key)
                    if entry and entry.get("status") == "complete":
                        if on_trial:
                            on_trial(key, None)
                        continue
                    base = trial_seed_base(seed, v.value, s.value, t)
                    trial_dir = root / key
                    if trial_dir.exists():
                        shutil.rmtree(trial_dir)
                    manifest["trials"][key] = {"status": "running", "seed_base": base, "designer": designer.kind}
                    _atomic_json(root / "manifest.json", manifest)
                    try:
                        rec = run_trial(
                            broken_config(s), designer, policy, v, base,
                            trial_id=key, scenario=s.value, policy_desc=desc,
                            out_dir=trial_dir, image_scale=image_scale, jobs=jobs,
                        )
                        status = "complete"
                    except Exception as exc:  # recorded per trial, sweep continues
                        log.error("%s failed: %s", key, exc)
                        rec, status = None, "failed"
                        manifest["trials"][key]["error"] = f"{type(exc).__name__}: {exc}"
                    manifest["trials"][key]["status"] = status
                    _atomic_json(root / "manifest.json", manifest)
                    if on_trial:
                        on_trial(key, rec)
    finally:
        close = getattr(policy, "close", None)
        if close:
            close()
    return root


def default_designer(kind: str, **llm_kwargs) -> Callable[[PromptVariant], Designer]:
    if kind == "identity":
        return lambda v: IdentityDesigner()
    if kind == "scripted":
        return lambda v: ScriptedDesigner()
    if kind == "llm":
        from .designer import LLMDesigner

        return lambda v: LLMDesigner(variant=v, **llm_kwargs)
    raise ValueError(f"unknown designer kind {kind!r}")
