"""Command-line entry point: ``flapdesign {run,reeval,stats,plot-data,validate,render}``.

Exit codes: 0 success, 1 run failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .agents import PolicyDescriptor, PolicyKind, make_policy, run_batch
from .config import (
    ConfigError,
    Scenario,
    broken_config,
    load_config,
    parse_config,
    validate_config,
)
from .designer import DEFAULT_API_KEY_ENV, AuthError, DesignerError, PromptVariant, api_key_from_env
from .loop import (
    REEVAL_EPISODES,
    default_designer,
    load_trial_configs,
    reevaluate,
    run_experiment,
    run_trial,
    trial_seed_base,
    write_reeval,
)
from .stats import MissingData, aggregate, iqm, to_csv
from .traces import DEFAULT_DOWNSCALE, composite_strip, encode_png

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="flapdesign", description="Automated game-design iteration on a Flappy Bird simulator.")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="run one trial (or a full sweep with --all)")
    src = run.add_mutually_exclusive_group()
    src.add_argument("--scenario", choices=[s.value for s in Scenario], help="broken starting scenario")
    src.add_argument("--config", type=Path, help="starting config YAML instead of a scenario")
    run.add_argument("--all", action="store_true", help="every scenario x --variants, --trials each")
    run.add_argument("--variant", default="metrics_text", choices=[v.value for v in PromptVariant])
    run.add_argument("--variants", nargs="+", choices=[v.value for v in PromptVariant],
                     help="variants for --all (default: --variant)")
    run.add_argument("--trials", type=_positive, default=1, help="trials per cell for --all")
    run.add_argument("--trial", type=int, default=0, help="trial index for a single run")
    run.add_argument("--designer", default="scripted", choices=["llm", "scripted", "identity"])
    run.add_argument("--policy", default="heuristic_gap", choices=[k.value for k in PolicyKind])
    run.add_argument("--policy-command", nargs="+", help="command for --policy external")
    run.add_argument("--iterations", type=int, default=9, help="design changes (configs = iterations + 1)")
    run.add_argument("--episodes", type=_positive, default=5, help="episodes per configuration")
    run.add_argument("--seed", type=int, default=0, help="root seed; all others are derived")
    run.add_argument("--out", type=Path, default=Path("exp"), help="experiment root directory")
    _llm_flags(run)
    run.add_argument("--jobs", type=_positive, default=1, help="parallel episode workers")

    re = sub.add_parser("reeval", help="score every config of a trial on fresh seeds")
    re.add_argument("trial_dir", type=Path)
    re.add_argument("--episodes", type=_positive, default=REEVAL_EPISODES)
    re.add_argument("--policy", default="heuristic_gap", choices=[k.value for k in PolicyKind])
    re.add_argument("--policy-command", nargs="+")
    re.add_argument("--jobs", type=_positive, default=1)

    for name in ("stats", "plot-data"):
        st = sub.add_parser(name, help="per-iteration IQM and bootstrap CI as CSV")
        st.add_argument("--root", type=Path, default=Path("exp"), help="experiment root")
        st.add_argument("--cell", required=True, help="<variant>/<scenario>")
        st.add_argument("--n-boot", type=_positive, default=5000)
        st.add_argument("--level", type=float, default=0.95)
        st.add_argument("--seed", type=int, default=0)
        st.add_argument("--out", type=Path, help="write CSV here instead of stdout")

    va = sub.add_parser("validate", help="check a config YAML file")
    va.add_argument("path", type=Path)

    rn = sub.add_parser("render", help="play one seeded episode and write its composite strip PNG")
    src = rn.add_mutually_exclusive_group()
    src.add_argument("--scenario", choices=[s.value for s in Scenario])
    src.add_argument("--config", type=Path)
    rn.add_argument("--seed", type=int, default=0)
    rn.add_argument("--policy", default="heuristic_gap", choices=[k.value for k in PolicyKind if k is not PolicyKind.EXTERNAL])
    rn.add_argument("--image-scale", type=_positive, default=1)
    rn.add_argument("--out", type=Path, required=True)
    return p


def _llm_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--endpoint", default="https://api.openai.com/v1", help="OpenAI-compatible base URL")
    p.add_argument("--model", default="gpt-4.1")
    p.add_argument("--api-key-env", default=DEFAULT_API_KEY_ENV, help="environment variable holding the API key")
    p.add_argument("--temperature", type=float, help="sent only when given")
    p.add_argument("--timeout", type=float, default=120.0, help="seconds per request")
    p.add_argument("--image-scale", type=_positive, default=DEFAULT_DOWNSCALE, help="integer downscale of strip tiles")


def _start_config(args):
    if getattr(args, "config", None):
        return load_config(args.config), args.config.stem
    return broken_config(args.scenario or Scenario.TOO_EASY), args.scenario or Scenario.TOO_EASY.value


def _print_iteration(rec) -> None:
    scores = [t.score for t in rec.traces]
    changed = ", ".join(f"{p}: {a} -> {b}" for p, a, b in rec.diff) or "no change"
    print(f"iter {rec.index:02d}  iqm={iqm(scores):.2f}  scores={scores}  {changed}", flush=True)


def cmd_run(args) -> int:
    if not 0 <= args.iterations <= 9:
        print("error: --iterations must be in 0..9", file=sys.stderr)
        return EXIT_USAGE
    if args.designer == "llm":
        api_key_from_env(args.api_key_env)
    llm_kwargs = dict(
        endpoint=args.endpoint, model=args.model, api_key_env=args.api_key_env,
        sampling={} if args.temperature is None else {"temperature": args.temperature},
        timeout=args.timeout,
    )
    factory = default_designer(args.designer, **llm_kwargs)
    if args.all:
        variants = args.variants or [args.variant]

        def report(key, rec):
            print(f"{key}: " + ("skipped (complete)" if rec is None else
                                f"final iqm={iqm([t.score for t in rec.iterations[-1].traces]):.2f}"), flush=True)

        run_experiment(
            args.out, list(Scenario), variants, args.trials, factory,
            policy_kind=args.policy, policy_command=args.policy_command, seed=args.seed,
            image_scale=args.image_scale, jobs=args.jobs, on_trial=report,
        )
        return EXIT_OK

    start, scenario = _start_config(args)
    variant = PromptVariant(args.variant)
    policy = make_policy(args.policy, args.policy_command)
    base = trial_seed_base(args.seed, variant.value, scenario, args.trial)
    trial_dir = args.out / variant.value / scenario / f"trial_{args.trial:03d}"
    try:
        run_trial(
            start, factory(variant), policy, variant, base,
            trial_id=f"{variant.value}/{scenario}/trial_{args.trial:03d}", scenario=scenario,
            policy_desc=PolicyDescriptor(args.policy, PolicyKind(args.policy)),
            n_configs=args.iterations + 1, episodes=args.episodes, out_dir=trial_dir,
            image_scale=args.image_scale, jobs=args.jobs, on_iteration=_print_iteration,
        )
    finally:
        close = getattr(policy, "close", None)
        if close:
            close()
    print(f"trial written to {trial_dir}")
    return EXIT_OK


def cmd_reeval(args) -> int:
    meta_path = args.trial_dir / "trial.json"
    if not meta_path.exists():
        print(f"error: {meta_path} not found", file=sys.stderr)
        return EXIT_FAIL
    meta = json.loads(meta_path.read_text(encoding="utf-8"))
    configs = load_trial_configs(args.trial_dir)
    policy = make_policy(args.policy, args.policy_command)
    scores = reevaluate(configs, args.episodes, policy, meta["seed_base"], jobs=args.jobs)
    write_reeval(args.trial_dir, scores, meta["seed_base"], args.episodes)
    for i, s in scores.items():
        print(f"iter {i:02d}  iqm={iqm(s):.2f}  n={len(s)}")
    return EXIT_OK


def cmd_stats(args) -> int:
    try:
        variant, scenario = args.cell.strip("/").split("/")
    except ValueError:
        print("error: --cell must look like <variant>/<scenario>", file=sys.stderr)
        return EXIT_USAGE
    rows = aggregate(args.root, variant, scenario, args.n_boot, args.level, args.seed)
    text = to_csv(rows)
    if args.out:
        args.out.write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_validate(args) -> int:
    cfg = parse_config(args.path.read_text(encoding="utf-8"))
    report = validate_config(cfg)
    print(report)
    return EXIT_OK if report.valid else EXIT_FAIL


def cmd_render(args) -> int:
    cfg, _ = _start_config(args)
    policy = make_policy(args.policy)
    trace = run_batch(cfg, policy, 1, args.seed)[0]
    args.out.write_bytes(encode_png(composite_strip(trace, cfg, args.image_scale)))
    print(f"score={trace.score} flight_time={trace.duration_s:.1f}s -> {args.out}")
    return EXIT_OK


_COMMANDS = {
    "run": cmd_run,
    "reeval": cmd_reeval,
    "stats": cmd_stats,
    "plot-data": cmd_stats,
    "validate": cmd_validate,
    "render": cmd_render,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return _COMMANDS[args.command](args)
    except AuthError as exc:
        print(f"auth error: {exc}", file=sys.stderr)
    except (ConfigError, MissingData, DesignerError, FileNotFoundError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
    return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
