"""Sweep candidate values for the broken starting scenarios.

For each scenario this prints the heuristic gap player's IQM score over
``--episodes`` seeded episodes for a grid of candidate overrides, plus the
share of episodes ending on timeout. The frozen values live in
``flapdesign.config.SCENARIO_OVERRIDES``.

    python scripts/sweep_scenarios.py --episodes 100
"""

from __future__ import annotations

import argparse

from flapdesign.agents import heuristic_gap_policy, run_batch
from flapdesign.config import DEFAULT_CONFIG, validate_config
from flapdesign.sim import TerminationReason
from flapdesign.stats import iqm

SWEEPS: dict[str, list[dict[str, int]]] = {
    # IQM must stay near zero under an unchanged config
    "too_fast": [{"speed.pipe_vel_x": v} for v in range(-5, -11, -1)],
    # IQM should sit well above target; the gap range must fit the playfield
    "too_easy": [
        {"dimensions.pipe.min_gap": lo, "dimensions.pipe.max_gap": hi}
        for lo, hi in ((180, 230), (200, 250), (220, 250))
    ],
    # narrow gaps with the default spread
    "too_tight_1": [
        {"dimensions.pipe.min_gap": lo, "dimensions.pipe.max_gap": lo + 50} for lo in (50, 60, 70, 75)
    ],
    # narrow gaps plus erratic vertical placement
    "too_tight_2": [
        {"dimensions.pipe.min_gap": lo, "dimensions.pipe.max_gap": 110,
         "dimensions.pipe.min_gap_distance": 20, "dimensions.pipe.max_gap_distance": 250}
        for lo in (40, 50, 60)
    ],
    # few pipes reach the bird within the time limit
    "too_spaced_out": [
        {"dimensions.pipe.min_horizontal_spacing": lo, "dimensions.pipe.max_horizontal_spacing": hi}
        for lo, hi in ((400, 500), (450, 600), (500, 700))
    ],
}


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--episodes", type=int, default=100)
    ap.add_argument("--seed", type=int, default=10_000)
    ap.add_argument("--only", choices=list(SWEEPS))
    args = ap.parse_args()
    for name, candidates in SWEEPS.items():
        if args.only and name != args.only:
            continue
        print(name)
        for overrides in candidates:
            cfg = DEFAULT_CONFIG.with_values(overrides)
            if not validate_config(cfg).valid:
                print(f"  {overrides}: invalid")
                continue
            traces = run_batch(cfg, heuristic_gap_policy, args.episodes, args.seed, record=False)
            scores = [t.score for t in traces]
            timeouts = sum(t.termination is TerminationReason.TIMEOUT for t in traces) / len(traces)
            print(f"  {overrides}: iqm={iqm(scores):.2f} timeout_share={timeouts:.2f}", flush=True)


if __name__ == "__main__":
    main()
