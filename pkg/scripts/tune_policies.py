"""Tune the heuristic players.

Gap player: IQM score on the default config for a range of margins.
Lidar player: per-tick agreement with the gap player along the gap
player's own trajectories, for a grid of thresholds.

    python scripts/tune_policies.py --episodes 50
"""

from __future__ import annotations

import argparse
import itertools
from functools import partial

import flapdesign.agents as agents
from flapdesign.agents import heuristic_gap_policy, heuristic_lidar_policy, run_batch
from flapdesign.config import DEFAULT_CONFIG
from flapdesign.sim import lidar_scan, reset, step
from flapdesign.stats import iqm


def gap_margin_sweep(episodes: int) -> None:
    for margin in (4, 8, 12, 16, 20, 24):
        pol = partial(heuristic_gap_policy, margin=margin)
        scores = [t.score for t in run_batch(DEFAULT_CONFIG, pol, episodes, 0, record=False)]
        print(f"margin={margin:2d} iqm={iqm(scores):.2f}", flush=True)


def agreement(episodes: int) -> float:
    same = total = 0
    for seed in range(episodes):
        s = reset(DEFAULT_CONFIG, seed)
        while s.terminated is None:
            a = heuristic_gap_policy(s, DEFAULT_CONFIG)
            same += a is heuristic_lidar_policy(lidar_scan(s, DEFAULT_CONFIG))
            total += 1
            s = step(s, DEFAULT_CONFIG, a)
    return same / total


def lidar_sweep(episodes: int) -> None:
    for base, gain in itertools.product((30.0, 40.0, 50.0), (2.0, 4.0, 6.0)):
        agents.LIDAR_BASE_THRESHOLD, agents.LIDAR_SPEED_GAIN = base, gain
        print(f"threshold={base:.0f} speed_gain={gain:.0f} agreement={agreement(episodes):.3f}", flush=True)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--episodes", type=int, default=50)
    args = ap.parse_args()
    gap_margin_sweep(args.episodes)
    lidar_sweep(args.episodes)


if __name__ == "__main__":
    main()
