"""Player policies.

Two deterministic heuristics stand in for a trained agent:

* ``heuristic_gap`` reads the next pipe's gap directly and bang-bang
  controls the bird toward it;
* ``heuristic_lidar`` sees only the lidar fan and vertical speed.

``external`` speaks newline-delimited JSON to another process so a real
trained agent can be plugged in.
"""

from __future__ import annotations

import enum
import json
import subprocess
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import partial
from typing import IO, Callable

from .config import GameConfig, ensure_valid
from .sim import (
    LIDAR_ANGLES,
    PLAYER_X,
    Action,
    EpisodeTrace,
    GameState,
    Observation,
    lidar_scan,
    next_pipe,
    run_episode,
)

# Frozen after scripts/tune_policies.py; see README.
GAP_MARGIN = 16
LIDAR_DOWN_CONE_DEG = 60.0
LIDAR_BASE_THRESHOLD = 40.0
LIDAR_SPEED_GAIN = 4.0
LIDAR_HEADROOM = 30.0


class PolicyKind(str, enum.Enum):
    HEURISTIC_GAP = "heuristic_gap"
    HEURISTIC_LIDAR = "heuristic_lidar"
    ALWAYS_IDLE = "always_idle"
    EXTERNAL = "external"


@dataclass(frozen=True)
class PolicyDescriptor:
    name: str
    kind: PolicyKind

    def to_json(self) -> dict:
        return {"name": self.name, "kind": self.kind.value}


def heuristic_gap_policy(state: GameState, cfg: GameConfig, margin: int = GAP_MARGIN) -> Action:
    """Bang-bang control toward the next gap the bird can see.

    The next unpassed pipe is only "seen" once its leading edge is within
    ``dimensions.player.private_zone`` px of the bird's centre; until then
    the bird holds the middle of the playfield. Flap when the bird's centre,
    one tick ahead, would sit more than ``margin`` px below the target.
    """
    player = cfg.speed.player
    dims = cfg.dimensions
    ground = cfg.playfield_height
    pipe = next_pipe(state)
    if pipe is not None and pipe.x - (PLAYER_X + dims.player.width / 2) <= dims.player.private_zone:
        target = ground - pipe.gap_bottom_y - pipe.gap_size / 2
    else:
        target = ground / 2
    vel = min(max(state.player_vel_y + player.acc_y, player.min_vel_y), player.max_vel_y)
    centre_next = state.player_y + vel + dims.player.height / 2
    return Action.FLAP if centre_next > target + margin else Action.IDLE


_DOWN = [i for i, a in enumerate(LIDAR_ANGLES) if a >= LIDAR_DOWN_CONE_DEG]
_UP = [i for i, a in enumerate(LIDAR_ANGLES) if a <= -LIDAR_DOWN_CONE_DEG]


def heuristic_lidar_policy(obs: Observation) -> Action:
    """Flap when anything below is closer than a speed-scaled threshold,
    unless something is just as close overhead."""
    d = obs.lidar_distances
    below = min(d[i] for i in _DOWN)
    above = min(d[i] for i in _UP)
    threshold = LIDAR_BASE_THRESHOLD + LIDAR_SPEED_GAIN * max(obs.player_vel_y, 0)
    if below < threshold and above > LIDAR_HEADROOM:
        return Action.FLAP
    return Action.IDLE


def lidar_player(state: GameState, cfg: GameConfig) -> Action:
    return heuristic_lidar_policy(lidar_scan(state, cfg))


def always_idle(state: GameState, cfg: GameConfig) -> Action:
    return Action.IDLE


class ExternalPolicy:
    """Drive the bird from another process.

    One observation JSON object per line goes out
    (``{"lidar": [...], "player_vel_y": v}``); one action token
    (``flap`` or ``idle``) per line comes back.
    """

    def __init__(self, writer: IO[str], reader: IO[str], proc: subprocess.Popen | None = None):
        self.writer = writer
        self.reader = reader
        self.proc = proc

    @classmethod
    def spawn(cls, command: list[str]) -> "ExternalPolicy":
        proc = subprocess.Popen(
            command, stdin=subprocess.PIPE, stdout=subprocess.PIPE, text=True, bufsize=1
        )
        return cls(proc.stdin, proc.stdout, proc)

    def __call__(self, state: GameState, cfg: GameConfig) -> Action:
        obs = lidar_scan(state, cfg)
        self.writer.write(json.dumps(obs.to_json(), separators=(",", ":")) + "\n")
        self.writer.flush()
        line = self.reader.readline()
        if not line:
            raise RuntimeError("external policy closed its output stream")
        return Action(line.strip())

    def close(self) -> None:
        if self.proc is not None:
            self.proc.stdin.close()
            self.proc.wait(timeout=10)
            self.proc = None


def make_policy(kind: PolicyKind | str, command: list[str] | None = None) -> Callable[[GameState, GameConfig], Action]:
    kind = PolicyKind(kind)
    if kind is PolicyKind.HEURISTIC_GAP:
        return heuristic_gap_policy
    if kind is PolicyKind.HEURISTIC_LIDAR:
        return lidar_player
    if kind is PolicyKind.ALWAYS_IDLE:
        return always_idle
    if not command:
        raise ValueError("external policy needs a command")
    return ExternalPolicy.spawn(command)


def run_batch(
    cfg: GameConfig,
    policy: Callable[[GameState, GameConfig], Action],
    n: int,
    seed_base: int,
    *,
    record: bool = True,
    jobs: int = 1,
    id_prefix: str = "ep",
) -> list[EpisodeTrace]:
    """Play ``n`` episodes with seeds ``seed_base .. seed_base + n - 1``.

    Results are ordered by seed whatever ``jobs`` is.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    ensure_valid(cfg)
    seeds = [seed_base + k for k in range(n)]
    ids = [f"{id_prefix}{k + 1}" for k in range(n)]
    if jobs > 1 and not isinstance(policy, ExternalPolicy):
        with ProcessPoolExecutor(jobs) as pool:
            return list(pool.map(partial(_episode, cfg, policy, record), seeds, ids))
    return [_episode(cfg, policy, record, s, i) for s, i in zip(seeds, ids)]


def _episode(cfg, policy, record, seed, episode_id):
    return run_episode(cfg, policy, seed, episode_id=episode_id, record=record)
