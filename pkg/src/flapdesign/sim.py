"""Headless fixed-timestep Flappy Bird.

Screen coordinates: x grows rightward, y grows downward, ``y = 0`` is the top
of the screen and the ground is at ``y = playfield_height``. The player is a
box whose top-left corner is ``(PLAYER_X, player_y)``; only pipes move.

The simulation is a pure function of (config, seed, action sequence). Each
:class:`GameState` carries its own SplitMix64 state, so a state can be
stepped, copied or replayed without any global randomness.
"""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np

from . import rng
from .config import GameConfig, ensure_valid

TICK_RATE = 30
MAX_SECONDS = 120
MAX_TICKS = TICK_RATE * MAX_SECONDS
MAX_SCORE = 30
PLAYER_X = 57

LIDAR_RAYS = 180
# ray angles in degrees from horizontal-forward; positive points down
LIDAR_ANGLES = np.linspace(-90.0, 90.0, LIDAR_RAYS)

# composite strips look at the last 240 ticks in steps of 10
FRAME_WINDOW = 240
FRAME_STEP = 10


class Action(str, enum.Enum):
    FLAP = "flap"
    IDLE = "idle"


class TerminationReason(str, enum.Enum):
    COLLISION = "collision"
    TIMEOUT = "timeout_120s"
    MAX_SCORE = "max_score_30"


class AlreadyTerminated(RuntimeError):
    pass


class Pipe(NamedTuple):
    x: int  # left edge, screen px
    gap_bottom_y: int  # height of the gap's lower edge above the ground
    gap_size: int
    scored: bool = False


@dataclass(frozen=True)
class GameState:
    tick: int
    player_y: int
    player_vel_y: int
    player_rot: int
    pipes: tuple[Pipe, ...]
    score: int
    rng_state: int
    terminated: TerminationReason | None = None


class Observation(NamedTuple):
    lidar_distances: tuple[float, ...]
    player_vel_y: int

    def to_json(self) -> dict:
        return {"lidar": list(self.lidar_distances), "player_vel_y": self.player_vel_y}


class _Params(NamedTuple):
    """Config values the hot loop needs, flattened once per episode."""

    pipe_vel_x: int
    max_vel_y: int
    min_vel_y: int
    acc_y: int
    vel_rot: int
    flap_acc: int
    player_w: int
    player_h: int
    pipe_w: int
    pipe_h: int
    min_gap: int
    max_gap: int
    min_gap_distance: int
    max_gap_distance: int
    min_spacing: int
    max_spacing: int
    screen_w: int
    ground_y: int
    max_ticks: int
    max_score: int


def _params(cfg: GameConfig) -> _Params:
    p = cfg.speed.player
    d = cfg.dimensions
    return _Params(
        pipe_vel_x=cfg.speed.pipe_vel_x,
        max_vel_y=p.max_vel_y,
        min_vel_y=p.min_vel_y,
        acc_y=p.acc_y,
        vel_rot=p.vel_rot,
        flap_acc=p.flap_acc,
        player_w=d.player.width,
        player_h=d.player.height,
        pipe_w=d.pipe.width,
        pipe_h=d.pipe.height,
        min_gap=d.pipe.min_gap,
        max_gap=d.pipe.max_gap,
        min_gap_distance=d.pipe.min_gap_distance,
        max_gap_distance=d.pipe.max_gap_distance,
        min_spacing=d.pipe.min_horizontal_spacing,
        max_spacing=d.pipe.max_horizontal_spacing,
        screen_w=d.background.width,
        ground_y=cfg.playfield_height,
        max_ticks=MAX_TICKS,
        max_score=MAX_SCORE,
    )


def pipe_rects(pipe: Pipe, cfg_or_params) -> tuple[tuple[int, int, int, int], tuple[int, int, int, int]]:
    """Upper and lower pipe boxes as ``(x0, y0, x1, y1)`` in screen coordinates."""
    p = cfg_or_params if isinstance(cfg_or_params, _Params) else _params(cfg_or_params)
    bottom = p.ground_y - pipe.gap_bottom_y
    top = bottom - pipe.gap_size
    x1 = pipe.x + p.pipe_w
    return (pipe.x, top - p.pipe_h, x1, top), (pipe.x, bottom, x1, bottom + p.pipe_h)


def _spawn(pipes: list[Pipe], state: int, p: _Params) -> int:
    """Append pipes until the rightmost one starts at or beyond the screen edge."""
    while not pipes or pipes[-1].x < p.screen_w:
        if pipes:
            state, spacing = rng.uniform_int(state, p.min_spacing, p.max_spacing)
            x = pipes[-1].x + spacing
        else:
            x = p.screen_w
        state, gap = rng.uniform_int(state, p.min_gap, p.max_gap)
        state, bottom = rng.uniform_int(state, p.min_gap_distance, p.max_gap_distance)
        pipes.append(Pipe(x, bottom, gap))
    return state


def reset(cfg: GameConfig, seed: int) -> GameState:
    ensure_valid(cfg)
    p = _params(cfg)
    pipes: list[Pipe] = []
    state = _spawn(pipes, rng.seed_state(seed), p)
    return GameState(
        tick=0,
        player_y=(p.ground_y - p.player_h) // 2,
        player_vel_y=0,
        player_rot=0,
        pipes=tuple(pipes),
        score=0,
        rng_state=state,
    )


def _step(s: GameState, p: _Params, flap: bool) -> GameState:
    if s.terminated is not None:
        raise AlreadyTerminated(f"episode already ended ({s.terminated.value})")
    tick = s.tick + 1

    if flap:
        vel = p.flap_acc
        rot = 45
    else:
        vel = s.player_vel_y + p.acc_y
        if vel > p.max_vel_y:
            vel = p.max_vel_y
        elif vel < p.min_vel_y:
            vel = p.min_vel_y
        rot = max(s.player_rot - p.vel_rot, -90)
    y = s.player_y + vel
    if y < 0:
        y = 0
        vel = 0

    dx = p.pipe_vel_x
    score = s.score
    pipes: list[Pipe] = []
    for pipe in s.pipes:
        x = pipe.x + dx
        scored = pipe.scored
        if not scored and x + p.pipe_w < PLAYER_X:
            scored = True
            score += 1
        if x + p.pipe_w >= 0:
            pipes.append(Pipe(x, pipe.gap_bottom_y, pipe.gap_size, scored))
    rng_state = _spawn(pipes, s.rng_state, p)

    terminated = None
    py1 = y + p.player_h
    if py1 >= p.ground_y:
        terminated = TerminationReason.COLLISION
    else:
        px1 = PLAYER_X + p.player_w
        for pipe in pipes:
            if pipe.x >= px1:
                break
            if pipe.x + p.pipe_w <= PLAYER_X:
                continue
            bottom = p.ground_y - pipe.gap_bottom_y
            top = bottom - pipe.gap_size
            # open-interval overlap with the upper and lower pipe bodies
            if (y < top and py1 > top - p.pipe_h) or (py1 > bottom and y < bottom + p.pipe_h):
                terminated = TerminationReason.COLLISION
                break
    if terminated is None:
        if score >= p.max_score:
            terminated = TerminationReason.MAX_SCORE
        elif tick >= p.max_ticks:
            terminated = TerminationReason.TIMEOUT

    return GameState(tick, y, vel, rot, tuple(pipes), score, rng_state, terminated)


def step(state: GameState, cfg: GameConfig, action: Action) -> GameState:
    """Advance one tick."""
    return _step(state, _params(cfg), action is Action.FLAP or action == "flap")


def next_pipe(state: GameState) -> Pipe | None:
    """First pipe the player has not passed yet."""
    for pipe in state.pipes:
        if not pipe.scored:
            return pipe
    return None


# --------------------------------------------------------------------------
# lidar
# --------------------------------------------------------------------------

_RAD = np.deg2rad(LIDAR_ANGLES)
_DX = np.cos(_RAD)
_DY = np.sin(_RAD)
_DX[np.abs(_DX) < 1e-12] = 1e-12
_DY[np.abs(_DY) < 1e-12] = 1e-12
_INV_DX = 1.0 / _DX
_INV_DY = 1.0 / _DY


def lidar_scan(state: GameState, cfg: GameConfig) -> Observation:
    """Cast the fixed fan of rays from the player's centre.

    Each distance is the nearest hit on a pipe body, the ground or the
    ceiling, clipped to ``dimensions.lidar.max_distance``.
    """
    p = _params(cfg)
    max_d = float(cfg.dimensions.lidar.max_distance)
    ox = PLAYER_X + p.player_w / 2
    oy = state.player_y + p.player_h / 2

    with np.errstate(divide="ignore", invalid="ignore"):
        dist = np.where(_DY < 0, -oy * _INV_DY, np.inf)
        dist = np.where(_DY > 0, (p.ground_y - oy) * _INV_DY, dist)

        boxes = []
        for pipe in state.pipes:
            if pipe.x > ox + max_d or pipe.x + p.pipe_w < ox - max_d:
                continue
            boxes.extend(pipe_rects(pipe, p))
        if boxes:
            b = np.asarray(boxes, dtype=float)
            tx0 = (b[:, 0] - ox) * _INV_DX[:, None]
            tx1 = (b[:, 2] - ox) * _INV_DX[:, None]
            ty0 = (b[:, 1] - oy) * _INV_DY[:, None]
            ty1 = (b[:, 3] - oy) * _INV_DY[:, None]
            near = np.maximum(np.minimum(tx0, tx1), np.minimum(ty0, ty1))
            far = np.minimum(np.maximum(tx0, tx1), np.maximum(ty0, ty1))
            hit = (near <= far) & (far >= 0)
            t = np.where(hit, np.maximum(near, 0.0), np.inf)
            dist = np.minimum(dist, t.min(axis=1))

    dist = np.clip(np.nan_to_num(dist, nan=max_d, posinf=max_d), 0.0, max_d)
    return Observation(tuple(dist.tolist()), state.player_vel_y)


# --------------------------------------------------------------------------
# episodes
# --------------------------------------------------------------------------

Policy = Callable[[GameState, GameConfig], Action]


class TickRecord(NamedTuple):
    tick: int
    y: int
    vel: int
    score: int
    action: str

    def to_json(self) -> dict:
        return self._asdict()


@dataclass
class EpisodeTrace:
    """One playthrough.

    ``frames`` holds the game states at the ticks a composite strip samples
    (see :func:`frame_ticks`); pixels are rendered from them on demand.
    """

    episode_id: str
    seed: int
    score: int
    duration_s: float
    termination: TerminationReason
    ticks: int
    max_height: int
    frames: list[tuple[int, GameState]] = field(default_factory=list)
    telemetry: list[TickRecord] = field(default_factory=list)

    def summary(self) -> dict:
        return {
            "episode_id": self.episode_id,
            "seed": self.seed,
            "score": self.score,
            "duration_s": self.duration_s,
            "termination": self.termination.value,
            "ticks": self.ticks,
            "max_height": self.max_height,
        }

    def to_json(self) -> dict:
        out = self.summary()
        out["telemetry"] = [list(r) for r in self.telemetry]
        return out

    @classmethod
    def from_json(cls, data: dict) -> "EpisodeTrace":
        return cls(
            episode_id=data["episode_id"],
            seed=data["seed"],
            score=data["score"],
            duration_s=data["duration_s"],
            termination=TerminationReason(data["termination"]),
            ticks=data["ticks"],
            max_height=data["max_height"],
            telemetry=[TickRecord(*r) for r in data.get("telemetry", [])],
        )

    @property
    def actions(self) -> list[Action]:
        return [Action(r.action) for r in self.telemetry if r.tick > 0]


def frame_ticks(final_tick: int) -> list[int]:
    """The 25 ticks a strip shows: ``T-240, T-230, ..., T``, left-padded.

    Ticks before the start of the episode are replaced by the earliest
    sampled tick that exists.
    """
    ticks = [final_tick - FRAME_WINDOW + FRAME_STEP * j for j in range(FRAME_WINDOW // FRAME_STEP + 1)]
    first = next(t for t in ticks if t >= 0)
    return [t if t >= 0 else first for t in ticks]


def _run(
    cfg: GameConfig,
    choose: Callable[[GameState], bool],
    seed: int,
    episode_id: str,
    record: bool,
) -> EpisodeTrace:
    p = _params(cfg)
    state = reset(cfg, seed)
    window: deque[GameState] = deque([state], maxlen=FRAME_WINDOW + 1)
    telemetry: list[TickRecord] = []
    if record:
        telemetry.append(TickRecord(0, state.player_y, state.player_vel_y, 0, Action.IDLE.value))
    min_y = state.player_y
    while state.terminated is None:
        flap = choose(state)
        state = _step(state, p, flap)
        if state.player_y < min_y:
            min_y = state.player_y
        window.append(state)
        if record:
            telemetry.append(TickRecord(
                state.tick, state.player_y, state.player_vel_y, state.score,
                "flap" if flap else "idle",
            ))
    by_tick = {s.tick: s for s in window}
    frames = [(t, by_tick[t]) for t in frame_ticks(state.tick)] if record else []
    return EpisodeTrace(
        episode_id=episode_id,
        seed=seed,
        score=state.score,
        duration_s=state.tick / TICK_RATE,
        termination=state.terminated,
        ticks=state.tick,
        max_height=p.ground_y - (min_y + p.player_h),
        frames=frames,
        telemetry=telemetry,
    )


def run_episode(
    cfg: GameConfig,
    policy: Policy,
    seed: int,
    *,
    episode_id: str | None = None,
    record: bool = True,
) -> EpisodeTrace:
    """Play one episode to termination.

    With ``record=False`` no telemetry or frames are kept; the summary
    fields are identical.
    """
    def choose(state: GameState) -> bool:
        return policy(state, cfg) is Action.FLAP

    return _run(cfg, choose, seed, episode_id or f"seed{seed}", record)


def replay_episode(cfg: GameConfig, seed: int, actions: Sequence[Action | str]) -> EpisodeTrace:
    """Re-run a recorded action sequence; stops early if the episode ends."""
    it = iter(actions)

    def choose(state: GameState) -> bool:
        a = next(it, Action.IDLE)
        return a is Action.FLAP or a == "flap"

    return _run(cfg, choose, seed, f"replay{seed}", True)


def velocity_bound(cfg: GameConfig) -> int:
    p = cfg.speed.player
    return max(abs(p.min_vel_y), p.max_vel_y, abs(p.flap_acc))
