"""Game configuration: parsing, YAML serialization, validation, diffing and
designer edit constraints.

The YAML layout (keys, nesting, comments) is the one the designer sees and
edits, so :func:`serialize_config` reproduces it exactly rather than relying
on a generic dumper.
"""

from __future__ import annotations

import dataclasses
import enum
from dataclasses import dataclass, field
from importlib import resources
from typing import Any, Iterator

import yaml


class ConfigError(Exception):
    """Base class for configuration problems."""


class ConfigSyntaxError(ConfigError):
    """The text is not well-formed YAML."""


class SchemaError(ConfigError):
    """A field is missing, unknown, or has the wrong type."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


class InvalidConfig(ConfigError):
    """A config failed :func:`validate_config`."""

    def __init__(self, report: "ValidationReport"):
        super().__init__("invalid config: " + "; ".join(f"{p}: {m}" for p, m in report.violations))
        self.report = report


@dataclass(frozen=True)
class PlayerPhysics:
    max_vel_y: int = 10
    min_vel_y: int = -8
    acc_y: int = 1
    vel_rot: int = 3
    flap_acc: int = -9
    rot_thr: int = 20


@dataclass(frozen=True)
class Speed:
    pipe_vel_x: int = -4
    player: PlayerPhysics = field(default_factory=PlayerPhysics)


@dataclass(frozen=True)
class PlayerDims:
    width: int = 34
    height: int = 24
    private_zone: int = 100


@dataclass(frozen=True)
class LidarDims:
    max_distance: int = 200


@dataclass(frozen=True)
class PipeDims:
    width: int = 52
    height: int = 320
    min_gap: int = 100
    max_gap: int = 150
    min_gap_distance: int = 50
    max_gap_distance: int = 150
    min_horizontal_spacing: int = 200
    max_horizontal_spacing: int = 300


@dataclass(frozen=True)
class BaseDims:
    width: int = 336
    height: int = 112


@dataclass(frozen=True)
class BackgroundDims:
    width: int = 288
    height: int = 512
    fill_color: tuple[int, int, int] = (200, 200, 200)


@dataclass(frozen=True)
class Dimensions:
    player: PlayerDims = field(default_factory=PlayerDims)
    lidar: LidarDims = field(default_factory=LidarDims)
    pipe: PipeDims = field(default_factory=PipeDims)
    base: BaseDims = field(default_factory=BaseDims)
    background: BackgroundDims = field(default_factory=BackgroundDims)


@dataclass(frozen=True)
class MetricsConfig:
    save_path: str = "metrics"
    save_on_reset: bool = True


@dataclass(frozen=True)
class GameConfig:
    """The complete tunable game definition.

    Field paths (``"dimensions.pipe.min_gap"``) mirror the YAML nesting and
    are used everywhere a field has to be named: validation reports, diffs,
    constraint violations.
    """

    speed: Speed = field(default_factory=Speed)
    dimensions: Dimensions = field(default_factory=Dimensions)
    metrics: MetricsConfig = field(default_factory=MetricsConfig)

    @property
    def playfield_height(self) -> int:
        """Height of the flyable area above the ground band."""
        return self.dimensions.background.height - self.dimensions.base.height

    def flat(self) -> dict[str, Any]:
        return dict(iter_fields(self))

    def get(self, path: str) -> Any:
        node: Any = self
        for part in path.split("."):
            node = getattr(node, part)
        return node

    def with_values(self, updates: dict[str, Any]) -> "GameConfig":
        """Return a copy with the given dotted paths replaced."""
        flat = self.flat()
        for path in updates:
            if path not in flat:
                raise KeyError(path)
        flat.update(updates)
        return _from_flat(GameConfig, flat, "")


def iter_fields(obj: Any, prefix: str = "") -> Iterator[tuple[str, Any]]:
    """Yield ``(dotted path, value)`` for every leaf, in declaration order."""
    for f in dataclasses.fields(obj):
        value = getattr(obj, f.name)
        path = f"{prefix}{f.name}"
        if dataclasses.is_dataclass(value):
            yield from iter_fields(value, path + ".")
        else:
            yield path, value


def _from_flat(cls: type, flat: dict[str, Any], prefix: str) -> Any:
    kwargs = {}
    for f in dataclasses.fields(cls):
        path = f"{prefix}{f.name}"
        if f.type in _NESTED:
            kwargs[f.name] = _from_flat(_NESTED[f.type], flat, path + ".")
        else:
            kwargs[f.name] = flat[path]
    return cls(**kwargs)


_NESTED: dict[str, type] = {
    "PlayerPhysics": PlayerPhysics,
    "Speed": Speed,
    "PlayerDims": PlayerDims,
    "LidarDims": LidarDims,
    "PipeDims": PipeDims,
    "BaseDims": BaseDims,
    "BackgroundDims": BackgroundDims,
    "Dimensions": Dimensions,
    "MetricsConfig": MetricsConfig,
}


DEFAULT_CONFIG = GameConfig()
FIELD_PATHS: tuple[str, ...] = tuple(p for p, _ in iter_fields(DEFAULT_CONFIG))


# --------------------------------------------------------------------------
# parsing
# --------------------------------------------------------------------------

def _coerce(path: str, raw: Any, default: Any) -> Any:
    if isinstance(default, bool):
        if not isinstance(raw, bool):
            raise SchemaError(path, f"expected a boolean, got {raw!r}")
        return raw
    if isinstance(default, int):
        # integral floats (e.g. 140.0) are tolerated; anything else is not
        if isinstance(raw, bool):
            raise SchemaError(path, f"expected an integer, got {raw!r}")
        if isinstance(raw, float) and raw.is_integer():
            return int(raw)
        if not isinstance(raw, int):
            raise SchemaError(path, f"expected an integer, got {raw!r}")
        return raw
    if isinstance(default, str):
        if not isinstance(raw, str):
            raise SchemaError(path, f"expected a string, got {raw!r}")
        return raw
    if isinstance(default, tuple):
        if not isinstance(raw, (list, tuple)) or len(raw) != len(default):
            raise SchemaError(path, f"expected a list of {len(default)} integers, got {raw!r}")
        return tuple(_coerce(f"{path}[{i}]", v, d) for i, (v, d) in enumerate(zip(raw, default)))
    raise AssertionError(f"unhandled field type at {path}")


def _walk(node: Any, template: Any, prefix: str, out: dict[str, Any]) -> None:
    if not isinstance(node, dict):
        raise SchemaError(prefix.rstrip(".") or "<root>", f"expected a mapping, got {node!r}")
    names = {f.name: f for f in dataclasses.fields(template)}
    for key in node:
        if key not in names:
            raise SchemaError(f"{prefix}{key}", "unknown key")
    for name in names:
        path = f"{prefix}{name}"
        if name not in node:
            raise SchemaError(path, "missing field")
        sub = getattr(template, name)
        if dataclasses.is_dataclass(sub):
            _walk(node[name], sub, path + ".", out)
        else:
            out[path] = _coerce(path, node[name], sub)


def parse_config(yaml_text: str) -> GameConfig:
    """Parse YAML text into a :class:`GameConfig`.

    Every field must be present; unknown keys are rejected so that invented
    keys in a designer's answer surface as errors instead of vanishing.
    """
    try:
        data = yaml.safe_load(yaml_text)
    except yaml.YAMLError as exc:
        raise ConfigSyntaxError(str(exc)) from exc
    flat: dict[str, Any] = {}
    _walk(data, DEFAULT_CONFIG, "", flat)
    return _from_flat(GameConfig, flat, "")


def load_config(path) -> GameConfig:
    """Like :func:`parse_config`, but errors name the file."""
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    try:
        return parse_config(text)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


# --------------------------------------------------------------------------
# serialization
# --------------------------------------------------------------------------

def _line(indent: int, key: str, value: str, comment: str | None = None, column: int = 0) -> str:
    body = f"{key}: {value}"
    if comment is None:
        return " " * indent + body
    pad = max(2, column - len(body))
    return " " * indent + body + " " * pad + "# " + comment


def serialize_config(cfg: GameConfig) -> str:
    """Render ``cfg`` in the canonical commented YAML layout."""
    p = cfg.speed.player
    d = cfg.dimensions
    pipe = d.pipe
    bg = d.background
    color = "[" + ", ".join(str(c) for c in bg.fill_color) + "]"
    lines = [
        "# Speed and Acceleration",
        "speed:",
        _line(2, "pipe_vel_x", str(cfg.speed.pipe_vel_x)),
        "  player:",
        _line(4, "max_vel_y", str(p.max_vel_y), "max vel along Y, max descend speed", 15),
        _line(4, "min_vel_y", str(p.min_vel_y), "min vel along Y, max ascend speed", 15),
        _line(4, "acc_y", str(p.acc_y), "players downward acceleration", 15),
        _line(4, "vel_rot", str(p.vel_rot), "angular speed", 15),
        _line(4, "flap_acc", str(p.flap_acc), "players speed on flapping", 15),
        _line(4, "rot_thr", str(p.rot_thr), "Player's rotation threshold", 15),
        "",
        "# Dimensions",
        "dimensions:",
        "  player:",
        _line(4, "width", str(d.player.width)),
        _line(4, "height", str(d.player.height)),
        _line(4, "private_zone", str(d.player.private_zone),
              "Radius of the private zone for LIDAR. DO NOT MODIFY."),
        "",
        "  lidar:",
        _line(4, "max_distance", str(d.lidar.max_distance),
              "Maximum distance for LIDAR rays. DO NOT MODIFY."),
        "",
        "  pipe:",
        _line(4, "width", str(pipe.width)),
        _line(4, "height", str(pipe.height)),
        _line(4, "min_gap", str(pipe.min_gap)),
        _line(4, "max_gap", str(pipe.max_gap)),
        _line(4, "min_gap_distance", str(pipe.min_gap_distance), "Minimum distance from ground to pipe gap"),
        _line(4, "max_gap_distance", str(pipe.max_gap_distance), "Maximum distance from ground to pipe gap"),
        _line(4, "min_horizontal_spacing", str(pipe.min_horizontal_spacing),
              "Minimum horizontal spacing between pipes"),
        _line(4, "max_horizontal_spacing", str(pipe.max_horizontal_spacing),
              "Maximum horizontal spacing between pipes"),
        "",
        "  base:",
        _line(4, "width", str(d.base.width)),
        _line(4, "height", str(d.base.height)),
        "",
        "  background:",
        _line(4, "width", str(bg.width)),
        _line(4, "height", str(bg.height)),
        _line(4, "fill_color", color, "RGB color tuple"),
        "",
        "metrics:",
        _line(2, "save_path", _quote(cfg.metrics.save_path)),
        _line(2, "save_on_reset", "True" if cfg.metrics.save_on_reset else "False"),
    ]
    return "\n".join(lines) + "\n"


def _quote(s: str) -> str:
    return '"' + s.replace("\\", "\\\\").replace('"', '\\"') + '"'


def default_yaml() -> str:
    """The shipped default configuration text."""
    return resources.files("flapdesign.fixtures").joinpath("default.yaml").read_text(encoding="utf-8")


# --------------------------------------------------------------------------
# validation
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[tuple[str, str], ...] = ()

    @property
    def valid(self) -> bool:
        return not self.violations

    def __str__(self) -> str:
        if self.valid:
            return "valid"
        return "invalid\n" + "\n".join(f"  {p}: {m}" for p, m in self.violations)


def validate_config(cfg: GameConfig) -> ValidationReport:
    out: list[tuple[str, str]] = []
    d = cfg.dimensions
    p = cfg.speed.player

    for path, value in iter_fields(cfg.dimensions, "dimensions."):
        if path == "dimensions.background.fill_color":
            for i, c in enumerate(value):
                if not 0 <= c <= 255:
                    out.append((f"{path}[{i}]", f"channel must be in [0, 255], got {c}"))
        elif value <= 0:
            out.append((path, f"must be > 0, got {value}"))

    for lo, hi in (
        ("min_gap", "max_gap"),
        ("min_gap_distance", "max_gap_distance"),
        ("min_horizontal_spacing", "max_horizontal_spacing"),
    ):
        a, b = getattr(d.pipe, lo), getattr(d.pipe, hi)
        if a > b:
            out.append((f"dimensions.pipe.{lo}", f"dimensions.pipe.{lo} ≤ {hi} violated ({a} > {b})"))

    if cfg.speed.pipe_vel_x >= 0:
        out.append(("speed.pipe_vel_x", f"pipe_vel_x < 0 violated (got {cfg.speed.pipe_vel_x})"))

    playfield = cfg.playfield_height
    if d.pipe.max_gap + d.pipe.max_gap_distance > playfield:
        out.append((
            "dimensions.pipe.max_gap",
            f"max_gap + max_gap_distance ≤ playfield height violated "
            f"({d.pipe.max_gap} + {d.pipe.max_gap_distance} > {playfield})",
        ))

    if p.acc_y <= 0:
        out.append(("speed.player.acc_y", f"acc_y > 0 violated (got {p.acc_y})"))
    if p.flap_acc >= 0:
        out.append(("speed.player.flap_acc", f"flap_acc < 0 violated (got {p.flap_acc})"))
    if p.min_vel_y >= 0:
        out.append(("speed.player.min_vel_y", f"min_vel_y < 0 violated (got {p.min_vel_y})"))
    if p.max_vel_y <= 0:
        out.append(("speed.player.max_vel_y", f"max_vel_y > 0 violated (got {p.max_vel_y})"))
    return ValidationReport(tuple(out))


def ensure_valid(cfg: GameConfig) -> GameConfig:
    report = validate_config(cfg)
    if not report.valid:
        raise InvalidConfig(report)
    return cfg


# --------------------------------------------------------------------------
# diffs and designer constraints
# --------------------------------------------------------------------------

def diff_configs(old: GameConfig, new: GameConfig) -> list[tuple[str, Any, Any]]:
    """Changed leaves as ``(path, old, new)`` in declaration order."""
    a, b = old.flat(), new.flat()
    return [(path, a[path], b[path]) for path in FIELD_PATHS if a[path] != b[path]]


def is_editable(path: str) -> bool:
    """Only the pipe geometry and pipe speed are open to the designer."""
    return path == "speed.pipe_vel_x" or path.startswith("dimensions.pipe.")


LOCKED_PATHS: tuple[str, ...] = tuple(p for p in FIELD_PATHS if not is_editable(p))


def enforce_designer_constraints(prev: GameConfig, proposed: GameConfig) -> tuple[GameConfig, list[str]]:
    """Revert every locked field of ``proposed`` to ``prev``'s value.

    Returns the constrained config and the list of reverted paths.
    """
    reverted = [p for p, _, _ in diff_configs(prev, proposed) if p in LOCKED_PATHS]
    if not reverted:
        return proposed, []
    return proposed.with_values({p: prev.get(p) for p in reverted}), reverted


# --------------------------------------------------------------------------
# broken starting scenarios
# --------------------------------------------------------------------------

class Scenario(str, enum.Enum):
    TOO_FAST = "too_fast"
    TOO_EASY = "too_easy"
    TOO_TIGHT_1 = "too_tight_1"
    TOO_TIGHT_2 = "too_tight_2"
    TOO_SPACED_OUT = "too_spaced_out"


# Values fixed by scripts/sweep_scenarios.py; see README for the sweep.
SCENARIO_OVERRIDES: dict[Scenario, dict[str, int]] = {
    Scenario.TOO_FAST: {"speed.pipe_vel_x": -10},
    Scenario.TOO_EASY: {"dimensions.pipe.min_gap": 200, "dimensions.pipe.max_gap": 250},
    Scenario.TOO_TIGHT_1: {"dimensions.pipe.min_gap": 60, "dimensions.pipe.max_gap": 110},
    Scenario.TOO_TIGHT_2: {
        "dimensions.pipe.min_gap": 50,
        "dimensions.pipe.max_gap": 110,
        "dimensions.pipe.min_gap_distance": 20,
        "dimensions.pipe.max_gap_distance": 250,
    },
    Scenario.TOO_SPACED_OUT: {
        "dimensions.pipe.min_horizontal_spacing": 450,
        "dimensions.pipe.max_horizontal_spacing": 600,
    },
}


def broken_config(s: Scenario | str) -> GameConfig:
    """Default config detuned in the way the scenario describes."""
    return DEFAULT_CONFIG.with_values(SCENARIO_OVERRIDES[Scenario(s)])
