"""Designers turn (config, recent play) into a revised config.

``LLMDesigner`` talks to any OpenAI-compatible chat-completions endpoint
using the prompt templates below; ``ScriptedDesigner`` is an offline
feedback controller used as a reproducible stand-in; ``IdentityDesigner``
never changes anything (the failing baseline).
"""

from __future__ import annotations

import base64
import enum
import math
import os
import re
import time
from dataclasses import dataclass, field
from importlib import resources
from typing import Any, Protocol, Sequence

import httpx

from .config import (
    DEFAULT_CONFIG,
    ConfigError,
    GameConfig,
    diff_configs,
    enforce_designer_constraints,
    parse_config,
    serialize_config,
    validate_config,
)
from .sim import MAX_SCORE, EpisodeTrace, TerminationReason
from .traces import FrameBuffer, encode_png, format_episode_line

TARGET_SCORE = 10
N_RECENT = 5
MAX_ATTEMPTS = 3
DEFAULT_TIMEOUT_S = 120.0
DEFAULT_API_KEY_ENV = "OPENAI_API_KEY"


class PromptVariant(str, enum.Enum):
    CONFIG_ONLY = "config_only"
    METRICS_TEXT = "metrics_text"
    IMAGES_ONLY = "images_only"
    METRICS_AND_IMAGES = "metrics_and_images"

    @property
    def uses_metrics(self) -> bool:
        return self in (PromptVariant.METRICS_TEXT, PromptVariant.METRICS_AND_IMAGES)

    @property
    def uses_images(self) -> bool:
        return self in (PromptVariant.IMAGES_ONLY, PromptVariant.METRICS_AND_IMAGES)


class DesignerError(Exception):
    pass


class ArityError(DesignerError, ValueError):
    pass


class NoBlockFound(DesignerError, ValueError):
    pass


class TransportError(DesignerError):
    pass


class AuthError(DesignerError):
    pass


def schema_description() -> str:
    """Prose description of every config field, shipped as a fixture."""
    return (
        resources.files("flapdesign.fixtures")
        .joinpath("schema_description.txt")
        .read_text(encoding="utf-8")
        .rstrip("\n")
    )


# --------------------------------------------------------------------------
# prompt assembly (templates kept verbatim, including their missing spaces)
# --------------------------------------------------------------------------

_COMMON_PREFIX = (
    "You are a game designer tasked with improving the difficulty of a Flappy Bird game. "
    "Your goal is to modify game configuration so the game is challenging but not excessively difficult.\n\n"
)

_COMMON_SUFFIX = (
    "SECOND, provide the *complete* YAML for the new configuration, enclosed in a markdown fenced code block like:\n"
    "```yaml\n<your yaml here>\n```\n"
    "The goal is to arrive at a good configuration with as few attempts as possible.\n"
    "Do not modify the LIDAR parameters."
    "Do not modify the player speed parameters. Only modify the parameters related to the pipes, including `pipe_vel_x`."
)

_INTROS = {
    PromptVariant.CONFIG_ONLY: (
        _COMMON_PREFIX
        + "Below you will find (1) a *schema* describing every configuration parameter, and (2) the *current* configuration.\n\n"
        "First, ANALYSE the configuration and explain (succinctly) what changes would improve gameplay.\n"
        + _COMMON_SUFFIX
    ),
    PromptVariant.IMAGES_ONLY: (
        _COMMON_PREFIX
        + "Below you will find (1) a *schema* describing every configuration parameter, (2) the *current* configuration, and (3) a set of gameplay snapshots from recent sessions.\n\n"
        "Aim for passing 10 pipes."
        "First, ANALYSE the configuration and images and explain (succinctly) the current level of difficulty and what changes would improve gameplay.\n"
        + _COMMON_SUFFIX
    ),
    PromptVariant.METRICS_TEXT: (
        _COMMON_PREFIX
        + "Below you will find (1) a *schema* describing every configuration parameter, (2) the *current* configuration, and (3) a handful of recent game-session metrics.\n\n"
        "Aim for a score of 10."
        "First, ANALYSE the configuration and metrics (paying special attention to the recorded scores) and explain (succinctly) the current level of difficulty and what changes would improve gameplay.\n"
        + _COMMON_SUFFIX
    ),
    PromptVariant.METRICS_AND_IMAGES: (
        _COMMON_PREFIX
        + "Below you will find (1) a *schema* describing every configuration parameter, (2) the *current* configuration, and (3) recent game-session metrics together with gameplay snapshots.\n\n"
        "Aim for a score of 10."
        "First, ANALYSE the configuration and metrics and explain (succinctly) the current level of difficulty and what changes would improve gameplay.\n"
        + _COMMON_SUFFIX
    ),
}


def _user_header(variant: PromptVariant, schema: str, base_yaml: str, n_recent: int) -> str:
    head = "Configuration schema (read-only):\n" + schema + "\n\n" + "Base configuration (YAML):\n" + base_yaml
    if variant is PromptVariant.CONFIG_ONLY:
        return head
    if variant is PromptVariant.METRICS_TEXT:
        tail = f"Below you will find up to {n_recent} recent session metrics."
    elif variant is PromptVariant.IMAGES_ONLY:
        tail = f"Below you will find up to {n_recent} gameplay snapshots from recent sessions."
    else:
        tail = f"Below you will find up to {n_recent} recent session metrics, each followed by a gameplay snapshot."
    return head + "\n\n" + tail


def image_part(png: bytes) -> dict:
    url = "data:image/png;base64," + base64.b64encode(png).decode("ascii")
    return {"type": "image_url", "image_url": {"url": url}}


def text_part(text: str) -> dict:
    return {"type": "text", "text": text}


def build_prompt(
    variant: PromptVariant | str,
    cfg: GameConfig,
    schema: str | None = None,
    traces: Sequence[EpisodeTrace] = (),
    strips: Sequence[FrameBuffer | bytes] = (),
    n_recent: int = N_RECENT,
) -> list[dict]:
    """Assemble the system and user messages for one design request.

    The user message is a list of content parts: the header text, then per
    episode a metric line and/or a PNG snapshot, in episode order.
    ``strips`` may be frame buffers or already-encoded PNG bytes.
    """
    variant = PromptVariant(variant)
    want_traces = n_recent if variant.uses_metrics else 0
    want_strips = n_recent if variant.uses_images else 0
    if len(traces) != want_traces:
        raise ArityError(f"{variant.value} needs {want_traces} traces, got {len(traces)}")
    if len(strips) != want_strips:
        raise ArityError(f"{variant.value} needs {want_strips} strips, got {len(strips)}")
    if schema is None:
        schema = schema_description()

    parts = [text_part(_user_header(variant, schema, serialize_config(cfg), n_recent))]
    pngs = [s if isinstance(s, bytes) else encode_png(s) for s in strips]
    for k in range(n_recent):
        if variant.uses_metrics:
            parts.append(text_part(format_episode_line(k + 1, traces[k])))
        if variant.uses_images:
            parts.append(image_part(pngs[k]))
    return [
        {"role": "system", "content": _INTROS[variant]},
        {"role": "user", "content": parts},
    ]


_FENCE = re.compile(r"```[ \t]*(?:yaml|yml)[ \t]*\r?\n(.*?)```", re.DOTALL | re.IGNORECASE)


def extract_yaml_block(response: str) -> str:
    """Contents of the first ```yaml fenced block, whitespace-trimmed."""
    m = _FENCE.search(response)
    if m is None:
        raise NoBlockFound("no ```yaml fenced block in response")
    return m.group(1).strip()


def extract_analysis(response: str) -> str:
    """Prose before the first fence (the model's reasoning about the change)."""
    m = _FENCE.search(response)
    return (response[:m.start()] if m else response).strip()


# --------------------------------------------------------------------------
# LLM designer
# --------------------------------------------------------------------------

@dataclass
class DesignerExchange:
    variant: PromptVariant
    messages: list[dict]
    raw_response: str = ""
    extracted_yaml: str | None = None
    analysis: str = ""
    attempts: int = 0
    failed: bool = False
    errors: list[str] = field(default_factory=list)
    violations: list[str] = field(default_factory=list)
    model: str = ""
    endpoint: str = ""
    sampling: dict = field(default_factory=dict)
    elapsed_s: float = 0.0

    def to_json(self) -> dict:
        return {
            "variant": self.variant.value,
            "messages": self.messages,
            "raw_response": self.raw_response,
            "extracted_yaml": self.extracted_yaml,
            "analysis": self.analysis,
            "attempts": self.attempts,
            "failed": self.failed,
            "errors": self.errors,
            "violations": self.violations,
            "model": self.model,
            "endpoint": self.endpoint,
            "sampling": self.sampling,
            "elapsed_s": self.elapsed_s,
        }

    @classmethod
    def from_json(cls, d: dict) -> "DesignerExchange":
        d = dict(d)
        d["variant"] = PromptVariant(d["variant"])
        return cls(**d)


def chat_completion(
    client: httpx.Client,
    endpoint: str,
    model: str,
    messages: list[dict],
    api_key: str,
    sampling: dict | None = None,
    timeout: float = DEFAULT_TIMEOUT_S,
) -> str:
    body: dict[str, Any] = {"model": model, "messages": messages}
    body.update(sampling or {})
    try:
        r = client.post(
            endpoint.rstrip("/") + "/chat/completions",
            json=body,
            headers={"Authorization": f"Bearer {api_key}"},
            timeout=timeout,
        )
    except httpx.HTTPError as exc:
        raise TransportError(f"request to {endpoint} failed: {exc}") from exc
    if r.status_code in (401, 403):
        raise AuthError(f"endpoint rejected credentials (HTTP {r.status_code})")
    if r.status_code >= 400:
        raise TransportError(f"HTTP {r.status_code}: {r.text[:500]}")
    try:
        content = r.json()["choices"][0]["message"]["content"]
    except (ValueError, KeyError, IndexError, TypeError) as exc:
        raise TransportError(f"malformed completion payload: {exc}") from exc
    return content or ""


def api_key_from_env(var: str = DEFAULT_API_KEY_ENV) -> str:
    key = os.environ.get(var)
    if not key:
        raise AuthError(f"environment variable {var} is not set")
    return key


def llm_designer_propose(
    endpoint: str,
    model: str,
    variant: PromptVariant | str,
    cfg: GameConfig,
    traces: Sequence[EpisodeTrace] = (),
    strips: Sequence[FrameBuffer | bytes] = (),
    *,
    api_key: str | None = None,
    api_key_env: str = DEFAULT_API_KEY_ENV,
    client: httpx.Client | None = None,
    sampling: dict | None = None,
    timeout: float = DEFAULT_TIMEOUT_S,
    schema: str | None = None,
) -> tuple[GameConfig, DesignerExchange]:
    """One design step against a chat-completions endpoint.

    Unparseable or invalid replies are fed back as a user message and the
    request repeated, up to three attempts in total; after that ``cfg`` is
    returned unchanged and the exchange is marked failed.
    """
    variant = PromptVariant(variant)
    if api_key is None:
        api_key = api_key_from_env(api_key_env)
    messages = build_prompt(variant, cfg, schema, traces, strips)
    ex = DesignerExchange(
        variant, messages, model=model, endpoint=endpoint, sampling=dict(sampling or {})
    )
    convo = list(messages)
    own_client = client is None
    client = client or httpx.Client()
    t0 = time.monotonic()
    try:
        for attempt in range(1, MAX_ATTEMPTS + 1):
            ex.attempts = attempt
            reply = chat_completion(client, endpoint, model, convo, api_key, sampling, timeout)
            ex.raw_response = reply
            ex.analysis = extract_analysis(reply)
            try:
                ex.extracted_yaml = None
                ex.extracted_yaml = extract_yaml_block(reply)
                proposed = parse_config(ex.extracted_yaml)
                constrained, reverted = enforce_designer_constraints(cfg, proposed)
                report = validate_config(constrained)
                if not report.valid:
                    raise ConfigError(str(report))
            except (NoBlockFound, ConfigError) as exc:
                ex.errors.append(f"attempt {attempt}: {exc}")
                convo = convo + [
                    {"role": "assistant", "content": reply},
                    {"role": "user", "content": f"Your previous answer could not be used: {exc}\n"
                        "Reply again with the complete configuration in a ```yaml fenced block."},
                ]
                continue
            ex.violations = reverted
            ex.messages = convo
            return constrained, ex
        ex.failed = True
        ex.messages = convo
        return cfg, ex
    finally:
        ex.elapsed_s = time.monotonic() - t0
        if own_client:
            client.close()


# --------------------------------------------------------------------------
# scripted controller
# --------------------------------------------------------------------------

# Frozen after the closed-loop calibration runs (scripts/tune_designer.py).
GAP_GAIN = 1.0           # px of gap per unit of log score ratio
GAP_CURVE = 2.0          # extra gain per unit of |log ratio|, for far-off starts
SATURATED_STEP = 0.15    # relative gap change when no episode died
_SPACING_FIELDS = ("min_horizontal_spacing", "max_horizontal_spacing")


def geometric_iqm(hazard: float, cap: int = MAX_SCORE) -> float:
    """IQM of a geometric score distribution (death chance ``hazard`` per pipe) capped at ``cap``."""
    if not 0.0 < hazard <= 1.0:
        raise ValueError("hazard must be in (0, 1]")
    q = 1.0 - hazard
    cdf = total = 0.0
    for k in range(cap + 1):
        pk = q**k * hazard if k < cap else q**cap
        lo, hi = max(cdf, 0.25), min(cdf + pk, 0.75)
        if hi > lo:
            total += k * (hi - lo)
        cdf += pk
    return total / 0.5


def estimate_score(traces: Sequence[EpisodeTrace]) -> float | None:
    """Smoothed IQM score estimate, or None when no episode ended in a collision.

    Each pipe is treated as an independent chance of dying. The per-pipe
    hazard is estimated from all episodes (deaths over pipes attempted, with
    timeouts and capped runs counting as survived pipes) and mapped back to
    the IQM of the implied score distribution. With five episodes this is far
    less noisy than the raw IQM and still responds to a single score of zero.
    """
    deaths = sum(t.termination is TerminationReason.COLLISION for t in traces)
    if deaths == 0:
        return None
    return geometric_iqm(deaths / (sum(t.score for t in traces) + deaths))


def scripted_designer_propose(
    cfg: GameConfig,
    traces: Sequence[EpisodeTrace],
    target_score: int = TARGET_SCORE,
    *,
    gain: float = GAP_GAIN,
    curve: float = GAP_CURVE,
    saturated_step: float = SATURATED_STEP,
) -> GameConfig:
    """Feedback controller over pipe fields only.

    With ``s`` the estimate from :func:`estimate_score` (the maximum score
    when nobody died) and ``e = target - s``:

    * ``|e| <= 1``: keep the config.
    * if pipe speed, a horizontal spacing bound, or the width of the
      vertical gap-distance range sits on the side of its default that the
      sign of ``e`` blames (faster or denser or more erratic than default
      when too hard, the reverse when too easy), put it back to the default
      and change nothing else this step;
    * otherwise shift the gap range by ``gain * x * (1 + curve * |x|)`` px
      with ``x = ln((target+1)/(s+1))``, rounded to half pixels: an odd half
      moves one bound a pixel further than the other, in the direction that
      keeps the gap spread within a pixel of where it was. With no deaths
      the gap shrinks by a fixed fraction of ``min_gap``.

    Score responds roughly exponentially to gap size, so a log-ratio error
    converges where a linear one overshoots from above and crawls from
    below. The curve term speeds up far-off starts while keeping small
    corrections gentle, since near the target most of the error is noise.
    """
    if not traces:
        raise ValueError("need at least one trace")
    if target_score <= 0:
        raise ValueError("target_score must be positive")
    est = estimate_score(traces)
    s = float(MAX_SCORE) if est is None else est
    e = target_score - s
    if abs(e) <= 1:
        return cfg

    pipe = cfg.dimensions.pipe
    default_pipe = DEFAULT_CONFIG.dimensions.pipe
    restore: dict[str, int] = {}
    v, dv = cfg.speed.pipe_vel_x, DEFAULT_CONFIG.speed.pipe_vel_x
    if (e > 0 and v < dv) or (e < 0 and v > dv):
        restore["speed.pipe_vel_x"] = dv
    for name in _SPACING_FIELDS:
        cur, d = getattr(pipe, name), getattr(default_pipe, name)
        if (e > 0 and cur < d) or (e < 0 and cur > d):
            restore["dimensions.pipe." + name] = d
    width = pipe.max_gap_distance - pipe.min_gap_distance
    default_width = default_pipe.max_gap_distance - default_pipe.min_gap_distance
    if (e > 0 and width > default_width) or (e < 0 and width < default_width):
        restore["dimensions.pipe.min_gap_distance"] = default_pipe.min_gap_distance
        restore["dimensions.pipe.max_gap_distance"] = default_pipe.max_gap_distance
    if restore:
        out = cfg.with_values(restore)
        if validate_config(out).valid:
            return out

    if est is None:
        halves = -2 * max(1, round(pipe.min_gap * saturated_step))
    else:
        x = math.log((target_score + 1) / (s + 1))
        halves = round(2 * gain * x * (1 + curve * abs(x)))
        if halves == 0:
            return cfg
    sign = 1 if halves > 0 else -1
    d_lo, odd = divmod(abs(halves), 2)
    d_hi = d_lo
    if odd:
        # widen an even spread, narrow an odd one, so the spread stays within a pixel
        if (sign > 0) == ((pipe.max_gap - pipe.min_gap) % 2 == 0):
            d_hi += 1
        else:
            d_lo += 1

    floor = cfg.dimensions.player.height + 1
    room = cfg.playfield_height - pipe.max_gap_distance
    lo = max(floor, pipe.min_gap + sign * d_lo)
    hi = min(room, max(lo, pipe.max_gap + sign * d_hi))
    lo = min(lo, hi)
    # never move a bound against the sign of the error
    if e > 0:
        lo, hi = max(lo, pipe.min_gap), max(hi, pipe.max_gap)
    else:
        lo, hi = min(lo, pipe.min_gap), min(hi, pipe.max_gap)
    out = cfg.with_values({"dimensions.pipe.min_gap": lo, "dimensions.pipe.max_gap": hi})
    return out if validate_config(out).valid else cfg


# --------------------------------------------------------------------------
# designer objects used by the loop
# --------------------------------------------------------------------------

class Designer(Protocol):
    kind: str

    def propose(
        self, cfg: GameConfig, traces: Sequence[EpisodeTrace], strips: Sequence[bytes]
    ) -> tuple[GameConfig, DesignerExchange | None]:
        ...


class IdentityDesigner:
    kind = "identity"

    def propose(self, cfg, traces, strips):
        return cfg, None


@dataclass
class ScriptedDesigner:
    target_score: int = TARGET_SCORE
    kind: str = "scripted"

    def propose(self, cfg, traces, strips):
        return scripted_designer_propose(cfg, traces, self.target_score), None


@dataclass
class LLMDesigner:
    endpoint: str
    model: str
    variant: PromptVariant = PromptVariant.METRICS_TEXT
    api_key_env: str = DEFAULT_API_KEY_ENV
    sampling: dict = field(default_factory=dict)
    timeout: float = DEFAULT_TIMEOUT_S
    client: httpx.Client | None = None
    kind: str = "llm"

    def propose(self, cfg, traces, strips):
        v = PromptVariant(self.variant)
        return llm_designer_propose(
            self.endpoint,
            self.model,
            v,
            cfg,
            traces if v.uses_metrics else (),
            strips if v.uses_images else (),
            api_key_env=self.api_key_env,
            client=self.client,
            sampling=self.sampling,
            timeout=self.timeout,
        )


def describe_change(old: GameConfig, new: GameConfig) -> list[dict]:
    return [{"path": p, "old": a, "new": b} for p, a, b in diff_configs(old, new)]
