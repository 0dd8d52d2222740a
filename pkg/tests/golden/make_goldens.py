"""Regenerate the prompt golden files.

This is a standalone transcription of the published prompt templates plus
the repo's attachment layout (one metric line and/or one PNG part per
episode, in order). It deliberately does not import the package's prompt
code so the goldens are an independent check.

    python tests/golden/make_goldens.py
"""

from __future__ import annotations

import base64
import json
from pathlib import Path

HERE = Path(__file__).parent
ROOT = HERE.parents[1]

schema_description = (ROOT / "src/flapdesign/fixtures/schema_description.txt").read_text().rstrip("\n")
base_yaml = (ROOT / "src/flapdesign/fixtures/default.yaml").read_text()
n_recent = 5

METRIC_LINES = [
    "episode 1: score=3 flight_time=12.4s termination=collision",
    "episode 2: score=0 flight_time=2.1s termination=collision",
    "episode 3: score=30 flight_time=75.0s termination=max_score_30",
    "episode 4: score=12 flight_time=120.0s termination=timeout_120s",
    "episode 5: score=7 flight_time=25.9s termination=collision",
]
STRIPS = [f"\x89PNG fake strip {k}".encode("latin-1") for k in range(1, 6)]


def messages_for(input_variant: str) -> list[dict]:
    common_prefix = (
        "You are a game designer tasked with improving the difficulty of a Flappy Bird game. "
        "Your goal is to modify game configuration so the game is challenging but not excessively difficult.\n\n"
    )

    common_suffix = (
        "SECOND, provide the *complete* YAML for the new configuration, enclosed in a markdown fenced code block like:\n"
        "```yaml\n<your yaml here>\n```\n"
        "The goal is to arrive at a good configuration with as few attempts as possible.\n"
        "Do not modify the LIDAR parameters."
        "Do not modify the player speed parameters. Only modify the parameters related to the pipes, including `pipe_vel_x`."
    )

    if input_variant == "config_only":
        intro = (
            common_prefix +
            "Below you will find (1) a *schema* describing every configuration parameter, and (2) the *current* configuration.\n\n"
            "First, ANALYSE the configuration and explain (succinctly) what changes would improve gameplay.\n" +
            common_suffix
        )
    elif input_variant == "images_only":
        intro = (
            common_prefix +
            "Below you will find (1) a *schema* describing every configuration parameter, (2) the *current* configuration, and (3) a set of gameplay snapshots from recent sessions.\n\n"
            "Aim for passing 10 pipes."
            "First, ANALYSE the configuration and images and explain (succinctly) the current level of difficulty and what changes would improve gameplay.\n" +
            common_suffix
        )
    elif input_variant == "metrics_text":
        intro = (
            common_prefix +
            "Below you will find (1) a *schema* describing every configuration parameter, (2) the *current* configuration, and (3) a handful of recent game-session metrics.\n\n"
            "Aim for a score of 10."
            "First, ANALYSE the configuration and metrics (paying special attention to the recorded scores) and explain (succinctly) the current level of difficulty and what changes would improve gameplay.\n" +
            common_suffix
        )
    else:  # metrics_and_images
        intro = (
            common_prefix +
            "Below you will find (1) a *schema* describing every configuration parameter, (2) the *current* configuration, and (3) recent game-session metrics together with gameplay snapshots.\n\n"
            "Aim for a score of 10."
            "First, ANALYSE the configuration and metrics and explain (succinctly) the current level of difficulty and what changes would improve gameplay.\n" +
            common_suffix
        )

    if input_variant == "config_only":
        user_content_header = (
            "Configuration schema (read-only):\n" + schema_description + "\n\n" +
            "Base configuration (YAML):\n" + base_yaml
        )
    elif input_variant == "metrics_text":
        user_content_header = (
            "Configuration schema (read-only):\n" + schema_description + "\n\n" +
            "Base configuration (YAML):\n" + base_yaml + "\n\n" +
            f"Below you will find up to {n_recent} recent session metrics."
        )
    elif input_variant == "images_only":
        user_content_header = (
            "Configuration schema (read-only):\n" + schema_description + "\n\n" +
            "Base configuration (YAML):\n" + base_yaml + "\n\n" +
            f"Below you will find up to {n_recent} gameplay snapshots from recent sessions."
        )
    else:  # metrics_and_images
        user_content_header = (
            "Configuration schema (read-only):\n" + schema_description + "\n\n" +
            "Base configuration (YAML):\n" + base_yaml + "\n\n" +
            f"Below you will find up to {n_recent} recent session metrics, each followed by a gameplay snapshot."
        )

    parts = [{"type": "text", "text": user_content_header}]
    for k in range(n_recent):
        if input_variant in ("metrics_text", "metrics_and_images"):
            parts.append({"type": "text", "text": METRIC_LINES[k]})
        if input_variant in ("images_only", "metrics_and_images"):
            url = "data:image/png;base64," + base64.b64encode(STRIPS[k]).decode()
            parts.append({"type": "image_url", "image_url": {"url": url}})

    return [
        {"role": "system", "content": intro},
        {"role": "user", "content": parts},
    ]


def dump(messages) -> str:
    return json.dumps(messages, indent=2, ensure_ascii=False) + "\n"


if __name__ == "__main__":
    for v in ("config_only", "metrics_text", "images_only", "metrics_and_images"):
        (HERE / f"prompt_{v}.json").write_text(dump(messages_for(v)), encoding="utf-8")
        print("wrote", v)
