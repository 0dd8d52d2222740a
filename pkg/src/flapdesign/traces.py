"""Feedback representations of played episodes: one-line text metrics and
composite image strips (5x5 montages of the last 8 s of play)."""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .config import GameConfig
from .sim import PLAYER_X, EpisodeTrace, GameState, pipe_rects

__all__ = [
    "EpisodeTrace",
    "FrameBuffer",
    "EncodeError",
    "summarize_text",
    "format_episode_line",
    "render_frame",
    "composite_strip",
    "encode_png",
    "decode_png",
]

GRID = 5
SEPARATOR_PX = 2
SEPARATOR_COLOR = (0, 0, 0)
PIPE_COLOR = (83, 160, 44)
GROUND_COLOR = (222, 216, 149)
PLAYER_COLOR = (230, 60, 40)
DEFAULT_DOWNSCALE = 2

PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"


class EncodeError(ValueError):
    pass


@dataclass(frozen=True)
class FrameBuffer:
    """Row-major 8-bit RGB pixels."""

    width: int
    height: int
    pixels: bytes

    def __post_init__(self):
        if len(self.pixels) != self.width * self.height * 3:
            raise ValueError(
                f"pixel buffer has {len(self.pixels)} bytes, expected {self.width * self.height * 3}"
            )

    def array(self) -> np.ndarray:
        return np.frombuffer(self.pixels, dtype=np.uint8).reshape(self.height, self.width, 3)

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "FrameBuffer":
        arr = np.ascontiguousarray(arr, dtype=np.uint8)
        return cls(arr.shape[1], arr.shape[0], arr.tobytes())

    def pixel(self, x: int, y: int) -> tuple[int, int, int]:
        i = (y * self.width + x) * 3
        return tuple(self.pixels[i:i + 3])


# --------------------------------------------------------------------------
# text
# --------------------------------------------------------------------------

def format_episode_line(index: int, trace: EpisodeTrace) -> str:
    return (
        f"episode {index}: score={trace.score} "
        f"flight_time={trace.duration_s:.1f}s termination={trace.termination.value}"
    )


def summarize_text(traces: Sequence[EpisodeTrace]) -> str:
    """One line per episode, numbered from 1."""
    if not traces:
        raise ValueError("need at least one trace")
    return "\n".join(format_episode_line(i, t) for i, t in enumerate(traces, 1))


# --------------------------------------------------------------------------
# pixels
# --------------------------------------------------------------------------

def render_frame(state: GameState, cfg: GameConfig) -> FrameBuffer:
    """Draw background, pipes, ground band and the player box, in that order."""
    bg = cfg.dimensions.background
    w, h = bg.width, bg.height
    ground = cfg.playfield_height
    img = np.empty((h, w, 3), dtype=np.uint8)
    img[:, :] = bg.fill_color

    def fill(x0, y0, x1, y1, color):
        x0, x1 = max(0, int(x0)), min(w, int(x1))
        y0, y1 = max(0, int(y0)), min(ground, int(y1))
        if x0 < x1 and y0 < y1:
            img[y0:y1, x0:x1] = color

    for pipe in state.pipes:
        for rect in pipe_rects(pipe, cfg):
            fill(*rect, PIPE_COLOR)
    img[ground:, :] = GROUND_COLOR
    pw, ph = cfg.dimensions.player.width, cfg.dimensions.player.height
    fill(PLAYER_X, state.player_y, PLAYER_X + pw, state.player_y + ph, PLAYER_COLOR)
    return FrameBuffer.from_array(img)


def downscale(frame: FrameBuffer, factor: int) -> FrameBuffer:
    """Block-average by an integer factor; ragged edges are cropped."""
    if factor == 1:
        return frame
    if factor < 1:
        raise ValueError("downscale factor must be >= 1")
    a = frame.array()
    hh, ww = a.shape[0] // factor, a.shape[1] // factor
    a = a[:hh * factor, :ww * factor].reshape(hh, factor, ww, factor, 3).astype(np.uint32)
    return FrameBuffer.from_array((a.sum(axis=(1, 3)) + factor * factor // 2) // (factor * factor))


def composite_strip(trace: EpisodeTrace, cfg: GameConfig, scale: int = 1) -> FrameBuffer:
    """Tile the trace's 25 sampled frames into a 5x5 grid, row-major in time.

    ``scale`` shrinks each tile by an integer factor before tiling; the
    2 px separators are not scaled.
    """
    if not trace.frames:
        raise ValueError("trace has no frames (was it recorded with record=False?)")
    frames = list(trace.frames)
    if len(frames) != GRID * GRID:
        raise ValueError(f"expected {GRID * GRID} frames, got {len(frames)}")
    cache: dict[int, np.ndarray] = {}
    tiles = []
    for tick, state in frames:
        if tick not in cache:
            cache[tick] = downscale(render_frame(state, cfg), scale).array()
        tiles.append(cache[tick])
    th, tw = tiles[0].shape[:2]
    out = np.empty((GRID * th + (GRID - 1) * SEPARATOR_PX, GRID * tw + (GRID - 1) * SEPARATOR_PX, 3), np.uint8)
    out[:, :] = SEPARATOR_COLOR
    for i, tile in enumerate(tiles):
        r, c = divmod(i, GRID)
        y, x = r * (th + SEPARATOR_PX), c * (tw + SEPARATOR_PX)
        out[y:y + th, x:x + tw] = tile
    return FrameBuffer.from_array(out)


# --------------------------------------------------------------------------
# PNG
# --------------------------------------------------------------------------

def _chunk(kind: bytes, body: bytes) -> bytes:
    return struct.pack("!I", len(body)) + kind + body + struct.pack("!I", zlib.crc32(kind + body))


def encode_png(frame: FrameBuffer) -> bytes:
    """8-bit RGB, non-interlaced, filter type 0 on every row."""
    if frame.width <= 0 or frame.height <= 0:
        raise EncodeError("frame must have positive dimensions")
    if len(frame.pixels) != frame.width * frame.height * 3:
        raise EncodeError("pixel buffer length does not match dimensions")
    stride = frame.width * 3
    raw = b"".join(
        b"\x00" + frame.pixels[y * stride:(y + 1) * stride] for y in range(frame.height)
    )
    ihdr = struct.pack("!IIBBBBB", frame.width, frame.height, 8, 2, 0, 0, 0)
    return (
        PNG_SIGNATURE
        + _chunk(b"IHDR", ihdr)
        + _chunk(b"IDAT", zlib.compress(raw, 6))
        + _chunk(b"IEND", b"")
    )


def decode_png(data: bytes) -> FrameBuffer:
    """Decode PNGs written by :func:`encode_png` (8-bit RGB, any filter)."""
    if not data.startswith(PNG_SIGNATURE):
        raise ValueError("not a PNG")
    pos = len(PNG_SIGNATURE)
    idat = []
    width = height = None
    while pos < len(data):
        (length,) = struct.unpack("!I", data[pos:pos + 4])
        kind = data[pos + 4:pos + 8]
        body = data[pos + 8:pos + 8 + length]
        pos += 12 + length
        if kind == b"IHDR":
            width, height, depth, color, _, _, interlace = struct.unpack("!IIBBBBB", body)
            if (depth, color, interlace) != (8, 2, 0):
                raise ValueError("only 8-bit RGB non-interlaced PNGs are supported")
        elif kind == b"IDAT":
            idat.append(body)
        elif kind == b"IEND":
            break
    raw = zlib.decompress(b"".join(idat))
    stride = width * 3
    out = bytearray()
    prev = bytearray(stride)
    for y in range(height):
        ftype = raw[y * (stride + 1)]
        line = bytearray(raw[y * (stride + 1) + 1:(y + 1) * (stride + 1)])
        for i in range(stride):
            a = line[i - 3] if i >= 3 else 0
            b = prev[i]
            c = prev[i - 3] if i >= 3 else 0
            if ftype == 1:
                line[i] = (line[i] + a) & 0xFF
            elif ftype == 2:
                line[i] = (line[i] + b) & 0xFF
            elif ftype == 3:
                line[i] = (line[i] + (a + b) // 2) & 0xFF
            elif ftype == 4:
                pa, pb, pc = abs(b - c), abs(a - c), abs(a + b - 2 * c)
                pred = a if pa <= pb and pa <= pc else (b if pb <= pc else c)
                line[i] = (line[i] + pred) & 0xFF
        out += line
        prev = line
    return FrameBuffer(width, height, bytes(out))
