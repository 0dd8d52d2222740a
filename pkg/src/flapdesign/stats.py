"""Interquartile mean and percentile-bootstrap confidence intervals."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

DEFAULT_N_BOOT = 5000
DEFAULT_LEVEL = 0.95
# resamples are drawn in fixed-size blocks, each from its own derived
# stream, so the result does not depend on how blocks are scheduled
BOOT_BLOCK = 500


class EmptyInput(ValueError):
    pass


class MissingData(FileNotFoundError):
    pass


def iqm(samples: Sequence[float]) -> float:
    """Mean after dropping ``floor(n/4)`` values from each end."""
    x = np.sort(np.asarray(samples, dtype=float))
    n = x.size
    if n == 0:
        raise EmptyInput("iqm of an empty sample")
    k = n // 4
    return float(x[k:n - k].mean())


def _iqm_rows(resamples: np.ndarray) -> np.ndarray:
    n = resamples.shape[1]
    k = n // 4
    return np.sort(resamples, axis=1)[:, k:n - k].mean(axis=1)


def bootstrap_iqms(samples: Sequence[float], n_boot: int = DEFAULT_N_BOOT, seed: int = 0) -> np.ndarray:
    """IQM of each of ``n_boot`` resamples (with replacement, size n)."""
    x = np.asarray(samples, dtype=float)
    if x.size == 0:
        raise EmptyInput("bootstrap of an empty sample")
    out = np.empty(n_boot)
    for start in range(0, n_boot, BOOT_BLOCK):
        stop = min(start + BOOT_BLOCK, n_boot)
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(start // BOOT_BLOCK,)))
        idx = rng.integers(0, x.size, size=(stop - start, x.size))
        out[start:stop] = _iqm_rows(x[idx])
    return out


def bootstrap_ci(
    samples: Sequence[float],
    n_boot: int = DEFAULT_N_BOOT,
    level: float = DEFAULT_LEVEL,
    seed: int = 0,
) -> tuple[float, float]:
    """Percentile bootstrap interval for the IQM."""
    if not 0 < level < 1:
        raise ValueError("level must be in (0, 1)")
    boots = bootstrap_iqms(samples, n_boot, seed)
    alpha = (1 - level) / 2
    lo, hi = np.percentile(boots, [100 * alpha, 100 * (1 - alpha)])
    return float(lo), float(hi)


@dataclass(frozen=True)
class StatSummary:
    iqm: float
    ci_low: float
    ci_high: float
    n: int
    n_boot: int = DEFAULT_N_BOOT
    level: float = DEFAULT_LEVEL


def summarize(
    samples: Sequence[float],
    n_boot: int = DEFAULT_N_BOOT,
    level: float = DEFAULT_LEVEL,
    seed: int = 0,
) -> StatSummary:
    point = iqm(samples)
    lo, hi = bootstrap_ci(samples, n_boot, level, seed)
    # the plug-in estimate always lies inside the reported interval
    return StatSummary(point, min(lo, point), max(hi, point), len(samples), n_boot, level)


# --------------------------------------------------------------------------
# experiment aggregation
# --------------------------------------------------------------------------

def load_reeval_scores(trial_dir: Path) -> dict[int, list[int]]:
    out: dict[int, list[int]] = {}
    for it_dir in sorted(trial_dir.glob("iter_[0-9][0-9]")):
        f = it_dir / "reeval.jsonl"
        if not f.exists():
            continue
        idx = int(it_dir.name.split("_")[1])
        with f.open(encoding="utf-8") as fh:
            out[idx] = [json.loads(line)["score"] for line in fh if line.strip()]
    return out


def pool_scores(per_trial: Iterable[dict[int, list[int]]]) -> dict[int, list[int]]:
    pooled: dict[int, list[int]] = {}
    for scores in per_trial:
        for idx, values in scores.items():
            pooled.setdefault(idx, []).extend(values)
    return dict(sorted(pooled.items()))


def aggregate(
    exp_dir: Path | str,
    variant: str,
    scenario: str,
    n_boot: int = DEFAULT_N_BOOT,
    level: float = DEFAULT_LEVEL,
    seed: int = 0,
) -> list[tuple[int, StatSummary]]:
    """Per-iteration summary of re-evaluation scores pooled over trials."""
    cell = Path(exp_dir) / variant / scenario
    trials = sorted(cell.glob("trial_[0-9][0-9][0-9]"))
    pooled = pool_scores(load_reeval_scores(t) for t in trials)
    if not pooled:
        raise MissingData(f"no re-evaluation data under {cell}")
    return [(idx, summarize(scores, n_boot, level, seed)) for idx, scores in pooled.items()]


def to_csv(rows: list[tuple[int, StatSummary]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["iteration", "iqm", "ci_low", "ci_high", "n"])
    for idx, s in rows:
        w.writerow([idx, f"{s.iqm:.6g}", f"{s.ci_low:.6g}", f"{s.ci_high:.6g}", s.n])
    return buf.getvalue()


def summary_dict(s: StatSummary) -> dict:
    return asdict(s)
