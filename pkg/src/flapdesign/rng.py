"""SplitMix64: a tiny, fully specified generator.

The state is a plain integer so it can live inside an immutable game state
and replay identically on every platform.
"""

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15


def seed_state(seed: int) -> int:
    return seed & MASK64


def next_u64(state: int) -> tuple[int, int]:
    """Advance ``state``; return ``(new_state, output)``."""
    state = (state + GOLDEN_GAMMA) & MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return state, z ^ (z >> 31)


def uniform_int(state: int, lo: int, hi: int) -> tuple[int, int]:
    """Draw an integer in ``[lo, hi]``. Modulo bias is below 2**-50 for game-sized ranges."""
    state, z = next_u64(state)
    return state, lo + z % (hi - lo + 1)


def mix(*parts: int) -> int:
    """Hash a tuple of integers into one 64-bit value (used for seed derivation)."""
    state = 0
    for p in parts:
        state, z = next_u64((state ^ (p & MASK64)) & MASK64)
        state = z
    return state
