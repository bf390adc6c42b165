"""splitmix64 stream shared by both kernel backends.

Every source of randomness inside the hot kernels (bootstrap draws, per-node
predictor subsets, permutation shuffles) comes from this generator so that the
numba and numpy backends consume identical streams. Python-int arithmetic with
explicit 64-bit masking here; the numba backend re-implements the same
constants on uint64 where wrap-around is native.
"""

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
MIX_A = 0xBF58476D1CE4E5B9
MIX_B = 0x94D049BB133111EB


def mix64(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * MIX_A) & MASK64
    z = ((z ^ (z >> 27)) * MIX_B) & MASK64
    return z ^ (z >> 31)


def next_u64(state: int) -> tuple[int, int]:
    """Return (value, advanced state)."""
    state = (state + GOLDEN) & MASK64
    return mix64(state), state


def stream_seed(master: int, stream: int) -> int:
    """Initial state of sub-stream `stream` derived from a master seed."""
    return mix64((master + (stream + 1) * GOLDEN) & MASK64)
