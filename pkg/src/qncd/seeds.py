"""Counter-based seed derivation.

One master seed plus integer tags derive every RNG stream in the package,
so generation order and parallelism never change the output. The mixing
function is splitmix64, fixed forever because derived seeds are recorded
in dataset files.
"""

_MASK = (1 << 64) - 1

# Stream tags. Values are part of the on-disk reproducibility contract.
TAG_TOPOLOGY = 1
TAG_NOISE = 2
TAG_SPLIT = 3
TAG_NM_TRANSITION_0 = 4
TAG_NM_TRANSITION_1 = 5
TAG_SHOTS = 6
TAG_SWEEP = 7
TAG_VS_TRANSITION = 8


def splitmix64(x: int) -> int:
    """One splitmix64 output step for a 64-bit state."""
    x = (x + 0x9E3779B97F4A7C15) & _MASK
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def derive_seed(master: int, *parts: int) -> int:
    """Derive a 64-bit stream seed from a master seed and integer parts.

    Sequentially absorbs each part into the splitmix64 state; distinct
    (master, parts) tuples give independent-looking seeds.
    """
    h = splitmix64(master & _MASK)
    for p in parts:
        h = splitmix64(h ^ (p & _MASK))
    return h
