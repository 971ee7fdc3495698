"""Exact rational values and deterministic seed derivation.

All processing times, thresholds and parameters are `fractions.Fraction`;
no floating-point comparison is ever used in an allocation decision.
Rationals are serialized as "p/q" strings in base 10.
"""

import hashlib
import random
from fractions import Fraction

from .errors import ParseError

#: default bisection tolerance: 2^-32
DEFAULT_TOL = Fraction(1, 2**32)


def rational(x) -> Fraction:
    """Coerce ints, "p/q" strings and Fractions to Fraction."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, str):
        return parse_rational(x)
    raise ParseError(f"cannot interpret {x!r} as a rational")


def parse_rational(s: str) -> Fraction:
    """Parse "p/q" or "p" (base-10 integers, q > 0)."""
    text = s.strip()
    num, _, den = text.partition("/")
    try:
        p = int(num)
        q = int(den) if den else 1
    except ValueError:
        raise ParseError(f"malformed rational {s!r}") from None
    if q <= 0:
        raise ParseError(f"rational {s!r} has non-positive denominator")
    return Fraction(p, q)


def format_rational(x: Fraction) -> str:
    """Canonical "p/q" string; integers render without the "/1"."""
    x = Fraction(x)
    if x.denominator == 1:
        return str(x.numerator)
    return f"{x.numerator}/{x.denominator}"


def derive_seed(seed: int, *labels) -> int:
    """Derive a 64-bit child seed from (seed, labels).

    Uses sha256 so derivation is stable across processes and worker
    counts (Python's str hashing is randomized per process).
    """
    key = repr((int(seed),) + tuple(labels)).encode()
    return int.from_bytes(hashlib.sha256(key).digest()[:8], "big")


def stream(seed: int, *labels) -> random.Random:
    """Independent deterministic RNG stream for (seed, labels)."""
    return random.Random(derive_seed(seed, *labels))


def random_dyadic(rng: random.Random, cap: Fraction, denom_log: int = 12) -> Fraction:
    """Uniform dyadic rational k/2^denom_log in [0, cap]."""
    steps = int(cap * 2**denom_log)
    return Fraction(rng.randint(0, steps), 2**denom_log)


def sqrt_lower_bound(n: int, precision_bits: int = 32) -> Fraction:
    """Exact rational lower bound on sqrt(n); tight when n is a perfect square."""
    if n < 0:
        raise ValueError("negative radicand")
    import math

    r = math.isqrt(n)
    if r * r == n:
        return Fraction(r)
    scaled = math.isqrt(n << (2 * precision_bits))
    return Fraction(scaled, 1 << precision_bits)
