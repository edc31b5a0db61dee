"""Deterministic seeded random stream used for replay consistency checks.

The generator is the classic small LCG that replay shims install over the
page's Math.random: state advances as (9301 * state + 49297) mod 233280 and
each draw returns state / 233280. Seeding from the capture's epoch seconds
makes every replay of the same memento produce the same sequence.

Run ``python -m adreplay.seedrng SEED N`` to print the first N draws as a
golden-vector file (one decimal per line, newline-terminated). The browser
shim emits the same file from its own implementation; the two must match
byte for byte.
"""

from __future__ import annotations

import sys

MULTIPLIER = 9301
INCREMENT = 49297
MODULUS = 233280

_SCALE = 10 ** 12  # golden vectors carry 12 decimal places


class SeededRandom:
    """LCG stream over [0, 1) with integer state in [0, MODULUS)."""

    def __init__(self, seed: int):
        if seed < 0:
            raise ValueError("seed must be non-negative")
        self.state = seed % MODULUS

    def next_state(self) -> int:
        self.state = (MULTIPLIER * self.state + INCREMENT) % MODULUS
        return self.state

    def random(self) -> float:
        return self.next_state() / MODULUS

    def fill_uint32(self, count: int) -> list[int]:
        """Crypto-style fill: floor(2**32 * draw) per element."""
        return [int(4294967296 * self.random()) for _ in range(count)]


def golden_vector_lines(seed: int, n: int) -> list[str]:
    """First n draws rendered exactly to 12 decimal places.

    Rendering is integer-only (scale, divide, round half up) so any other
    implementation of the same arithmetic produces identical bytes.
    """
    rng = SeededRandom(seed)
    lines = []
    for _ in range(n):
        state = rng.next_state()
        q, r = divmod(state * _SCALE, MODULUS)
        if 2 * r >= MODULUS:
            q += 1
        lines.append("0.%012d" % q)
    return lines


def write_golden_vector(seed: int, n: int, path: str) -> None:
    with open(path, "w", newline="\n") as fh:
        for line in golden_vector_lines(seed, n):
            fh.write(line + "\n")


def main(argv: list[str] | None = None) -> int:
    args = sys.argv[1:] if argv is None else argv
    if len(args) != 2:
        print("usage: python -m adreplay.seedrng SEED N", file=sys.stderr)
        return 2
    seed, n = int(args[0]), int(args[1])
    out = sys.stdout
    for line in golden_vector_lines(seed, n):
        out.write(line + "\n")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
