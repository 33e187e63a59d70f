"""Seeded random streams.

Every purpose (placement, traffic, loss, automaton, ...) gets its own
``random.Random`` derived from the master seed, so enabling one feature
never shifts the draws seen by another.
"""

import random

import numpy as np

STREAMS = ("placement", "traffic", "loss", "automaton", "control")


def derive_stream(seed: int, purpose: str) -> random.Random:
    """Independent stream for ``purpose``, a pure function of (seed, purpose)."""
    if purpose not in STREAMS:
        raise ValueError(f"unknown stream {purpose!r}; expected one of {STREAMS}")
    ss = np.random.SeedSequence([int(seed), STREAMS.index(purpose)])
    state = ss.generate_state(2, dtype=np.uint64)
    return random.Random(int(state[0]) << 64 | int(state[1]))


def split_streams(seed: int) -> dict[str, random.Random]:
    return {name: derive_stream(seed, name) for name in STREAMS}
