"""Named random sub-streams derived from one master seed."""

import zlib

import numpy as np

STREAMS = ("dataset", "detector", "training", "inference")


def stream_key(stream: str) -> int:
    return zlib.crc32(stream.encode("utf-8"))


def derive_seed(master: int, stream: str, *keys: int) -> int:
    """Return a 32-bit seed for (master, stream, keys...)."""
    seq = np.random.SeedSequence([int(master), stream_key(stream), *[int(k) for k in keys]])
    return int(seq.generate_state(1)[0])


def derive_rng(master: int, stream: str, *keys: int) -> np.random.Generator:
    """Independent generator for one task; identical across serial and parallel runs."""
    seq = np.random.SeedSequence([int(master), stream_key(stream), *[int(k) for k in keys]])
    return np.random.default_rng(seq)
