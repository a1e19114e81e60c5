"""Counter-based random streams.

Seeding scheme: ``SeedSequence(master_seed, spawn_key=(stream, index, link))``
feeds a Philox generator.  ``stream`` separates training (0) from validation
(1, ...) draws, ``index`` is the sample number and ``link`` the channel id
within the sample.  Samples are therefore independent of draw order and of
the number of worker threads.
"""
from __future__ import annotations

import numpy as np

TRAIN_STREAM = 0
TEST_STREAM = 1


def link_generator(seed: int, stream: int, index: int, link: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(stream), int(index), int(link)))
    return np.random.Generator(np.random.Philox(ss))


def stream_generator(seed: int, stream: int, tag: int = 0) -> np.random.Generator:
    """Generator for auxiliary randomness (e.g. local-search restarts)."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(stream), 2**31 - 1, int(tag)))
    return np.random.Generator(np.random.Philox(ss))
