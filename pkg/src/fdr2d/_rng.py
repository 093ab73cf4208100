"""Deterministic random-stream derivation.

Every stochastic component (resampling draws, simulation replications)
pulls its generator from a root seed plus a key path, so streams are
independent of each other and of execution order.
"""

import zlib

import numpy as np


def _normalize_key(key):
    if isinstance(key, (int, np.integer)):
        if key < 0:
            raise ValueError("substream keys must be non-negative")
        return int(key)
    # crc32 is stable across platforms and runs, unlike hash()
    return zlib.crc32(str(key).encode("utf-8"))


def substream(seed, *keys):
    """Generator for the stream identified by ``seed`` and ``keys``.

    Keys may be non-negative integers or strings. Derivation is
    counter-based (spawn keys), so ``substream(s, 3)`` is the same
    stream no matter how many other substreams were created first.
    """
    spawn_key = tuple(_normalize_key(k) for k in keys)
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=spawn_key)
    return np.random.default_rng(ss)


def substream_seed(seed, *keys):
    """Integer seed for the stream identified by ``seed`` and ``keys``.

    Use when a component needs to hand a plain seed onward (for example
    a per-replication seed that later spawns its own sampler streams).
    """
    spawn_key = tuple(_normalize_key(k) for k in keys)
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=spawn_key)
    return int(ss.generate_state(2, dtype=np.uint32).view(np.uint64)[0])
