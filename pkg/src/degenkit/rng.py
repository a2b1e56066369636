"""Deterministic random-number streams.

Every stochastic component draws from a counter-based Philox generator keyed
through ``SeedSequence``, so identical keys give bit-identical streams across
runs and platforms. Keys are tuples ``(stream id, user seed, *indices)``;
the stream ids below keep independent parts of an experiment (task batches,
weight init, evaluation batches, ...) on non-overlapping streams even when
they share the user-facing seed.
"""

from numpy.random import Generator, Philox, SeedSequence

STREAM_TASK = 0x01      # task trial generation
STREAM_INIT = 0x02      # network parameter initialization
STREAM_BATCH = 0x03     # per-(seed, epoch, step) training batch seeds
STREAM_EVAL = 0x04      # shared evaluation batch
STREAM_OOD = 0x05       # shared out-of-distribution batch
STREAM_PROBE = 0x06     # memory-demand probe (data splits, MLP inits)
STREAM_SOLVER = 0x07    # random restarts inside iterative solvers
STREAM_NTK = 0x08       # fixed probe batch for kernel metrics


def make_rng(*key):
    """Return a ``numpy.random.Generator`` bound to the given key tuple."""
    if not key:
        raise ValueError("rng key must contain at least one integer")
    words = [int(k) % 2**64 for k in key]
    return Generator(Philox(SeedSequence(words)))


def derive_seed(*key):
    """Collapse a key tuple into a single nonnegative int64 seed."""
    return int(make_rng(*key).integers(0, 2**63))
