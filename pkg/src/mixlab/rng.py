"""Deterministic stream derivation and worker-stable Monte Carlo chunking.

Seeding contract: every stochastic task owns a stream derived from
(master seed, stable task label). The label is hashed with blake2b to a
64-bit integer and fed together with the master seed into a SeedSequence,
so streams are independent, reproducible, and indifferent to the order in
which tasks run. Monte Carlo loops draw in fixed-size chunks whose
substreams are labeled by chunk index; reductions run in chunk order, so
the worker count never changes results.
"""

import hashlib

import numpy as np

CHUNK = 1 << 15


def label_hash(label):
    """Stable 64-bit hash of a text label."""
    digest = hashlib.blake2b(label.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "big")


def stream(seed, label):
    """Generator for the task named ``label`` under a 64-bit master seed."""
    ss = np.random.SeedSequence(entropy=(int(seed), label_hash(label)))
    return np.random.Generator(np.random.PCG64(ss))


def chunk_sizes(total, chunk=CHUNK):
    """Split ``total`` draws into fixed chunks; the layout is budget-only."""
    sizes = []
    remaining = int(total)
    while remaining > 0:
        take = min(chunk, remaining)
        sizes.append(take)
        remaining -= take
    return sizes


def chunk_stream(seed, label, index):
    """Substream for chunk ``index`` of the task named ``label``."""
    return stream(seed, f"{label}/chunk{index}")
