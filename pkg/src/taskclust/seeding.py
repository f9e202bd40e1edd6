"""Deterministic RNG derivation.

All randomness in the pipeline flows from one master seed. Sub-streams are
derived from (master seed, labels...) so that results do not depend on
evaluation order or thread count.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _token_to_int(token) -> int:
    if isinstance(token, (int, np.integer)):
        return int(token) & 0xFFFFFFFFFFFFFFFF
    digest = hashlib.sha256(str(token).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def derive_rng(master_seed: int, *tokens) -> np.random.Generator:
    """Generator for the sub-stream named by ``tokens`` under ``master_seed``.

    The same (seed, tokens) always yields the same stream, independent of
    how many other streams were derived before it.
    """
    entropy = [_token_to_int(master_seed)] + [_token_to_int(t) for t in tokens]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))
