"""Reproducible, splittable random streams.

Disorder realizations are driven by counter-based Philox generators keyed by
64-bit seeds derived from (master seed, atom count, realization index) via
SHA-256.  Derivation is stable across platforms and processes, so sweeps can
be scheduled in any order (or resumed) without perturbing the positions drawn
for any individual realization.
"""

import hashlib

import numpy as np


def derive_seed(master_seed, *parts):
    """Collapse (master_seed, *parts) into a 64-bit subseed."""
    text = ":".join(str(int(p)) for p in (master_seed, *parts))
    digest = hashlib.sha256(text.encode("ascii")).digest()
    return int.from_bytes(digest[:8], "little")


def make_rng(seed):
    """Counter-based generator for a single realization."""
    return np.random.Generator(np.random.Philox(key=np.uint64(seed)))
