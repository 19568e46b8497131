"""Deterministic random stream derivation.

Every random draw in the package comes from a stream keyed by the master
seed plus a purpose tag, so results never depend on call order across
trials or on how trials are split between workers.
"""

import numpy as np

DEPLOYMENT = 0
TRIAL = 1
EQUIVALENCE = 2
PATH = 3
AUX = 4


def stream(seed, *key):
    """Generator for the substream ``key`` of the master ``seed``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))


def as_generator(rng):
    """Accept an int seed, a SeedSequence or a Generator."""
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def trial_stream(seed, trial):
    return stream(seed, TRIAL, trial)


def fresh_seed():
    """Seed used when a config omits one; it gets recorded in the manifest."""
    return int(np.random.SeedSequence().entropy % (2**63))
