"""Counter-based seeding so that draws do not depend on execution order."""

import numpy as np


def step_rng(seed, *keys):
    """Generator for the stream identified by ``seed`` and integer ``keys``."""
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys)))
