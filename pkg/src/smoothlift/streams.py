"""Counter-based random streams.

Every random quantity in an experiment is drawn from the stream keyed by
``(seed, *keys)``, typically ``(seed, experiment_code, trial)``.  Streams for
different keys are independent, so trials can run in any order or in
parallel and still reproduce the same values.
"""

import numpy as np


def trial_stream(seed: int, *keys: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(keys)))
