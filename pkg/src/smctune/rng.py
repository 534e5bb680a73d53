"""Counter-based random streams keyed by (seed, step, sweep, stage).

Every random draw in a run comes from a Philox generator whose key is derived
from the master seed and the position of the draw in the algorithm, so the
output does not depend on how many workers run the experiment grid.
"""

import numpy as np

# stage tags
INIT = 0
PRETUNE = 1
MOVE = 2
RESAMPLE = 3
TUNE = 4
FINAL = 5


def stream(seed, *key):
    """Return an independent ``Generator`` for the given key path."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))
