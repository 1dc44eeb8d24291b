"""Named sub-seeds derived from one global seed.

Each stage (split, init, per-iteration model draw, evaluation models) gets
its own stream, so changing how many draws one stage makes never shifts the
random numbers another stage sees.
"""

import hashlib

import numpy as np


def derive_seed(seed: int, *labels) -> int:
    key = ":".join([str(int(seed))] + [str(x) for x in labels]).encode()
    return int.from_bytes(hashlib.sha256(key).digest()[:8], "little")


def derive_rng(seed: int, *labels) -> np.random.Generator:
    return np.random.default_rng(derive_seed(seed, *labels))
