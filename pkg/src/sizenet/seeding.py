import hashlib

import numpy as np


def derive_seed(seed: int, *labels) -> int:
    """Stable 64-bit sub-seed for ``(seed, *labels)``.

    Hash-based so that adding a new component never shifts the streams of
    existing ones, and results do not depend on generation order.
    """
    key = ":".join([str(int(seed)), *(str(x) for x in labels)]).encode()
    return int.from_bytes(hashlib.sha256(key).digest()[:8], "little")


def rng_for(seed: int, *labels) -> np.random.Generator:
    return np.random.default_rng(derive_seed(seed, *labels))
