"""Named random streams derived from a single run seed."""
import zlib

import numpy as np

INJECTION = "injection"
INIT = "init"
SAMPLING = "sampling"
EIGEN = "eigen"
DATA = "data"


def stream(seed: int, name: str) -> np.random.Generator:
    """Independent generator for ``name``; changing one stream's consumption never shifts another."""
    return np.random.default_rng([int(seed), zlib.crc32(name.encode("utf-8"))])
