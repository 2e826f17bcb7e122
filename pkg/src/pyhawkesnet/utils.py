import math
import secrets

import numpy as np

from .errors import ConfigError

SEED_BITS = 64


def entropy_seed() -> int:
    """Fresh 64-bit seed for runs started without one."""
    return secrets.randbits(SEED_BITS)


def derive_seeds(base_seed: int, count: int) -> list[int]:
    """Independent, reproducible 64-bit child seeds of ``base_seed``."""
    if count < 0:
        raise ConfigError(f"Cannot derive {count} seeds.")
    children = np.random.SeedSequence(base_seed).spawn(count)
    seeds = [int(c.generate_state(1, dtype=np.uint64)[0]) for c in children]
    if len(set(seeds)) != len(seeds):
        raise ConfigError(f"Seed collision while deriving from {base_seed}.")
    return seeds


def spawn_generators(seed: int, count: int) -> list[np.random.Generator]:
    return [
        np.random.Generator(np.random.PCG64(child))
        for child in np.random.SeedSequence(seed).spawn(count)
    ]


def json_float(value):
    """Finite floats pass through, NaN/inf become None (strict JSON)."""
    if value is None:
        return None
    value = float(value)
    return value if math.isfinite(value) else None


def jsonable(obj):
    """Recursively convert numpy scalars/arrays and tuples for json.dump."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return json_float(obj)
    return obj
