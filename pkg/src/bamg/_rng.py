"""Counter-based random streams derived from one run seed."""
import numpy as np


def stream(seed, *key):
    """Independent generator for ``(seed, *key)``.

    Keys are small non-negative integers naming the consumer (module, level,
    round, ...), so the draw a consumer sees never depends on call order.
    """
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def uniform_centered(rng, shape):
    """Uniform entries in (-0.5, 0.5)."""
    return rng.random(shape) - 0.5
