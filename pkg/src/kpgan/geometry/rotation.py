import numpy as np


def random_rotation(seed) -> np.ndarray:
    """Uniformly distributed proper rotation (unit quaternion from a 4-D Gaussian)."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    q = rng.normal(size=4)
    w, x, y, z = q / np.linalg.norm(q)
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
        [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
        [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
    ])


def rotate(points, rotation) -> np.ndarray:
    return np.asarray(points, dtype=np.float64) @ np.asarray(rotation).T
