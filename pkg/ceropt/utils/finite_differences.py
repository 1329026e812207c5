import numpy as np


def central_jacobian(f, x, step: float = 1e-6) -> np.ndarray:
    """
    Central-difference Jacobian of f at x, shape out.shape + x.shape.

    Each coordinate is perturbed by step * max(1, |x_j|).
    """
    x = np.asarray(x, dtype=float)
    flat = x.ravel()
    f0 = np.asarray(f(x), dtype=float)
    jac = np.zeros(f0.shape + (flat.size,))
    for j in range(flat.size):
        h = step * max(1.0, abs(flat[j]))
        plus = flat.copy()
        minus = flat.copy()
        plus[j] += h
        minus[j] -= h
        diff = np.asarray(f(plus.reshape(x.shape)), dtype=float) - np.asarray(f(minus.reshape(x.shape)), dtype=float)
        jac[..., j] = diff / (2.0 * h)
    return jac.reshape(f0.shape + x.shape)


def relative_error(actual, expected, floor: float = 1.0) -> float:
    """max |actual - expected| / max(floor, max |expected|)."""
    actual = np.asarray(actual, dtype=float)
    expected = np.asarray(expected, dtype=float)
    if actual.size == 0:
        return 0.0
    scale = max(floor, float(np.max(np.abs(expected))))
    return float(np.max(np.abs(actual - expected))) / scale
