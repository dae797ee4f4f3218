import numpy as np


def central_difference(fn, x, step=1e-5):
    """Central finite differences of scalar ``fn`` at every coordinate of ``x``."""
    x = np.array(x, dtype=np.float64)
    flat = x.reshape(-1)
    out = np.zeros_like(flat)
    for k in range(flat.size):
        orig = flat[k]
        flat[k] = orig + step
        hi = fn(x)
        flat[k] = orig - step
        lo = fn(x)
        flat[k] = orig
        out[k] = (hi - lo) / (2 * step)
    return out.reshape(x.shape)


def relative_error(analytic, numeric):
    return np.abs(analytic - numeric) / (np.abs(analytic) + 1e-8)
