"""Central finite-difference oracle, run in float64."""
import numpy as np

from kpgan.autograd import Tensor, grad, precision


def numeric_grad(f, arrays, index, h=1e-3):
    """d f(*arrays) / d arrays[index] by central differences. ``f`` returns a float."""
    base = [np.array(a, dtype=np.float64) for a in arrays]
    target = base[index]
    out = np.zeros_like(target)
    it = np.nditer(target, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        orig = target[i]
        target[i] = orig + h
        fp = f(*base)
        target[i] = orig - h
        fm = f(*base)
        target[i] = orig
        out[i] = (fp - fm) / (2 * h)
    return out


def rel_err(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / denom)


def check(build, arrays, h=1e-3):
    """Max relative error between autograd and finite differences over all inputs.

    ``build(*tensors)`` must return a scalar Tensor.
    """
    worst = 0.0
    with precision(np.float64):
        tensors = [Tensor(a, requires_grad=True) for a in arrays]
        out = build(*tensors)
        analytic = grad(out, tensors)

        def scalar(*raw):
            return float(build(*[Tensor(r) for r in raw]).data.reshape(-1)[0])

        for i in range(len(arrays)):
            num = numeric_grad(scalar, arrays, i, h)
            worst = max(worst, rel_err(analytic[i].data, num))
    return worst
