"""Central finite-difference gradient checking shared by the nn and ctc
test suites. All checks run in float64."""

import numpy as np


def numerical_grad(f, x, h=1e-5):
    """Central-difference gradient of scalar f at array x."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f(x)
        flat[i] = orig - h
        fm = f(x)
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * h)
    return grad


def rel_error(analytic, numeric):
    """max |a - n| / max(1e-8, |a| + |n|), elementwise."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(1e-8, np.abs(a) + np.abs(n))
    return float(np.max(np.abs(a - n) / denom))


def check_layer_grads(layer, x, rng, h=1e-5, train=True):
    """Check dx and every parameter gradient of a forward/backward layer
    against central differences of a random linear functional of the output.

    Returns the worst relative error observed.
    """
    y = layer.forward(x, train=train)
    weights = rng.normal(size=y.shape)

    def loss_from_x(x_val):
        return float(np.sum(layer.forward(x_val, train=train) * weights))

    layer.forward(x, train=train)
    dx = layer.backward(weights.copy())
    worst = rel_error(dx, numerical_grad(loss_from_x, x.copy(), h))

    for name, p in layer.params.items():
        analytic = layer.grads[name]

        def loss_from_p(p_val, _name=name, _p=p):
            saved = _p.copy()
            _p[...] = p_val
            out = float(np.sum(layer.forward(x, train=train) * weights))
            _p[...] = saved
            return out

        num = numerical_grad(loss_from_p, p.copy(), h)
        worst = max(worst, rel_error(analytic, num))
    return worst
