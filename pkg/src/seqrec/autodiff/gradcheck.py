from __future__ import annotations

import numpy as np

from .tensor import Tape, Tensor, backward


# central differences at eps=1e-5 carry roundoff near 1e-11 for O(1) losses; entries
# smaller than the floor (e.g. exactly-zero gradients) are compared absolutely
REL_FLOOR = 1e-6


def _rel_err(analytic, numeric):
    return np.abs(analytic - numeric) / np.maximum(REL_FLOOR, np.abs(analytic) + np.abs(numeric))


def grad_check(f, point, eps=1e-5):
    """Max relative error between reverse-mode and central-difference gradients.

    ``f`` maps a :class:`Tensor` to a scalar :class:`Tensor`; ``point`` is an
    array-like evaluation point.
    """
    x = Tensor(np.array(point, dtype=np.float64), requires_grad=True)
    with Tape() as tape:
        out = f(x)
    analytic = backward(tape, out, {"x": x})["x"]

    base = x.data
    numeric = np.zeros_like(base)
    for i in np.ndindex(base.shape):
        orig = base[i]
        base[i] = orig + eps
        hi = f(Tensor(base)).item()
        base[i] = orig - eps
        lo = f(Tensor(base)).item()
        base[i] = orig
        numeric[i] = (hi - lo) / (2 * eps)
    return float(_rel_err(analytic, numeric).max()) if base.size else 0.0


def grad_check_params(loss_fn, params, eps=1e-5):
    """Same check over every entry of a parameter dict.

    ``loss_fn()`` must rebuild the scalar loss from the current contents of
    ``params`` (deterministically: fix any dropout RNG inside it).
    Returns ``(max_error, worst_param_name)``.
    """
    with Tape() as tape:
        loss = loss_fn()
    analytic = backward(tape, loss, params)

    worst, worst_name = 0.0, None
    for name, p in params.items():
        data = p.data
        numeric = np.zeros_like(data)
        for i in np.ndindex(data.shape):
            orig = data[i]
            data[i] = orig + eps
            hi = loss_fn().item()
            data[i] = orig - eps
            lo = loss_fn().item()
            data[i] = orig
            numeric[i] = (hi - lo) / (2 * eps)
        if data.size:
            err = float(_rel_err(analytic[name], numeric).max())
            if err > worst:
                worst, worst_name = err, name
    return worst, worst_name
