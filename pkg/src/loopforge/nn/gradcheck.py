"""Finite-difference verification of analytic gradients.

``loss_fn`` must rebuild its graph from the live parameter tensors on every
call and be fully deterministic (freeze any sampling noise before checking).
"""

import numpy as np


def gradcheck(loss_fn, store, probes=200, h=1e-5, seed=0):
    """Max relative error between analytic and central-difference gradients.

    Probes ``probes`` randomly selected scalar parameters; the relative
    error denominator is max(|analytic|, |numeric|, 1e-12).
    """
    store.zero_grad()
    loss = loss_fn()
    loss.backward()
    analytic = {
        name: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data))
        for name, p in store.items()
    }

    flat = []
    for name, p in store.items():
        for idx in range(p.data.size):
            flat.append((name, idx))
    rng = np.random.default_rng(seed)
    count = min(probes, len(flat))
    chosen = rng.choice(len(flat), size=count, replace=False)

    worst = 0.0
    for probe in chosen:
        name, idx = flat[int(probe)]
        p = store[name]
        original = p.data.flat[idx]
        p.data.flat[idx] = original + h
        f_plus = float(loss_fn().data)
        p.data.flat[idx] = original - h
        f_minus = float(loss_fn().data)
        p.data.flat[idx] = original

        numeric = (f_plus - f_minus) / (2.0 * h)
        exact = analytic[name].flat[idx]
        err = abs(exact - numeric) / max(abs(exact), abs(numeric), 1e-12)
        worst = max(worst, err)
    return worst
