"""Shared test oracles: central finite differences and brute-force statistics."""

import numpy as np

from uqreg import losses, network


def numerical_gradients(value_fn, params, step=1e-5):
    """Central-difference gradient of value_fn() w.r.t. every parameter entry.

    value_fn must be a pure function of the current parameter values (any
    randomness inside must be replayed identically per call).
    """
    grads = []
    for arr in params.arrays():
        g = np.zeros_like(arr)
        it = np.nditer(arr, flags=["multi_index"])
        while not it.finished:
            idx = it.multi_index
            old = arr[idx]
            arr[idx] = old + step
            up = value_fn()
            arr[idx] = old - step
            down = value_fn()
            arr[idx] = old
            g[idx] = (up - down) / (2.0 * step)
            it.iternext()
        grads.append(g)
    return grads


def gradient_relative_error(analytic, numeric):
    """Norm-scaled disagreement over the concatenated gradient vector."""
    a = np.concatenate([g.ravel() for g in analytic])
    n = np.concatenate([g.ravel() for g in numeric])
    denom = max(np.linalg.norm(a) + np.linalg.norm(n), 1e-12)
    return np.linalg.norm(a - n) / denom


def composed_loss_value(params, x, mu, sigma, loss_kind, mode=network.MODE_EVAL,
                        mask_seed=None):
    """Full network -> loss composition, with dropout masks replayed by seed."""
    rng = np.random.default_rng(mask_seed) if mask_seed is not None else None
    prediction, _ = network.forward(params, x, mode=mode, rng=rng)
    return losses.batch_loss(loss_kind, prediction, mu, sigma).value


def composed_loss_gradients(params, x, mu, sigma, loss_kind,
                            mode=network.MODE_EVAL, mask_seed=None):
    rng = np.random.default_rng(mask_seed) if mask_seed is not None else None
    prediction, tape = network.forward(params, x, mode=mode, rng=rng)
    batch = losses.batch_loss(loss_kind, prediction, mu, sigma)
    return network.backward(params, tape, batch.d_mu_logit, batch.d_sigma_logit)


def two_pass_mean_variance(samples):
    """Textbook two-pass mean and n-1 variance, via plain Python loops."""
    n = len(samples)
    total = 0.0
    for v in samples:
        total += float(v)
    mean = total / n
    acc = 0.0
    for v in samples:
        acc += (float(v) - mean) ** 2
    return mean, acc / (n - 1)
