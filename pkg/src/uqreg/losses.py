"""Training objectives on (mu_hat, sigma_hat) and their logit-space gradients.

Three spread-aware objectives plus the plain squared error used by the
sampling-based estimators:

- mse:            (mu_hat - mu)^2 + (sigma_hat^2 - sigma^2)^2
- kld:            0.5*((mu_hat - mu)/sigma_hat)^2 - log sigma_hat
                  + 0.5*sigma_hat^2/sigma^2
- nll:            0.5*((mu_hat - mu)/sigma_hat)^2 + 0.5*log sigma_hat
- mse_mean_only:  (mu_hat - mu)^2

The kld and nll forms are kept exactly as written above; `textbook=True`
switches to the closed-form Gaussian KL divergence and the standard
Gaussian NLL (log sigma_hat coefficient 1), which differ from the defaults.

Gradients are reported with respect to the head logits: the mean logit u
with mu_hat = tanh(u), and the SD logit z with sigma_hat = (1 + e^z)^(-1).
The chain factors are d mu_hat/du = 1 - mu_hat^2 and
d sigma_hat/dz = -sigma_hat*(1 - sigma_hat). log sigma_hat enters through
neg_softplus(z), so callers should pass the forward pass's log_sigma_hat
rather than re-deriving it from sigma_hat.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .network import HEAD_MEAN_ONLY, HEAD_MEAN_VARIANCE, GaussianPrediction

# Empirical sigma appears in a denominator only in the kld objective;
# unanimous-rater stimuli (sigma = 0) are floored there.
KLD_SIGMA_FLOOR = 1e-3

LOSS_MSE_MEAN_ONLY = "mse_mean_only"
LOSS_MSE = "mse"
LOSS_KLD = "kld"
LOSS_NLL = "nll"
LOSS_KINDS = (LOSS_MSE_MEAN_ONLY, LOSS_MSE, LOSS_KLD, LOSS_NLL)


def head_mode_for(loss_kind: str) -> str:
    if loss_kind not in LOSS_KINDS:
        raise ValueError(f"loss_kind must be one of {LOSS_KINDS}, got {loss_kind!r}")
    return HEAD_MEAN_ONLY if loss_kind == LOSS_MSE_MEAN_ONLY else HEAD_MEAN_VARIANCE


def uses_empirical_sigma(loss_kind: str) -> bool:
    """Whether the objective consumes the ground-truth spread."""
    return loss_kind in (LOSS_MSE, LOSS_KLD)


@dataclass(frozen=True)
class LossSample:
    """Loss value plus gradients at the head logits.

    d_sigma_logit is None for the mean-only objective. Fields are scalars
    for scalar inputs and arrays for batched inputs.
    """

    value: np.ndarray
    d_mu_logit: np.ndarray
    d_sigma_logit: np.ndarray | None = None


def _log_sigma(sigma_hat, log_sigma_hat):
    return np.log(sigma_hat) if log_sigma_hat is None else np.asarray(log_sigma_hat)


def mse_mean_only_loss(mu_hat, mu) -> LossSample:
    mu_hat, mu = np.asarray(mu_hat), np.asarray(mu)
    err = mu_hat - mu
    return LossSample(value=err**2, d_mu_logit=2.0 * err * (1.0 - mu_hat**2))


def mse_loss(mu_hat, sigma_hat, mu, sigma) -> LossSample:
    """Squared error on the mean plus squared error on the variance."""
    mu_hat, sigma_hat = np.asarray(mu_hat), np.asarray(sigma_hat)
    mu, sigma = np.asarray(mu), np.asarray(sigma)
    err = mu_hat - mu
    var_err = sigma_hat**2 - sigma**2
    value = err**2 + var_err**2
    d_mu_logit = 2.0 * err * (1.0 - mu_hat**2)
    # d/d sigma_hat = 4*sigma_hat*var_err, chained through the SD head.
    d_sigma_logit = -4.0 * sigma_hat**2 * (1.0 - sigma_hat) * var_err
    return LossSample(value, d_mu_logit, d_sigma_logit)


def kld_loss(mu_hat, sigma_hat, mu, sigma, log_sigma_hat=None,
             textbook: bool = False) -> LossSample:
    """Divergence between predicted and empirical rating distributions.

    The default is the asymmetric form quoted in the module docstring, with
    the quadratic term scaled by sigma_hat^(-2); sigma is floored at
    KLD_SIGMA_FLOOR. textbook=True uses the closed-form Gaussian KL
    divergence instead.
    """
    mu_hat, sigma_hat = np.asarray(mu_hat), np.asarray(sigma_hat)
    mu = np.asarray(mu)
    sig = np.maximum(np.asarray(sigma, dtype=np.float64), KLD_SIGMA_FLOOR)
    err = mu_hat - mu
    log_sig_hat = _log_sigma(sigma_hat, log_sigma_hat)
    t_mu = 1.0 - mu_hat**2
    if textbook:
        value = (np.log(sig) - log_sig_hat
                 + (sigma_hat**2 + err**2) / (2.0 * sig**2) - 0.5)
        d_mu_logit = err / sig**2 * t_mu
        d_sigma_logit = (1.0 - sigma_hat) * (1.0 - sigma_hat**2 / sig**2)
    else:
        q2 = (err / sigma_hat) ** 2
        value = 0.5 * q2 - log_sig_hat + 0.5 * sigma_hat**2 / sig**2
        d_mu_logit = err / sigma_hat**2 * t_mu
        d_sigma_logit = (1.0 - sigma_hat) * (q2 + 1.0 - sigma_hat**2 / sig**2)
    return LossSample(value, d_mu_logit, d_sigma_logit)


def nll_loss(mu_hat, sigma_hat, mu, log_sigma_hat=None,
             textbook: bool = False) -> LossSample:
    """Gaussian likelihood objective; consumes no empirical sigma.

    The default carries the 0.5 coefficient on log sigma_hat quoted in the
    module docstring; textbook=True uses the standard coefficient 1. The
    value may be negative.
    """
    mu_hat, sigma_hat = np.asarray(mu_hat), np.asarray(sigma_hat)
    mu = np.asarray(mu)
    err = mu_hat - mu
    q2 = (err / sigma_hat) ** 2
    log_sig_hat = _log_sigma(sigma_hat, log_sigma_hat)
    log_coeff = 1.0 if textbook else 0.5
    value = 0.5 * q2 + log_coeff * log_sig_hat
    d_mu_logit = err / sigma_hat**2 * (1.0 - mu_hat**2)
    d_sigma_logit = (1.0 - sigma_hat) * (q2 - log_coeff)
    return LossSample(value, d_mu_logit, d_sigma_logit)


def sample_loss(loss_kind: str, prediction: GaussianPrediction, mu, sigma=None,
                textbook: bool = False) -> LossSample:
    """Per-sample loss for one prediction/target pair (or batch thereof)."""
    if loss_kind not in LOSS_KINDS:
        raise ValueError(f"loss_kind must be one of {LOSS_KINDS}, got {loss_kind!r}")
    if loss_kind == LOSS_MSE_MEAN_ONLY:
        return mse_mean_only_loss(prediction.mu_hat, mu)
    if prediction.sigma_hat is None:
        raise ValueError(f"loss {loss_kind!r} needs a mean_variance head")
    if loss_kind == LOSS_NLL:
        return nll_loss(prediction.mu_hat, prediction.sigma_hat, mu,
                        log_sigma_hat=prediction.log_sigma_hat, textbook=textbook)
    if sigma is None:
        raise ValueError(f"loss {loss_kind!r} needs the empirical sigma")
    if loss_kind == LOSS_MSE:
        return mse_loss(prediction.mu_hat, prediction.sigma_hat, mu, sigma)
    return kld_loss(prediction.mu_hat, prediction.sigma_hat, mu, sigma,
                    log_sigma_hat=prediction.log_sigma_hat, textbook=textbook)


@dataclass(frozen=True)
class BatchLoss:
    """Mean loss over a batch, with upstream gradients pre-divided by n.

    Feeding d_mu_logit / d_sigma_logit straight into network.backward yields
    the gradient of the mean loss.
    """

    value: float
    d_mu_logit: np.ndarray
    d_sigma_logit: np.ndarray | None = None


def batch_loss(loss_kind: str, prediction: GaussianPrediction, mu, sigma=None,
               textbook: bool = False) -> BatchLoss:
    """Arithmetic mean of sample contributions; gradients averaged identically."""
    mu = np.atleast_1d(np.asarray(mu, dtype=np.float64))
    n = mu.shape[0]
    if n == 0:
        raise ValueError("batch_loss needs a nonempty batch")
    sample = sample_loss(loss_kind, prediction, mu, sigma, textbook=textbook)
    d_sigma = None
    if sample.d_sigma_logit is not None:
        d_sigma = np.broadcast_to(sample.d_sigma_logit, (n,)) / n
    return BatchLoss(
        value=float(np.mean(sample.value)),
        d_mu_logit=np.broadcast_to(sample.d_mu_logit, (n,)) / n,
        d_sigma_logit=d_sigma,
    )
