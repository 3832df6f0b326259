"""Fully connected prediction network with hand-derived reverse-mode gradients.

Architecture: input -> [linear -> ELU -> dropout] per hidden layer -> linear
head. The first head output is a mean logit squashed by tanh into (-1, 1);
in mean-variance mode a second output z parameterizes the predicted spread
through sigma_hat = (1 + e^z)^(-1), whose logarithm is the negative softplus
-log(1 + e^z). Losses consume log(sigma_hat) in that form, so very certain
predictions never round sigma_hat to zero on the log path.

Dropout uses the inverted convention: kept activations are divided by the
keep probability at mask time, so eval-mode forward applies no rescaling.
"""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

HEAD_MEAN_ONLY = "mean_only"
HEAD_MEAN_VARIANCE = "mean_variance"
HEAD_MODES = (HEAD_MEAN_ONLY, HEAD_MEAN_VARIANCE)

MODE_TRAIN = "train"
MODE_EVAL = "eval"
MODE_MC_DROPOUT = "mc_dropout"
FORWARD_MODES = (MODE_TRAIN, MODE_EVAL, MODE_MC_DROPOUT)

CHECKPOINT_FORMAT_VERSION = 1

# The head layer starts with deliberately small weights so that the initial
# predictions sit near (mu_hat ~ 0, sigma_hat ~ 0.5). A full-width head init
# scatters initial SD logits far enough to saturate sigma_hat, and the
# 1/sigma_hat^2 loss terms then destabilize the first epochs.
HEAD_INIT_SCALE = 0.1


def elu(z):
    """ELU with alpha=1: z for z > 0, exp(z) - 1 otherwise."""
    z = np.asarray(z, dtype=np.float64)
    return np.where(z > 0, z, np.expm1(np.minimum(z, 0.0)))


def elu_grad(z):
    z = np.asarray(z, dtype=np.float64)
    return np.where(z > 0, 1.0, np.exp(np.minimum(z, 0.0)))


def neg_softplus(z):
    """-log(1 + e^z), overflow-safe; equals log(sigma_hat) for SD logit z."""
    z = np.asarray(z, dtype=np.float64)
    return -(np.maximum(z, 0.0) + np.log1p(np.exp(-np.abs(z))))


@dataclass
class NetworkParameters:
    """Weights and biases of the fully connected net, plus head configuration.

    weights[i] has shape (fan_in, fan_out); biases[i] has shape (fan_out,).
    The last layer is the head: 1 output in mean_only mode, 2 in
    mean_variance mode.
    """

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    head_mode: str
    dropout_rate: float = 0.5

    def __post_init__(self) -> None:
        if self.head_mode not in HEAD_MODES:
            raise ValueError(f"head_mode must be one of {HEAD_MODES}")
        if not (0.0 <= self.dropout_rate < 1.0):
            raise ValueError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ValueError("weights and biases must be parallel, nonempty lists")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape[1] != b.shape[0]:
                raise ValueError(f"layer {i}: weight/bias shape mismatch")
            if i > 0 and self.weights[i - 1].shape[1] != w.shape[0]:
                raise ValueError(f"layer {i}: does not chain from layer {i - 1}")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ValueError(f"layer {i}: non-finite parameters")
        if self.weights[-1].shape[1] != self.n_outputs:
            raise ValueError(
                f"head layer must have {self.n_outputs} outputs for {self.head_mode}"
            )

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def hidden_sizes(self) -> list[int]:
        return [w.shape[1] for w in self.weights[:-1]]

    @property
    def n_outputs(self) -> int:
        return 1 if self.head_mode == HEAD_MEAN_ONLY else 2

    @property
    def n_hidden_layers(self) -> int:
        return len(self.weights) - 1

    def parameter_count(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def arrays(self) -> list[np.ndarray]:
        """Flat [W0, b0, W1, b1, ...] view used by the optimizer."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def copy(self) -> "NetworkParameters":
        return NetworkParameters(
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
            head_mode=self.head_mode,
            dropout_rate=self.dropout_rate,
        )


@dataclass
class Gradients:
    """Parameter gradients, parallel in structure to NetworkParameters."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def arrays(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out


@dataclass(frozen=True)
class DropoutMask:
    """Binary keep-mask for one hidden layer, drawn from an explicit stream."""

    mask: np.ndarray
    keep_probability: float


@dataclass(frozen=True)
class GaussianPrediction:
    """Model output interpreted as a Gaussian over normalized ratings.

    mu_hat = tanh(mean logit); sigma_hat = (1 + e^z)^(-1) of the SD logit z,
    with log_sigma_hat carried separately as neg_softplus(z). sigma_hat and
    log_sigma_hat are None in mean_only mode. Fields are scalars for a
    single input and 1-D arrays for a batch.
    """

    mu_hat: np.ndarray
    sigma_hat: np.ndarray | None = None
    log_sigma_hat: np.ndarray | None = None


@dataclass
class ForwardTape:
    """Intermediate values recorded by forward, consumed by backward."""

    x: np.ndarray                      # (n, input_dim)
    pre_activations: list[np.ndarray]  # z_l per hidden layer, (n, h_l)
    activations: list[np.ndarray]      # post-dropout a_l per hidden layer
    masks: list[DropoutMask] | None    # None in eval mode or when rate == 0
    shapes: tuple                      # parameter shapes, for mismatch checks


def init_parameters(input_dim: int, hidden_sizes, head_mode: str, seed: int,
                    dropout_rate: float = 0.5) -> NetworkParameters:
    """Zero-mean uniform init with fan-in scaling; biases zero.

    Hidden layers use bound sqrt(6/fan_in); the head layer shrinks that
    bound by HEAD_INIT_SCALE (see the constant's note). Deterministic per
    seed.
    """
    if input_dim <= 0 or any(h <= 0 for h in hidden_sizes):
        raise ValueError("layer dimensions must be positive")
    n_out = 1 if head_mode == HEAD_MEAN_ONLY else 2
    dims = [input_dim, *hidden_sizes, n_out]
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for i, (fan_in, fan_out) in enumerate(zip(dims[:-1], dims[1:])):
        bound = np.sqrt(6.0 / fan_in)
        if i == len(dims) - 2:
            bound *= HEAD_INIT_SCALE
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return NetworkParameters(weights, biases, head_mode, dropout_rate)


def forward(params: NetworkParameters, x, mode: str = MODE_EVAL,
            rng: np.random.Generator | None = None):
    """Run the network on a vector or a batch of row vectors.

    In train and mc_dropout modes a fresh mask is drawn per hidden layer
    with keep probability 1 - dropout_rate, and kept activations are divided
    by the keep probability. Eval mode applies no mask and no scaling.

    Returns (GaussianPrediction, ForwardTape).
    """
    if mode not in FORWARD_MODES:
        raise ValueError(f"mode must be one of {FORWARD_MODES}")
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.shape[1] != params.input_dim:
        raise ValueError(
            f"input dim {x.shape[1]} does not match network input {params.input_dim}"
        )
    use_mask = mode in (MODE_TRAIN, MODE_MC_DROPOUT) and params.dropout_rate > 0.0
    if use_mask and rng is None:
        raise ValueError(f"mode {mode!r} with dropout_rate > 0 requires an rng")
    keep = 1.0 - params.dropout_rate

    a = x
    pre_activations, activations, masks = [], [], [] if use_mask else None
    for w, b in zip(params.weights[:-1], params.biases[:-1]):
        z = a @ w + b
        h = elu(z)
        if use_mask:
            m = (rng.random(h.shape) < keep).astype(np.float64)
            masks.append(DropoutMask(m, keep))
            a = h * m / keep
        else:
            a = h
        pre_activations.append(z)
        activations.append(a)

    out = a @ params.weights[-1] + params.biases[-1]
    mu_hat = np.tanh(out[:, 0])
    if params.head_mode == HEAD_MEAN_VARIANCE:
        z_sd = out[:, 1]
        log_sigma_hat = neg_softplus(z_sd)
        sigma_hat = np.exp(log_sigma_hat)
    else:
        sigma_hat = log_sigma_hat = None

    if single:
        mu_hat = float(mu_hat[0])
        if sigma_hat is not None:
            sigma_hat = float(sigma_hat[0])
            log_sigma_hat = float(log_sigma_hat[0])
    tape = ForwardTape(
        x=x,
        pre_activations=pre_activations,
        activations=activations,
        masks=masks,
        shapes=tuple(w.shape for w in params.weights),
    )
    return GaussianPrediction(mu_hat, sigma_hat, log_sigma_hat), tape


def backward(params: NetworkParameters, tape: ForwardTape,
             d_mu_logit, d_sigma_logit=None) -> Gradients:
    """Exact parameter gradients given upstream gradients at the head logits.

    d_mu_logit (and d_sigma_logit in mean_variance mode) are the derivatives
    of the scalar objective with respect to each sample's head logits; the
    returned gradients sum the per-sample contributions. Dropout masks from
    the forward pass are reused.
    """
    if tape.shapes != tuple(w.shape for w in params.weights):
        raise ValueError("tape was produced by a network with different shapes")
    n = tape.x.shape[0]
    d_mu_logit = np.broadcast_to(np.asarray(d_mu_logit, dtype=np.float64), (n,))
    if params.head_mode == HEAD_MEAN_VARIANCE:
        if d_sigma_logit is None:
            d_sigma_logit = np.zeros(n)
        d_sigma_logit = np.broadcast_to(
            np.asarray(d_sigma_logit, dtype=np.float64), (n,)
        )
        g_out = np.column_stack([d_mu_logit, d_sigma_logit])
    else:
        if d_sigma_logit is not None:
            raise ValueError("mean_only network has no SD logit")
        g_out = d_mu_logit[:, None]

    d_weights = [np.empty(0)] * len(params.weights)
    d_biases = [np.empty(0)] * len(params.biases)

    a_last = tape.activations[-1] if tape.activations else tape.x
    d_weights[-1] = a_last.T @ g_out
    d_biases[-1] = g_out.sum(axis=0)
    d_a = g_out @ params.weights[-1].T

    for l in range(params.n_hidden_layers - 1, -1, -1):
        if tape.masks is not None:
            dm = tape.masks[l]
            d_h = d_a * dm.mask / dm.keep_probability
        else:
            d_h = d_a
        d_z = d_h * elu_grad(tape.pre_activations[l])
        a_prev = tape.activations[l - 1] if l > 0 else tape.x
        d_weights[l] = a_prev.T @ d_z
        d_biases[l] = d_z.sum(axis=0)
        d_a = d_z @ params.weights[l].T

    return Gradients(d_weights, d_biases)


def _encode(arr: np.ndarray) -> str:
    return base64.b64encode(np.ascontiguousarray(arr, dtype="<f8").tobytes()).decode()


def _decode(text: str, shape) -> np.ndarray:
    return np.frombuffer(base64.b64decode(text), dtype="<f8").reshape(shape).copy()


def save_checkpoint(params: NetworkParameters, path, training_seed: int | None = None) -> None:
    """Write a versioned JSON checkpoint; round-trips bit-exactly."""
    record = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "head_mode": params.head_mode,
        "dropout_rate": params.dropout_rate,
        "training_seed": training_seed,
        "layers": [
            {
                "weight_shape": list(w.shape),
                "weights": _encode(w),
                "biases": _encode(b),
            }
            for w, b in zip(params.weights, params.biases)
        ],
    }
    Path(path).write_text(json.dumps(record, indent=1), encoding="utf-8")


def load_checkpoint(path):
    """Read a checkpoint written by save_checkpoint.

    Returns (NetworkParameters, training_seed).
    """
    record = json.loads(Path(path).read_text(encoding="utf-8"))
    version = record.get("format_version")
    if version != CHECKPOINT_FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint format_version: {version}")
    weights, biases = [], []
    for layer in record["layers"]:
        shape = tuple(layer["weight_shape"])
        weights.append(_decode(layer["weights"], shape))
        biases.append(_decode(layer["biases"], (shape[1],)))
    params = NetworkParameters(
        weights=weights,
        biases=biases,
        head_mode=record["head_mode"],
        dropout_rate=record["dropout_rate"],
    )
    return params, record.get("training_seed")
