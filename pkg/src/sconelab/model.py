"""Small tanh MLP with hand-written forward/backward passes.

Logits are plain [n, K] float64 arrays. Parameter-shaped quantities
(gradients, momentum buffers) reuse the ModelParams container so the
optimizer and the finite-difference checks can treat everything as one
flat structure.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class OptimizerConfig:
    """SGD with Nesterov momentum and milestone step decay.

    Milestones are fractions of the total optimizer steps of one
    timestep's training budget; the learning rate is multiplied by
    decay_factor once per milestone passed.
    """

    base_lr: float = 0.0001
    momentum: float = 0.9
    weight_decay: float = 0.0005
    batch_size: int = 128
    decay_milestones: tuple[float, ...] = (0.5, 0.75, 0.9)
    decay_factor: float = 0.5
    # Slow detector head: an unconstrained affine slope sharpens the sigmoid
    # surrogates back into the 0/1 losses they replace, which collapses the
    # energy margins; the head therefore learns at a fraction of the base rate.
    head_lr_scale: float = 0.05

    def __post_init__(self):
        if not 0.0 < self.decay_factor <= 1.0:
            raise ValueError(f"decay_factor must be in (0, 1], got {self.decay_factor}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be positive, got {self.batch_size}")
        if self.head_lr_scale < 0.0:
            raise ValueError(f"head_lr_scale must be >= 0, got {self.head_lr_scale}")
        ms = self.decay_milestones
        if any(not 0.0 < m < 1.0 for m in ms) or any(a >= b for a, b in zip(ms, ms[1:])):
            raise ValueError(f"milestones must be strictly increasing in (0, 1), got {ms}")


@dataclass
class ModelParams:
    """All learnable state: MLP layers plus the affine detector head."""

    layer_weights: list[np.ndarray]
    layer_biases: list[np.ndarray]
    g_weight: float = 1.0
    g_bias: float = 0.0

    @property
    def input_dim(self) -> int:
        return self.layer_weights[0].shape[0]

    @property
    def num_classes(self) -> int:
        return self.layer_weights[-1].shape[1]

    def copy(self) -> "ModelParams":
        return ModelParams(
            [w.copy() for w in self.layer_weights],
            [b.copy() for b in self.layer_biases],
            self.g_weight,
            self.g_bias,
        )

    def zeros_like(self) -> "ModelParams":
        return ModelParams(
            [np.zeros_like(w) for w in self.layer_weights],
            [np.zeros_like(b) for b in self.layer_biases],
            0.0,
            0.0,
        )

    def named_arrays(self):
        """Yield (name, array) for every tensor; scalars excluded."""
        for i, w in enumerate(self.layer_weights):
            yield f"layer_weights[{i}]", w
        for i, b in enumerate(self.layer_biases):
            yield f"layer_biases[{i}]", b

    def all_finite(self) -> bool:
        return all(np.isfinite(a).all() for _, a in self.named_arrays()) and np.isfinite(
            self.g_weight
        ) and np.isfinite(self.g_bias)


def init_params(input_dim, num_classes, hidden_sizes=(64, 64), rng=None) -> ModelParams:
    """Symmetric uniform init scaled by 1/sqrt(fan_in); zero biases.

    The detector head starts as the identity (g_weight=1, g_bias=0).
    """
    if num_classes < 2:
        raise ValueError(f"need at least 2 classes, got {num_classes}")
    if input_dim < 1:
        raise ValueError(f"input_dim must be positive, got {input_dim}")
    rng = np.random.default_rng() if rng is None else rng
    dims = [int(input_dim), *[int(h) for h in hidden_sizes], int(num_classes)]
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return ModelParams(weights, biases, 1.0, 0.0)


def forward_cached(params: ModelParams, features: np.ndarray):
    """Forward pass returning (logits, per-layer activations).

    activations[0] is the input; activations[l] for l >= 1 is the tanh
    output of hidden layer l. Needed by backward_from_logits.
    """
    x = np.asarray(features, dtype=float)
    if x.ndim != 2:
        raise ValueError(f"features must be 2-d [n, d], got shape {x.shape}")
    if x.shape[1] != params.input_dim:
        raise ValueError(
            f"feature width mismatch: model expects {params.input_dim}, got {x.shape[1]}"
        )
    activations = [x]
    h = x
    for w, b in zip(params.layer_weights[:-1], params.layer_biases[:-1]):
        h = np.tanh(h @ w + b)
        activations.append(h)
    logits = h @ params.layer_weights[-1] + params.layer_biases[-1]
    return logits, activations


def forward(params: ModelParams, features: np.ndarray) -> np.ndarray:
    logits, _ = forward_cached(params, features)
    return logits


def backward_from_logits(params: ModelParams, activations, dlogits: np.ndarray) -> ModelParams:
    """Backpropagate a [n, K] logits gradient into a parameter gradient.

    The detector-head entries of the result are zero; head gradients are
    accumulated separately by the energy losses.
    """
    grads = params.zeros_like()
    delta = np.asarray(dlogits, dtype=float)
    for layer in reversed(range(len(params.layer_weights))):
        grads.layer_weights[layer] = activations[layer].T @ delta
        grads.layer_biases[layer] = delta.sum(axis=0)
        if layer > 0:
            # tanh'(a) = 1 - tanh(a)^2, and activations[layer] stores tanh(a)
            delta = (delta @ params.layer_weights[layer].T) * (1.0 - activations[layer] ** 2)
    return grads


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = np.asarray(logits, dtype=float)
    m = z.max(axis=1, keepdims=True)
    return z - m - np.log(np.exp(z - m).sum(axis=1, keepdims=True))


def softmax(logits: np.ndarray) -> np.ndarray:
    return np.exp(log_softmax(logits))


def energy(logits: np.ndarray) -> np.ndarray:
    """Per-sample energy -log sum_y exp(z_y), max-shifted for stability."""
    z = np.asarray(logits, dtype=float)
    if not np.isfinite(z).all():
        raise ValueError("logits must be finite")
    m = z.max(axis=1)
    return -(m + np.log(np.exp(z - m[:, None]).sum(axis=1)))


def energy_grad_logits(logits: np.ndarray) -> np.ndarray:
    """dE_i/dz_ik = -softmax(z_i)_k."""
    return -softmax(logits)


def cross_entropy(logits: np.ndarray, labels: np.ndarray):
    """Mean negative log-likelihood and its gradient w.r.t. logits.

    Returns (loss, dloss/dlogits) with dloss/dlogits = (softmax - onehot)/n.
    """
    z = np.asarray(logits, dtype=float)
    y = np.asarray(labels)
    n, k = z.shape
    if y.shape != (n,):
        raise ValueError(f"labels shape {y.shape} does not match batch size {n}")
    if y.min() < 0 or y.max() >= k:
        raise ValueError(f"labels must lie in [0, {k}), got range [{y.min()}, {y.max()}]")
    logp = log_softmax(z)
    loss = -logp[np.arange(n), y].mean()
    grad = np.exp(logp)
    grad[np.arange(n), y] -= 1.0
    grad /= n
    return loss, grad


def g_score(params: ModelParams, energies: np.ndarray) -> np.ndarray:
    """Affine detector head applied to energies."""
    e = np.asarray(energies, dtype=float)
    if not np.isfinite(e).all():
        raise ValueError("energies must be finite")
    return params.g_weight * e + params.g_bias


def learning_rate(step_index: int, total_steps: int, cfg: OptimizerConfig) -> float:
    """Milestone decay: a milestone m is passed once step_index >= m * total_steps."""
    passed = sum(1 for m in cfg.decay_milestones if step_index >= m * total_steps)
    return cfg.base_lr * cfg.decay_factor**passed


def sgd_step(
    params: ModelParams,
    grads: ModelParams,
    momentum: ModelParams,
    step_index: int,
    total_steps: int,
    cfg: OptimizerConfig,
):
    """One Nesterov-momentum step; returns (new_params, new_momentum).

    Weight decay is added to the gradient of the MLP weight matrices only
    (not biases, not the detector head). Buffers follow the common
    buf = mu*buf + g; step = g + mu*buf convention.
    """
    if step_index >= total_steps:
        raise ValueError(f"step_index {step_index} out of range for {total_steps} steps")
    for name, g in grads.named_arrays():
        if not np.isfinite(g).all():
            raise ValueError(f"non-finite gradient in {name}")
    if not (np.isfinite(grads.g_weight) and np.isfinite(grads.g_bias)):
        raise ValueError("non-finite gradient in detector head")

    lr = learning_rate(step_index, total_steps, cfg)
    mu = cfg.momentum
    new_w, new_b = [], []
    new_mom = momentum.zeros_like()

    for i, (w, g, buf) in enumerate(
        zip(params.layer_weights, grads.layer_weights, momentum.layer_weights)
    ):
        g_eff = g + cfg.weight_decay * w
        buf = mu * buf + g_eff
        new_mom.layer_weights[i] = buf
        new_w.append(w - lr * (g_eff + mu * buf))
    for i, (b, g, buf) in enumerate(
        zip(params.layer_biases, grads.layer_biases, momentum.layer_biases)
    ):
        buf = mu * buf + g
        new_mom.layer_biases[i] = buf
        new_b.append(b - lr * (g + mu * buf))

    buf_gw = mu * momentum.g_weight + grads.g_weight
    buf_gb = mu * momentum.g_bias + grads.g_bias
    new_mom.g_weight = buf_gw
    new_mom.g_bias = buf_gb
    head_lr = lr * cfg.head_lr_scale
    out = ModelParams(
        new_w,
        new_b,
        params.g_weight - head_lr * (grads.g_weight + mu * buf_gw),
        params.g_bias - head_lr * (grads.g_bias + mu * buf_gb),
    )
    if not out.all_finite():
        raise FloatingPointError("non-finite parameter after update step")
    return out, new_mom
