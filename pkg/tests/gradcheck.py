"""Central finite-difference gradients over the full parameter structure,
shared by the gradient tests and the acceptance suite."""

import numpy as np

from sconelab.model import ModelParams


def flatten_params(p: ModelParams) -> np.ndarray:
    vecs = [w.ravel() for w in p.layer_weights]
    vecs += [b.ravel() for b in p.layer_biases]
    vecs.append(np.array([p.g_weight, p.g_bias]))
    return np.concatenate(vecs)


def unflatten_params(template: ModelParams, vec: np.ndarray) -> ModelParams:
    out = template.zeros_like()
    i = 0
    for k, w in enumerate(template.layer_weights):
        out.layer_weights[k] = vec[i : i + w.size].reshape(w.shape).copy()
        i += w.size
    for k, b in enumerate(template.layer_biases):
        out.layer_biases[k] = vec[i : i + b.size].reshape(b.shape).copy()
        i += b.size
    out.g_weight = float(vec[i])
    out.g_bias = float(vec[i + 1])
    return out


def fd_param_grad(fn, params: ModelParams, step: float = 1e-4) -> np.ndarray:
    """Central differences of a scalar fn(params) over every entry."""
    theta = flatten_params(params)
    grad = np.zeros_like(theta)
    for i in range(theta.size):
        up = theta.copy()
        dn = theta.copy()
        up[i] += step
        dn[i] -= step
        grad[i] = (fn(unflatten_params(params, up)) - fn(unflatten_params(params, dn))) / (
            2.0 * step
        )
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Infinity-norm error of the gradient vector, relative to its scale."""
    gap = np.abs(analytic - numeric).max()
    scale = max(np.abs(analytic).max(), np.abs(numeric).max(), 1e-8)
    return float(gap / scale)
