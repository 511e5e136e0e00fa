"""Training loss terms and their composition.

Both energy sigmoids pivot at the margin eta: the in-distribution term is
mean sigmoid(g(E - eta)) and the wild term is mean sigmoid(-g(E - eta)),
so for the identity head the two are exact complements. The constraint on
the ID term is enforced with an augmented-Lagrangian pair (linear
multiplier + quadratic penalty) and dual ascent on the multiplier.

The temporal drift penalty is asymmetric: it fires when the ID probe score
falls below, or the covariate probe score rises above, the previous
timestep's stored value, and only once total drift exceeds the tolerance.
Its adaptive weight ramps from lambda_base to 2*lambda_base as total drift
approaches delta_max; the weight is part of the differentiated expression,
so gradients include the product-rule term on the ramp.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.special import expit

from .scores import TemporalState


@dataclass(frozen=True)
class Hyperparams:
    """Scalar knobs of the constrained objective and the temporal penalty."""

    eta: float = -5.0
    lambda_out: float = 1.0
    lambda_in_penalty: float = 1.0
    lambda_base: float = 1.0
    delta_max: float = 0.2
    epsilon: float = 0.02
    delta: float = 0.5
    omega: float = 0.05
    fpr_cutoff: float = 0.05
    ce_tol: float = 2.0
    lr_lambda: float = 0.1
    alpha: float = 0.05
    tau: float = 0.05

    def __post_init__(self):
        if self.eta >= 0.0:
            raise ValueError(f"eta must be negative, got {self.eta}")
        if self.lambda_out < 0 or self.lambda_in_penalty < 0 or self.lambda_base < 0:
            raise ValueError("loss weights must be >= 0")
        if self.delta_max <= 0.0:
            raise ValueError(f"delta_max must be > 0, got {self.delta_max}")
        if self.epsilon < 0.0:
            raise ValueError(f"epsilon must be >= 0, got {self.epsilon}")
        if self.omega <= 0.0:
            raise ValueError(f"omega must be > 0, got {self.omega}")
        if not 0.0 < self.fpr_cutoff < 1.0:
            raise ValueError(f"fpr_cutoff must be in (0, 1), got {self.fpr_cutoff}")
        if self.ce_tol < 1.0:
            raise ValueError(f"ce_tol must be >= 1, got {self.ce_tol}")
        if self.lr_lambda <= 0.0:
            raise ValueError(f"lr_lambda must be > 0, got {self.lr_lambda}")
        if not 0.0 < self.alpha < 1.0 or not 0.0 < self.tau < 1.0:
            raise ValueError("alpha and tau must be in (0, 1)")

    @property
    def lambda_temp(self) -> float:
        """Alias: the base temporal weight doubles as the temporal multiplier."""
        return self.lambda_base


@dataclass(frozen=True)
class MultiplierState:
    """Dual variables and the timestep's frozen baseline classification loss."""

    lambda_in_mult: float = 0.0
    lambda_ce_mult: float = 0.0
    baseline_ce: float = 0.0


@dataclass(frozen=True)
class LossBreakdown:
    ce: float
    l_in: float
    l_out: float
    alm_in: float
    l_temp: float
    w_temp: float
    total: float


def loss_in(energies_id: np.ndarray, params, eta: float) -> float:
    """Mean sigmoid(g(E - eta)) over an ID batch; small when E sits below eta."""
    return loss_in_grad(energies_id, params, eta)[0]


def loss_in_grad(energies_id: np.ndarray, params, eta: float):
    """Returns (value, d/dE vector, d/dg_weight, d/dg_bias)."""
    e = np.asarray(energies_id, dtype=float)
    if e.size == 0:
        raise ValueError("empty ID energy batch")
    u = params.g_weight * (e - eta) + params.g_bias
    s = expit(u)
    sp = s * (1.0 - s) / e.size
    return float(s.mean()), sp * params.g_weight, float((sp * (e - eta)).sum()), float(sp.sum())


def loss_out(energies_wild: np.ndarray, params, eta: float) -> float:
    """Mean sigmoid(-g(E - eta)) over a wild batch; small when E sits above eta."""
    return loss_out_grad(energies_wild, params, eta)[0]


def loss_out_grad(energies_wild: np.ndarray, params, eta: float):
    """Returns (value, d/dE vector, d/dg_weight, d/dg_bias)."""
    e = np.asarray(energies_wild, dtype=float)
    if e.size == 0:
        raise ValueError("empty wild energy batch")
    u = -(params.g_weight * (e - eta) + params.g_bias)
    s = expit(u)
    sp = s * (1.0 - s) / e.size
    return (
        float(s.mean()),
        -sp * params.g_weight,
        float(-(sp * (e - eta)).sum()),
        float(-sp.sum()),
    )


def alm_in(l_in_value: float, state: MultiplierState, hp: Hyperparams) -> float:
    """Augmented-Lagrangian term lambda*c + (lambda_in/2)*c^2, c = L_in - cutoff."""
    c = l_in_value - hp.fpr_cutoff
    return state.lambda_in_mult * c + 0.5 * hp.lambda_in_penalty * c * c


def alm_in_grad(l_in_value: float, state: MultiplierState, hp: Hyperparams) -> float:
    """d alm_in / d L_in = lambda + lambda_in * c."""
    return state.lambda_in_mult + hp.lambda_in_penalty * (l_in_value - hp.fpr_cutoff)


def adaptive_weight(d_id: float, d_cov: float, hp: Hyperparams) -> float:
    """Drift-dependent weight: a ramp that disengages past the drift cap.

    On the ramp (d_tot <= delta_max) the weight grows linearly from
    lambda_base to 2*lambda_base, applying stronger correction for larger
    drift. Beyond delta_max the weight decays as 2*lambda_base*delta_max/d
    so the penalty w*d plateaus at 2*lambda_base*delta_max and contributes
    no gradient: a jump past the cap signals domain replacement rather than
    drift, and anchoring confidence across unrelated domains is harmful.
    """
    d_tot = d_id + d_cov
    if d_tot <= hp.delta_max:
        return hp.lambda_base * (1.0 + d_tot / hp.delta_max)
    return 2.0 * hp.lambda_base * hp.delta_max / d_tot


def temporal_loss(state: TemporalState, s_in_t: float, s_cov_t: float, hp: Hyperparams, t: int):
    """Temporal drift penalty; returns (l_temp, w_temp, d_id, d_cov).

    Zero at t=0 or before any timestep has stored scores, and whenever
    total drift stays within the tolerance. Stored previous scores are
    constants (no gradient flows into the past).
    """
    value, w, d_id, d_cov, _, _ = temporal_loss_grad(state, s_in_t, s_cov_t, hp, t)
    return value, w, d_id, d_cov


def temporal_loss_grad(
    state: TemporalState, s_in_t: float, s_cov_t: float, hp: Hyperparams, t: int
):
    """As temporal_loss, plus (d l_temp/d s_in, d l_temp/d s_cov)."""
    if t == 0 or state.prev_in_score is None or state.prev_cov_score is None:
        return 0.0, 0.0, 0.0, 0.0, 0.0, 0.0
    d_id = max(0.0, state.prev_in_score - s_in_t)
    d_cov = max(0.0, s_cov_t - state.prev_cov_score)
    d_tot = d_id + d_cov
    if d_tot <= hp.epsilon:
        return 0.0, 0.0, d_id, d_cov, 0.0, 0.0
    w = adaptive_weight(d_id, d_cov, hp)
    if d_tot < hp.delta_max:
        dl_dd = hp.lambda_base * (1.0 + 2.0 * d_tot / hp.delta_max)
    else:
        dl_dd = 2.0 * hp.lambda_base
    return (
        w * d_tot,
        w,
        d_id,
        d_cov,
        -dl_dd if d_id > 0.0 else 0.0,
        dl_dd if d_cov > 0.0 else 0.0,
    )


def total_loss(
    ce: float,
    l_out_value: float,
    alm_in_value: float,
    l_temp: float,
    hp: Hyperparams,
    l_in_value: float = 0.0,
    w_temp: float = 0.0,
) -> LossBreakdown:
    """Compose the per-step objective; l_temp already carries its adaptive weight."""
    parts = (ce, l_out_value, alm_in_value, l_temp)
    if not all(np.isfinite(parts)):
        raise FloatingPointError(f"non-finite loss part: {parts}")
    return LossBreakdown(
        ce=ce,
        l_in=l_in_value,
        l_out=l_out_value,
        alm_in=alm_in_value,
        l_temp=l_temp,
        w_temp=w_temp,
        total=ce + hp.lambda_out * l_out_value + alm_in_value + l_temp,
    )


def update_multipliers(
    state: MultiplierState, l_in_epoch: float, ce_epoch: float, hp: Hyperparams
) -> MultiplierState:
    """Dual ascent on both multipliers, clipped to stay nonnegative."""
    lam = max(0.0, state.lambda_in_mult + hp.lr_lambda * (l_in_epoch - hp.fpr_cutoff))
    lam2 = max(
        0.0,
        state.lambda_ce_mult + hp.lr_lambda * (ce_epoch - hp.ce_tol * state.baseline_ce),
    )
    return replace(state, lambda_in_mult=lam, lambda_ce_mult=lam2)
