"""Threshold detector, FPR-at-TPR, accuracies, and per-timestep records.

Detection uses the raw negated energy (higher means more in-distribution),
not the learned affine head, so the reported detection metrics stay
comparable across methods and epochs. The detector threshold is refit on
each timestep's ID test split.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .losses import Hyperparams, LossBreakdown
from .model import ModelParams, energy, forward, softmax
from .scores import ScoreKind, TemporalState, diff_ac, hard_atc, unit_scores
from .stream import TimestepSplits

CSV_COLUMNS = (
    "t",
    "id_acc",
    "ood_acc",
    "fpr95",
    "lambda_threshold",
    "atc_in",
    "atc_cov",
    "ac_in",
    "ac_cov",
    "drift_d_id",
    "drift_d_cov",
    "loss_ce",
    "loss_l_in",
    "loss_l_out",
    "loss_alm_in",
    "loss_l_temp",
    "loss_w_temp",
    "loss_total",
)


@dataclass(frozen=True)
class MetricsRecord:
    t: int
    id_acc: float
    ood_acc: float
    fpr95: float
    lambda_threshold: float
    atc_in: float
    atc_cov: float
    ac_in: float
    ac_cov: float
    drift_d_id: float
    drift_d_cov: float
    loss: LossBreakdown

    def to_row(self) -> list:
        return [
            self.t,
            self.id_acc,
            self.ood_acc,
            self.fpr95,
            self.lambda_threshold,
            self.atc_in,
            self.atc_cov,
            self.ac_in,
            self.ac_cov,
            self.drift_d_id,
            self.drift_d_cov,
            self.loss.ce,
            self.loss.l_in,
            self.loss.l_out,
            self.loss.alm_in,
            self.loss.l_temp,
            self.loss.w_temp,
            self.loss.total,
        ]

    def to_json(self) -> str:
        return json.dumps(dict(zip(CSV_COLUMNS, self.to_row())), sort_keys=True)


def detection_scores(params: ModelParams, features: np.ndarray) -> np.ndarray:
    """Negated energy: higher means more ID-like."""
    return -energy(forward(params, features))


def fit_threshold(id_detection_scores: np.ndarray, target_tpr: float = 0.95) -> float:
    """Largest threshold that keeps at least target_tpr of the ID scores
    strictly above it.

    Candidates are the ID order statistics; if none qualifies (ties at the
    bottom, or target_tpr = 1), the threshold steps one ulp below the
    minimum score so every ID sample is accepted.
    """
    s = np.sort(np.asarray(id_detection_scores, dtype=float))
    n = s.size
    if n < 20:
        raise ValueError(f"need at least 20 ID scores to fit a threshold, got {n}")
    uniq = np.unique(s)
    tpr_at = (n - np.searchsorted(s, uniq, side="right")) / n
    feasible = uniq[tpr_at >= target_tpr]
    if feasible.size == 0:
        return float(np.nextafter(s[0], -np.inf))
    return float(feasible.max())


def fpr_at_tpr(
    id_scores: np.ndarray, ood_scores: np.ndarray, target_tpr: float = 0.95
) -> float:
    """Fraction of OOD scores above the ID-fitted detector threshold."""
    ood = np.asarray(ood_scores, dtype=float)
    if ood.size == 0 or np.asarray(id_scores).size == 0:
        raise ValueError("need nonempty ID and OOD score vectors")
    lam = fit_threshold(id_scores, target_tpr)
    return float((ood > lam).mean())


def accuracy(logits: np.ndarray, labels: np.ndarray) -> float:
    """Argmax accuracy; ties resolve to the lowest class index."""
    z = np.asarray(logits, dtype=float)
    y = np.asarray(labels)
    if z.shape[0] != y.shape[0]:
        raise ValueError(f"got {z.shape[0]} logit rows for {y.shape[0]} labels")
    return float((np.argmax(z, axis=1) == y).mean())


def evaluate_timestep(
    params: ModelParams,
    splits: TimestepSplits,
    hp: Hyperparams,
    temporal_state: TemporalState,
    score_kind: ScoreKind,
    delta: float,
    breakdown: LossBreakdown,
) -> MetricsRecord:
    """Assemble the timestep's record from held-out test splits.

    Asserts that the test samples are disjoint from the timestep's training
    samples via the id bookkeeping.
    """
    overlap = np.intersect1d(splits.training_sample_ids(), splits.test_ids)
    if overlap.size:
        raise AssertionError(f"test split shares {overlap.size} sample ids with training data")

    logits_id = forward(params, splits.test_id_x)
    logits_cov = forward(params, splits.test_cov_x)
    logits_sem = forward(params, splits.test_sem_x)

    lam = fit_threshold(-energy(logits_id))
    fpr = float((-energy(logits_sem) > lam).mean())

    probs_id = softmax(logits_id)
    probs_cov = softmax(logits_cov)
    drift_d_id, drift_d_cov = 0.0, 0.0
    for entry in reversed(temporal_state.history):
        if entry[0] == splits.t:
            drift_d_id, drift_d_cov = float(entry[3]), float(entry[4])
            break

    return MetricsRecord(
        t=splits.t,
        id_acc=accuracy(logits_id, splits.test_id_y),
        ood_acc=accuracy(logits_cov, splits.test_cov_y),
        fpr95=fpr,
        lambda_threshold=lam,
        atc_in=hard_atc(unit_scores(probs_id, score_kind), delta),
        atc_cov=hard_atc(unit_scores(probs_cov, score_kind), delta),
        ac_in=diff_ac(probs_id),
        ac_cov=diff_ac(probs_cov),
        drift_d_id=drift_d_id,
        drift_d_cov=drift_d_cov,
        loss=breakdown,
    )
