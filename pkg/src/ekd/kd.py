"""Distillation objectives: frame-wise KL, the weighted total loss, and the
confidence-weighted sequence-level CTC objective used for student training."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .ctc import CtcLossResult, InfeasibleTargetError, PosteriorSequence, ctc_loss

logger = logging.getLogger(__name__)

KL_FLOOR = 1e-12


class SoftLabelMode(str, Enum):
    POSTERIOR_WEIGHTED_CTC = "posterior_weighted_ctc"
    HARD_PSEUDO_LABEL = "hard_pseudo_label"


@dataclass
class KdConfig:
    """Distillation knobs. alpha weighs supervised loss against the
    distillation loss; it is zero when the target domain has no labels."""

    alpha: float = 0.0
    temperature: float = 1.0
    soft_label_mode: SoftLabelMode = SoftLabelMode.POSTERIOR_WEIGHTED_CTC

    def __post_init__(self) -> None:
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if self.temperature <= 0:
            raise ValueError("temperature must be > 0")
        self.soft_label_mode = SoftLabelMode(self.soft_label_mode)


@dataclass
class SoftTarget:
    """A teacher-produced training target for one unlabeled utterance."""

    utterance_id: str
    pseudo_transcript: np.ndarray
    teacher_sequence_confidence: float
    teacher_posteriors: PosteriorSequence | None = None

    def __post_init__(self) -> None:
        self.pseudo_transcript = np.asarray(self.pseudo_transcript, dtype=np.int64)
        if not 0.0 <= self.teacher_sequence_confidence <= 1.0:
            raise ValueError("teacher_sequence_confidence must lie in [0, 1]")


def kl_divergence(p: PosteriorSequence, q: PosteriorSequence) -> float:
    """Frame-summed KL(p || q) with 0*log(0/q) = 0 and q floored at 1e-12."""
    if p.probs.shape != q.probs.shape:
        raise ValueError(f"shape mismatch: {p.probs.shape} vs {q.probs.shape}")
    pv = p.probs
    qv = np.maximum(q.probs, KL_FLOOR)
    mask = pv > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(mask, pv * (np.log(np.where(mask, pv, 1.0)) - np.log(qv)), 0.0)
    return float(terms.sum())


def soft_ctc_kd_loss(student_log_probs: np.ndarray, target: SoftTarget,
                     blank: int) -> CtcLossResult | None:
    """Teacher-confidence-weighted CTC loss of the student against the
    teacher's decoded transcription. Loss and gradient scale together.

    Returns None (after a logged warning) when the pseudo-transcript cannot
    fit in the student's frame count, so the caller can skip the utterance.
    """
    c = target.teacher_sequence_confidence
    try:
        base = ctc_loss(student_log_probs, target.pseudo_transcript, blank)
    except InfeasibleTargetError as e:
        logger.warning("skipping utterance %s: %s", target.utterance_id, e)
        return None
    return CtcLossResult(loss=c * base.loss, grad_logits=c * base.grad_logits)


def total_loss(sup_loss: float, kd_loss: float, config: KdConfig) -> float:
    """alpha * supervised + (1 - alpha) * distillation."""
    if not (np.isfinite(sup_loss) and np.isfinite(kd_loss)):
        raise ValueError("losses must be finite")
    return config.alpha * sup_loss + (1.0 - config.alpha) * kd_loss
