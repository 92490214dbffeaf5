"""CTC loss (log-space forward-backward), its logit gradient, and decoding.

The loss of a target label sequence is the negative log of the summed
probability of every frame-level path that collapses to it (remove repeats,
then blanks). All recursions run in the log domain with log-sum-exp.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

NEG_INF = -np.inf


class InfeasibleTargetError(ValueError):
    """Target needs more frames than the sequence provides."""


@dataclass
class LogitSequence:
    """Per-frame unnormalized scores over the grapheme vocabulary."""

    values: np.ndarray  # [T, z]
    utterance_id: str = ""

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2 or self.values.shape[0] < 1:
            raise ValueError("logits must be [T>=1, z]")


@dataclass
class PosteriorSequence:
    """Per-frame probability distributions; every row sums to one."""

    probs: np.ndarray  # [T, z]
    utterance_id: str = ""

    def __post_init__(self) -> None:
        self.probs = np.asarray(self.probs, dtype=np.float64)
        if self.probs.ndim != 2 or self.probs.shape[0] < 1:
            raise ValueError("posteriors must be [T>=1, z]")
        if np.any(self.probs < -1e-12) or np.any(self.probs > 1 + 1e-9):
            raise ValueError("posterior entries must lie in [0, 1]")
        sums = self.probs.sum(axis=1)
        if np.any(np.abs(sums - 1.0) > 1e-6):
            raise ValueError("posterior rows must sum to 1 within 1e-6")

    @property
    def num_frames(self) -> int:
        return self.probs.shape[0]

    @property
    def vocab_size(self) -> int:
        return self.probs.shape[1]

    def log_probs(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(self.probs)


@dataclass
class CtcLossResult:
    loss: float                 # negative log-likelihood, nats
    grad_logits: np.ndarray     # [T, z], d(loss)/d(pre-softmax logits)


def softmax(logits: LogitSequence, temperature: float = 1.0) -> PosteriorSequence:
    """Row-wise softmax at the given temperature."""
    if temperature <= 0:
        raise ValueError("temperature must be > 0")
    v = logits.values
    if not np.all(np.isfinite(v)):
        raise ValueError("non-finite logits")
    scaled = v / temperature
    scaled = scaled - scaled.max(axis=1, keepdims=True)
    e = np.exp(scaled)
    return PosteriorSequence(e / e.sum(axis=1, keepdims=True), logits.utterance_id)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def collapse_alignment(path, blank: int) -> np.ndarray:
    """CTC collapse: drop consecutive repeats, then drop blanks."""
    path = np.asarray(path, dtype=np.int64)
    if path.size == 0:
        return path
    keep = np.ones(path.size, dtype=bool)
    keep[1:] = path[1:] != path[:-1]
    dedup = path[keep]
    return dedup[dedup != blank]


def greedy_decode(posteriors: PosteriorSequence, blank: int) -> np.ndarray:
    """Per-frame argmax followed by the collapse rule."""
    return collapse_alignment(np.argmax(posteriors.probs, axis=1), blank)


def min_frames_for_target(target: np.ndarray) -> int:
    """Shortest path length: one frame per label plus a blank between repeats."""
    target = np.asarray(target, dtype=np.int64)
    if target.size == 0:
        return 0
    repeats = int(np.sum(target[1:] == target[:-1]))
    return int(target.size + repeats)


def _extend_target(target: np.ndarray, blank: int) -> np.ndarray:
    ext = np.full(2 * target.size + 1, blank, dtype=np.int64)
    ext[1::2] = target
    return ext


def ctc_loss(log_probs: np.ndarray, target, blank: int) -> CtcLossResult:
    """Loss and logit gradient for one utterance.

    ``log_probs`` is a [T, z] log-domain posterior matrix (rows are logs of a
    normalized distribution). The returned gradient is with respect to the
    pre-softmax logits, in the standard posterior-minus-occupancy form, and is
    valid for any logits whose softmax equals ``exp(log_probs)``.
    """
    lp = np.asarray(log_probs, dtype=np.float64)
    if lp.ndim != 2 or lp.shape[0] < 1:
        raise ValueError("log_probs must be [T>=1, z]")
    if np.any(np.isnan(lp)):
        raise ValueError("NaN in log posteriors")
    target = np.asarray(target, dtype=np.int64)
    if target.size == 0:
        raise ValueError("target must be non-empty")
    T, z = lp.shape
    if target.min() < 0 or target.max() >= z:
        raise ValueError("target index out of range")
    if np.any(target == blank):
        raise ValueError("target must not contain the blank symbol")
    if T < min_frames_for_target(target):
        raise InfeasibleTargetError(
            f"target of length {target.size} needs {min_frames_for_target(target)} frames, got {T}")

    ext = _extend_target(target, blank)
    S = ext.size
    # A state may inherit from s-2 when it is a new label distinct from the
    # one two slots back (skipping the blank in between).
    skip_ok = np.zeros(S, dtype=bool)
    skip_ok[2:] = (ext[2:] != blank) & (ext[2:] != ext[:-2])

    lp_ext = lp[:, ext]  # [T, S]

    alpha = np.full((T, S), NEG_INF)
    alpha[0, 0] = lp_ext[0, 0]
    if S > 1:
        alpha[0, 1] = lp_ext[0, 1]
    for t in range(1, T):
        prev = alpha[t - 1]
        stay = prev
        step = np.concatenate(([NEG_INF], prev[:-1]))
        skip = np.concatenate(([NEG_INF, NEG_INF], prev[:-2]))
        skip = np.where(skip_ok, skip, NEG_INF)
        alpha[t] = np.logaddexp(np.logaddexp(stay, step), skip) + lp_ext[t]

    log_p = np.logaddexp(alpha[T - 1, S - 1], alpha[T - 1, S - 2])
    if not np.isfinite(log_p):
        raise ValueError("target has zero probability under the given posteriors")

    beta = np.full((T, S), NEG_INF)
    beta[T - 1, S - 1] = lp_ext[T - 1, S - 1]
    beta[T - 1, S - 2] = lp_ext[T - 1, S - 2]
    for t in range(T - 2, -1, -1):
        nxt = beta[t + 1]
        stay = nxt
        step = np.concatenate((nxt[1:], [NEG_INF]))
        skip = np.concatenate((nxt[2:], [NEG_INF, NEG_INF]))
        skip_fwd = np.zeros(S, dtype=bool)
        skip_fwd[:-2] = skip_ok[2:]
        skip = np.where(skip_fwd, skip, NEG_INF)
        beta[t] = np.logaddexp(np.logaddexp(stay, step), skip) + lp_ext[t]

    # Occupancy of state s at frame t: alpha*beta double-counts the frame-t
    # emission, so divide by it once and normalize by the total probability.
    ab = alpha + beta
    with np.errstate(invalid="ignore", over="ignore"):
        log_occ = ab - lp_ext - log_p
        occ = np.where(np.isneginf(ab), 0.0, np.exp(log_occ))

    gamma = np.zeros((T, z))
    for s in range(S):
        gamma[:, ext[s]] += occ[:, s]
    grad = np.exp(lp) - gamma
    return CtcLossResult(loss=float(-log_p), grad_logits=grad)
