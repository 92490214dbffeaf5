"""Training loops for teachers (supervised CTC) and students (sequence-level
distillation on selected soft labels), plus activation dumps for the
representation analysis."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .corpus import Corpus, DomainSpec, generate_corpus
from .ctc import LogitSequence, PosteriorSequence, ctc_loss, greedy_decode, log_softmax, softmax
from .kd import KdConfig, SoftLabelMode, SoftTarget, soft_ctc_kd_loss
from .model import ModelCheckpoint, ModelConfig, backward_features, forward_features, init_model
from .selection import SelectionOutcome
from .wer import accumulate, wer

logger = logging.getLogger(__name__)


class TrainingDivergedError(RuntimeError):
    pass


class TeacherQualityError(RuntimeError):
    """In-domain probe WER above the configured gate after training."""


@dataclass
class TrainConfig:
    epochs: int = 15
    batch_size: int = 8
    learning_rate: float = 3e-3
    optimizer: str = "adam"
    gradient_clip: float = 5.0
    seed: int = 0
    eval_every: int = 3

    def __post_init__(self) -> None:
        if min(self.epochs, self.batch_size, self.eval_every) < 1:
            raise ValueError("epochs, batch_size and eval_every must be >= 1")
        if self.learning_rate <= 0 or self.gradient_clip <= 0:
            raise ValueError("learning_rate and gradient_clip must be > 0")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")


class _Optimizer:
    def __init__(self, cfg: TrainConfig, weights: list[np.ndarray]):
        self.cfg = cfg
        self.t = 0
        self.m = [np.zeros_like(w) for w in weights]
        self.v = [np.zeros_like(w) for w in weights]

    def step(self, weights: list[np.ndarray], grads: list[np.ndarray]) -> None:
        clip = self.cfg.gradient_clip
        norm = np.sqrt(sum(float(np.sum(g * g)) for g in grads))
        if norm > clip:
            grads = [g * (clip / norm) for g in grads]
        lr = self.cfg.learning_rate
        if self.cfg.optimizer == "sgd":
            for w, g in zip(weights, grads):
                w -= lr * g
            return
        self.t += 1
        b1, b2, eps = 0.9, 0.999, 1e-8
        for i, (w, g) in enumerate(zip(weights, grads)):
            self.m[i] = b1 * self.m[i] + (1 - b1) * g
            self.v[i] = b2 * self.v[i] + (1 - b2) * g * g
            mhat = self.m[i] / (1 - b1 ** self.t)
            vhat = self.v[i] / (1 - b2 ** self.t)
            w -= lr * mhat / (np.sqrt(vhat) + eps)


def _run_training(model: ModelCheckpoint, utterances, loss_fn, cfg: TrainConfig,
                  snapshot_hook=None) -> list[float]:
    """Generic deterministic loop. ``loss_fn(utt, log_probs)`` returns a
    CtcLossResult or None (skip). Batch reduction is the mean over scored
    utterances, summed in utterance-index order."""
    opt = _Optimizer(cfg, model.weights)
    shuffle_rng = np.random.default_rng(cfg.seed)
    epoch_losses: list[float] = []
    n = len(utterances)
    for epoch in range(1, cfg.epochs + 1):
        order = shuffle_rng.permutation(n)
        total = 0.0
        scored = 0
        for start in range(0, n, cfg.batch_size):
            batch = order[start:start + cfg.batch_size]
            grads = [np.zeros_like(w) for w in model.weights]
            batch_scored = 0
            for idx in batch:
                utt = utterances[int(idx)]
                logits, _, cache = forward_features(model, utt.features, with_cache=True)
                result = loss_fn(utt, log_softmax(logits))
                if result is None:
                    continue
                for gi, g in enumerate(backward_features(model, cache, result.grad_logits)):
                    grads[gi] += g
                total += result.loss
                batch_scored += 1
            if batch_scored == 0:
                continue
            grads = [g / batch_scored for g in grads]
            opt.step(model.weights, grads)
            if not all(np.all(np.isfinite(w)) for w in model.weights):
                raise TrainingDivergedError(
                    f"epoch {epoch}: non-finite weights after an update "
                    "(diverged; lower the learning rate or tighten gradient_clip)")
            scored += batch_scored
        mean_loss = total / scored if scored else float("nan")
        epoch_losses.append(mean_loss)
        logger.debug("epoch %d: mean loss %.6f over %d utterances", epoch, mean_loss, scored)
        if not np.isfinite(mean_loss):
            raise TrainingDivergedError(
                f"epoch {epoch}: non-finite mean loss {mean_loss} (scored {scored} utterances)")
        if snapshot_hook is not None and (epoch % cfg.eval_every == 0 or epoch == cfg.epochs):
            snapshot_hook(epoch, model.copy())
    return epoch_losses


def greedy_corpus_wer(model: ModelCheckpoint, corpus: Corpus) -> float:
    """Greedy-decode WER of a model over a labelled corpus."""
    vocab = corpus.vocabulary
    parts = []
    for utt in corpus.utterances:
        logits, _ = forward_features(model, utt.features)
        posts = softmax(LogitSequence(logits, utt.id))
        hyp = vocab.indices_to_words(greedy_decode(posts, vocab.blank_index))
        ref = vocab.indices_to_words(utt.transcript)
        parts.append(wer(ref, hyp))
    return accumulate(parts).wer


def train_teacher(corpus: Corpus, model_cfg: ModelConfig, train_cfg: TrainConfig,
                  probe_spec: DomainSpec | None = None,
                  probe_wer_threshold: float | None = None,
                  snapshot_hook=None) -> ModelCheckpoint:
    """Supervised CTC training on a labelled corpus.

    When a probe spec and threshold are given, the trained model must reach
    the threshold on a zero-noise in-domain probe set; this gates selection
    experiments on adequately trained teachers.
    """
    if not all(u.has_transcript for u in corpus.utterances):
        raise ValueError(f"corpus {corpus.name!r} is missing transcripts")
    vocab = corpus.vocabulary
    blank = vocab.blank_index
    model = init_model(model_cfg, corpus.feature_dim, vocab.size, vocab.content_hash())

    def loss_fn(utt, log_probs):
        return ctc_loss(log_probs, utt.transcript, blank)

    losses = _run_training(model, corpus.utterances, loss_fn, train_cfg, snapshot_hook)
    model.training_meta = {
        "corpus": corpus.name,
        "epochs": train_cfg.epochs,
        "final_mean_loss": losses[-1],
        "final_sum_loss": losses[-1] * len(corpus.utterances),
        "loss_curve": losses,
        "objective": "ctc",
    }
    if probe_spec is not None and probe_wer_threshold is not None:
        probe_seed = (train_cfg.seed * 9973 + 17) % (2 ** 31)
        probe = generate_corpus(
            DomainSpec(probe_spec.name, 0.0, probe_spec.feature_scale, probe_spec.feature_bias,
                       probe_spec.frames_per_symbol, probe_spec.utterance_length_range,
                       probe_spec.lexicon),
            vocab, n_utterances=16, seed=probe_seed)
        probe_wer = greedy_corpus_wer(model, probe)
        model.training_meta["probe_wer"] = probe_wer
        if probe_wer > probe_wer_threshold:
            raise TeacherQualityError(
                f"teacher on {corpus.name!r}: probe WER {probe_wer:.3f} exceeds "
                f"gate {probe_wer_threshold:.3f}")
    return model


def train_student(selections: list[SelectionOutcome], target_corpus: Corpus,
                  model_cfg: ModelConfig, train_cfg: TrainConfig, kd_cfg: KdConfig,
                  snapshot_hook=None, allow_supervised: bool = False) -> ModelCheckpoint:
    """Distillation training on teacher-selected soft labels only.

    The target corpus must arrive with transcripts stripped; the loop never
    reads a target label (auditable via ``corpus.transcript_read_count``).
    """
    if kd_cfg.alpha != 0.0 and not allow_supervised:
        raise ValueError("alpha must be 0 for unlabeled-target training "
                         "(pass allow_supervised=True to override)")
    if any(u.has_transcript for u in target_corpus.utterances):
        raise ValueError("target corpus still carries transcripts; strip them before "
                         "student training")
    vocab = target_corpus.vocabulary
    blank = vocab.blank_index
    by_id = {o.selected_posteriors.utterance_id: o for o in selections}
    covered = []
    for utt in target_corpus.utterances:
        if utt.id not in by_id:
            logger.warning("no selection for utterance %s; skipping", utt.id)
            continue
        covered.append(utt)
    hard = kd_cfg.soft_label_mode is SoftLabelMode.HARD_PSEUDO_LABEL

    def loss_fn(utt, log_probs):
        outcome = by_id[utt.id]
        if outcome.pseudo_transcript.size == 0:
            logger.warning("empty pseudo-transcript for %s; skipping", utt.id)
            return None
        target = SoftTarget(
            utterance_id=utt.id,
            pseudo_transcript=outcome.pseudo_transcript,
            teacher_sequence_confidence=1.0 if hard else outcome.sequence_confidence,
        )
        return soft_ctc_kd_loss(log_probs, target, blank)

    model = init_model(model_cfg, target_corpus.feature_dim, vocab.size, vocab.content_hash())
    losses = _run_training(model, covered, loss_fn, train_cfg, snapshot_hook)
    model.training_meta = {
        "corpus": target_corpus.name,
        "epochs": train_cfg.epochs,
        "final_mean_loss": losses[-1],
        "final_sum_loss": losses[-1] * max(len(covered), 1),
        "loss_curve": losses,
        "objective": f"soft_ctc_kd/{kd_cfg.soft_label_mode.value}",
        "covered_utterances": len(covered),
    }
    return model


def corpus_posteriors(model: ModelCheckpoint, corpus: Corpus,
                      temperature: float = 1.0) -> list[PosteriorSequence]:
    """Softmax outputs for every utterance, in corpus order."""
    out = []
    for utt in corpus.utterances:
        logits, _ = forward_features(model, utt.features)
        out.append(softmax(LogitSequence(logits, utt.id), temperature))
    return out


def activation_frame_indices(total_frames: int, n_frames: int, seed: int) -> np.ndarray:
    """Deterministic frame subsample, shared across models and checkpoints."""
    if n_frames > total_frames:
        raise ValueError(f"n_frames {n_frames} exceeds total frames {total_frames}")
    if n_frames == total_frames:
        return np.arange(total_frames)
    rng = np.random.default_rng(seed)
    return np.sort(rng.choice(total_frames, size=n_frames, replace=False))


def dump_activations(model: ModelCheckpoint, corpus: Corpus, n_frames: int, seed: int,
                     source: tuple[str, int] = ("", 0)):
    """Per-layer activation matrices on a fixed frame subsample.

    The subsample depends only on (total frames, n_frames, seed), so two
    models dumped over the same corpus see the same frames.
    """
    from .svcca import ActivationMatrix

    per_layer: dict[str, list[np.ndarray]] = {}
    for utt in corpus.utterances:
        _, acts = forward_features(model, utt.features)
        for name, a in acts.items():
            per_layer.setdefault(name, []).append(a)
    stacked = {name: np.concatenate(blocks, axis=0) for name, blocks in per_layer.items()}
    total = next(iter(stacked.values())).shape[0]
    idx = activation_frame_indices(total, n_frames, seed)
    return {name: ActivationMatrix(layer_name=name, data=mat[idx], source=source)
            for name, mat in stacked.items()}
