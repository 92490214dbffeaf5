"""Training-target construction from an ensemble of teacher posteriors.

Three strategies per unlabeled utterance:

* ``teacher_average`` — frame-wise mean of all teacher distributions;
* ``framewise_max`` — at each frame, copy the whole distribution of the
  teacher whose top posterior at that frame is largest;
* ``elitist`` — keep the single teacher whose utterance-level confidence
  (mean over frames of its per-frame top posterior) is highest.
"""
from __future__ import annotations

import json
import logging
import struct
from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import binio
from .ctc import PosteriorSequence, greedy_decode

logger = logging.getLogger(__name__)

SELECTION_FORMAT_VERSION = 1
POSTERIORS_FORMAT_VERSION = 1


class Strategy(str, Enum):
    TEACHER_AVERAGE = "teacher_average"
    FRAMEWISE_MAX = "framewise_max"
    ELITIST = "elitist"


@dataclass
class TeacherBundle:
    """All K teachers' posterior sequences for one utterance."""

    utterance_id: str
    per_teacher_posteriors: list[PosteriorSequence]

    def __post_init__(self) -> None:
        if len(self.per_teacher_posteriors) < 1:
            raise ValueError("bundle needs at least one teacher")
        shape = self.per_teacher_posteriors[0].probs.shape
        for p in self.per_teacher_posteriors:
            if p.probs.shape != shape:
                raise ValueError(f"bundle {self.utterance_id!r}: teacher posterior shape mismatch")

    @property
    def num_teachers(self) -> int:
        return len(self.per_teacher_posteriors)


@dataclass
class SelectionOutcome:
    strategy: Strategy
    selected_posteriors: PosteriorSequence
    winning_teacher: int | None
    per_teacher_scores: list[float] | None
    pseudo_transcript: np.ndarray
    sequence_confidence: float

    def __post_init__(self) -> None:
        self.strategy = Strategy(self.strategy)
        self.pseudo_transcript = np.asarray(self.pseudo_transcript, dtype=np.int64)


def utterance_confidence(probs: np.ndarray) -> float:
    """Mean over frames of the per-frame maximum posterior — the confidence
    of the greedy label at each frame, averaged over the utterance."""
    return float(np.mean(np.max(probs, axis=1)))


def elitist_scores(bundle: TeacherBundle) -> list[float]:
    """Per-teacher utterance confidences; each lies in [1/z, 1]."""
    return [utterance_confidence(p.probs) for p in bundle.per_teacher_posteriors]


def teacher_average(bundle: TeacherBundle, blank: int) -> SelectionOutcome:
    """Element-wise mean over teachers."""
    stack = np.stack([p.probs for p in bundle.per_teacher_posteriors])
    mean = stack.mean(axis=0)
    selected = PosteriorSequence(mean, bundle.utterance_id)
    return SelectionOutcome(
        strategy=Strategy.TEACHER_AVERAGE,
        selected_posteriors=selected,
        winning_teacher=None,
        per_teacher_scores=None,
        pseudo_transcript=greedy_decode(selected, blank),
        sequence_confidence=utterance_confidence(mean),
    )


def framewise_max(bundle: TeacherBundle, blank: int) -> SelectionOutcome:
    """Per frame, copy the full row of the most confident teacher (ties go to
    the lowest teacher index). Rows stay normalized because they are copies."""
    stack = np.stack([p.probs for p in bundle.per_teacher_posteriors])  # [K, T, z]
    frame_conf = stack.max(axis=2)                                     # [K, T]
    winners = np.argmax(frame_conf, axis=0)                            # [T]
    composed = stack[winners, np.arange(stack.shape[1]), :]
    selected = PosteriorSequence(composed, bundle.utterance_id)
    return SelectionOutcome(
        strategy=Strategy.FRAMEWISE_MAX,
        selected_posteriors=selected,
        winning_teacher=None,
        per_teacher_scores=None,
        pseudo_transcript=greedy_decode(selected, blank),
        sequence_confidence=utterance_confidence(composed),
    )


def elitist_select(bundle: TeacherBundle, blank: int) -> SelectionOutcome:
    """Keep the highest-confidence teacher's full posterior sequence.

    The winner's posteriors are passed through unchanged (same array), so the
    training target preserves one model's coherent sequence.
    """
    scores = elitist_scores(bundle)
    winner = int(np.argmax(scores))
    selected = bundle.per_teacher_posteriors[winner]
    return SelectionOutcome(
        strategy=Strategy.ELITIST,
        selected_posteriors=selected,
        winning_teacher=winner,
        per_teacher_scores=scores,
        pseudo_transcript=greedy_decode(selected, blank),
        sequence_confidence=scores[winner],
    )


_STRATEGY_FNS = {
    Strategy.TEACHER_AVERAGE: teacher_average,
    Strategy.FRAMEWISE_MAX: framewise_max,
    Strategy.ELITIST: elitist_select,
}


@dataclass
class CorpusSelection:
    """Per-utterance outcomes plus order-independent summary statistics."""

    strategy: Strategy
    outcomes: list[SelectionOutcome]
    win_counts: list[int] | None      # elitist only
    skipped: list[tuple[str, str]]    # (utterance_id, reason)

    def summary_text(self) -> str:
        lines = [f"strategy: {self.strategy.value}",
                 f"utterances selected: {len(self.outcomes)}",
                 f"utterances skipped: {len(self.skipped)}"]
        if self.win_counts is not None:
            counts = " ".join(f"teacher{k}={c}" for k, c in enumerate(self.win_counts))
            lines.append(f"win counts: {counts}")
        return "\n".join(lines) + "\n"


def select_corpus(strategy: Strategy | str, bundles: list[TeacherBundle],
                  blank: int) -> CorpusSelection:
    """Apply one strategy to every bundle; failed utterances are skipped and
    reported rather than aborting the run."""
    strategy = Strategy(strategy)
    fn = _STRATEGY_FNS[strategy]
    n_teachers = bundles[0].num_teachers if bundles else 0
    z = bundles[0].per_teacher_posteriors[0].vocab_size if bundles else None
    outcomes: list[SelectionOutcome] = []
    skipped: list[tuple[str, str]] = []
    win_counts = [0] * n_teachers if strategy is Strategy.ELITIST else None
    for bundle in bundles:
        try:
            if bundle.num_teachers != n_teachers:
                raise ValueError(f"expected {n_teachers} teachers, got {bundle.num_teachers}")
            if bundle.per_teacher_posteriors[0].vocab_size != z:
                raise ValueError("vocabulary size differs across bundles")
            outcome = fn(bundle, blank)
        except ValueError as e:
            logger.warning("selection failed for %s: %s", bundle.utterance_id, e)
            skipped.append((bundle.utterance_id, str(e)))
            continue
        outcomes.append(outcome)
        if win_counts is not None:
            win_counts[outcome.winning_teacher] += 1
    return CorpusSelection(strategy=strategy, outcomes=outcomes,
                           win_counts=win_counts, skipped=skipped)


# -- persistence ------------------------------------------------------------

def save_posteriors(path, posteriors: list[PosteriorSequence], model_id: str,
                    vocabulary_hash: str) -> None:
    z = posteriors[0].vocab_size if posteriors else 0
    header = {"model_id": model_id, "vocabulary_hash": vocabulary_hash,
              "vocab_size": z, "n_sequences": len(posteriors)}
    records = []
    for p in posteriors:
        meta = json.dumps({"id": p.utterance_id, "frames": p.num_frames},
                          sort_keys=True, separators=(",", ":")).encode()
        records.append(struct.pack("<Q", len(meta)) + meta + binio.pack_floats(p.probs))
    binio.write_container(path, "posteriors", POSTERIORS_FORMAT_VERSION, header, records)


def load_posteriors(path) -> tuple[dict, list[PosteriorSequence]]:
    header, records = binio.read_container(path, "posteriors", POSTERIORS_FORMAT_VERSION)
    z = header["vocab_size"]
    out = []
    for rec in records:
        (mlen,) = struct.unpack("<Q", rec[:8])
        meta = json.loads(rec[8:8 + mlen])
        blob = rec[8 + mlen:]
        if len(blob) != meta["frames"] * z * 8:
            raise binio.FormatError(f"{path}: corrupted record (posterior blob size)")
        out.append(PosteriorSequence(binio.unpack_floats(blob, (meta["frames"], z)), meta["id"]))
    return header, out


def save_selection(path, selection: CorpusSelection, vocabulary_hash: str) -> None:
    z = selection.outcomes[0].selected_posteriors.vocab_size if selection.outcomes else 0
    header = {
        "strategy": selection.strategy.value,
        "vocabulary_hash": vocabulary_hash,
        "vocab_size": z,
        "win_counts": selection.win_counts,
        "skipped": list(selection.skipped),
        "n_outcomes": len(selection.outcomes),
    }
    records = []
    for o in selection.outcomes:
        meta = json.dumps({
            "id": o.selected_posteriors.utterance_id,
            "frames": o.selected_posteriors.num_frames,
            "winning_teacher": o.winning_teacher,
            "per_teacher_scores": o.per_teacher_scores,
            "pseudo_transcript": [int(x) for x in o.pseudo_transcript],
            "sequence_confidence": o.sequence_confidence,
        }, sort_keys=True, separators=(",", ":")).encode()
        records.append(struct.pack("<Q", len(meta)) + meta
                       + binio.pack_floats(o.selected_posteriors.probs))
    binio.write_container(path, "selection", SELECTION_FORMAT_VERSION, header, records)


def load_selection(path) -> CorpusSelection:
    header, records = binio.read_container(path, "selection", SELECTION_FORMAT_VERSION)
    strategy = Strategy(header["strategy"])
    z = header["vocab_size"]
    outcomes = []
    for rec in records:
        (mlen,) = struct.unpack("<Q", rec[:8])
        meta = json.loads(rec[8:8 + mlen])
        blob = rec[8 + mlen:]
        if len(blob) != meta["frames"] * z * 8:
            raise binio.FormatError(f"{path}: corrupted record (posterior blob size)")
        probs = binio.unpack_floats(blob, (meta["frames"], z))
        outcomes.append(SelectionOutcome(
            strategy=strategy,
            selected_posteriors=PosteriorSequence(probs, meta["id"]),
            winning_teacher=meta["winning_teacher"],
            per_teacher_scores=meta["per_teacher_scores"],
            pseudo_transcript=np.asarray(meta["pseudo_transcript"], dtype=np.int64),
            sequence_confidence=meta["sequence_confidence"],
        ))
    return CorpusSelection(strategy=strategy, outcomes=outcomes,
                           win_counts=header["win_counts"],
                           skipped=[tuple(s) for s in header["skipped"]])
