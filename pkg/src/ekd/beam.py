"""Time-synchronous beam search over CTC posteriors with LM shallow fusion.

Hypotheses are (collapsed prefix, last path symbol) states scored by the
best-alignment acoustic log probability plus, when a language model is
supplied, ``lm_weight * ln p_lm`` for every completed word and a per-word
insertion bonus. Word boundaries are the vocabulary's separator symbol; the
trailing partial word and the sentence end are scored at finalization.

With beam_width=1, no LM and zero bonus this reduces exactly to greedy
decoding (the single kept state always extends by the frame argmax).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .ctc import PosteriorSequence
from .lm import BOS, EOS, UNK, NgramLm
from .vocab import Vocabulary

LN10 = math.log(10.0)
NO_LAST = -1


@dataclass
class BeamConfig:
    beam_width: int = 12
    lm_weight: float = 0.4
    word_insertion_bonus: float = 0.5

    def __post_init__(self) -> None:
        if self.beam_width < 1:
            raise ValueError("beam_width must be >= 1")
        if self.lm_weight < 0:
            raise ValueError("lm_weight must be >= 0")


class _Hyp:
    __slots__ = ("prefix", "last", "score", "context", "partial", "n_words")

    def __init__(self, prefix, last, score, context, partial, n_words):
        self.prefix = prefix      # collapsed symbol indices so far
        self.last = last          # last path symbol (NO_LAST after blank/start)
        self.score = score        # acoustic + committed LM + committed bonus
        self.context = context    # completed words (trimmed to LM order)
        self.partial = partial    # graphemes of the in-progress word
        self.n_words = n_words


def _word_of(partial: tuple[int, ...], vocab: Vocabulary) -> str:
    return "".join(vocab.graphemes[i] for i in partial)


def beam_decode(posteriors: PosteriorSequence, lm: NgramLm | None,
                config: BeamConfig, vocab: Vocabulary) -> list[str]:
    """Best word sequence under acoustic + (optional) LM + bonus scoring."""
    lp = posteriors.log_probs()
    T, z = lp.shape
    if z != vocab.size:
        raise ValueError(f"posterior width {z} does not match vocabulary size {vocab.size}")
    blank = vocab.blank_index
    sep = vocab.word_separator_index
    fuse = lm is not None and config.lm_weight > 0
    lm_scale = config.lm_weight * LN10
    bonus = config.word_insertion_bonus

    def commit_word(hyp_score, context, partial, n_words):
        word = _word_of(partial, vocab)
        score = hyp_score + bonus
        if fuse:
            score += lm_scale * lm.log10_prob(word, context)
            if lm.order > 1:
                context = (context + (word if word in lm.vocabulary else UNK,))[-(lm.order - 1):]
        return score, context, n_words + 1

    start_context = (BOS,) * (lm.order - 1) if fuse else ()
    beams: dict[tuple, _Hyp] = {}
    start = _Hyp(prefix=(), last=NO_LAST, score=0.0, context=start_context, partial=(), n_words=0)
    beams[(start.prefix, start.last)] = start

    for t in range(T):
        frame = lp[t]
        nxt: dict[tuple, _Hyp] = {}
        for hyp in beams.values():
            for g in range(z):
                score = hyp.score + frame[g]
                if g == blank:
                    cand = _Hyp(hyp.prefix, NO_LAST, score, hyp.context, hyp.partial, hyp.n_words)
                elif g == hyp.last:
                    cand = _Hyp(hyp.prefix, g, score, hyp.context, hyp.partial, hyp.n_words)
                elif g == sep:
                    context, partial, n_words = hyp.context, hyp.partial, hyp.n_words
                    if partial:
                        score, context, n_words = commit_word(score, context, partial, n_words)
                        partial = ()
                    cand = _Hyp(hyp.prefix + (g,), g, score, context, partial, n_words)
                else:
                    cand = _Hyp(hyp.prefix + (g,), g, score, hyp.context,
                                hyp.partial + (g,), hyp.n_words)
                key = (cand.prefix, cand.last)
                kept = nxt.get(key)
                if kept is None or cand.score > kept.score:
                    nxt[key] = cand
        ranked = sorted(nxt.values(), key=lambda h: (-h.score, h.prefix, h.last))
        beams = {(h.prefix, h.last): h for h in ranked[:config.beam_width]}

    best_words: list[str] | None = None
    best_final = -np.inf
    for hyp in sorted(beams.values(), key=lambda h: (h.prefix, h.last)):
        final = hyp.score
        context = hyp.context
        if hyp.partial:
            final, context, _ = commit_word(final, context, hyp.partial, hyp.n_words)
        if fuse:
            final += lm_scale * lm.log10_prob(EOS, context)
        if final > best_final:
            best_final = final
            best_words = vocab.indices_to_words(hyp.prefix)
    return best_words if best_words is not None else []
