"""Utterance/corpus data model, synthetic domain generation, and persistence."""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

from . import binio
from .vocab import Vocabulary, symbol_prototypes

CORPUS_FORMAT_VERSION = 1

# Counts every access to Utterance.transcript; lets callers prove a code path
# (student training) never touched the labels.
_TRANSCRIPT_READS = 0


def transcript_read_count() -> int:
    return _TRANSCRIPT_READS


class Utterance:
    """One utterance: feature frames plus an optional reference transcript.

    ``transcript`` is a counted property so label accesses are auditable;
    use :func:`transcript_read_count` deltas around a code region.
    """

    __slots__ = ("id", "features", "domain_tag", "_transcript")

    def __init__(self, id: str, features: np.ndarray,
                 transcript: np.ndarray | None = None, domain_tag: str = "") -> None:
        features = np.asarray(features, dtype=np.float64)
        if features.ndim != 2 or features.shape[0] < 1:
            raise ValueError(f"utterance {id!r}: features must be [T>=1, F]")
        self.id = id
        self.features = features
        self.domain_tag = domain_tag
        self._transcript = None if transcript is None else np.asarray(transcript, dtype=np.int64)

    @property
    def transcript(self) -> np.ndarray | None:
        global _TRANSCRIPT_READS
        _TRANSCRIPT_READS += 1
        return self._transcript

    @property
    def has_transcript(self) -> bool:
        """Presence check that does not count as a label read."""
        return self._transcript is not None

    @property
    def num_frames(self) -> int:
        return self.features.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    def without_transcript(self) -> "Utterance":
        return Utterance(self.id, self.features, None, self.domain_tag)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Utterance):
            return NotImplemented
        if self.id != other.id or self.domain_tag != other.domain_tag:
            return False
        if not np.array_equal(self.features, other.features):
            return False
        a, b = self._transcript, other._transcript
        if (a is None) != (b is None):
            return False
        return a is None or np.array_equal(a, b)

    def __repr__(self) -> str:
        t = "none" if self._transcript is None else f"len={len(self._transcript)}"
        return f"Utterance(id={self.id!r}, frames={self.num_frames}, transcript={t})"


@dataclass
class Corpus:
    """A named, seeded collection of utterances sharing one vocabulary."""

    name: str
    domain_tag: str
    vocabulary: Vocabulary
    utterances: list[Utterance]
    generation_seed: int | None = None

    def __post_init__(self) -> None:
        if self.utterances:
            f = self.utterances[0].feature_dim
            for u in self.utterances:
                if u.feature_dim != f:
                    raise ValueError(f"corpus {self.name!r}: inconsistent feature dims")
                if u._transcript is not None:
                    t = u._transcript
                    if t.size and (t.min() < 0 or t.max() >= self.vocabulary.size):
                        raise ValueError(f"utterance {u.id!r}: transcript index out of range")
                    if t.size and np.any(t == self.vocabulary.blank_index):
                        raise ValueError(f"utterance {u.id!r}: transcript contains blank")

    def __len__(self) -> int:
        return len(self.utterances)

    @property
    def feature_dim(self) -> int:
        if not self.utterances:
            raise ValueError("empty corpus has no feature dim")
        return self.utterances[0].feature_dim

    def without_transcripts(self) -> "Corpus":
        return Corpus(self.name, self.domain_tag, self.vocabulary,
                      [u.without_transcript() for u in self.utterances], self.generation_seed)


@dataclass(eq=False)
class DomainSpec:
    """Parametric recipe for one synthetic acoustic domain.

    Features for a symbol are ``scale @ prototype + bias`` plus isotropic
    gaussian noise; the affine transform is what makes domains mutually
    out-of-domain while sharing symbol identities.
    """

    name: str
    emission_noise_std: float
    feature_scale: np.ndarray
    feature_bias: np.ndarray
    frames_per_symbol: tuple[int, int]
    utterance_length_range: tuple[int, int]
    lexicon: tuple[str, ...]

    def __post_init__(self) -> None:
        self.feature_scale = np.asarray(self.feature_scale, dtype=np.float64)
        self.feature_bias = np.asarray(self.feature_bias, dtype=np.float64)
        if self.emission_noise_std < 0:
            raise ValueError("emission_noise_std must be >= 0")
        if self.feature_scale.ndim != 2 or self.feature_scale.shape[0] != self.feature_scale.shape[1]:
            raise ValueError("feature_scale must be square")
        if self.feature_bias.shape != (self.feature_scale.shape[0],):
            raise ValueError("feature_bias dimension does not match feature_scale")
        lo, hi = self.frames_per_symbol
        if not (1 <= lo <= hi):
            raise ValueError("frames_per_symbol range must satisfy 1 <= lo <= hi")
        lo, hi = self.utterance_length_range
        if not (1 <= lo <= hi):
            raise ValueError("utterance_length_range must satisfy 1 <= lo <= hi")
        self.lexicon = tuple(self.lexicon)

    @property
    def feature_dim(self) -> int:
        return self.feature_scale.shape[0]

    def differs_from(self, other: "DomainSpec") -> bool:
        """True if the two specs differ in transform, noise, or lexicon."""
        return (not np.array_equal(self.feature_scale, other.feature_scale)
                or not np.array_equal(self.feature_bias, other.feature_bias)
                or self.emission_noise_std != other.emission_noise_std
                or self.lexicon != other.lexicon)


def generate_corpus(spec: DomainSpec, vocab: Vocabulary, n_utterances: int,
                    seed: int, name: str | None = None) -> Corpus:
    """Synthesize a corpus: sampled lexicon words rendered as noisy prototype frames.

    Deterministic: identical (spec, vocab, n_utterances, seed) yields a
    byte-identical corpus.
    """
    if n_utterances < 1:
        raise ValueError("n_utterances must be >= 1")
    if not spec.lexicon:
        raise ValueError(f"domain {spec.name!r}: empty lexicon")
    if np.linalg.matrix_rank(spec.feature_scale) < spec.feature_dim:
        raise ValueError(f"domain {spec.name!r}: degenerate (non-invertible) feature transform")

    protos = symbol_prototypes(vocab, spec.feature_dim)
    transformed = protos @ spec.feature_scale.T + spec.feature_bias

    rng = np.random.default_rng(seed)
    word_indices = [vocab.word_to_indices(w) for w in spec.lexicon]
    flo, fhi = spec.frames_per_symbol
    wlo, whi = spec.utterance_length_range

    utterances = []
    for i in range(n_utterances):
        n_words = int(rng.integers(wlo, whi + 1))
        picks = rng.integers(0, len(spec.lexicon), size=n_words)
        transcript: list[int] = []
        for k, wi in enumerate(picks):
            if k > 0:
                transcript.append(vocab.word_separator_index)
            transcript.extend(word_indices[int(wi)])
        frames = []
        for sym in transcript:
            count = int(rng.integers(flo, fhi + 1))
            block = np.tile(transformed[sym], (count, 1))
            if spec.emission_noise_std > 0:
                block = block + rng.normal(0.0, spec.emission_noise_std, size=block.shape)
            frames.append(block)
        features = np.concatenate(frames, axis=0)
        utterances.append(Utterance(
            id=f"{spec.name}-{seed}-{i:05d}",
            features=features,
            transcript=np.asarray(transcript, dtype=np.int64),
            domain_tag=spec.name,
        ))
    return Corpus(name=name or spec.name, domain_tag=spec.name, vocabulary=vocab,
                  utterances=utterances, generation_seed=seed)


def save_corpus(corpus: Corpus, path) -> None:
    header = {
        "name": corpus.name,
        "domain_tag": corpus.domain_tag,
        "generation_seed": corpus.generation_seed,
        "vocabulary": corpus.vocabulary.to_dict(),
        "vocabulary_hash": corpus.vocabulary.content_hash(),
        "feature_dim": corpus.feature_dim if corpus.utterances else 0,
        "n_utterances": len(corpus.utterances),
    }
    records = []
    for u in corpus.utterances:
        meta = {
            "id": u.id,
            "domain_tag": u.domain_tag,
            "frames": u.num_frames,
            "transcript": None if u._transcript is None else [int(x) for x in u._transcript],
        }
        mblob = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode()
        records.append(struct.pack("<Q", len(mblob)) + mblob + binio.pack_floats(u.features))
    binio.write_container(path, "corpus", CORPUS_FORMAT_VERSION, header, records)


def load_corpus(path) -> Corpus:
    header, records = binio.read_container(path, "corpus", CORPUS_FORMAT_VERSION)
    vocab = Vocabulary.from_dict(header["vocabulary"])
    if vocab.content_hash() != header["vocabulary_hash"]:
        raise binio.FormatError(f"{path}: vocabulary-hash mismatch")
    feature_dim = header["feature_dim"]
    utterances = []
    for rec in records:
        if len(rec) < 8:
            raise binio.FormatError(f"{path}: corrupted record (missing meta length)")
        (mlen,) = struct.unpack("<Q", rec[:8])
        if 8 + mlen > len(rec):
            raise binio.FormatError(f"{path}: corrupted record (truncated meta)")
        meta = json.loads(rec[8:8 + mlen])
        blob = rec[8 + mlen:]
        expected = meta["frames"] * feature_dim * 8
        if len(blob) != expected:
            raise binio.FormatError(f"{path}: corrupted record (feature blob size)")
        features = binio.unpack_floats(blob, (meta["frames"], feature_dim))
        transcript = None if meta["transcript"] is None else np.asarray(meta["transcript"], dtype=np.int64)
        utterances.append(Utterance(meta["id"], features, transcript, meta["domain_tag"]))
    if len(utterances) != header["n_utterances"]:
        raise binio.FormatError(f"{path}: corrupted record (utterance count)")
    return Corpus(name=header["name"], domain_tag=header["domain_tag"], vocabulary=vocab,
                  utterances=utterances, generation_seed=header["generation_seed"])


def split_corpus(corpus: Corpus, fractions: list[float], seed: int) -> list[Corpus]:
    """Disjoint covering partition, deterministic under the seed.

    Part sizes come from cumulative rounding so they always sum to the corpus
    size ([0.5, 0.5] on 10 utterances gives exactly {5, 5}).
    """
    fractions = [float(f) for f in fractions]
    if not fractions or any(f < 0 for f in fractions):
        raise ValueError("fractions must be non-negative and non-empty")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError(f"fractions must sum to 1 (got {sum(fractions)})")
    n = len(corpus.utterances)
    perm = np.random.default_rng(seed).permutation(n)
    bounds = [0]
    cum = 0.0
    for f in fractions:
        cum += f
        bounds.append(round(cum * n))
    bounds[-1] = n
    parts = []
    for i in range(len(fractions)):
        idx = sorted(perm[bounds[i]:bounds[i + 1]].tolist())
        parts.append(Corpus(
            name=f"{corpus.name}/split{i}",
            domain_tag=corpus.domain_tag,
            vocabulary=corpus.vocabulary,
            utterances=[corpus.utterances[j] for j in idx],
            generation_seed=None,
        ))
    return parts
