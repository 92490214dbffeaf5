"""Experiment configuration: a YAML-backed recipe expanded into concrete
domain specs, model/training/decoding settings, and the seed list."""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np
import yaml

from .beam import BeamConfig
from .corpus import DomainSpec
from .kd import KdConfig
from .model import ModelConfig
from .training import TrainConfig
from .vocab import Vocabulary, default_vocabulary


def derive_seed(master: int, *tags) -> int:
    """Stable sub-seed from a master seed and a tag path."""
    material = f"{master}:" + ":".join(str(t) for t in tags)
    return int.from_bytes(hashlib.sha256(material.encode()).digest()[:8], "little") % (2 ** 63)


def build_transform(feature_dim: int, strength: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Affine domain transform I + strength * G with G spectral-normed below
    one, so any strength in [0, 1] stays invertible; bias scales with strength."""
    if not 0.0 <= strength <= 1.0:
        raise ValueError("transform strength must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    g = rng.normal(size=(feature_dim, feature_dim))
    g *= 0.95 / np.linalg.norm(g, 2)
    scale = np.eye(feature_dim) + strength * g
    bias = strength * 0.5 * rng.normal(size=feature_dim)
    return scale, bias


def build_lexicon(vocab: Vocabulary, n_words: int, seed: int,
                  word_length: tuple[int, int] = (2, 5),
                  exclude: set[str] | None = None) -> tuple[str, ...]:
    """Unique random words over the letter graphemes, with no adjacent
    repeated letters (keeps zero-noise corpora exactly frame-decodable)."""
    letters = [g for i, g in enumerate(vocab.graphemes)
               if i not in (vocab.blank_index, vocab.word_separator_index)]
    rng = np.random.default_rng(seed)
    taken = set(exclude or ())
    words: list[str] = []
    attempts = 0
    while len(words) < n_words:
        attempts += 1
        if attempts > 100000:
            raise ValueError("lexicon generation did not converge; enlarge the alphabet "
                             "or shorten the word list")
        length = int(rng.integers(word_length[0], word_length[1] + 1))
        chars = [letters[int(rng.integers(0, len(letters)))]]
        while len(chars) < length:
            c = letters[int(rng.integers(0, len(letters)))]
            if c != chars[-1]:
                chars.append(c)
        w = "".join(chars)
        if w not in taken:
            taken.add(w)
            words.append(w)
    return tuple(words)


@dataclass
class DomainRecipe:
    """Seeded recipe for one domain; expanded to a DomainSpec per experiment seed."""

    name: str
    train_size: int
    test_size: int
    emission_noise_std: float
    transform_strength: float
    transform_seed: int
    shared_words: int
    unique_words: int
    frames_per_symbol: tuple[int, int] = (2, 4)
    utterance_words: tuple[int, int] = (3, 6)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["frames_per_symbol"] = list(self.frames_per_symbol)
        d["utterance_words"] = list(self.utterance_words)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "DomainRecipe":
        d = dict(d)
        d["frames_per_symbol"] = tuple(d.get("frames_per_symbol", (2, 4)))
        d["utterance_words"] = tuple(d.get("utterance_words", (3, 6)))
        return cls(**d)


@dataclass
class SvccaSettings:
    n_frames: int = 512
    variance_fraction: float = 0.99
    sample_seed: int = 2024

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class ExperimentConfig:
    vocabulary_letters: str = "abcdefgh"
    feature_dim: int = 8
    teacher_domains: list[DomainRecipe] = field(default_factory=list)
    student_domain: DomainRecipe | None = None
    shared_lexicon_size: int = 16
    shared_lexicon_seed: int = 7000
    word_length: tuple[int, int] = (2, 5)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    student_train: TrainConfig | None = None
    kd: KdConfig = field(default_factory=KdConfig)
    beam: BeamConfig = field(default_factory=BeamConfig)
    lm_order: int = 3
    strategies: list[str] = field(default_factory=lambda: [
        "teacher_average", "framewise_max", "elitist"])
    seeds: list[int] = field(default_factory=lambda: [11, 12, 13, 14, 15])
    output_root: str = "runs/default"
    probe_wer_threshold: float | None = 0.15
    svcca: SvccaSettings = field(default_factory=SvccaSettings)
    allow_indomain: bool = False

    def __post_init__(self) -> None:
        if not self.teacher_domains:
            self.teacher_domains = _default_teacher_recipes()
        if self.student_domain is None:
            self.student_domain = _default_student_recipe()
        if self.student_train is None:
            self.student_train = self.train
        if self.lm_order < 1:
            raise ValueError("lm_order must be >= 1")
        if not self.seeds:
            raise ValueError("seeds must be non-empty")
        if len(set(d.name for d in self.all_domains())) != len(self.all_domains()):
            raise ValueError("domain names must be unique")

    def all_domains(self) -> list[DomainRecipe]:
        return [*self.teacher_domains, self.student_domain]

    def vocabulary(self) -> Vocabulary:
        return default_vocabulary(self.vocabulary_letters)

    def validate_ood(self) -> None:
        """The student domain must differ from every teacher domain unless
        in-domain runs were explicitly allowed."""
        self.expand_domains()

    def expand_domains(self) -> dict[str, DomainSpec]:
        """Concrete DomainSpecs; validates that distinct domains actually differ
        and that the student domain is genuinely out-of-domain."""
        vocab = self.vocabulary()
        shared = build_lexicon(vocab, self.shared_lexicon_size, self.shared_lexicon_seed,
                               self.word_length)
        specs: dict[str, DomainSpec] = {}
        used = set(shared)
        for recipe in self.all_domains():
            scale, bias = build_transform(self.feature_dim, recipe.transform_strength,
                                          recipe.transform_seed)
            rng = np.random.default_rng(derive_seed(self.shared_lexicon_seed, "pick", recipe.name))
            pick = sorted(rng.choice(len(shared), size=min(recipe.shared_words, len(shared)),
                                     replace=False).tolist())
            own = build_lexicon(vocab, recipe.unique_words,
                                derive_seed(self.shared_lexicon_seed, "own", recipe.name),
                                self.word_length, exclude=used)
            used |= set(own)
            lexicon = tuple([shared[i] for i in pick] + list(own))
            specs[recipe.name] = DomainSpec(
                name=recipe.name,
                emission_noise_std=recipe.emission_noise_std,
                feature_scale=scale,
                feature_bias=bias,
                frames_per_symbol=recipe.frames_per_symbol,
                utterance_length_range=recipe.utterance_words,
                lexicon=lexicon,
            )
        teachers = [r.name for r in self.teacher_domains]
        for i in range(len(teachers)):
            for j in range(i + 1, len(teachers)):
                if not specs[teachers[i]].differs_from(specs[teachers[j]]):
                    raise ValueError(f"domains {teachers[i]!r} and {teachers[j]!r} are identical; "
                                     "they must differ in transform, noise, or lexicon")
        student = self.student_domain.name
        for t in teachers:
            if not specs[student].differs_from(specs[t]):
                if not self.allow_indomain:
                    raise ValueError(
                        f"student domain {student!r} does not differ from teacher domain "
                        f"{t!r}; pass --allow-indomain to override")
        return specs

    # -- (de)serialization -------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "vocabulary_letters": self.vocabulary_letters,
            "feature_dim": self.feature_dim,
            "teacher_domains": [d.to_dict() for d in self.teacher_domains],
            "student_domain": self.student_domain.to_dict(),
            "shared_lexicon_size": self.shared_lexicon_size,
            "shared_lexicon_seed": self.shared_lexicon_seed,
            "word_length": list(self.word_length),
            "model": self.model.to_dict(),
            "train": _train_to_dict(self.train),
            # keep "defaults to train" alive across save/load round-trips
            "student_train": (None if self.student_train == self.train
                              else _train_to_dict(self.student_train)),
            "kd": {"alpha": self.kd.alpha, "temperature": self.kd.temperature,
                   "soft_label_mode": self.kd.soft_label_mode.value},
            "beam": {"beam_width": self.beam.beam_width, "lm_weight": self.beam.lm_weight,
                     "word_insertion_bonus": self.beam.word_insertion_bonus},
            "lm_order": self.lm_order,
            "strategies": list(self.strategies),
            "seeds": list(self.seeds),
            "output_root": self.output_root,
            "probe_wer_threshold": self.probe_wer_threshold,
            "svcca": self.svcca.to_dict(),
            "allow_indomain": self.allow_indomain,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        if "teacher_domains" in d:
            d["teacher_domains"] = [DomainRecipe.from_dict(x) for x in d["teacher_domains"]]
        if d.get("student_domain") is not None:
            d["student_domain"] = DomainRecipe.from_dict(d["student_domain"])
        if "word_length" in d:
            d["word_length"] = tuple(d["word_length"])
        if "model" in d:
            d["model"] = ModelConfig.from_dict(d["model"])
        if "train" in d:
            d["train"] = TrainConfig(**d["train"])
        if d.get("student_train") is not None:
            d["student_train"] = TrainConfig(**d["student_train"])
        if "kd" in d:
            d["kd"] = KdConfig(**d["kd"])
        if "beam" in d:
            d["beam"] = BeamConfig(**d["beam"])
        if "svcca" in d:
            d["svcca"] = SvccaSettings(**d["svcca"])
        return cls(**d)


def _train_to_dict(t: TrainConfig) -> dict:
    return {"epochs": t.epochs, "batch_size": t.batch_size, "learning_rate": t.learning_rate,
            "optimizer": t.optimizer, "gradient_clip": t.gradient_clip, "seed": t.seed,
            "eval_every": t.eval_every}


def _default_teacher_recipes() -> list[DomainRecipe]:
    # Unequal training sizes on purpose; the mid recipe shares its transform
    # direction with the student domain at a different strength, making it
    # the best-positioned (and best-resourced) teacher.
    return [
        DomainRecipe(name="alpha", train_size=120, test_size=36, emission_noise_std=0.35,
                     transform_strength=0.60, transform_seed=101, shared_words=10, unique_words=8),
        DomainRecipe(name="beta", train_size=280, test_size=36, emission_noise_std=0.30,
                     transform_strength=0.40, transform_seed=777, shared_words=12, unique_words=8),
        DomainRecipe(name="gamma", train_size=100, test_size=36, emission_noise_std=0.30,
                     transform_strength=0.65, transform_seed=303, shared_words=10, unique_words=8),
    ]


def _default_student_recipe() -> DomainRecipe:
    return DomainRecipe(name="delta", train_size=160, test_size=48, emission_noise_std=0.40,
                        transform_strength=0.75, transform_seed=777, shared_words=10,
                        unique_words=8)


def default_config() -> ExperimentConfig:
    return ExperimentConfig()


def apply_overrides(data: dict, overrides: list[str]) -> dict:
    """In-place dotted key=value overrides with YAML-parsed values."""
    for item in overrides:
        if "=" not in item:
            raise ValueError(f"override {item!r} must look like dotted.key=value")
        key, raw = item.split("=", 1)
        node = data
        parts = key.split(".")
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ValueError(f"override {item!r}: {p!r} is not a mapping")
        node[parts[-1]] = yaml.safe_load(raw)
    return data


def load_config(path, overrides: list[str] | None = None) -> ExperimentConfig:
    """Load a YAML config; ``overrides`` are dotted key=value pairs that win
    over file values (values parsed as YAML)."""
    with open(path) as f:
        data = yaml.safe_load(f) or {}
    if not isinstance(data, dict):
        raise ValueError(f"{path}: config root must be a mapping")
    return ExperimentConfig.from_dict(apply_overrides(data, overrides or []))


def save_config(config: ExperimentConfig, path) -> None:
    text = yaml.safe_dump(config.to_dict(), sort_keys=True)
    Path(path).write_text(text)
