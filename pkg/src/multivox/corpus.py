"""Multi-speaker utterance corpus and training-set construction strategies.

A corpus is a fixed speaker table plus three splits (train / validation /
test) of utterance ids per speaker. Splits are read from the corpus file,
never computed here, so that experiments stay reproducible. Feature payloads
(the actual frame matrices) are optional: a metadata-only corpus supports
every training-set builder, which only ever touches ids.

Training-set builders are deterministic functions of (corpus, recipe, seed);
each call owns its own random generator seeded explicitly.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Iterable, Mapping, Sequence

import numpy as np

from .errors import ValidationError
from .features import AcousticSequence, FeatureConfig

if TYPE_CHECKING:
    from .synthgen import SpeakerProfile

SPLITS = ("train", "validation", "test")

#: Strategy tags accepted by TrainingSetRecipe.
STRATEGIES = ("SD", "UN", "MU", "OV", "BOOTSTRAP")

#: Default number of with-replacement draws per speaker for bootstrap sessions.
DEFAULT_BOOTSTRAP_DRAWS = 3000


@dataclass(frozen=True)
class SpeakerId:
    """A speaker identity plus its position when ordered by training-set size."""

    id: str
    display_rank: int


@dataclass
class Utterance:
    """One aligned pair of linguistic and acoustic frame sequences."""

    utt_id: str
    speaker: str
    linguistic: np.ndarray  # (n_frames, d_lin)
    acoustic: AcousticSequence

    def __post_init__(self):
        self.linguistic = np.asarray(self.linguistic)
        if self.linguistic.ndim != 2:
            raise ValidationError(
                f"utterance {self.utt_id}: linguistic matrix must be 2-D, "
                f"got shape {self.linguistic.shape}"
            )
        if self.linguistic.shape[0] != self.acoustic.n_frames:
            raise ValidationError(
                f"utterance {self.utt_id}: linguistic and acoustic lengths differ "
                f"({self.linguistic.shape[0]} vs {self.acoustic.n_frames})"
            )
        if self.n_frames < 1:
            raise ValidationError(f"utterance {self.utt_id}: empty frame sequence")

    @property
    def n_frames(self) -> int:
        return self.acoustic.n_frames

    @property
    def d_lin(self) -> int:
        return self.linguistic.shape[1]


class Corpus:
    """Speaker table, split tables and (optionally) utterance payloads."""

    def __init__(
        self,
        speakers: Sequence[SpeakerId],
        splits: Mapping[str, Mapping[str, Sequence[str]]],
        feature_config: FeatureConfig,
        utterances: Mapping[str, Utterance] | None = None,
        profiles: Mapping[str, "SpeakerProfile"] | None = None,
    ):
        self.speakers = sorted(speakers, key=lambda s: s.display_rank)
        self.feature_config = feature_config
        self.profiles = dict(profiles) if profiles else None
        self._payloads = dict(utterances) if utterances else {}

        ids = [s.id for s in self.speakers]
        if len(set(ids)) != len(ids):
            raise ValidationError("duplicate speaker ids in corpus")
        ranks = sorted(s.display_rank for s in self.speakers)
        if ranks != list(range(len(self.speakers))):
            raise ValidationError("display_rank must be a permutation of 0..n_speakers-1")

        self.splits: dict[str, dict[str, list[str]]] = {}
        seen: dict[str, str] = {}
        for split in SPLITS:
            table = splits.get(split, {})
            self.splits[split] = {}
            for spk in ids:
                utt_ids = list(table.get(spk, ()))
                for u in utt_ids:
                    if u in seen:
                        raise ValidationError(
                            f"utterance id {u} appears in both {seen[u]} and {split}"
                        )
                    seen[u] = split
                self.splits[split][spk] = utt_ids
        unknown = set(splits) - set(SPLITS)
        if unknown:
            raise ValidationError(f"unknown split names: {sorted(unknown)}")
        for utt_id, utt in self._payloads.items():
            if utt_id not in seen:
                raise ValidationError(f"payload for unknown utterance id {utt_id}")
            if utt.speaker not in self._speaker_set:
                raise ValidationError(
                    f"utterance {utt_id} names unknown speaker {utt.speaker}"
                )

    @property
    def _speaker_set(self) -> set[str]:
        return {s.id for s in self.speakers}

    @property
    def speaker_ids(self) -> list[str]:
        """Speaker ids in display_rank order."""
        return [s.id for s in self.speakers]

    @property
    def n_speakers(self) -> int:
        return len(self.speakers)

    def speaker(self, speaker_id: str) -> SpeakerId:
        for s in self.speakers:
            if s.id == speaker_id:
                return s
        raise ValidationError(f"unknown speaker: {speaker_id}")

    def speaker_index(self, speaker_id: str) -> int:
        """Index of the speaker in display_rank order (the one-hot position)."""
        return self.speaker(speaker_id).display_rank

    def split_ids(self, split: str, speaker_id: str) -> list[str]:
        if split not in SPLITS:
            raise ValidationError(f"unknown split: {split}")
        if speaker_id not in self._speaker_set:
            raise ValidationError(f"unknown speaker: {speaker_id}")
        return list(self.splits[split][speaker_id])

    def train_ids(self, speaker_id: str) -> list[str]:
        return self.split_ids("train", speaker_id)

    def all_split_ids(self, split: str) -> list[tuple[str, str]]:
        """All (speaker, utt_id) pairs of a split, speakers in rank order."""
        out = []
        for spk in self.speaker_ids:
            out.extend((spk, u) for u in self.splits[split][spk])
        return out

    @property
    def has_payloads(self) -> bool:
        return bool(self._payloads)

    def utterance(self, utt_id: str) -> Utterance:
        try:
            return self._payloads[utt_id]
        except KeyError:
            if not self._payloads:
                raise ValidationError(
                    f"corpus is metadata-only: no payload for {utt_id}"
                ) from None
            raise ValidationError(f"no payload for utterance {utt_id}") from None

    @property
    def corpus_id(self) -> str:
        """Stable content hash of the speaker table and split id lists."""
        h = hashlib.sha256()
        for s in self.speakers:
            h.update(f"{s.id}:{s.display_rank};".encode())
        for split in SPLITS:
            for spk in self.speaker_ids:
                h.update(f"{split}/{spk}:".encode())
                h.update(",".join(self.splits[split][spk]).encode())
                h.update(b"|")
        return h.hexdigest()[:16]

    @classmethod
    def from_counts(
        cls,
        train_counts: Mapping[str, int],
        val_count: int = 50,
        test_count: int = 100,
        feature_config: FeatureConfig | None = None,
    ) -> "Corpus":
        """Metadata-only corpus with synthetic utterance ids.

        Speakers get display_rank in ascending train-count order (ties broken
        by id) so the imbalance ordering is explicit. Useful for exercising
        the training-set builders without any feature data.
        """
        ordered = sorted(train_counts.items(), key=lambda kv: (kv[1], kv[0]))
        speakers = [SpeakerId(spk, rank) for rank, (spk, _) in enumerate(ordered)]
        splits: dict[str, dict[str, list[str]]] = {s: {} for s in SPLITS}
        for spk, n_train in ordered:
            splits["train"][spk] = [f"{spk}_tr{i:05d}" for i in range(n_train)]
            splits["validation"][spk] = [f"{spk}_va{i:05d}" for i in range(val_count)]
            splits["test"][spk] = [f"{spk}_te{i:05d}" for i in range(test_count)]
        return cls(speakers, splits, feature_config or FeatureConfig())


@dataclass(frozen=True)
class TrainingSetRecipe:
    """How a training set was (or should be) constructed.

    ``strategy`` is one of SD / UN / MU / OV / BOOTSTRAP. SD requires
    ``speaker``; BOOTSTRAP requires ``draws_per_speaker``. ``seed`` matters
    only for the randomized strategies (UN, OV, BOOTSTRAP).
    """

    strategy: str
    seed: int = 0
    speaker: str | None = None
    draws_per_speaker: int | None = None

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValidationError(
                f"unknown strategy {self.strategy!r}; expected one of {STRATEGIES}"
            )
        if self.strategy == "SD" and not self.speaker:
            raise ValidationError("SD recipe requires a speaker id")
        if self.strategy == "BOOTSTRAP":
            if self.draws_per_speaker is None:
                object.__setattr__(self, "draws_per_speaker", DEFAULT_BOOTSTRAP_DRAWS)
            if self.draws_per_speaker < 1:
                raise ValidationError(
                    f"draws_per_speaker must be >= 1, got {self.draws_per_speaker}"
                )

    def to_dict(self) -> dict:
        d = {"strategy": self.strategy, "seed": self.seed}
        if self.speaker is not None:
            d["speaker"] = self.speaker
        if self.draws_per_speaker is not None:
            d["draws_per_speaker"] = self.draws_per_speaker
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainingSetRecipe":
        return cls(**d)


@dataclass
class TrainingSet:
    """A multiset of (speaker, utt_id) references into one corpus's train split.

    ``by_speaker`` keeps draw order per speaker; duplicates are allowed for
    strategies that sample with replacement or replicate whole splits.
    """

    corpus_id: str
    recipe: TrainingSetRecipe
    by_speaker: dict[str, list[str]] = field(default_factory=dict)

    @property
    def items(self) -> list[tuple[str, str]]:
        """All references with multiplicity, speakers in insertion order."""
        out = []
        for spk, utts in self.by_speaker.items():
            out.extend((spk, u) for u in utts)
        return out

    @property
    def unique_counts(self) -> dict[str, int]:
        """Per speaker, count of distinct utterance ids."""
        return {spk: len(set(utts)) for spk, utts in self.by_speaker.items()}

    @property
    def per_speaker_counts(self) -> dict[str, int]:
        """Per speaker, total multiplicity."""
        return {spk: len(utts) for spk, utts in self.by_speaker.items()}

    @property
    def total_size(self) -> int:
        return sum(len(utts) for utts in self.by_speaker.values())

    @property
    def speaker_ids(self) -> list[str]:
        return list(self.by_speaker.keys())

    def validate_against(self, corpus: Corpus) -> None:
        if self.corpus_id != corpus.corpus_id:
            raise ValidationError(
                f"training set was built for corpus {self.corpus_id}, "
                f"not {corpus.corpus_id}"
            )
        for spk, utts in self.by_speaker.items():
            pool = set(corpus.train_ids(spk))
            bad = set(utts) - pool
            if bad:
                raise ValidationError(
                    f"training set references ids outside {spk}'s train split: "
                    f"{sorted(bad)[:5]}"
                )

    def to_dict(self) -> dict:
        return {
            "corpus_id": self.corpus_id,
            "recipe": self.recipe.to_dict(),
            "by_speaker": {spk: list(utts) for spk, utts in self.by_speaker.items()},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainingSet":
        return cls(
            corpus_id=d["corpus_id"],
            recipe=TrainingSetRecipe.from_dict(d["recipe"]),
            by_speaker={spk: list(utts) for spk, utts in d["by_speaker"].items()},
        )


def _train_pool(corpus: Corpus, speaker_id: str) -> list[str]:
    pool = corpus.train_ids(speaker_id)
    if not pool:
        raise ValidationError(f"speaker {speaker_id} has empty training data")
    return pool


def build_sd(corpus: Corpus, speaker: str) -> TrainingSet:
    """Speaker-dependent set: that speaker's full train split, each id once."""
    pool = _train_pool(corpus, speaker)
    recipe = TrainingSetRecipe(strategy="SD", speaker=speaker)
    return TrainingSet(corpus.corpus_id, recipe, {speaker: list(pool)})


def build_pooled(corpus: Corpus) -> TrainingSet:
    """Union of all speakers' train splits, each id once (the MU strategy)."""
    recipe = TrainingSetRecipe(strategy="MU")
    by_speaker = {spk: list(corpus.train_ids(spk)) for spk in corpus.speaker_ids}
    return TrainingSet(corpus.corpus_id, recipe, by_speaker)


def build_undersampled(corpus: Corpus, seed: int) -> TrainingSet:
    """Every speaker contributes the global minimum split size, drawn without replacement."""
    sizes = {spk: len(_train_pool(corpus, spk)) for spk in corpus.speaker_ids}
    m = min(sizes.values())
    rng = np.random.default_rng(seed)
    by_speaker = {}
    for spk in corpus.speaker_ids:
        pool = np.asarray(corpus.train_ids(spk), dtype=object)
        idx = rng.permutation(len(pool))[:m]
        by_speaker[spk] = pool[np.sort(idx)].tolist()
    recipe = TrainingSetRecipe(strategy="UN", seed=seed)
    return TrainingSet(corpus.corpus_id, recipe, by_speaker)


def build_oversampled(corpus: Corpus, seed: int) -> TrainingSet:
    """Every speaker contributes the global maximum split size.

    The full split is replicated ``M // N`` times, then ``M mod N`` extra ids
    are drawn without replacement, keeping per-id multiplicities within 1 of
    each other.
    """
    sizes = {spk: len(_train_pool(corpus, spk)) for spk in corpus.speaker_ids}
    target = max(sizes.values())
    rng = np.random.default_rng(seed)
    by_speaker = {}
    for spk in corpus.speaker_ids:
        pool = corpus.train_ids(spk)
        reps, rem = divmod(target, len(pool))
        utts = pool * reps
        if rem:
            pool_arr = np.asarray(pool, dtype=object)
            idx = rng.permutation(len(pool))[:rem]
            utts = utts + pool_arr[np.sort(idx)].tolist()
        by_speaker[spk] = utts
    recipe = TrainingSetRecipe(strategy="OV", seed=seed)
    return TrainingSet(corpus.corpus_id, recipe, by_speaker)


def build_bootstrap(corpus: Corpus, draws_per_speaker: int, seed: int) -> TrainingSet:
    """Fixed-size per-speaker sample drawn uniformly WITH replacement."""
    if draws_per_speaker < 1:
        raise ValidationError(f"draws_per_speaker must be >= 1, got {draws_per_speaker}")
    rng = np.random.default_rng(seed)
    by_speaker = {}
    for spk in corpus.speaker_ids:
        pool = np.asarray(_train_pool(corpus, spk), dtype=object)
        idx = rng.integers(0, len(pool), size=draws_per_speaker)
        by_speaker[spk] = pool[idx].tolist()
    recipe = TrainingSetRecipe(
        strategy="BOOTSTRAP", seed=seed, draws_per_speaker=draws_per_speaker
    )
    return TrainingSet(corpus.corpus_id, recipe, by_speaker)


def build_from_recipe(corpus: Corpus, recipe: TrainingSetRecipe) -> TrainingSet:
    """Dispatch to the builder named by the recipe."""
    if recipe.strategy == "SD":
        return build_sd(corpus, recipe.speaker)
    if recipe.strategy == "UN":
        return build_undersampled(corpus, recipe.seed)
    if recipe.strategy == "MU":
        return build_pooled(corpus)
    if recipe.strategy == "OV":
        return build_oversampled(corpus, recipe.seed)
    if recipe.strategy == "BOOTSTRAP":
        return build_bootstrap(corpus, recipe.draws_per_speaker, recipe.seed)
    raise ValidationError(f"unknown strategy {recipe.strategy!r}")


def union_unique(sets: Iterable[TrainingSet]) -> dict[str, int]:
    """Per speaker, count of distinct utterance ids across several sets.

    All sets must reference the same corpus.
    """
    sets = list(sets)
    if not sets:
        raise ValidationError("union_unique requires at least one training set")
    corpus_ids = {s.corpus_id for s in sets}
    if len(corpus_ids) != 1:
        raise ValidationError(
            f"training sets reference different corpora: {sorted(corpus_ids)}"
        )
    speakers: dict[str, set[str]] = {}
    for s in sets:
        for spk, utts in s.by_speaker.items():
            speakers.setdefault(spk, set()).update(utts)
    return {spk: len(utts) for spk, utts in speakers.items()}


def expected_unique_count(pool_size: int, draws: int) -> float:
    """Closed-form mean number of distinct ids after uniform draws with replacement.

    ``N * (1 - (1 - 1/N) ** d)`` for a pool of N and d draws.
    """
    n = float(pool_size)
    return n * (1.0 - (1.0 - 1.0 / n) ** draws)
