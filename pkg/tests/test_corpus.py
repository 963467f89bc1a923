"""Corpus model and training-set construction strategies."""

import collections

import numpy as np
import pytest

from multivox.corpus import (
    Corpus,
    SpeakerId,
    TrainingSet,
    TrainingSetRecipe,
    build_bootstrap,
    build_from_recipe,
    build_oversampled,
    build_pooled,
    build_sd,
    build_undersampled,
    expected_unique_count,
    union_unique,
)
from multivox.errors import ValidationError
from multivox.features import FeatureConfig

# Per-speaker train-split sizes of the reference imbalanced corpus, in
# ascending order (ids follow its size-band naming).
REFERENCE_SPEAKERS = ["XS01", "XS02", "S03", "S04", "S05", "M06", "M07", "M08", "L09", "XL10"]
REFERENCE_COUNTS = [735, 994, 1393, 1568, 1749, 3024, 3983, 4364, 5516, 8750]


@pytest.fixture(scope="module")
def reference_corpus():
    return Corpus.from_counts(dict(zip(REFERENCE_SPEAKERS, REFERENCE_COUNTS)))


@pytest.fixture()
def small_corpus():
    return Corpus.from_counts({"a": 4, "b": 6, "c": 9}, val_count=1, test_count=1)


class TestCorpusModel:
    def test_rank_order(self, reference_corpus):
        assert reference_corpus.speaker_ids == REFERENCE_SPEAKERS
        assert reference_corpus.speaker_index("XL10") == 9

    def test_duplicate_speaker_rejected(self):
        with pytest.raises(ValidationError):
            Corpus(
                [SpeakerId("a", 0), SpeakerId("a", 1)],
                {"train": {"a": ["u1"]}},
                FeatureConfig(),
            )

    def test_rank_permutation_enforced(self):
        with pytest.raises(ValidationError):
            Corpus(
                [SpeakerId("a", 0), SpeakerId("b", 2)],
                {"train": {"a": ["u1"], "b": ["u2"]}},
                FeatureConfig(),
            )

    def test_split_overlap_rejected(self):
        with pytest.raises(ValidationError):
            Corpus(
                [SpeakerId("a", 0)],
                {"train": {"a": ["u1"]}, "test": {"a": ["u1"]}},
                FeatureConfig(),
            )

    def test_unknown_speaker(self, reference_corpus):
        with pytest.raises(ValidationError, match="nobody"):
            reference_corpus.train_ids("nobody")

    def test_metadata_only_payload_access(self, reference_corpus):
        with pytest.raises(ValidationError, match="metadata-only"):
            reference_corpus.utterance("XS01_tr00000")

    def test_corpus_id_stable(self, reference_corpus):
        other = Corpus.from_counts(dict(zip(REFERENCE_SPEAKERS, REFERENCE_COUNTS)))
        assert other.corpus_id == reference_corpus.corpus_id
        third = Corpus.from_counts({"a": 3})
        assert third.corpus_id != reference_corpus.corpus_id


class TestSpeakerDependent:
    def test_reference_counts(self, reference_corpus):
        ts = build_sd(reference_corpus, "XS01")
        assert ts.total_size == 735
        assert ts.unique_counts == {"XS01": 735}
        big = build_sd(reference_corpus, "XL10")
        assert big.total_size == 8750
        assert big.unique_counts["XL10"] == 8750

    def test_unknown_speaker_named_in_error(self, reference_corpus):
        with pytest.raises(ValidationError, match="ghost"):
            build_sd(reference_corpus, "ghost")

    def test_empty_split_rejected(self):
        corpus = Corpus.from_counts({"a": 0, "b": 3}, val_count=1, test_count=1)
        with pytest.raises(ValidationError, match="empty training data"):
            build_sd(corpus, "a")


class TestUndersampled:
    def test_reference_sizes(self, reference_corpus):
        ts = build_undersampled(reference_corpus, seed=1)
        assert ts.total_size == 7350
        assert all(n == 735 for n in ts.per_speaker_counts.values())

    def test_minimum_speaker_keeps_full_split(self, reference_corpus):
        full = set(reference_corpus.train_ids("XS01"))
        for seed in (1, 2):
            ts = build_undersampled(reference_corpus, seed=seed)
            assert set(ts.by_speaker["XS01"]) == full

    def test_no_duplicates(self, small_corpus):
        ts = build_undersampled(small_corpus, seed=0)
        for utts in ts.by_speaker.values():
            assert len(utts) == len(set(utts)) == 4

    def test_seed_changes_majority_subset(self, reference_corpus):
        a = build_undersampled(reference_corpus, seed=1)
        b = build_undersampled(reference_corpus, seed=2)
        assert set(a.by_speaker["XL10"]) != set(b.by_speaker["XL10"])

    def test_already_balanced_equals_pooled(self):
        corpus = Corpus.from_counts({"a": 5, "b": 5}, val_count=1, test_count=1)
        mu = build_pooled(corpus)
        for seed in (0, 1, 99):
            un = build_undersampled(corpus, seed=seed)
            assert {k: sorted(v) for k, v in un.by_speaker.items()} == {
                k: sorted(v) for k, v in mu.by_speaker.items()
            }

    def test_deterministic(self, reference_corpus):
        a = build_undersampled(reference_corpus, seed=42)
        b = build_undersampled(reference_corpus, seed=42)
        assert a.by_speaker == b.by_speaker


class TestPooled:
    def test_reference_total(self, reference_corpus):
        ts = build_pooled(reference_corpus)
        assert ts.total_size == 32_076
        assert ts.unique_counts == dict(zip(REFERENCE_SPEAKERS, REFERENCE_COUNTS))

    def test_single_speaker_equals_sd(self):
        corpus = Corpus.from_counts({"solo": 7}, val_count=1, test_count=1)
        assert build_pooled(corpus).by_speaker == build_sd(corpus, "solo").by_speaker


class TestOversampled:
    def test_reference_sizes(self, reference_corpus):
        ts = build_oversampled(reference_corpus, seed=3)
        assert ts.total_size == 87_500
        assert all(n == 8750 for n in ts.per_speaker_counts.values())

    def test_majority_speaker_unchanged(self, reference_corpus):
        ts = build_oversampled(reference_corpus, seed=3)
        assert sorted(ts.by_speaker["XL10"]) == sorted(reference_corpus.train_ids("XL10"))

    def test_minority_multiplicities(self, reference_corpus):
        # 8750 = 11 * 735 + 665: every XS01 id appears 11 or 12 times,
        # and exactly 665 of them appear 12 times.
        ts = build_oversampled(reference_corpus, seed=3)
        counts = collections.Counter(ts.by_speaker["XS01"])
        assert set(counts.values()) == {11, 12}
        assert sum(1 for v in counts.values() if v == 12) == 665

    def test_multiplicity_spread_at_most_one(self, small_corpus):
        ts = build_oversampled(small_corpus, seed=9)
        for spk, utts in ts.by_speaker.items():
            counts = collections.Counter(utts)
            assert max(counts.values()) - min(counts.values()) <= 1


class TestBootstrap:
    def test_total_multiplicity(self, small_corpus):
        ts = build_bootstrap(small_corpus, draws_per_speaker=25, seed=0)
        assert all(n == 25 for n in ts.per_speaker_counts.values())

    def test_single_item_pool(self):
        corpus = Corpus.from_counts({"one": 1}, val_count=1, test_count=1)
        ts = build_bootstrap(corpus, draws_per_speaker=40, seed=5)
        assert ts.unique_counts == {"one": 1}

    def test_unique_bounded(self, small_corpus):
        for seed in range(5):
            ts = build_bootstrap(small_corpus, draws_per_speaker=7, seed=seed)
            for spk, n in ts.unique_counts.items():
                pool = len(small_corpus.train_ids(spk))
                assert n <= min(7, pool)

    def test_mean_unique_matches_closed_form(self):
        # Sample mean over 100 seeds within 3 standard errors of
        # N * (1 - (1 - 1/N)^d).
        corpus = Corpus.from_counts({"p": 50}, val_count=1, test_count=1)
        draws = 120
        uniques = np.array(
            [
                build_bootstrap(corpus, draws, seed=s).unique_counts["p"]
                for s in range(100)
            ],
            dtype=float,
        )
        expected = expected_unique_count(50, draws)
        se = uniques.std(ddof=1) / np.sqrt(len(uniques))
        assert abs(uniques.mean() - expected) <= 3 * se

    def test_rejects_bad_draw_count(self, small_corpus):
        with pytest.raises(ValidationError):
            build_bootstrap(small_corpus, draws_per_speaker=0, seed=0)

    def test_deterministic(self, small_corpus):
        a = build_bootstrap(small_corpus, 30, seed=8)
        b = build_bootstrap(small_corpus, 30, seed=8)
        assert a.by_speaker == b.by_speaker


class TestUnionUnique:
    def test_idempotent(self, small_corpus):
        ts = build_bootstrap(small_corpus, 12, seed=1)
        assert union_unique([ts, ts, ts]) == ts.unique_counts

    def test_mismatched_corpora_rejected(self, small_corpus):
        other = Corpus.from_counts({"a": 4, "b": 6, "c": 9, "d": 2}, val_count=1, test_count=1)
        with pytest.raises(ValidationError, match="different corpora"):
            union_unique([build_pooled(small_corpus), build_pooled(other)])

    def test_union_grows_towards_pool(self):
        corpus = Corpus.from_counts({"p": 40}, val_count=1, test_count=1)
        sessions = [build_bootstrap(corpus, 60, seed=s) for s in (1, 2, 3)]
        single = sessions[0].unique_counts["p"]
        merged = union_unique(sessions)["p"]
        assert single <= merged <= 40

    def test_three_session_expectation(self):
        # The union of three d-draw sessions behaves like one 3d-draw session.
        corpus = Corpus.from_counts({"p": 60}, val_count=1, test_count=1)
        merged = np.array(
            [
                union_unique(
                    [build_bootstrap(corpus, 50, seed=1000 * s + k) for k in range(3)]
                )["p"]
                for s in range(100)
            ],
            dtype=float,
        )
        expected = expected_unique_count(60, 150)
        se = merged.std(ddof=1) / np.sqrt(len(merged))
        assert abs(merged.mean() - expected) <= 3 * se


class TestRecipes:
    def test_dispatch_matches_builders(self, small_corpus):
        pairs = [
            (TrainingSetRecipe("SD", speaker="b"), build_sd(small_corpus, "b")),
            (TrainingSetRecipe("UN", seed=4), build_undersampled(small_corpus, 4)),
            (TrainingSetRecipe("MU"), build_pooled(small_corpus)),
            (TrainingSetRecipe("OV", seed=4), build_oversampled(small_corpus, 4)),
            (
                TrainingSetRecipe("BOOTSTRAP", seed=4, draws_per_speaker=11),
                build_bootstrap(small_corpus, 11, 4),
            ),
        ]
        for recipe, direct in pairs:
            assert build_from_recipe(small_corpus, recipe).by_speaker == direct.by_speaker

    def test_bootstrap_default_draws(self):
        recipe = TrainingSetRecipe("BOOTSTRAP", seed=0)
        assert recipe.draws_per_speaker == 3000

    def test_invalid_recipes(self):
        with pytest.raises(ValidationError):
            TrainingSetRecipe("XX")
        with pytest.raises(ValidationError):
            TrainingSetRecipe("SD")
        with pytest.raises(ValidationError):
            TrainingSetRecipe("BOOTSTRAP", draws_per_speaker=0)

    def test_training_set_round_trip(self, small_corpus):
        ts = build_bootstrap(small_corpus, 9, seed=2)
        again = TrainingSet.from_dict(ts.to_dict())
        assert again.by_speaker == ts.by_speaker
        assert again.recipe == ts.recipe
        assert again.corpus_id == ts.corpus_id
        again.validate_against(small_corpus)

    def test_validate_against_flags_foreign_ids(self, small_corpus):
        ts = build_pooled(small_corpus)
        ts.by_speaker["a"].append("not_a_real_id")
        with pytest.raises(ValidationError):
            ts.validate_against(small_corpus)
