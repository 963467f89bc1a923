"""Plan validation, orchestrated runs and the synthetic AB judge."""

import json

import numpy as np
import pytest

from multivox.corpus_files import load_corpus, load_predictions
from multivox.errors import ValidationError
from multivox.evaluation import frame_spectral_errors, mcd
from multivox.features import AcousticSequence
from multivox.harness import (
    ExperimentPlan,
    RunState,
    derive_seed,
    run,
    simulate_preference,
)
from multivox.model import TrainingConfig
from multivox.synthgen import GeneratorConfig, generate_corpus


def mini_generator(**overrides):
    base = dict(
        n_speakers=3,
        per_speaker_train_counts=(4, 6, 9),
        val_count=2,
        test_count=3,
        d_lin=5,
        d_mgc=4,
        frames_min=6,
        frames_max=10,
        n_f0_bins=24,
        master_seed=11,
    )
    base.update(overrides)
    return GeneratorConfig(**base)


def mini_plan(**overrides):
    base = dict(
        seed=7,
        strategies=("SD", "MU"),
        generator=mini_generator(),
        draws_per_speaker=8,
        training=TrainingConfig(learning_rate=0.1, n_epochs=2, early_stop_patience=None),
    )
    base.update(overrides)
    return ExperimentPlan(**base)


class TestDeriveSeed:
    def test_stable_and_distinct(self):
        assert derive_seed(7, "set", "E1") == derive_seed(7, "set", "E1")
        assert derive_seed(7, "set", "E1") != derive_seed(7, "set", "E2")
        assert derive_seed(7, "set", "E1") != derive_seed(8, "set", "E1")


class TestPlanValidation:
    def test_strategy_order_normalized(self):
        plan = mini_plan(strategies=("MU", "SD"))
        assert plan.strategies == ("SD", "MU")

    def test_unknown_strategy(self):
        with pytest.raises(ValidationError, match="XX"):
            mini_plan(strategies=("XX",))

    def test_ensemble_requires_sessions(self):
        with pytest.raises(ValidationError, match="E1"):
            mini_plan(strategies=("EN",))

    def test_load_requires_path(self):
        with pytest.raises(ValidationError, match="corpus_path"):
            mini_plan(corpus_source="load")

    def test_round_trip(self):
        plan = mini_plan(strategies=("SD", "UN", "MU"))
        again = ExperimentPlan.from_dict(plan.to_dict())
        assert again.to_dict() == plan.to_dict()
        assert again.config_hash == plan.config_hash

    def test_from_dict_rejects_unknown_keys(self):
        with pytest.raises(ValidationError, match="unknown plan keys"):
            ExperimentPlan.from_dict({"seed": 1, "bogus": 2})

    def test_sd_expands_per_speaker(self):
        plan = mini_plan()
        corpus = generate_corpus(plan.generator)
        labels = [label for _, label in plan.model_labels(corpus)]
        assert labels == ["SD[spk01]", "SD[spk02]", "SD[spk03]", "MU"]


class TestRun:
    def test_sd_mu_plan_row_and_model_count(self, tmp_path):
        plan = mini_plan()
        result = run(plan, tmp_path / "run")
        # 3 SD models + 1 MU model, two variants each
        ckpts = sorted(p.name for p in (tmp_path / "run" / "models").glob("*.ckpt"))
        assert len(ckpts) == 8
        # report: 2 strategies x (3 speakers + pooled)
        assert len(result.report.rows) == 2 * 4
        manifest = json.loads(result.manifest_path.read_text())
        assert manifest["config_hash"] == plan.config_hash
        assert manifest["training_sets"]["MU"]["total_size"] == 4 + 6 + 9
        for spk, n in [("spk01", 4), ("spk02", 6), ("spk03", 9)]:
            assert manifest["training_sets"][f"SD[{spk}]"]["total_size"] == n

    def test_rerun_is_byte_identical(self, tmp_path):
        plan = mini_plan()
        run(plan, tmp_path / "a")
        run(plan, tmp_path / "b")
        for rel in ("report/report.csv", "report/report.json", "manifest.json"):
            assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes()

    def test_resume_skips_and_reproduces(self, tmp_path):
        plan = mini_plan()
        first = run(plan, tmp_path / "run")
        csv_before = (first.report_dir / "report.csv").read_bytes()
        mtime_before = (tmp_path / "run" / "models" / "MU.sar.ckpt").stat().st_mtime_ns
        # resume over the same tree: models are skipped, report rebuilt the same
        second = run(plan, tmp_path / "run")
        assert (second.report_dir / "report.csv").read_bytes() == csv_before
        assert (tmp_path / "run" / "models" / "MU.sar.ckpt").stat().st_mtime_ns == mtime_before

    def test_resume_after_partial_failure(self, tmp_path):
        plan = mini_plan()
        result = run(plan, tmp_path / "run")
        csv_before = (result.report_dir / "report.csv").read_bytes()
        # simulate a crash that lost one checkpoint and its state entry
        (tmp_path / "run" / "models" / "MU.sar.ckpt").unlink()
        state = json.loads((tmp_path / "run" / "state.json").read_text())
        state["done"].remove("model/MU.sar")
        (tmp_path / "run" / "state.json").write_text(json.dumps(state))
        again = run(plan, tmp_path / "run")
        assert (again.report_dir / "report.csv").read_bytes() == csv_before

    def test_state_rejects_other_plan(self, tmp_path):
        run(mini_plan(), tmp_path / "run")
        other = mini_plan(seed=8)
        with pytest.raises(ValidationError, match="different plan"):
            run(other, tmp_path / "run")

    def test_workers_do_not_change_results(self, tmp_path):
        a = run(mini_plan(), tmp_path / "a")
        b = run(mini_plan(workers=3), tmp_path / "b")
        assert (a.report_dir / "report.csv").read_bytes() == (
            b.report_dir / "report.csv"
        ).read_bytes()

    def test_loaded_corpus_source(self, tmp_path):
        from multivox.corpus_files import save_corpus

        corpus_dir = tmp_path / "corpus"
        save_corpus(generate_corpus(mini_generator()), corpus_dir)
        plan = mini_plan(corpus_source="load", corpus_path=str(corpus_dir))
        result = run(plan, tmp_path / "run")
        assert result.corpus_dir == corpus_dir

    def test_ensemble_contraction_over_full_run(self, tmp_path):
        plan = mini_plan(strategies=("E1", "E2", "E3", "EN"))
        result = run(plan, tmp_path / "run")
        corpus = load_corpus(result.corpus_dir)
        sessions = [
            load_predictions(tmp_path / "run" / "predictions" / s)[2]
            for s in ("E1", "E2", "E3")
        ]
        _, _, combined = load_predictions(tmp_path / "run" / "predictions" / "EN")
        for spk in corpus.speaker_ids:
            for utt_id in corpus.split_ids("test", spk):
                ref = corpus.utterance(utt_id).acoustic.mgc
                comb_err = frame_spectral_errors(combined[utt_id].mgc, ref)
                mean_err = np.mean(
                    [frame_spectral_errors(s[utt_id].mgc, ref) for s in sessions],
                    axis=0,
                )
                assert np.all(comb_err <= mean_err + 1e-12)
        # and therefore per speaker: EN MCD <= mean session MCD
        for spk in corpus.speaker_ids + ["ALL"]:
            en = result.report.row(spk, "EN").mcd_db
            mean_mcd = np.mean(
                [result.report.row(spk, s).mcd_db for s in ("E1", "E2", "E3")]
            )
            assert en <= mean_mcd + 1e-9

    def test_run_state_guard(self, tmp_path):
        state = RunState(tmp_path / "state.json", "abc")
        state.mark("corpus")
        again = RunState(tmp_path / "state.json", "abc")
        assert again.has("corpus")
        assert not again.has("corpus", tmp_path / "missing")

    def test_manifest_set_sizes_match_strategy_formulas(self, tmp_path):
        plan = mini_plan(
            strategies=("SD", "UN", "MU", "OV", "E1", "E2", "E3", "EN"),
            draws_per_speaker=8,
        )
        result = run(plan, tmp_path / "run")
        sizes = {
            label: entry["total_size"]
            for label, entry in json.loads(result.manifest_path.read_text())[
                "training_sets"
            ].items()
        }
        counts = (4, 6, 9)
        assert sizes["UN"] == min(counts) * 3
        assert sizes["MU"] == sum(counts)
        assert sizes["OV"] == max(counts) * 3
        for session in ("E1", "E2", "E3"):
            assert sizes[session] == 8 * 3
        # the three sessions are genuinely different draws
        sets = {
            s: json.loads((tmp_path / "run" / "sets" / f"{s}.json").read_text())
            for s in ("E1", "E2", "E3")
        }
        assert sets["E1"]["by_speaker"] != sets["E2"]["by_speaker"]


@pytest.fixture(scope="module")
def judge_corpus():
    return generate_corpus(mini_generator(test_count=5))


def _reference_outputs(corpus):
    outputs = {}
    for spk in corpus.speaker_ids:
        for utt_id in corpus.split_ids("test", spk):
            ref = corpus.utterance(utt_id).acoustic
            outputs[utt_id] = AcousticSequence(
                ref.mgc.copy(), ref.f0.copy(), ref.voicing.copy()
            )
    return outputs


def _noisy_outputs(corpus, sigma, seed):
    rng = np.random.default_rng(seed)
    outputs = {}
    for spk in corpus.speaker_ids:
        for utt_id in corpus.split_ids("test", spk):
            ref = corpus.utterance(utt_id).acoustic
            outputs[utt_id] = AcousticSequence(
                ref.mgc + sigma * rng.standard_normal(ref.mgc.shape),
                ref.f0.copy(),
                ref.voicing.copy(),
            )
    return outputs


class TestSimulatePreference:
    def test_self_comparison_is_coin_flips(self, judge_corpus):
        outputs = _noisy_outputs(judge_corpus, 0.2, 1)
        ps = []
        for seed in range(20):
            tally = simulate_preference(
                judge_corpus, outputs, outputs, ("X", "X"), judge_sigma=0.0, seed=seed
            )
            ps.append(tally.test().p_value)
        assert np.mean(ps) > 0.2
        wins = np.array([simulate_preference(
            judge_corpus, outputs, outputs, ("X", "X"), 0.0, seed
        ).overall for seed in range(20)])
        # over 20 seeds x 15 utterances the split hovers around half
        assert abs(wins[:, 0].mean() - 7.5) < 2.5

    def test_dominance_with_zero_noise(self, judge_corpus):
        perfect = _reference_outputs(judge_corpus)
        noisy = _noisy_outputs(judge_corpus, 0.4, 2)
        tally = simulate_preference(
            judge_corpus, perfect, noisy, ("CO", "X"), judge_sigma=0.0, seed=0
        )
        wins_a, wins_b = tally.overall
        assert wins_b == 0
        assert tally.test().significant

    def test_huge_noise_erases_preference(self, judge_corpus):
        perfect = _reference_outputs(judge_corpus)
        noisy = _noisy_outputs(judge_corpus, 0.4, 3)
        fractions = []
        for seed in range(100):
            tally = simulate_preference(
                judge_corpus, perfect, noisy, ("CO", "X"), judge_sigma=1e6, seed=seed
            )
            a, b = tally.overall
            fractions.append(a / (a + b))
        # 1500 effectively fair coin flips: within 4 standard errors of 1/2
        se = 0.5 / np.sqrt(100 * 15)
        assert abs(np.mean(fractions) - 0.5) < 4 * se

    def test_missing_outputs_rejected(self, judge_corpus):
        outputs = _noisy_outputs(judge_corpus, 0.2, 4)
        partial = dict(list(outputs.items())[:-1])
        with pytest.raises(ValidationError, match="missing"):
            simulate_preference(judge_corpus, partial, outputs, ("A", "B"))

    def test_judge_prefers_lower_spectral_error(self, judge_corpus):
        # sanity of the stand-in judge definition itself
        good = _noisy_outputs(judge_corpus, 0.05, 5)
        bad = _noisy_outputs(judge_corpus, 0.8, 6)
        tally = simulate_preference(judge_corpus, good, bad, ("G", "B"), 0.0, 0)
        a, b = tally.overall
        assert a > b
        for spk in judge_corpus.speaker_ids:
            ref = judge_corpus.utterance(judge_corpus.split_ids("test", spk)[0]).acoustic
            assert mcd(good[judge_corpus.split_ids("test", spk)[0]].mgc, ref.mgc) < mcd(
                bad[judge_corpus.split_ids("test", spk)[0]].mgc, ref.mgc
            )
