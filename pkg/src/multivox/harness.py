"""Experiment orchestration: plans, strategy runs and the AB-test stand-in.

A plan names a corpus source, a strategy subset, topology and training
settings, and one seed. Every random stream used anywhere in the run (set
sampling, parameter init, epoch shuffling, the synthetic judge) is derived
from that seed and a string label, and all derived seeds are recorded in the
run manifest. Re-running the same plan over the same output directory skips
finished work via a state file and reproduces identical reports; synthesis
always reads models back from their checkpoints so resumed and fresh runs
cannot drift.

The AB "listener" is a synthetic stand-in for a human preference test: it
prefers the output with the lower per-utterance spectral error, plus
seed-controlled Gaussian judgment noise. It exercises the tally and exact
binomial machinery, nothing more.
"""

from __future__ import annotations

import hashlib
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from .corpus import (
    Corpus,
    TrainingSet,
    TrainingSetRecipe,
    build_from_recipe,
)
from .corpus_files import (
    load_corpus,
    load_predictions,
    prediction_speakers,
    save_corpus,
    save_predictions,
)
from .ensemble import combine_sequences
from .errors import ValidationError
from .evaluation import MetricReport, PreferenceTally, build_reports, frame_spectral_errors
from .features import AcousticSequence
from .model import (
    NetworkTopology,
    TrainedModel,
    TrainingConfig,
    load_model,
    save_model,
    train,
    write_training_log,
)
from .synthgen import GeneratorConfig, generate_corpus

STRATEGY_ORDER = ("SD", "UN", "MU", "OV", "E1", "E2", "E3", "EN")
SESSION_STRATEGIES = ("E1", "E2", "E3")

#: Desk-scale bootstrap draw count (reference scale divided by ten, like the
#: default generator counts).
DEFAULT_PLAN_DRAWS = 300


def derive_seed(base: int, *labels: str) -> int:
    """Stable named sub-seed: first 8 bytes of sha256 over base and labels."""
    payload = ":".join([str(int(base)), *labels]).encode()
    return int.from_bytes(hashlib.sha256(payload).digest()[:8], "little")


@dataclass
class ExperimentPlan:
    """Everything a run needs; see module docstring for seed derivation."""

    seed: int = 0
    strategies: tuple[str, ...] = STRATEGY_ORDER
    corpus_source: str = "generate"  # or "load"
    corpus_path: str | None = None
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    draws_per_speaker: int = DEFAULT_PLAN_DRAWS
    sar_ff_units: int = 16
    sar_bi_units: int = 8
    dar_ff_units: int = 16
    dar_bi_units: int = 8
    dar_uni_units: int = 8
    dar_embed_dim: int = 8
    training: TrainingConfig = field(
        default_factory=lambda: TrainingConfig(
            learning_rate=0.1, n_epochs=2, early_stop_patience=None
        )
    )
    workers: int = 1

    def __post_init__(self):
        seen = []
        for s in self.strategies:
            if s not in STRATEGY_ORDER:
                raise ValidationError(
                    f"unknown strategy {s!r}; expected a subset of {STRATEGY_ORDER}"
                )
            if s not in seen:
                seen.append(s)
        self.strategies = tuple(s for s in STRATEGY_ORDER if s in seen)
        if not self.strategies:
            raise ValidationError("plan selects no strategies")
        if "EN" in self.strategies:
            missing = [s for s in SESSION_STRATEGIES if s not in self.strategies]
            if missing:
                raise ValidationError(f"EN requires E1, E2 and E3; missing {missing}")
        if self.corpus_source not in ("generate", "load"):
            raise ValidationError(
                f"corpus_source must be 'generate' or 'load', got {self.corpus_source!r}"
            )
        if self.corpus_source == "load":
            if not self.corpus_path:
                raise ValidationError("corpus_source 'load' requires corpus_path")
            if not (Path(self.corpus_path) / "manifest.json").is_file():
                raise ValidationError(f"no corpus manifest under {self.corpus_path}")
        if self.draws_per_speaker < 1:
            raise ValidationError("draws_per_speaker must be >= 1")
        if self.workers < 1:
            raise ValidationError("workers must be >= 1")

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "strategies": list(self.strategies),
            "corpus": {
                "source": self.corpus_source,
                "path": self.corpus_path,
                "generator": self.generator.to_dict(),
            },
            "draws_per_speaker": self.draws_per_speaker,
            "topology": {
                "sar": {"ff_units": self.sar_ff_units, "bi_units": self.sar_bi_units},
                "dar": {
                    "ff_units": self.dar_ff_units,
                    "bi_units": self.dar_bi_units,
                    "uni_units": self.dar_uni_units,
                    "embed_dim": self.dar_embed_dim,
                },
            },
            "training": self.training.to_dict(),
            "workers": self.workers,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentPlan":
        d = dict(d)
        known = {
            "seed", "strategies", "corpus", "draws_per_speaker",
            "topology", "training", "workers",
        }
        unknown = set(d) - known
        if unknown:
            raise ValidationError(f"unknown plan keys: {sorted(unknown)}")
        kwargs: dict = {}
        if "seed" in d:
            kwargs["seed"] = int(d["seed"])
        if "strategies" in d:
            kwargs["strategies"] = tuple(d["strategies"])
        corpus = d.get("corpus", {})
        if corpus:
            unknown = set(corpus) - {"source", "path", "generator"}
            if unknown:
                raise ValidationError(f"unknown corpus keys: {sorted(unknown)}")
            kwargs["corpus_source"] = corpus.get("source", "generate")
            kwargs["corpus_path"] = corpus.get("path")
            if corpus.get("generator"):
                kwargs["generator"] = GeneratorConfig.from_dict(corpus["generator"])
        if "draws_per_speaker" in d:
            kwargs["draws_per_speaker"] = int(d["draws_per_speaker"])
        topology = d.get("topology", {})
        if topology:
            unknown = set(topology) - {"sar", "dar"}
            if unknown:
                raise ValidationError(f"unknown topology keys: {sorted(unknown)}")
            for prefix in ("sar", "dar"):
                for key, value in (topology.get(prefix) or {}).items():
                    attr = f"{prefix}_{key}"
                    if attr not in (
                        "sar_ff_units", "sar_bi_units", "dar_ff_units",
                        "dar_bi_units", "dar_uni_units", "dar_embed_dim",
                    ):
                        raise ValidationError(f"unknown topology key: {prefix}.{key}")
                    kwargs[attr] = int(value)
        if "training" in d:
            kwargs["training"] = TrainingConfig.from_dict(d["training"])
        if "workers" in d:
            kwargs["workers"] = int(d["workers"])
        return cls(**kwargs)

    @classmethod
    def from_yaml(cls, path: Path) -> "ExperimentPlan":
        import yaml

        try:
            payload = yaml.safe_load(Path(path).read_text())
        except yaml.YAMLError as err:
            raise ValidationError(f"{path}: invalid YAML ({err})") from err
        if payload is None:
            payload = {}
        if not isinstance(payload, dict):
            raise ValidationError(f"{path}: plan file must hold a mapping")
        return cls.from_dict(payload)

    @property
    def config_hash(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(canonical.encode()).hexdigest()[:16]

    def model_labels(self, corpus: Corpus) -> list[tuple[str, str]]:
        """(strategy, model label) pairs; SD expands to one model per speaker."""
        labels = []
        for strategy in self.strategies:
            if strategy == "EN":
                continue
            if strategy == "SD":
                labels.extend(("SD", f"SD[{spk}]") for spk in corpus.speaker_ids)
            else:
                labels.append((strategy, strategy))
        return labels

    def recipe_for(self, label: str) -> TrainingSetRecipe:
        if label.startswith("SD["):
            return TrainingSetRecipe("SD", speaker=label[3:-1])
        if label == "UN":
            return TrainingSetRecipe("UN", seed=derive_seed(self.seed, "set", "UN"))
        if label == "MU":
            return TrainingSetRecipe("MU")
        if label == "OV":
            return TrainingSetRecipe("OV", seed=derive_seed(self.seed, "set", "OV"))
        if label in SESSION_STRATEGIES:
            return TrainingSetRecipe(
                "BOOTSTRAP",
                seed=derive_seed(self.seed, "set", label),
                draws_per_speaker=self.draws_per_speaker,
            )
        raise ValidationError(f"no recipe for label {label!r}")

    def topology_for(self, variant: str, corpus: Corpus, label: str) -> NetworkTopology:
        n_speakers = 1 if label.startswith("SD[") else corpus.n_speakers
        d_lin = self.generator.d_lin if self.corpus_source == "generate" else None
        if d_lin is None:
            some = corpus.utterance(corpus.train_ids(corpus.speaker_ids[0])[0])
            d_lin = some.d_lin
        if variant == "sar":
            return NetworkTopology.sar(
                d_lin, corpus.feature_config.d_mgc, n_speakers,
                ff_units=self.sar_ff_units, bi_units=self.sar_bi_units,
            )
        return NetworkTopology.dar(
            d_lin, corpus.feature_config.n_f0_classes, n_speakers,
            ff_units=self.dar_ff_units, bi_units=self.dar_bi_units,
            uni_units=self.dar_uni_units, embed_dim=self.dar_embed_dim,
        )

    def training_for(self, label: str, variant: str) -> TrainingConfig:
        base = self.training.to_dict()
        base["init_seed"] = derive_seed(self.seed, "init", label, variant)
        base["shuffle_seed"] = derive_seed(self.seed, "shuffle", label, variant)
        return TrainingConfig.from_dict(base)


class RunState:
    """Resumable run state: which units finished, under which plan hash."""

    def __init__(self, path: Path, config_hash: str):
        self.path = Path(path)
        self.config_hash = config_hash
        self.done: set[str] = set()
        if self.path.is_file():
            payload = json.loads(self.path.read_text())
            if payload.get("config_hash") != config_hash:
                raise ValidationError(
                    f"{self.path} belongs to a different plan "
                    f"({payload.get('config_hash')} != {config_hash}); "
                    "use a fresh output directory"
                )
            self.done = set(payload.get("done", []))

    def mark(self, unit: str) -> None:
        self.done.add(unit)
        self.path.write_text(
            json.dumps(
                {"config_hash": self.config_hash, "done": sorted(self.done)},
                indent=2,
            )
            + "\n"
        )

    def has(self, unit: str, artifact: Path | None = None) -> bool:
        if unit not in self.done:
            return False
        return artifact is None or Path(artifact).exists()


@dataclass
class RunResult:
    out_dir: Path
    corpus_dir: Path
    report: MetricReport
    report_dir: Path
    manifest_path: Path


def _train_one(
    plan: ExperimentPlan,
    corpus: Corpus,
    training_set: TrainingSet,
    label: str,
    variant: str,
    models_dir: Path,
) -> Path:
    topology = plan.topology_for(variant, corpus, label)
    config = plan.training_for(label, variant)
    model = train(corpus, training_set, topology, config)
    ckpt = models_dir / f"{label}.{variant}.ckpt"
    save_model(model, ckpt)
    write_training_log(model, models_dir / f"{label}.{variant}.log.csv")
    return ckpt


def _synthesize_strategy(
    corpus: Corpus,
    strategy: str,
    models: Mapping[str, tuple[TrainedModel, TrainedModel]],
    pred_dir: Path,
) -> None:
    """Generate test-split features; SD routes each speaker through its own model."""
    outputs: dict[str, AcousticSequence] = {}
    speakers: dict[str, str] = {}
    for spk in corpus.speaker_ids:
        key = f"SD[{spk}]" if strategy == "SD" else strategy
        sar_model, dar_model = models[key]
        for utt_id in corpus.split_ids("test", spk):
            utt = corpus.utterance(utt_id)
            mgc = sar_model.predict_mgc(utt.linguistic, spk)
            f0, voicing = dar_model.generate_f0(utt.linguistic, spk)
            outputs[utt_id] = AcousticSequence(
                mgc.astype(np.float32),
                f0.astype(np.float32),
                voicing,
            )
            speakers[utt_id] = spk
    save_predictions(pred_dir, outputs, speakers, strategy, corpus.corpus_id)


def run(plan: ExperimentPlan, out_dir: Path) -> RunResult:
    """Execute a plan end to end; resumable and idempotent per plan hash."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    state = RunState(out_dir / "state.json", plan.config_hash)
    (out_dir / "resolved_plan.json").write_text(
        json.dumps(plan.to_dict(), indent=2, sort_keys=True) + "\n"
    )

    # corpus
    if plan.corpus_source == "generate":
        corpus_dir = out_dir / "corpus"
        if not state.has("corpus", corpus_dir / "manifest.json"):
            save_corpus(generate_corpus(plan.generator), corpus_dir)
            state.mark("corpus")
    else:
        corpus_dir = Path(plan.corpus_path)
        state.mark("corpus")
    corpus = load_corpus(corpus_dir)

    # training sets
    sets_dir = out_dir / "sets"
    sets_dir.mkdir(exist_ok=True)
    labels = plan.model_labels(corpus)
    training_sets: dict[str, TrainingSet] = {}
    for _, label in labels:
        set_path = sets_dir / f"{label}.json"
        unit = f"set/{label}"
        if state.has(unit, set_path):
            training_sets[label] = TrainingSet.from_dict(
                json.loads(set_path.read_text())
            )
        else:
            ts = build_from_recipe(corpus, plan.recipe_for(label))
            set_path.write_text(json.dumps(ts.to_dict(), sort_keys=True) + "\n")
            training_sets[label] = ts
            state.mark(unit)

    # models
    models_dir = out_dir / "models"
    models_dir.mkdir(exist_ok=True)
    tasks = []
    for _, label in labels:
        for variant in ("sar", "dar"):
            unit = f"model/{label}.{variant}"
            ckpt = models_dir / f"{label}.{variant}.ckpt"
            if not state.has(unit, ckpt):
                tasks.append((label, variant, unit))
    if tasks:
        if plan.workers > 1:
            with ThreadPoolExecutor(max_workers=plan.workers) as pool:
                futures = {
                    pool.submit(
                        _train_one, plan, corpus, training_sets[label],
                        label, variant, models_dir,
                    ): unit
                    for label, variant, unit in tasks
                }
                for future, unit in futures.items():
                    future.result()
                    state.mark(unit)
        else:
            for label, variant, unit in tasks:
                _train_one(plan, corpus, training_sets[label], label, variant, models_dir)
                state.mark(unit)

    # synthesis reads models back from disk so fresh and resumed runs agree
    models: dict[str, tuple[TrainedModel, TrainedModel]] = {}
    for _, label in labels:
        models[label] = (
            load_model(models_dir / f"{label}.sar.ckpt"),
            load_model(models_dir / f"{label}.dar.ckpt"),
        )
    pred_root = out_dir / "predictions"
    for strategy in plan.strategies:
        if strategy == "EN":
            continue
        unit = f"predictions/{strategy}"
        pred_dir = pred_root / strategy
        if not state.has(unit, pred_dir / "index.json"):
            _synthesize_strategy(corpus, strategy, models, pred_dir)
            state.mark(unit)

    if "EN" in plan.strategies:
        unit = "predictions/EN"
        pred_dir = pred_root / "EN"
        if not state.has(unit, pred_dir / "index.json"):
            sessions = [
                load_predictions(pred_root / s)[2] for s in SESSION_STRATEGIES
            ]
            combined = {
                utt_id: combine_sequences([s[utt_id] for s in sessions])
                for utt_id in sessions[0]
            }
            speakers = prediction_speakers(pred_root / SESSION_STRATEGIES[0])
            save_predictions(pred_dir, combined, speakers, "EN", corpus.corpus_id)
            state.mark(unit)

    # evaluation: always rebuilt from the prediction files
    outputs_by_strategy = {}
    for strategy in plan.strategies:
        _, pred_corpus_id, outputs = load_predictions(pred_root / strategy)
        if pred_corpus_id != corpus.corpus_id:
            raise ValidationError(
                f"predictions for {strategy} belong to corpus {pred_corpus_id}, "
                f"not {corpus.corpus_id}"
            )
        outputs_by_strategy[strategy] = outputs
    report = build_reports(corpus, outputs_by_strategy)
    from .reporting import render_report

    report_dir = out_dir / "report"
    render_report(report, report_dir)

    manifest_path = out_dir / "manifest.json"
    manifest = {
        "config_hash": plan.config_hash,
        "corpus_id": corpus.corpus_id,
        "plan": plan.to_dict(),
        "derived_seeds": {
            **{
                f"set/{label}": plan.recipe_for(label).seed
                for _, label in labels
                if plan.recipe_for(label).strategy not in ("SD", "MU")
            },
            **{
                f"{kind}/{label}.{variant}": derive_seed(plan.seed, kind, label, variant)
                for _, label in labels
                for variant in ("sar", "dar")
                for kind in ("init", "shuffle")
            },
        },
        "training_sets": {
            label: {
                "strategy": training_sets[label].recipe.strategy,
                "total_size": training_sets[label].total_size,
                "per_speaker_counts": training_sets[label].per_speaker_counts,
                "unique_counts": training_sets[label].unique_counts,
            }
            for _, label in labels
        },
    }
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    state.mark("report")
    return RunResult(out_dir, corpus_dir, report, report_dir, manifest_path)


def simulate_preference(
    corpus: Corpus,
    outputs_a: Mapping[str, AcousticSequence],
    outputs_b: Mapping[str, AcousticSequence],
    pair: tuple[str, str],
    judge_sigma: float = 0.0,
    seed: int = 0,
    split: str = "test",
) -> PreferenceTally:
    """Synthetic forced-choice AB test over a split.

    For each utterance the judge compares per-utterance spectral errors with
    additive Gaussian noise of scale ``judge_sigma`` on the margin; exact
    ties fall to a fair coin. Not a model of human judgment, just a driver
    for the preference statistics.
    """
    if judge_sigma < 0:
        raise ValidationError("judge_sigma must be >= 0")
    rng = np.random.default_rng(seed)
    tally = PreferenceTally(pair)
    for spk in corpus.speaker_ids:
        wins_a = wins_b = 0
        for utt_id in corpus.split_ids(split, spk):
            ref = corpus.utterance(utt_id).acoustic
            if utt_id not in outputs_a or utt_id not in outputs_b:
                raise ValidationError(f"missing outputs for {utt_id}")
            err_a = float(np.mean(frame_spectral_errors(outputs_a[utt_id].mgc, ref.mgc)))
            err_b = float(np.mean(frame_spectral_errors(outputs_b[utt_id].mgc, ref.mgc)))
            margin = err_b - err_a
            if judge_sigma > 0:
                margin += judge_sigma * rng.standard_normal()
            if margin == 0.0:
                margin = 1.0 if rng.random() < 0.5 else -1.0
            if margin > 0:
                wins_a += 1
            else:
                wins_b += 1
        tally.per_speaker[spk] = (wins_a, wins_b)
    return tally


def ab_test_from_artifacts(
    out_dir: Path,
    pair: tuple[str, str],
    judge_sigma: float = 0.0,
    seed: int | None = None,
) -> PreferenceTally:
    """Run the synthetic AB test over a finished run's prediction files."""
    out_dir = Path(out_dir)
    plan_path = out_dir / "resolved_plan.json"
    plan_payload = json.loads(plan_path.read_text()) if plan_path.is_file() else {}
    corpus_entry = plan_payload.get("corpus", {})
    if corpus_entry.get("source") == "load":
        corpus = load_corpus(corpus_entry["path"])
    else:
        corpus = load_corpus(out_dir / "corpus")
    outputs = {}
    for name in pair:
        pred_dir = out_dir / "predictions" / name
        if not (pred_dir / "index.json").is_file():
            raise ValidationError(f"no predictions for {name} under {pred_dir}")
        _, _, outputs[name] = load_predictions(pred_dir)
    if seed is None:
        seed = derive_seed(plan_payload.get("seed", 0), "judge", *pair)
    return simulate_preference(
        corpus, outputs[pair[0]], outputs[pair[1]], pair, judge_sigma, seed
    )
