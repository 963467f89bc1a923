"""Command-line interface.

Exit codes: 0 on success, 2 when inputs fail validation before any work
happens (bad flags, malformed plans, missing or corrupt input files), 3 on
runtime failures (diverged training, I/O errors mid-run).
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from .corpus import TrainingSet, TrainingSetRecipe, build_from_recipe
from .corpus_files import (
    load_corpus,
    load_predictions,
    prediction_speakers,
    save_corpus,
    save_predictions,
)
from .ensemble import combine_sequences
from .errors import MultivoxError, ValidationError
from .evaluation import build_reports
from .features import AcousticSequence
from .harness import ExperimentPlan, ab_test_from_artifacts, derive_seed, run
from .model import (
    NetworkTopology,
    TrainingConfig,
    load_model,
    save_model,
    train as train_model,
    write_training_log,
)
from .synthgen import GeneratorConfig, generate_corpus


def _load_yaml(path: str | None) -> dict:
    if path is None:
        return {}
    import yaml

    try:
        payload = yaml.safe_load(Path(path).read_text())
    except FileNotFoundError:
        raise ValidationError(f"config file not found: {path}") from None
    except yaml.YAMLError as err:
        raise ValidationError(f"{path}: invalid YAML ({err})") from err
    if payload is None:
        return {}
    if not isinstance(payload, dict):
        raise ValidationError(f"{path}: config must hold a mapping")
    return payload


@click.group()
@click.version_option(package_name="multivox")
def cli():
    """Resampling and ensemble strategies for speaker-imbalanced acoustic models."""


@cli.command("generate-corpus")
@click.option("--config", "config_path", default=None, help="Generator config YAML.")
@click.option("--seed", type=int, default=None, help="Override the master seed.")
@click.option("--out", "out_dir", required=True, help="Corpus directory to write.")
def generate_corpus_cmd(config_path, seed, out_dir):
    """Generate a synthetic multi-speaker corpus directory."""
    payload = _load_yaml(config_path)
    if seed is not None:
        payload["master_seed"] = seed
    config = GeneratorConfig.from_dict(payload) if payload else GeneratorConfig()
    corpus = generate_corpus(config)
    save_corpus(corpus, out_dir)
    click.echo(
        f"wrote corpus {corpus.corpus_id} ({corpus.n_speakers} speakers, "
        f"{sum(len(corpus.train_ids(s)) for s in corpus.speaker_ids)} train utterances) "
        f"to {out_dir}"
    )


def _parse_strategy(text: str, draws: int, seed: int) -> TrainingSetRecipe:
    text = text.strip()
    if text.startswith("SD:"):
        return TrainingSetRecipe("SD", speaker=text[3:])
    if text in ("UN", "OV"):
        return TrainingSetRecipe(text, seed=seed)
    if text == "MU":
        return TrainingSetRecipe("MU")
    if text in ("E", "BOOTSTRAP"):
        return TrainingSetRecipe("BOOTSTRAP", seed=seed, draws_per_speaker=draws)
    raise ValidationError(
        f"unknown strategy {text!r}; expected SD:<speaker>, UN, MU, OV or E"
    )


@cli.command("build-set")
@click.option("--corpus", "corpus_dir", required=True)
@click.option("--strategy", required=True, help="SD:<speaker>, UN, MU, OV or E.")
@click.option("--draws", type=int, default=3000, show_default=True,
              help="Draws per speaker for the E (bootstrap) strategy.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "out_path", required=True, help="Training-set JSON to write.")
def build_set_cmd(corpus_dir, strategy, draws, seed, out_path):
    """Construct a training set from a corpus (metadata only, no features needed)."""
    recipe = _parse_strategy(strategy, draws, seed)
    corpus = load_corpus(corpus_dir, payloads=False)
    ts = build_from_recipe(corpus, recipe)
    Path(out_path).write_text(json.dumps(ts.to_dict(), sort_keys=True) + "\n")
    uniques = ts.unique_counts
    click.echo(
        f"{recipe.strategy}: {ts.total_size} items, unique per speaker "
        + ", ".join(f"{spk}={uniques[spk]}" for spk in corpus.speaker_ids if spk in uniques)
    )


@cli.command("train")
@click.option("--corpus", "corpus_dir", required=True)
@click.option("--set", "set_path", required=True, help="Training-set JSON.")
@click.option("--variant", type=click.Choice(["sar", "dar"]), required=True)
@click.option("--config", "config_path", default=None,
              help="YAML with optional 'topology' and 'training' sections.")
@click.option("--seed", type=int, default=0, show_default=True,
              help="Base seed for init and shuffling.")
@click.option("--out", "out_path", required=True, help="Checkpoint file to write.")
def train_cmd(corpus_dir, set_path, variant, config_path, seed, out_path):
    """Train one network on one training set and save its checkpoint."""
    payload = _load_yaml(config_path)
    unknown = set(payload) - {"topology", "training"}
    if unknown:
        raise ValidationError(f"unknown config sections: {sorted(unknown)}")
    corpus = load_corpus(corpus_dir)
    try:
        ts = TrainingSet.from_dict(json.loads(Path(set_path).read_text()))
    except FileNotFoundError:
        raise ValidationError(f"training set not found: {set_path}") from None
    n_speakers = 1 if len(ts.speaker_ids) == 1 else corpus.n_speakers
    d_lin = corpus.utterance(corpus.train_ids(corpus.speaker_ids[0])[0]).d_lin
    topo_args = dict(payload.get("topology") or {})
    if variant == "sar":
        topology = NetworkTopology.sar(
            d_lin, corpus.feature_config.d_mgc, n_speakers, **topo_args
        )
    else:
        topology = NetworkTopology.dar(
            d_lin, corpus.feature_config.n_f0_classes, n_speakers, **topo_args
        )
    train_args = dict(payload.get("training") or {})
    train_args["init_seed"] = derive_seed(seed, "init")
    train_args["shuffle_seed"] = derive_seed(seed, "shuffle")
    config = TrainingConfig.from_dict(train_args)
    model = train_model(corpus, ts, topology, config)
    save_model(model, out_path)
    write_training_log(model, Path(out_path).with_suffix(".log.csv"))
    best = model.log[model.best_epoch - 1] if model.best_epoch else None
    click.echo(
        f"trained {variant} on {ts.total_size} items; "
        + (f"best epoch {best.epoch} val_loss {best.val_loss:.6g}" if best else "0 epochs")
        + f"; saved {out_path}"
    )


@cli.command("synthesize")
@click.option("--corpus", "corpus_dir", required=True)
@click.option("--sar", "sar_path", required=True, help="Spectral model checkpoint.")
@click.option("--dar", "dar_path", required=True, help="F0 model checkpoint.")
@click.option("--split", default="test", show_default=True)
@click.option("--label", default=None, help="Strategy label stored in the index.")
@click.option("--out", "out_dir", required=True, help="Prediction directory to write.")
def synthesize_cmd(corpus_dir, sar_path, dar_path, split, label, out_dir):
    """Generate acoustic features for every split utterance the models cover."""
    corpus = load_corpus(corpus_dir)
    sar_model = load_model(sar_path)
    dar_model = load_model(dar_path)
    known = set(sar_model.speaker_ids) & set(dar_model.speaker_ids)
    outputs: dict[str, AcousticSequence] = {}
    speakers: dict[str, str] = {}
    import numpy as np

    for spk in corpus.speaker_ids:
        if spk not in known:
            continue
        for utt_id in corpus.split_ids(split, spk):
            utt = corpus.utterance(utt_id)
            mgc = sar_model.predict_mgc(utt.linguistic, spk)
            f0, voicing = dar_model.generate_f0(utt.linguistic, spk)
            outputs[utt_id] = AcousticSequence(
                mgc.astype(np.float32), f0.astype(np.float32), voicing
            )
            speakers[utt_id] = spk
    if not outputs:
        raise ValidationError(
            f"models cover none of the corpus speakers ({sorted(known)})"
        )
    save_predictions(
        out_dir, outputs, speakers,
        label or (sar_model.recipe.strategy if sar_model.recipe else "unlabeled"),
        corpus.corpus_id,
    )
    click.echo(f"wrote {len(outputs)} predicted utterances to {out_dir}")


@cli.command("combine")
@click.option("--inputs", required=True,
              help="Comma-separated prediction directories (the subsystems).")
@click.option("--label", default="EN", show_default=True)
@click.option("--out", "out_dir", required=True)
def combine_cmd(inputs, label, out_dir):
    """Combine subsystem prediction directories frame by frame."""
    dirs = [d for d in (p.strip() for p in inputs.split(",")) if d]
    if not dirs:
        raise ValidationError("no input directories given")
    loaded = [load_predictions(d) for d in dirs]
    corpus_ids = {corpus_id for _, corpus_id, _ in loaded}
    if len(corpus_ids) != 1:
        raise ValidationError(f"inputs belong to different corpora: {sorted(corpus_ids)}")
    keys = set(loaded[0][2])
    for _, _, outputs in loaded[1:]:
        if set(outputs) != keys:
            raise ValidationError("input directories cover different utterances")
    combined = {
        utt_id: combine_sequences([outputs[utt_id] for _, _, outputs in loaded])
        for utt_id in sorted(keys)
    }
    save_predictions(
        out_dir, combined, prediction_speakers(dirs[0]), label, corpus_ids.pop()
    )
    click.echo(f"combined {len(dirs)} subsystems into {out_dir}")


@cli.command("evaluate")
@click.option("--corpus", "corpus_dir", required=True)
@click.option("--pred", "pred_dirs", multiple=True, required=True,
              help="Prediction directory; repeatable.")
@click.option("--split", default="test", show_default=True)
@click.option("--out", "out_dir", required=True, help="Report directory to write.")
def evaluate_cmd(corpus_dir, pred_dirs, split, out_dir):
    """Score prediction directories and write the report bundle."""
    corpus = load_corpus(corpus_dir)
    outputs_by_strategy = {}
    for pred_dir in pred_dirs:
        label, corpus_id, outputs = load_predictions(pred_dir)
        if corpus_id != corpus.corpus_id:
            raise ValidationError(
                f"{pred_dir}: predictions belong to corpus {corpus_id}, "
                f"not {corpus.corpus_id}"
            )
        outputs_by_strategy[label] = outputs
    report = build_reports(corpus, outputs_by_strategy, split)
    from .reporting import render_report

    paths = render_report(report, out_dir)
    click.echo(f"wrote report for {list(outputs_by_strategy)} to {paths['csv']}")


@cli.command("ab-test")
@click.option("--run-dir", "run_dir", required=True,
              help="Output directory of a finished run-plan.")
@click.option("--pair", required=True, help="Two strategy labels, e.g. EN-MU.")
@click.option("--judge-noise", type=float, default=0.0, show_default=True)
@click.option("--seed", type=int, default=None, help="Judge seed (derived if omitted).")
@click.option("--out", "out_path", default=None, help="Tally JSON (default under run dir).")
def ab_test_cmd(run_dir, pair, judge_noise, seed, out_path):
    """Synthetic forced-choice AB test between two strategies of a finished run."""
    parts = pair.split("-")
    if len(parts) != 2 or not all(parts):
        raise ValidationError(f"--pair must look like EN-MU, got {pair!r}")
    tally = ab_test_from_artifacts(run_dir, (parts[0], parts[1]), judge_noise, seed)
    from .reporting import render_preference_figure, write_preference, write_preference_csv

    out_path = Path(out_path) if out_path else Path(run_dir) / "report" / f"preference_{tally.label}.json"
    out_path.parent.mkdir(parents=True, exist_ok=True)
    write_preference(tally, out_path)
    write_preference_csv(tally, out_path.with_suffix(".csv"))
    render_preference_figure(tally, out_path.with_suffix(".png"))
    result = tally.test()
    click.echo(
        f"{tally.label}: overall {result.wins_a}:{result.wins_b}, "
        f"p={result.p_value:.4g}{' *' if result.significant else ''}; wrote {out_path}"
    )


@cli.command("run-plan")
@click.option("--config", "config_path", default=None, help="Plan YAML.")
@click.option("--seed", type=int, default=None, help="Override the plan seed.")
@click.option("--strategies", default=None,
              help="Comma-separated strategy subset override.")
@click.option("--workers", type=int, default=None, help="Override the worker count.")
@click.option("--out", "out_dir", required=True, help="Run output directory.")
def run_plan_cmd(config_path, seed, strategies, workers, out_dir):
    """Run the full experiment matrix: sets, models, synthesis, report."""
    payload = _load_yaml(config_path)
    if seed is not None:
        payload["seed"] = seed
    if strategies is not None:
        payload["strategies"] = [s.strip() for s in strategies.split(",") if s.strip()]
    if workers is not None:
        payload["workers"] = workers
    plan = ExperimentPlan.from_dict(payload)
    result = run(plan, out_dir)
    click.echo(f"run complete; report at {result.report_dir / 'report.csv'}")


def main(argv=None) -> int:
    """Entry point with the documented exit-code contract."""
    try:
        cli.main(args=argv, standalone_mode=False)
    except click.exceptions.Abort:
        click.echo("aborted", err=True)
        return 130
    except click.exceptions.ClickException as err:
        err.show()
        return 2
    except ValidationError as err:
        click.echo(f"error: {err}", err=True)
        return 2
    except MultivoxError as err:
        click.echo(f"error: {err}", err=True)
        return 3
    except OSError as err:
        click.echo(f"error: {err}", err=True)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
