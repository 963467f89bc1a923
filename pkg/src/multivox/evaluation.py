"""Objective metrics and preference-test statistics.

Mel-cepstral distortion uses the standard ``(10 * sqrt(2) / ln 10)`` scaled
Euclidean distance over coefficients 1 and up (coefficient 0 excluded),
averaged over frames. F0 correlation is the Pearson coefficient restricted
to frames voiced in both tracks, the only frames where both values exist;
fewer than two such frames, or zero variance on either side, raises
:class:`~multivox.errors.UndefinedMetricError` instead of returning a
number. The exact binomial test is two-sided against p = 0.5 with the
pmf-ordering convention, computed in exact integer arithmetic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping

import numpy as np

from .corpus import Corpus
from .errors import CoverageError, UndefinedMetricError, ValidationError
from .features import AcousticSequence

MCD_SCALE = 10.0 * math.sqrt(2.0) / math.log(10.0)

#: Pooled-row label in metric reports.
ALL_SPEAKERS = "ALL"

SIGNIFICANCE_LEVEL = 0.05


def mcd(predicted: np.ndarray, reference: np.ndarray) -> float:
    """Mel-cepstral distortion in dB, mean over frames, coefficient 0 excluded."""
    predicted = np.asarray(predicted, dtype=float)
    reference = np.asarray(reference, dtype=float)
    if predicted.ndim != 2 or reference.ndim != 2:
        raise ValidationError("mcd expects (frames x coefficients) matrices")
    if predicted.shape != reference.shape:
        raise ValidationError(
            f"shape mismatch: {predicted.shape} vs {reference.shape}"
        )
    if predicted.shape[0] < 1:
        raise ValidationError("mcd of an empty sequence is undefined")
    if predicted.shape[1] < 2:
        raise ValidationError("mcd needs at least 2 coefficients (0th is excluded)")
    diff = predicted[:, 1:] - reference[:, 1:]
    return float(MCD_SCALE * np.mean(np.linalg.norm(diff, axis=1)))


def frame_spectral_errors(predicted: np.ndarray, reference: np.ndarray) -> np.ndarray:
    """Per-frame scaled Euclidean error on the scored coefficients (1 and up)."""
    predicted = np.asarray(predicted, dtype=float)
    reference = np.asarray(reference, dtype=float)
    if predicted.shape != reference.shape:
        raise ValidationError(
            f"shape mismatch: {predicted.shape} vs {reference.shape}"
        )
    return MCD_SCALE * np.linalg.norm(predicted[:, 1:] - reference[:, 1:], axis=1)


def f0_correlation(
    predicted_f0: np.ndarray,
    predicted_voicing: np.ndarray,
    reference_f0: np.ndarray,
    reference_voicing: np.ndarray,
) -> float:
    """Pearson correlation over frames voiced in both tracks."""
    predicted_f0 = np.asarray(predicted_f0, dtype=float)
    reference_f0 = np.asarray(reference_f0, dtype=float)
    predicted_voicing = np.asarray(predicted_voicing, dtype=bool)
    reference_voicing = np.asarray(reference_voicing, dtype=bool)
    if not (
        predicted_f0.shape == reference_f0.shape
        == predicted_voicing.shape == reference_voicing.shape
    ):
        raise ValidationError("f0 tracks and voicing masks must share one length")
    joint = predicted_voicing & reference_voicing
    if joint.sum() < 2:
        raise UndefinedMetricError(
            f"f0 correlation undefined: {int(joint.sum())} jointly voiced frames"
        )
    a = predicted_f0[joint]
    b = reference_f0[joint]
    a = a - a.mean()
    b = b - b.mean()
    var_a = float(a @ a)
    var_b = float(b @ b)
    if var_a == 0.0 or var_b == 0.0:
        raise UndefinedMetricError("f0 correlation undefined: zero variance track")
    return float((a @ b) / math.sqrt(var_a * var_b))


def vuv_error_rate(
    predicted_voicing: np.ndarray, reference_voicing: np.ndarray
) -> float:
    """Fraction of frames whose voicing flags disagree."""
    predicted_voicing = np.asarray(predicted_voicing, dtype=bool)
    reference_voicing = np.asarray(reference_voicing, dtype=bool)
    if predicted_voicing.shape != reference_voicing.shape:
        raise ValidationError("voicing masks must share one length")
    if predicted_voicing.size == 0:
        raise ValidationError("voicing error of an empty sequence is undefined")
    return float(np.mean(predicted_voicing != reference_voicing))


@dataclass(frozen=True)
class BinomialResult:
    p_value: float
    significant: bool
    wins_a: int
    wins_b: int

    @property
    def n(self) -> int:
        return self.wins_a + self.wins_b


def exact_binomial_test(wins_a: int, wins_b: int) -> BinomialResult:
    """Two-sided exact binomial test against p = 0.5.

    The p-value sums the probabilities of all outcomes whose pmf does not
    exceed the observed outcome's pmf. Under p = 0.5 that reduces to
    comparing binomial coefficients, so the sum is exact in integers.
    """
    if wins_a < 0 or wins_b < 0:
        raise ValidationError("win counts must be nonnegative")
    n = wins_a + wins_b
    if n < 1:
        raise ValidationError("exact binomial test needs at least one trial")
    observed = math.comb(n, wins_a)
    total = sum(c for c in (math.comb(n, k) for k in range(n + 1)) if c <= observed)
    p = float(Fraction(total, 2**n))
    return BinomialResult(
        p_value=p, significant=p < SIGNIFICANCE_LEVEL, wins_a=wins_a, wins_b=wins_b
    )


@dataclass
class PreferenceTally:
    """Forced-choice wins per speaker for one strategy pair (A vs B)."""

    pair: tuple[str, str]
    per_speaker: dict[str, tuple[int, int]] = field(default_factory=dict)

    @property
    def label(self) -> str:
        return f"{self.pair[0]}-{self.pair[1]}"

    @property
    def overall(self) -> tuple[int, int]:
        a = sum(w for w, _ in self.per_speaker.values())
        b = sum(l for _, l in self.per_speaker.values())
        return a, b

    def test(self, speaker: str | None = None) -> BinomialResult:
        wins = self.overall if speaker is None else self.per_speaker[speaker]
        return exact_binomial_test(*wins)

    def to_dict(self) -> dict:
        overall = self.overall
        overall_test = self.test()
        rows = {}
        for spk, (a, b) in sorted(self.per_speaker.items()):
            r = self.test(spk)
            rows[spk] = {
                "wins_a": a,
                "wins_b": b,
                "p_value": r.p_value,
                "significant": r.significant,
            }
        return {
            "pair": list(self.pair),
            "per_speaker": rows,
            "overall": {
                "wins_a": overall[0],
                "wins_b": overall[1],
                "p_value": overall_test.p_value,
                "significant": overall_test.significant,
            },
        }


@dataclass
class MetricRow:
    speaker: str  # a speaker id or ALL_SPEAKERS
    strategy: str
    mcd_db: float
    f0_corr: float | None  # None when undefined for these frames
    vuv_error_rate: float
    n_frames_scored: int


@dataclass
class MetricReport:
    rows: list[MetricRow] = field(default_factory=list)

    def row(self, speaker: str, strategy: str) -> MetricRow:
        for r in self.rows:
            if r.speaker == speaker and r.strategy == strategy:
                return r
        raise KeyError((speaker, strategy))

    @property
    def strategies(self) -> list[str]:
        seen = []
        for r in self.rows:
            if r.strategy not in seen:
                seen.append(r.strategy)
        return seen

    @property
    def speakers(self) -> list[str]:
        seen = []
        for r in self.rows:
            if r.speaker != ALL_SPEAKERS and r.speaker not in seen:
                seen.append(r.speaker)
        return seen

    def to_dict(self) -> dict:
        out: dict = {}
        for r in self.rows:
            out.setdefault(r.strategy, {})[r.speaker] = {
                "mcd_db": r.mcd_db,
                "f0_corr": r.f0_corr,
                "vuv_error_rate": r.vuv_error_rate,
                "n_frames_scored": r.n_frames_scored,
            }
        return out


def _metrics_over(frames: list[tuple[AcousticSequence, AcousticSequence]]):
    """Metrics over concatenated (predicted, reference) test utterances."""
    pred_mgc = np.concatenate([p.mgc for p, _ in frames])
    ref_mgc = np.concatenate([r.mgc for _, r in frames])
    pred_f0 = np.concatenate([p.f0 for p, _ in frames])
    ref_f0 = np.concatenate([r.f0 for _, r in frames])
    pred_v = np.concatenate([p.voicing for p, _ in frames])
    ref_v = np.concatenate([r.voicing for _, r in frames])
    try:
        corr = f0_correlation(pred_f0, pred_v, ref_f0, ref_v)
    except UndefinedMetricError:
        corr = None
    return (
        mcd(pred_mgc, ref_mgc),
        corr,
        vuv_error_rate(pred_v, ref_v),
        int(pred_mgc.shape[0]),
    )


def evaluate_strategy(
    corpus: Corpus,
    outputs: Mapping[str, AcousticSequence],
    strategy: str,
    split: str = "test",
) -> list[MetricRow]:
    """Per-speaker rows plus one pooled row for one strategy's outputs.

    ``outputs`` maps utterance ids of the scored split to predicted
    sequences; every utterance of the split must be covered.
    """
    wanted = corpus.all_split_ids(split)
    missing = [u for _, u in wanted if u not in outputs]
    if missing:
        raise CoverageError(missing, message=None)
    rows = []
    everything = []
    for spk in corpus.speaker_ids:
        pairs = []
        for utt_id in corpus.split_ids(split, spk):
            ref = corpus.utterance(utt_id).acoustic
            pred = outputs[utt_id]
            if pred.n_frames != ref.n_frames or pred.d_mgc != ref.d_mgc:
                raise ValidationError(
                    f"{utt_id}: prediction shape ({pred.n_frames}, {pred.d_mgc}) "
                    f"does not match reference ({ref.n_frames}, {ref.d_mgc})"
                )
            pairs.append((pred, ref))
        everything.extend(pairs)
        m, corr, vuv, n = _metrics_over(pairs)
        rows.append(MetricRow(spk, strategy, m, corr, vuv, n))
    m, corr, vuv, n = _metrics_over(everything)
    rows.append(MetricRow(ALL_SPEAKERS, strategy, m, corr, vuv, n))
    return rows


def build_reports(
    corpus: Corpus,
    outputs_by_strategy: Mapping[str, Mapping[str, AcousticSequence]],
    split: str = "test",
) -> MetricReport:
    """Metric table over all strategies: per-speaker and pooled rows each."""
    report = MetricReport()
    for strategy in outputs_by_strategy:
        report.rows.extend(
            evaluate_strategy(corpus, outputs_by_strategy[strategy], strategy, split)
        )
    return report
