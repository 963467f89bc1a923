"""Deterministic synthetic-speaker corpus generator.

Stands in for a real multi-speaker recording corpus at desk scale. Ground
truth is affine-plus-noise: each speaker owns a spectral transform that is a
shared base matrix plus a small per-speaker perturbation, and a fully
per-speaker bias vector. That makes the cross-speaker claims observable
(pooled training can learn the shared part from everyone's data, a
first-layer speaker bias can absorb the per-speaker offset) while single
speakers remain learnable on their own.

Linguistic frames are low-pass-filtered Gaussian noise, so they carry
frame-to-frame correlation like real contextual features. F0 is a smooth
function of the frame index and linguistic channel 0; voicing thresholds a
squashed copy of linguistic channel 1, so the mask can be recomputed from
the stored inputs exactly.

All randomness derives from ``master_seed`` with per-utterance child seeds,
so generation is reproducible and parallelizable per utterance. Payload
arrays are float32 (the record-file precision); every derived quantity is
computed from the stored float32 inputs, which keeps the noiseless corpus
exactly affine in what a model actually sees.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .corpus import Corpus, SpeakerId, Utterance
from .errors import ValidationError
from .features import AcousticSequence, FeatureConfig

#: Desk-scale default per-speaker train counts (ascending), one tenth of the
#: reference imbalanced corpus, rounded.
DEFAULT_TRAIN_COUNTS = (74, 99, 139, 157, 175, 302, 398, 436, 552, 875)

F0_CHANNEL = 0
VOICING_CHANNEL = 1


@dataclass
class SpeakerProfile:
    """Ground-truth generation parameters for one synthetic speaker."""

    base_f0: float
    f0_range: float
    spectral_transform: np.ndarray  # (d_mgc, d_lin)
    bias_vector: np.ndarray  # (d_mgc,)
    noise_sigma: float
    voicing_threshold: float

    def __post_init__(self):
        self.spectral_transform = np.asarray(self.spectral_transform, dtype=float)
        self.bias_vector = np.asarray(self.bias_vector, dtype=float)
        if self.base_f0 <= 0:
            raise ValidationError(f"base_f0 must be > 0, got {self.base_f0}")
        if self.f0_range < 0:
            raise ValidationError(f"f0_range must be >= 0, got {self.f0_range}")
        if self.noise_sigma < 0:
            raise ValidationError(f"noise_sigma must be >= 0, got {self.noise_sigma}")
        if not (0.0 < self.voicing_threshold < 1.0):
            raise ValidationError(
                f"voicing_threshold must be in (0, 1), got {self.voicing_threshold}"
            )

    def to_dict(self) -> dict:
        return {
            "base_f0": self.base_f0,
            "f0_range": self.f0_range,
            "spectral_transform": self.spectral_transform.tolist(),
            "bias_vector": self.bias_vector.tolist(),
            "noise_sigma": self.noise_sigma,
            "voicing_threshold": self.voicing_threshold,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SpeakerProfile":
        return cls(
            base_f0=d["base_f0"],
            f0_range=d["f0_range"],
            spectral_transform=np.asarray(d["spectral_transform"], dtype=float),
            bias_vector=np.asarray(d["bias_vector"], dtype=float),
            noise_sigma=d["noise_sigma"],
            voicing_threshold=d["voicing_threshold"],
        )


@dataclass
class GeneratorConfig:
    """Knobs for :func:`generate_corpus`.

    ``per_speaker_train_counts`` is ordered by display rank (ascending
    imbalance). ``speaker_variation`` scales how far each speaker's spectral
    transform strays from the shared base; 0 makes all speakers share one
    transform (biases still differ).
    """

    n_speakers: int = 10
    per_speaker_train_counts: Sequence[int] = DEFAULT_TRAIN_COUNTS
    val_count: int = 5
    test_count: int = 10
    d_lin: int = 16
    d_mgc: int = 12
    frames_min: int = 20
    frames_max: int = 40
    n_f0_bins: int = 63  # desk-scaled like the other dims; full scale is 511
    f0_min: float = 50.0
    f0_max: float = 500.0
    noise_sigma: float = 0.05
    speaker_variation: float = 0.1
    smoothing: int = 9
    master_seed: int = 1234

    def __post_init__(self):
        self.per_speaker_train_counts = tuple(int(c) for c in self.per_speaker_train_counts)
        if self.n_speakers < 1:
            raise ValidationError("n_speakers must be >= 1")
        if len(self.per_speaker_train_counts) != self.n_speakers:
            raise ValidationError(
                f"per_speaker_train_counts has {len(self.per_speaker_train_counts)} "
                f"entries for {self.n_speakers} speakers"
            )
        if min(self.per_speaker_train_counts) < 1:
            raise ValidationError("per-speaker train counts must be >= 1")
        if self.val_count < 1 or self.test_count < 1:
            raise ValidationError("val_count and test_count must be >= 1")
        if self.d_lin < 2:
            raise ValidationError("d_lin must be >= 2 (channels 0 and 1 drive F0/voicing)")
        if self.d_mgc < 1:
            raise ValidationError("d_mgc must be >= 1")
        if self.frames_min < 1 or self.frames_max < self.frames_min:
            raise ValidationError(
                f"bad frame range [{self.frames_min}, {self.frames_max}]"
            )
        if self.noise_sigma < 0:
            raise ValidationError("noise_sigma must be >= 0")
        if self.speaker_variation < 0:
            raise ValidationError("speaker_variation must be >= 0")
        if self.smoothing < 1:
            raise ValidationError("smoothing must be >= 1")

    @property
    def feature_config(self) -> FeatureConfig:
        return FeatureConfig(
            d_mgc=self.d_mgc,
            n_f0_bins=self.n_f0_bins,
            f0_min=self.f0_min,
            f0_max=self.f0_max,
        )

    def to_dict(self) -> dict:
        return {
            "n_speakers": self.n_speakers,
            "per_speaker_train_counts": list(self.per_speaker_train_counts),
            "val_count": self.val_count,
            "test_count": self.test_count,
            "d_lin": self.d_lin,
            "d_mgc": self.d_mgc,
            "frames_min": self.frames_min,
            "frames_max": self.frames_max,
            "n_f0_bins": self.n_f0_bins,
            "f0_min": self.f0_min,
            "f0_max": self.f0_max,
            "noise_sigma": self.noise_sigma,
            "speaker_variation": self.speaker_variation,
            "smoothing": self.smoothing,
            "master_seed": self.master_seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GeneratorConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ValidationError(f"unknown generator config keys: {sorted(unknown)}")
        return cls(**d)


def voicing_from_linguistic(linguistic: np.ndarray, threshold: float) -> np.ndarray:
    """The generator's voicing rule: squash channel 1 through a logistic, threshold it."""
    x = np.asarray(linguistic, dtype=float)[:, VOICING_CHANNEL]
    return 1.0 / (1.0 + np.exp(-x)) > threshold


def _smooth_noise(rng: np.random.Generator, n_frames: int, d: int, width: int) -> np.ndarray:
    """Low-pass-filtered white noise with roughly unit marginal variance."""
    kernel = np.hanning(width + 2)[1:-1] if width > 1 else np.ones(1)
    kernel = kernel / np.linalg.norm(kernel)
    white = rng.standard_normal((n_frames + len(kernel) - 1, d))
    out = np.empty((n_frames, d))
    for j in range(d):
        out[:, j] = np.convolve(white[:, j], kernel, mode="valid")
    return out


def make_profiles(config: GeneratorConfig) -> list[SpeakerProfile]:
    """Speaker profiles derived from the master seed (stream 0)."""
    rng = np.random.default_rng([config.master_seed, 0])
    scale = 0.6 / np.sqrt(config.d_lin)
    base_transform = rng.normal(0.0, scale, size=(config.d_mgc, config.d_lin))
    profiles = []
    for _ in range(config.n_speakers):
        delta = rng.normal(0.0, scale, size=(config.d_mgc, config.d_lin))
        profiles.append(
            SpeakerProfile(
                base_f0=float(rng.uniform(170.0, 270.0)),
                f0_range=float(rng.uniform(25.0, 55.0)),
                spectral_transform=base_transform + config.speaker_variation * delta,
                bias_vector=rng.uniform(-0.5, 0.5, size=config.d_mgc),
                noise_sigma=config.noise_sigma,
                voicing_threshold=float(rng.uniform(0.25, 0.45)),
            )
        )
    return profiles


def _generate_utterance(
    utt_id: str,
    speaker: str,
    profile: SpeakerProfile,
    config: GeneratorConfig,
    rng: np.random.Generator,
) -> Utterance:
    n_frames = int(rng.integers(config.frames_min, config.frames_max + 1))
    if n_frames < 1:
        raise ValidationError("utterance frame count must be >= 1")
    lin64 = _smooth_noise(rng, n_frames, config.d_lin, config.smoothing)
    lin = lin64.astype(np.float32)

    # Everything downstream is computed from the stored float32 inputs so the
    # noiseless corpus stays exactly affine in what models read back.
    x = lin.astype(np.float64)
    mgc64 = x @ profile.spectral_transform.T + profile.bias_vector
    if profile.noise_sigma > 0:
        mgc64 = mgc64 + rng.normal(0.0, profile.noise_sigma, size=mgc64.shape)

    # the sine share is deliberately small: it depends on a per-utterance
    # phase no model input carries, so it acts as structured F0 noise, while
    # the channel-driven share keeps the track learnable at desk scale
    period = float(rng.uniform(10.0, 40.0))
    phase = float(rng.uniform(0.0, 2.0 * np.pi))
    t = np.arange(n_frames, dtype=np.float64)
    swing = 0.2 * np.sin(2.0 * np.pi * t / period + phase) + 0.8 * np.tanh(x[:, F0_CHANNEL])
    f0 = profile.base_f0 + profile.f0_range * swing
    voicing = voicing_from_linguistic(lin, profile.voicing_threshold)

    acoustic = AcousticSequence(
        mgc=mgc64.astype(np.float32),
        f0=np.where(voicing, f0, 0.0).astype(np.float32),
        voicing=voicing,
    )
    return Utterance(utt_id=utt_id, speaker=speaker, linguistic=lin, acoustic=acoustic)


def generate_corpus(config: GeneratorConfig) -> Corpus:
    """Generate the full corpus; deterministic in ``config.master_seed``."""
    profiles = make_profiles(config)
    speakers = [SpeakerId(f"spk{i + 1:02d}", i) for i in range(config.n_speakers)]
    split_plan = (
        ("train", "tr", lambda i: config.per_speaker_train_counts[i]),
        ("validation", "va", lambda i: config.val_count),
        ("test", "te", lambda i: config.test_count),
    )
    splits: dict[str, dict[str, list[str]]] = {name: {} for name, _, _ in split_plan}
    payloads: dict[str, Utterance] = {}
    for rank, spk in enumerate(speakers):
        for split_idx, (split, tag, count_of) in enumerate(split_plan):
            ids = []
            for i in range(count_of(rank)):
                utt_id = f"{spk.id}_{tag}{i:05d}"
                rng = np.random.default_rng([config.master_seed, 1, rank, split_idx, i])
                payloads[utt_id] = _generate_utterance(
                    utt_id, spk.id, profiles[rank], config, rng
                )
                ids.append(utt_id)
            splits[split][spk.id] = ids
    return Corpus(
        speakers,
        splits,
        config.feature_config,
        utterances=payloads,
        profiles={spk.id: profiles[i] for i, spk in enumerate(speakers)},
    )
