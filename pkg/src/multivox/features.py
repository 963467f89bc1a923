"""Acoustic feature conventions: spectral vectors and mel-scale F0 quantization.

A frame of acoustic data is one continuous spectral vector (the MGC role)
plus one F0 slot that is either a voiced value in Hz or an unvoiced flag.
Scalar APIs encode unvoiced as ``None``; track APIs carry a parallel boolean
voicing mask so everything stays in flat numpy arrays.

Quantized F0 uses class 0 for unvoiced and classes ``1 .. n_f0_bins`` for
equal-width bins in the mel domain. Dequantization returns the Hz value of
the bin's mel midpoint.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np

from .errors import ValidationError

UNVOICED_CLASS = 0

_MEL_SLOPE = 1127.0
_MEL_BREAK_HZ = 700.0


def hz_to_mel(hz):
    """Map frequency in Hz to mel via ``1127 * ln(1 + hz / 700)``.

    Accepts scalars or arrays; strictly increasing; rejects negative input.
    """
    arr = np.asarray(hz, dtype=float)
    if np.any(arr < 0.0):
        raise ValidationError("hz_to_mel requires nonnegative frequencies")
    mel = _MEL_SLOPE * np.log1p(arr / _MEL_BREAK_HZ)
    return float(mel) if arr.ndim == 0 else mel


def mel_to_hz(mel):
    """Inverse of :func:`hz_to_mel`."""
    arr = np.asarray(mel, dtype=float)
    hz = _MEL_BREAK_HZ * np.expm1(arr / _MEL_SLOPE)
    return float(hz) if arr.ndim == 0 else hz


@dataclass(frozen=True)
class FeatureConfig:
    """Feature-space conventions shared by a corpus and the models trained on it.

    ``d_mgc`` is the spectral vector width. F0 is quantized to ``n_f0_bins``
    equal-width mel bins covering ``[f0_min, f0_max]`` plus class 0 for
    unvoiced frames. Frame shift and analysis window are carried as metadata
    only; no signal processing happens in this package.
    """

    d_mgc: int = 12
    n_f0_bins: int = 511
    f0_min: float = 50.0
    f0_max: float = 500.0
    frame_shift_ms: float = 5.0
    window_ms: float = 25.0

    def __post_init__(self):
        if self.d_mgc < 1:
            raise ValidationError(f"d_mgc must be >= 1, got {self.d_mgc}")
        if self.n_f0_bins < 2:
            raise ValidationError(f"n_f0_bins must be >= 2, got {self.n_f0_bins}")
        if not (0.0 < self.f0_min < self.f0_max):
            raise ValidationError(
                f"need 0 < f0_min < f0_max, got ({self.f0_min}, {self.f0_max})"
            )

    @property
    def n_f0_classes(self) -> int:
        """Number of F0 classes including the unvoiced class 0."""
        return self.n_f0_bins + 1

    @property
    def mel_min(self) -> float:
        return hz_to_mel(self.f0_min)

    @property
    def mel_max(self) -> float:
        return hz_to_mel(self.f0_max)

    @property
    def mel_bin_width(self) -> float:
        return (self.mel_max - self.mel_min) / self.n_f0_bins

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureConfig":
        return cls(**d)


def quantize_f0(f0: float | None, config: FeatureConfig) -> int:
    """Quantize one F0 value (``None`` = unvoiced) to a class index.

    Voiced values are clamped into ``[f0_min, f0_max]`` first, so there is no
    out-of-range error; the bin index is the equal-width mel bin containing
    the clamped value, shifted up by one to leave class 0 for unvoiced.
    """
    if f0 is None:
        return UNVOICED_CLASS
    v = min(max(float(f0), config.f0_min), config.f0_max)
    mel = hz_to_mel(v)
    idx = 1 + int((mel - config.mel_min) / config.mel_bin_width)
    return min(max(idx, 1), config.n_f0_bins)


def dequantize_f0(cls_index: int, config: FeatureConfig) -> float | None:
    """Map a class index back to Hz (mel midpoint of the bin) or ``None``."""
    c = int(cls_index)
    if c < 0 or c > config.n_f0_bins:
        raise ValidationError(
            f"F0 class {c} out of range [0, {config.n_f0_bins}]"
        )
    if c == UNVOICED_CLASS:
        return None
    mel_mid = config.mel_min + (c - 0.5) * config.mel_bin_width
    return mel_to_hz(mel_mid)


def quantize_track(f0: np.ndarray, voicing: np.ndarray, config: FeatureConfig) -> np.ndarray:
    """Vectorized :func:`quantize_f0` over a track with a voicing mask."""
    f0 = np.asarray(f0, dtype=float)
    voiced = np.asarray(voicing, dtype=bool)
    if f0.shape != voiced.shape:
        raise ValidationError("f0 track and voicing mask must have equal length")
    v = np.clip(f0, config.f0_min, config.f0_max)
    mel = _MEL_SLOPE * np.log1p(v / _MEL_BREAK_HZ)
    idx = 1 + np.floor((mel - config.mel_min) / config.mel_bin_width).astype(int)
    idx = np.clip(idx, 1, config.n_f0_bins)
    return np.where(voiced, idx, UNVOICED_CLASS)


def dequantize_track(classes: np.ndarray, config: FeatureConfig) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized :func:`dequantize_f0`; returns ``(f0_hz, voicing)``.

    Unvoiced frames get f0 value 0.0 by convention (meaningful only where
    the returned mask is True).
    """
    c = np.asarray(classes)
    if np.any(c < 0) or np.any(c > config.n_f0_bins):
        raise ValidationError(
            f"F0 classes out of range [0, {config.n_f0_bins}]"
        )
    voiced = c != UNVOICED_CLASS
    mel_mid = config.mel_min + (c - 0.5) * config.mel_bin_width
    hz = _MEL_BREAK_HZ * np.expm1(mel_mid / _MEL_SLOPE)
    return np.where(voiced, hz, 0.0), voiced


@dataclass
class AcousticFrame:
    """One spectral vector plus one F0 slot (Hz when voiced, ``None`` otherwise)."""

    mgc: np.ndarray
    f0: float | None

    @property
    def voiced(self) -> bool:
        return self.f0 is not None


class AcousticSequence:
    """A frame sequence stored as flat arrays: mgc ``(T, d)``, f0 ``(T,)``, voicing ``(T,)``.

    The f0 array is meaningful only where the voicing mask is True; unvoiced
    slots conventionally hold 0.0.
    """

    __slots__ = ("mgc", "f0", "voicing")

    def __init__(self, mgc: np.ndarray, f0: np.ndarray, voicing: np.ndarray):
        mgc = np.asarray(mgc)
        f0 = np.asarray(f0)
        voicing = np.asarray(voicing, dtype=bool)
        if mgc.ndim != 2:
            raise ValidationError(f"mgc must be 2-D (frames x dims), got shape {mgc.shape}")
        if f0.shape != (mgc.shape[0],) or voicing.shape != (mgc.shape[0],):
            raise ValidationError(
                "mgc, f0 and voicing must agree on frame count: "
                f"{mgc.shape[0]}, {f0.shape}, {voicing.shape}"
            )
        self.mgc = mgc
        self.f0 = f0
        self.voicing = voicing

    @property
    def n_frames(self) -> int:
        return self.mgc.shape[0]

    @property
    def d_mgc(self) -> int:
        return self.mgc.shape[1]

    def frame(self, t: int) -> AcousticFrame:
        f0 = float(self.f0[t]) if self.voicing[t] else None
        return AcousticFrame(mgc=self.mgc[t], f0=f0)

    def __len__(self) -> int:
        return self.n_frames

    def __eq__(self, other) -> bool:
        if not isinstance(other, AcousticSequence):
            return NotImplemented
        return (
            np.array_equal(self.mgc, other.mgc)
            and np.array_equal(self.f0, other.f0)
            and np.array_equal(self.voicing, other.voicing)
        )

    def __repr__(self) -> str:
        return f"AcousticSequence(n_frames={self.n_frames}, d_mgc={self.d_mgc})"
