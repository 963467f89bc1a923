"""Non-parametric combination of subsystem outputs.

Spectral vectors are combined by the element-wise arithmetic mean. F0 is
combined in two stages: a strict-majority vote decides voicing, then the
voiced value is the mean over the subsystems that voted voiced (unvoiced
subsystems carry no value to average). A tie at exactly half voiced resolves
to unvoiced, which avoids inventing an F0 value; with an odd subsystem count
ties cannot occur.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .errors import ValidationError
from .features import AcousticSequence


def combine_mgc(frames: Sequence[np.ndarray]) -> np.ndarray:
    """Element-wise mean of one spectral frame per subsystem."""
    if len(frames) < 1:
        raise ValidationError("need at least one subsystem frame")
    arrays = [np.asarray(f, dtype=float) for f in frames]
    shape = arrays[0].shape
    for a in arrays[1:]:
        if a.shape != shape:
            raise ValidationError(f"frame shape mismatch: {a.shape} vs {shape}")
    return np.mean(arrays, axis=0)


def combine_f0(values: Sequence[float | None]) -> float | None:
    """Majority vote on voicing, then mean of the voiced subsystems' values."""
    if len(values) < 1:
        raise ValidationError("need at least one subsystem value")
    voiced = [v for v in values if v is not None]
    if 2 * len(voiced) > len(values):
        return float(np.mean(voiced))
    return None


def combine_sequences(outputs: Sequence[AcousticSequence]) -> AcousticSequence:
    """Frame-wise combination of whole subsystem output sequences."""
    if len(outputs) < 1:
        raise ValidationError("need at least one subsystem output")
    n = len(outputs)
    first = outputs[0]
    for seq in outputs[1:]:
        if seq.n_frames != first.n_frames:
            raise ValidationError(
                f"sequence length mismatch: {seq.n_frames} vs {first.n_frames}"
            )
        if seq.d_mgc != first.d_mgc:
            raise ValidationError(
                f"spectral width mismatch: {seq.d_mgc} vs {first.d_mgc}"
            )
    mgc = np.mean([np.asarray(s.mgc, dtype=float) for s in outputs], axis=0)
    voicing_stack = np.stack([s.voicing for s in outputs])
    f0_stack = np.stack([np.asarray(s.f0, dtype=float) for s in outputs])
    voiced_count = voicing_stack.sum(axis=0)
    out_voiced = 2 * voiced_count > n
    with np.errstate(invalid="ignore", divide="ignore"):
        voiced_mean = np.where(
            voiced_count > 0,
            (f0_stack * voicing_stack).sum(axis=0) / np.maximum(voiced_count, 1),
            0.0,
        )
    f0 = np.where(out_voiced, voiced_mean, 0.0)
    return AcousticSequence(mgc=mgc, f0=f0, voicing=out_voiced)
