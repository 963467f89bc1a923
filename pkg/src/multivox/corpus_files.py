"""On-disk corpus and feature-record formats.

Corpus directory layout::

    <corpus_dir>/
        manifest.json          speaker table, feature config, split assignment
        records/<utt_id>.rec   one record file per utterance

Record file layout, all integers and floats little-endian::

    offset  size  field
    0       4     magic, b"MVXR"
    4       4     format version, uint32 (currently 1)
    8       4     n_frames, uint32
    12      4     d_lin,    uint32 (0 allowed: prediction files carry no
                  linguistic matrix)
    16      4     d_mgc,    uint32
    20      ...   payload: float32 arrays, row-major, in this order:
                  linguistic (n_frames x d_lin), mgc (n_frames x d_mgc),
                  f0 (n_frames), voicing (n_frames, values 0.0 or 1.0)

Prediction directories reuse the record format with ``d_lin = 0`` plus a
small ``index.json`` mapping utterance ids to speakers, so separately
generated outputs can be combined and evaluated offline.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Mapping

import numpy as np

from .corpus import Corpus, SpeakerId, Utterance
from .errors import ValidationError
from .features import AcousticSequence, FeatureConfig

RECORD_MAGIC = b"MVXR"
RECORD_VERSION = 1
MANIFEST_NAME = "manifest.json"
RECORDS_SUBDIR = "records"

_HEADER = struct.Struct("<4sIIII")


def write_record(path: Path, acoustic: AcousticSequence, linguistic: np.ndarray | None = None) -> None:
    """Write one utterance record; ``linguistic=None`` stores d_lin = 0."""
    path = Path(path)
    n = acoustic.n_frames
    if linguistic is None:
        lin = np.empty((n, 0), dtype="<f4")
    else:
        lin = np.ascontiguousarray(linguistic, dtype="<f4")
        if lin.shape[0] != n:
            raise ValidationError(
                f"linguistic frame count {lin.shape[0]} != acoustic {n}"
            )
    mgc = np.ascontiguousarray(acoustic.mgc, dtype="<f4")
    f0 = np.ascontiguousarray(acoustic.f0, dtype="<f4")
    voicing = np.ascontiguousarray(acoustic.voicing, dtype="<f4")
    header = _HEADER.pack(RECORD_MAGIC, RECORD_VERSION, n, lin.shape[1], mgc.shape[1])
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(lin.tobytes())
        fh.write(mgc.tobytes())
        fh.write(f0.tobytes())
        fh.write(voicing.tobytes())


def read_record(path: Path) -> tuple[np.ndarray | None, AcousticSequence]:
    """Read one record; returns ``(linguistic or None, acoustic)``."""
    path = Path(path)
    data = path.read_bytes()
    if len(data) < _HEADER.size:
        raise ValidationError(f"{path}: truncated record header")
    magic, version, n, d_lin, d_mgc = _HEADER.unpack_from(data)
    if magic != RECORD_MAGIC:
        raise ValidationError(f"{path}: bad magic {magic!r}")
    if version != RECORD_VERSION:
        raise ValidationError(f"{path}: unsupported record version {version}")
    expected = _HEADER.size + 4 * (n * d_lin + n * d_mgc + 2 * n)
    if len(data) != expected:
        raise ValidationError(
            f"{path}: size {len(data)} does not match header (expected {expected})"
        )
    off = _HEADER.size
    def take(count, shape):
        nonlocal off
        arr = np.frombuffer(data, dtype="<f4", count=count, offset=off).reshape(shape)
        off += 4 * count
        return arr
    lin = take(n * d_lin, (n, d_lin))
    mgc = take(n * d_mgc, (n, d_mgc))
    f0 = take(n, (n,))
    raw_voicing = take(n, (n,))
    bad = ~np.isin(raw_voicing, (0.0, 1.0))
    if np.any(bad):
        raise ValidationError(f"{path}: voicing mask contains values other than 0/1")
    acoustic = AcousticSequence(mgc.copy(), f0.copy(), raw_voicing > 0.5)
    return (None if d_lin == 0 else lin.copy()), acoustic


def record_path(corpus_dir: Path, utt_id: str) -> Path:
    return Path(corpus_dir) / RECORDS_SUBDIR / f"{utt_id}.rec"


def save_corpus(corpus: Corpus, corpus_dir: Path) -> None:
    """Write manifest plus one record per utterance (payloads required)."""
    if not corpus.has_payloads:
        raise ValidationError("cannot save a metadata-only corpus")
    corpus_dir = Path(corpus_dir)
    (corpus_dir / RECORDS_SUBDIR).mkdir(parents=True, exist_ok=True)
    utterances = []
    for split, table in corpus.splits.items():
        for spk in corpus.speaker_ids:
            for utt_id in table[spk]:
                utt = corpus.utterance(utt_id)
                write_record(record_path(corpus_dir, utt_id), utt.acoustic, utt.linguistic)
                utterances.append(
                    {
                        "utt_id": utt_id,
                        "speaker": spk,
                        "split": split,
                        "n_frames": utt.n_frames,
                        "file": f"{RECORDS_SUBDIR}/{utt_id}.rec",
                    }
                )
    manifest = {
        "format": "multivox-corpus",
        "version": 1,
        "feature_config": corpus.feature_config.to_dict(),
        "speakers": [
            {"id": s.id, "display_rank": s.display_rank} for s in corpus.speakers
        ],
        "utterances": utterances,
    }
    if corpus.profiles:
        manifest["synth_profiles"] = {
            spk: profile.to_dict() for spk, profile in corpus.profiles.items()
        }
    _write_json(corpus_dir / MANIFEST_NAME, manifest)


def load_corpus(corpus_dir: Path, payloads: bool = True) -> Corpus:
    """Load a corpus directory; ``payloads=False`` gives a metadata-only corpus."""
    corpus_dir = Path(corpus_dir)
    manifest_path = corpus_dir / MANIFEST_NAME
    if not manifest_path.is_file():
        raise ValidationError(f"no {MANIFEST_NAME} in {corpus_dir}")
    manifest = json.loads(manifest_path.read_text())
    if manifest.get("format") != "multivox-corpus":
        raise ValidationError(f"{manifest_path}: not a corpus manifest")
    if manifest.get("version") != 1:
        raise ValidationError(
            f"{manifest_path}: unsupported manifest version {manifest.get('version')}"
        )
    feature_config = FeatureConfig.from_dict(manifest["feature_config"])
    speakers = [
        SpeakerId(entry["id"], entry["display_rank"]) for entry in manifest["speakers"]
    ]
    splits: dict[str, dict[str, list[str]]] = {}
    for entry in manifest["utterances"]:
        splits.setdefault(entry["split"], {}).setdefault(entry["speaker"], []).append(
            entry["utt_id"]
        )
    payload_map = None
    if payloads:
        payload_map = {}
        for entry in manifest["utterances"]:
            lin, acoustic = read_record(corpus_dir / entry["file"])
            if lin is None:
                raise ValidationError(
                    f"{entry['utt_id']}: corpus records must carry a linguistic matrix"
                )
            payload_map[entry["utt_id"]] = Utterance(
                utt_id=entry["utt_id"],
                speaker=entry["speaker"],
                linguistic=lin,
                acoustic=acoustic,
            )
    profiles = None
    if "synth_profiles" in manifest:
        from .synthgen import SpeakerProfile

        profiles = {
            spk: SpeakerProfile.from_dict(d)
            for spk, d in manifest["synth_profiles"].items()
        }
    return Corpus(speakers, splits, feature_config, payload_map, profiles)


def save_predictions(
    pred_dir: Path,
    outputs: Mapping[str, AcousticSequence],
    speakers: Mapping[str, str],
    label: str,
    corpus_id: str,
) -> None:
    """Write a prediction directory: index.json plus d_lin = 0 records."""
    pred_dir = Path(pred_dir)
    (pred_dir / RECORDS_SUBDIR).mkdir(parents=True, exist_ok=True)
    index = {
        "format": "multivox-predictions",
        "version": 1,
        "label": label,
        "corpus_id": corpus_id,
        "utterances": {},
    }
    for utt_id in sorted(outputs):
        write_record(record_path(pred_dir, utt_id), outputs[utt_id])
        index["utterances"][utt_id] = {
            "speaker": speakers[utt_id],
            "file": f"{RECORDS_SUBDIR}/{utt_id}.rec",
        }
    _write_json(pred_dir / "index.json", index)


def load_predictions(pred_dir: Path) -> tuple[str, str, dict[str, AcousticSequence]]:
    """Read a prediction directory; returns ``(label, corpus_id, outputs)``."""
    pred_dir = Path(pred_dir)
    index_path = pred_dir / "index.json"
    if not index_path.is_file():
        raise ValidationError(f"no index.json in {pred_dir}")
    index = json.loads(index_path.read_text())
    if index.get("format") != "multivox-predictions":
        raise ValidationError(f"{index_path}: not a prediction index")
    outputs = {}
    for utt_id, entry in index["utterances"].items():
        _, acoustic = read_record(pred_dir / entry["file"])
        outputs[utt_id] = acoustic
    return index["label"], index["corpus_id"], outputs


def prediction_speakers(pred_dir: Path) -> dict[str, str]:
    index = json.loads((Path(pred_dir) / "index.json").read_text())
    return {u: e["speaker"] for u, e in index["utterances"].items()}


def _write_json(path: Path, payload: dict) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
