"""Model checkpoint format and training-log CSV.

Checkpoint layout, all integers little-endian::

    offset  size  field
    0       4     magic, b"MVXM"
    4       4     format version, uint32 (currently 1)
    8       4     header length L, uint32
    12      L     header, UTF-8 JSON: topology descriptor, speaker ids,
                  recipe, feature config, best epoch, training log
    12+L    ...   tensor block: n_tensors uint32, then per tensor
                  name length uint32, name UTF-8, ndim uint32,
                  dims uint32 x ndim, data float32 little-endian

Tensors are stored in the network's stable parameter order and as float32,
so a checkpoint is a canonical byte representation of a trained model.
"""

from __future__ import annotations

import csv
import io
import json
import struct
from pathlib import Path

import numpy as np

from ..corpus import TrainingSetRecipe
from ..errors import ValidationError
from ..features import FeatureConfig
from .network import AcousticNetwork, NetworkTopology
from .training import EpochStats, TrainedModel

CHECKPOINT_MAGIC = b"MVXM"
CHECKPOINT_VERSION = 1


def serialize_model(model: TrainedModel) -> bytes:
    header = {
        "format": "multivox-model",
        "version": CHECKPOINT_VERSION,
        "topology": model.topology.to_dict(),
        "speaker_ids": list(model.speaker_ids),
        "recipe": model.recipe.to_dict() if model.recipe else None,
        "feature_config": model.feature_config.to_dict(),
        "best_epoch": model.best_epoch,
        "log": [[s.epoch, s.train_loss, s.val_loss] for s in model.log],
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    buf = io.BytesIO()
    buf.write(CHECKPOINT_MAGIC)
    buf.write(struct.pack("<II", CHECKPOINT_VERSION, len(header_bytes)))
    buf.write(header_bytes)
    tensors = list(model.network.param_items())
    buf.write(struct.pack("<I", len(tensors)))
    for name, value in tensors:
        encoded = name.encode("utf-8")
        buf.write(struct.pack("<I", len(encoded)))
        buf.write(encoded)
        buf.write(struct.pack("<I", value.ndim))
        buf.write(struct.pack(f"<{value.ndim}I", *value.shape))
        buf.write(np.ascontiguousarray(value, dtype="<f4").tobytes())
    return buf.getvalue()


def save_model(model: TrainedModel, path: Path) -> None:
    Path(path).write_bytes(serialize_model(model))


def load_model(path: Path) -> TrainedModel:
    data = Path(path).read_bytes()
    if len(data) < 12 or data[:4] != CHECKPOINT_MAGIC:
        raise ValidationError(f"{path}: not a model checkpoint")
    version, header_len = struct.unpack_from("<II", data, 4)
    if version != CHECKPOINT_VERSION:
        raise ValidationError(f"{path}: unsupported checkpoint version {version}")
    off = 12
    header = json.loads(data[off : off + header_len].decode("utf-8"))
    off += header_len

    topology = NetworkTopology.from_dict(header["topology"])
    network = AcousticNetwork(topology, seed=0)
    (n_tensors,) = struct.unpack_from("<I", data, off)
    off += 4
    named = {}
    for _ in range(n_tensors):
        (name_len,) = struct.unpack_from("<I", data, off)
        off += 4
        name = data[off : off + name_len].decode("utf-8")
        off += name_len
        (ndim,) = struct.unpack_from("<I", data, off)
        off += 4
        shape = struct.unpack_from(f"<{ndim}I", data, off)
        off += 4 * ndim
        count = int(np.prod(shape)) if ndim else 1
        named[name] = (
            np.frombuffer(data, dtype="<f4", count=count, offset=off)
            .reshape(shape)
            .astype(float)
        )
        off += 4 * count
    if off != len(data):
        raise ValidationError(f"{path}: trailing bytes after tensor block")
    network.load_named_params(named)

    recipe = (
        TrainingSetRecipe.from_dict(header["recipe"]) if header["recipe"] else None
    )
    return TrainedModel(
        network=network,
        speaker_ids=list(header["speaker_ids"]),
        feature_config=FeatureConfig.from_dict(header["feature_config"]),
        recipe=recipe,
        log=[EpochStats(int(e), float(t), float(v)) for e, t, v in header["log"]],
        best_epoch=header["best_epoch"],
    )


def write_training_log(model: TrainedModel, path: Path) -> None:
    """CSV log: epoch, train_loss, val_loss."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "train_loss", "val_loss"])
        for s in model.log:
            writer.writerow([s.epoch, f"{s.train_loss:.10g}", f"{s.val_loss:.10g}"])
