"""Training loop, trained-model container and the finite-difference oracle."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..corpus import Corpus, TrainingSet, TrainingSetRecipe
from ..errors import TrainingDivergedError, ValidationError
from ..features import FeatureConfig, dequantize_track, quantize_track
from .network import (
    AcousticNetwork,
    NetworkTopology,
    cross_entropy_loss_grad,
    mse_loss_grad,
)


@dataclass(frozen=True)
class TrainingConfig:
    """Plain SGD with per-utterance updates and early stopping on validation loss.

    ``teacher_forcing`` applies to feedback networks during training and
    validation scoring; generation is always free running regardless.
    ``early_stop_patience=None`` disables early stopping.
    """

    learning_rate: float = 0.05
    n_epochs: int = 10
    early_stop_patience: int | None = 5
    shuffle_seed: int = 0
    init_seed: int = 0
    teacher_forcing: bool = True

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValidationError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.n_epochs < 0:
            raise ValidationError(f"n_epochs must be >= 0, got {self.n_epochs}")
        if self.early_stop_patience is not None and self.early_stop_patience < 1:
            raise ValidationError("early_stop_patience must be >= 1 or None")

    def to_dict(self) -> dict:
        return {
            "learning_rate": self.learning_rate,
            "n_epochs": self.n_epochs,
            "early_stop_patience": self.early_stop_patience,
            "shuffle_seed": self.shuffle_seed,
            "init_seed": self.init_seed,
            "teacher_forcing": self.teacher_forcing,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainingConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ValidationError(f"unknown training config keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class EpochStats:
    epoch: int  # 1-based
    train_loss: float
    val_loss: float


@dataclass
class TrainedModel:
    """An immutable trained network plus everything needed to use it."""

    network: AcousticNetwork
    speaker_ids: list[str]
    feature_config: FeatureConfig
    recipe: TrainingSetRecipe | None = None
    log: list[EpochStats] = field(default_factory=list)
    best_epoch: int | None = None

    @property
    def topology(self) -> NetworkTopology:
        return self.network.topology

    @property
    def variant(self) -> str:
        return self.topology.variant

    def speaker_index(self, speaker_id: str) -> int | None:
        """One-hot index for multi-speaker nets, None for single-speaker ones."""
        if speaker_id not in self.speaker_ids:
            raise ValidationError(
                f"model was not trained for speaker {speaker_id} "
                f"(knows {self.speaker_ids})"
            )
        if not self.topology.has_speaker_path:
            return None
        return self.speaker_ids.index(speaker_id)

    def predict_mgc(self, linguistic: np.ndarray, speaker_id: str) -> np.ndarray:
        if self.variant != "sar":
            raise ValidationError("predict_mgc requires a sar model")
        return self.network.forward_sar(linguistic, self.speaker_index(speaker_id))

    def generate_f0(
        self, linguistic: np.ndarray, speaker_id: str
    ) -> tuple[np.ndarray, np.ndarray]:
        """Free-running F0 generation, dequantized to (hz_track, voicing)."""
        if self.variant != "dar":
            raise ValidationError("generate_f0 requires a dar model")
        _, classes = self.network.forward_dar(
            linguistic, self.speaker_index(speaker_id)
        )
        return dequantize_track(classes, self.feature_config)


def _target_classes(utt, config: FeatureConfig) -> np.ndarray:
    return quantize_track(utt.acoustic.f0, utt.acoustic.voicing, config)


def train(
    corpus: Corpus,
    training_set: TrainingSet,
    topology: NetworkTopology,
    config: TrainingConfig,
) -> TrainedModel:
    """Train one network on one training set.

    Per epoch the item order is reshuffled from the seed and every utterance
    contributes one gradient step. The returned model carries the parameters
    of the epoch with the lowest validation loss (the initial parameters when
    ``n_epochs == 0``). Raises :class:`TrainingDivergedError` naming the
    epoch if the loss stops being finite.
    """
    items = training_set.items
    if not items:
        raise ValidationError("training set is empty")
    training_set.validate_against(corpus)
    if not corpus.has_payloads:
        raise ValidationError("training needs a corpus with feature payloads")

    set_speakers = training_set.speaker_ids
    if topology.has_speaker_path:
        if topology.n_speakers != corpus.n_speakers:
            raise ValidationError(
                f"topology expects {topology.n_speakers} speakers, "
                f"corpus has {corpus.n_speakers}"
            )
        speaker_ids = corpus.speaker_ids
    else:
        if len(set_speakers) != 1:
            raise ValidationError(
                "a topology without a speaker path can only train on one speaker"
            )
        speaker_ids = list(set_speakers)

    val_items = [
        (spk, u) for spk in set_speakers for u in corpus.split_ids("validation", spk)
    ]
    if not val_items:
        raise ValidationError("no validation utterances for the training speakers")

    feature_config = corpus.feature_config
    variant = topology.variant
    net = AcousticNetwork(topology, seed=config.init_seed)
    index_of = {spk: i for i, spk in enumerate(speaker_ids)}

    # per-utterance caches: float64 input and target
    x_cache: dict[str, np.ndarray] = {}
    y_cache: dict[str, np.ndarray] = {}

    def fetch(utt_id: str):
        if utt_id not in x_cache:
            utt = corpus.utterance(utt_id)
            x_cache[utt_id] = utt.linguistic.astype(float)
            if variant == "sar":
                y_cache[utt_id] = utt.acoustic.mgc.astype(float)
            else:
                y_cache[utt_id] = _target_classes(utt, feature_config)
        return x_cache[utt_id], y_cache[utt_id]

    def speaker_arg(spk: str) -> int | None:
        return index_of[spk] if topology.has_speaker_path else None

    def item_loss_grad(spk: str, utt_id: str):
        x, y = fetch(utt_id)
        k = speaker_arg(spk)
        if variant == "sar":
            pred = net.forward_sar(x, k)
            return mse_loss_grad(pred, y)
        logits, _ = net.forward_dar(x, k, reference=y if config.teacher_forcing else None)
        return cross_entropy_loss_grad(logits, y)

    def item_loss(spk: str, utt_id: str) -> float:
        loss_value, _ = item_loss_grad(spk, utt_id)
        return loss_value

    rng = np.random.default_rng(config.shuffle_seed)
    log: list[EpochStats] = []
    best: tuple[float, int, dict] | None = None  # (val_loss, epoch, params)

    for epoch in range(1, config.n_epochs + 1):
        order = rng.permutation(len(items))
        train_losses = np.empty(len(items))
        # overflow after a bad step surfaces as a non-finite loss; detect it
        # here instead of spraying runtime warnings
        with np.errstate(over="ignore", invalid="ignore"):
            for j, idx in enumerate(order):
                spk, utt_id = items[idx]
                loss_value, d_out = item_loss_grad(spk, utt_id)
                if not np.isfinite(loss_value):
                    raise TrainingDivergedError(epoch, loss_value)
                net.zero_grads()
                net.backward(d_out)
                net.sgd_step(config.learning_rate)
                train_losses[j] = loss_value
            val_loss = float(np.mean([item_loss(spk, u) for spk, u in val_items]))
        if not np.isfinite(val_loss):
            raise TrainingDivergedError(epoch, val_loss)
        log.append(EpochStats(epoch, float(train_losses.mean()), val_loss))
        if best is None or val_loss < best[0]:
            best = (val_loss, epoch, net.named_params())
        if (
            config.early_stop_patience is not None
            and epoch - best[1] >= config.early_stop_patience
        ):
            break

    best_epoch = None
    if best is not None:
        best_epoch = best[1]
        net.load_named_params(best[2])
    return TrainedModel(
        network=net,
        speaker_ids=speaker_ids,
        feature_config=feature_config,
        recipe=training_set.recipe,
        log=log,
        best_epoch=best_epoch,
    )


@dataclass
class GradientCheckResult:
    max_rel_error: float
    n_params: int
    worst_param: str

    @property
    def passed(self) -> bool:
        return self.max_rel_error < 1e-4


def gradient_check(
    network: AcousticNetwork,
    x: np.ndarray,
    target: np.ndarray,
    speaker: int | None = None,
    step: float = 1e-5,
    rel_floor: float = 1e-5,
) -> GradientCheckResult:
    """Compare analytic gradients against central finite differences.

    The relative error per parameter is ``|g - fd| / max(|g|, |fd|, floor)``;
    the floor keeps near-zero gradients from dividing by noise (the finite
    difference itself is accurate to roughly 1e-10 at this step size).
    """
    variant = network.topology.variant

    def eval_loss() -> float:
        if variant == "sar":
            pred = network.forward_sar(x, speaker)
            loss_value, _ = mse_loss_grad(pred, target)
        else:
            logits, _ = network.forward_dar(x, speaker, reference=target)
            loss_value, _ = cross_entropy_loss_grad(logits, target)
        return loss_value

    def eval_grad() -> np.ndarray:
        if variant == "sar":
            pred = network.forward_sar(x, speaker)
            _, d_out = mse_loss_grad(pred, target)
        else:
            logits, _ = network.forward_dar(x, speaker, reference=target)
            _, d_out = cross_entropy_loss_grad(logits, target)
        network.zero_grads()
        network.backward(d_out)
        return network.get_flat_grads()

    analytic = eval_grad()
    theta = network.get_flat_params()
    fd = np.empty_like(analytic)
    for i in range(theta.size):
        saved = theta[i]
        theta[i] = saved + step
        network.set_flat_params(theta)
        up = eval_loss()
        theta[i] = saved - step
        network.set_flat_params(theta)
        down = eval_loss()
        theta[i] = saved
        fd[i] = (up - down) / (2.0 * step)
    network.set_flat_params(theta)

    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(fd)), rel_floor)
    rel = np.abs(analytic - fd) / denom
    worst = int(np.argmax(rel))
    names = []
    for name, value in network.param_items():
        names.extend([name] * value.size)
    return GradientCheckResult(
        max_rel_error=float(rel[worst]),
        n_params=theta.size,
        worst_param=names[worst],
    )
