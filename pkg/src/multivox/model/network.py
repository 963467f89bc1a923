"""Network topologies, forward passes and losses.

Two variants share the machinery:

- ``sar``: feedforward, feedforward, two bidirectional recurrent layers,
  linear output of spectral width; no feedback.
- ``dar``: feedforward, feedforward, one bidirectional recurrent layer, one
  unidirectional recurrent layer with class feedback, linear logits over the
  F0 classes (unvoiced class included).

In the DAR variant the output layer is applied frame by frame, in both
teacher-forced and free-running mode, so that re-running teacher-forced on a
free run's own outputs reproduces its logits bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ValidationError
from .layers import ACTIVATIONS, BiRecurrent, Dense, UniFeedbackRecurrent

LAYER_KINDS = ("ff", "bi", "uni_feedback")

#: Desk-scale defaults: one sixteenth of the reference layer widths
#: (512 / 256 / 128 -> 32 / 16 / 8), topology preserved.
DEFAULT_FF_UNITS = 32
DEFAULT_BI_UNITS = 16
DEFAULT_UNI_UNITS = 8
DEFAULT_EMBED_DIM = 8


@dataclass(frozen=True)
class NetworkTopology:
    """Layer plan for one network.

    ``hidden`` lists (kind, units) pairs; the output layer is always linear
    with ``d_out`` units. ``n_speakers <= 1`` omits the speaker-code path
    (the per-speaker bias degenerates to the ordinary first-layer bias).
    """

    variant: str
    d_lin: int
    d_out: int
    n_speakers: int
    hidden: tuple[tuple[str, int], ...]
    embed_dim: int = DEFAULT_EMBED_DIM
    activation: str = "tanh"

    def __post_init__(self):
        if self.variant not in ("sar", "dar"):
            raise ValidationError(f"unknown variant {self.variant!r}")
        if self.d_lin < 1 or self.d_out < 1:
            raise ValidationError("d_lin and d_out must be >= 1")
        if self.n_speakers < 0:
            raise ValidationError("n_speakers must be >= 0")
        if self.activation not in ACTIVATIONS:
            raise ValidationError(f"unknown activation {self.activation!r}")
        if not self.hidden:
            raise ValidationError("at least one hidden layer required")
        kinds = [k for k, _ in self.hidden]
        for kind, units in self.hidden:
            if kind not in LAYER_KINDS:
                raise ValidationError(f"unknown layer kind {kind!r}")
            if units < 1:
                raise ValidationError(f"layer units must be >= 1, got {units}")
        if kinds[0] != "ff":
            raise ValidationError("first hidden layer must be feedforward")
        n_feedback = kinds.count("uni_feedback")
        if self.variant == "sar" and n_feedback:
            raise ValidationError("sar topology cannot contain a feedback layer")
        if self.variant == "dar":
            if n_feedback != 1 or kinds[-1] != "uni_feedback":
                raise ValidationError(
                    "dar topology needs exactly one trailing uni_feedback layer"
                )
            if self.embed_dim < 1:
                raise ValidationError("embed_dim must be >= 1")

    @property
    def has_speaker_path(self) -> bool:
        return self.n_speakers >= 2

    @classmethod
    def sar(
        cls,
        d_lin: int,
        d_mgc: int,
        n_speakers: int,
        ff_units: int = DEFAULT_FF_UNITS,
        bi_units: int = DEFAULT_BI_UNITS,
        activation: str = "tanh",
    ) -> "NetworkTopology":
        hidden = (("ff", ff_units), ("ff", ff_units), ("bi", bi_units), ("bi", bi_units))
        return cls("sar", d_lin, d_mgc, n_speakers, hidden, activation=activation)

    @classmethod
    def dar(
        cls,
        d_lin: int,
        n_f0_classes: int,
        n_speakers: int,
        ff_units: int = DEFAULT_FF_UNITS,
        bi_units: int = DEFAULT_BI_UNITS,
        uni_units: int = DEFAULT_UNI_UNITS,
        embed_dim: int = DEFAULT_EMBED_DIM,
        activation: str = "tanh",
    ) -> "NetworkTopology":
        hidden = (
            ("ff", ff_units),
            ("ff", ff_units),
            ("bi", bi_units),
            ("uni_feedback", uni_units),
        )
        return cls(
            "dar", d_lin, n_f0_classes, n_speakers, hidden,
            embed_dim=embed_dim, activation=activation,
        )

    def to_dict(self) -> dict:
        return {
            "variant": self.variant,
            "d_lin": self.d_lin,
            "d_out": self.d_out,
            "n_speakers": self.n_speakers,
            "hidden": [list(h) for h in self.hidden],
            "embed_dim": self.embed_dim,
            "activation": self.activation,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkTopology":
        return cls(
            variant=d["variant"],
            d_lin=d["d_lin"],
            d_out=d["d_out"],
            n_speakers=d["n_speakers"],
            hidden=tuple((k, int(u)) for k, u in d["hidden"]),
            embed_dim=d.get("embed_dim", DEFAULT_EMBED_DIM),
            activation=d.get("activation", "tanh"),
        )


class AcousticNetwork:
    """A live network: layers plus parameter bookkeeping."""

    def __init__(self, topology: NetworkTopology, seed: int = 0):
        self.topology = topology
        rng = np.random.default_rng(seed)
        self.hidden: list = []
        d_in = topology.d_lin
        for i, (kind, units) in enumerate(topology.hidden):
            if kind == "ff":
                n_spk = topology.n_speakers if i == 0 and topology.has_speaker_path else 0
                layer = Dense(d_in, units, topology.activation, n_speakers=n_spk, rng=rng)
            elif kind == "bi":
                layer = BiRecurrent(d_in, units, topology.activation, rng=rng)
            else:
                layer = UniFeedbackRecurrent(
                    d_in, units, n_classes=topology.d_out,
                    embed_dim=topology.embed_dim, activation=topology.activation,
                    rng=rng,
                )
            self.hidden.append(layer)
            d_in = layer.d_out
        self.out = Dense(d_in, topology.d_out, activation="linear", rng=rng)

    # -- parameter access ------------------------------------------------

    def param_items(self):
        """(name, array) pairs in a stable order."""
        for i, layer in enumerate(self.hidden):
            for name, value in layer.params.items():
                yield f"h{i}.{name}", value
        for name, value in self.out.params.items():
            yield f"out.{name}", value

    def grad_items(self):
        for i, layer in enumerate(self.hidden):
            for name, value in layer.grads.items():
                yield f"h{i}.{name}", value
        for name, value in self.out.grads.items():
            yield f"out.{name}", value

    @property
    def n_params(self) -> int:
        return sum(v.size for _, v in self.param_items())

    def get_flat_params(self) -> np.ndarray:
        return np.concatenate([v.ravel() for _, v in self.param_items()])

    def set_flat_params(self, flat: np.ndarray) -> None:
        flat = np.asarray(flat, dtype=float)
        if flat.shape != (self.n_params,):
            raise ValidationError(
                f"expected {self.n_params} parameters, got {flat.shape}"
            )
        off = 0
        for _, v in self.param_items():
            v[...] = flat[off : off + v.size].reshape(v.shape)
            off += v.size

    def get_flat_grads(self) -> np.ndarray:
        return np.concatenate([g.ravel() for _, g in self.grad_items()])

    def named_params(self) -> dict[str, np.ndarray]:
        return {name: value.copy() for name, value in self.param_items()}

    def load_named_params(self, named: dict[str, np.ndarray]) -> None:
        mine = dict(self.param_items())
        if set(named) != set(mine):
            raise ValidationError("parameter names do not match this topology")
        for name, value in named.items():
            arr = np.asarray(value, dtype=float)
            if arr.shape != mine[name].shape:
                raise ValidationError(
                    f"parameter {name}: shape {arr.shape} != {mine[name].shape}"
                )
            mine[name][...] = arr

    def zero_grads(self) -> None:
        for layer in self.hidden:
            layer.zero_grads()
        self.out.zero_grads()

    def sgd_step(self, learning_rate: float) -> None:
        for layer in [*self.hidden, self.out]:
            for name, value in layer.params.items():
                value -= learning_rate * layer.grads[name]

    # -- forward / backward ----------------------------------------------

    def _check_speaker(self, speaker: int | None):
        if self.topology.has_speaker_path:
            if speaker is None:
                raise ValidationError("multi-speaker network requires a speaker index")
        return speaker

    def _check_input(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim != 2 or x.shape[1] != self.topology.d_lin:
            raise ValidationError(
                f"expected linguistic input (T, {self.topology.d_lin}), got {x.shape}"
            )
        if x.shape[0] < 1:
            raise ValidationError("empty input sequence")
        return x

    def forward_sar(self, x: np.ndarray, speaker: int | None = None) -> np.ndarray:
        """Spectral frames for the whole sequence, one row per input frame."""
        if self.topology.variant != "sar":
            raise ValidationError(f"forward_sar on a {self.topology.variant} network")
        x = self._check_input(x)
        speaker = self._check_speaker(speaker)
        h = x
        for i, layer in enumerate(self.hidden):
            h = layer.forward(h, speaker) if i == 0 else layer.forward(h)
        return self.out.forward(h)

    def forward_dar(
        self,
        x: np.ndarray,
        speaker: int | None = None,
        reference: np.ndarray | None = None,
    ) -> tuple[np.ndarray, np.ndarray]:
        """DAR logits and argmax classes.

        ``reference`` given: teacher forced, frame t is fed reference class
        t-1 (start symbol at t=0). ``reference omitted``: free running, frame
        t is fed the network's own argmax at t-1.
        """
        if self.topology.variant != "dar":
            raise ValidationError(f"forward_dar on a {self.topology.variant} network")
        x = self._check_input(x)
        speaker = self._check_speaker(speaker)
        h = x
        for i, layer in enumerate(self.hidden[:-1]):
            h = layer.forward(h, speaker) if i == 0 else layer.forward(h)
        uni: UniFeedbackRecurrent = self.hidden[-1]
        T = x.shape[0]

        if reference is not None:
            reference = np.asarray(reference, dtype=int)
            if reference.shape != (T,):
                raise ValidationError(
                    f"reference classes must have length {T}, got {reference.shape}"
                )
            if np.any(reference < 0) or np.any(reference >= self.topology.d_out):
                raise ValidationError("reference class out of range")
            feedback = np.concatenate([[uni.start_index], reference[:-1]])
            hu = uni.forward(h, feedback)
            logits = self.out.forward_framewise(hu)
            return logits, np.argmax(logits, axis=1)

        # free running: step the recurrence and the output jointly
        pre = uni.precompute(h)
        state = np.zeros(uni.units)
        states = np.zeros((T, uni.units))
        logits = np.empty((T, self.topology.d_out))
        classes = np.empty(T, dtype=int)
        prev = uni.start_index
        for t in range(T):
            state = uni.step(pre[t], state, prev)
            states[t] = state
            logits[t] = self.out.forward_row(state)
            classes[t] = int(np.argmax(logits[t]))
            prev = classes[t]
        return logits, classes

    def backward(self, d_out: np.ndarray) -> np.ndarray:
        """Backprop from the output gradient; teacher-forced caches required."""
        d = self.out.backward(np.asarray(d_out, dtype=float))
        for layer in reversed(self.hidden):
            d = layer.backward(d)
        return d


def first_layer_preactivation(
    network: AcousticNetwork, x: np.ndarray, speaker: int | None = None
) -> np.ndarray:
    """``W1 x + c1 + b_speaker`` for a single frame (before the nonlinearity)."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ValidationError("first_layer_preactivation expects a single frame")
    first: Dense = network.hidden[0]
    return first.preactivation(x[None, :], speaker)[0]


def first_layer_forward(
    network: AcousticNetwork, x: np.ndarray, speaker: int | None = None
) -> np.ndarray:
    """First hidden layer output for one frame: ``act(W1 x + c1 + b_speaker)``."""
    from .layers import _act

    first: Dense = network.hidden[0]
    return _act(first_layer_preactivation(network, x, speaker), first.activation)


# -- losses ---------------------------------------------------------------


def mse_loss(pred: np.ndarray, target: np.ndarray) -> float:
    """Mean squared error over frames and dimensions."""
    pred = np.asarray(pred, dtype=float)
    target = np.asarray(target, dtype=float)
    if pred.size == 0:
        raise ValidationError("empty sequence")
    if pred.shape != target.shape:
        raise ValidationError(f"shape mismatch: {pred.shape} vs {target.shape}")
    return float(np.mean((pred - target) ** 2))


def mse_loss_grad(pred: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    pred = np.asarray(pred, dtype=float)
    target = np.asarray(target, dtype=float)
    if pred.size == 0:
        raise ValidationError("empty sequence")
    if pred.shape != target.shape:
        raise ValidationError(f"shape mismatch: {pred.shape} vs {target.shape}")
    diff = pred - target
    return float(np.mean(diff**2)), 2.0 * diff / diff.size


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def cross_entropy_loss(logits: np.ndarray, classes: np.ndarray) -> float:
    """Mean negative log likelihood of the target classes over frames."""
    logits = np.asarray(logits, dtype=float)
    classes = np.asarray(classes, dtype=int)
    if logits.ndim != 2 or logits.shape[0] == 0:
        raise ValidationError("empty sequence")
    if classes.shape != (logits.shape[0],):
        raise ValidationError(
            f"need one class per frame: {classes.shape} vs {logits.shape[0]} frames"
        )
    if np.any(classes < 0) or np.any(classes >= logits.shape[1]):
        raise ValidationError("class index out of range")
    logp = _log_softmax(logits)
    return float(-logp[np.arange(len(classes)), classes].mean())


def cross_entropy_loss_grad(
    logits: np.ndarray, classes: np.ndarray
) -> tuple[float, np.ndarray]:
    logits = np.asarray(logits, dtype=float)
    classes = np.asarray(classes, dtype=int)
    loss = cross_entropy_loss(logits, classes)
    logp = _log_softmax(logits)
    dlogits = np.exp(logp)
    dlogits[np.arange(len(classes)), classes] -= 1.0
    return loss, dlogits / len(classes)


def loss(predictions: np.ndarray, targets: np.ndarray, variant: str) -> float:
    """Training loss for either variant: MSE for sar, cross entropy for dar."""
    if variant == "sar":
        return mse_loss(predictions, targets)
    if variant == "dar":
        return cross_entropy_loss(predictions, targets)
    raise ValidationError(f"unknown variant {variant!r}")
