"""Layer primitives with explicit forward and backward passes.

Shapes follow the convention ``(T, d)``: one row per frame. Parameters are
float64 and initialized uniformly in ``+-1/sqrt(fan_in)`` from the generator
passed to the constructor; construction order therefore fixes the random
stream. Each layer caches what its own backward pass needs, so the pattern
is strictly forward-then-backward per utterance (single writer).
"""

from __future__ import annotations

import numpy as np

from ..errors import ValidationError

ACTIVATIONS = ("tanh", "linear")


def _act(a: np.ndarray, activation: str) -> np.ndarray:
    return np.tanh(a) if activation == "tanh" else a


def _act_grad_from_output(h: np.ndarray, activation: str) -> np.ndarray:
    # tanh'(a) expressed through the cached output h = tanh(a)
    return 1.0 - h * h if activation == "tanh" else np.ones_like(h)


def _init(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(max(fan_in, 1))
    return rng.uniform(-bound, bound, size=shape)


class LayerBase:
    """Common parameter/gradient bookkeeping."""

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}

    def _register(self, name: str, value: np.ndarray) -> None:
        self.params[name] = value
        self.grads[name] = np.zeros_like(value)

    def zero_grads(self) -> None:
        for g in self.grads.values():
            g[...] = 0.0


class Dense(LayerBase):
    """``h_t = act(W x_t + c [+ P[:, k]])``.

    ``n_speakers >= 2`` adds the projection matrix P whose column k is the
    additive bias the one-hot code of speaker k selects. With fewer than two
    speakers the path is omitted entirely and c is the only bias.
    """

    def __init__(
        self,
        d_in: int,
        d_out: int,
        activation: str = "tanh",
        n_speakers: int = 0,
        rng: np.random.Generator | None = None,
    ):
        super().__init__()
        if activation not in ACTIVATIONS:
            raise ValidationError(f"unknown activation {activation!r}")
        rng = rng or np.random.default_rng(0)
        self.d_in = d_in
        self.d_out = d_out
        self.activation = activation
        self.n_speakers = n_speakers if n_speakers >= 2 else 0
        self._register("W", _init(rng, (d_out, d_in), d_in))
        self._register("c", _init(rng, (d_out,), d_in))
        if self.n_speakers:
            self._register("P", _init(rng, (d_out, self.n_speakers), self.n_speakers))
        self._cache = None

    @property
    def has_speaker_bias(self) -> bool:
        return bool(self.n_speakers)

    def speaker_bias(self, speaker: int) -> np.ndarray:
        """Column k of the projection: the bias this speaker's one-hot selects."""
        if not self.n_speakers:
            raise ValidationError("layer has no speaker path")
        if not (0 <= speaker < self.n_speakers):
            raise ValidationError(
                f"speaker index {speaker} out of range [0, {self.n_speakers})"
            )
        return self.params["P"][:, speaker]

    def preactivation(self, x: np.ndarray, speaker: int | None = None) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.d_in:
            raise ValidationError(
                f"input width {x.shape[-1]} does not match layer d_in {self.d_in}"
            )
        a = x @ self.params["W"].T + self.params["c"]
        if self.n_speakers:
            if speaker is None:
                raise ValidationError("speaker index required for speaker-biased layer")
            a = a + self.speaker_bias(speaker)
        return a

    def forward(self, x: np.ndarray, speaker: int | None = None) -> np.ndarray:
        a = self.preactivation(x, speaker)
        h = _act(a, self.activation)
        self._cache = (np.asarray(x, dtype=float), h, speaker)
        return h

    def forward_framewise(self, x: np.ndarray, speaker: int | None = None) -> np.ndarray:
        """Row-by-row forward; bitwise stable against a stepped generation loop."""
        x = np.asarray(x, dtype=float)
        h = np.empty((x.shape[0], self.d_out))
        for t in range(x.shape[0]):
            h[t] = self.forward_row(x[t], speaker)
        self._cache = (x, h, speaker)
        return h

    def forward_row(self, x_t: np.ndarray, speaker: int | None = None) -> np.ndarray:
        """Single-frame forward without caching; used by generation loops."""
        a = self.params["W"] @ x_t + self.params["c"]
        if self.n_speakers:
            a = a + self.speaker_bias(speaker)
        return _act(a, self.activation)

    def backward(self, dh: np.ndarray) -> np.ndarray:
        x, h, speaker = self._cache
        da = dh * _act_grad_from_output(h, self.activation)
        self.grads["W"] += da.T @ x
        self.grads["c"] += da.sum(axis=0)
        if self.n_speakers:
            self.grads["P"][:, speaker] += da.sum(axis=0)
        return da @ self.params["W"]


class BiRecurrent(LayerBase):
    """Two independent simple recurrences (forward and reversed time), concatenated.

    Per direction: ``s_t = act(W x_t + U s_prev + c)`` with a zero initial
    state; output is ``[f_t, g_t]`` of width ``2 * units``.
    """

    def __init__(
        self,
        d_in: int,
        units: int,
        activation: str = "tanh",
        rng: np.random.Generator | None = None,
    ):
        super().__init__()
        if activation not in ACTIVATIONS:
            raise ValidationError(f"unknown activation {activation!r}")
        rng = rng or np.random.default_rng(0)
        self.d_in = d_in
        self.units = units
        self.d_out = 2 * units
        self.activation = activation
        for tag in ("f", "b"):
            self._register(f"W{tag}", _init(rng, (units, d_in), d_in))
            self._register(f"U{tag}", _init(rng, (units, units), units))
            self._register(f"c{tag}", _init(rng, (units,), d_in))
        self._cache = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[1] != self.d_in:
            raise ValidationError(
                f"input width {x.shape[1]} does not match layer d_in {self.d_in}"
            )
        T = x.shape[0]
        p = self.params
        pre_f = x @ p["Wf"].T + p["cf"]
        pre_b = x @ p["Wb"].T + p["cb"]
        f = np.zeros((T, self.units))
        g = np.zeros((T, self.units))
        state = np.zeros(self.units)
        for t in range(T):
            state = _act(pre_f[t] + p["Uf"] @ state, self.activation)
            f[t] = state
        state = np.zeros(self.units)
        for t in range(T - 1, -1, -1):
            state = _act(pre_b[t] + p["Ub"] @ state, self.activation)
            g[t] = state
        self._cache = (x, f, g)
        return np.concatenate([f, g], axis=1)

    def backward(self, dh: np.ndarray) -> np.ndarray:
        x, f, g = self._cache
        T = x.shape[0]
        p, grads = self.params, self.grads
        df_out = dh[:, : self.units]
        dg_out = dh[:, self.units :]

        # forward-direction chain: f_t feeds a_{t+1}, iterate t descending
        da_f = np.zeros((T, self.units))
        carry = np.zeros(self.units)
        for t in range(T - 1, -1, -1):
            dft = df_out[t] + carry
            da_f[t] = dft * _act_grad_from_output(f[t], self.activation)
            carry = p["Uf"].T @ da_f[t]
        # reversed-direction chain: g_t feeds the pre-activation at t-1
        da_b = np.zeros((T, self.units))
        carry = np.zeros(self.units)
        for t in range(T):
            dgt = dg_out[t] + carry
            da_b[t] = dgt * _act_grad_from_output(g[t], self.activation)
            carry = p["Ub"].T @ da_b[t]

        grads["Wf"] += da_f.T @ x
        grads["cf"] += da_f.sum(axis=0)
        if T > 1:
            grads["Uf"] += da_f[1:].T @ f[:-1]
            grads["Ub"] += da_b[:-1].T @ g[1:]
        grads["Wb"] += da_b.T @ x
        grads["cb"] += da_b.sum(axis=0)
        return da_f @ p["Wf"] + da_b @ p["Wb"]


class UniFeedbackRecurrent(LayerBase):
    """Unidirectional recurrence with class feedback through a learned embedding.

    ``u_t = act(W x_t + U u_{t-1} + V E[y_{t-1}] + c)`` where ``y_{t-1}`` is
    the class fed back at frame t (reference class when teacher forced, own
    argmax when free running) and frame 0 uses a dedicated learned start row
    of the embedding table.
    """

    def __init__(
        self,
        d_in: int,
        units: int,
        n_classes: int,
        embed_dim: int,
        activation: str = "tanh",
        rng: np.random.Generator | None = None,
    ):
        super().__init__()
        if activation not in ACTIVATIONS:
            raise ValidationError(f"unknown activation {activation!r}")
        rng = rng or np.random.default_rng(0)
        self.d_in = d_in
        self.units = units
        self.d_out = units
        self.n_classes = n_classes
        self.embed_dim = embed_dim
        self.activation = activation
        self._register("W", _init(rng, (units, d_in), d_in))
        self._register("U", _init(rng, (units, units), units))
        self._register("V", _init(rng, (units, embed_dim), embed_dim))
        self._register("c", _init(rng, (units,), d_in))
        # one embedding row per class plus the start symbol
        self._register("E", _init(rng, (n_classes + 1, embed_dim), embed_dim))
        self._cache = None

    @property
    def start_index(self) -> int:
        return self.n_classes

    def precompute(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[1] != self.d_in:
            raise ValidationError(
                f"input width {x.shape[1]} does not match layer d_in {self.d_in}"
            )
        return x @ self.params["W"].T + self.params["c"]

    def step(self, pre_t: np.ndarray, state: np.ndarray, feedback_id: int) -> np.ndarray:
        """One recurrence step; shared by teacher and free-running paths."""
        p = self.params
        a = pre_t + p["U"] @ state + p["V"] @ p["E"][feedback_id]
        return _act(a, self.activation)

    def forward(self, x: np.ndarray, feedback_ids: np.ndarray) -> np.ndarray:
        """Full-sequence forward given the complete feedback id sequence."""
        feedback_ids = np.asarray(feedback_ids, dtype=int)
        x = np.asarray(x, dtype=float)
        if feedback_ids.shape != (x.shape[0],):
            raise ValidationError("one feedback id per frame required")
        if np.any(feedback_ids < 0) or np.any(feedback_ids > self.start_index):
            raise ValidationError("feedback id out of range")
        pre = self.precompute(x)
        T = x.shape[0]
        h = np.zeros((T, self.units))
        state = np.zeros(self.units)
        for t in range(T):
            state = self.step(pre[t], state, int(feedback_ids[t]))
            h[t] = state
        self._cache = (x, h, feedback_ids)
        return h

    def backward(self, dh: np.ndarray) -> np.ndarray:
        x, h, feedback_ids = self._cache
        T = x.shape[0]
        p, grads = self.params, self.grads
        da = np.zeros((T, self.units))
        carry = np.zeros(self.units)
        for t in range(T - 1, -1, -1):
            dht = dh[t] + carry
            da[t] = dht * _act_grad_from_output(h[t], self.activation)
            carry = p["U"].T @ da[t]
        grads["W"] += da.T @ x
        grads["c"] += da.sum(axis=0)
        if T > 1:
            grads["U"] += da[1:].T @ h[:-1]
        emb = p["E"][feedback_ids]
        grads["V"] += da.T @ emb
        np.add.at(grads["E"], feedback_ids, da @ p["V"])
        return da @ p["W"]
