"""Stacked GRU with a linear read-out, trained by backpropagation through time.

Everything is batched: vectors carry a leading batch axis ``(B, n)`` and
weight matrices act as ``x @ W.T``. A 1-d input is treated as ``B = 1``.
All arithmetic is float64.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

HIDDEN_SIZE = 40
N_LAYERS = 2

GATE_NAMES = ("Wz", "Wr", "W", "Uz", "Ur", "U", "bz", "br", "b")


def sigmoid(x):
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


@dataclass
class GruCellParams:
    Wz: np.ndarray
    Wr: np.ndarray
    W: np.ndarray
    Uz: np.ndarray
    Ur: np.ndarray
    U: np.ndarray
    bz: np.ndarray
    br: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        hidden, n_in = self.W.shape
        for name in ("Wz", "Wr", "W"):
            if getattr(self, name).shape != (hidden, n_in):
                raise ValueError(f"{name} must have shape {(hidden, n_in)}")
        for name in ("Uz", "Ur", "U"):
            if getattr(self, name).shape != (hidden, hidden):
                raise ValueError(f"{name} must have shape {(hidden, hidden)}")
        for name in ("bz", "br", "b"):
            if getattr(self, name).shape != (hidden,):
                raise ValueError(f"{name} must have shape {(hidden,)}")

    @property
    def input_size(self) -> int:
        return self.W.shape[1]

    @property
    def hidden_size(self) -> int:
        return self.W.shape[0]

    @classmethod
    def zeros(cls, input_size: int, hidden_size: int) -> "GruCellParams":
        w = lambda: np.zeros((hidden_size, input_size))
        u = lambda: np.zeros((hidden_size, hidden_size))
        b = lambda: np.zeros(hidden_size)
        return cls(w(), w(), w(), u(), u(), u(), b(), b(), b())


@dataclass
class GruNetwork:
    layers: list
    head_W: np.ndarray
    head_b: np.ndarray

    def __post_init__(self):
        for lower, upper in zip(self.layers, self.layers[1:]):
            if upper.input_size != lower.hidden_size:
                raise ValueError("stacked layer input size must equal previous hidden size")
        if self.head_W.shape != (self.head_b.shape[0], self.layers[-1].hidden_size):
            raise ValueError("head shape does not match last hidden layer")

    @property
    def input_size(self) -> int:
        return self.layers[0].input_size

    @property
    def output_size(self) -> int:
        return self.head_b.shape[0]

    @property
    def hidden_sizes(self) -> list[int]:
        return [layer.hidden_size for layer in self.layers]

    def named_params(self) -> dict:
        """Views of every parameter, in the fixed checkpoint order."""
        out = {}
        for i, layer in enumerate(self.layers):
            for name in GATE_NAMES:
                out[f"layer{i}.{name}"] = getattr(layer, name)
        out["head.W"] = self.head_W
        out["head.b"] = self.head_b
        return out

    def copy(self) -> "GruNetwork":
        layers = [GruCellParams(*(getattr(l, n).copy() for n in GATE_NAMES)) for l in self.layers]
        return GruNetwork(layers, self.head_W.copy(), self.head_b.copy())

    @classmethod
    def from_named(cls, params: dict) -> "GruNetwork":
        n_layers = 1 + max(int(k.split(".")[0][5:]) for k in params if k.startswith("layer"))
        layers = [
            GruCellParams(*(np.array(params[f"layer{i}.{n}"], dtype=float) for n in GATE_NAMES))
            for i in range(n_layers)
        ]
        return cls(layers, np.array(params["head.W"], dtype=float), np.array(params["head.b"], dtype=float))

    @classmethod
    def zeros(cls, input_size: int, output_size: int, hidden_sizes=(HIDDEN_SIZE,) * N_LAYERS) -> "GruNetwork":
        layers = []
        n_in = input_size
        for h in hidden_sizes:
            layers.append(GruCellParams.zeros(n_in, h))
            n_in = h
        return cls(layers, np.zeros((output_size, n_in)), np.zeros(output_size))


def _orthogonal(rng, n: int) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    return q * np.sign(np.diag(r))


def init_params(input_size: int, output_size: int, hidden_sizes=(HIDDEN_SIZE,) * N_LAYERS,
                seed=None) -> GruNetwork:
    """Glorot-uniform input and head weights, orthogonal recurrent weights, zero biases."""
    rng = np.random.default_rng(seed)
    net = GruNetwork.zeros(input_size, output_size, hidden_sizes)

    def glorot(shape):
        fan_out, fan_in = shape
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-limit, limit, size=shape)

    for layer in net.layers:
        for name in ("Wz", "Wr", "W"):
            setattr(layer, name, glorot(getattr(layer, name).shape))
        for name in ("Uz", "Ur", "U"):
            setattr(layer, name, _orthogonal(rng, layer.hidden_size))
    net.head_W = glorot(net.head_W.shape)
    return net


# ----------------------------------------------------------------------------
# forward


def gru_cell_forward(x, s_prev, p: GruCellParams):
    """One GRU update. Returns the new state and a cache for the backward pass."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    s_prev = np.atleast_2d(np.asarray(s_prev, dtype=float))
    if x.shape[1] != p.input_size or s_prev.shape[1] != p.hidden_size or x.shape[0] != s_prev.shape[0]:
        raise ValueError(f"shape mismatch: x {x.shape}, s_prev {s_prev.shape} for cell "
                         f"({p.input_size} -> {p.hidden_size})")
    z = sigmoid(x @ p.Wz.T + s_prev @ p.Uz.T + p.bz)
    r = sigmoid(x @ p.Wr.T + s_prev @ p.Ur.T + p.br)
    s_tilde = np.tanh(x @ p.W.T + (r * s_prev) @ p.U.T + p.b)
    s = (1.0 - z) * s_prev + z * s_tilde
    return s, (x, s_prev, z, r, s_tilde)


def gru_cell_backward(ds, cache, p: GruCellParams, grads: GruCellParams):
    """Accumulate parameter gradients into ``grads``; return (dx, ds_prev)."""
    x, s_prev, z, r, s_tilde = cache
    ds_tilde = ds * z
    dz = ds * (s_tilde - s_prev)
    ds_prev = ds * (1.0 - z)

    da = ds_tilde * (1.0 - s_tilde**2)
    rs = r * s_prev
    grads.W += da.T @ x
    grads.U += da.T @ rs
    grads.b += da.sum(axis=0)
    drs = da @ p.U
    dr = drs * s_prev
    ds_prev += drs * r
    dx = da @ p.W

    daz = dz * z * (1.0 - z)
    grads.Wz += daz.T @ x
    grads.Uz += daz.T @ s_prev
    grads.bz += daz.sum(axis=0)
    dx += daz @ p.Wz
    ds_prev += daz @ p.Uz

    dar = dr * r * (1.0 - r)
    grads.Wr += dar.T @ x
    grads.Ur += dar.T @ s_prev
    grads.br += dar.sum(axis=0)
    dx += dar @ p.Wr
    ds_prev += dar @ p.Ur
    return dx, ds_prev


@dataclass
class Tape:
    """Forward intermediates: ``caches[t][layer]`` and the top hidden state per step."""

    inputs: list = field(default_factory=list)
    caches: list = field(default_factory=list)
    top: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.caches)


def rollout_inputs(encoding, n_steps: int, extra_input=None) -> np.ndarray:
    """Input sequence ``(n_steps, B, n_in)``: the encoding at step 0, zeros afterwards.

    A conditioning scalar per example, when given, is appended at every step.
    """
    enc = np.atleast_2d(np.asarray(encoding, dtype=float))
    batch, n_enc = enc.shape
    n_in = n_enc + (0 if extra_input is None else 1)
    xs = np.zeros((n_steps, batch, n_in))
    if n_steps:
        xs[0, :, :n_enc] = enc
    if extra_input is not None:
        extra = np.broadcast_to(np.asarray(extra_input, dtype=float).reshape(-1), (batch,))
        xs[:, :, n_enc] = extra
    return xs


def forward_sequence(xs, net: GruNetwork):
    """Run the network over an explicit input sequence ``(T, B, n_in)``."""
    xs = np.asarray(xs, dtype=float)
    if xs.ndim != 3 or xs.shape[2] != net.input_size:
        raise ValueError(f"input sequence shape {xs.shape} does not match network input {net.input_size}")
    n_steps, batch, _ = xs.shape
    states = [np.zeros((batch, h)) for h in net.hidden_sizes]
    tape = Tape()
    outputs = np.empty((n_steps, batch, net.output_size))
    for t in range(n_steps):
        inp = xs[t]
        step_caches = []
        for i, layer in enumerate(net.layers):
            states[i], cache = gru_cell_forward(inp, states[i], layer)
            step_caches.append(cache)
            inp = states[i]
        tape.inputs.append(xs[t])
        tape.caches.append(step_caches)
        tape.top.append(inp)
        outputs[t] = inp @ net.head_W.T + net.head_b
    return outputs, tape


def network_forward_rollout(encoding, n_steps: int, net: GruNetwork, extra_input=None):
    """One-to-many rollout seeded by an encoded initial state.

    Returns ``(outputs, tape)`` with ``outputs`` of shape ``(n_steps, B, n_out)``.
    """
    xs = rollout_inputs(encoding, n_steps, extra_input)
    if xs.shape[2] != net.input_size:
        raise ValueError(f"input size {xs.shape[2]} does not match network input {net.input_size}")
    return forward_sequence(xs, net)


def replay(tape: Tape, net: GruNetwork) -> np.ndarray:
    """Recompute outputs from the inputs stored on a tape."""
    outputs, _ = forward_sequence(np.stack(tape.inputs), net)
    return outputs


def backward(tape: Tape, output_grads, net: GruNetwork) -> dict:
    """Backpropagation through time over every step and layer.

    ``output_grads`` has one ``(B, n_out)`` entry per tape step. Gradients
    are summed over the batch and returned keyed like ``net.named_params()``.
    """
    output_grads = np.asarray(output_grads, dtype=float)
    if len(output_grads) != len(tape):
        raise ValueError(f"{len(output_grads)} output gradients for a tape of {len(tape)} steps")
    grads = GruNetwork.zeros(net.input_size, net.output_size, net.hidden_sizes)
    carry = None
    for t in range(len(tape) - 1, -1, -1):
        dy = np.atleast_2d(output_grads[t])
        grads.head_W += dy.T @ tape.top[t]
        grads.head_b += dy.sum(axis=0)
        d_above = dy @ net.head_W
        if carry is None:
            carry = [np.zeros((dy.shape[0], h)) for h in net.hidden_sizes]
        for i in range(len(net.layers) - 1, -1, -1):
            ds = d_above + carry[i]
            d_above, carry[i] = gru_cell_backward(ds, tape.caches[t][i], net.layers[i], grads.layers[i])
    return grads.named_params()


# ----------------------------------------------------------------------------
# optimisation


@dataclass
class AdamState:
    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params: dict, grads: dict, state: AdamState, decay_mask=(), weight_decay: float = 0.001) -> dict:
    """Bias-corrected Adam update applied in place to ``params``.

    Parameters named in ``decay_mask`` get the L2-penalty gradient
    ``2 * weight_decay * w`` added before the moment updates.
    """
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.step
    c2 = 1.0 - b2**state.step
    for name, w in params.items():
        g = np.asarray(grads[name], dtype=float)
        if g.shape != w.shape:
            raise ValueError(f"gradient for {name} has shape {g.shape}, expected {w.shape}")
        if name in decay_mask:
            g = g + 2.0 * weight_decay * w
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(w)
            state.v[name] = np.zeros_like(w)
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        w -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params
