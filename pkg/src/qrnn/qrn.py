"""Recurrent master equation: from network outputs to generators, costs and rollouts.

Conventions
-----------
* A complex ``m x m`` matrix travels through the network as ``2 m^2`` reals:
  real parts row-major, then imaginary parts row-major.
* Sequences are time-major: states ``(T + 1, B, d, d)``, network outputs
  ``(T, B, n_out)``.
* A gradient with respect to a complex matrix ``X`` is returned packed as
  ``dc/dRe(X) + 1j * dc/dIm(X)``, so ``encode_complex`` of it is exactly the
  gradient with respect to the encoded real vector.
* The QRN output vector of one step is laid out as
  ``[A (if Lamb shift), L^1, ..., L^mu]``, each block ``2 d^2`` long, with the
  Lamb-shift Hamiltonian ``A + A^+``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .dynamics import Trajectory, validate_density
from .linalg import adjoint, expm
from .neural import GruNetwork, Tape, backward, network_forward_rollout

DEGENERATE_TOL = 1e-150


class DegenerateOutputError(ArithmeticError):
    """The network emitted a matrix with (numerically) zero norm."""


# ----------------------------------------------------------------------------
# encoding


def encode_complex(m) -> np.ndarray:
    m = np.asarray(m)
    if m.ndim < 2 or m.shape[-1] != m.shape[-2]:
        raise ValueError(f"expected square matrices, got shape {m.shape}")
    lead = m.shape[:-2]
    n2 = m.shape[-1] ** 2
    return np.concatenate([m.real.reshape(lead + (n2,)), m.imag.reshape(lead + (n2,))], axis=-1)


def decode_complex(o, m: Optional[int] = None) -> np.ndarray:
    o = np.asarray(o, dtype=float)
    n = o.shape[-1]
    if m is None:
        m = int(round(np.sqrt(n / 2)))
    if n != 2 * m * m:
        raise ValueError(f"vector of length {n} cannot encode a {m}x{m} complex matrix")
    lead = o.shape[:-1]
    re = o[..., : m * m].reshape(lead + (m, m))
    im = o[..., m * m :].reshape(lead + (m, m))
    return re + 1j * im


def hermitize(a) -> np.ndarray:
    """``A + A^+``."""
    a = np.asarray(a, dtype=np.complex128)
    return a + adjoint(a)


def density_from_output(a) -> np.ndarray:
    """``A A^+ / Tr[A A^+]``, a valid state for any nonzero ``A`` (stacks allowed).

    ``A`` is rescaled by its largest entry first, so outputs that are tiny
    but nonzero still normalise accurately.
    """
    a = np.asarray(a, dtype=np.complex128)
    scale = np.max(np.abs(a), axis=(-2, -1))
    if np.any(~np.isfinite(scale)) or np.any(scale <= DEGENERATE_TOL):
        raise DegenerateOutputError("network output vanished; cannot normalise it to a state")
    a = a / scale[..., None, None]
    aa = a @ adjoint(a)
    norm = np.trace(aa, axis1=-2, axis2=-1).real
    return aa / norm[..., None, None]


def density_output_vjp(a, rho, grad_rho) -> np.ndarray:
    """Pull a gradient on ``rho = A A^+ / Tr[A A^+]`` back to ``A``."""
    a = np.asarray(a, dtype=np.complex128)
    g = np.asarray(grad_rho, dtype=np.complex128)
    scale = np.max(np.abs(a), axis=(-2, -1))[..., None, None]
    an = a / scale
    norm = np.trace(an @ adjoint(an), axis1=-2, axis2=-1).real[..., None, None]
    overlap = np.real(np.sum(np.conj(g) * rho, axis=(-2, -1)))[..., None, None]
    return ((g + adjoint(g)) @ an - 2.0 * overlap * an) / (norm * scale)


# ----------------------------------------------------------------------------
# generator


@dataclass
class QrnOutput:
    """Lamb-shift Hamiltonian ``(..., d, d)`` and Lindblad operators ``(..., mu, d, d)``."""

    lamb_shift: np.ndarray
    lindblads: np.ndarray

    @property
    def mu(self) -> int:
        return self.lindblads.shape[-3]


@dataclass
class QrnConfig:
    mu_count: int = 1
    include_lamb_shift: bool = False
    dt: float = 0.01
    known_hamiltonian: np.ndarray = field(default_factory=lambda: np.zeros((2, 2), dtype=np.complex128))
    rk_order: int = 1

    def __post_init__(self):
        self.known_hamiltonian = np.asarray(self.known_hamiltonian, dtype=np.complex128)
        if self.mu_count < 1:
            raise ValueError("mu_count must be at least 1")
        if self.rk_order != 1:
            raise NotImplementedError("only the first-order residual cost is implemented")
        if self.dt <= 0:
            raise ValueError("dt must be positive")

    @property
    def dim(self) -> int:
        return self.known_hamiltonian.shape[-1]

    @property
    def n_blocks(self) -> int:
        return self.mu_count + int(self.include_lamb_shift)

    @property
    def output_size(self) -> int:
        return 2 * self.dim**2 * self.n_blocks


def decode_qrn_output(o, cfg: QrnConfig):
    """Split raw network outputs ``(..., n_out)`` into ``(QrnOutput, A)``.

    ``A`` is the raw Lamb-shift block (zeros when the Lamb shift is disabled).
    """
    o = np.asarray(o, dtype=float)
    if o.shape[-1] != cfg.output_size:
        raise ValueError(f"expected {cfg.output_size} outputs per step, got {o.shape[-1]}")
    d = cfg.dim
    blk = 2 * d * d
    lead = o.shape[:-1]
    off = 0
    if cfg.include_lamb_shift:
        a = decode_complex(o[..., :blk], d)
        off = blk
    else:
        a = np.zeros(lead + (d, d), dtype=np.complex128)
    ls = np.stack([decode_complex(o[..., off + k * blk : off + (k + 1) * blk], d)
                   for k in range(cfg.mu_count)], axis=-3)
    return QrnOutput(hermitize(a), ls), a


def encode_qrn_grad(grad_a, grad_l, cfg: QrnConfig) -> np.ndarray:
    """Pack complex gradients on ``A`` and the ``L^mu`` into the raw output layout."""
    blocks = []
    if cfg.include_lamb_shift:
        blocks.append(encode_complex(grad_a))
    for k in range(cfg.mu_count):
        blocks.append(encode_complex(grad_l[..., k, :, :]))
    return np.concatenate(blocks, axis=-1)


def qrn_liouvillian_apply(rho, h, out: QrnOutput) -> np.ndarray:
    """-i[H + H_LS, rho] + sum_mu (L rho L^+ - 1/2 {L^+ L, rho}); rates live in the norms of L."""
    rho = np.asarray(rho, dtype=np.complex128)
    h = np.asarray(h, dtype=np.complex128)
    if rho.shape[-2:] != h.shape[-2:] or out.lamb_shift.shape[-2:] != h.shape[-2:]:
        raise ValueError("dimension mismatch between state, Hamiltonian and generator")
    htot = h + out.lamb_shift
    res = -1j * (htot @ rho - rho @ htot)
    for k in range(out.mu):
        op = out.lindblads[..., k, :, :]
        opd = adjoint(op)
        ldl = opd @ op
        res = res + op @ rho @ opd - 0.5 * (ldl @ rho + rho @ ldl)
    return res


def superoperator_matrix(h, out: QrnOutput) -> np.ndarray:
    """``d^2 x d^2`` matrix of the generator acting on row-major flattened states."""
    d = np.asarray(h).shape[0]
    cols = []
    for k in range(d * d):
        e = np.zeros((d, d), dtype=np.complex128)
        e.flat[k] = 1.0
        cols.append(qrn_liouvillian_apply(e, h, out).reshape(-1))
    return np.stack(cols, axis=1)


# ----------------------------------------------------------------------------
# costs


def cost_Jp(predicted, target):
    """Mean squared Frobenius distance between predicted and target states.

    Both arguments are stacks of matrices with identical shape; the mean runs
    over every leading axis. Returns ``(cost, grad)`` where ``grad`` is the
    packed complex gradient with respect to ``predicted``.
    """
    if isinstance(predicted, Trajectory):
        predicted = predicted.states
    if isinstance(target, Trajectory):
        target = target.states
    predicted = np.asarray(predicted, dtype=np.complex128)
    target = np.asarray(target, dtype=np.complex128)
    if predicted.shape != target.shape:
        raise ValueError(f"misaligned trajectories: {predicted.shape} vs {target.shape}")
    n = int(np.prod(predicted.shape[:-2]))
    diff = predicted - target
    cost = float(np.sum(np.abs(diff) ** 2)) / n
    return cost, 2.0 * diff / n


def residuals(states, out: QrnOutput, h, dt: float) -> np.ndarray:
    """``rho_{j+1} - rho_j - dt L_j[rho_j]`` for time-major ``states``."""
    states = np.asarray(states, dtype=np.complex128)
    if out.lindblads.shape[0] != states.shape[0] - 1:
        raise ValueError(f"{out.lindblads.shape[0]} generators for {states.shape[0] - 1} transitions")
    rho = states[:-1]
    return states[1:] - rho - dt * qrn_liouvillian_apply(rho, h, out)


def residual_costs(states, out: QrnOutput, h, dt: float) -> np.ndarray:
    """Squared Frobenius residual per transition and example, shape ``(T, ...)``."""
    r = residuals(states, out, h, dt)
    return np.sum(np.abs(r) ** 2, axis=(-2, -1))


def cost_J(states, out: QrnOutput, cfg: QrnConfig):
    """First-order residual cost on measured states, with analytic gradients.

    The generator of transition ``j`` is applied to the measured state
    ``rho_j``. Returns ``(cost, grad_A, grad_L)`` where ``grad_A`` is taken
    with respect to the raw Lamb-shift block ``A`` (``H_LS = A + A^+``) and
    ``grad_L`` has the shape of ``out.lindblads``.
    """
    states = np.asarray(states, dtype=np.complex128)
    h, dt = cfg.known_hamiltonian, cfg.dt
    r = residuals(states, out, h, dt)
    n = int(np.prod(r.shape[:-2]))
    cost = float(np.sum(np.abs(r) ** 2)) / n

    rho = states[:-1]
    rd = adjoint(r)
    # dc = -(2 dt / n) Re Tr(R^+ dL[rho])
    c = rho @ rd - rd @ rho
    grad_k = (-2j * dt / n) * adjoint(c)
    grad_a = grad_k + adjoint(grad_k)
    s = r + rd
    grad_l = np.empty_like(out.lindblads)
    for k in range(out.mu):
        op = out.lindblads[..., k, :, :]
        g = s @ op @ rho - 0.5 * op @ (rho @ s + s @ rho)
        grad_l[..., k, :, :] = (-2.0 * dt / n) * g
    return cost, grad_a, grad_l


# ----------------------------------------------------------------------------
# rollouts


def rollout_state_predictor(rho0, net: GruNetwork, n_steps: int, extra_input=None,
                            return_tape: bool = False):
    """Predicted states ``(n_steps + 1, B, d, d)`` (or ``(n_steps + 1, d, d)`` for one state)."""
    rho0 = np.asarray(rho0, dtype=np.complex128)
    single = rho0.ndim == 2
    batch = rho0[None] if single else rho0
    d = batch.shape[-1]
    outputs, tape = network_forward_rollout(encode_complex(batch), n_steps, net, extra_input)
    a = decode_complex(outputs, d)
    states = np.concatenate([batch[None], density_from_output(a)], axis=0) if n_steps else batch[None].copy()
    if single:
        states = states[:, 0]
    if return_tape:
        return states, a, tape
    return states


def qrn_generators(rho0, net: GruNetwork, cfg: QrnConfig, n_steps: int, extra_input=None):
    """Network outputs for ``n_steps`` transitions decoded into generators.

    Returns ``(QrnOutput, A, tape)`` with time-major batch axes.
    """
    rho0 = np.asarray(rho0, dtype=np.complex128)
    if rho0.ndim == 2:
        rho0 = rho0[None]
    outputs, tape = network_forward_rollout(encode_complex(rho0), n_steps, net, extra_input)
    out, a = decode_qrn_output(outputs, cfg)
    return out, a, tape


def propagate_channel(rho, h, out: QrnOutput, dt: float) -> np.ndarray:
    """Apply ``exp(dt L)`` to a single state."""
    d = rho.shape[-1]
    sup = superoperator_matrix(h, out)
    return (expm(dt * sup) @ rho.reshape(-1)).reshape(d, d)


def rollout_master_equation(rho0, net: GruNetwork, cfg: QrnConfig, n_steps: int, extra_input=None,
                            hamiltonians=None):
    """Evolve with the exponential channel of each step's recurrent generator.

    ``hamiltonians`` optionally gives one known Hamiltonian per example
    (for conditioned runs); otherwise ``cfg.known_hamiltonian`` is used.
    Returns states shaped like :func:`rollout_state_predictor`.
    """
    rho0 = np.asarray(rho0, dtype=np.complex128)
    single = rho0.ndim == 2
    batch = rho0[None] if single else rho0
    out, _, _ = qrn_generators(batch, net, cfg, n_steps, extra_input)
    states = np.empty((n_steps + 1,) + batch.shape, dtype=np.complex128)
    states[0] = batch
    for b in range(batch.shape[0]):
        h = cfg.known_hamiltonian if hamiltonians is None else hamiltonians[b]
        rho = batch[b]
        for j in range(n_steps):
            step = QrnOutput(out.lamb_shift[j, b], out.lindblads[j, b])
            rho = propagate_channel(rho, h, step, cfg.dt)
            states[j + 1, b] = rho
    return states[:, 0] if single else states


# ----------------------------------------------------------------------------
# losses wired to the network


def state_predictor_loss(net: GruNetwork, rho0, target, extra_input=None):
    """Cost ``J_p`` of a batch and its gradient with respect to all network parameters.

    ``target`` is time-major ``(T + 1, B, d, d)`` including the initial state.
    """
    n_steps = target.shape[0] - 1
    d = target.shape[-1]
    outputs, tape = network_forward_rollout(encode_complex(rho0), n_steps, net, extra_input)
    a = decode_complex(outputs, d)
    pred = density_from_output(a)
    cost, g_rho = cost_Jp(pred, target[1:])
    g_a = density_output_vjp(a, pred, g_rho)
    return cost, backward(tape, encode_complex(g_a), net)


def master_equation_loss(net: GruNetwork, rho0, target, cfg: QrnConfig, extra_input=None,
                         hamiltonians=None):
    """Residual cost ``J`` of a batch and its parameter gradient.

    ``hamiltonians`` (``(B, d, d)``) overrides the known Hamiltonian per example.
    """
    n_steps = target.shape[0] - 1
    out, _, tape = qrn_generators(rho0, net, cfg, n_steps, extra_input)
    if hamiltonians is not None:
        cfg_b = QrnConfig(cfg.mu_count, cfg.include_lamb_shift, cfg.dt, np.asarray(hamiltonians))
    else:
        cfg_b = cfg
    cost, g_a, g_l = cost_J(target, out, cfg_b)
    return cost, backward(tape, encode_qrn_grad(g_a, g_l, cfg), net)
