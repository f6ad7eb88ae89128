"""Ground-truth open-system dynamics.

Basis convention used everywhere: ``|0>`` is the excited level
(``sigma_z = +1``) and ``sigma_minus = |1><0|`` relaxes it to ``|1>``.
Two-qubit indices are qubit-1 major, ``index = 2 * i1 + i2``.

Density matrices are ``complex128`` arrays; functions that integrate accept a
leading batch axis so that many trajectories advance together.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence, Union

import numpy as np

from .linalg import (
    IDENTITY_2,
    SIGMA_MINUS,
    SIGMA_X,
    SIGMA_Y,
    SIGMA_Z,
    adjoint,
    herm_eig,
    is_hermitian,
    kron,
)

HERMITIAN_TOL = 1e-9
TRACE_TOL = 1e-9
POSITIVITY_TOL = 1e-8
SINGULAR_TOL = 1e-14

# Couplings of the two-qubit back-scattering Hamiltonian.
BACKSCATTER_COUPLINGS = (0.3242, 0.6723, 0.1353)

Rate = Union[float, Callable[[float], float]]


class InvalidStateError(ValueError):
    """A matrix failed the density-matrix checks."""


class SingularPointError(ArithmeticError):
    """The decay rate was evaluated at a pole of its non-Markovian form."""


# ----------------------------------------------------------------------------
# states


def validate_density(rho, hermitian_tol=HERMITIAN_TOL, trace_tol=TRACE_TOL,
                     positivity_tol=POSITIVITY_TOL) -> np.ndarray:
    """Check one matrix or a stack of matrices against the density-matrix rules.

    Returns the input as a ``complex128`` array. Raises
    :class:`InvalidStateError` naming the first violated rule.
    """
    rho = np.asarray(rho, dtype=np.complex128)
    if rho.ndim < 2 or rho.shape[-1] != rho.shape[-2]:
        raise InvalidStateError(f"not a square matrix: shape {rho.shape}")
    herm_err = np.max(np.linalg.norm(rho - adjoint(rho), axis=(-2, -1)), initial=0.0)
    if herm_err > hermitian_tol:
        raise InvalidStateError(f"not Hermitian: |rho - rho^+|_F = {herm_err:.3e}")
    tr_err = np.max(np.abs(np.trace(rho, axis1=-2, axis2=-1) - 1.0), initial=0.0)
    if tr_err > trace_tol:
        raise InvalidStateError(f"trace deviates from 1 by {tr_err:.3e}")
    h = 0.5 * (rho + adjoint(rho))
    min_eig = np.min(np.linalg.eigvalsh(h), initial=np.inf)
    if min_eig < -positivity_tol:
        raise InvalidStateError(f"negative eigenvalue {min_eig:.3e}")
    return rho


def is_density(rho, **tols) -> bool:
    try:
        validate_density(rho, **tols)
    except InvalidStateError:
        return False
    return True


def sample_random_state(d: int, seed=None, mixed: bool = False) -> np.ndarray:
    """Random state of dimension ``d``.

    By default a Haar-random pure state: a complex standard-normal vector,
    normalised, turned into a projector. With ``mixed=True`` a Ginibre
    matrix ``G`` gives ``G G^+ / Tr``, a Hilbert-Schmidt random mixed state.
    ``seed`` may be an int or a ``numpy.random.Generator``.
    """
    if d < 2:
        raise ValueError("dimension must be at least 2")
    rng = np.random.default_rng(seed)
    if mixed:
        g = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
        rho = g @ g.conj().T
        return rho / np.trace(rho).real
    psi = rng.standard_normal(d) + 1j * rng.standard_normal(d)
    psi /= np.linalg.norm(psi)
    return np.outer(psi, psi.conj())


def sample_random_states(n: int, d: int, seed=None, mixed: bool = False) -> np.ndarray:
    rng = np.random.default_rng(seed)
    out = np.empty((n, d, d), dtype=np.complex128)
    for k in range(n):
        out[k] = sample_random_state(d, rng, mixed=mixed)
    return out


def trace_distance(a, b) -> float:
    """Half the trace norm of ``a - b``."""
    a = np.asarray(a, dtype=np.complex128)
    b = np.asarray(b, dtype=np.complex128)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    diff = a - b
    diff = 0.5 * (diff + diff.conj().T)
    return 0.5 * float(np.sum(np.abs(herm_eig(diff).eigenvalues)))


def partial_trace_second(rho12) -> np.ndarray:
    """Trace out qubit 2 of a two-qubit matrix (works on stacks)."""
    rho12 = np.asarray(rho12, dtype=np.complex128)
    if rho12.shape[-2:] != (4, 4):
        raise ValueError(f"expected 4x4 input, got {rho12.shape}")
    r = rho12.reshape(rho12.shape[:-2] + (2, 2, 2, 2))
    return np.einsum("...ikjk->...ij", r)


# ----------------------------------------------------------------------------
# decay rate


@dataclass(frozen=True)
class DecayParams:
    gamma0: float
    lam: float

    def __post_init__(self):
        if not (self.gamma0 > 0 and self.lam > 0):
            raise ValueError("gamma0 and lambda must be positive")

    @property
    def eta(self) -> complex:
        """``sqrt(lambda^2 - 2 gamma0 lambda)``; purely imaginary when lambda < 2 gamma0."""
        disc = self.lam**2 - 2.0 * self.gamma0 * self.lam
        return complex(np.sqrt(disc)) if disc >= 0 else 1j * np.sqrt(-disc)

    @property
    def markovian(self) -> bool:
        return self.lam > 2.0 * self.gamma0


def decay_rate(t, p: DecayParams):
    """Time-dependent decay rate of the damped two-level model.

    gamma(t) = 2 g0 l sinh(eta t / 2) / (eta cosh(eta t / 2) + l sinh(eta t / 2)).

    For ``lambda < 2 gamma0`` the same expression is evaluated with
    ``sinh(ix) = i sin x`` and ``cosh(ix) = cos x`` so that only real
    arithmetic is used. Accepts a scalar or an array of times.
    """
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0):
        raise ValueError("decay_rate requires t >= 0")
    g0, lam = p.gamma0, p.lam
    disc = lam**2 - 2.0 * g0 * lam
    if abs(disc) < 1e-12:
        # eta -> 0 limit: sinh(eta t/2)/eta -> t/2
        num = g0 * lam * t_arr
        den = 1.0 + 0.5 * lam * t_arr
    elif disc > 0:
        eta = np.sqrt(disc)
        x = 0.5 * eta * t_arr
        num = 2.0 * g0 * lam * np.sinh(x)
        den = eta * np.cosh(x) + lam * np.sinh(x)
    else:
        kappa = np.sqrt(-disc)
        x = 0.5 * kappa * t_arr
        num = 2.0 * g0 * lam * np.sin(x)
        den = kappa * np.cos(x) + lam * np.sin(x)
    if np.any(np.abs(den) < SINGULAR_TOL):
        raise SingularPointError("decay rate evaluated at a singular point")
    out = num / den
    return float(out) if np.ndim(out) == 0 else out


# ----------------------------------------------------------------------------
# models


@dataclass
class LindbladModel:
    """Hamiltonian plus jump operators, each with a constant or time-dependent rate."""

    hamiltonian: np.ndarray
    jumps: list = field(default_factory=list)

    def __post_init__(self):
        self.hamiltonian = np.array(self.hamiltonian, dtype=np.complex128)
        if not is_hermitian(self.hamiltonian):
            raise ValueError("Hamiltonian must be Hermitian")
        d = self.hamiltonian.shape[0]
        jumps = []
        for op, rate in self.jumps:
            op = np.array(op, dtype=np.complex128)
            if op.shape != (d, d):
                raise ValueError(f"jump operator shape {op.shape} does not match d={d}")
            jumps.append((op, rate))
        self.jumps = jumps

    @property
    def dim(self) -> int:
        return self.hamiltonian.shape[0]

    def rates(self, t: float) -> list[float]:
        return [float(r(t)) if callable(r) else float(r) for _, r in self.jumps]


def liouvillian_apply(rho, model: LindbladModel, t: float) -> np.ndarray:
    """-i[H, rho] + sum_k g_k(t) (L rho L^+ - 1/2 {L^+ L, rho}); ``rho`` may be a stack."""
    rho = np.asarray(rho, dtype=np.complex128)
    h = model.hamiltonian
    if rho.shape[-2:] != h.shape:
        raise ValueError(f"dimension mismatch: state {rho.shape} vs model {h.shape}")
    out = -1j * (h @ rho - rho @ h)
    for (op, _), g in zip(model.jumps, model.rates(t)):
        if g == 0.0:
            continue
        opd = op.conj().T
        ldl = opd @ op
        out = out + g * (op @ rho @ opd - 0.5 * (ldl @ rho + rho @ ldl))
    return out


def two_level_model(omega: float = 1.0, decay: DecayParams = DecayParams(0.5, 2.0)) -> LindbladModel:
    """omega sigma_z Hamiltonian with sigma_minus decay at rate gamma(t)."""
    return LindbladModel(omega * SIGMA_Z, [(SIGMA_MINUS, lambda t: decay_rate(t, decay))])


def two_qubit_hamiltonian(omega: float, c1: float, c2: float, c3: float) -> np.ndarray:
    return (
        omega * kron(SIGMA_Z, IDENTITY_2)
        + c1 * kron(SIGMA_X, SIGMA_X)
        + c2 * kron(SIGMA_Y, SIGMA_Y)
        + c3 * kron(SIGMA_Z, SIGMA_Z)
    )


def backscatter_model(
    omega: float = 1.0,
    decay1: DecayParams = DecayParams(0.5, 2.0),
    decay2: DecayParams = DecayParams(0.2, 1.0),
    couplings: Sequence[float] = BACKSCATTER_COUPLINGS,
) -> LindbladModel:
    """Two qubits with the coupling Hamiltonian and independent local decay."""
    h = two_qubit_hamiltonian(omega, *couplings)
    return LindbladModel(
        h,
        [
            (kron(SIGMA_MINUS, IDENTITY_2), lambda t: decay_rate(t, decay1)),
            (kron(IDENTITY_2, SIGMA_MINUS), lambda t: decay_rate(t, decay2)),
        ],
    )


# ----------------------------------------------------------------------------
# integration


@dataclass
class Trajectory:
    """States sampled at ``t0 + j * dt``; ``states`` has shape ``(n + 1, d, d)``."""

    t0: float
    dt: float
    states: np.ndarray

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(len(self.states))

    def __len__(self) -> int:
        return len(self.states)


def _rk4_raw(rho, model, t, dt):
    k1 = liouvillian_apply(rho, model, t)
    k2 = liouvillian_apply(rho + 0.5 * dt * k1, model, t + 0.5 * dt)
    k3 = liouvillian_apply(rho + 0.5 * dt * k2, model, t + 0.5 * dt)
    k4 = liouvillian_apply(rho + dt * k3, model, t + dt)
    return rho + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def rk4_step(rho, model: LindbladModel, t: float, dt: float, validate: bool = True) -> np.ndarray:
    """One classical Runge-Kutta step of d rho/dt = L_t[rho].

    The result is re-checked as a density matrix; a failure usually means
    ``dt`` is too large for the rates involved.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    out = _rk4_raw(np.asarray(rho, dtype=np.complex128), model, t, dt)
    if validate:
        validate_density(out)
    return out


def integrate(rho0, model: LindbladModel, dt: float, n_steps: int, t0: float = 0.0,
              substeps: int = 1, validate: bool = True) -> np.ndarray:
    """RK4 states at ``t0 + j dt`` for ``j = 0..n_steps``; ``rho0`` may be a stack.

    ``substeps`` > 1 integrates each interval with a finer step but still
    records only the coarse grid.
    """
    rho = np.asarray(rho0, dtype=np.complex128)
    if validate:
        validate_density(rho)
    out = np.empty((n_steps + 1,) + rho.shape, dtype=np.complex128)
    out[0] = rho
    h = dt / substeps
    for j in range(n_steps):
        for s in range(substeps):
            rho = _rk4_raw(rho, model, t0 + j * dt + s * h, h)
        if validate:
            validate_density(rho)
        out[j + 1] = rho
    return out


def generate_trajectory(rho0, model: LindbladModel, dt: float, n_steps: int, t0: float = 0.0) -> Trajectory:
    return Trajectory(t0, dt, integrate(rho0, model, dt, n_steps, t0))


def generate_reduced_trajectory(rho12_0, model4: LindbladModel, dt: float, n_steps: int,
                                t0: float = 0.0) -> Trajectory:
    """Integrate the two-qubit model and keep the qubit-1 marginal."""
    if model4.dim != 4:
        raise ValueError("reduced trajectories need a two-qubit model")
    full = integrate(rho12_0, model4, dt, n_steps, t0)
    return Trajectory(t0, dt, partial_trace_second(full))


def ancilla_ground_product(rho1) -> np.ndarray:
    """Embed a qubit state next to an ancilla in its ground level ``|1><1|``."""
    ground = np.array([[0, 0], [0, 1]], dtype=np.complex128)
    rho1 = np.asarray(rho1, dtype=np.complex128)
    if rho1.ndim == 2:
        return kron(rho1, ground)
    return np.stack([kron(r, ground) for r in rho1])
