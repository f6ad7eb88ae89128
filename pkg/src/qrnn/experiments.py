"""End-to-end reproductions of the five learning experiments at configurable scale.

EXP1  state predictor on the damped two-level model
EXP2  recurrent master equation (one Lindblad operator) on the same model
EXP3  state predictor on the qubit-1 marginal of the back-scattering model
EXP4  recurrent master equation on EXP3 data, with and without Lamb shift
EXP5  as EXP4 with two Lindblad operators and omega fed to the network
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .dynamics import (
    BACKSCATTER_COUPLINGS,
    DecayParams,
    ancilla_ground_product,
    backscatter_model,
    decay_rate,
    integrate,
    partial_trace_second,
    sample_random_states,
    trace_distance,
    two_level_model,
)
from .linalg import SIGMA_Z
from .neural import AdamState, GruNetwork, adam_step, init_params
from .qrn import (
    QrnConfig,
    master_equation_loss,
    qrn_generators,
    residual_costs,
    rollout_state_predictor,
    state_predictor_loss,
)

log = logging.getLogger(__name__)


class TrainingDivergedError(FloatingPointError):
    def __init__(self, step: int, loss: float):
        super().__init__(f"non-finite training loss {loss} at optimisation step {step}")
        self.step = step
        self.loss = loss


@dataclass
class ExperimentConfig:
    exp: int = 1
    n_train: int = 500
    n_test: int = 100
    dt: float = 0.01
    t_max: float = 0.7
    t_eval: float = 1.0
    omega: float = 1.0
    gamma0_1: float = 0.5
    lambda_1: float = 2.0
    gamma0_2: float = 0.2
    lambda_2: float = 1.0
    couplings: tuple = BACKSCATTER_COUPLINGS
    mu_count: int = 1
    include_lamb_shift: bool = False
    omega_range: tuple = (0.5, 1.5)
    epochs: int = 60
    batch: int = 32
    lr: float = 0.01
    weight_decay: float = 0.0
    hidden: tuple = (40, 40)
    seed: int = 0

    def __post_init__(self):
        if self.exp not in (1, 2, 3, 4, 5):
            raise ValueError(f"unknown experiment {self.exp}")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.t_eval < self.t_max:
            raise ValueError("t_eval must not be shorter than t_max")
        self.couplings = tuple(self.couplings)
        self.omega_range = tuple(self.omega_range)
        self.hidden = tuple(self.hidden)

    @classmethod
    def for_experiment(cls, exp: int, **overrides) -> "ExperimentConfig":
        """Defaults for one experiment; keyword arguments override them."""
        base = {1: {}, 2: {"weight_decay": 0.001}, 3: {}, 4: {}, 5: {"mu_count": 2, "include_lamb_shift": True}}
        return cls(exp=exp, **{**base[exp], **overrides})

    @property
    def n_train_steps(self) -> int:
        return int(round(self.t_max / self.dt))

    @property
    def n_eval_steps(self) -> int:
        return int(round(self.t_eval / self.dt))

    @property
    def two_qubit(self) -> bool:
        return self.exp >= 3

    @property
    def conditioned(self) -> bool:
        return self.exp == 5

    @property
    def master_equation(self) -> bool:
        return self.exp in (2, 4, 5)

    def decay1(self) -> DecayParams:
        return DecayParams(self.gamma0_1, self.lambda_1)

    def decay2(self) -> DecayParams:
        return DecayParams(self.gamma0_2, self.lambda_2)

    def qrn_config(self) -> QrnConfig:
        return QrnConfig(self.mu_count, self.include_lamb_shift, self.dt, self.omega * SIGMA_Z)

    def network_input_size(self) -> int:
        return 8 + int(self.conditioned)

    def network_output_size(self) -> int:
        return self.qrn_config().output_size if self.master_equation else 8

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class Dataset:
    """Qubit trajectories ``states`` of shape ``(N, n_steps + 1, 2, 2)`` and optional omegas."""

    dt: float
    states: np.ndarray
    omegas: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return len(self.states)

    @property
    def n_steps(self) -> int:
        return self.states.shape[1] - 1

    def time_major(self, idx=slice(None)) -> np.ndarray:
        return np.ascontiguousarray(np.swapaxes(self.states[idx], 0, 1))


@dataclass
class MetricsCurve:
    times: np.ndarray
    values: np.ndarray
    n: int
    label: str = ""

    def mean_until(self, t: float) -> float:
        return float(np.mean(self.values[self.times <= t + 1e-9]))

    def mean_after(self, t: float) -> float:
        return float(np.mean(self.values[self.times > t + 1e-9]))


@dataclass
class TrainResult:
    net: GruNetwork
    optimizer: AdamState
    epoch_losses: list = field(default_factory=list)
    steps: int = 0


# ----------------------------------------------------------------------------
# data


def generate_dataset(cfg: ExperimentConfig, n: int, n_steps: int, seed) -> Dataset:
    """Ground-truth trajectories for ``cfg.exp`` from Haar-random initial qubit states."""
    if n <= 0:
        raise ValueError("empty dataset: n must be positive")
    rng = np.random.default_rng(seed)
    rho0 = sample_random_states(n, 2, rng)
    if not cfg.two_qubit:
        model = two_level_model(cfg.omega, cfg.decay1())
        states = integrate(rho0, model, cfg.dt, n_steps)
        return Dataset(cfg.dt, np.ascontiguousarray(np.swapaxes(states, 0, 1)))
    rho12 = ancilla_ground_product(rho0)
    if not cfg.conditioned:
        model = backscatter_model(cfg.omega, cfg.decay1(), cfg.decay2(), cfg.couplings)
        full = integrate(rho12, model, cfg.dt, n_steps)
        return Dataset(cfg.dt, np.ascontiguousarray(np.swapaxes(partial_trace_second(full), 0, 1)))
    lo, hi = cfg.omega_range
    omegas = rng.uniform(lo, hi, size=n)
    out = np.empty((n, n_steps + 1, 2, 2), dtype=np.complex128)
    for k in range(n):
        model = backscatter_model(omegas[k], cfg.decay1(), cfg.decay2(), cfg.couplings)
        out[k] = partial_trace_second(integrate(rho12[k], model, cfg.dt, n_steps))
    return Dataset(cfg.dt, out, omegas)


def dataset_seeds(seed: int) -> tuple:
    train, test, net = np.random.SeedSequence(seed).spawn(3)
    return train, test, net


# ----------------------------------------------------------------------------
# training


def batch_loss(cfg: ExperimentConfig, net: GruNetwork, data: Dataset, idx):
    target = data.time_major(idx)
    rho0 = target[0]
    extra = data.omegas[idx] if (cfg.conditioned and data.omegas is not None) else None
    if not cfg.master_equation:
        return state_predictor_loss(net, rho0, target, extra)
    qcfg = cfg.qrn_config()
    hams = None
    if extra is not None:
        hams = extra[:, None, None] * SIGMA_Z
    return master_equation_loss(net, rho0, target, qcfg, extra, hams)


def decay_mask(cfg: ExperimentConfig) -> tuple:
    return ("head.W",) if cfg.weight_decay > 0 else ()


def penalty_factor(cfg: ExperimentConfig) -> float:
    """L2 factor as seen by the optimiser.

    The residual cost is quadratic in ``dt * generator``; the penalty is
    meant relative to the generator itself, so it is scaled by ``dt^2``.
    """
    return cfg.weight_decay * (cfg.dt**2 if cfg.master_equation else 1.0)


def train(cfg: ExperimentConfig, data: Dataset, net: Optional[GruNetwork] = None,
          optimizer: Optional[AdamState] = None, epochs: Optional[int] = None,
          start_epoch: int = 0, on_epoch: Optional[Callable] = None) -> TrainResult:
    """Mini-batch Adam over shuffled examples.

    The shuffle of epoch ``e`` depends only on ``cfg.seed`` and ``e``, so a
    run resumed at ``start_epoch`` follows the uninterrupted one exactly.
    """
    if len(data) == 0:
        raise ValueError("empty dataset")
    if net is None:
        net = init_params(cfg.network_input_size(), cfg.network_output_size(), cfg.hidden,
                          seed=dataset_seeds(cfg.seed)[2])
    if optimizer is None:
        optimizer = AdamState(lr=cfg.lr)
    epochs = cfg.epochs if epochs is None else epochs
    params = net.named_params()
    mask = decay_mask(cfg)
    wd = penalty_factor(cfg)
    result = TrainResult(net, optimizer, steps=optimizer.step)
    for epoch in range(start_epoch, start_epoch + epochs):
        order = np.random.default_rng([cfg.seed, epoch]).permutation(len(data))
        total, count = 0.0, 0
        for start in range(0, len(data), cfg.batch):
            idx = np.sort(order[start : start + cfg.batch])
            loss, grads = batch_loss(cfg, net, data, idx)
            if not np.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads.values()):
                raise TrainingDivergedError(optimizer.step, loss)
            adam_step(params, grads, optimizer, mask, wd)
            total += loss * len(idx)
            count += len(idx)
        mean_loss = total / count
        result.epoch_losses.append(mean_loss)
        log.info("epoch %d  loss %.6e", epoch, mean_loss)
        if on_epoch is not None:
            on_epoch(epoch, mean_loss, result)
    result.steps = optimizer.step
    return result


# ----------------------------------------------------------------------------
# evaluation


def trace_distance_curve(cfg: ExperimentConfig, net: GruNetwork, data: Dataset, label: str = "") -> MetricsCurve:
    """Mean trace distance between predicted and true states at each step ``t_1 .. t_n``."""
    truth = data.time_major()
    pred = rollout_state_predictor(truth[0], net, data.n_steps, data.omegas if cfg.conditioned else None)
    values = np.array([
        np.mean([trace_distance(pred[j, b], truth[j, b]) for b in range(len(data))])
        for j in range(1, data.n_steps + 1)
    ])
    times = data.dt * np.arange(1, data.n_steps + 1)
    return MetricsCurve(times, values, len(data), label)


def qrn_outputs(cfg: ExperimentConfig, net: GruNetwork, data: Dataset):
    truth = data.time_major()
    extra = data.omegas if cfg.conditioned else None
    out, _, _ = qrn_generators(truth[0], net, cfg.qrn_config(), data.n_steps, extra)
    return out


def cost_curve(cfg: ExperimentConfig, net: GruNetwork, data: Dataset, label: str = "") -> MetricsCurve:
    """Held-out residual cost averaged over examples at each transition end time."""
    truth = data.time_major()
    out = qrn_outputs(cfg, net, data)
    if cfg.conditioned:
        h = data.omegas[:, None, None] * SIGMA_Z
    else:
        h = cfg.omega * SIGMA_Z
    per = residual_costs(truth, out, h, cfg.dt)
    times = data.dt * np.arange(1, data.n_steps + 1)
    return MetricsCurve(times, per.mean(axis=1), len(data), label)


def evaluate(cfg: ExperimentConfig, net: GruNetwork, data: Dataset, label: str = "") -> MetricsCurve:
    if cfg.master_equation:
        return cost_curve(cfg, net, data, label)
    return trace_distance_curve(cfg, net, data, label)


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    curves: dict
    baseline: dict
    train_losses: dict
    nets: dict
    extras: dict = field(default_factory=dict)


def _run(cfg: ExperimentConfig, variants: dict) -> ExperimentResult:
    train_seed, test_seed, _ = dataset_seeds(cfg.seed)
    train_data = generate_dataset(cfg, cfg.n_train, cfg.n_train_steps, train_seed)
    test_data = generate_dataset(cfg, cfg.n_test, cfg.n_eval_steps, test_seed)
    curves, baseline, losses, nets = {}, {}, {}, {}
    for name, vcfg in variants.items():
        init = init_params(vcfg.network_input_size(), vcfg.network_output_size(), vcfg.hidden,
                           seed=dataset_seeds(vcfg.seed)[2])
        baseline[name] = evaluate(vcfg, init, test_data, f"{name} untrained")
        res = train(vcfg, train_data, net=init.copy())
        curves[name] = evaluate(vcfg, res.net, test_data, name)
        losses[name] = res.epoch_losses
        nets[name] = res.net
    return ExperimentResult(cfg, curves, baseline, losses, nets, {"test_data": test_data})


def run_exp1(cfg: ExperimentConfig) -> ExperimentResult:
    _check(cfg, 1)
    return _run(cfg, {"predictor": cfg})


def run_exp2(cfg: ExperimentConfig) -> ExperimentResult:
    """Markovian master-equation learning; also records learned operators against sqrt(gamma)."""
    _check(cfg, 2)
    if not cfg.decay1().markovian:
        raise ValueError("EXP2 needs Markovian parameters (lambda > 2 gamma0)")
    res = _run(cfg, {"L": cfg})
    data = res.extras["test_data"]
    out = qrn_outputs(cfg, res.nets["L"], data)
    # average over test examples of |L_ij| per transition start time
    mags = np.abs(out.lindblads[:, :, 0]).mean(axis=1)
    starts = cfg.dt * np.arange(data.n_steps)
    res.extras["lindblad_times"] = starts
    res.extras["lindblad_abs"] = mags
    res.extras["sqrt_gamma"] = np.sqrt(decay_rate(starts, cfg.decay1()))
    return res


def run_exp3(cfg: ExperimentConfig) -> ExperimentResult:
    _check(cfg, 3)
    return _run(cfg, {"predictor": cfg})


def run_exp4(cfg: ExperimentConfig) -> ExperimentResult:
    """Two runs on the same data: Lindblad operator only, then with the Lamb shift."""
    _check(cfg, 4)
    return _run(cfg, {
        "L": replace(cfg, include_lamb_shift=False),
        "L+HLS": replace(cfg, include_lamb_shift=True),
    })


def run_exp5(cfg: ExperimentConfig) -> ExperimentResult:
    _check(cfg, 5)
    return _run(cfg, {"L+HLS": cfg})


RUNNERS = {1: run_exp1, 2: run_exp2, 3: run_exp3, 4: run_exp4, 5: run_exp5}


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    return RUNNERS[cfg.exp](cfg)


def _check(cfg: ExperimentConfig, exp: int) -> None:
    if cfg.exp != exp:
        raise ValueError(f"configuration is for EXP{cfg.exp}, not EXP{exp}")
    if cfg.n_train <= 0 or cfg.n_test <= 0:
        raise ValueError("empty dataset: n_train and n_test must be positive")
