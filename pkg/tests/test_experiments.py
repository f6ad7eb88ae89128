import numpy as np
import pytest

from qrnn.dynamics import is_density, partial_trace_second, trace_distance
from qrnn.experiments import (
    ExperimentConfig,
    MetricsCurve,
    dataset_seeds,
    generate_dataset,
    penalty_factor,
    run_exp1,
    run_exp2,
    run_exp3,
    run_exp4,
    run_exp5,
    run_experiment,
    train,
)
from qrnn.neural import init_params
from qrnn.qrn import rollout_state_predictor

TINY = dict(n_train=16, n_test=4, epochs=2, hidden=(6, 6), batch=8)


def test_config_defaults():
    cfg = ExperimentConfig.for_experiment(1)
    assert (cfg.n_train, cfg.n_test, cfg.dt, cfg.t_max, cfg.t_eval) == (500, 100, 0.01, 0.7, 1.0)
    assert (cfg.n_train_steps, cfg.n_eval_steps) == (70, 100)
    assert ExperimentConfig.for_experiment(2).weight_decay == 0.001
    five = ExperimentConfig.for_experiment(5)
    assert five.mu_count == 2 and five.include_lamb_shift and five.omega_range == (0.5, 1.5)
    assert five.network_input_size() == 9 and five.network_output_size() == 24
    assert ExperimentConfig.for_experiment(4).network_output_size() == 8


def test_config_validation():
    with pytest.raises(ValueError):
        ExperimentConfig(exp=6)
    with pytest.raises(ValueError):
        ExperimentConfig(exp=1, t_max=1.0, t_eval=0.5)
    with pytest.raises(ValueError):
        ExperimentConfig(exp=1, dt=0.0)


def test_penalty_scaled_for_master_equation():
    assert penalty_factor(ExperimentConfig.for_experiment(2)) == pytest.approx(0.001 * 0.01**2)
    assert penalty_factor(ExperimentConfig.for_experiment(1, weight_decay=0.001)) == 0.001


@pytest.mark.parametrize("runner", [run_exp1, run_exp2, run_exp3, run_exp4, run_exp5])
def test_empty_dataset_rejected(runner):
    exp = {run_exp1: 1, run_exp2: 2, run_exp3: 3, run_exp4: 4, run_exp5: 5}[runner]
    with pytest.raises(ValueError, match="empty"):
        runner(ExperimentConfig.for_experiment(exp, n_train=0))


def test_runner_rejects_wrong_experiment():
    with pytest.raises(ValueError):
        run_exp1(ExperimentConfig.for_experiment(2, **TINY))


def test_exp2_requires_markovian_parameters():
    with pytest.raises(ValueError):
        run_exp2(ExperimentConfig.for_experiment(2, gamma0_1=2.0, lambda_1=1.0, **TINY))


# ---------------------------------------------------------------- data


@pytest.mark.parametrize("exp", [1, 3, 5])
def test_generate_dataset_shapes_and_validity(exp):
    cfg = ExperimentConfig.for_experiment(exp)
    data = generate_dataset(cfg, 6, 20, seed=1)
    assert data.states.shape == (6, 21, 2, 2)
    assert is_density(data.states)
    assert (data.omegas is not None) == (exp == 5)
    again = generate_dataset(cfg, 6, 20, seed=1)
    assert again.states.tobytes() == data.states.tobytes()


def test_reduced_dataset_starts_from_sampled_qubit_state():
    cfg = ExperimentConfig.for_experiment(3)
    one = generate_dataset(ExperimentConfig.for_experiment(1), 5, 3, seed=4)
    two = generate_dataset(cfg, 5, 3, seed=4)
    # same RNG stream for the initial qubit state; the ancilla starts in its ground state
    np.testing.assert_allclose(two.states[:, 0], one.states[:, 0], atol=1e-15)
    assert not np.allclose(two.states[:, 3], one.states[:, 3])


def test_dataset_seeds_are_independent_streams():
    a, b, c = dataset_seeds(0)
    draws = [np.random.default_rng(s).random() for s in (a, b, c)]
    assert len(set(draws)) == 3
    assert np.random.default_rng(dataset_seeds(0)[0]).random() == draws[0]


# ---------------------------------------------------------------- training


def test_training_is_deterministic():
    cfg = ExperimentConfig.for_experiment(1, **TINY)
    data = generate_dataset(cfg, 16, 10, seed=0)
    a, b = train(cfg, data), train(cfg, data)
    assert a.epoch_losses == b.epoch_losses
    for (k, x), (_, y) in zip(a.net.named_params().items(), b.net.named_params().items()):
        assert x.tobytes() == y.tobytes(), k


def test_resumed_training_matches_uninterrupted():
    cfg = ExperimentConfig.for_experiment(2, **TINY)
    data = generate_dataset(cfg, 16, 10, seed=0)
    full = train(cfg, data, epochs=3)
    part = train(cfg, data, epochs=1)
    rest = train(cfg, data, net=part.net, optimizer=part.optimizer, epochs=2, start_epoch=1)
    assert full.epoch_losses == part.epoch_losses + rest.epoch_losses
    for k, v in full.net.named_params().items():
        assert rest.net.named_params()[k].tobytes() == v.tobytes()


def test_training_loss_decreases_exp1():
    cfg = ExperimentConfig.for_experiment(1, n_train=64, epochs=6, hidden=(12, 12))
    data = generate_dataset(cfg, 64, 70, seed=0)
    res = train(cfg, data)
    assert res.epoch_losses[-1] < res.epoch_losses[0]
    assert res.steps == 6 * 2


# ---------------------------------------------------------------- runs


def check_curve(curve: MetricsCurve, n_points: int, trace_distance_metric: bool):
    assert len(curve.times) == len(curve.values) == n_points
    np.testing.assert_allclose(curve.times, 0.01 * np.arange(1, n_points + 1))
    assert np.all(np.isfinite(curve.values)) and np.all(curve.values >= 0)
    if trace_distance_metric:
        assert np.all(curve.values <= 1)


@pytest.fixture(scope="module")
def small_exp1():
    return run_exp1(ExperimentConfig.for_experiment(1, n_train=128, n_test=20, epochs=25, hidden=(16, 16)))


def test_exp1_curve_contract(small_exp1):
    check_curve(small_exp1.curves["predictor"], 100, True)


def test_exp1_beats_untrained_baseline(small_exp1):
    trained, base = small_exp1.curves["predictor"], small_exp1.baseline["predictor"]
    pre = trained.times <= 0.7 + 1e-9
    assert np.all(trained.values[pre] < base.values[pre])


def test_experiment_rerun_is_identical():
    cfg = ExperimentConfig.for_experiment(1, **TINY)
    a, b = run_experiment(cfg), run_experiment(cfg)
    assert a.curves["predictor"].values.tobytes() == b.curves["predictor"].values.tobytes()


def test_exp2_operator_trace():
    res = run_exp2(ExperimentConfig.for_experiment(2, n_train=32, n_test=8, epochs=3, hidden=(8, 8)))
    check_curve(res.curves["L"], 100, False)
    assert res.extras["lindblad_abs"].shape == (100, 2, 2)
    np.testing.assert_allclose(res.extras["lindblad_times"], 0.01 * np.arange(100))
    assert res.extras["sqrt_gamma"][0] == 0.0
    assert np.all(np.diff(res.extras["sqrt_gamma"]) > 0)


def test_exp3_evaluation_states_valid():
    cfg = ExperimentConfig.for_experiment(3, **TINY)
    res = run_exp3(cfg)
    check_curve(res.curves["predictor"], 100, True)
    data = res.extras["test_data"]
    pred = rollout_state_predictor(data.time_major()[0], res.nets["predictor"], data.n_steps)
    assert is_density(pred)


def test_exp4_two_variants():
    res = run_exp4(ExperimentConfig.for_experiment(4, **TINY))
    assert set(res.curves) == {"L", "L+HLS"}
    for curve in res.curves.values():
        check_curve(curve, 100, False)
    assert res.nets["L"].output_size == 8 and res.nets["L+HLS"].output_size == 16


def test_exp5_degenerate_omega_matches_exp4():
    kw = dict(n_train=200, n_test=50, epochs=15, hidden=(24, 24))
    r5 = run_exp5(ExperimentConfig.for_experiment(5, omega_range=(1.0, 1.0), **kw))
    r4 = run_exp4(ExperimentConfig.for_experiment(4, mu_count=2, **kw))
    np.testing.assert_array_equal(r5.extras["test_data"].omegas, 1.0)
    check_curve(r5.curves["L+HLS"], 100, False)
    a, b = r5.curves["L+HLS"].mean_until(0.7), r4.curves["L+HLS"].mean_until(0.7)
    assert 0.5 < a / b < 2.0
    assert a < r5.baseline["L+HLS"].mean_until(0.7)
