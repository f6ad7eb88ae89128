import cmath

import numpy as np
import pytest

from qrnn.dynamics import (
    DecayParams,
    InvalidStateError,
    LindbladModel,
    SingularPointError,
    Trajectory,
    ancilla_ground_product,
    backscatter_model,
    decay_rate,
    generate_reduced_trajectory,
    generate_trajectory,
    integrate,
    liouvillian_apply,
    partial_trace_second,
    rk4_step,
    sample_random_state,
    trace_distance,
    two_level_model,
    two_qubit_hamiltonian,
    validate_density,
)
from qrnn.linalg import SIGMA_MINUS, SIGMA_PLUS, SIGMA_Z, anticommutator, commutator, kron, matmul

MARKOV = DecayParams(gamma0=0.5, lam=2.0)
NON_MARKOV = DecayParams(gamma0=2.0, lam=1.0)
EXCITED = np.diag([1.0, 0.0]).astype(complex)
GROUND = np.diag([0.0, 1.0]).astype(complex)


def complex_decay_rate(t, p):
    eta = cmath.sqrt(p.lam**2 - 2 * p.gamma0 * p.lam)
    x = eta * t / 2
    return 2 * p.gamma0 * p.lam * cmath.sinh(x) / (eta * cmath.cosh(x) + p.lam * cmath.sinh(x))


def test_decay_rate_at_zero():
    assert decay_rate(0.0, MARKOV) == 0.0


def test_decay_rate_markovian_positive():
    ts = np.linspace(0.01, 5.0, 500)
    assert np.all(decay_rate(ts, MARKOV) > 0)


def test_decay_rate_non_markovian_goes_negative():
    ts = np.linspace(0.01, 5.0, 500)
    assert np.any(decay_rate(ts, NON_MARKOV) < 0)


@pytest.mark.parametrize("p", [MARKOV, NON_MARKOV, DecayParams(0.2, 1.0), DecayParams(1.0, 0.5)])
def test_decay_rate_matches_complex_evaluation(p):
    for t in np.linspace(0.0, 5.0, 41):
        ref = complex_decay_rate(t, p)
        assert abs(ref.imag) < 1e-12
        assert decay_rate(t, p) == pytest.approx(ref.real, rel=1e-12, abs=1e-12)


def test_decay_rate_critical_limit():
    p = DecayParams(1.0, 2.0)
    assert decay_rate(0.5, p) == pytest.approx(decay_rate(0.5, DecayParams(1.0, 2.0 + 1e-7)), rel=1e-5)


def test_decay_rate_singular_point():
    p = NON_MARKOV
    kappa = np.sqrt(2 * p.gamma0 * p.lam - p.lam**2)
    # kappa cos(x) + lam sin(x) = 0  <=>  x = pi - atan(kappa / lam)
    t_pole = 2 * (np.pi - np.arctan(kappa / p.lam)) / kappa
    with pytest.raises(SingularPointError):
        decay_rate(t_pole, p)


def test_sign_pattern_matches_markov_criterion():
    ts = np.linspace(0.01, 10.0, 1000)
    for g0, lam in [(0.5, 2.0), (0.2, 1.0), (0.1, 3.0), (2.0, 1.0), (1.0, 1.5)]:
        p = DecayParams(g0, lam)
        g = decay_rate(ts, p)
        assert np.all(g > 0) == p.markovian


def test_decay_params_validation():
    with pytest.raises(ValueError):
        DecayParams(0.0, 1.0)


# ---------------------------------------------------------------- liouvillian


def test_ground_state_is_stationary():
    model = two_level_model(1.0, MARKOV)
    assert np.max(np.abs(liouvillian_apply(GROUND, model, 0.4))) == 0.0


def test_pure_decay_of_excited_population():
    model = LindbladModel(np.zeros((2, 2)), [(SIGMA_MINUS, 1.0)])
    np.testing.assert_array_equal(liouvillian_apply(EXCITED, model, 0.0), np.diag([-1, 1]))


def test_liouvillian_matches_term_by_term_oracle():
    rho = sample_random_state(2, 11)
    t = 0.3
    model = two_level_model(1.0, MARKOV)
    g = decay_rate(t, MARKOV)
    ref = -1j * commutator(1.0 * SIGMA_Z, rho) + g * (
        matmul(matmul(SIGMA_MINUS, rho), SIGMA_PLUS)
        - 0.5 * anticommutator(matmul(SIGMA_PLUS, SIGMA_MINUS), rho)
    )
    assert np.max(np.abs(liouvillian_apply(rho, model, t) - ref)) < 1e-12


def test_liouvillian_dimension_mismatch():
    with pytest.raises(ValueError):
        liouvillian_apply(np.eye(4) / 4, two_level_model(), 0.0)


# ---------------------------------------------------------------- hamiltonian


def test_two_qubit_hamiltonian():
    h = two_qubit_hamiltonian(1.0, 0.3242, 0.6723, 0.1353)
    assert np.allclose(h, h.conj().T)
    assert abs(np.trace(h)) < 1e-15
    assert np.all(two_qubit_hamiltonian(0, 0, 0, 0) == 0)
    np.testing.assert_array_equal(two_qubit_hamiltonian(1, 0, 0, 0), np.diag([1, 1, -1, -1]))


# ---------------------------------------------------------------- rk4


def test_rk4_free_model_is_identity():
    rho = sample_random_state(2, 3)
    model = LindbladModel(np.zeros((2, 2)))
    np.testing.assert_array_equal(rk4_step(rho, model, 0.0, 0.1), rho)


def test_rk4_preserves_trace():
    model = two_level_model(1.0, MARKOV)
    rho = sample_random_state(2, 5)
    for j in range(70):
        rho = rk4_step(rho, model, 0.01 * j, 0.01)
        assert abs(np.trace(rho) - 1) < 1e-10


def test_rk4_rejects_nonpositive_dt():
    with pytest.raises(ValueError):
        rk4_step(EXCITED, two_level_model(), 0.0, 0.0)


def test_rk4_flags_invalid_step():
    model = LindbladModel(np.zeros((2, 2)), [(SIGMA_MINUS, 50.0)])
    with pytest.raises(InvalidStateError):
        rk4_step(EXCITED, model, 0.0, 0.2)


def test_rk4_single_step_order():
    model = two_level_model(1.0, MARKOV)
    rho = sample_random_state(2, 8)
    t0 = 0.2

    def err(h):
        ref = integrate(rho, model, h, 1, t0=t0, substeps=10, validate=False)[-1]
        return np.linalg.norm(rk4_step(rho, model, t0, h) - ref)

    ratio = err(0.2) / err(0.1)
    # local error of a fourth-order method is O(h^5)
    assert 2**4 < ratio < 2**6


def test_rk4_global_order():
    model = two_level_model(1.0, MARKOV)
    rho = sample_random_state(2, 9)
    T = 0.8
    ref = integrate(rho, model, T / 8, 8, substeps=40, validate=False)[-1]
    errs = [np.linalg.norm(integrate(rho, model, T / n, n)[-1] - ref) for n in (4, 8)]
    assert errs[0] / errs[1] == pytest.approx(16, rel=0.2)


# ---------------------------------------------------------------- partial trace


def test_partial_trace_product_state():
    a = sample_random_state(2, 1, mixed=True)
    b = 3.0 * sample_random_state(2, 2, mixed=True)
    np.testing.assert_allclose(partial_trace_second(kron(a, b)), a * np.trace(b), atol=1e-15)


def test_partial_trace_bell_state():
    phi = np.array([1, 0, 0, 1]) / np.sqrt(2)
    np.testing.assert_allclose(partial_trace_second(np.outer(phi, phi)), np.eye(2) / 2)


def test_partial_trace_double_sum_oracle():
    rho = sample_random_state(4, 6, mixed=True)
    ref = np.zeros((2, 2), dtype=complex)
    for i in range(2):
        for j in range(2):
            for k in range(2):
                ref[i, j] += rho[2 * i + k, 2 * j + k]
    assert np.max(np.abs(partial_trace_second(rho) - ref)) < 1e-12


def test_partial_trace_shape_error():
    with pytest.raises(ValueError):
        partial_trace_second(np.eye(2))


# ---------------------------------------------------------------- sampling


def test_random_state_is_pure_state():
    rho = sample_random_state(3, 42)
    validate_density(rho)
    assert np.linalg.matrix_rank(rho, tol=1e-10) == 1
    np.testing.assert_array_equal(rho, sample_random_state(3, 42))


def test_random_mixed_state():
    validate_density(sample_random_state(4, 1, mixed=True))


def test_haar_sigma_z_mean():
    rng = np.random.default_rng(2024)
    vals = np.array([np.trace(SIGMA_Z @ sample_random_state(2, rng)).real for _ in range(10_000)])
    assert abs(vals.mean()) < 3 * vals.std() / np.sqrt(len(vals))


# ---------------------------------------------------------------- trajectories


def test_trajectory_zero_steps():
    tr = generate_trajectory(EXCITED, two_level_model(), 0.01, 0)
    assert len(tr) == 1
    np.testing.assert_array_equal(tr.states[0], EXCITED)


def test_excited_population_decays_monotonically():
    model = two_level_model(1.0, MARKOV)
    tr = generate_trajectory(EXCITED, model, 0.01, 70)
    pop = tr.states[:, 0, 0].real
    assert np.all(np.diff(pop) < 0)
    fine = generate_trajectory(EXCITED, model, 0.001, 700)
    assert np.max(np.abs(tr.states - fine.states[::10])) < 1e-9


def test_reduced_trajectory_states_are_valid():
    model = backscatter_model(1.0, MARKOV, DecayParams(0.2, 1.0))
    rho12 = ancilla_ground_product(sample_random_state(2, 4))
    tr = generate_reduced_trajectory(rho12, model, 0.01, 70)
    assert isinstance(tr, Trajectory)
    assert tr.states.shape == (71, 2, 2)
    validate_density(tr.states)
    np.testing.assert_allclose(tr.times[-1], 0.7)


def test_generate_rejects_invalid_initial_state():
    with pytest.raises(InvalidStateError):
        generate_trajectory(np.eye(2), two_level_model(), 0.01, 3)


# ---------------------------------------------------------------- trace distance


def test_trace_distance_examples():
    rho = sample_random_state(2, 0)
    assert trace_distance(rho, rho) == pytest.approx(0, abs=1e-15)
    assert trace_distance(EXCITED, GROUND) == pytest.approx(1)
    assert trace_distance(EXCITED, np.eye(2) / 2) == pytest.approx(0.5)
    with pytest.raises(ValueError):
        trace_distance(EXCITED, np.eye(4) / 4)


def test_trace_distance_range():
    rng = np.random.default_rng(7)
    for _ in range(50):
        a, b = sample_random_state(3, rng, mixed=True), sample_random_state(3, rng)
        assert 0.0 <= trace_distance(a, b) <= 1.0 + 1e-12
