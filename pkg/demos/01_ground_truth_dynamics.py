# Ground-truth open-system dynamics: the damped two-level model and the
# qubit-1 marginal of the back-scattering model.
import numpy as np

from qrnn.dynamics import (
    DecayParams,
    ancilla_ground_product,
    backscatter_model,
    decay_rate,
    generate_reduced_trajectory,
    generate_trajectory,
    two_level_model,
)

markov = DecayParams(gamma0=0.5, lam=2.0)
memory = DecayParams(gamma0=2.0, lam=1.0)

# time-dependent decay rates; the second one turns negative (information backflow)
ts = np.linspace(0, 3, 7)
print("t        ", np.round(ts, 2))
print("gamma(t) ", np.round(decay_rate(ts, markov), 4), " markovian:", markov.markovian)
print("gamma(t) ", np.round(decay_rate(ts, memory), 4), " markovian:", memory.markovian)

# excited state decaying under the two-level model
excited = np.diag([1.0, 0.0]).astype(complex)
tr = generate_trajectory(excited, two_level_model(1.0, markov), dt=0.01, n_steps=100)
print("\nexcited population every 0.2:")
for t, rho in zip(tr.times[::20], tr.states[::20]):
    print(f"  t={t:.1f}  p_e={rho[0, 0].real:.4f}")

# a superposition on qubit 1, ancilla in its ground state, traced out afterwards
plus = 0.5 * np.ones((2, 2), dtype=complex)
model = backscatter_model(1.0, markov, DecayParams(0.2, 1.0))
red = generate_reduced_trajectory(ancilla_ground_product(plus), model, dt=0.01, n_steps=100)
coh = np.abs(red.states[:, 0, 1])
print("\nqubit-1 coherence |rho_01| every 0.2:", np.round(coh[::20], 4))
