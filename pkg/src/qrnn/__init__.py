"""Recurrent neural networks for open quantum system dynamics.

Ground-truth Lindblad simulation, a from-scratch GRU with backpropagation
through time, and the recurrent master-equation construction in which the
network emits Lindblad operators and a Lamb-shift Hamiltonian.
"""

__version__ = "0.1.0"
