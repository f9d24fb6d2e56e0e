"""Simulation suite for resilient quantum electron microscopy.

Modules: physics (dose and beam closed forms), isn_analysis (stripe-set
disturbance estimates and noise spectra), qsim (exact joint statevector
protocol), inelastic_sim (dipole-event envelopes and Monte Carlo),
imaging (phase maps and noisy image synthesis), classical_baselines
(conventional measurement oracles), cli (reproducible experiment runner).
"""

__version__ = "0.1.0"
