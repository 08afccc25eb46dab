"""Growth-fragmentation models and nonparametric estimation of the division kernel.

Modules: ``kernels`` (division densities), ``simulate`` (exact particle
simulation), ``stationary`` (stationary size density and PDE evolution),
``estimator`` (Fourier deconvolution estimator), ``bandwidth`` (selection
rules), ``bench`` (Monte Carlo campaigns) and ``cli``.
"""
from __future__ import annotations

__version__ = "0.1.0"
