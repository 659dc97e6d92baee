"""Chaotic two-port scattering laboratory.

Simulates microwave-network-style quantum graphs (optionally with
circulators that break time-reversal symmetry) and random-matrix
effective-Hamiltonian ensembles, evaluates exact densities of the
off-diagonal reaction-matrix element, and compares simulated or measured
scattering data against the theory.
"""

__version__ = "0.1.0"

from . import graphs, io, rmt, stats, theory  # noqa: E402,F401
from .io import TwoPortSamples  # noqa: F401
from .rmt import ChannelModel, EnsembleConfig, sample_ensemble  # noqa: F401
from .stats import enhancement_factor, fit_gamma, k_from_s, s_from_k  # noqa: F401
from .theory import TheoryParams, joint_density, marginal_density  # noqa: F401
