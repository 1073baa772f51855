"""Quantum Monte Carlo and mean-field toolkit for square-lattice Rydberg atom arrays.

The Hamiltonian simulated throughout (Rabi frequency Omega = 1 sets the units) is

    H = sum_{i<j} (Rb / R_ij)^6 n_i n_j  -  Delta sum_i n_i  -  (1/2) sum_i sigma^x_i,

with interactions truncated at distance R0.  The minus sign on the transverse
field is unitarily equivalent to the plus convention (conjugation by
prod_i sigma^z_i) and makes all worldline weights positive; diagonal
observables are unaffected.

Subpackages / modules:
    lattice      -- square-lattice geometry and truncated interaction tables
    worldline    -- continuous-imaginary-time configurations and interval arithmetic
    engine       -- the QMC Markov chain (continuous-time cluster updates)
    observables  -- order parameters, Binder ratios, error analysis
    oracle       -- dense exact diagonalization for small systems
    lgw          -- Landau mean-field potentials, phase diagram, symmetry checks
    scaling      -- finite-size-scaling fits for (g_c, nu, beta)
    runio        -- run configs, checkpoints, series serialization
    cli          -- command-line entry points
"""

from rydqmc.lattice import LatticeSpec, InteractionTable, build_interactions
from rydqmc.worldline import Worldline, Configuration
from rydqmc.engine import QmcParams, Schedule, run, seeded_run
from rydqmc.observables import ObservableSeries

__version__ = "0.1.0"

__all__ = [
    "LatticeSpec",
    "InteractionTable",
    "build_interactions",
    "Worldline",
    "Configuration",
    "QmcParams",
    "Schedule",
    "run",
    "seeded_run",
    "ObservableSeries",
    "__version__",
]
