"""vscmash: mixed quantum-classical rate simulations of a single molecule
under vibrational strong coupling.

The package builds the double-well + cavity + bath model on a DVR grid,
propagates Ehrenfest or multi-state MASH trajectory ensembles with
either a classical or a Fock-quantized (polaron-transformed) cavity
mode, and extracts cavity-frequency-resolved reaction-rate profiles.
"""

from .baths import (BathModes, DrudeLorentz, EffectiveCavity, discretize,
                    effective_density, sample_wigner)
from .cavity import (FockOperators, PFSystem, build_fock_operators,
                     build_pf_bare, build_pf_polaron, pf_spectrum)
from .config import (ModelParams, RunConfig, config_from_dict, derive_params,
                     load_config)
from .dvr import (DvrGrid, NumericalError, TruncatedOperators,
                  VibrationalSolution, build_dvr_matrices, build_molecule,
                  solve_and_diabatize, truncated_operators)
from .dynamics import (HopContext, TrajectoryState, compute_delta_ab,
                       ehrenfest_step, init_quantum, initialize_trajectory,
                       make_rng, mash_alpha_beta, mash_step, run_trajectory)
from .ensemble import (EnsembleResult, NumericalFailureBudgetExceeded,
                       run_ensemble, run_sweep)
from .model import (EnergyModel, assemble_energy, build_energy_model,
                    energy_gradient)
from .rates import (PopulationSeries, RateEstimate, RateProfile,
                    RateWindowError, k_of_t, rate_estimator,
                    reactant_population, sweep_profile)
from .units import ConfigurationError, convert_units, to_lab_units

__version__ = "0.1.0"
