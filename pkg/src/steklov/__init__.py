"""Steklov spectra of reversible Markov generators on finite state spaces.

The boundary operator is the Schur complement of a generator onto a
boundary set ``V``; around it sit isoperimetric quantities, accelerated
generators whose spectra converge to it, Monte Carlo checks of the trace
process, and discrete-time kernel counterparts.
"""

__version__ = "0.1.0"

from .config import DEFAULT_BUDGET, DEFAULT_R_GRID, DEFAULT_TOL, Tolerances
from .errors import BudgetExceeded, SteklovError
from .markov import (
    ReversibleGenerator,
    Spectrum,
    build_generator,
    carre_du_champ,
    dirichlet_eigenvalue,
    dirichlet_form,
    generator_spectrum,
    invariant_measure,
)
from .dtn import (
    BoundaryProblem,
    SteklovOperator,
    accelerate,
    convergence_study,
    dirichlet_gap,
    dirichlet_steklov_sigma1,
    harmonic_extension,
    make_problem,
    steklov_generator,
    steklov_spectrum,
)
from .io import Instance, load_dir, load_instance, save_instance
from .isoperimetry import (
    IsoperimetricProfile,
    boundary_measure,
    connectivity_spectra,
    profile,
    ratios,
)
from .kernels import (
    MarkovKernel,
    ergodic_bound_check,
    kernel_from_generator,
    smooth_and_compare,
    steklov_kernel,
)
from .montecarlo import SimulationConfig, chi_acceleration, simulate_paths, trace_rates
from .verify import check_instance, check_many, corpus_report
from . import models
