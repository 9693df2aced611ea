"""Discover hydrodynamic PDEs from quantum lattice dynamics.

Pipeline: simulate exactly solvable lattice models (or ingest external
data), build derivative fields, evaluate a symbolic candidate-term library
on the grid, select a sparse PDE by L0-penalized regression, then integrate
the discovered equation forward and compare against the source data.
"""

from .errors import ConfigError, DataError, HydrolearnError, NumericsError
from .field_store import Dataset, Field, Grid, read_dataset, window, write_dataset
from .preprocess import (
    DerivativeSpec,
    SmootherSpec,
    differentiate,
    resample_time,
    smooth,
    trim_mask,
    velocity_from_density,
)
from .quantum_sim import (
    FermionModel,
    MagnonModel,
    WavePacket,
    fermion_domain_wall,
    fermion_evolve,
    fermion_ground_state,
)
from .term_library import (
    Library,
    Signature,
    Term,
    evaluate,
    filter_by_signature,
    generate_terms,
    parse_term,
    render_equation,
    render_term,
    signature,
)
from .sparse_regress import (
    DiscoveredPDE,
    Frontier,
    RegressionProblem,
    batch_uncertainty,
    brute_force,
    cross_entropy,
    frontier_scan,
    least_squares,
    refine_mu,
    stridge,
)
from .pde_forward import PDESystem, SolveReport, compare, solve

__version__ = "0.1.0"
