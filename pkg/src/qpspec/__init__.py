"""Projection-method eigensolvers for quasiperiodic Schrodinger operators."""

from .diagnostics import (
    DecayProfile,
    PhysicalSamples,
    decay_profile,
    eigenfunction_l2_error,
    eigenvalue_error,
    evaluate_physical,
    participation_ratio,
    truncation_error,
)
from .eigensolver import EigenPair, EigenPairSet, KrylovConfig, condition_estimate, residual_norm, solve_smallest
from .indicator import (
    GmresConfig,
    IndicatorRegion,
    ResolventError,
    indicator_value,
    make_square_region,
    projector_apply,
    resolvent_apply,
    validate_eigenvalues,
)
from .lattice import (
    FrequencyIndexSet,
    ProjectionMatrix,
    ResourceBudgetError,
    build_full_index_set,
    build_reduced_index_set,
    kinetic_value,
    project_wavevector,
)
from .operator import HamiltonianOperator, build_operator
from .potential import GridField, PotentialSpec, canonical_projection, parent_value, physical_value, sample_parent_grid

__version__ = "0.1.0"
