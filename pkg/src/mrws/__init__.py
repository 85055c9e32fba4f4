"""Nonlocal Leray-Lions diffusion with nonhomogeneous Neumann boundary
conditions on finite metric random walk spaces."""

from ._core import BACKEND as kernel_backend
from .analysis import (
    PoincareReport,
    boundary_contraction_check,
    boundary_poincare_p2,
    build_counterexample,
    lm_infinity_norm,
    poincare_p2,
    poincare_probe,
    subdifferential_gap_p2,
)
from .calculus import (
    Field,
    IdentityReport,
    check_greens_identities,
    compose_closure_field,
    dirichlet_energy,
    m_divergence,
    neumann_flux,
    nonlocal_gradient,
    smoothed_ramp,
)
from .elliptic import (
    EllipticProblem,
    SolveReport,
    SolverOptions,
    check_linf_boundary_bound,
    extend_boundary_drov,
    extend_boundary_gl,
    mass_identity_gap,
    oracle_solve,
    solve_penalized,
    solve_resolvent,
)
from .errors import ConfigError, ConstructionError, MrwsError, SolverError
from .evolution import (
    EvolutionProblem,
    Trajectory,
    accretivity_probe,
    contraction_gap,
    evolve,
    mass_ledger,
)
from .leray_lions import (
    LerayLionsMap,
    StructureReport,
    make_plaplacian,
    make_weighted_plaplacian,
    verify_structure,
)
from .space import (
    BalanceReport,
    Domain,
    GridSpec,
    Space,
    boundary_mass_into_omega,
    build_graph_space,
    build_kernel_space,
    check_balance,
    m_boundary,
    pair_integral,
)

__version__ = "0.1.0"
