"""Particle dynamics inside shocks of Hamilton-Jacobi equations."""

from .admissible import (AdmissibleResult, admissible, classify_restraining, hat_L,
                         smallest_bregman_ball, surplus_rate_check)
from .convex_core import (HamiltonianModel, LagrangianView, bregman_divergence,
                          lagrangian_value, momentum_of_velocity, velocity_of_momentum,
                          young_gap)
from .errors import ShockflowError
from .lax_oleinik import (InitialData, SearchSpec, branchset_at, classify_point,
                          hopf_lax_value)
from .perturbation import (F_of_a, SecondOrderData, estimate_admissible_acceleration,
                           second_order_index_set)
from .shock_local import (Branch, BranchSet, hull_membership, relevant_indices,
                          superdifferential_of)
from .viscous import (GridSpec, ScalarField, Trajectory, coalescence_check, cole_hopf_oracle,
                      integrate_particle, solve_viscous, vanishing_viscosity_study)
from .weak_noise import (BranchField, NoiseFlowSpec, compare_J_curves, counterexample_scenario,
                         occupation_probabilities, sde_flow, self_consistent_velocities)

__version__ = "0.1.0"
