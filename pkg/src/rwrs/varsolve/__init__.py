"""Grid solvers for the variational constants chi, K_{D,q} and K_H(u)."""
from .grid import (
    GridFunction,
    Mollifier,
    UnderResolvedWarning,
    energy,
    make_mollifier,
    mollify,
    mollify_adjoint,
    stiffness,
)
from .phi import PhiResult, PowerCumulant, phi_gradient, phi_H
from .solvers import (
    ChiResult,
    RateProblem,
    SolveResult,
    K_from_chi,
    box_convergence_study,
    chi_from_K,
    initial_guess,
    minimize_on_sphere,
    objective,
    sandwich_violations,
    solve,
    solve_chi,
    solve_K_Dq,
    solve_K_H,
)
from .trial import TrialPoint, rescaled_K_objective, gaussian_moments, sphere_area, trial_sequence_chi_zero
