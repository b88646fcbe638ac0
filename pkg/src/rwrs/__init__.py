"""Random walk in random scenery: simulation, tail estimation and the
variational and spectral machinery behind its deviation asymptotics."""
from .kernels import StepKernel, green_function, green_growth_exponent, kernel_from_config, make_srw, periodize
from .localtimes import LocalTimeField, ScaledLocalTimes, lambda_samples, simulate_walk
from .scenery import (
    BoundedUniformScenery,
    CutScenery,
    GaussianScenery,
    WeibullTailScenery,
    kasahara_dual,
    model_from_config,
    sample_field,
)
from .spectral import PotentialProblem, TransferMatrix, discrete_dirichlet_form, principal_eigenvalue_continuum, transfer_cumulant
from .tails import ScaleRegime, TailEstimate, exact_enum, rate_table, tail_cond_gaussian, tail_naive
from .varsolve import RateProblem, solve_chi, solve_K_Dq, solve_K_H, trial_sequence_chi_zero

__version__ = "0.1.0"
