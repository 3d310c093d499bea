"""Exceedance probabilities for the maximum of a sum of squared Gaussian
processes over a grid: asymptotic formula, Pickands constants, simulation."""

__version__ = "0.1.0"

from .errors import (  # noqa: F401
    ChisqExtremesError, DomainError, ModelError, NotPositiveDefiniteError, NumericalError, ParameterError,
    ResourceError, TableRangeError,
)
from .gaussian_sim import (  # noqa: F401
    CovKernel, Grid, PathBatch, build_cov_matrix, cholesky_sample, fbm_sample, ou_kernel,
)
from .mc import MCEstimate, convergence_ladder, exp_power_model, ou_model, sup_exceedance_mc  # noqa: F401
from .pickands import (  # noqa: F401
    PickandsEstimate, PickandsParams, PickandsTable, estimate_pickands, pickands_table, reduce_to_unit_scale,
)
from .scanstat import (  # noqa: F401
    ScanWindow, edge_count_cov, local_variance_coeffs, pvalue_mc, pvalue_asymptotic, verify_local_stationarity,
)
from .tail import GridSpec, LocalModel, TailApproximation, chi_square_tail, sphere_integral, grid_tail_approx  # noqa: F401
