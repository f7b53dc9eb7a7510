"""Oneshot differentially private top-k selection with the Laplace mechanism.

Also provides exact and Monte Carlo privacy audits on small instances, and
private top-k ranking from pairwise comparisons.
"""

from .errors import (
    ConstraintError,
    ConvergenceError,
    InvalidParameterError,
    NumericError,
    ResourceError,
)
from .mechanisms import (
    PrivacyParams,
    TopKSelection,
    calibrate_approx,
    calibrate_pure,
    gumbel_oneshot_select,
    oneshot_select_max,
    oneshot_select_min,
    peeling_select,
    report_noisy_min,
)
from .noise import NoiseScale, RngState, sample_gumbel, sample_laplace

__version__ = "0.1.0"
