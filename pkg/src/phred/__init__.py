"""Structure-preserving reduction of port-Hamiltonian models.

Fits a parameterized low-order port-Hamiltonian model to a full model by
minimizing a level-set loss over frequency samples, bisecting the target
level, and adaptively refining the sample set in log frequency.
"""

from .core import (
    DimensionError,
    InvariantError,
    PHSystem,
    SingularResolventError,
    ThetaVector,
    assemble,
    extract,
    hamiltonian,
    load_system,
    save_system,
    theta_length,
    transfer_eval,
)
from .freq import ErrorFunction, hinf_estimate
from .greedy import InterpolationState, RankDeficiencyError, greedy_init, theta_from_init
from .objective import LossContext, NonsmoothPointWarning, loss, loss_and_gradient, loss_gradient
from .optimizer import (
    GammaBracket,
    MinimizeOptions,
    MinimizeResult,
    ReductionReport,
    minimize_loss,
    reduce,
)
from .sampling import GrowthLimitError, SampleSet, adapt_samples, interval_needs_split, log_midpoint
from .bench import MSDConfig, msd_chain

__version__ = "0.1.0"
