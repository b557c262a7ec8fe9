"""PAC-Bayes generalization certificates for models averaged over group orbits."""

from .averaging import (
    ParameterProjection, average_function, build_parameter_projection, check_equivariant, check_fixed_point,
    check_idempotent, equivariant_family,
)
from .bounds import (
    BoundInputs, BoundReport, PosteriorSpec, build_prior, complexity_term, improved_bound, mcallester_bound,
    mcallester_rhs, optimize_posterior, representative_bound, validity_trial,
)
from .data import Dataset, GenerativeSpec, Noise, builtin_scenario, load_dataset, save_dataset
from .errors import (
    ClosureNotCertified, ConfigError, DatasetFormatError, NonCanonicalRow, NonFreeOrbit, NotIdempotent,
    NotInDomain, ShiftOutOfWindow,
)
from .estimators import PacBayesRegressor
from .families import LinearFamily, Predictor, TabularFamily, TiedFamily
from .groups import FiniteGroupTable, GroupAction, OrbitResolver, ShiftGroup, verify_group_axioms
from .kernels import GroupKernel, KernelEstimator, estimate_kernel, uniform_kernel
from .measures import (
    DiscreteMeasure, GaussianMeasure, kl_decompose_discrete, kl_decompose_gaussian, kl_discrete, kl_gaussian,
    pushforward_discrete, pushforward_gaussian,
)
from .risk import (
    LossFn, RiskEstimate, empirical_risk, posterior_expected_risk, risk_on_representatives, true_risk_enumerate,
    true_risk_mc,
)

__version__ = "0.1.0"
