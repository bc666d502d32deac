"""Transfer-operator statistics for piecewise affine expanding maps.

Ulam discretisation of the transfer operator, invariant densities,
spectral gaps, Green-Kubo variances, twisted eigenvalues with the derived
large-deviation rate function, quasi-Hölder norms and Monte Carlo checks.
"""
__version__ = "0.1.0"

from .errors import *  # noqa: F401,F403
from .partition import Rectangle, UlamPartition, UNIT_INTERVAL
from .maps import (BUILTIN_MAPS, Branch, Observable, PiecewiseAffineMap, RegularityReport,
                   center_observable, complexity_Y, digit_observable, eta0, eta0_value,
                   expression_observable, function_observable, table_observable,
                   unit_ball_volume)
from .ulam import TransferMatrix, apply, build_ulam, duality_check, koopman, read_triplets, twist
from .spectral import (GapReport, SpectralData, VarianceReport, correlation_sequence,
                       green_kubo_variance, invariant_density, leading_eigen, spectral_gap)
from .ldp import (CltCheck, LambdaCurve, RateFunction, TwistedEigenvalue, check_derivatives,
                  clt_characteristic_check, lambda_curve, rate_function)
from .quasi_holder import (GridFunction, NormReport, algebra_constant, lasota_yorke_probe,
                           oscillation, seminorm_alpha)
from .montecarlo import (InitialLaw, TailEstimate, empirical_clt, empirical_rate_sweep,
                         exact_markov_tail, simulate_birkhoff, tail_estimate, wilson_interval)
from .config import JobConfig, parse_config, load_config
from .pipeline import RunSummary, compare_report, run_pipeline
