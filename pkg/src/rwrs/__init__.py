"""Random walks in random sceneries on the 2D lattice.

Exact sparse self-intersection combinatorics, three scenery models
(iid, moving average, commuting toral automorphisms), spectral and
variance identities, joint cumulants, and finite-n experiments for the
quenched functional CLT normalization sqrt(n log n).
"""

__version__ = "0.1.0"

from .walks import (
    StepDistribution,
    DistributionReport,
    WalkPath,
    step_distribution,
    validate_distribution,
    c0_constant,
    c0_from_sigma,
    sample_path,
    ssrw,
)
from .occupation import (
    OccupationField,
    IntersectionTable,
    occupation,
    intersections,
    intersection_table,
    power_sum,
    quadruple_count,
    kernel_fourier_ratio,
    lln_table,
)
from .scenery import (
    IIDLaw,
    IIDScenery,
    MovingAverageScenery,
    ToralScenery,
    ToralAction,
    TrigPolynomial,
    rademacher,
    centered_uniform,
    gaussian,
    two_point,
    toral_action,
    trig_polynomial,
    cosine_observable,
    verify_action,
    sample_scenery,
    transported_frequency,
    exact_correlation,
    coboundary,
)
from .spectral import (
    CorrelationTable,
    correlation_table,
    spectral_density_eval,
    asymptotic_variance,
    variance_exact,
    ac0_truncate,
    PowerLawCoefficients,
)
from .cumulants import (
    set_partitions,
    joint_cumulant,
    moments_from_cumulants,
    single_cumulant,
    exact_toral_moment,
    toral_cumulant,
    finite_range_bound,
    leonov_statistic,
)
from .experiments import (
    ExperimentConfig,
    fclt_experiment,
    cross_term_diagnostic,
    newman_wright_check,
    moricz_check,
    truncation_split,
    estimate_c0,
    C_MAX,
)
from .report import Estimate, Verdict, StatReport
from .rng import stream
