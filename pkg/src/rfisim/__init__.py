"""Random function iteration ensembles with transport-metric diagnostics.

The package simulates Markov chains built from randomly selected
self-mappings on R^n, measures convergence of the iterate laws in the
Wasserstein-2 and Prokhorov-Levy metrics, certifies nonexpansiveness
properties of the update maps empirically, and fits convergence rates.
"""

from .engine import (
    Delta,
    EnsembleConfig,
    EnsembleRun,
    ExplicitCloud,
    GaussianCloud,
    boundedness_monitor,
    cesaro,
    coupled_distance_trace,
    invariant_estimate,
    simulate,
)
from .errors import (
    ConfigError,
    DimensionMismatchError,
    GaugeWindowError,
    InconclusiveError,
    InvalidSpecError,
    NumericBlowupError,
    RfisimError,
    SolverError,
    SupportCapError,
)
from .measures import Coupling, EmpiricalMeasure, W2Result, prokhorov, wasserstein2
from .operators import (
    AffineSubspace,
    Ball,
    Box,
    DeterministicMap,
    Hyperplane,
    QuadraticFn,
    compose_cyclic,
    compose_dr,
    compose_fb,
    grad_step,
    identity_map,
    project,
    projector_map,
    prox,
    reflect,
    relax,
    scale_map,
)
from .random_maps import (
    AdditiveGaussianMap,
    CategoricalRandomMap,
    DeterministicRandomMap,
    IndexSample,
    NoiseConstants,
    NoisyAffineDRMap,
    NoisyHyperplaneMap,
    ProductRandomMap,
    RandomMap,
    RngState,
    apply,
    cyclic_noisy_hyperplanes,
    noise_constants,
    sample_index,
)
from .regularity import (
    PairSampler,
    RegularityReport,
    certify_afne_expectation,
    contraction_alpha,
    dr_violation_bound,
    fb_violation_bound,
    psi2,
)
from .diagnostics import (
    LinearGauge,
    RateReport,
    SubregularityResult,
    TableGauge,
    fit_rate,
    linear_gauge_window,
    markov_discrepancy,
    subregularity_check,
    theta_envelope_fraction,
    theta_from_linear_gauge,
)

__version__ = "0.1.0"
