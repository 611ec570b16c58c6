"""Photon-pair 3D localization toolkit.

Simulates and analyzes two-photon interference detection: event
distributions for the polarization-tuned and non-tuned strategies,
Fisher information and Cramer-Rao bounds, seeded event generation, and
maximum-likelihood recovery of the pair offset (dx, dy, dt).
"""

from .errors import (
    ConfigError,
    ConvergenceError,
    DataFormatError,
    DegenerateInformationError,
    HomlocError,
    NumericError,
    QuadratureError,
    ValidationError,
)
from .estimator import (
    MleResult,
    ReplicationSummary,
    SearchConfig,
    log_likelihood,
    mle_fit,
    replicate,
)
from .fisher import (
    CrbReport,
    FimMethod,
    FisherMatrix,
    bucket_fisher,
    crb,
    fi_monte_carlo,
    fi_quadrature,
    fim_closed_form,
    score,
)
from .model import (
    DetectionEvent,
    DetectorGeometry,
    Offset3D,
    PolarizationSetting,
    SourceSpec,
    SpatialWidths,
    Strategy,
    bandwidths_to_widths,
    non_tuned_setting,
    pixel_to_momentum,
    tuned_setting,
    validate_polarization,
    widths_to_bandwidths,
)
from .physics import (
    Visibility,
    bucket_coincidence_probability,
    event_density,
    gamma_coefficient,
    kappa_coefficient,
    optimal_tuning,
    phase,
    spectral_density,
    tuning_condition,
    visibility,
)
from .sampler import (
    EmpiricalCheckReport,
    EventBatch,
    empirical_check,
    load_events,
    sample_batch,
    save_events,
    scenario_digest,
)

__version__ = "0.1.0"
