"""Completion of incomplete kernel matrices by the information-geometric em algorithm."""

__version__ = "0.1.0"

from .completion import (
    CompletedKernel,
    EmConfig,
    EmTrace,
    GammaPrior,
    IncompleteKernel,
    e_step,
    e_step_statistical,
    init_model,
    m_step_map,
    m_step_numeric,
    m_step_spectral,
    run_em,
)
from .errors import (
    DegenerateDirection,
    DegenerateSample,
    DivergedNumerically,
    InvalidInput,
    KernelFillError,
    NotPositiveDefinite,
    OptimizationFailed,
    SingularMatrix,
    SingularProjection,
)
from .geometry import GeodesicKind, Objective, geodesic_point, kl, numeric_min_kl
from .models import (
    AutoparallelReport,
    HarmonicMixture,
    SpectralModel,
    check_doubly_autoparallel,
    jordan_product,
    materialize,
    spectral_model_from_base,
)
