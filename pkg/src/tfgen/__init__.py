"""Gabor transforms, phase reconstruction and consistency metrics for TF audio features."""
from .errors import (
    ConventionError,
    DegenerateInputError,
    FormatError,
    IllConditionedFrameError,
    ParameterError,
    RangeError,
    ShapeError,
    TFGenError,
    UndefinedCorrelationError,
    UnsupportedSystemError,
)
from .gabor import (
    FI,
    STI,
    TI,
    Convention,
    GaborSystem,
    Signal,
    Spectrogram,
    Window,
    canonical_dual,
    convert_convention,
    dgt,
    idgt,
    make_gaussian_window,
    make_hann_window,
    make_window,
    project,
    reference_system,
    tf_ratio,
)
from .phase import (
    LogMagnitude,
    Phase,
    PhaseDerivatives,
    cumsum_phase,
    estimate_phase_derivatives,
    log_magnitude,
    measured_phase_derivatives,
    pghi,
    phaseless_reconstruct,
    reconstruct_phase,
)
from .consistency import ConsistencyReport, consistency, gamma, pearson, projection_error, rspe
from .features import FeatureTensor, batch_stats, deprocess, preprocess

__version__ = "0.1.0"
