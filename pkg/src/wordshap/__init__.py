"""Word-aligned audio segmentation and Shapley attribution toolkit."""

from .core import (
    EmissionMatrix,
    Segmentation,
    TimeSpan,
    Waveform,
    WordSegment,
    load_emissions,
    load_wav,
    save_wav,
)
from .align import CharAlignment, TranscriptMap, decompose, force_align, frames_to_seconds
from .refine import (
    RefineConfig,
    SpectralFeatures,
    aggregate_words,
    compute_features,
    refine_alignment,
    refine_boundary,
)
from .game import CoalitionGame, FunctionGame, mask_audio
from .shapley import (
    AttributionResult,
    exact_shapley,
    neyman_shapley,
    normalized_attributions,
)
from .diagnostics import (
    ConcentrationMetrics,
    PairedTestResult,
    cumulative_profile,
    entropy_norm,
    gini,
    paired_test,
    profile_resample,
    top_k_mass,
)

__version__ = "0.1.0"

__all__ = [
    "AttributionResult",
    "CharAlignment",
    "CoalitionGame",
    "ConcentrationMetrics",
    "EmissionMatrix",
    "FunctionGame",
    "PairedTestResult",
    "RefineConfig",
    "Segmentation",
    "SpectralFeatures",
    "TimeSpan",
    "TranscriptMap",
    "Waveform",
    "WordSegment",
    "aggregate_words",
    "compute_features",
    "cumulative_profile",
    "decompose",
    "entropy_norm",
    "exact_shapley",
    "force_align",
    "frames_to_seconds",
    "gini",
    "load_emissions",
    "load_wav",
    "mask_audio",
    "neyman_shapley",
    "normalized_attributions",
    "paired_test",
    "profile_resample",
    "refine_alignment",
    "refine_boundary",
    "save_wav",
    "top_k_mass",
]
