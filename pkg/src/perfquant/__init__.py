"""Perfusion quantification from fluorescence intensity time-series.

Fits a second-order bio-physical response model to region-of-interest
intensity curves, derives a twelve-feature tumour signature (time-to-peak
plus three-exponential modal features), and classifies tissue regions with
patient-level aggregation and leave-one-out evaluation.  A synthetic cohort
generator makes the whole pipeline testable without clinical data.
"""

from ._accel import using_numba
from .classify import (CaseAggregationConfig, CohortDataset, EvalReport,
                       NormalizedSignature, aggregate_case, loo_evaluate,
                       normalize, predict, train)
from .fitter import (FitBounds, FitResult, WeightConfig, default_bounds, fit,
                     initialize, objective, weight)
from .gbt import GbtClassifier, GbtParams
from .ingest import (CohortManifest, PixelBlock, RoiSeries, aggregate_pixels,
                     load_manifest, load_series, save_series,
                     threshold_dispersion)
from .model import (ModalDecomposition, PerfusionParams, decompose,
                    ode_oracle, response)
from .signature import (NoPrediction, QualityRules, QualityVerdict, Signature,
                        build_signature, exp_features, quality_filter,
                        ttp_features)
from .synth import (ClassProfile, default_profiles, generate_cohort,
                    overlapping_profiles, write_cohort)

__version__ = "0.1.0"

__all__ = [
    "CaseAggregationConfig", "ClassProfile", "CohortDataset", "CohortManifest",
    "EvalReport", "FitBounds", "FitResult", "GbtClassifier", "GbtParams",
    "ModalDecomposition", "NoPrediction", "NormalizedSignature",
    "PerfusionParams", "PixelBlock", "QualityRules", "QualityVerdict",
    "RoiSeries", "Signature", "WeightConfig", "aggregate_case",
    "aggregate_pixels", "build_signature", "decompose", "default_bounds",
    "default_profiles", "exp_features", "fit", "generate_cohort", "initialize",
    "load_manifest", "load_series", "loo_evaluate", "normalize", "objective",
    "ode_oracle", "overlapping_profiles", "predict", "quality_filter",
    "response", "save_series", "threshold_dispersion", "train", "ttp_features",
    "using_numba", "weight", "write_cohort",
]
