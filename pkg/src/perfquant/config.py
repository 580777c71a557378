"""Run configuration: one JSON file covering every pipeline knob.

Defaults follow the documented method settings (wash-in weights 10/1 with a
100 s horizon, time-constant bounds, 10% L1 acceptance threshold, boosted
trees 200x depth-3 at learning rate 0.1).  Any key may be overridden from a
JSON file; unknown keys are rejected so typos fail loudly.
"""

import json
from dataclasses import dataclass, field, fields
from pathlib import Path

from .errors import InvalidInput, ParseError
from .fitter import FitBounds, WeightConfig
from .gbt import GbtParams
from .signature import QualityRules


@dataclass
class FitSettings:
    dispersion_floor: float = 1.0
    n_starts: int = 5
    max_iterations: int = 400
    gradient_tolerance: float = 1e-8
    step_tolerance: float = 1e-10

    def __post_init__(self):
        if self.dispersion_floor <= 0:
            raise InvalidInput("dispersion_floor must be > 0")
        if self.n_starts < 1 or self.max_iterations < 1:
            raise InvalidInput("n_starts and max_iterations must be >= 1")


@dataclass
class BoundSettings:
    """Fixed bound edges; data-scale edges (gain/delay/offset) stay adaptive
    unless pinned here."""

    tau: tuple = (0.2, 100.0)
    damping: tuple = (0.02, 15.0)
    tau_input: tuple = (150.0, 5000.0)
    gain: tuple | None = None
    delay: tuple | None = None
    offset: tuple | None = None

    def resolve(self, series) -> FitBounds:
        from .fitter import default_bounds

        bounds = default_bounds(series, tau=tuple(self.tau),
                                damping=tuple(self.damping),
                                tau_input=tuple(self.tau_input))
        overrides = {}
        for name in ("gain", "delay", "offset"):
            v = getattr(self, name)
            if v is not None:
                overrides[name] = tuple(v)
        if overrides:
            bounds = FitBounds(**{**bounds.__dict__, **overrides})
        return bounds


@dataclass
class AggregationSettings:
    p_fp: float = 0.0
    p_fn: float = 0.0
    calibrate: bool = True
    threshold: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.threshold <= 1.0:
            raise InvalidInput("threshold must lie in [0, 1]")


@dataclass
class FeatureSettings:
    # feature grid step as a fraction of the sample interval
    grid_step_fraction: float = 0.5

    def __post_init__(self):
        if not 0 < self.grid_step_fraction <= 1:
            raise InvalidInput("grid_step_fraction must lie in (0, 1]")


@dataclass
class RunConfig:
    weights: WeightConfig = field(default_factory=WeightConfig)
    bounds: BoundSettings = field(default_factory=BoundSettings)
    fit: FitSettings = field(default_factory=FitSettings)
    quality: QualityRules = field(default_factory=QualityRules)
    features: FeatureSettings = field(default_factory=FeatureSettings)
    classifier: GbtParams = field(default_factory=GbtParams)
    aggregation: AggregationSettings = field(default_factory=AggregationSettings)
    scheme: str = "two_class"
    seed: int = 0
    jobs: int = 1

    def __post_init__(self):
        if self.scheme not in ("two_class", "three_class"):
            raise InvalidInput(f"unknown scheme {self.scheme!r}")
        if self.jobs < 1:
            raise InvalidInput("jobs must be >= 1")


_SECTIONS = {
    "weights": WeightConfig,
    "bounds": BoundSettings,
    "fit": FitSettings,
    "quality": QualityRules,
    "features": FeatureSettings,
    "classifier": GbtParams,
    "aggregation": AggregationSettings,
}

_SCALARS = ("scheme", "seed", "jobs")


def _build_section(cls, doc, where):
    allowed = {f.name for f in fields(cls)}
    unknown = set(doc) - allowed
    if unknown:
        raise InvalidInput(f"unknown key(s) {sorted(unknown)} in config section "
                           f"{where!r} (allowed: {sorted(allowed)})")
    coerced = {}
    for key, val in doc.items():
        coerced[key] = tuple(val) if isinstance(val, list) else val
    return cls(**coerced)


def config_from_dict(doc: dict) -> RunConfig:
    unknown = set(doc) - set(_SECTIONS) - set(_SCALARS)
    if unknown:
        raise InvalidInput(f"unknown config key(s): {sorted(unknown)}")
    kwargs = {}
    for name, cls in _SECTIONS.items():
        if name in doc:
            if not isinstance(doc[name], dict):
                raise InvalidInput(f"config section {name!r} must be an object")
            kwargs[name] = _build_section(cls, doc[name], name)
    for name in _SCALARS:
        if name in doc:
            kwargs[name] = doc[name]
    return RunConfig(**kwargs)


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ParseError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid config JSON: {exc}", line=exc.lineno) from exc
    if not isinstance(doc, dict):
        raise InvalidInput("config root must be a JSON object")
    return config_from_dict(doc)
