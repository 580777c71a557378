"""Loading, validation and aggregation of region-of-interest time-series.

A region of interest (ROI) is observed as a stack of small pixel patches,
one per video frame.  Per frame the pixel brightness is aggregated into a
mean (the intensity sample) and a population standard deviation (the
dispersion sample, a data-quality measure later used to weight the curve
fit).  Series are exchanged on disk as comma-separated text with header
``t,intensity,dispersion``; a cohort is described by a JSON manifest listing
each patient's pathology label and ROI files.
"""

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import InvalidInput, ParseError

LABELS = ("normal", "benign", "cancer")

SERIES_HEADER = "t,intensity,dispersion"

# Relative slack when checking that the time column has a fixed step.
_STEP_RTOL = 1e-6


@dataclass
class RoiSeries:
    """One ROI's intensity time-series with per-sample dispersion.

    Samples are taken at ``t = 0, dt, 2*dt, ...`` where t = 0 is the dye
    injection time.  ``intensity`` and ``dispersion`` have equal length >= 2,
    all values finite, intensity >= 0.
    """

    patient_id: str
    roi_id: str
    sample_interval_s: float
    intensity: np.ndarray
    dispersion: np.ndarray
    label: str | None = None

    def __post_init__(self):
        self.intensity = np.asarray(self.intensity, dtype=np.float64)
        self.dispersion = np.asarray(self.dispersion, dtype=np.float64)
        if self.intensity.ndim != 1 or self.dispersion.ndim != 1:
            raise InvalidInput("intensity and dispersion must be 1-d")
        if len(self.intensity) != len(self.dispersion):
            raise InvalidInput(
                f"length mismatch: {len(self.intensity)} intensity vs "
                f"{len(self.dispersion)} dispersion samples"
            )
        if len(self.intensity) < 2:
            raise InvalidInput("a series needs at least 2 samples")
        if not self.sample_interval_s > 0:
            raise InvalidInput(f"sample interval must be > 0, got {self.sample_interval_s}")
        if not np.all(np.isfinite(self.intensity)) or np.any(self.intensity < 0):
            raise InvalidInput("intensity values must be finite and >= 0")
        if not np.all(np.isfinite(self.dispersion)) or np.any(self.dispersion < 0):
            raise InvalidInput("dispersion values must be finite and >= 0")
        if self.label is not None and self.label not in LABELS:
            raise InvalidInput(f"unknown label {self.label!r}, expected one of {LABELS}")

    def __len__(self):
        return len(self.intensity)

    @property
    def duration_s(self) -> float:
        return (len(self.intensity) - 1) * self.sample_interval_s

    @property
    def times(self) -> np.ndarray:
        return np.arange(len(self.intensity)) * self.sample_interval_s


@dataclass
class PixelBlock:
    """Per-frame pixel brightness matrices for one ROI, plus frame times."""

    frames: np.ndarray      # (n_frames, height, width)
    timestamps: np.ndarray  # (n_frames,), strictly increasing
    patient_id: str = ""
    roi_id: str = ""

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64)
        self.timestamps = np.asarray(self.timestamps, dtype=np.float64)
        if self.frames.ndim != 3:
            raise InvalidInput("frames must be (n_frames, height, width)")
        if self.frames.shape[0] == 0:
            raise InvalidInput("block has no frames")
        if self.frames.shape[1] == 0 or self.frames.shape[2] == 0:
            raise InvalidInput("frames are empty (zero pixels)")
        if self.timestamps.shape != (self.frames.shape[0],):
            raise InvalidInput("one timestamp per frame required")
        if np.any(np.diff(self.timestamps) <= 0):
            raise InvalidInput("timestamps must be strictly increasing")


def aggregate_pixels(block: PixelBlock) -> RoiSeries:
    """Collapse a pixel block to a mean/std series.

    Per frame the intensity is the mean pixel brightness and the dispersion
    the population standard deviation across the same pixels.  The frame
    timestamps must be uniformly spaced (the series format has a fixed step).
    """
    if block.frames.shape[0] < 2:
        raise InvalidInput("need at least 2 frames to form a series")
    steps = np.diff(block.timestamps)
    dt = float(steps[0])
    if np.any(np.abs(steps - dt) > _STEP_RTOL * max(dt, 1.0)):
        raise InvalidInput("frame timestamps are not uniformly spaced")
    flat = block.frames.reshape(block.frames.shape[0], -1)
    intensity = flat.mean(axis=1)
    dispersion = flat.std(axis=1)  # population std: the ROI is the whole population
    return RoiSeries(
        patient_id=block.patient_id,
        roi_id=block.roi_id,
        sample_interval_s=dt,
        intensity=intensity,
        dispersion=dispersion,
    )


def threshold_dispersion(series: RoiSeries, floor: float = 1.0) -> RoiSeries:
    """Clamp dispersion from below so later division by it is safe.

    Idempotent for any floor; returns a new series, inputs are not mutated.
    """
    if not floor > 0:
        raise InvalidInput(f"dispersion floor must be > 0, got {floor}")
    return replace(series, dispersion=np.maximum(series.dispersion, floor))


# --------------------------------------------------------------------------
# series files
# --------------------------------------------------------------------------

def save_series(series: RoiSeries, path):
    """Write a series as ``t,intensity,dispersion`` rows (round-trip exact)."""
    path = Path(path)
    lines = [SERIES_HEADER]
    dt = series.sample_interval_s
    for k in range(len(series)):
        lines.append(f"{k * dt!r},{float(series.intensity[k])!r},"
                     f"{float(series.dispersion[k])!r}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_series(path, fmt: str = "csv", patient_id: str = "", roi_id: str = "",
                label: str | None = None) -> RoiSeries:
    """Parse a series file, checking every row.

    Raises :class:`ParseError` with the offending 1-based line number for
    malformed rows, non-monotone or non-uniform time, or negative values.
    """
    if fmt != "csv":
        raise InvalidInput(f"unknown series format {fmt!r}")
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    lines = text.splitlines()
    if not lines:
        raise ParseError("empty file", line=1)
    header = lines[0].replace(" ", "")
    if header != SERIES_HEADER:
        raise ParseError(f"expected header {SERIES_HEADER!r}, got {lines[0]!r}", line=1)

    times, intensity, dispersion = [], [], []
    for lineno, raw in enumerate(lines[1:], start=2):
        if not raw.strip():
            continue
        parts = raw.split(",")
        if len(parts) != 3:
            raise ParseError(f"expected 3 columns, got {len(parts)}", line=lineno)
        try:
            t, i, d = (float(p) for p in parts)
        except ValueError as exc:
            raise ParseError(f"non-numeric value in {raw!r}", line=lineno) from exc
        if not (math.isfinite(t) and math.isfinite(i) and math.isfinite(d)):
            raise ParseError("non-finite value", line=lineno)
        if i < 0:
            raise ParseError(f"negative intensity {i}", line=lineno)
        if d < 0:
            raise ParseError(f"negative dispersion {d}", line=lineno)
        if times and t <= times[-1]:
            raise ParseError(f"time not increasing ({t} after {times[-1]})", line=lineno)
        times.append(t)
        intensity.append(i)
        dispersion.append(d)

    if len(times) < 2:
        raise ParseError("need at least 2 data rows", line=len(lines))
    if abs(times[0]) > _STEP_RTOL:
        raise ParseError(f"time axis must start at 0, got {times[0]}", line=2)
    dt = times[1] - times[0]
    for k in range(1, len(times)):
        if abs(times[k] - k * dt) > _STEP_RTOL * max(dt, 1.0):
            raise ParseError(f"non-uniform time step at t={times[k]}", line=k + 2)
    try:
        return RoiSeries(patient_id=patient_id, roi_id=roi_id,
                         sample_interval_s=dt, intensity=np.array(intensity),
                         dispersion=np.array(dispersion), label=label)
    except InvalidInput as exc:
        raise ParseError(str(exc)) from exc


# --------------------------------------------------------------------------
# cohort manifest
# --------------------------------------------------------------------------

@dataclass
class RoiRef:
    roi_id: str
    path: str          # relative to the manifest file
    annotation: str    # surgeon label for the region

    def __post_init__(self):
        if self.annotation not in LABELS:
            raise InvalidInput(
                f"unknown annotation {self.annotation!r} for roi {self.roi_id!r}")


@dataclass
class PatientEntry:
    patient_id: str
    pathology: str     # case-level label from post-operative analysis
    rois: list

    def __post_init__(self):
        if self.pathology not in LABELS:
            raise InvalidInput(
                f"unknown pathology {self.pathology!r} for patient {self.patient_id!r}")


@dataclass
class CohortManifest:
    """Patients with pathology labels and references to their ROI files."""

    patients: list
    root: Path = field(default_factory=Path)

    def __post_init__(self):
        ids = [p.patient_id for p in self.patients]
        if len(set(ids)) != len(ids):
            raise InvalidInput("patient ids must be unique")

    def roi_path(self, ref: RoiRef) -> Path:
        return self.root / ref.path

    def load_roi(self, patient: PatientEntry, ref: RoiRef) -> RoiSeries:
        return load_series(self.roi_path(ref), patient_id=patient.patient_id,
                           roi_id=ref.roi_id, label=ref.annotation)


def save_manifest(manifest: CohortManifest, path):
    path = Path(path)
    doc = {
        "patients": [
            {
                "patient_id": p.patient_id,
                "pathology": p.pathology,
                "rois": [
                    {"roi_id": r.roi_id, "path": r.path, "annotation": r.annotation}
                    for r in p.rois
                ],
            }
            for p in manifest.patients
        ]
    }
    path.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


def load_manifest(path) -> CohortManifest:
    """Read a manifest and verify every referenced series file exists."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid manifest JSON: {exc}", line=exc.lineno) from exc
    try:
        patients = [
            PatientEntry(
                patient_id=p["patient_id"],
                pathology=p["pathology"],
                rois=[RoiRef(roi_id=r["roi_id"], path=r["path"],
                             annotation=r["annotation"]) for r in p["rois"]],
            )
            for p in doc["patients"]
        ]
    except (KeyError, TypeError) as exc:
        raise ParseError(f"manifest missing field: {exc}") from exc
    manifest = CohortManifest(patients=patients, root=path.parent)
    for p in manifest.patients:
        for r in p.rois:
            f = manifest.roi_path(r)
            if not f.is_file():
                raise ParseError(f"referenced series file missing: {f}")
    return manifest
