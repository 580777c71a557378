"""Synthetic cohort generation for desk-scale end-to-end testing.

Each tissue class draws its ground-truth model parameters from uniform
ranges; a region's series is the clean model response plus Gaussian noise,
with a constant per-pixel dispersion channel.  The default class profiles
encode the qualitative biology the model is meant to capture: cancerous
tissue retains the dye (slower wash-out, larger ``tau_input``) and benign
tissue fills more slowly (larger ``tau``), with disjoint ranges so the
classes are separable; :func:`overlapping_profiles` blurs them for
robustness tests.  Everything is deterministic per seed (per-patient
generators are spawned from one seed sequence).
"""

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels
from .errors import InvalidInput
from .ingest import (CohortManifest, PatientEntry, RoiRef, RoiSeries,
                     save_manifest, save_series)
from .model import PerfusionParams

PARAM_FIELDS = ("tau", "damping", "gain", "tau_input", "delay", "offset")


@dataclass(frozen=True)
class ClassProfile:
    """Uniform ground-truth parameter ranges for one tissue class."""

    tau: tuple = (8.0, 16.0)
    damping: tuple = (1.05, 1.8)
    gain: tuple = (40.0, 80.0)
    tau_input: tuple = (180.0, 260.0)
    delay: tuple = (5.0, 15.0)
    offset: tuple = (3.0, 8.0)
    noise_sigma_frac: float = 0.02   # additive noise std as a fraction of peak
    pixel_dispersion: float = 2.0    # constant per-pixel std channel

    def __post_init__(self):
        for name in PARAM_FIELDS:
            lo, hi = getattr(self, name)
            if not 0 < lo <= hi:
                raise InvalidInput(f"profile range for {name} must satisfy "
                                   f"0 < lo <= hi, got ({lo}, {hi})")
        if self.noise_sigma_frac < 0 or self.pixel_dispersion < 0:
            raise InvalidInput("noise levels must be >= 0")

    def sample_params(self, rng) -> PerfusionParams:
        vals = [rng.uniform(*getattr(self, name)) for name in PARAM_FIELDS]
        return PerfusionParams(*vals)


def default_profiles(noise_sigma_frac: float = 0.02) -> dict:
    """Disjoint class profiles: slow wash-out for cancer, slow wash-in for
    benign, both split off a common normal baseline."""
    return {
        "normal": ClassProfile(noise_sigma_frac=noise_sigma_frac),
        "benign": ClassProfile(tau=(28.0, 48.0), damping=(0.55, 0.95),
                               tau_input=(190.0, 280.0),
                               noise_sigma_frac=noise_sigma_frac),
        "cancer": ClassProfile(tau=(10.0, 20.0), damping=(1.1, 2.2),
                               gain=(55.0, 110.0), tau_input=(420.0, 640.0),
                               noise_sigma_frac=noise_sigma_frac),
    }


def overlapping_profiles(noise_sigma_frac: float = 0.05) -> dict:
    """Heavily overlapping ranges: a hardness knob for degradation tests."""
    base = dict(tau=(8.0, 40.0), damping=(0.6, 2.0), gain=(40.0, 100.0),
                delay=(5.0, 15.0), offset=(3.0, 8.0),
                noise_sigma_frac=noise_sigma_frac)
    return {
        "normal": ClassProfile(tau_input=(180.0, 420.0), **base),
        "benign": ClassProfile(tau_input=(200.0, 460.0), **base),
        "cancer": ClassProfile(tau_input=(260.0, 560.0), **base),
    }


@dataclass
class SyntheticRoi:
    series: RoiSeries
    true_params: PerfusionParams
    annotation: str


@dataclass
class SyntheticPatient:
    patient_id: str
    pathology: str
    rois: list = field(default_factory=list)


@dataclass
class SyntheticCohort:
    seed: int
    patients: list = field(default_factory=list)


def make_series(params: PerfusionParams, rng, *, sample_interval_s: float = 0.1,
                duration_s: float = 300.0, noise_sigma_frac: float = 0.0,
                pixel_dispersion: float = 2.0, patient_id: str = "",
                roi_id: str = "", label: str | None = None) -> RoiSeries:
    """One noisy series drawn from the model (intensity clipped at zero)."""
    n = int(round(duration_s / sample_interval_s)) + 1
    t = np.arange(n) * sample_interval_s
    clean = _kernels.response_curve(params.tau, params.damping, params.gain,
                                    params.tau_input, params.delay,
                                    params.offset, t)
    y = clean.copy()
    if noise_sigma_frac > 0:
        sigma = noise_sigma_frac * float(clean.max())
        y = np.clip(y + rng.normal(0.0, sigma, size=n), 0.0, None)
    dispersion = np.full(n, pixel_dispersion)
    return RoiSeries(patient_id=patient_id, roi_id=roi_id,
                     sample_interval_s=sample_interval_s, intensity=y,
                     dispersion=dispersion, label=label)


def generate_cohort(n_patients: int, rois_per_patient: int, profiles: dict,
                    seed: int, *, n_cancer: int | None = None,
                    n_normal_patients: int = 0, suspicious_fraction: float = 0.5,
                    sample_interval_s: float = 0.1,
                    duration_s: float = 300.0) -> SyntheticCohort:
    """Draw a labelled cohort.

    Cancer patients carry cancer + normal regions, benign patients benign +
    normal regions (``suspicious_fraction`` of each patient's regions are the
    suspicious ones, at least one each), and optional all-normal patients
    carry only normal regions.  The patient pathology label is cancer exactly
    when any of its regions is cancerous.
    """
    for cls in ("normal", "benign", "cancer"):
        if cls not in profiles:
            raise InvalidInput(f"profiles must define class {cls!r}")
    if n_cancer is None:
        n_cancer = max(1, round(0.4 * n_patients))
    if n_cancer + n_normal_patients > n_patients:
        raise InvalidInput("n_cancer + n_normal_patients exceeds n_patients")
    if rois_per_patient < 2:
        raise InvalidInput("need at least 2 regions per patient")

    n_susp = min(max(1, round(suspicious_fraction * rois_per_patient)),
                 rois_per_patient - 1)
    streams = np.random.SeedSequence(seed).spawn(n_patients)
    patients = []
    for i, stream in enumerate(streams):
        rng = np.random.default_rng(stream)
        if i < n_cancer:
            suspicious_class = "cancer"
        elif i < n_patients - n_normal_patients:
            suspicious_class = "benign"
        else:
            suspicious_class = None
        pid = f"p{i:03d}"
        rois = []
        for j in range(rois_per_patient):
            cls = (suspicious_class
                   if suspicious_class is not None and j < n_susp else "normal")
            profile = profiles[cls]
            params = profile.sample_params(rng)
            series = make_series(
                params, rng, sample_interval_s=sample_interval_s,
                duration_s=duration_s,
                noise_sigma_frac=profile.noise_sigma_frac,
                pixel_dispersion=profile.pixel_dispersion,
                patient_id=pid, roi_id=f"r{j:03d}", label=cls)
            rois.append(SyntheticRoi(series=series, true_params=params,
                                     annotation=cls))
        pathology = ("cancer" if any(r.annotation == "cancer" for r in rois)
                     else "benign" if any(r.annotation == "benign" for r in rois)
                     else "normal")
        patients.append(SyntheticPatient(patient_id=pid, pathology=pathology,
                                         rois=rois))
    return SyntheticCohort(seed=seed, patients=patients)


def write_cohort(cohort: SyntheticCohort, out_dir) -> Path:
    """Write the cohort as series files plus a manifest; returns the manifest
    path.  The layout matches what the ingest module reads back."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for patient in cohort.patients:
        pdir = out_dir / patient.patient_id
        pdir.mkdir(exist_ok=True)
        refs = []
        for roi in patient.rois:
            rel = f"{patient.patient_id}/{roi.series.roi_id}.csv"
            save_series(roi.series, out_dir / rel)
            refs.append(RoiRef(roi_id=roi.series.roi_id, path=rel,
                               annotation=roi.annotation))
        entries.append(PatientEntry(patient_id=patient.patient_id,
                                    pathology=patient.pathology, rois=refs))
    manifest = CohortManifest(patients=entries, root=out_dir)
    manifest_path = out_dir / "manifest.json"
    save_manifest(manifest, manifest_path)
    return manifest_path
