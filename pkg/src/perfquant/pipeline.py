"""Batch pipeline: manifest -> fits -> signatures -> classifier dataset.

Ties the modules together for the CLI.  Region fits are independent, so the
batch step can fan out over a process pool; results are merged back in
(patient_id, roi_id) order to keep every output deterministic.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

from . import classify, fitter, ingest, signature
from .config import RunConfig
from .errors import PerfquantError


@dataclass
class RoiOutcome:
    patient_id: str
    roi_id: str
    annotation: str
    fit: fitter.FitResult | None = None
    signature: signature.Signature | None = None
    verdict: signature.QualityVerdict | None = None
    error: str = ""


def process_series(series: ingest.RoiSeries, config: RunConfig) -> RoiOutcome:
    """Fit one series and derive its signature (or the rejection verdict)."""
    outcome = RoiOutcome(patient_id=series.patient_id, roi_id=series.roi_id,
                         annotation=series.label or "normal")
    try:
        bounds = config.bounds.resolve(series)
        fit = fitter.fit(
            series, config.weights, bounds,
            n_starts=config.fit.n_starts,
            max_iterations=config.fit.max_iterations,
            gradient_tol=config.fit.gradient_tolerance,
            step_tol=config.fit.step_tolerance,
            seed=config.seed,
            dispersion_floor=config.fit.dispersion_floor,
        )
        outcome.fit = fit
        if not fit.converged:
            outcome.error = "fit_not_converged"
            return outcome
        grid_step = config.features.grid_step_fraction * series.sample_interval_s
        result = signature.build_signature(series, fit, config.quality, grid_step)
        if isinstance(result, signature.NoPrediction):
            outcome.verdict = result.verdict
        else:
            outcome.signature = result
            outcome.verdict = signature.QualityVerdict(accepted=True)
    except PerfquantError as exc:
        outcome.error = f"{type(exc).__name__}: {exc}"
    return outcome


def _process_one(args):
    series, config = args
    return process_series(series, config)


def process_manifest(manifest: ingest.CohortManifest, config: RunConfig):
    """Fit every region referenced by the manifest.

    Returns ``(outcomes, load_errors)`` where outcomes are ordered by
    (patient_id, roi_id) regardless of worker scheduling, and load_errors
    lists regions whose files could not even be parsed.
    """
    tasks = []
    load_errors = []
    for patient in sorted(manifest.patients, key=lambda p: p.patient_id):
        for ref in sorted(patient.rois, key=lambda r: r.roi_id):
            try:
                series = manifest.load_roi(patient, ref)
                tasks.append((series, config))
            except PerfquantError as exc:
                load_errors.append(RoiOutcome(
                    patient_id=patient.patient_id, roi_id=ref.roi_id,
                    annotation=ref.annotation,
                    error=f"{type(exc).__name__}: {exc}"))
    if config.jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=config.jobs) as pool:
            outcomes = list(pool.map(_process_one, tasks, chunksize=4))
    else:
        outcomes = [process_series(series, cfg) for series, cfg in tasks]
    return outcomes, load_errors


def assemble_dataset(manifest: ingest.CohortManifest,
                     outcomes) -> classify.CohortDataset:
    """Group fitted regions by patient and normalize against each patient's
    healthy reference."""
    by_patient = {}
    for out in outcomes:
        by_patient.setdefault(out.patient_id, []).append(out)
    patients = []
    for patient in sorted(manifest.patients, key=lambda p: p.patient_id):
        records = []
        for out in by_patient.get(patient.patient_id, []):
            records.append(classify.SignatureRecord(
                roi_id=out.roi_id,
                annotation=out.annotation,
                signature=out.signature,
                l1_relative_error=(out.fit.l1_relative_error if out.fit
                                   else float("inf")),
                note=out.error or (",".join(out.verdict.reasons)
                                   if out.verdict and not out.verdict.accepted
                                   else ""),
            ))
        patients.append(classify.build_patient_case(
            patient.patient_id, patient.pathology, records))
    return classify.CohortDataset(patients=patients)


FIT_HEADER = ("patient_id,roi_id,annotation,converged,n_iterations,objective,"
              "l1_relative_error,tau,damping,gain,tau_input,delay,offset,"
              "accepted,reasons,error")


def fit_results_rows(outcomes):
    """Fit results plus quality verdicts as columnar text lines."""
    lines = [FIT_HEADER]
    for out in outcomes:
        if out.fit is not None:
            p = out.fit.params
            vals = [
                "true" if out.fit.converged else "false",
                str(out.fit.n_iterations),
                repr(out.fit.objective_value),
                repr(out.fit.l1_relative_error),
                repr(p.tau), repr(p.damping), repr(p.gain),
                repr(p.tau_input), repr(p.delay), repr(p.offset),
            ]
        else:
            vals = ["false", "0"] + [""] * 8
        accepted = "true" if (out.verdict and out.verdict.accepted) else "false"
        reasons = "|".join(out.verdict.reasons) if out.verdict else ""
        lines.append(",".join(
            [out.patient_id, out.roi_id, out.annotation] + vals
            + [accepted, reasons, out.error]))
    return lines


def signature_rows(outcomes):
    return [
        signature.SignatureRow(
            patient_id=out.patient_id, roi_id=out.roi_id,
            label=out.annotation,
            accepted=out.signature is not None,
            signature=out.signature)
        for out in outcomes
    ]
