"""Signature classification with healthy-reference normalization.

Per-patient feature normalization divides rate-like features by the
patient's healthy-reference values and subtracts the reference from the
timing features, removing patient-level offsets.  A boosted-tree classifier
predicts region labels either over all three tissue classes or, in the
two-class scheme, over suspicious regions only (cancer vs benign).  Patient
predictions are aggregated with a noisy-OR rule over the region predictions,
and the whole pipeline is scored with leave-one-patient-out evaluation.
"""

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (EvalError, NoPredictionForCase, NormalizationError,
                     PredictError, TrainingError)
from .gbt import GbtClassifier, GbtParams
from .signature import (ABSOLUTE_FEATURES, AMPLITUDE_FEATURES, FEATURE_NAMES,
                        RATE_FEATURES, Signature)

SUSPICIOUS = ("benign", "cancer")


@dataclass(frozen=True)
class NormalizedSignature:
    """Signature expressed relative to the patient's healthy reference."""

    t_max: float
    t_half_max: float
    t_ratio: float
    slope: float
    lambda1_neg: float
    re_lambda2_neg: float
    re_lambda3_neg: float
    im_lambda2: float
    a1: float
    re_a2: float
    re_a3: float
    im_a2: float
    reference_id: str = ""

    def feature_vector(self) -> np.ndarray:
        return np.array([getattr(self, n) for n in FEATURE_NAMES], dtype=np.float64)


def normalize(sig: Signature, healthy_ref: Signature,
              reference_id: str = "") -> NormalizedSignature:
    """Normalize one signature against a same-patient healthy reference.

    Rate features become ratios to the reference (a zero reference rate is
    an error), timing features become differences.  The mode coefficients
    and the oscillation frequency scale with the gain, so they normalize as
    ratios too, except that a reference value of exactly zero (a
    non-oscillating reference region) falls back to the difference so
    oscillating regions remain representable.
    """
    out = {}
    for name in RATE_FEATURES:
        ref = getattr(healthy_ref, name)
        if ref == 0:
            raise NormalizationError(f"reference rate feature {name} is zero")
        out[name] = getattr(sig, name) / ref
    for name in AMPLITUDE_FEATURES:
        ref = getattr(healthy_ref, name)
        if ref == 0:
            out[name] = getattr(sig, name) - ref
        else:
            out[name] = getattr(sig, name) / ref
    for name in ABSOLUTE_FEATURES:
        out[name] = getattr(sig, name) - getattr(healthy_ref, name)
    if not all(np.isfinite(v) for v in out.values()):
        raise NormalizationError("normalized features are not finite")
    return NormalizedSignature(reference_id=reference_id, **out)


# --------------------------------------------------------------------------
# cohort dataset
# --------------------------------------------------------------------------

@dataclass
class RoiSample:
    """One region as seen by the classifier."""

    roi_id: str
    annotation: str                      # surgeon label
    features: np.ndarray | None = None   # normalized 12-vector; None = no prediction
    note: str = ""                       # why features are missing


@dataclass
class PatientCase:
    patient_id: str
    pathology: str
    samples: list = field(default_factory=list)

    def usable(self, scheme: str):
        """Samples that participate in the given classification scheme."""
        keep = SUSPICIOUS if scheme == "two_class" else ("normal",) + SUSPICIOUS
        return [s for s in self.samples
                if s.features is not None and s.annotation in keep]


@dataclass
class CohortDataset:
    """Patients with normalized, classifier-ready region samples."""

    patients: list = field(default_factory=list)


@dataclass
class SignatureRecord:
    """Assembly input: one region's signature (or None) plus fit quality."""

    roi_id: str
    annotation: str
    signature: Signature | None
    l1_relative_error: float = float("inf")
    note: str = ""


def select_healthy_reference(records) -> SignatureRecord | None:
    """The accepted healthy region with the best (lowest) L1 fit error."""
    best = None
    for rec in records:
        if rec.annotation != "normal" or rec.signature is None:
            continue
        if best is None or rec.l1_relative_error < best.l1_relative_error:
            best = rec
    return best


def build_patient_case(patient_id: str, pathology: str, records) -> PatientCase:
    """Normalize a patient's accepted signatures against its healthy
    reference; without a reference every region is left unpredictable."""
    ref = select_healthy_reference(records)
    samples = []
    for rec in records:
        if rec.signature is None:
            samples.append(RoiSample(rec.roi_id, rec.annotation, None,
                                     rec.note or "no_signature"))
        elif ref is None:
            samples.append(RoiSample(rec.roi_id, rec.annotation, None,
                                     "no_healthy_reference"))
        else:
            try:
                nsig = normalize(rec.signature, ref.signature, ref.roi_id)
                samples.append(RoiSample(rec.roi_id, rec.annotation,
                                         nsig.feature_vector()))
            except NormalizationError as exc:
                samples.append(RoiSample(rec.roi_id, rec.annotation, None,
                                         f"normalization_failed: {exc}"))
    return PatientCase(patient_id=patient_id, pathology=pathology, samples=samples)


# --------------------------------------------------------------------------
# training / prediction
# --------------------------------------------------------------------------

SCHEMES = ("two_class", "three_class")


def _check_scheme(scheme):
    if scheme not in SCHEMES:
        raise EvalError(f"unknown scheme {scheme!r}, expected one of {SCHEMES}")


def train(samples, scheme: str = "two_class",
          params: GbtParams | None = None, seed: int = 0) -> GbtClassifier:
    """Train the region classifier.

    ``samples`` is an iterable of (NormalizedSignature, label) pairs.  The
    two-class scheme keeps suspicious regions only.
    """
    _check_scheme(scheme)
    X, y = [], []
    for sig, label in samples:
        if scheme == "two_class" and label not in SUSPICIOUS:
            continue
        X.append(sig if isinstance(sig, np.ndarray) else sig.feature_vector())
        y.append(label)
    if not X:
        raise TrainingError("no usable training samples for this scheme")
    return GbtClassifier.train(np.asarray(X), y, params=params, seed=seed)


def predict(model: GbtClassifier, sig) -> dict:
    """Class probabilities for one normalized signature."""
    vec = sig if isinstance(sig, np.ndarray) else sig.feature_vector()
    if not np.all(np.isfinite(vec)):
        raise PredictError("feature vector contains non-finite entries")
    prob = model.predict_proba(vec)
    return dict(zip(model.classes, (float(p) for p in prob)))


# --------------------------------------------------------------------------
# noisy-OR case aggregation
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class CaseAggregationConfig:
    """Region-level error rates feeding the case aggregation (0 until a
    validation sample has been used to estimate them)."""

    p_fp: float = 0.0
    p_fn: float = 0.0

    def __post_init__(self):
        if not (0.0 <= self.p_fp <= 1.0 and 0.0 <= self.p_fn <= 1.0):
            raise EvalError("error rates must lie in [0, 1]")


def aggregate_case(n: int, c: int, cfg: CaseAggregationConfig | None = None) -> float:
    """Patient-level cancer probability from region predictions.

    ``c`` of ``n`` predicted regions were called cancerous; the false
    positive/negative rates discount resp. rescue those calls:
    P = (c/n)(1 - p_fp) + ((n-c)/n) p_fn.
    """
    cfg = cfg or CaseAggregationConfig()
    if n < 1:
        raise NoPredictionForCase("no predicted regions for this case")
    if not 0 <= c <= n:
        raise EvalError(f"need 0 <= c <= n, got c={c}, n={n}")
    return (c / n) * (1.0 - cfg.p_fp) + ((n - c) / n) * cfg.p_fn


# --------------------------------------------------------------------------
# leave-one-out evaluation
# --------------------------------------------------------------------------

@dataclass
class PatientPrediction:
    patient_id: str
    pathology: str
    n_predicted: int
    n_predicted_cancer: int
    n_roi_correct: int
    p_fp: float
    p_fn: float
    case_probability: float | None     # None when no region was predictable
    predicted_cancer: bool | None


@dataclass
class EvalReport:
    scheme: str
    roi_accuracy: float
    case_accuracy: float
    sensitivity: float
    specificity: float
    case_confusion: dict               # tp / fp / tn / fn at patient level
    roi_confusion: dict                # (true, predicted) -> count
    per_patient: list = field(default_factory=list)
    n_rois_predicted: int = 0
    n_rois_without_prediction: int = 0
    n_patients_without_prediction: int = 0

    def to_dict(self):
        return {
            "scheme": self.scheme,
            "roi_accuracy": self.roi_accuracy,
            "case_accuracy": self.case_accuracy,
            "sensitivity": self.sensitivity,
            "specificity": self.specificity,
            "case_confusion": dict(self.case_confusion),
            "roi_confusion": {f"{t}->{p}": c for (t, p), c in
                              sorted(self.roi_confusion.items())},
            "n_rois_predicted": self.n_rois_predicted,
            "n_rois_without_prediction": self.n_rois_without_prediction,
            "n_patients_without_prediction": self.n_patients_without_prediction,
            "per_patient": [
                {
                    "patient_id": p.patient_id,
                    "pathology": p.pathology,
                    "n_predicted": p.n_predicted,
                    "n_predicted_cancer": p.n_predicted_cancer,
                    "n_roi_correct": p.n_roi_correct,
                    "p_fp": p.p_fp,
                    "p_fn": p.p_fn,
                    "case_probability": p.case_probability,
                    "predicted_cancer": p.predicted_cancer,
                }
                for p in self.per_patient
            ],
        }

    def text_table(self) -> str:
        rows = [
            ("Scheme", self.scheme),
            ("Mean ROI accuracy", f"{100 * self.roi_accuracy:.2f}%"),
            ("Case accuracy", f"{100 * self.case_accuracy:.2f}%"),
            ("Sensitivity", f"{100 * self.sensitivity:.2f}%"),
            ("Specificity", f"{100 * self.specificity:.2f}%"),
        ]
        width = max(len(k) for k, _ in rows)
        return "\n".join(f"{k:<{width}}  {v}" for k, v in rows)


def _training_pairs(patients, scheme):
    pairs = []
    for case in patients:
        for s in case.usable(scheme):
            pairs.append((s.features, s.annotation))
    return pairs


def _predict_patient(model, case: PatientCase, scheme):
    """(annotation, predicted label) per usable region of one patient."""
    outcomes = []
    for s in case.usable(scheme):
        label = model.predict_label(s.features)[0]
        outcomes.append((s.annotation, label))
    return outcomes


DEFAULT_GRID = (
    {"max_depth": 2, "learning_rate": 0.1},
    {"max_depth": 3, "learning_rate": 0.1},
    {"max_depth": 3, "learning_rate": 0.05, "n_rounds": 400},
    {"max_depth": 4, "learning_rate": 0.1},
)


def grid_search(patients, scheme: str = "two_class", grid=DEFAULT_GRID,
                base: GbtParams | None = None):
    """Pick boosted-tree hyper-parameters by held-out region accuracy.

    Each candidate overrides fields of ``base`` and is scored with a
    leave-one-patient-out pass over ``patients``; the first candidate with
    the best pooled region accuracy wins.  Returns (params, accuracy).
    """
    _check_scheme(scheme)
    base = base or GbtParams()
    best = None
    for overrides in grid:
        params = GbtParams(**{**base.__dict__, **overrides})
        correct = total = 0
        for i, held in enumerate(patients):
            rest = patients[:i] + patients[i + 1:]
            try:
                model = train(_training_pairs(rest, scheme), scheme, params)
            except TrainingError:
                continue
            for annotation, label in _predict_patient(model, held, scheme):
                total += 1
                correct += int(annotation == label)
        accuracy = correct / total if total else 0.0
        if best is None or accuracy > best[1]:
            best = (params, accuracy)
    return best


def estimate_error_rates(patients, scheme: str,
                         params: GbtParams | None = None) -> CaseAggregationConfig:
    """Inner leave-one-out over the training patients to estimate the
    region-level false positive/negative cancer rates."""
    fp = fn = tn = tp = 0
    for i, held in enumerate(patients):
        rest = patients[:i] + patients[i + 1:]
        pairs = _training_pairs(rest, scheme)
        try:
            model = train(pairs, scheme, params)
        except TrainingError:
            continue
        for annotation, label in _predict_patient(model, held, scheme):
            truth = annotation == "cancer"
            pred = label == "cancer"
            if truth and pred:
                tp += 1
            elif truth:
                fn += 1
            elif pred:
                fp += 1
            else:
                tn += 1
    p_fp = fp / (fp + tn) if fp + tn else 0.0
    p_fn = fn / (fn + tp) if fn + tp else 0.0
    return CaseAggregationConfig(p_fp=p_fp, p_fn=p_fn)


def loo_evaluate(cohort: CohortDataset, scheme: str = "two_class", seed: int = 0,
                 *, clf_params: GbtParams | None = None,
                 agg: CaseAggregationConfig | None = None,
                 calibrate: bool = True, threshold: float = 0.5) -> EvalReport:
    """Leave-one-patient-out evaluation of the full classification pipeline.

    For every patient a model is trained on the remaining patients (whose
    regions, healthy references included, are the only data the fold sees),
    the held-out patient's regions are predicted, and a noisy-OR aggregate
    decides the case label.  When ``calibrate`` is set, the aggregation
    error rates are re-estimated per fold by an inner leave-one-out over the
    training patients; otherwise ``agg`` (default: zero rates) is used.
    """
    _check_scheme(scheme)
    patients = cohort.patients
    if len(patients) < 3:
        raise EvalError(f"need >= 3 patients for leave-one-out, got {len(patients)}")
    case_truth = {p.patient_id: p.pathology == "cancer" for p in patients}
    if len(set(case_truth.values())) < 2:
        raise EvalError("need both cancer and non-cancer patients")

    roi_confusion = {}
    per_patient = []
    n_pred_total = n_correct_total = n_unpredicted = 0
    tp = fp = tn = fn = 0
    n_patients_without = 0

    for i, held in enumerate(patients):
        rest = patients[:i] + patients[i + 1:]
        rates = (estimate_error_rates(rest, scheme, clf_params) if calibrate
                 else (agg or CaseAggregationConfig()))
        model = train(_training_pairs(rest, scheme), scheme, clf_params, seed)
        outcomes = _predict_patient(model, held, scheme)

        scheme_pool = SUSPICIOUS if scheme == "two_class" else ("normal",) + SUSPICIOUS
        n_unpredicted += sum(1 for s in held.samples
                             if s.annotation in scheme_pool and s.features is None)

        n_pred = len(outcomes)
        n_cancer = sum(1 for _, label in outcomes if label == "cancer")
        n_correct = sum(1 for truth, label in outcomes if truth == label)
        for truth, label in outcomes:
            roi_confusion[(truth, label)] = roi_confusion.get((truth, label), 0) + 1
        n_pred_total += n_pred
        n_correct_total += n_correct

        if n_pred == 0:
            n_patients_without += 1
            per_patient.append(PatientPrediction(
                held.patient_id, held.pathology, 0, 0, 0,
                rates.p_fp, rates.p_fn, None, None))
            continue

        prob = aggregate_case(n_pred, n_cancer, rates)
        predicted = prob >= threshold
        truth = case_truth[held.patient_id]
        if truth and predicted:
            tp += 1
        elif truth:
            fn += 1
        elif predicted:
            fp += 1
        else:
            tn += 1
        per_patient.append(PatientPrediction(
            held.patient_id, held.pathology, n_pred, n_cancer, n_correct,
            rates.p_fp, rates.p_fn, prob, bool(predicted)))

    n_cases = tp + fp + tn + fn
    report = EvalReport(
        scheme=scheme,
        roi_accuracy=n_correct_total / n_pred_total if n_pred_total else 0.0,
        case_accuracy=(tp + tn) / n_cases if n_cases else 0.0,
        sensitivity=tp / (tp + fn) if tp + fn else 0.0,
        specificity=tn / (tn + fp) if tn + fp else 0.0,
        case_confusion={"tp": tp, "fp": fp, "tn": tn, "fn": fn},
        roi_confusion=roi_confusion,
        per_patient=per_patient,
        n_rois_predicted=n_pred_total,
        n_rois_without_prediction=n_unpredicted,
        n_patients_without_prediction=n_patients_without,
    )
    return report


PER_PATIENT_HEADER = ("patient_id,pathology,n_predicted,n_predicted_cancer,"
                      "n_roi_correct,p_fp,p_fn,case_probability,predicted_label")


def save_per_patient(report: EvalReport, path):
    """Per-patient predictions as columnar text (enough to re-derive every
    report metric independently)."""
    lines = [PER_PATIENT_HEADER]
    for p in report.per_patient:
        prob = "" if p.case_probability is None else repr(p.case_probability)
        label = ("" if p.predicted_cancer is None
                 else ("cancer" if p.predicted_cancer else "not_cancer"))
        lines.append(f"{p.patient_id},{p.pathology},{p.n_predicted},"
                     f"{p.n_predicted_cancer},{p.n_roi_correct},"
                     f"{p.p_fp!r},{p.p_fn!r},{prob},{label}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
