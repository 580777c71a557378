"""Tumour signature: twelve features derived from a fitted response.

Four time-to-peak (TTP) descriptors are read off the fitted curve on a dense
grid: the time of the first intensity peak (measured from injection at
t = 0), the first time the rising edge crosses half the peak elevation,
their ratio, and the chord slope of the rise.  Eight modal descriptors come
from the three-exponential decomposition: the wash-out rate, the two fast
decay rates, the oscillation frequency (zero when overdamped), and the four
mode-coefficient components.  Quality rules reject fits that are too short,
implausibly damped, too slow, or simply bad.
"""

from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from . import _kernels
from .errors import FeatureError, ParseError
from .fitter import FitResult
from .ingest import RoiSeries
from .model import decompose

FEATURE_NAMES = (
    "t_max", "t_half_max", "t_ratio", "slope",
    "lambda1_neg", "re_lambda2_neg", "re_lambda3_neg", "im_lambda2",
    "a1", "re_a2", "re_a3", "im_a2",
)

# Feature classes used by healthy-reference normalization: rates (and the
# gain-scaled coefficients) normalize as ratios, the timing features as
# differences.
RATE_FEATURES = ("slope", "lambda1_neg", "re_lambda2_neg", "re_lambda3_neg")
AMPLITUDE_FEATURES = ("im_lambda2", "a1", "re_a2", "re_a3", "im_a2")
ABSOLUTE_FEATURES = ("t_max", "t_half_max", "t_ratio")


@dataclass(frozen=True)
class Signature:
    """The twelve-feature tumour signature of one region."""

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

    def feature_vector(self) -> np.ndarray:
        return np.array([getattr(self, n) for n in FEATURE_NAMES], dtype=np.float64)


REJECT_REASONS = ("too_short", "bad_damping", "tau_too_large", "l1_exceeded")


@dataclass(frozen=True)
class QualityRules:
    """Thresholds for accepting a fitted region."""

    min_duration_s: float = 100.0
    damping_range: tuple = (0.05, 10.0)
    tau_max: float = 100.0
    l1_max: float = 0.10


@dataclass(frozen=True)
class QualityVerdict:
    accepted: bool
    reasons: tuple = ()

    def __post_init__(self):
        if self.accepted != (len(self.reasons) == 0):
            raise ValueError("accepted must hold exactly when reasons is empty")


@dataclass(frozen=True)
class NoPrediction:
    """Marker result for regions that fail quality filtering."""

    verdict: QualityVerdict


class TtpFeatures(NamedTuple):
    t_max: float
    t_half_max: float
    t_ratio: float
    slope: float


def _refine_peak(curve, a, b, t_grid_max, h):
    # Bisect on the sign of a central-difference slope: near a flat maximum
    # the derivative crossing locates the peak far more precisely than
    # function-value comparisons can.
    def slope(t):
        return float(curve(t + h)[0] - curve(t - h)[0])

    if not slope(a) > 0.0 > slope(b):
        return t_grid_max  # peak at a grid/interval boundary
    for _ in range(60):
        mid = 0.5 * (a + b)
        if slope(mid) > 0.0:
            a = mid
        else:
            b = mid
    return 0.5 * (a + b)


def ttp_features(fit: FitResult, grid_step: float | None = None) -> TtpFeatures:
    """Time-to-peak features of the fitted response.

    The response is scanned from the fitted delay to the series end on a
    grid of step ``grid_step`` (default: half the sample interval); the first
    global maximum is then refined within its bracketing cells and the
    half-rise crossing located by bisection on the rising edge.  All times
    are measured from injection (t = 0), so ``t_max`` includes the delay.
    """
    if not fit.converged:
        raise FeatureError("fit did not converge; no features extracted")
    p = fit.params
    if grid_step is None:
        grid_step = fit.sample_interval_s / 2.0
    t_end = fit.duration_s
    if t_end <= p.delay:
        raise FeatureError("fitted delay is past the end of the series")

    def curve(t):
        arr = np.atleast_1d(np.asarray(t, dtype=np.float64))
        return _kernels.response_curve(p.tau, p.damping, p.gain, p.tau_input,
                                       p.delay, p.offset, arr)

    n = int(np.floor((t_end - p.delay) / grid_step)) + 1
    grid = p.delay + np.arange(n) * grid_step
    if grid[-1] < t_end:
        grid = np.append(grid, t_end)
    y = curve(grid)

    i_max = int(np.argmax(y))
    a = grid[max(i_max - 1, 0)]
    b = grid[min(i_max + 1, len(grid) - 1)]
    h = min(1e-3, grid_step / 10.0)
    t_max = _refine_peak(curve, a, b, grid[i_max], h) if b > a else grid[i_max]
    t_max = float(min(max(t_max, p.delay), t_end))
    peak = float(curve(t_max)[0])
    if peak <= p.offset:
        raise FeatureError("fitted response never rises above the background")

    level = p.offset + 0.5 * (peak - p.offset)
    above = np.nonzero(y >= level)[0]
    if above.size == 0:
        raise FeatureError("half-rise level not reached on the feature grid")
    hi_idx = int(above[0])
    if hi_idx == 0:
        t_half = float(grid[0])
    else:
        a, b = grid[hi_idx - 1], grid[hi_idx]
        for _ in range(80):  # bisect the bracketing cell
            m = 0.5 * (a + b)
            if curve(m)[0] >= level:
                b = m
            else:
                a = m
        t_half = float(0.5 * (a + b))

    rise = max(t_max - p.delay, 1e-12)
    return TtpFeatures(
        t_max=t_max,
        t_half_max=t_half,
        t_ratio=t_half / t_max,
        slope=(peak - p.offset) / rise,
    )


class ExpFeatures(NamedTuple):
    lambda1_neg: float
    re_lambda2_neg: float
    re_lambda3_neg: float
    im_lambda2: float
    a1: float
    re_a2: float
    re_a3: float
    im_a2: float


def exp_features(decomp) -> ExpFeatures:
    """Modal features, fastest decay in the lambda-2 slot.

    Conjugate symmetry of the oscillating pair means a single imaginary
    component per pair carries all information; ``im_lambda2`` is zero
    exactly when the source fit is non-oscillating.
    """
    amps, rates = decomp.amplitudes, decomp.rates
    order = (1, 2) if -rates[1].real >= -rates[2].real else (2, 1)
    l2, l3 = rates[order[0]], rates[order[1]]
    a2, a3 = amps[order[0]], amps[order[1]]
    return ExpFeatures(
        lambda1_neg=float(-rates[0].real),
        re_lambda2_neg=float(-l2.real),
        re_lambda3_neg=float(-l3.real),
        im_lambda2=float(l2.imag),
        a1=float(amps[0].real),
        re_a2=float(a2.real),
        re_a3=float(a3.real),
        im_a2=float(a2.imag),
    )


def quality_filter(series: RoiSeries, fit: FitResult,
                   rules: QualityRules | None = None) -> QualityVerdict:
    """Apply the rejection rules; returns reasons for every rule violated."""
    rules = rules or QualityRules()
    reasons = []
    if series.duration_s < rules.min_duration_s:
        reasons.append("too_short")
    d = fit.params.damping
    if not rules.damping_range[0] <= d <= rules.damping_range[1]:
        reasons.append("bad_damping")
    if fit.params.tau >= rules.tau_max:
        reasons.append("tau_too_large")
    if fit.l1_relative_error > rules.l1_max:
        reasons.append("l1_exceeded")
    return QualityVerdict(accepted=not reasons, reasons=tuple(reasons))


def build_signature(series: RoiSeries, fit: FitResult,
                    rules: QualityRules | None = None,
                    grid_step: float | None = None):
    """Quality-filter a fit and assemble its :class:`Signature`.

    Returns :class:`NoPrediction` carrying the verdict when any rule fires.
    """
    verdict = quality_filter(series, fit, rules)
    if not verdict.accepted:
        return NoPrediction(verdict=verdict)
    ttp = ttp_features(fit, grid_step)
    exp = exp_features(decompose(fit.params))
    return Signature(
        t_max=ttp.t_max, t_half_max=ttp.t_half_max, t_ratio=ttp.t_ratio,
        slope=ttp.slope, lambda1_neg=exp.lambda1_neg,
        re_lambda2_neg=exp.re_lambda2_neg, re_lambda3_neg=exp.re_lambda3_neg,
        im_lambda2=exp.im_lambda2, a1=exp.a1, re_a2=exp.re_a2, re_a3=exp.re_a3,
        im_a2=exp.im_a2,
    )


# --------------------------------------------------------------------------
# signature table (columnar text export)
# --------------------------------------------------------------------------

@dataclass
class SignatureRow:
    patient_id: str
    roi_id: str
    label: str
    accepted: bool
    signature: Signature | None = None


SIGNATURE_HEADER = ("patient_id,roi_id,label,accepted," + ",".join(FEATURE_NAMES))


def save_signature_table(rows, path):
    """One row per region: ids, label, accepted flag and the 12 features
    (empty feature cells for rejected regions)."""
    lines = [SIGNATURE_HEADER]
    for row in rows:
        cells = [row.patient_id, row.roi_id, row.label,
                 "true" if row.accepted else "false"]
        if row.signature is not None:
            cells += [repr(float(v)) for v in row.signature.feature_vector()]
        else:
            cells += [""] * len(FEATURE_NAMES)
        lines.append(",".join(cells))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_signature_table(path):
    text = Path(path).read_text(encoding="utf-8").splitlines()
    if not text or text[0] != SIGNATURE_HEADER:
        raise ParseError("unexpected signature table header", line=1)
    rows = []
    for lineno, raw in enumerate(text[1:], start=2):
        if not raw.strip():
            continue
        cells = raw.split(",")
        if len(cells) != 4 + len(FEATURE_NAMES):
            raise ParseError(f"expected {4 + len(FEATURE_NAMES)} columns", line=lineno)
        accepted = cells[3] == "true"
        sig = None
        if accepted:
            try:
                sig = Signature(*(float(c) for c in cells[4:]))
            except ValueError as exc:
                raise ParseError(f"bad feature value: {exc}", line=lineno) from exc
        rows.append(SignatureRow(patient_id=cells[0], roi_id=cells[1],
                                 label=cells[2], accepted=accepted, signature=sig))
    return rows
