"""Weighted constrained least-squares estimation of the perfusion parameters.

The misfit between the model response and a measured series is summed as

    J = sum_t  W(t) / S(t)^2 * (y(t; params) - I(t))^2

where S(t) is the (floored) pixel dispersion and W(t) a wash-in emphasis:
constant ``w1`` up to ``t0`` seconds, then exponential decay reaching ``w2``
at the end of the series.  Minimization runs under box constraints with a
trust-region reflective solver, multi-started from a data-driven heuristic
plus perturbed copies; the lowest-misfit converged solution wins.
"""

from dataclasses import dataclass
import math

import numpy as np
from scipy.optimize import least_squares

from . import _kernels
from .errors import DomainError, InputTooShort, InvalidInput
from .ingest import RoiSeries, threshold_dispersion
from .model import PerfusionParams

MIN_FIT_SAMPLES = 50


@dataclass(frozen=True)
class WeightConfig:
    """Wash-in emphasis weights: w1 until t0, decaying to w2 at series end."""

    w1: float = 10.0
    w2: float = 1.0
    t0: float = 100.0

    def __post_init__(self):
        if not (self.w1 > self.w2 > 0):
            raise InvalidInput(f"need w1 > w2 > 0, got w1={self.w1}, w2={self.w2}")
        if not self.t0 > 0:
            raise InvalidInput(f"need t0 > 0, got {self.t0}")


def weight(t: float, cfg: WeightConfig, duration: float) -> float:
    """Evaluate the wash-in weight at time ``t`` for a series of length
    ``duration`` seconds.

    Continuous at t0 and equal to ``w2`` at t = duration.  When the series is
    shorter than t0 every sample falls in the constant-``w1`` branch.
    """
    if t < 0 or t > duration:
        raise DomainError(f"t={t} outside [0, {duration}]")
    if t <= cfg.t0 or duration <= cfg.t0:
        return cfg.w1
    ratio = cfg.w1 / cfg.w2
    span = duration - cfg.t0
    return cfg.w1 * ratio ** (cfg.t0 / span) * math.exp(-math.log(ratio) / span * t)


def weight_curve(times, cfg: WeightConfig, duration: float) -> np.ndarray:
    """Vectorized :func:`weight` over an array of sample times."""
    t = np.asarray(times, dtype=np.float64)
    if t.size and (t.min() < 0 or t.max() > duration):
        raise DomainError("sample times outside [0, duration]")
    if duration <= cfg.t0:
        return np.full(t.shape, cfg.w1)
    ratio = cfg.w1 / cfg.w2
    span = duration - cfg.t0
    decayed = cfg.w1 * ratio ** (cfg.t0 / span) * np.exp(-math.log(ratio) / span * t)
    return np.where(t <= cfg.t0, cfg.w1, decayed)


@dataclass(frozen=True)
class FitBounds:
    """Box constraints (lo, hi) per parameter.

    ``tau`` must stay below the lower edge of ``tau_input`` so the box alone
    enforces the wash-in/wash-out time-constant ordering.
    """

    tau: tuple = (0.2, 100.0)
    damping: tuple = (0.02, 15.0)
    gain: tuple = (1e-6, 1e5)
    tau_input: tuple = (150.0, 5000.0)
    delay: tuple = (1e-3, 240.0)
    offset: tuple = (1e-9, 1e5)

    def __post_init__(self):
        for name in ("tau", "damping", "gain", "tau_input", "delay", "offset"):
            lo, hi = getattr(self, name)
            if not (0 < lo < hi):
                raise InvalidInput(f"bounds for {name} must satisfy 0 < lo < hi, "
                                   f"got ({lo}, {hi})")
        if self.tau[1] >= self.tau_input[0]:
            raise InvalidInput(
                f"tau upper bound {self.tau[1]} must stay below the tau_input "
                f"lower bound {self.tau_input[0]} (wash-in faster than wash-out)")

    def lowers(self):
        return np.array([self.tau[0], self.damping[0], self.gain[0],
                         self.tau_input[0], self.delay[0], self.offset[0]])

    def uppers(self):
        return np.array([self.tau[1], self.damping[1], self.gain[1],
                         self.tau_input[1], self.delay[1], self.offset[1]])

    def contains(self, params: PerfusionParams) -> bool:
        x = params.as_array()
        return bool(np.all(x >= self.lowers()) and np.all(x <= self.uppers()))


def default_bounds(series: RoiSeries, *, tau=(0.2, 100.0), damping=(0.02, 15.0),
                   tau_input=(150.0, 5000.0)) -> FitBounds:
    """Bounds with the data-scale edges (gain, delay, offset) adapted to the
    series; the time-constant and damping edges are fixed defaults."""
    peak = float(series.intensity.max())
    lo = float(series.intensity.min())
    span = max(peak - lo, 1e-6)
    dt = series.sample_interval_s
    return FitBounds(
        tau=tau,
        damping=damping,
        gain=(1e-6, 50.0 * span + 1.0),
        tau_input=tau_input,
        delay=(min(dt, 1e-3), max(0.8 * series.duration_s, 2 * dt)),
        offset=(1e-9, peak + 1.0),
    )


@dataclass(frozen=True)
class FitResult:
    """Outcome of one series fit."""

    params: PerfusionParams
    objective_value: float
    l1_relative_error: float
    n_iterations: int
    converged: bool
    weights_used: WeightConfig
    duration_s: float
    sample_interval_s: float


def objective(params: PerfusionParams, series: RoiSeries,
              cfg: WeightConfig | None = None) -> float:
    """Weighted squared misfit J of the model against the series.

    The series dispersion is expected to be floored already (see
    :func:`perfquant.ingest.threshold_dispersion`).
    """
    cfg = cfg or WeightConfig()
    t = series.times
    w = weight_curve(t, cfg, series.duration_s)
    y = _kernels.response_curve(params.tau, params.damping, params.gain,
                                params.tau_input, params.delay, params.offset, t)
    resid = y - series.intensity
    return float(np.sum(w / series.dispersion ** 2 * resid ** 2))


def l1_relative_error(params: PerfusionParams, series: RoiSeries) -> float:
    """Unweighted relative L1 misfit: sum|y - I| / sum|I|."""
    t = series.times
    y = _kernels.response_curve(params.tau, params.damping, params.gain,
                                params.tau_input, params.delay, params.offset, t)
    denom = float(np.sum(np.abs(series.intensity)))
    if denom == 0.0:
        denom = 1.0
    return float(np.sum(np.abs(y - series.intensity)) / denom)


def initialize(series: RoiSeries, bounds: FitBounds | None = None) -> PerfusionParams:
    """Heuristic starting point inside the bounds.

    Detects the rise onset (first sample exceeding the early baseline by
    three baseline standard deviations), reads the background off the
    pre-onset median, sizes the gain from the peak, and estimates wash-out
    from a log-linear fit to the post-peak tail.  Falls back to bound
    midpoints when no rise is detectable.
    """
    bounds = bounds or default_bounds(series)
    lo, hi = bounds.lowers(), bounds.uppers()
    mids = np.sqrt(lo * hi)  # geometric midpoints: parameters are scale-like
    dt = series.sample_interval_s
    y = series.intensity

    def clamp(v, i):
        return float(min(max(v, lo[i] * 1.0000001), hi[i] * 0.9999999))

    n_base = max(5, int(0.05 * len(y)))
    base = y[:n_base]
    base_med = float(np.median(base))
    base_std = max(float(base.std()), 1e-9, 1e-6 * max(abs(base_med), 1.0))

    rise = np.nonzero(y > base_med + 3.0 * base_std)[0]
    peak_idx = int(np.argmax(y))
    if peak_idx == 0 and rise.size > 0:
        # series peaks at the very first sample: no usable rise shape
        return PerfusionParams(*(clamp(m, i) for i, m in enumerate(mids)))
    if rise.size == 0:
        # flat series: earliest possible onset and a token gain
        theta = clamp(dt, 4)
        offset = clamp(base_med if base_med > 0 else mids[5], 5)
        gain = clamp(max(float(y.max()) - offset, lo[2] * 10), 2)
        return PerfusionParams(float(mids[0]), 1.2, gain, float(mids[3]),
                               theta, offset)

    onset_idx = int(rise[0])
    theta = clamp(onset_idx * dt, 4)
    pre = y[:onset_idx] if onset_idx >= 1 else base
    offset = clamp(max(float(np.median(pre)), 1e-9), 5)
    gain = clamp(max(float(y[peak_idx]) - offset, lo[2] * 10), 2)
    t_peak = peak_idx * dt
    tau = clamp((t_peak - theta) / 3.0 if t_peak > theta else mids[0], 0)

    tau_input = 2.0 * bounds.tau_input[0]
    tail = y[peak_idx:] - offset
    tail_t = series.times[peak_idx:]
    good = tail > max(1e-9, 0.01 * max(gain, 1e-9))
    if good.sum() >= 10:
        slope = np.polyfit(tail_t[good], np.log(tail[good]), 1)[0]
        if slope < -1e-12:
            tau_input = max(tau_input, -1.0 / slope)
    tau_input = clamp(tau_input, 3)

    return PerfusionParams(tau, 1.2, gain, tau_input, theta, offset)


def _perturb_start(x0, lo, hi, rng):
    # jitter in the unit box so every start stays strictly inside the bounds
    u = (x0 - lo) / (hi - lo)
    u = np.clip(u + rng.normal(0.0, 0.15, size=u.shape), 0.02, 0.98)
    return lo + u * (hi - lo)


def fit(series: RoiSeries, cfg: WeightConfig | None = None,
        bounds: FitBounds | None = None, *, n_starts: int = 5,
        max_iterations: int = 400, gradient_tol: float = 1e-8,
        step_tol: float = 1e-10, seed: int = 0,
        dispersion_floor: float = 1.0) -> FitResult:
    """Fit the perfusion model to one series.

    Runs ``n_starts`` trust-region-reflective solves (heuristic start plus
    perturbed copies, deterministic per ``seed``) with parameters scaled by
    their bound widths, and returns the lowest-misfit result.  A start whose
    relative L1 misfit is already below 1e-6 short-circuits the remaining
    starts, since no meaningfully better fit exists.
    """
    if len(series) < MIN_FIT_SAMPLES:
        raise InputTooShort(
            f"need >= {MIN_FIT_SAMPLES} samples to fit, got {len(series)}")
    cfg = cfg or WeightConfig()
    bounds = bounds or default_bounds(series)
    floored = threshold_dispersion(series, dispersion_floor)

    t = floored.times
    data = floored.intensity
    w_root = np.sqrt(weight_curve(t, cfg, floored.duration_s)) / floored.dispersion
    lo, hi = bounds.lowers(), bounds.uppers()

    def residuals(x):
        y = _kernels.response_curve(x[0], x[1], x[2], x[3], x[4], x[5], t)
        return w_root * (y - data)

    rng = np.random.default_rng(seed)
    x0 = np.clip(initialize(series, bounds).as_array(),
                 lo * 1.0000001, hi * 0.9999999)
    starts = [x0]
    for _ in range(max(0, n_starts - 1)):
        starts.append(_perturb_start(x0, lo, hi, rng))

    best = None
    for start in starts:
        res = least_squares(
            residuals, start, bounds=(lo, hi), method="trf",
            x_scale=hi - lo, gtol=gradient_tol, xtol=step_tol, ftol=step_tol,
            max_nfev=max_iterations * (len(lo) + 4),
        )
        cost = 2.0 * res.cost  # least_squares reports 0.5 * sum of squares
        converged = res.status > 0
        if best is None or (converged and not best[2]) or (
                converged == best[2] and cost < best[1]):
            best = (res, cost, converged)
            params = PerfusionParams.from_array(res.x)
            if converged and l1_relative_error(params, floored) < 1e-6:
                break

    res, cost, converged = best
    params = PerfusionParams.from_array(res.x)
    return FitResult(
        params=params,
        objective_value=float(cost),
        l1_relative_error=l1_relative_error(params, floored),
        n_iterations=int(res.njev if res.njev is not None else res.nfev),
        converged=bool(converged),
        weights_used=cfg,
        duration_s=floored.duration_s,
        sample_interval_s=floored.sample_interval_s,
    )
