"""Second-order bio-physical model of fluorescence perfusion dynamics.

A region's intensity curve is modelled as the response of a linear
time-invariant second-order system driven by an exponentially decaying
input, delayed by the dye transit time and sitting on a constant background:

    y(t) = y_exp(t - delay) * H(t - delay) + offset

where ``y_exp`` solves, from rest (y(0) = y'(0) = 0),

    tau^2 y'' + 2 * damping * tau * y' + y = gain * exp(-t / tau_input).

``tau`` and ``damping`` set the speed and oscillatory character of the
wash-in, ``gain`` the amplitude, ``tau_input`` the slow wash-out decay, and
``H`` is the unit step.  The same response can be written as a sum of three
(possibly complex) exponential modes; :func:`decompose` returns them and
:func:`response` evaluates the closed form in real arithmetic.
:func:`ode_oracle` integrates the defining equation numerically and exists
so tests can cross-check the closed form against an independent route.
"""

from dataclasses import dataclass

import numpy as np

from . import _kernels
from ._kernels import CRITICAL_BAND
from .errors import CriticalDampingError, DomainError, ResonanceError

RESONANCE_EPS = 1e-9


@dataclass(frozen=True)
class PerfusionParams:
    """The six parameters of the perfusion response.

    tau        wash-in time constant, seconds
    damping    dimensionless damping ratio (< 1 gives oscillations)
    gain       input amplitude, brightness units
    tau_input  input decay constant (wash-out), seconds
    delay      dye arrival delay, seconds
    offset     background brightness
    """

    tau: float
    damping: float
    gain: float
    tau_input: float
    delay: float
    offset: float

    def __post_init__(self):
        vals = (self.tau, self.damping, self.gain, self.tau_input,
                self.delay, self.offset)
        if not all(np.isfinite(v) for v in vals):
            raise DomainError(f"non-finite parameter in {vals}")
        if self.damping <= 0 or self.gain <= 0 or self.delay <= 0 or self.offset <= 0:
            raise DomainError(
                "damping, gain, delay and offset must be strictly positive, got "
                f"D={self.damping}, K={self.gain}, delay={self.delay}, "
                f"offset={self.offset}"
            )
        if not 0 < self.tau < self.tau_input:
            raise DomainError(
                f"time constants must satisfy 0 < tau < tau_input, got "
                f"tau={self.tau}, tau_input={self.tau_input}"
            )

    def as_array(self):
        return np.array([self.tau, self.damping, self.gain, self.tau_input,
                         self.delay, self.offset], dtype=np.float64)

    @classmethod
    def from_array(cls, x):
        return cls(*(float(v) for v in x))


PARAM_NAMES = ("tau", "damping", "gain", "tau_input", "delay", "offset")


@dataclass(frozen=True)
class ModalDecomposition:
    """Three-exponential form of the response above the background.

    ``amplitudes[j] * exp(rates[j] * s)`` summed over j equals the response
    at time ``delay + s`` minus the background offset.  ``rates[0]`` is the
    real wash-out rate ``-1/tau_input``; the remaining pair is complex
    conjugate for damping < 1 and real (fastest decay first) for damping > 1.
    """

    amplitudes: np.ndarray  # complex, shape (3,)
    rates: np.ndarray       # complex, shape (3,)

    def reconstruct(self, s):
        """Sum of modes at elapsed time(s) ``s`` past the delay (real part)."""
        s = np.asarray(s, dtype=np.float64)
        modes = self.amplitudes[:, None] * np.exp(self.rates[:, None] * s.ravel()[None, :])
        out = modes.sum(axis=0).real
        return out.reshape(s.shape) if s.shape else float(out[0])


def response(params: PerfusionParams, t):
    """Model brightness at time(s) ``t`` seconds after injection.

    Equals ``offset`` for t <= delay and decays back to ``offset`` as
    t -> infinity.  Accepts a scalar or array; t must be >= 0.
    """
    t_arr = np.asarray(t, dtype=np.float64)
    if t_arr.ndim == 0:
        t_flat = t_arr.reshape(1)
    else:
        t_flat = np.ascontiguousarray(t_arr.ravel())
    if t_flat.size and t_flat.min() < 0.0:
        raise DomainError("time must be non-negative")
    out = _kernels.response_curve(params.tau, params.damping, params.gain,
                                  params.tau_input, params.delay, params.offset,
                                  t_flat)
    if t_arr.ndim == 0:
        return float(out[0])
    return out.reshape(t_arr.shape)


def _mode_denominator(params):
    r = params.tau / params.tau_input
    return 1.0 - 2.0 * params.damping * r + r * r


def decompose(params: PerfusionParams) -> ModalDecomposition:
    """Split the response into its three exponential modes.

    Raises :class:`CriticalDampingError` within ``CRITICAL_BAND`` of
    damping = 1, where the pair of fast modes degenerates into a repeated
    root, and :class:`ResonanceError` when ``tau_input`` coincides with a
    natural time constant (the mode amplitudes diverge).  The amplitudes are
    fixed by the rest initial conditions: the modes sum to zero at s = 0 and
    so do their first derivatives.
    """
    D = params.damping
    if abs(D - 1.0) <= CRITICAL_BAND:
        raise CriticalDampingError(
            f"no three-exponential form within {CRITICAL_BAND} of damping=1 "
            f"(got {D})"
        )
    dn = _mode_denominator(params)
    if abs(dn) <= RESONANCE_EPS:
        raise ResonanceError(
            f"tau_input={params.tau_input} is resonant with tau={params.tau}, "
            f"damping={D} (denominator {dn:.3e})"
        )
    K = params.gain
    tau = params.tau
    r = tau / params.tau_input
    a1 = K / dn
    lam1 = -1.0 / params.tau_input
    if D < 1.0:
        w = np.sqrt(1.0 - D * D)
        lam2 = complex(-D, w) / tau
        a2 = K * complex(-w, D - r) / (2.0 * w * dn)
        amps = np.array([a1, a2, np.conj(a2)], dtype=np.complex128)
        rates = np.array([lam1, lam2, np.conj(lam2)], dtype=np.complex128)
    else:
        g = np.sqrt(D * D - 1.0)
        # faster-decaying mode in slot 2
        lam2 = (-D - g) / tau
        lam3 = (-D + g) / tau
        a2 = K * (D - g - r) / (2.0 * g * dn)
        a3 = -K * (D + g - r) / (2.0 * g * dn)
        amps = np.array([a1, a2, a3], dtype=np.complex128)
        rates = np.array([lam1, lam2, lam3], dtype=np.complex128)
    return ModalDecomposition(amplitudes=amps, rates=rates)


def ode_oracle(params: PerfusionParams, t_grid, step_divisor: int = 1000):
    """Reference response from direct numerical integration.

    Integrates the defining second-order equation with a fixed-step classical
    4th-order Runge-Kutta scheme (step <= tau / step_divisor, at most one
    hundredth of tau) and applies delay and offset.  Independent of the
    closed form in :func:`response`; intended for validation.
    """
    t = np.asarray(t_grid, dtype=np.float64)
    if t.ndim != 1 or t.size == 0:
        raise DomainError("t_grid must be a non-empty 1-d array")
    if t.size > 1 and np.any(np.diff(t) < 0):
        raise DomainError("t_grid must be nondecreasing")
    if t[0] < 0:
        raise DomainError("time must be non-negative")
    divisor = max(int(step_divisor), 100)
    h_max = params.tau / divisor

    out = np.full(t.shape, params.offset, dtype=np.float64)
    past = t > params.delay
    if np.any(past):
        offsets = np.ascontiguousarray(t[past] - params.delay)
        y = _kernels.rk4_offsets(params.tau, params.damping, params.gain,
                                 params.tau_input, offsets, h_max)
        out[past] += y
    return out
