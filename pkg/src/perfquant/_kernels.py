"""Hot numeric kernels with paired numba / pure-numpy implementations.

Three inner loops dominate runtime: evaluation of the closed-form perfusion
response on dense time grids (called thousands of times per curve fit),
fixed-step 4th-order integration of the underlying second-order system (the
validation oracle), and the exact greedy split scan of the boosted-tree
trainer.  Each has a numba version and a numpy version; the active one is
chosen at import time by :mod:`perfquant._accel`.  Both variants stay
importable so tests and the benchmark can compare them.

Kernel arguments are plain floats/arrays; argument validation lives in the
public wrappers (:mod:`perfquant.model`, :mod:`perfquant.gbt`).
"""

import math

import numpy as np

from ._accel import NUMBA_ENABLED, jit_kernel

# Near critical damping the distinct-root formulas divide by ~0; inside this
# band the repeated-root limit form is used instead.
CRITICAL_BAND = 1e-6

# |denominator| of the modal amplitudes is clamped to keep the response finite
# when a solver trajectory passes arbitrarily close to input/system resonance.
_RESONANCE_CLAMP = 1e-14


# --------------------------------------------------------------------------
# closed-form second-order response
# --------------------------------------------------------------------------

def _response_fill(tau, damping, gain, tau_input, delay, offset, t, out):
    # Real-arithmetic evaluation of offset + (delayed) second-order response
    # to an exponentially decaying input, zero initial conditions.
    r = tau / tau_input
    dn = 1.0 - 2.0 * damping * r + r * r
    if dn >= 0.0:
        if dn < _RESONANCE_CLAMP:
            dn = _RESONANCE_CLAMP
    else:
        if dn > -_RESONANCE_CLAMP:
            dn = -_RESONANCE_CLAMP
    amp = gain / dn
    crit = abs(damping - 1.0) <= CRITICAL_BAND
    if damping < 1.0:
        w = math.sqrt(1.0 - damping * damping)
    else:
        w = math.sqrt(max(damping * damping - 1.0, 0.0))
    for i in range(t.shape[0]):
        s = t[i] - delay
        if s <= 0.0:
            out[i] = offset
            continue
        e_in = math.exp(-s / tau_input)
        if crit:
            y = amp * (e_in - (1.0 + (damping - r) * s / tau)
                       * math.exp(-damping * s / tau))
        elif damping < 1.0:
            ph = w * s / tau
            y = amp * (e_in - math.exp(-damping * s / tau)
                       * (math.cos(ph) + (damping - r) / w * math.sin(ph)))
        else:
            u = math.exp((w - damping) * s / tau)
            v = math.exp(-(w + damping) * s / tau)
            y = amp * (e_in - 0.5 * (u + v) - (damping - r) / (2.0 * w) * (u - v))
        out[i] = offset + y
    return out


_response_fill_jit = jit_kernel(_response_fill) if NUMBA_ENABLED else None


def response_curve_numba(tau, damping, gain, tau_input, delay, offset, t):
    out = np.empty(t.shape[0], dtype=np.float64)
    _response_fill_jit(tau, damping, gain, tau_input, delay, offset, t, out)
    return out


def response_curve_numpy(tau, damping, gain, tau_input, delay, offset, t):
    r = tau / tau_input
    dn = 1.0 - 2.0 * damping * r + r * r
    if abs(dn) < _RESONANCE_CLAMP:
        dn = _RESONANCE_CLAMP if dn >= 0.0 else -_RESONANCE_CLAMP
    amp = gain / dn

    out = np.full(t.shape[0], offset, dtype=np.float64)
    s = t - delay
    pos = s > 0.0
    if not np.any(pos):
        return out
    s = s[pos]
    e_in = np.exp(-s / tau_input)
    if abs(damping - 1.0) <= CRITICAL_BAND:
        y = amp * (e_in - (1.0 + (damping - r) * s / tau)
                   * np.exp(-damping * s / tau))
    elif damping < 1.0:
        w = math.sqrt(1.0 - damping * damping)
        ph = w * s / tau
        y = amp * (e_in - np.exp(-damping * s / tau)
                   * (np.cos(ph) + (damping - r) / w * np.sin(ph)))
    else:
        w = math.sqrt(damping * damping - 1.0)
        u = np.exp((w - damping) * s / tau)
        v = np.exp(-(w + damping) * s / tau)
        y = amp * (e_in - 0.5 * (u + v) - (damping - r) / (2.0 * w) * (u - v))
    out[pos] += y
    return out


response_curve = response_curve_numba if NUMBA_ENABLED else response_curve_numpy


# --------------------------------------------------------------------------
# fixed-step 4th-order integration of the second-order system
# --------------------------------------------------------------------------

def _rk4_offsets(tau, damping, gain, tau_input, offsets, h_max):
    # Integrates tau^2 y'' + 2 damping tau y' + y = gain exp(-s/tau_input)
    # from rest, sampling y at the given nondecreasing offsets.  Each segment
    # between consecutive offsets is covered with equal steps <= h_max.
    out = np.empty(offsets.shape[0], dtype=np.float64)
    y = 0.0
    v = 0.0
    s = 0.0
    a = 2.0 * damping * tau
    tt = tau * tau
    for j in range(offsets.shape[0]):
        ds = offsets[j] - s
        if ds > 0.0:
            n = int(math.ceil(ds / h_max))
            if n < 1:
                n = 1
            h = ds / n
            half_decay = math.exp(-0.5 * h / tau_input)
            u = gain * math.exp(-s / tau_input)
            for _ in range(n):
                um = u * half_decay
                ue = um * half_decay
                k1y = v
                k1v = (u - a * v - y) / tt
                y2 = y + 0.5 * h * k1y
                v2 = v + 0.5 * h * k1v
                k2y = v2
                k2v = (um - a * v2 - y2) / tt
                y3 = y + 0.5 * h * k2y
                v3 = v + 0.5 * h * k2v
                k3y = v3
                k3v = (um - a * v3 - y3) / tt
                y4 = y + h * k3y
                v4 = v + h * k3v
                k4y = v4
                k4v = (ue - a * v4 - y4) / tt
                y += h * (k1y + 2.0 * k2y + 2.0 * k3y + k4y) / 6.0
                v += h * (k1v + 2.0 * k2v + 2.0 * k3v + k4v) / 6.0
                u = ue
            s = offsets[j]
        out[j] = y
    return out


rk4_offsets_numpy = _rk4_offsets
rk4_offsets_numba = jit_kernel(_rk4_offsets) if NUMBA_ENABLED else None
rk4_offsets = rk4_offsets_numba if NUMBA_ENABLED else rk4_offsets_numpy


# --------------------------------------------------------------------------
# exact greedy split scan for boosted trees
# --------------------------------------------------------------------------

def _scan_split(vals, grad, hess, reg_lambda, min_leaf):
    # vals ascending; returns (gain, n_left) for the best split, n_left = -1
    # when no admissible split improves on the parent.  First maximum wins so
    # the choice does not depend on scan direction.
    m = vals.shape[0]
    g_tot = 0.0
    h_tot = 0.0
    for i in range(m):
        g_tot += grad[i]
        h_tot += hess[i]
    parent = g_tot * g_tot / (h_tot + reg_lambda)
    best_gain = 0.0
    best_pos = -1
    g_left = 0.0
    h_left = 0.0
    for pos in range(1, m):
        g_left += grad[pos - 1]
        h_left += hess[pos - 1]
        if pos < min_leaf or m - pos < min_leaf:
            continue
        if vals[pos] <= vals[pos - 1]:
            continue
        g_right = g_tot - g_left
        h_right = h_tot - h_left
        gain = (g_left * g_left / (h_left + reg_lambda)
                + g_right * g_right / (h_right + reg_lambda) - parent)
        if gain > best_gain:
            best_gain = gain
            best_pos = pos
    return best_gain, best_pos


scan_split_numba = jit_kernel(_scan_split) if NUMBA_ENABLED else None


def scan_split_numpy(vals, grad, hess, reg_lambda, min_leaf):
    m = vals.shape[0]
    if m < 2 or m < 2 * min_leaf:
        return 0.0, -1
    g_left = np.cumsum(grad)[:-1]
    h_left = np.cumsum(hess)[:-1]
    g_tot = g_left[-1] + grad[-1]
    h_tot = h_left[-1] + hess[-1]
    parent = g_tot * g_tot / (h_tot + reg_lambda)
    pos = np.arange(1, m)
    ok = (vals[1:] > vals[:-1]) & (pos >= min_leaf) & (m - pos >= min_leaf)
    if not np.any(ok):
        return 0.0, -1
    gains = np.where(
        ok,
        g_left ** 2 / (h_left + reg_lambda)
        + (g_tot - g_left) ** 2 / (h_tot - h_left + reg_lambda) - parent,
        -np.inf,
    )
    best = int(np.argmax(gains))
    if gains[best] <= 0.0:
        return 0.0, -1
    return float(gains[best]), best + 1


scan_split = scan_split_numba if NUMBA_ENABLED else scan_split_numpy
