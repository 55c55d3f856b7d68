"""Phase derivatives and phase reconstruction from log-magnitudes.

All phases and derivatives here live in the frequency-invariant convention.
Time-direction derivatives are in radians per hop, frequency-direction
derivatives in radians per channel and *demodulated*: the deterministic
``-2 pi n a / M`` slope is removed and only reinstated while integrating.

``lam`` in the formulas below is the dimensionless time-frequency ratio of
the window ``exp(-pi t**2 / (lam L))``; the product ``lam * L`` is the
Gaussian width in samples squared.
"""
from __future__ import annotations

import heapq
import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ParameterError, ShapeError
from .gabor import FI, Convention, GaborSystem, Spectrogram, convert_convention, idgt, magnitude

logger = logging.getLogger(__name__)

DEFAULT_FLOOR = -30.0
#: Relative magnitude below which nothing is integrated.
DEFAULT_TOL = 1e-7


@dataclass(frozen=True, eq=False)
class LogMagnitude:
    """``ln|S|`` clamped at ``floor``; ``peak`` records the scale of peak-relative values."""

    values: np.ndarray
    system: GaborSystem
    floor: float = DEFAULT_FLOOR
    peak: Optional[float] = None

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != self.system.shape:
            raise ShapeError(f"log-magnitude shape {v.shape} does not match {self.system.shape}")
        if not np.all(np.isfinite(v)):
            raise ParameterError("log-magnitudes must be finite")
        v = np.maximum(v, self.floor)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def shape(self):
        return self.values.shape

    def mask(self, rel_threshold: float) -> np.ndarray:
        """Coefficients with magnitude at least ``rel_threshold * max``."""
        return self.values >= self.values.max() + math.log(rel_threshold)

    def magnitude(self) -> np.ndarray:
        return np.exp(self.values)


@dataclass(frozen=True, eq=False)
class Phase:
    """Phase matrix in radians; ``mask`` marks coefficients that were integrated."""

    values: np.ndarray
    convention: Convention = FI
    mask: Optional[np.ndarray] = None
    status: str = "ok"


@dataclass(frozen=True, eq=False)
class PhaseDerivatives:
    d_time: np.ndarray
    d_freq: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        if not (self.d_time.shape == self.d_freq.shape == self.mask.shape):
            raise ShapeError("derivative and mask shapes differ")


def log_magnitude(spec: Spectrogram, floor: float = DEFAULT_FLOOR) -> LogMagnitude:
    """``ln|S|`` clamped from below at ``floor`` (zeros map to ``floor``)."""
    if not floor < 0:
        raise ParameterError(f"floor must be negative, got {floor}")
    mag = spec.magnitude
    with np.errstate(divide="ignore"):
        values = np.log(mag)
    return LogMagnitude(np.maximum(values, floor), spec.system, floor)


def _wrap(x):
    """Principal value in (-pi, pi]."""
    return np.pi - np.mod(np.pi - x, 2 * np.pi)


def _centered_time(x: np.ndarray) -> np.ndarray:
    return (np.roll(x, -1, axis=1) - np.roll(x, 1, axis=1)) / 2


def _centered_freq(x: np.ndarray) -> np.ndarray:
    # spectra of real signals are even around DC and Nyquist
    d = np.zeros_like(x)
    d[1:-1] = (x[2:] - x[:-2]) / 2
    return d


def _demodulation(system: GaborSystem) -> np.ndarray:
    """``2 pi n a / M`` per column, reduced mod 2 pi."""
    n = np.arange(system.N)
    return 2 * np.pi * np.mod(n * system.a, system.M) / system.M


def measured_phase_derivatives(spec: Spectrogram, rel_threshold: float = DEFAULT_TOL) -> PhaseDerivatives:
    """Finite-difference derivatives of the actual phase.

    Every one-step difference is taken as the principal value of
    ``angle(S[k+1] * conj(S[k]))`` (demodulated in frequency) before
    averaging into a centered difference.  Time wraps circularly; the DC
    and Nyquist rows use one-sided differences.
    """
    if spec.convention != FI:
        spec = convert_convention(spec, FI)
    c = spec.coefficients
    system = spec.system

    step_t = np.angle(np.roll(c, -1, axis=1) * np.conj(c))
    d_time = (step_t + np.roll(step_t, 1, axis=1)) / 2

    demod = np.exp(1j * _demodulation(system))[None, :]
    step_f = np.angle(c[1:] * np.conj(c[:-1]) * demod)
    d_freq = np.empty(c.shape)
    d_freq[1:-1] = (step_f[1:] + step_f[:-1]) / 2
    d_freq[0] = step_f[0]
    d_freq[-1] = step_f[-1]

    mag = magnitude(c)
    mask = mag >= rel_threshold * mag.max() if mag.max() > 0 else np.zeros(c.shape, dtype=bool)
    d_time[~mask] = 0.0
    d_freq[~mask] = 0.0
    return PhaseDerivatives(d_time, d_freq, mask)


def estimate_phase_derivatives(logmag: LogMagnitude, rel_threshold: float = DEFAULT_TOL) -> PhaseDerivatives:
    """Phase derivatives predicted from the log-magnitude gradient.

    ``d_time = a M / (lam L) * dM/dm`` and ``d_freq = -(lam L) / (a M) * dM/dn``
    (demodulated).  Exact for Gaussian windows in the undecimated limit.
    The channel gradient is zero on the DC and Nyquist rows, where the
    spectrum of a real signal is even.
    """
    system = logmag.system
    if system.lam is None or not system.lam > 0:
        raise ParameterError("time-frequency ratio lambda is required")
    gamma = system.lam * system.L
    scale = system.a * system.M / gamma
    d_time = scale * _centered_freq(logmag.values)
    d_freq = -_centered_time(logmag.values) / scale
    mask = logmag.mask(rel_threshold)
    d_time[~mask] = 0.0
    d_freq[~mask] = 0.0
    return PhaseDerivatives(d_time, d_freq, mask)


def pghi(
    logmag: LogMagnitude,
    derivs: PhaseDerivatives,
    rel_tol: float = DEFAULT_TOL,
    seed: Optional[int] = 0,
    seed_phase: float = 0.0,
) -> Phase:
    """Phase-gradient heap integration.

    Coefficients strictly above ``rel_tol * max`` are integrated, always
    expanding from the largest already-known coefficient with trapezoidal
    steps; each disconnected region restarts at its own maximum with
    ``seed_phase``.  Everything else gets uniform random phase drawn from
    ``numpy.random.default_rng(seed)``.
    """
    values = logmag.values
    rows, cols = values.shape
    if derivs.d_time.shape != values.shape:
        raise ShapeError("derivative shape does not match log-magnitude shape")
    if not 0 < rel_tol <= 1:
        raise ParameterError(f"rel_tol must lie in (0, 1], got {rel_tol}")

    rng = np.random.default_rng(seed)
    phase = rng.uniform(0.0, 2 * np.pi, size=values.shape)
    todo = values > values.max() + math.log(rel_tol)
    integrated = todo.copy()
    if not todo.any():
        logger.warning("no coefficient above the integration threshold; phase is fully random")
        return Phase(phase, FI, integrated, status="empty")

    system = logmag.system
    tgrad = derivs.d_time.tolist()
    fgrad = derivs.d_freq.tolist()
    demod = _demodulation(system).tolist()
    mag = values.tolist()
    out = phase.tolist()
    pending = todo.tolist()
    remaining = int(todo.sum())
    heappush, heappop = heapq.heappush, heapq.heappop
    # seeds in descending magnitude; ties resolve to the smallest (m, n)
    order = np.lexsort((np.arange(values.size), -values.ravel()))
    order = order[todo.ravel()[order]]
    cursor = 0

    while remaining:
        while True:
            flat = int(order[cursor])
            cursor += 1
            m0, n0 = divmod(flat, cols)
            if pending[m0][n0]:
                break
        out[m0][n0] = seed_phase
        pending[m0][n0] = False
        remaining -= 1
        heap = [(-mag[m0][n0], m0, n0)]
        while heap:
            _, m, n = heappop(heap)
            p = out[m][n]
            row_p, row_t, row_f = pending[m], tgrad[m], fgrad[m]
            for nn, sign in (((n + 1) % cols, 1.0), ((n - 1) % cols, -1.0)):
                if row_p[nn]:
                    out[m][nn] = p + sign * (row_t[n] + row_t[nn]) / 2
                    row_p[nn] = False
                    remaining -= 1
                    heappush(heap, (-mag[m][nn], m, nn))
            if m + 1 < rows and pending[m + 1][n]:
                out[m + 1][n] = p + (row_f[n] + fgrad[m + 1][n]) / 2 - demod[n]
                pending[m + 1][n] = False
                remaining -= 1
                heappush(heap, (-mag[m + 1][n], m + 1, n))
            if m > 0 and pending[m - 1][n]:
                out[m - 1][n] = p - (row_f[n] + fgrad[m - 1][n]) / 2 + demod[n]
                pending[m - 1][n] = False
                remaining -= 1
                heappush(heap, (-mag[m - 1][n], m - 1, n))

    return Phase(np.array(out), FI, integrated)


def cumsum_phase(derivs: PhaseDerivatives, system: GaborSystem) -> Phase:
    """Baseline: running sum of ``d_time`` along each channel, frame 0 at zero."""
    d = np.asarray(derivs.d_time)
    if d.shape != system.shape:
        raise ShapeError(f"derivative shape {d.shape} does not match {system.shape}")
    phase = np.cumsum(d, axis=1)
    phase -= phase[:, :1]
    return Phase(phase, FI, np.ones(d.shape, dtype=bool))


def with_phase(logmag: LogMagnitude, phase: Phase) -> Spectrogram:
    """Complex coefficients ``exp(logmag + i phase)``."""
    coef = np.exp(logmag.values + 1j * phase.values)
    return Spectrogram(coef, logmag.system, phase.convention)


def reconstruct_phase(
    logmag: LogMagnitude,
    rel_tol: float = DEFAULT_TOL,
    seed: Optional[int] = 0,
    method: str = "pghi",
    derivs: Optional[PhaseDerivatives] = None,
) -> Spectrogram:
    """Complex coefficients with phase rebuilt from the magnitude alone.

    ``derivs`` overrides the magnitude-based estimate (e.g. measured or
    generated derivatives).
    """
    if derivs is None:
        derivs = estimate_phase_derivatives(logmag, rel_tol)
    if method == "pghi":
        phase = pghi(logmag, derivs, rel_tol, seed)
    elif method == "cumsum":
        phase = cumsum_phase(derivs, logmag.system)
    else:
        raise ParameterError(f"unknown integration method {method!r}")
    return with_phase(logmag, phase)


def phaseless_reconstruct(
    logmag: LogMagnitude,
    rel_tol: float = DEFAULT_TOL,
    seed: Optional[int] = 0,
    method: str = "pghi",
    derivs: Optional[PhaseDerivatives] = None,
):
    """Signal synthesized from a log-magnitude via phase reconstruction."""
    return idgt(reconstruct_phase(logmag, rel_tol, seed, method, derivs))
