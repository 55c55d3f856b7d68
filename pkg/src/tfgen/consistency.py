"""Consistency and fidelity measures for (generated) spectrograms.

``rho`` compares the two second-difference terms of the discrete
Laplacian relation ``(lam L / a^2) d_n^2 M + (M^2 / (lam L)) d_m^2 M = -2 pi``
through their sample correlation; it needs nothing but a log-magnitude.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import ParameterError, ShapeError, UndefinedCorrelationError
from .gabor import GaborSystem, Spectrogram, dgt, magnitude, make_window, onesided_weights, project
from .phase import DEFAULT_FLOOR, LogMagnitude, log_magnitude

logger = logging.getLogger(__name__)

#: Lower clamp for dB figures (a zero numerator would give -inf).
MIN_DB = -300.0


def _db(ratio: float) -> float:
    if ratio <= 0:
        return MIN_DB
    return max(10.0 * math.log10(ratio), MIN_DB)


def _weighted_norm(x: np.ndarray) -> float:
    w = onesided_weights(x.shape[0])[:, None]
    return float(np.sqrt(np.sum(w * x * x)))


def projection_error(spec: Spectrogram) -> float:
    """``|S - dgt(idgt(S))|`` over the full (conjugate-symmetric) matrix."""
    diff = spec.coefficients - project(spec).coefficients
    return _weighted_norm(magnitude(diff))


def rspe(reference: LogMagnitude, reconstructed: Spectrogram) -> float:
    """Relative spectral projection error in dB.

    ``10 log10(| |S| - |P(S)| | / |S|)`` where ``|S| = exp(reference)``,
    ``S`` is ``reconstructed`` (magnitude plus recovered phase) and ``P``
    the projection onto consistent coefficients.  Clamped at -300 dB.
    """
    if reference.shape != reconstructed.shape:
        raise ShapeError(f"shapes differ: {reference.shape} vs {reconstructed.shape}")
    target = np.exp(reference.values)
    again = project(reconstructed).magnitude
    denom = _weighted_norm(target)
    if denom == 0:
        raise ParameterError("reference magnitude is identically zero")
    return _db(_weighted_norm(target - again) / denom)


def pearson(x, y) -> float:
    """Sample Pearson correlation of two equally long sample sets."""
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.size != y.size:
        raise ShapeError(f"sample sets differ in length: {x.size} vs {y.size}")
    if x.size < 2:
        raise ParameterError("need at least two samples")
    if _flat(x) or _flat(y):
        raise UndefinedCorrelationError("zero variance; correlation is undefined")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(np.dot(dx, dx))
    syy = float(np.dot(dy, dy))
    if sxx == 0 or syy == 0:
        raise UndefinedCorrelationError("zero variance; correlation is undefined")
    r = float(np.dot(dx, dy)) / math.sqrt(sxx * syy)
    return min(1.0, max(-1.0, r))


def _flat(x: np.ndarray) -> bool:
    # spread at the level of rounding noise counts as constant
    return float(np.ptp(x)) <= 64 * np.finfo(float).eps * float(np.abs(x).max())


def second_difference_time(values: np.ndarray) -> np.ndarray:
    """``[1, -2, 1]`` along frames, circular."""
    return np.roll(values, -1, axis=1) - 2 * values + np.roll(values, 1, axis=1)


def second_difference_freq(values: np.ndarray) -> np.ndarray:
    """``[1, -2, 1]`` along channels; edge rows use the even extension."""
    d = np.empty_like(values)
    d[1:-1] = values[2:] - 2 * values[1:-1] + values[:-2]
    d[0] = 2 * (values[1] - values[0])
    d[-1] = 2 * (values[-2] - values[-1])
    return d


@dataclass(frozen=True, eq=False)
class ConsistencyReport:
    rho: float
    dm_time: np.ndarray
    dm_freq: np.ndarray
    laplacian_residual: np.ndarray
    status: str = "ok"

    def as_lines(self) -> str:
        return f"rho={self.rho:.6f}\nstatus={self.status}"


def normalized_clip(values: np.ndarray, clip: Optional[float]) -> np.ndarray:
    """Shift so the maximum is 0 and clamp at ``-clip`` (no-op for None)."""
    if clip is None:
        return values
    if not clip > 0:
        raise ParameterError(f"clip must be positive, got {clip}")
    return np.maximum(values - values.max(), -clip)


def consistency(logmag: LogMagnitude, clip: Optional[float] = None) -> ConsistencyReport:
    """Correlation of ``DM_n = |d_n^2 M + pi a^2/(lam L)|`` and ``DM_m = |d_m^2 M + pi lam L/M^2|``.

    The DC and Nyquist rows are left out of the correlation.  ``clip``
    first normalizes to peak 0 and clamps at ``-clip``.  A zero-variance
    term yields ``rho = 0`` with status ``"undefined"``.
    """
    system = logmag.system
    values = normalized_clip(logmag.values, clip)
    if min(values.shape) < 3:
        raise ShapeError(f"need at least 3x3 coefficients, got {values.shape}")
    gamma = system.lam * system.L
    d2n = second_difference_time(values)
    d2m = second_difference_freq(values)
    dm_time = np.abs(d2n + math.pi * system.a**2 / gamma)
    dm_freq = np.abs(d2m + math.pi * gamma / system.M**2)
    residual = (gamma / system.a**2) * d2n + (system.M**2 / gamma) * d2m + 2 * math.pi
    try:
        r = pearson(dm_time[1:-1], dm_freq[1:-1])
        status = "ok"
    except UndefinedCorrelationError:
        r, status = 0.0, "undefined"
    return ConsistencyReport(r, dm_time, dm_freq, residual, status)


def rho(logmag: LogMagnitude, clip: Optional[float] = None) -> float:
    return consistency(logmag, clip).rho


def batch_rho(batch: Iterable[LogMagnitude], clip: Optional[float] = None) -> np.ndarray:
    return np.array([consistency(x, clip).rho for x in batch])


def gamma(batch_a: Sequence[LogMagnitude], batch_b: Sequence[LogMagnitude], clip: Optional[float] = None) -> float:
    """``|mean rho(batch_a) - mean rho(batch_b)|``."""
    if len(batch_a) == 0 or len(batch_b) == 0:
        raise ParameterError("both batches must be nonempty")
    first = batch_a[0].system
    for x in list(batch_a) + list(batch_b):
        if not x.system.same_geometry(first):
            raise ShapeError("batches mix different Gabor geometries")
    return abs(float(batch_rho(batch_a, clip).mean() - batch_rho(batch_b, clip).mean()))


# ---------------------------------------------------------------------------
# reference inputs and sweeps

def random_logmag(system: GaborSystem, seed: int = 0) -> LogMagnitude:
    """Standard-normal matrix posing as a log-magnitude."""
    rng = np.random.default_rng(seed)
    values = rng.standard_normal(system.shape)
    return LogMagnitude(values, system, floor=min(DEFAULT_FLOOR, values.min()))


def add_coefficient_noise(spec: Spectrogram, snr_db: float, rng: np.random.Generator) -> Spectrogram:
    """Add circular complex Gaussian noise at ``snr_db`` (coefficient domain).

    ``inf`` returns the input unchanged.
    """
    if math.isinf(snr_db) and snr_db > 0:
        return spec
    w = onesided_weights(spec.shape[0])[:, None]
    power = np.sum(w * magnitude(spec.coefficients) ** 2) / np.sum(w * np.ones(spec.shape))
    sigma = math.sqrt(power / 10 ** (snr_db / 10) / 2)
    noise = sigma * (rng.standard_normal(spec.shape) + 1j * rng.standard_normal(spec.shape))
    return spec.replace(spec.coefficients + noise)


@dataclass(frozen=True)
class SweepRow:
    value: float
    mean_rho: float
    std_rho: float
    n: int


def _summarize(value, rhos) -> SweepRow:
    rhos = np.asarray(rhos)
    return SweepRow(float(value), float(rhos.mean()), float(rhos.std()), int(rhos.size))


def redundancy_sweep(signals, systems: Sequence[GaborSystem], clip: Optional[float] = None) -> list:
    """Batch-mean rho of the same signals under each system."""
    rows = []
    for system in systems:
        rhos = []
        for s in signals:
            s = np.asarray(getattr(s, "samples", s), dtype=float)
            rhos.append(rho(log_magnitude(dgt(_fit(s, system.L), system)), clip))
        rows.append(_summarize(system.redundancy, rhos))
    return rows


def snr_sweep(
    signals, system: GaborSystem, snrs=(math.inf, 40, 20, 10, 0), seed: int = 0, clip: Optional[float] = None
) -> list:
    """Batch-mean rho after coefficient-domain noise at each SNR (dB)."""
    rows = []
    for snr in snrs:
        rng = np.random.default_rng(seed)
        rhos = []
        for s in signals:
            s = np.asarray(getattr(s, "samples", s), dtype=float)
            spec = add_coefficient_noise(dgt(_fit(s, system.L), system), snr, rng)
            rhos.append(rho(log_magnitude(spec), clip))
        rows.append(_summarize(snr, rhos))
    return rows


def _fit(s: np.ndarray, L: int) -> np.ndarray:
    """Zero-pad or truncate to length ``L``."""
    if s.size >= L:
        return s[:L]
    return np.concatenate([s, np.zeros(L - s.size)])


def write_sweep_csv(rows: Sequence[SweepRow], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["redundancy_or_snr", "mean_rho", "std_rho", "n"])
        for r in rows:
            w.writerow([f"{r.value:g}", f"{r.mean_rho:.6f}", f"{r.std_rho:.6f}", r.n])


def sweep_geometry(redundancy: int, min_length: int = 16000) -> tuple:
    """``(a, M, L)`` with ``M = R a``, ``a M = 4 L`` and ``L >= min_length``.

    The constraint forces ``L = R a**2 / 4`` and ``4 | a``; the smallest
    such hop is taken, which gives the reference (128, 512, 16384) at R=4.
    """
    if redundancy < 1 or int(redundancy) != redundancy:
        raise ParameterError(f"redundancy must be a positive integer, got {redundancy}")
    R = int(redundancy)
    a = 4
    while R * a * a // 4 < min_length:
        a += 4
    return a, R * a, R * a * a // 4


def sweep_system(redundancy: int, window: str = "gauss", lam: float = 4.0, min_length: int = 16000) -> GaborSystem:
    a, M, L = sweep_geometry(redundancy, min_length)
    return GaborSystem(make_window(window, lam, L, M), a, M, L, lam)
