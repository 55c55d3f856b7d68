"""Training features: peak-normalized, clipped log-magnitudes scaled to [-1, 1]."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from .consistency import consistency
from .errors import DegenerateInputError, ParameterError, RangeError, ShapeError
from .gabor import GaborSystem, Spectrogram
from .phase import LogMagnitude

DEFAULT_R = 10.0


@dataclass(frozen=True, eq=False)
class FeatureTensor:
    """``(M/2) x N`` features (Nyquist row dropped) with the scaling used."""

    values: np.ndarray
    r: float
    peak: float
    system: GaborSystem

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        rows, cols = self.system.shape
        if v.shape != (rows - 1, cols):
            raise ShapeError(f"feature shape {v.shape} does not match {(rows - 1, cols)}")
        if not np.all((v >= -1) & (v <= 1)):
            raise RangeError("feature values must lie in [-1, 1]")
        if not (self.r > 0 and self.peak > 0):
            raise ParameterError("r and peak must be positive")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def shape(self):
        return self.values.shape


def _to_feature(x: np.ndarray, r: float) -> np.ndarray:
    return x / (r / 2) + 1


def dataset_peak(specs: Sequence[Spectrogram]) -> float:
    """Largest coefficient magnitude over a whole dataset."""
    if len(specs) == 0:
        raise ParameterError("empty dataset")
    return max(float(s.magnitude.max()) for s in specs)


def preprocess(spec: Spectrogram, r: float = DEFAULT_R, peak: Optional[float] = None) -> FeatureTensor:
    """``clip(ln(|S| / peak), -r, 0) / (r/2) + 1`` without the Nyquist row.

    ``peak`` defaults to the spectrogram's own maximum; pass a dataset-wide
    value (see :func:`dataset_peak`) to share one normalization.
    """
    if not r > 0:
        raise ParameterError(f"r must be positive, got {r}")
    mag = spec.magnitude
    own = float(mag.max())
    if own == 0:
        raise DegenerateInputError("spectrogram is identically zero")
    if peak is None:
        peak = own
    elif peak < own:
        raise ParameterError(f"peak {peak:g} is below the spectrogram maximum {own:g}")
    with np.errstate(divide="ignore"):
        x = np.log(mag[:-1] / peak)
    x = np.clip(x, -r, 0.0)
    return FeatureTensor(np.clip(_to_feature(x, r), -1.0, 1.0), float(r), float(peak), spec.system)


def _preimage(f: np.ndarray, r: float) -> np.ndarray:
    """Values ``y`` in [-r, 0] with ``_to_feature(y, r) == f`` bit for bit."""
    y = np.clip((f - 1) * (r / 2), -r, 0.0)
    bad = _to_feature(y, r) != f
    for step in range(1, 9):
        if not bad.any():
            break
        for direction in (np.inf, -np.inf):
            cand = y[bad]
            for _ in range(step):
                cand = np.nextafter(cand, direction)
            cand = np.clip(cand, -r, 0.0)
            ok = _to_feature(cand, r) == f[bad]
            idx = np.flatnonzero(bad)[ok]
            y.flat[idx] = cand[ok]
            bad.flat[idx] = False
    return y


def deprocess(feat: FeatureTensor) -> LogMagnitude:
    """Peak-relative log-magnitudes in [-r, 0]; the Nyquist row is set to -r.

    Each value is the exact preimage of its feature, so preprocessing the
    result again reproduces ``feat.values`` bit for bit.
    """
    v = np.asarray(feat.values)
    if not np.all((v >= -1) & (v <= 1)):
        raise RangeError("feature values must lie in [-1, 1]")
    y = _preimage(v, feat.r)
    full = np.vstack([y, np.full((1, y.shape[1]), -feat.r)])
    return LogMagnitude(full, feat.system, floor=-feat.r, peak=feat.peak)


def from_logmag(logmag: LogMagnitude, r: float = DEFAULT_R) -> FeatureTensor:
    """Features of a log-magnitude (e.g. a network output).

    Values are taken as relative to ``logmag.peak`` when it is set (as
    after :func:`deprocess`); otherwise they are shifted to peak 0 first.
    """
    x = np.asarray(logmag.values)
    if logmag.peak is None:
        x = x - x.max()
    x = np.clip(x[:-1], -r, 0.0)
    peak = 1.0 if logmag.peak is None else float(logmag.peak)
    return FeatureTensor(np.clip(_to_feature(x, r), -1.0, 1.0), float(r), peak, logmag.system)


# ---------------------------------------------------------------------------
# batch statistics

@dataclass(frozen=True, eq=False)
class BatchStats:
    counts: np.ndarray
    edges: np.ndarray
    mean: float
    std: float
    mean_rho: Optional[float]
    n: int

    def rows(self):
        """``(lower, upper, count)`` per histogram bin."""
        return list(zip(self.edges[:-1], self.edges[1:], self.counts))


Item = Union[FeatureTensor, LogMagnitude]


def _logmag_of(item: Item) -> LogMagnitude:
    return deprocess(item) if isinstance(item, FeatureTensor) else item


def batch_stats(batch: Sequence[Item], bins: int = 64, with_rho: bool = True) -> BatchStats:
    """Histogram over ``[min, max]`` of all values, moments and mean rho."""
    if len(batch) == 0:
        raise ParameterError("empty batch")
    values = np.concatenate([np.asarray(x.values).ravel() for x in batch])
    lo, hi = float(values.min()), float(values.max())
    if lo == hi:
        hi = lo + 1.0 if lo == 0 else lo + abs(lo)
    counts, edges = np.histogram(values, bins=bins, range=(lo, hi))
    mean_rho = None
    if with_rho and all(x.system.lam for x in batch):
        mean_rho = float(np.mean([consistency(_logmag_of(x)).rho for x in batch]))
    return BatchStats(counts, edges, float(values.mean()), float(values.std()), mean_rho, len(batch))


def tail_mass(values: np.ndarray, fraction: float = 0.01) -> float:
    """Share of the total sum carried by the largest ``fraction`` of values."""
    v = np.sort(np.asarray(values, dtype=float).ravel())[::-1]
    k = max(1, int(math.ceil(fraction * v.size)))
    total = v.sum()
    if total <= 0:
        raise ParameterError("values must have a positive sum")
    return float(v[:k].sum() / total)


def write_histogram_csv(stats: BatchStats, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["lower", "upper", "count"])
        for lo, hi, c in stats.rows():
            w.writerow([f"{lo:.9g}", f"{hi:.9g}", int(c)])
