"""Discrete Gabor transform on the torus Z_L.

Windows are stored peak-centered: ``samples[c]`` with ``c = len(samples) // 2``
is the value at time 0, ``samples[c - k]`` the value at time ``-k``.  Only the
painless case (window support at most ``M``) is supported, which makes the
frame operator diagonal and the canonical dual a pointwise division.

Coefficients are kept one-sided, rows ``0 .. M/2`` (DC through Nyquist).
"""
from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Optional, Union

import numpy as np

from .errors import (
    ConventionError,
    IllConditionedFrameError,
    ParameterError,
    ShapeError,
    UnsupportedSystemError,
)

logger = logging.getLogger(__name__)

#: Redundancy below which magnitude-only work becomes unreliable.
MIN_RELIABLE_REDUNDANCY = 4


class Convention(enum.IntEnum):
    """Phase convention of a coefficient matrix; values are the TFSG codes."""

    FREQUENCY_INVARIANT = 0
    TIME_INVARIANT = 1
    SIMPLIFIED_TIME_INVARIANT = 2

    @classmethod
    def parse(cls, value: Union[str, int, "Convention"]) -> "Convention":
        if isinstance(value, cls):
            return value
        if isinstance(value, (int, np.integer)):
            return cls(int(value))
        key = str(value).strip().lower().replace("-", "_")
        aliases = {
            "fi": cls.FREQUENCY_INVARIANT,
            "frequency_invariant": cls.FREQUENCY_INVARIANT,
            "ti": cls.TIME_INVARIANT,
            "time_invariant": cls.TIME_INVARIANT,
            "sti": cls.SIMPLIFIED_TIME_INVARIANT,
            "simplified_time_invariant": cls.SIMPLIFIED_TIME_INVARIANT,
        }
        try:
            return aliases[key]
        except KeyError:
            raise ParameterError(f"unknown phase convention {value!r}") from None

    @property
    def short(self) -> str:
        return ("fi", "ti", "sti")[self.value]


FI = Convention.FREQUENCY_INVARIANT
TI = Convention.TIME_INVARIANT
STI = Convention.SIMPLIFIED_TIME_INVARIANT


# ---------------------------------------------------------------------------
# windows

@dataclass(frozen=True, eq=False)
class Window:
    """Real window stored peak-centered.

    ``kind`` is ``"gauss"``, ``"hann"`` or ``"custom"``; ``lam`` is the nominal
    time-frequency ratio of a Gaussian and ``None`` otherwise.
    """

    samples: np.ndarray
    kind: str = "custom"
    lam: Optional[float] = None
    normalization: str = "peak"

    def __post_init__(self):
        g = np.array(self.samples, dtype=float).ravel()
        if g.size < 1:
            raise ParameterError("window needs at least one sample")
        if not np.all(np.isfinite(g)):
            raise ParameterError("window samples must be finite")
        g.setflags(write=False)
        object.__setattr__(self, "samples", g)

    def __len__(self):
        return self.samples.size

    @property
    def center(self) -> int:
        return self.samples.size // 2

    @property
    def offsets(self) -> np.ndarray:
        """Time position of every stored sample relative to the peak."""
        return np.arange(self.samples.size) - self.center

    def periodized(self, L: int) -> np.ndarray:
        """Length-``L`` window with time 0 at index 0 (circular layout)."""
        if self.samples.size > L:
            raise ParameterError(f"window length {self.samples.size} exceeds L={L}")
        full = np.zeros(L)
        full[self.offsets % L] = self.samples
        return full

    def normalized(self, normalization: str) -> "Window":
        if normalization == "peak":
            scale = np.max(np.abs(self.samples))
        elif normalization == "l2":
            scale = np.linalg.norm(self.samples)
        else:
            raise ParameterError(f"unknown normalization {normalization!r}")
        if scale == 0:
            raise ParameterError("cannot normalize an all-zero window")
        return Window(self.samples / scale, self.kind, self.lam, normalization)


def make_gaussian_window(lam: float, L: int, Lg: Optional[int] = None) -> Window:
    """Sampled Gaussian ``exp(-pi * t**2 / (lam * L))`` on ``Lg`` samples.

    The time-frequency ratio of the untruncated window on Z_L is exactly
    ``lam``.  Keep ``Lg`` above roughly ``12 * sqrt(lam * L / (2 * pi))``
    samples if the spectral spread matters; shorter supports truncate visibly.
    """
    if not lam > 0:
        raise ParameterError(f"lambda must be positive, got {lam}")
    if L < 1:
        raise ParameterError(f"signal length must be positive, got {L}")
    if Lg is None:
        Lg = L
    if Lg < 1 or Lg > L:
        raise ParameterError(f"support length must satisfy 1 <= Lg <= L, got Lg={Lg}, L={L}")
    t = np.arange(Lg) - Lg // 2
    return Window(np.exp(-np.pi * t**2 / (lam * L)), kind="gauss", lam=float(lam))


def make_hann_window(Lg: int) -> Window:
    """Periodic Hann window of length ``Lg``, peak-normalized.

    In stored order the peak sits at index ``Lg // 2``, e.g. ``Lg=4`` gives
    ``[0, 0.5, 1, 0.5]``.
    """
    if Lg < 1:
        raise ParameterError(f"Hann length must be positive, got {Lg}")
    g = 0.5 - 0.5 * np.cos(2 * np.pi * np.arange(Lg) / Lg)
    if Lg == 1:
        g = np.ones(1)
    return Window(g / g.max(), kind="hann")


#: A Hann window of length ``Lg`` matches a Gaussian of width ``0.25645 * Lg**2``.
HANN_GAUSS_FIT = 0.25645


def hann_length(lam: float, L: int, M: int) -> int:
    """Even Hann length whose Gaussian fit has width ``lam * L``, at most ``M``."""
    Lg = int(round(math.sqrt(lam * L / HANN_GAUSS_FIT)))
    Lg += Lg % 2
    return max(2, min(M, Lg))


def make_window(kind: str, lam: float, L: int, M: int, Lg: Optional[int] = None) -> Window:
    """Gaussian (``Lg`` defaults to ``min(L, M)``) or Hann (matched to ``lam``)."""
    if kind in ("gauss", "gaussian"):
        return make_gaussian_window(lam, L, min(L, M) if Lg is None else Lg)
    if kind == "hann":
        return make_hann_window(hann_length(lam, L, M) if Lg is None else Lg)
    raise ParameterError(f"unknown window kind {kind!r}")


def _spread(weights: np.ndarray, positions: np.ndarray) -> float:
    w = weights / weights.sum()
    mu = np.dot(w, positions)
    return math.sqrt(max(np.dot(w, (positions - mu) ** 2), 0.0))


def tf_ratio(window: Window, L: int) -> float:
    """Width ratio ``sigma(g / |g|_1) / sigma(ghat / |ghat|_1)`` on Z_L.

    Both spreads are standard deviations of the centered index positions,
    weighted by absolute values; ``ghat`` is the L-point DFT of the
    zero-extended window.
    """
    g = np.abs(window.periodized(L))
    if not np.any(g > 0):
        raise ParameterError("tf_ratio of an all-zero window is undefined")
    positions = np.fft.fftfreq(L, 1.0 / L)
    spread_t = _spread(g, positions)
    spread_f = _spread(np.abs(np.fft.fft(window.periodized(L))), positions)
    if spread_f == 0:
        raise ParameterError("window spectrum has zero spread")
    return spread_t / spread_f


# ---------------------------------------------------------------------------
# systems and coefficient containers

@dataclass(frozen=True, eq=False)
class GaborSystem:
    """Window, hop ``a``, channel count ``M`` and signal length ``L``.

    ``lam`` defaults to the nominal ratio of a Gaussian window and to
    :func:`tf_ratio` for anything else.
    """

    window: Window
    a: int
    M: int
    L: int
    lam: Optional[float] = None

    def __post_init__(self):
        for name in ("a", "M", "L"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ParameterError(f"{name} must be a positive integer, got {value}")
            object.__setattr__(self, name, int(value))
        a, M, L = self.a, self.M, self.L
        if L % a:
            raise ParameterError(f"hop a={a} must divide L={L}")
        if L % M:
            raise ParameterError(f"channel count M={M} must divide L={L}")
        if M % 2:
            raise ParameterError(f"channel count M={M} must be even")
        if M < a:
            raise ParameterError(f"redundancy M/a={M / a:g} is below 1")
        if len(self.window) > L:
            raise ParameterError(f"window length {len(self.window)} exceeds L={L}")
        lam = self.lam
        if lam is None:
            lam = self.window.lam if self.window.lam is not None else tf_ratio(self.window, L)
        if not lam > 0:
            raise ParameterError(f"lambda must be positive, got {lam}")
        object.__setattr__(self, "lam", float(lam))

    @property
    def b(self) -> int:
        return self.L // self.M

    @property
    def N(self) -> int:
        return self.L // self.a

    @property
    def rows(self) -> int:
        return self.M // 2 + 1

    @property
    def shape(self) -> tuple:
        return (self.rows, self.N)

    @property
    def redundancy(self) -> float:
        return self.M / self.a

    @property
    def low_redundancy(self) -> bool:
        """True when ``M/a`` is below the reliability threshold of 4."""
        return self.redundancy < MIN_RELIABLE_REDUNDANCY

    @property
    def painless(self) -> bool:
        return len(self.window) <= self.M

    def same_geometry(self, other: "GaborSystem") -> bool:
        return (self.a, self.M, self.L) == (other.a, other.M, other.L) and math.isclose(
            self.lam, other.lam
        )

    @cached_property
    def dual(self) -> Window:
        return canonical_dual(self)

    def with_window(self, window: Window) -> "GaborSystem":
        return GaborSystem(window, self.a, self.M, self.L, self.lam)

    def describe(self) -> str:
        return (
            f"a={self.a} M={self.M} L={self.L} Lg={len(self.window)} "
            f"window={self.window.kind} lambda={self.lam:g} redundancy={self.redundancy:g}"
        )


def reference_system(lam: float = 4.0, a: int = 128, M: int = 512, L: int = 16384) -> GaborSystem:
    """Gaussian system with the reference 1 s / 16 kHz geometry."""
    return GaborSystem(make_gaussian_window(lam, L, min(L, M)), a, M, L, lam)


@dataclass(frozen=True)
class Signal:
    samples: np.ndarray
    sample_rate: int = 16000

    def __post_init__(self):
        s = np.array(self.samples, dtype=float).ravel()
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)

    def __len__(self):
        return self.samples.size


@dataclass(frozen=True, eq=False)
class Spectrogram:
    """One-sided coefficients ``(M/2 + 1, N)`` tagged with system and convention."""

    coefficients: np.ndarray
    system: GaborSystem
    convention: Convention = FI

    def __post_init__(self):
        c = np.array(self.coefficients, dtype=complex)
        if c.shape != self.system.shape:
            raise ShapeError(
                f"coefficient shape {c.shape} does not match system shape {self.system.shape}"
            )
        if not np.all(np.isfinite(c)):
            raise ParameterError("spectrogram coefficients must be finite")
        c.setflags(write=False)
        object.__setattr__(self, "coefficients", c)
        object.__setattr__(self, "convention", Convention.parse(self.convention))

    @property
    def shape(self) -> tuple:
        return self.coefficients.shape

    @property
    def magnitude(self) -> np.ndarray:
        return magnitude(self.coefficients)

    def norm(self) -> float:
        return onesided_norm(self.coefficients)

    def replace(self, coefficients=None, convention=None) -> "Spectrogram":
        return Spectrogram(
            self.coefficients if coefficients is None else coefficients,
            self.system,
            self.convention if convention is None else convention,
        )

    def __add__(self, other):
        _check_compatible(self, other)
        return self.replace(self.coefficients + other.coefficients)

    def __sub__(self, other):
        _check_compatible(self, other)
        return self.replace(self.coefficients - other.coefficients)

    def __mul__(self, scalar):
        return self.replace(self.coefficients * scalar)

    __rmul__ = __mul__


def _check_compatible(x: Spectrogram, y: Spectrogram):
    if not isinstance(y, Spectrogram):
        return NotImplemented
    if x.shape != y.shape or x.convention != y.convention:
        raise ShapeError("spectrograms differ in shape or convention")


def magnitude(z) -> np.ndarray:
    """Coefficient magnitudes.

    ``hypot`` of the parts rather than ``np.abs``: the SIMD complex-abs loop
    rounds differently from its scalar tail, so ``np.abs`` of one value can
    depend on where it sits in the array.
    """
    z = np.asarray(z)
    return np.hypot(z.real, z.imag)


def onesided_weights(rows: int) -> np.ndarray:
    """Row weights turning a one-sided norm into the full-spectrum norm."""
    w = np.full(rows, 2.0)
    w[0] = 1.0
    w[-1] = 1.0
    return w


def onesided_norm(x: np.ndarray) -> float:
    """Euclidean norm of the full matrix represented by one-sided rows."""
    x = np.asarray(x)
    w = onesided_weights(x.shape[0])
    return float(np.sqrt(np.sum(w[:, None] * magnitude(x) ** 2)))


# ---------------------------------------------------------------------------
# dual window

def frame_diagonal(system: GaborSystem) -> np.ndarray:
    """``M * sum_k g[l - k a]**2`` for one period ``l = 0 .. a-1``."""
    full = system.window.periodized(system.L) ** 2
    return system.M * full.reshape(system.N, system.a).sum(axis=0)


def canonical_dual(system: GaborSystem) -> Window:
    """Canonical dual window of a painless system.

    Raises
    ------
    UnsupportedSystemError
        If the window is longer than ``M``.
    IllConditionedFrameError
        If the diagonal of the frame operator drops below ``1e-12`` of its
        maximum anywhere.
    """
    if not system.painless:
        raise UnsupportedSystemError(
            f"window length {len(system.window)} exceeds M={system.M}; "
            "only painless systems are supported"
        )
    d = frame_diagonal(system)
    if d.max() <= 0 or d.min() < 1e-12 * d.max():
        raise IllConditionedFrameError(
            f"frame diagonal ranges over [{d.min():.3g}, {d.max():.3g}]; "
            "the system is not an invertible frame"
        )
    w = system.window
    diag = d[w.offsets % system.a]
    return Window(w.samples / diag, kind="custom", normalization="dual")


# ---------------------------------------------------------------------------
# phase factors

def _unit_phase(numerator: np.ndarray, denominator: int, sign: int) -> np.ndarray:
    """``exp(sign * 2j pi numerator / denominator)`` reduced exactly mod denominator."""
    k = np.mod(numerator, denominator).astype(float)
    return np.exp(sign * 2j * np.pi * k / denominator)


def _rotate(z: np.ndarray, factor: np.ndarray) -> np.ndarray:
    """Multiply by unit-modulus factors while keeping ``abs`` bit-identical.

    The rounded product is nudged by a few ulps per component until its
    :func:`magnitude` equals the original one; the phase moves by ~1e-16.
    """
    z = np.asarray(z, dtype=complex)
    target = magnitude(z)
    out = np.array(z * factor, dtype=complex)
    todo = np.nonzero(magnitude(out) != target)
    if not todo[0].size:
        return out
    x0, y0, r = out.real[todo], out.imag[todo], target[todo]
    best = out[todo]
    fixed = np.zeros(r.shape, dtype=bool)
    for radius in range(1, 13):
        for dx in range(-radius, radius + 1):
            for dy in range(-radius, radius + 1):
                if max(abs(dx), abs(dy)) != radius:
                    continue
                left = np.nonzero(~fixed)[0]
                if not left.size:
                    break
                xs = _ulp_step(x0[left], dx)
                ys = _ulp_step(y0[left], dy)
                hit = np.hypot(xs, ys) == r[left]
                best[left[hit]] = xs[hit] + 1j * ys[hit]
                fixed[left[hit]] = True
        if fixed.all():
            break
    if not fixed.all():
        logger.debug("%d coefficients kept a 1-ulp magnitude change", int((~fixed).sum()))
    out[todo] = best
    return out


def _ulp_step(x: np.ndarray, steps: int) -> np.ndarray:
    direction = np.inf if steps > 0 else -np.inf
    for _ in range(abs(steps)):
        x = np.nextafter(x, direction)
    return x


def _frame_shift(system: GaborSystem) -> int:
    c = len(system.window) // 2
    if c % system.a:
        raise ConventionError(
            f"hop size a={system.a} must be a divisor of floor(Lg/2)={c} "
            "to convert to or from the simplified time-invariant convention"
        )
    return c // system.a


def _fi_to_ti_factor(system: GaborSystem) -> np.ndarray:
    m = np.arange(system.rows)[:, None]
    n = np.arange(system.N)[None, :]
    return _unit_phase(m * n * system.a, system.M, +1)


def _to_ti(coef: np.ndarray, system: GaborSystem, source: Convention) -> np.ndarray:
    if source == TI:
        return coef
    if source == FI:
        return _rotate(coef, _fi_to_ti_factor(system))
    # STI[m, n] = exp(-2 pi i m c / M) TI[m, n + c/a]
    c = len(system.window) // 2
    shift = _frame_shift(system)
    m = np.arange(system.rows)[:, None]
    rotated = _rotate(coef, _unit_phase(m * c, system.M, +1))
    return np.roll(rotated, shift, axis=1)


def _from_ti(coef: np.ndarray, system: GaborSystem, target: Convention) -> np.ndarray:
    if target == TI:
        return coef
    if target == FI:
        return _rotate(coef, np.conj(_fi_to_ti_factor(system)))
    c = len(system.window) // 2
    shift = _frame_shift(system)
    m = np.arange(system.rows)[:, None]
    shifted = np.roll(coef, -shift, axis=1)
    return _rotate(shifted, _unit_phase(m * c, system.M, -1))


def convert_convention(spec: Spectrogram, target) -> Spectrogram:
    """Re-express coefficients in another phase convention.

    FI and TI differ by the factor ``exp(2 pi i m n a / M)``.  The simplified
    time-invariant convention additionally delays frames by
    ``floor(Lg/2) / a``, so it requires ``a`` to divide ``floor(Lg/2)``.
    Magnitudes are preserved bit for bit (up to the frame permutation for STI).
    """
    target = Convention.parse(target)
    if target == spec.convention:
        return spec
    if STI in (target, spec.convention):
        _frame_shift(spec.system)
    ti = _to_ti(spec.coefficients, spec.system, spec.convention)
    return Spectrogram(_from_ti(ti, spec.system, target), spec.system, target)


# ---------------------------------------------------------------------------
# analysis / synthesis

def _as_samples(signal) -> np.ndarray:
    return signal.samples if isinstance(signal, Signal) else np.asarray(signal, dtype=float)


def _frame_positions(window: Window, convention: Convention) -> np.ndarray:
    """Sample positions of one frame relative to ``n * a``.

    FI and TI center the window on ``n * a``; STI starts it there.
    """
    if convention == STI:
        return np.arange(len(window))
    return window.offsets


def dgt(signal, system: GaborSystem, convention=FI) -> Spectrogram:
    """Forward transform ``sum_l s[l] g[l - n a] exp(-2 pi i m l / M)``.

    Evaluated frame by frame with an M-point FFT of the windowed segment
    (circular indexing).  TI and STI frames are transformed directly; FI is
    TI times ``exp(-2 pi i m n a / M)``.
    """
    s = _as_samples(signal)
    if s.ndim != 1 or s.size != system.L:
        raise ShapeError(f"signal length {s.size} does not match L={system.L}")
    if not system.painless:
        raise UnsupportedSystemError(f"window length {len(system.window)} exceeds M={system.M}")
    convention = Convention.parse(convention)
    w = system.window
    pos = _frame_positions(w, convention)
    idx = (np.arange(system.N)[:, None] * system.a + pos[None, :]) % system.L
    frames = np.zeros((system.N, system.M))
    frames[:, pos % system.M] = s[idx] * w.samples
    coef = np.fft.rfft(frames, axis=1).T
    if convention == FI:
        coef *= np.conj(_fi_to_ti_factor(system))
    return Spectrogram(coef, system, convention)


def idgt(spec: Spectrogram, dual: Optional[Window] = None) -> Signal:
    """Overlap-add synthesis with ``dual`` (canonical dual by default).

    One-sided input stands for its conjugate-symmetric extension; the
    imaginary parts of the DC and Nyquist rows therefore do not contribute.
    """
    system = spec.system
    if spec.shape != system.shape:
        raise ShapeError(f"coefficient shape {spec.shape} does not match {system.shape}")
    if dual is None:
        dual = system.dual
    if len(dual) != len(system.window):
        raise ShapeError(
            f"dual window length {len(dual)} differs from analysis window length {len(system.window)}"
        )
    coef = spec.coefficients
    if spec.convention == FI:
        coef = coef * _fi_to_ti_factor(system)
    frames = np.fft.irfft(coef, n=system.M, axis=0).T * system.M
    pos = _frame_positions(dual, spec.convention)
    contrib = frames[:, pos % system.M] * dual.samples
    idx = (np.arange(system.N)[:, None] * system.a + pos[None, :]) % system.L
    s = np.bincount(idx.ravel(), weights=contrib.ravel(), minlength=system.L)
    return Signal(s)


def project(spec: Spectrogram) -> Spectrogram:
    """Closest consistent coefficients, ``dgt(idgt(spec))``."""
    return dgt(idgt(spec), spec.system, spec.convention)
