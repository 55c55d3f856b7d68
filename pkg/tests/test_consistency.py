import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import pearson_by_definition
from tfgen import (
    LogMagnitude,
    ParameterError,
    ShapeError,
    Spectrogram,
    UndefinedCorrelationError,
    dgt,
    log_magnitude,
    project,
    reconstruct_phase,
    reference_system,
)
from tfgen.consistency import (
    MIN_DB,
    _weighted_norm,
    batch_rho,
    consistency,
    gamma,
    normalized_clip,
    pearson,
    projection_error,
    random_logmag,
    redundancy_sweep,
    rho,
    rspe,
    snr_sweep,
    sweep_geometry,
    sweep_system,
    write_sweep_csv,
)
from tfgen.gabor import magnitude

CLIP = 10.0


def random_coefficients(system, rng):
    return rng.standard_normal(system.shape) + 1j * rng.standard_normal(system.shape)


def laplacian_solution(system, k=3, c=0.05, m0=None):
    """A log-magnitude whose two Laplacian terms are exactly proportional.

    ``-(pi lam L / M^2) m^2`` cancels the frequency constant; the
    ``cos(w n) cosh(kappa (m - m0))`` ripple has ``d_n^2`` and ``d_m^2``
    in the ratio fixed by the Laplacian relation.
    """
    gam = system.lam * system.L
    A = gam / system.a**2
    B = system.M**2 / gam
    w = 2 * math.pi * k / system.N
    kappa = math.acosh(1 + (A / B) * (1 - math.cos(w)))
    m = np.arange(system.rows)[:, None]
    n = np.arange(system.N)[None, :]
    m0 = system.rows / 2 if m0 is None else m0
    values = -(math.pi * gam / system.M**2) * m**2 + c * np.cos(w * n) * np.cosh(kappa * (m - m0)) / math.cosh(kappa * m0)
    return LogMagnitude(values, system, floor=min(-30.0, values.min() - 1))


# ---------------------------------------------------------------------------
# pearson

def test_pearson_examples():
    assert pearson([1, 2, 3], [1, 2, 3]) == pytest.approx(1.0, abs=1e-15)
    assert pearson([1, 2, 3], [3, 2, 1]) == pytest.approx(-1.0, abs=1e-15)
    assert pearson([1, 2, 3, 4], [1, 3, 2, 4]) == pytest.approx(0.8, abs=1e-12)
    assert pearson_by_definition([1, 2, 3, 4], [1, 3, 2, 4]) == pytest.approx(0.8, abs=1e-12)


def test_pearson_zero_variance():
    with pytest.raises(UndefinedCorrelationError):
        pearson([1, 1, 1], [1, 2, 3])


def test_pearson_length_mismatch():
    with pytest.raises(ShapeError):
        pearson([1, 2], [1, 2, 3])


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3)), min_size=3, max_size=40))
def test_pearson_matches_definition(pairs):
    x, y = map(list, zip(*pairs))
    if np.ptp(x) < 1e-6 or np.ptp(y) < 1e-6:
        return
    assert pearson(x, y) == pytest.approx(pearson_by_definition(x, y), abs=1e-9)


# ---------------------------------------------------------------------------
# rho

def test_rho_one_on_laplacian_solution():
    system = reference_system()
    report = consistency(laplacian_solution(system))
    assert report.status == "ok"
    assert report.rho == pytest.approx(1.0, abs=1e-6)


def test_laplacian_residual_of_solution_is_proportional():
    system = reference_system()
    report = consistency(laplacian_solution(system))
    assert report.laplacian_residual.shape == system.shape
    assert report.dm_time.shape == report.dm_freq.shape == system.shape


def test_pure_quadratic_has_constant_terms():
    # the exact quadratic makes both terms constant away from the wrap seam in time
    system = reference_system()
    m = np.arange(system.rows)[:, None]
    n = np.arange(system.N)[None, :]
    gam = system.lam * system.L
    values = -(math.pi * system.a**2 / (2 * gam)) * (n - system.N / 2) ** 2 - (math.pi * gam / (2 * system.M**2)) * m**2
    report = consistency(LogMagnitude(values, system, floor=values.min()))
    interior = report.laplacian_residual[1:-1, 1:-1]
    assert np.abs(interior).max() <= 1e-9
    assert np.ptp(report.dm_time[1:-1, 1:-1]) <= 1e-9
    assert np.ptp(report.dm_freq[1:-1, 1:-1]) <= 1e-9


def test_constant_logmag_undefined():
    system = reference_system()
    report = consistency(LogMagnitude(np.full(system.shape, -3.0), system))
    assert report.status == "undefined" and report.rho == 0.0


def test_too_small():
    from tfgen import GaborSystem, make_gaussian_window

    system = GaborSystem(make_gaussian_window(1, 4, 2), 2, 2, 4)
    with pytest.raises(ShapeError):
        consistency(LogMagnitude(np.zeros(system.shape), system))


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), shift=st.floats(-50, 50))
def test_rho_shift_invariant_and_bounded(seed, shift):
    system = reference_system()
    lm = random_logmag(system, seed)
    moved = LogMagnitude(lm.values + shift, system, floor=lm.floor + shift)
    a, b = consistency(lm), consistency(moved)
    assert -1.0 <= a.rho <= 1.0
    assert a.rho == pytest.approx(b.rho, abs=1e-9)
    np.testing.assert_allclose(a.dm_time, b.dm_time, atol=1e-9)
    np.testing.assert_allclose(a.dm_freq, b.dm_freq, atol=1e-9)


def test_normalized_clip():
    x = np.array([[0.0, -5.0], [-20.0, 3.0]])
    np.testing.assert_array_equal(normalized_clip(x, 10), [[-3.0, -8.0], [-10.0, 0.0]])
    assert normalized_clip(x, None) is x
    with pytest.raises(ParameterError):
        normalized_clip(x, 0)


def test_speech_rho_range(speech_ref):
    system = reference_system()
    rhos = batch_rho([log_magnitude(dgt(s, system)) for s in speech_ref], CLIP)
    assert 0.60 <= rhos.mean() <= 0.80


def test_random_below_speech(speech_ref):
    system = reference_system()
    speech = batch_rho([log_magnitude(dgt(s, system)) for s in speech_ref[:20]], CLIP).mean()
    noise = batch_rho([random_logmag(system, seed) for seed in range(20)], CLIP).mean()
    assert noise < speech


# ---------------------------------------------------------------------------
# gamma

def test_gamma_identical_and_symmetric(speech_ref):
    system = reference_system()
    A = [log_magnitude(dgt(s, system)) for s in speech_ref[:8]]
    B = [random_logmag(system, seed) for seed in range(8)]
    assert gamma(A, A, CLIP) == 0.0
    assert gamma(A, B, CLIP) == gamma(B, A, CLIP) > 0


def test_gamma_errors():
    system = reference_system()
    with pytest.raises(ParameterError):
        gamma([], [random_logmag(system)])
    other = sweep_system(8)
    with pytest.raises(ShapeError):
        gamma([random_logmag(system)], [random_logmag(other)])


def test_gamma_grows_as_snr_drops(speech_ref):
    system = reference_system()
    clean = [log_magnitude(dgt(s, system)) for s in speech_ref[:16]]
    rows = snr_sweep(speech_ref[:16], system, snrs=(math.inf, 40, 20, 10, 0), seed=3, clip=CLIP)
    base = rows[0].mean_rho
    assert base == pytest.approx(batch_rho(clean, CLIP).mean(), abs=1e-12)
    gaps = [abs(base - r.mean_rho) for r in rows[1:]]
    assert gaps[-1] > 0
    assert all(x < y for x, y in zip(gaps, gaps[1:]))


@pytest.mark.slow
def test_noise_monotone_at_redundancy_8(speech):
    system = sweep_system(8)
    rows = snr_sweep(speech[:64], system, seed=0, clip=CLIP)
    means = [r.mean_rho for r in rows]
    assert all(x > y for x, y in zip(means, means[1:]))


def test_redundancy_trend(speech):
    rows = redundancy_sweep(speech[:24], [sweep_system(4), sweep_system(8)], CLIP)
    assert rows[1].mean_rho > rows[0].mean_rho
    for R, row in zip((4, 8), rows):
        floor = batch_rho([random_logmag(sweep_system(R), s) for s in range(8)], CLIP).mean()
        assert row.mean_rho > floor


def test_sweep_geometry():
    assert sweep_geometry(4) == (128, 512, 16384)
    for R in (1, 2, 4, 8, 16, 32):
        a, M, L = sweep_geometry(R)
        assert M == R * a and a * M == 4 * L and L >= 16000 and a % 4 == 0
    with pytest.raises(ParameterError):
        sweep_geometry(0)


def test_sweep_csv(tmp_path, speech):
    rows = redundancy_sweep(speech[:3], [sweep_system(4)], CLIP)
    path = tmp_path / "sweep.csv"
    write_sweep_csv(rows, path)
    with open(path) as fh:
        out = list(csv.reader(fh))
    assert out[0] == ["redundancy_or_snr", "mean_rho", "std_rho", "n"]
    assert out[1][0] == "4" and out[1][3] == "3"
    assert float(out[1][1]) == pytest.approx(rows[0].mean_rho, abs=1e-6)


# ---------------------------------------------------------------------------
# projection error

def test_projection_error_consistent(speech_ref):
    system = reference_system()
    S = dgt(speech_ref[0], system)
    assert projection_error(S) <= 1e-9 * S.norm()


def test_projection_error_random():
    # frozen over 100 draws with default_rng(2024): min 0.8629, mean 0.8664;
    # the consistent part of white coefficients carries ~1/R of the energy
    system = reference_system()
    rng = np.random.default_rng(2024)
    ratios = []
    for _ in range(100):
        X = random_coefficients(system, rng)
        ratios.append(projection_error(Spectrogram(X, system)) / _weighted_norm(magnitude(X)))
    assert min(ratios) > 0.1
    assert min(ratios) == pytest.approx(0.8629, abs=5e-4)
    assert np.mean(ratios) == pytest.approx(math.sqrt(1 - 1 / system.redundancy), abs=5e-3)


def test_projection_error_idempotent_and_homogeneous():
    system = reference_system()
    rng = np.random.default_rng(7)
    S = Spectrogram(random_coefficients(system, rng), system)
    P = project(S)
    assert projection_error(P) <= 1e-9 * P.norm()
    e = projection_error(S)
    assert projection_error(S * 3.5) == pytest.approx(3.5 * e, rel=1e-12)
    assert projection_error(S * -2.0) == pytest.approx(2.0 * e, rel=1e-12)


# ---------------------------------------------------------------------------
# RSPE

def test_rspe_of_consistent_input():
    # the projection of a consistent matrix differs from it only by rounding
    system = reference_system()
    S = dgt(np.cos(2 * np.pi * 800 * np.arange(system.L) / system.L), system)
    assert rspe(log_magnitude(S, floor=-700), S) <= -140
    lm = LogMagnitude(np.full(system.shape, -30.0), system)
    zeroed = Spectrogram(np.zeros(system.shape, complex), system)
    assert rspe(lm, zeroed) == pytest.approx(0.0, abs=1e-12)


def test_rspe_zero_numerator_is_min_db():
    from tfgen.consistency import _db

    assert _db(0.0) == MIN_DB


def test_rspe_shape_mismatch():
    with pytest.raises(ShapeError):
        rspe(random_logmag(reference_system()), Spectrogram(np.zeros(sweep_system(8).shape), sweep_system(8)))


def test_rspe_white_noise():
    # frozen over default_rng(0..9): -4.65 to -4.58 dB
    system = reference_system()
    values = []
    for seed in range(10):
        X = random_coefficients(system, np.random.default_rng(seed))
        lm = LogMagnitude(np.log(magnitude(X)), system, floor=-60)
        values.append(rspe(lm, reconstruct_phase(lm)))
    assert min(values) >= -6.0
    assert min(values) == pytest.approx(-4.65, abs=0.05)
    assert max(values) == pytest.approx(-4.58, abs=0.05)


def test_rspe_speech(speech_ref):
    system = reference_system()
    values = []
    for s in speech_ref[:10]:
        lm = log_magnitude(dgt(s, system))
        values.append(rspe(lm, reconstruct_phase(lm)))
    assert np.mean(values) == pytest.approx(-22.0, abs=4.0)
