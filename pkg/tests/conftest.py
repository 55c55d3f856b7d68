import os
from pathlib import Path

import numpy as np
import pytest

from tfgen.store import read_wav

DATA = Path(__file__).parent / "data" / "speech"


def speech_paths():
    return sorted(DATA.glob("*.wav"))


def fit(samples, L):
    out = np.zeros(L)
    n = min(L, samples.size)
    out[:n] = samples[:n]
    return out


@pytest.fixture(scope="session")
def speech():
    """One-second 16 kHz speech clips as float arrays."""
    paths = speech_paths()
    if not paths:
        pytest.skip("speech corpus missing; run scripts/build_speech_corpus.py")
    return [read_wav(p).samples for p in paths]


@pytest.fixture(scope="session")
def speech_ref(speech):
    """Clips zero-padded to L=16384."""
    return [fit(s, 16384) for s in speech]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
