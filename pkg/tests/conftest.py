import os
from pathlib import Path

import numpy as np
import pytest

from rrbe.cipher import KeyMaterial, KeyRole
from rrbe.image import load_pgm

CORPUS = Path(os.environ.get("RRBE_CORPUS", Path(__file__).resolve().parents[1] / "corpus"))


def make_keys(seed=0, nonce=None):
    rng = np.random.default_rng(seed)
    nonce = nonce or rng.bytes(12)
    return tuple(KeyMaterial(role, rng.bytes(16), nonce) for role in KeyRole)


@pytest.fixture
def keys():
    return make_keys(7)


@pytest.fixture(scope="session")
def lena():
    path = CORPUS / "lena.pgm"
    if not path.exists():
        pytest.skip("corpus not available")
    return load_pgm(path)


@pytest.fixture(scope="session")
def patch(lena):
    """A 64x64 piece of a natural image: fast but with realistic texture."""
    return lena[200:264, 240:304].copy()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, printed after the run
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
