from __future__ import annotations

import numpy as np
import pytest
from hypothesis import settings

from shellfield.fock import _CACHE
from shellfield.shell import ShellConfig
from shellfield.testfn import packet

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")


def random_packet(rng: np.random.Generator, d: int = 2, complex_: bool = True, name: str | None = None):
    amp = complex(rng.normal(), rng.normal()) if complex_ else 1.0 + abs(rng.normal())
    carrier = rng.uniform(-2.0, 2.0, d) if complex_ else None
    return packet(rng.uniform(-1.0, 1.0, d), rng.uniform(0.6, 1.5, d), carrier, amp, name=name)


@pytest.fixture
def rng():
    return np.random.default_rng(20261019)


@pytest.fixture
def cfg2():
    return ShellConfig(mass=1.0, dimension=2)


@pytest.fixture(autouse=True)
def _fresh_pairing_cache():
    _CACHE.clear()
    yield
