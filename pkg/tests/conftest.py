import numpy as np
import pytest

from gaitmixer import data as D
from gaitmixer.config import ModelConfig


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def tiny_cfg():
    return ModelConfig(d_model=8, heads=2, spatial_blocks=1, temporal_blocks=1, kernel_size=7,
                       embed_dim=6, temporal_heads=2)


@pytest.fixture(scope="session")
def small_manifest():
    """4 subjects x 4 sequences (NM1-4), in memory."""
    return D.synthesize_gait(4, 4, np.random.default_rng(7))


@pytest.fixture(scope="session")
def casia_manifest():
    """3 subjects, full NM/BG/CL schedule, rendered at 3 views."""
    spec = D.SynthSpec(views=(0, 90, 180))
    return D.synthesize_gait(3, 10, np.random.default_rng(11), spec)


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(lines):
        terminalreporter.write_line(line)
