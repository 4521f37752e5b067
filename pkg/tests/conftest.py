import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from raman_speckle.modes import AngularGrid
from raman_speckle.simulate import DetectorModel, ExperimentConfig

settings.register_profile(
    "default", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

# lines collected by test_acceptance, echoed in the terminal summary
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])


NOISY = DetectorModel(background_mean_image=50.0, read_noise_sigma=5.0, shot_noise=True, counts_per_photon=10.0)


@pytest.fixture
def small_cfg():
    """A 48x48 grid, few modes, noiseless detector: fast structural tests."""
    return ExperimentConfig(
        grid=AngularGrid(48, 48, 100e-6),
        n_modes=6,
        w0=0.6e-3,
        n_background=4,
        seed=11,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)
