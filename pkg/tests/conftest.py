import numpy as np
import pytest

from isac_pf.core import RadarConfig, Scheme


@pytest.fixture
def tiny_pulsed():
    """N_t = N_r = 2, N_p = 2, L = N_cr = 8; the pulse occupies 3 samples."""
    return RadarConfig(f_c=10e9, B=1e6, P_t=1.0, N_t=2, N_r=2, T_t=1e-3, N_p=2, T_c=1e-6, M=1,
                       N_c=2, scheme=Scheme.PULSED, snr_db=10.0, T_r=8e-6)


@pytest.fixture
def small_pulsed():
    """A pulsed station with a few OFDM symbols and a long silent slot."""
    return RadarConfig(f_c=10e9, B=20e6, P_t=2.0, N_t=4, N_r=3, T_t=1e-2, N_p=3, T_c=0.4e-6, M=2,
                       N_c=16, scheme=Scheme.PULSED, snr_db=0.0, T_r=10e-6)


@pytest.fixture
def small_cw():
    return RadarConfig(f_c=10e9, B=51.2e6, P_t=1.0, N_t=4, N_r=4, T_t=0.05, N_p=4, T_c=1e-6, M=1,
                       N_c=64, scheme=Scheme.CW, snr_db=-10.0)


@pytest.fixture
def baseline_cw():
    return RadarConfig(f_c=10e9, B=51.2e6, P_t=1.0, N_t=64, N_r=64, T_t=0.05, N_p=1, T_c=1e-6, M=1,
                       N_c=256, scheme=Scheme.CW, snr_db=-10.0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def report_criterion():
    """Record a one-line verdict that is echoed in the terminal summary."""

    def _report(label: str, passed: bool, detail: str) -> bool:
        line = f"[{'PASS' if passed else 'FAIL'}] {label}: {detail}"
        _ACCEPTANCE_LINES.append(line)
        print(line)
        return passed

    return _report


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
