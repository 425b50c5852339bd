import numpy as np
import pytest

from mimocap import kernels
from mimocap.channel import FIVE_CLUSTER_PATHS, ChannelStats, build_channel_stats


@pytest.fixture(params=kernels.available_backends())
def backend(request):
    return request.param


@pytest.fixture(scope="session")
def five_cluster():
    """Five-path scenario at 0 dB; use ``.with_sigma2`` for other SNRs."""
    return build_channel_stats(FIVE_CLUSTER_PATHS, 4, 4, 1.0)


def random_correlation(n, rng, ridge=0.05):
    g = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    c = g @ g.conj().T + ridge * n * np.eye(n)
    d = 1.0 / np.sqrt(np.diag(c).real)
    return c * np.outer(d, d)


def random_stats(rng, t, r, L, sigma2):
    ct = np.array([random_correlation(t, rng) for _ in range(L)])
    cr = np.array([random_correlation(r, rng) for _ in range(L)])
    return ChannelStats(ct, cr, sigma2)


_ACCEPTANCE = []


def record_acceptance(line):
    _ACCEPTANCE.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)
