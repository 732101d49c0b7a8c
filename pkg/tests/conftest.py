import numpy as np
import pytest

from capsketch import Element, FrequencyDistribution


@pytest.fixture
def toy_dist():
    """10 keys of weight 1, 2 of weight 5, 1 of weight 10: distinct 13, sum 30."""
    return FrequencyDistribution({1.0: 10, 5.0: 2, 10.0: 1})


@pytest.fixture
def toy_elements(toy_dist):
    els = []
    for w, c in sorted(toy_dist.entries.items()):
        for j in range(c):
            els.append(Element(b"w%g-%d" % (w, j), w))
    return els


def toy_laplace(t):
    """Closed form of the toy distribution's transform."""
    return 13.0 - 10.0 * np.exp(-t) - 2.0 * np.exp(-5.0 * t) - np.exp(-10.0 * t)
