"""Shared builders for the test suite."""
import numpy as np
import pytest

from eqnf.polymap import TruncatedMap, num_monomials


@pytest.fixture
def rand_map():
    """Builder: rand_map(rng, n, order, amp, with_linear, invertible)."""

    def make(rng, n, order, amp=0.5, with_linear=True, invertible=False):
        F = TruncatedMap.zero(n, order)
        for d in range(1, order + 1):
            F.layers[d - 1] = amp * rng.standard_normal((n, num_monomials(n, d)))
        if not with_linear:
            F.layers[0] = np.zeros((n, n))
        if invertible:
            # diagonally dominant linear part keeps the map locally invertible
            F.layers[0] = F.layers[0] + 2.0 * np.eye(n)
        return F

    return make
