import numpy as np
import pytest

from fsiplate.geometry_ale import Grid
from fsiplate.invariants import random_plate, random_state, run_invariant_suite

RESULTS = {r.name: r for r in run_invariant_suite(seed=0, samples=10)}


@pytest.mark.parametrize("name", sorted(RESULTS))
def test_invariant_holds(name):
    r = RESULTS[name]
    assert r.passed, f"{name}: value {r.value:.3e} above tolerance {r.tolerance:.1e}"


def test_suite_is_reproducible():
    again = {r.name: r.value for r in run_invariant_suite(seed=0, samples=10)}
    assert again == {k: r.value for k, r in RESULTS.items()}


@pytest.mark.parametrize("seed", range(5))
def test_random_states_admissible(seed):
    g = Grid(16, 8)
    rng = np.random.default_rng(seed)
    s = random_state(g, rng)
    assert np.all(s.fluid.r.values > 0)
    assert np.min(random_plate(g, rng).values) > -1
