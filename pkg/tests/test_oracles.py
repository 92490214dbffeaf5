"""Self-checks of the brute-force oracles: total probability, infeasibility,
and the scalar CCA case."""
import numpy as np
import pytest

from conftest import random_posteriors
from oracles import brute_cca, brute_ctc, brute_ctc_all, recursive_edit_distance


def test_total_probability_sums_to_one(rng):
    for _ in range(10):
        T = int(rng.integers(1, 6))
        z = int(rng.integers(2, 5))
        probs = random_posteriors(rng, T, z).probs
        sums = brute_ctc_all(probs, blank=z - 1)
        assert sum(sums.values()) == pytest.approx(1.0, abs=1e-12)


def test_infeasible_target_probability_zero(rng):
    probs = random_posteriors(rng, 2, 3).probs
    assert brute_ctc(probs, [0, 1, 0], blank=2) == 0.0
    assert brute_ctc(probs, [0, 0], blank=2) == 0.0  # needs a separating blank


def test_too_large_instance_rejected(rng):
    probs = np.full((30, 10), 0.1)
    with pytest.raises(ValueError, match="too large"):
        brute_ctc(probs, [0], blank=9)


def test_edit_distance_basics():
    assert recursive_edit_distance([], []) == 0
    assert recursive_edit_distance(list("abc"), list("axc")) == 1
    assert recursive_edit_distance(list("abc"), []) == 3


def test_brute_cca_identical_inputs(rng):
    a = rng.normal(size=(100, 3))
    assert np.allclose(brute_cca(a, a), 1.0, atol=1e-6)


def test_brute_cca_scalar_is_pearson(rng):
    a = rng.normal(size=(400, 1))
    b = -0.7 * a + rng.normal(size=(400, 1))
    rho = brute_cca(a, b)[0]
    assert rho == pytest.approx(abs(np.corrcoef(a[:, 0], b[:, 0])[0, 1]), abs=1e-8)


def test_brute_cca_dimension_guard(rng):
    with pytest.raises(ValueError, match="d <= 3"):
        brute_cca(rng.normal(size=(10, 4)), rng.normal(size=(10, 2)))
