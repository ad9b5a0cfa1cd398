import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from datacopy.distributions import UniformCube, unit_circle
from datacopy.mass import (
    BallMassEstimator,
    DegenerateRadiiError,
    EstimatorConfig,
    InsufficientDataError,
    RegularityDimensionEstimator,
    RegularityParams,
    est_mass,
    estimate_k,
    estimate_k_b,
    theoretical_b,
)


def test_theoretical_b_log_scaling():
    # at eps = 1, d = 2 the value is ceil(1600 * ln(16 n / delta))
    for n in (1, 7, 2000):
        assert theoretical_b(2, n, 0.05, 1.0) == math.ceil(1600 * math.log(16 * n / 0.05))


def test_theoretical_b_clamp_and_frozen_value():
    assert theoretical_b(2, 2000, 0.05, 1.0) == theoretical_b(2, 2000, 0.05, 7.5)
    # independent high-precision evaluation of the closed form
    assert theoretical_b(2, 2000, 0.05, 0.5) == 85564


@pytest.mark.parametrize("args", [(2, 0, 0.05, 1.0), (2, 10, 0.0, 1.0), (2, 10, 1.0, 1.0), (2, 10, 0.1, 0.0)])
def test_theoretical_b_rejects_bad_ranges(args):
    with pytest.raises(ValueError):
        theoretical_b(*args)


def test_estimate_k_threshold_frozen():
    assert estimate_k_b(2, 50000, 0.05, 1.0) == 4247


def test_params_validation():
    with pytest.raises(ValueError):
        RegularityParams(k=0)
    with pytest.raises(ValueError):
        EstimatorConfig(epsilon=0)
    with pytest.raises(ValueError):
        EstimatorConfig(delta=1.5)


def test_est_mass_branches():
    rng = np.random.default_rng(0)
    S = rng.random((50, 2))
    x = np.array([5.0, 5.0])
    params = RegularityParams(k=2, b=10)
    assert est_mass(x, 100.0, S, params) == 1.0
    assert est_mass(x, 0.0, S, params) == 0.0
    d = np.sort(np.linalg.norm(S - x, axis=1))
    r_star = d[9]
    assert est_mass(x, r_star, S, params) == pytest.approx(10 / 50)
    assert est_mass(x, r_star / 2, S, params) == pytest.approx(10 / 50 / 4)


def test_est_mass_insufficient_data():
    with pytest.raises(InsufficientDataError, match="insufficient training data"):
        est_mass((0, 0), 1.0, np.zeros((3, 2)), RegularityParams(k=1, b=5))


def test_est_mass_duplicates_use_empirical_branch():
    S = np.zeros((10, 2))
    assert est_mass((0, 0), 0.0, S, RegularityParams(k=2, b=5)) == 1.0


def test_est_mass_unit_circle_one_third():
    # exact arc mass of a radius-1 ball centred on the unit circle is 1/3
    rng = np.random.default_rng(3)
    S = unit_circle().sample(20000, rng)
    ratios = []
    for x in unit_circle().sample(20, rng):
        ratios.append(est_mass(x, 1.0, S, RegularityParams(k=1, b=400)) / (1 / 3))
    assert all(1 / 1.2 <= r <= 1.2 for r in ratios)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6), st.floats(0, 2), st.floats(0, 2))
def test_est_mass_monotone_and_bounded(seed, r1, r2):
    S = np.random.default_rng(seed).random((40, 2))
    params = RegularityParams(k=2, b=8)
    lo, hi = sorted((r1, r2))
    a, b = est_mass(S[0], lo, S, params), est_mass(S[0], hi, S, params)
    assert 0 <= a <= b <= 1


def test_estimator_matches_reference():
    rng = np.random.default_rng(5)
    S = rng.random((300, 2))
    centers = rng.random((25, 2))
    radii = rng.random(25) * 0.3
    est = BallMassEstimator(b=30, k=2).fit(S)
    got = est.predict(centers, radii)
    ref = [est_mass(c, r, S, RegularityParams(k=2, b=30)) for c, r in zip(centers, radii)]
    np.testing.assert_array_equal(got, ref)
    assert est.get_params() == {"b": 30, "k": 2, "n_jobs": 1}


def test_estimate_k_circle_and_square():
    rng = np.random.default_rng(0)
    assert estimate_k(unit_circle().sample(50000, rng)) == 1
    assert estimate_k(UniformCube(1.0, 2).sample(50000, rng)) == 2


def test_estimate_k_errors():
    with pytest.raises(DegenerateRadiiError, match="degenerate radii"):
        estimate_k(np.zeros((100, 2)), EstimatorConfig(b_override=10))
    with pytest.raises(InsufficientDataError):
        estimate_k(np.random.default_rng(0).random((15, 2)), EstimatorConfig(b_override=10))


def test_estimate_k_seeded_anchor_deterministic():
    S = UniformCube(1.0, 2).sample(5000, np.random.default_rng(1))
    cfg = EstimatorConfig(b_override=200)
    assert estimate_k(S, cfg, rng_seed=4) == estimate_k(S, cfg, rng_seed=4)
    assert RegularityDimensionEstimator(b=200, random_state=4).fit(S).k_ == estimate_k(S, cfg, rng_seed=4)
