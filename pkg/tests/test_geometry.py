import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from datacopy.geometry import (
    Ball,
    BallIndex,
    DimensionMismatchError,
    as_points,
    count_in_ball,
    distance,
    sorted_distances,
    union_membership,
)

coords = st.floats(-100, 100, allow_nan=False, allow_infinity=False)


def point_sets(min_size=1, max_size=40, dim=2):
    return arrays(np.float64, st.tuples(st.integers(min_size, max_size), st.just(dim)), elements=coords)


@pytest.mark.parametrize(
    "a, b, expected",
    [((0, 0), (0, 0), 0.0), ((0, 0), (3, 4), 5.0), ((1, 1), (1, 3.5), 2.5)],
)
def test_distance_examples(a, b, expected):
    assert distance(a, b) == expected


def test_distance_dimension_mismatch():
    with pytest.raises(DimensionMismatchError):
        distance((0, 0), (0, 0, 0))


@given(st.lists(coords, min_size=3, max_size=3), st.lists(coords, min_size=3, max_size=3))
def test_distance_symmetric_nonnegative(a, b):
    assert distance(a, b) == distance(b, a) >= 0


def test_count_boundary_inclusive():
    ps = np.array([[0.0, 0.0], [2.0, 0.0]])
    assert count_in_ball(ps, Ball((0, 0), 2)) == 2
    assert count_in_ball(ps, Ball((0, 0), 1.9)) == 1
    assert count_in_ball(ps, Ball((2, 0), 0)) >= 1


def test_ball_rejects_negative_radius():
    with pytest.raises(ValueError):
        Ball((0, 0), -1)


def test_sorted_distances_examples():
    ps = np.array([[0.0, 0.0], [3.0, 4.0], [0.0, 1.0]])
    d = sorted_distances(ps, (0, 0))
    assert d.tolist() == [0.0, 1.0, 5.0]
    assert d[2 - 1] == 1.0
    dup = np.array([[1.0, 1.0], [1.0, 1.0], [2.0, 1.0]])
    assert sorted_distances(dup, (1, 1)).tolist() == [0.0, 0.0, 1.0]
    with pytest.raises(ValueError):
        sorted_distances(np.empty((0, 2)), (0, 0))


def test_union_membership():
    assert union_membership([Ball((0, 0), 1)], (0, 1))
    assert not union_membership([], (0, 0))
    assert union_membership([Ball((0, 0), 1), Ball((0, 0.5), 1)], (0, 0.9)) is True


def test_as_points_validation():
    with pytest.raises(ValueError):
        as_points([[0.0, np.nan]])
    with pytest.raises(DimensionMismatchError):
        as_points([[0.0, 1.0]], dim=3)
    assert as_points([1.0, 2.0, 3.0]).shape == (1, 3)


@settings(max_examples=60, deadline=None)
@given(point_sets(), point_sets(max_size=10), st.floats(0, 150))
def test_index_matches_linear_scan(ps, centers, r):
    idx = BallIndex(ps)
    counts = idx.count(centers, r)
    for c, got in zip(centers, counts):
        assert got == count_in_ball(ps, Ball(c, r))
        hits, dists = idx.within(c, r)
        assert len(hits) == got
        assert np.all(np.diff(dists) >= 0)


@settings(max_examples=60, deadline=None)
@given(point_sets(min_size=3), st.integers(1, 3))
def test_kth_distance_matches_sorted(ps, k):
    idx = BallIndex(ps)
    got = idx.kth_distance(ps, k)
    for c, v in zip(ps, got):
        assert v == sorted_distances(ps, c)[k - 1]


@settings(max_examples=40, deadline=None)
@given(point_sets(min_size=2))
def test_count_exact_at_stored_distances(ps):
    # radii equal to realised distances are the boundary case the tree must get right
    idx = BallIndex(ps)
    c = ps[0]
    for r in sorted_distances(ps, c):
        assert idx.count(c[None, :], r)[0] == count_in_ball(ps, Ball(c, r))


@settings(max_examples=40, deadline=None)
@given(point_sets(), st.floats(0, 50), st.floats(0, 50))
def test_count_monotone_in_radius(ps, r1, r2):
    lo, hi = sorted((r1, r2))
    c = ps[:1]
    idx = BallIndex(ps)
    assert idx.count(c, lo)[0] <= idx.count(c, hi)[0]
