"""Tests for SimHash hashing and the LSH index."""
import math
import warnings

import numpy as np
import pytest

from lsh import (
    HashingError, HyperplaneSet, LshIndex, angular_collision_probability,
    collision_probability_estimate,
)


def test_zero_vector_hashes_to_zero_key():
    planes = HyperplaneSet(64, 10, seed=1)
    assert planes.hash(np.zeros(10)) == "0" * 64


def test_positive_scaling_keeps_key():
    rng = np.random.default_rng(0)
    planes = HyperplaneSet(256, 20, seed=2)
    for _ in range(20):
        v = rng.normal(size=20)
        for c in (1e-3, 0.5, 7.0, 1e6):
            assert planes.hash(c * v) == planes.hash(v)


def test_negation_complements_key():
    planes = HyperplaneSet(128, 12, seed=3)
    v = np.random.default_rng(1).normal(size=12)
    key, neg = planes.hash(v), planes.hash(-v)
    assert all(a != b for a, b in zip(key, neg))


def test_hyperplanes_deterministic():
    a, b = HyperplaneSet(32, 5, seed=9), HyperplaneSet(32, 5, seed=9)
    np.testing.assert_array_equal(a.planes, b.planes)
    assert a.planes.shape == (32, 5)
    v = np.arange(5.0)
    assert a.hash(v) == b.hash(v)
    assert not np.array_equal(a.planes, HyperplaneSet(32, 5, seed=10).planes)


def test_refuses_unhashable_vectors():
    planes = HyperplaneSet(16, 3)
    with pytest.raises(HashingError):
        planes.hash(np.array([1.0, np.nan, 0.0]))
    with pytest.raises(HashingError):
        planes.hash(np.array([1.0, np.inf, 0.0]))
    with pytest.raises(HashingError):
        planes.hash(np.ones(4))


def test_index_stores_first_representative():
    index = LshIndex(64, 4, seed=0)
    v = np.array([1.0, 2.0, 3.0, 4.0])
    key = index.index(v)
    assert len(index) == 1
    assert index.index(v) == key
    assert len(index) == 1
    index.index(2 * v)  # same bucket, representative unchanged
    np.testing.assert_array_equal(index.representatives[key], v)
    index.index(-v)
    assert len(index) == 2


def test_orthogonal_vectors_get_distinct_keys():
    rng = np.random.default_rng(4)
    index = LshIndex(256, 30, seed=5)
    for _ in range(100):
        q, _ = np.linalg.qr(rng.normal(size=(30, 2)))
        assert index.hash(q[:, 0]) != index.hash(q[:, 1])


def test_query_distances():
    index = LshIndex(256, 8, seed=6)
    rng = np.random.default_rng(7)
    v = rng.normal(size=8)
    index.index(v)
    key, distance = index.query(v)
    assert distance == 0.0

    unseen_key, unseen = index.query(-v)
    assert unseen_key != key
    assert unseen == math.inf

    u = rng.normal(size=8)
    eps = 1e-6
    near_key, near = index.query(v + eps * u)
    assert near_key == key
    assert near == pytest.approx(np.mean((eps * u) ** 2), rel=1e-6)


def test_rebuild_forgets_buckets():
    index = LshIndex(16, 3, seed=0)
    index.index(np.ones(3))
    index.rebuild(32)
    assert index.bits == 32 and len(index) == 0


def test_collision_estimate_edge_cases():
    x = np.random.default_rng(8).normal(size=50)
    assert collision_probability_estimate(x, x) == 1.0
    assert collision_probability_estimate(x, -x) == 0.0
    y = np.random.default_rng(9).normal(size=50)
    y -= x * (x @ y) / (x @ x)
    assert angular_collision_probability(x, y) == pytest.approx(0.5)
    assert collision_probability_estimate(x, y) == pytest.approx(0.5, abs=0.05)


def test_sign_law():
    rng = np.random.default_rng(10)
    for pair in range(20):
        x = rng.normal(size=50)
        y = x + rng.normal(scale=rng.uniform(0.1, 3.0), size=50)
        estimate = collision_probability_estimate(x, y, bits=4096, seed=100 + pair)
        assert estimate == pytest.approx(angular_collision_probability(x, y), abs=0.05)


def test_query_distance_overflow_is_inf():
    index = LshIndex(64, 3, seed=0)
    v = np.array([1e200, 2e200, 3e200])
    index.index(v)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        key, distance = index.query(1.5 * v)
    assert key in index
    assert distance == math.inf
