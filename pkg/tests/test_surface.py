import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from compliance_core.surface import (
    TREE_REBUILD_EVERY, TensionSurface, XycPoint, loess_query, q_to_xyc, surface_update, tricube, xyc_to_q,
)


@pytest.mark.parametrize("q, expected", [
    ((1.0, 1.0, 1.0), (0.0, 0.0, 3.0)),
    ((1.0, 0.0, 0.0), (0.0, 1.0, 1.0)),
    ((0.0, 1.0, 0.0), (-math.sqrt(3) / 2, -0.5, 1.0)),
])
def test_q_to_xyc_known_values(q, expected):
    p = q_to_xyc(q)
    np.testing.assert_allclose(p.as_array(), expected, atol=1e-12)


def test_xyc_to_q_known_values():
    np.testing.assert_allclose(xyc_to_q(XycPoint(0.0, 0.0, 3.0)), [1.0, 1.0, 1.0], atol=1e-12)
    np.testing.assert_allclose(xyc_to_q((0.0, 1.0, 1.0)), [1.0, 0.0, 0.0], atol=1e-12)


def test_round_trip_on_random_points():
    rng = np.random.default_rng(0)
    for q in rng.uniform(0.0, 63.0, size=(1000, 3)):
        assert np.max(np.abs(xyc_to_q(q_to_xyc(q)) - q)) < 1e-12


def test_tricube_kernel():
    np.testing.assert_allclose(tricube([0.0, 0.5, 1.0, 2.0]), [1.0, 0.669921875, 0.0, 0.0])


def grid_surface(fn, neighbors=9, spacing=1.0):
    s = TensionSurface(loess_neighbors=neighbors, grid_tolerance=0.1)
    for x in np.arange(-3, 4) * spacing:
        for y in np.arange(-3, 4) * spacing:
            s.add_sample(x, y, fn(x, y))
    return s


@given(st.floats(-2.5, 2.5), st.floats(-2.5, 2.5))
def test_constant_surface_is_reproduced(x, y):
    s = grid_surface(lambda x, y: 17.5)
    assert loess_query(s, x, y).c == pytest.approx(17.5, abs=1e-9)


@given(st.floats(-2.5, 2.5), st.floats(-2.5, 2.5))
def test_plane_is_reproduced_exactly(x, y):
    s = grid_surface(lambda x, y: 2 * x - y)
    result = loess_query(s, x, y)
    assert not result.fallback
    assert result.c == pytest.approx(2 * x - y, abs=1e-9)


def test_isolated_sample_dominates():
    s = TensionSurface(loess_neighbors=9, grid_tolerance=0.1)
    s.add_sample(0.0, 0.0, 1.0)
    for angle in np.linspace(0, 2 * np.pi, 8, endpoint=False):
        s.add_sample(10 * math.cos(angle), 10 * math.sin(angle), 10.0)
    assert loess_query(s, 0.0, 0.0).c == pytest.approx(1.0, abs=1e-6)


def test_collinear_neighbourhood_falls_back_to_weighted_mean():
    s = TensionSurface(loess_neighbors=5, grid_tolerance=0.1)
    for x in range(5):
        s.add_sample(float(x), 0.0, 3.0)
    result = loess_query(s, 2.0, 0.0)
    assert result.fallback
    assert result.c == pytest.approx(3.0)


def test_query_needs_three_samples():
    s = TensionSurface()
    s.add_sample(0.0, 0.0, 1.0)
    s.add_sample(1.0, 0.0, 1.0)
    with pytest.raises(ValueError):
        loess_query(s, 0.0, 0.0)


def test_samples_in_one_cell_are_merged():
    s = TensionSurface(grid_tolerance=0.5)
    s.add_sample(0.1, 0.1, 2.0)
    s.add_sample(0.2, 0.3, 4.0)
    s.add_sample(0.7, 0.1, 5.0)
    assert len(s) == 2
    np.testing.assert_allclose(s.samples[0], [0.1, 0.1, 3.0])


def test_storage_grows_past_initial_capacity():
    s = TensionSurface(loess_neighbors=3, grid_tolerance=1.0)
    for i in range(200):
        s.add_sample(float(i), float(i % 7), float(i))
    assert len(s) == 200
    assert s.samples[150, 2] == 150.0
    assert loess_query(s, 150.0, 3.0).c == pytest.approx(150.0, abs=5.0)


def test_surface_update_rules():
    s = TensionSurface()
    q = np.array([25.0, 25.0, 25.0])

    surface_update(s, q, [5.0, 6.0, 7.0], (2.0, 12.0))
    assert len(s) == 1
    assert s.c_bias == 0.0

    surface_update(s, q, [1.0, 6.0, 7.0], (2.0, 12.0), c_step=0.2)
    assert s.c_bias == pytest.approx(0.2)
    assert len(s) == 1

    # Too tense wins over slack
    surface_update(s, q, [1.0, 13.0, 7.0], (2.0, 12.0), c_step=0.2)
    assert s.c_bias == pytest.approx(0.0)


def test_in_range_measurement_decays_bias():
    s = TensionSurface()
    s.c_bias = 1.0
    surface_update(s, [20.0, 20.0, 20.0], [5.0, 5.0, 5.0], (2.0, 12.0), decay=0.5)
    assert s.c_bias == 0.5


def test_neighbours_match_brute_force_while_growing():
    rng = np.random.default_rng(3)
    s = TensionSurface(loess_neighbors=7, grid_tolerance=1e-3)
    for step, (x, y) in enumerate(rng.uniform(-10.0, 10.0, size=(3 * TREE_REBUILD_EVERY, 2))):
        s.add_sample(x, y, step)
        if len(s) < 7 or step % 37:
            continue
        qx, qy = rng.uniform(-10.0, 10.0, 2)
        dists, idx = s.neighbours(qx, qy, 7)
        brute = np.hypot(s.samples[:, 0] - qx, s.samples[:, 1] - qy)
        np.testing.assert_allclose(dists, np.sort(brute)[:7], atol=1e-12)
        np.testing.assert_allclose(brute[idx], dists, atol=1e-12)


def test_tree_is_not_rebuilt_for_every_new_cell():
    s = TensionSurface(loess_neighbors=3, grid_tolerance=1e-3)
    for i in range(10):
        s.add_sample(float(i), 0.0, 1.0)
    s.neighbours(0.0, 0.0, 3)
    tree = s._tree
    for i in range(10, 10 + TREE_REBUILD_EVERY):
        s.add_sample(float(i), 0.0, 1.0)
        s.neighbours(0.0, 0.0, 3)
    assert s._tree is tree
    s.add_sample(-1.0, 0.0, 1.0)
    dists, idx = s.neighbours(0.0, 0.0, 3)
    assert s._tree is not tree
    np.testing.assert_allclose(dists, [0.0, 1.0, 1.0])
