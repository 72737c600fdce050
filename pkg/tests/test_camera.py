import math

import numpy as np
import pytest

from emberforge.render import (
    DIAGONAL_ELEVATION_DEG,
    SCREENING_VIEWS,
    ViewSpec,
    camera_basis,
    canonical_views,
    pixel_rays,
)


def test_exactly_ten_views():
    assert len(canonical_views(2.5, 40.0, 64)) == 10


def test_diagonal_elevation():
    assert DIAGONAL_ELEVATION_DEG == pytest.approx(35.264, abs=0.01)
    assert DIAGONAL_ELEVATION_DEG == pytest.approx(
        math.degrees(math.atan(1 / math.sqrt(2))), abs=1e-12)


def test_view_structure():
    views = canonical_views(2.5, 40.0, 64)
    elevations = [v.elevation for v in views]
    assert elevations[:2] == [90.0, -90.0]
    assert {v.azimuth for v in views if v.elevation == 0.0} == {0, 90, 180, 270}
    diag = [v.azimuth for v in views if 0 < v.elevation < 90]
    assert set(diag) == {45, 135, 225, 315}
    assert all(v.distance == 2.5 and v.fov == 40.0 for v in views)


def test_screening_views_named():
    assert set(SCREENING_VIEWS) == {"front", "top", "right", "left_rear_upper"}
    assert SCREENING_VIEWS["left_rear_upper"] == (225.0, DIAGONAL_ELEVATION_DEG)


def test_elevation_bounds():
    with pytest.raises(ValueError):
        ViewSpec(azimuth=0, elevation=91, distance=1, fov=40, resolution=64)


def test_min_resolution():
    with pytest.raises(ValueError):
        ViewSpec(azimuth=0, elevation=0, distance=1, fov=40, resolution=8)


def test_camera_basis_orthonormal():
    for view in canonical_views(2.5, 40.0, 64):
        eye, right, up, forward = camera_basis(view)
        assert np.linalg.norm(eye) == pytest.approx(2.5)
        for a, b in ((right, up), (right, forward), (up, forward)):
            assert abs(np.dot(a, b)) < 1e-12
        assert np.dot(forward, -eye) > 0  # looks at the origin


def test_center_ray_through_origin():
    view = ViewSpec(azimuth=30, elevation=20, distance=3, fov=45, resolution=64)
    origins, dirs = pixel_rays(view)
    # average the four central pixels: their mean direction passes the origin
    res = view.resolution
    mid = res // 2
    ids = [(mid - 1) * res + mid - 1, (mid - 1) * res + mid,
           mid * res + mid - 1, mid * res + mid]
    d = dirs[ids].mean(axis=0)
    d /= np.linalg.norm(d)
    closest = origins[0] + d * np.dot(-origins[0], d)
    assert np.linalg.norm(closest) < 1e-9


def test_rays_row_major_and_unit(rng):
    view = ViewSpec(azimuth=0, elevation=0, distance=2, fov=40, resolution=32)
    origins, dirs = pixel_rays(view, jitter=rng.random((32, 32, 2)))
    assert origins.shape == dirs.shape == (1024, 3)
    assert np.allclose(np.linalg.norm(dirs, axis=1), 1.0)
    # first row is the top of the image: higher world y than the last row
    assert dirs[:32, 1].mean() > dirs[-32:, 1].mean()
