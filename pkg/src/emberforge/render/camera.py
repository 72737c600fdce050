"""Canonical camera views and pinhole ray generation."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

DIAGONAL_ELEVATION_DEG = math.degrees(math.atan(1.0 / math.sqrt(2.0)))


@dataclass(frozen=True)
class ViewSpec:
    azimuth: float      # degrees around +Y, 0 = camera on +Z
    elevation: float    # degrees above the horizontal plane
    distance: float
    fov: float          # vertical, degrees
    resolution: int

    def __post_init__(self):
        if not -90.0 <= self.elevation <= 90.0:
            raise ValueError("elevation must be in [-90, 90]")
        if self.resolution < 16:
            raise ValueError("resolution must be >= 16")


def canonical_views(distance: float, fov: float, resolution: int) -> list[ViewSpec]:
    """Top, bottom, four orthogonal, four cube-diagonal views (10 total)."""
    specs = [(0.0, 90.0), (0.0, -90.0)]
    specs += [(az, 0.0) for az in (0.0, 90.0, 180.0, 270.0)]
    specs += [(az, DIAGONAL_ELEVATION_DEG) for az in (45.0, 135.0, 225.0, 315.0)]
    return [ViewSpec(azimuth=az, elevation=el, distance=distance,
                     fov=fov, resolution=resolution) for az, el in specs]


SCREENING_VIEWS = {
    "front": (0.0, 0.0),
    "top": (0.0, 90.0),
    "right": (90.0, 0.0),
    "left_rear_upper": (225.0, DIAGONAL_ELEVATION_DEG),
}


def screening_views(distance: float, fov: float, resolution: int) -> list[ViewSpec]:
    """The four views fed to the single-object classifier."""
    return [ViewSpec(azimuth=az, elevation=el, distance=distance,
                     fov=fov, resolution=resolution)
            for az, el in SCREENING_VIEWS.values()]


def camera_basis(view: ViewSpec):
    """Return (eye, right, up, forward) world-space vectors for a view."""
    az = math.radians(view.azimuth)
    el = math.radians(view.elevation)
    to_cam = np.array([math.cos(el) * math.sin(az),
                       math.sin(el),
                       math.cos(el) * math.cos(az)])
    eye = view.distance * to_cam
    forward = -to_cam
    if abs(view.elevation) > 89.0:
        world_up = np.array([0.0, 0.0, -math.copysign(1.0, view.elevation)])
    else:
        world_up = np.array([0.0, 1.0, 0.0])
    right = np.cross(forward, world_up)
    right /= np.linalg.norm(right)
    up = np.cross(right, forward)
    return eye, right, up, forward


def pixel_rays(view: ViewSpec, jitter: np.ndarray | None = None):
    """Rays for every pixel, row-major. ``jitter`` is (res, res, 2) in [0,1)."""
    res = view.resolution
    eye, right, up, forward = camera_basis(view)
    tan_half = math.tan(math.radians(view.fov) / 2.0)
    idx = np.arange(res)
    if jitter is None:
        jx = jy = 0.5
    else:
        jx, jy = jitter[..., 0], jitter[..., 1]
    px = (idx[None, :] + jx) / res * 2.0 - 1.0
    py = 1.0 - (idx[:, None] + jy) / res * 2.0
    dirs = (px[..., None] * (tan_half * right)
            + py[..., None] * (tan_half * up)
            + forward)
    dirs /= np.linalg.norm(dirs, axis=-1, keepdims=True)
    origins = np.broadcast_to(eye, dirs.shape)
    return origins.reshape(-1, 3), dirs.reshape(-1, 3)
