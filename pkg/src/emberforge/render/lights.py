"""Randomized light rigs: three point lights, one area light, constant dome."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

TOTAL_POINT_POWER = 180.0
AREA_POWER_RANGE = (10.0, 500.0)
ENV_INTENSITY_RANGE = (0.5, 2.0)


@dataclass(frozen=True)
class PointLight:
    position: np.ndarray  # (3,)
    power: float          # watts


@dataclass(frozen=True)
class AreaLight:
    center: np.ndarray  # (3,)
    radius: float
    normal: np.ndarray  # unit (3,)
    power: float        # watts


@dataclass(frozen=True)
class LightRig:
    point_lights: tuple[PointLight, ...]
    area_light: AreaLight
    env_intensity: float

    def __post_init__(self):
        total = sum(p.power for p in self.point_lights)
        if not 170.0 <= total <= 190.0:
            raise ValueError(f"total point power {total} outside [170, 190] W")
        if not AREA_POWER_RANGE[0] <= self.area_light.power <= AREA_POWER_RANGE[1]:
            raise ValueError("area light power outside [10, 500] W")
        if not ENV_INTENSITY_RANGE[0] <= self.env_intensity <= ENV_INTENSITY_RANGE[1]:
            raise ValueError("env intensity outside [0.5, 2.0]")


def _uniform_sphere(rng: np.random.Generator, n: int) -> np.ndarray:
    z = rng.uniform(-1.0, 1.0, n)
    phi = rng.uniform(0.0, 2.0 * np.pi, n)
    r = np.sqrt(1.0 - z * z)
    return np.stack([r * np.cos(phi), z, r * np.sin(phi)], axis=-1)


def sample_light_rig(rng: np.random.Generator, bounding_radius: float = 1.0) -> LightRig:
    """Draw one rig: shell-placed point lights summing to 180 W, a disk
    area light on the upper hemisphere, and a constant environment dome."""
    shell = rng.uniform(2.0, 4.0, 3)[:, None] * bounding_radius
    positions = _uniform_sphere(rng, 3) * shell
    fractions = rng.dirichlet(np.ones(3))
    points = tuple(PointLight(position=positions[i], power=float(fractions[i] * TOTAL_POINT_POWER))
                   for i in range(3))

    center = _uniform_sphere(rng, 1)[0]
    center[1] = abs(center[1])
    center *= rng.uniform(2.0, 4.0) * bounding_radius
    normal = -center / np.linalg.norm(center)
    area = AreaLight(center=center,
                     radius=float(rng.uniform(0.5, 2.0) * bounding_radius),
                     normal=normal,
                     power=float(rng.uniform(*AREA_POWER_RANGE)))
    env = float(rng.uniform(*ENV_INTENSITY_RANGE))
    return LightRig(point_lights=points, area_light=area, env_intensity=env)


def rig_to_dict(rig: LightRig) -> dict:
    return {
        "point_lights": [
            {"position": [float(x) for x in p.position], "power": p.power}
            for p in rig.point_lights
        ],
        "area_light": {
            "center": [float(x) for x in rig.area_light.center],
            "radius": rig.area_light.radius,
            "normal": [float(x) for x in rig.area_light.normal],
            "power": rig.area_light.power,
        },
        "env_intensity": rig.env_intensity,
    }


def rig_from_dict(d: dict) -> LightRig:
    return LightRig(
        point_lights=tuple(PointLight(position=np.array(p["position"]), power=p["power"])
                           for p in d["point_lights"]),
        area_light=AreaLight(center=np.array(d["area_light"]["center"]),
                             radius=d["area_light"]["radius"],
                             normal=np.array(d["area_light"]["normal"]),
                             power=d["area_light"]["power"]),
        env_intensity=d["env_intensity"],
    )


@dataclass(frozen=True)
class SceneLights:
    """Unvalidated lighting description the tracer consumes directly.

    ``LightRig`` enforces the sampled-rig power ranges; tests and oracles
    need arbitrary setups (single light, no lights, dark dome).
    """

    point_lights: tuple[PointLight, ...] = ()
    area_light: AreaLight | None = None
    env_intensity: float = 0.0


def as_scene_lights(rig) -> SceneLights:
    if rig is None:
        return SceneLights()
    if isinstance(rig, SceneLights):
        return rig
    return SceneLights(point_lights=rig.point_lights, area_light=rig.area_light,
                       env_intensity=rig.env_intensity)
