"""Bundled procedural test assets: quad, sphere, LED panel, multi-object pair."""

from __future__ import annotations

import numpy as np

from .assets import Asset, MaterialSet, Mesh
from .textures import TextureMap


def _default_materials(albedo=0.5, emission=0.0, strength=0.0,
                       metallic=0.0, roughness=1.0) -> MaterialSet:
    return MaterialSet(
        albedo=TextureMap.constant([albedo] * 3 if np.isscalar(albedo) else albedo),
        metallic=TextureMap.constant(metallic, channels=1),
        roughness=TextureMap.constant(roughness, channels=1),
        emission=TextureMap.constant([emission] * 3 if np.isscalar(emission) else emission),
        emission_strength=strength,
    )


def quad_mesh(size: float = 1.0) -> Mesh:
    """Two-triangle quad in the XY plane facing +Z, UVs spanning [0,1]^2."""
    s = size / 2
    vertices = np.array([[-s, -s, 0], [s, -s, 0], [s, s, 0], [-s, s, 0]], dtype=np.float32)
    normals = np.tile(np.array([0, 0, 1], dtype=np.float32), (4, 1))
    uvs = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], dtype=np.float32)
    triangles = np.array([[0, 1, 2], [0, 2, 3]], dtype=np.uint32)
    return Mesh(vertices=vertices, normals=normals, uvs=uvs, triangles=triangles)


def quad_asset(asset_id: str = "quad", materials: MaterialSet | None = None,
               size: float = 1.0, metadata=()) -> Asset:
    mats = materials if materials is not None else _default_materials()
    return Asset(id=asset_id, mesh=quad_mesh(size), materials=mats, metadata=metadata)


def sphere_mesh(radius: float = 1.0, rings: int = 16, segments: int = 32) -> Mesh:
    """Lat-long UV sphere with a duplicated seam column and smooth normals."""
    vertices, normals, uvs = [], [], []
    for i in range(rings + 1):
        theta = np.pi * i / rings
        for j in range(segments + 1):
            phi = 2 * np.pi * j / segments
            n = np.array([np.sin(theta) * np.cos(phi), np.cos(theta),
                          np.sin(theta) * np.sin(phi)])
            vertices.append(radius * n)
            normals.append(n)
            uvs.append([j / segments, i / rings])
    tris = []
    row = segments + 1
    for i in range(rings):
        for j in range(segments):
            a, b = i * row + j, i * row + j + 1
            c, d = (i + 1) * row + j, (i + 1) * row + j + 1
            if i > 0:
                tris.append([a, c, b])
            if i < rings - 1:
                tris.append([b, c, d])
    return Mesh(vertices=np.array(vertices, dtype=np.float32),
                normals=np.array(normals, dtype=np.float32),
                uvs=np.array(uvs, dtype=np.float32),
                triangles=np.array(tris, dtype=np.uint32))


def sphere_textures(resolution: int = 128):
    """Smooth gradient albedo plus an equatorial emission band."""
    u = (np.arange(resolution) + 0.5) / resolution
    uu, vv = np.meshgrid(u, u)
    albedo = np.stack([
        0.35 + 0.3 * np.sin(2 * np.pi * uu),
        0.35 + 0.3 * np.cos(2 * np.pi * uu) * np.sin(np.pi * vv),
        0.35 + 0.3 * np.cos(np.pi * vv),
    ], axis=-1)
    emission = np.zeros((resolution, resolution, 3))
    band = np.abs(vv - 0.5) < 0.12
    emission[band] = [0.9, 0.6, 0.2]
    # polar caps keep the luminous area visible from the top/bottom views
    caps = (vv < 0.08) | (vv > 0.92)
    emission[caps] = [0.9, 0.6, 0.2]
    return TextureMap.from_array(albedo), TextureMap.from_array(emission)


def sphere_asset(asset_id: str = "sphere", radius: float = 1.0,
                 texture_resolution: int = 128, strength: float = 2.0,
                 rings: int = 16, segments: int = 32) -> Asset:
    albedo, emission = sphere_textures(texture_resolution)
    mats = MaterialSet(albedo=albedo,
                       metallic=TextureMap.constant(0.0, channels=1),
                       roughness=TextureMap.constant(0.9, channels=1),
                       emission=emission, emission_strength=strength)
    mesh = sphere_mesh(radius, rings, segments)
    return Asset(id=asset_id, mesh=mesh, materials=mats, metadata=("single_object",))


def cube_mesh(center, half: float, uv_lo=(0.0, 0.0), uv_hi=(1.0, 1.0)) -> Mesh:
    """Axis-aligned cube with per-face normals; each face maps to the same
    UV rectangle [uv_lo, uv_hi]."""
    c = np.asarray(center, dtype=np.float32)
    lo, hi = np.asarray(uv_lo, dtype=np.float32), np.asarray(uv_hi, dtype=np.float32)
    face_uv = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], dtype=np.float32)
    face_uv = lo + face_uv * (hi - lo)
    vertices, normals, uvs, tris = [], [], [], []
    for axis in range(3):
        for sign in (1.0, -1.0):
            n = np.zeros(3, dtype=np.float32)
            n[axis] = sign
            t1 = np.zeros(3, dtype=np.float32)
            t1[(axis + 1) % 3] = 1.0
            t2 = np.cross(n, t1)
            base = len(vertices)
            for du, dv in ((-1, -1), (1, -1), (1, 1), (-1, 1)):
                vertices.append(c + half * (n + du * t1 + dv * t2))
                normals.append(n)
            uvs.extend(face_uv)
            tris.extend([[base, base + 1, base + 2], [base, base + 2, base + 3]])
    return Mesh(vertices=np.array(vertices, dtype=np.float32),
                normals=np.array(normals, dtype=np.float32),
                uvs=np.array(uvs, dtype=np.float32),
                triangles=np.array(tris, dtype=np.uint32))


def led_panel_asset(asset_id: str = "led_panel", strength: float = 2.0,
                    texture_resolution: int = 64) -> Asset:
    """White diffuse wall with a small emissive LED lamp beside its edge.

    The lamp is a cube just past the wall's left edge, so it stays visible
    (never edge-on, never fully occluded) from all 10 canonical views. Its
    UVs land in the emissive right quarter of the shared texture; the wall
    maps to the left 3/4.
    """
    half = 0.7
    wall_vertices = np.array([
        # wall in the z=0 plane facing +Z
        [-half, -half, 0], [half, -half, 0], [half, half, 0], [-half, half, 0],
    ], dtype=np.float32)
    wall_normals = np.tile(np.array([0, 0, 1], dtype=np.float32), (4, 1))
    wall_uvs = np.array([[0.0, 0.0], [0.75, 0.0], [0.75, 1.0], [0.0, 1.0]],
                        dtype=np.float32)
    wall_tris = np.array([[0, 1, 2], [0, 2, 3]], dtype=np.uint32)

    # centered on the wall plane so no canonical view sees it occluded
    lamp = cube_mesh(center=(-0.9, 0.0, 0.0), half=0.17,
                     uv_lo=(0.8, 0.0), uv_hi=(1.0, 1.0))
    mesh = Mesh(vertices=np.concatenate([wall_vertices, lamp.vertices]),
                normals=np.concatenate([wall_normals, lamp.normals]),
                uvs=np.concatenate([wall_uvs, lamp.uvs]),
                triangles=np.concatenate([wall_tris, lamp.triangles + 4]))

    res = texture_resolution
    u = (np.arange(res) + 0.5) / res
    strip = u >= 0.775
    albedo = np.full((res, res, 3), 0.75)
    albedo[:, strip] = [0.1, 0.1, 0.12]
    emission = np.zeros((res, res, 3))
    emission[:, strip] = [0.2, 0.9, 1.0]
    mats = MaterialSet(albedo=TextureMap.from_array(albedo),
                       metallic=TextureMap.constant(0.0, channels=1),
                       roughness=TextureMap.constant(1.0, channels=1),
                       emission=TextureMap.from_array(emission),
                       emission_strength=strength)
    return Asset(id=asset_id, mesh=mesh, materials=mats, metadata=("single_object",))


def multi_object_asset(asset_id: str = "two_cubes") -> Asset:
    """Two separated cubes in one mesh, tagged for the mock classifier."""
    a = cube_mesh(center=(-0.72, 0.0, 0.0), half=0.4)
    b = cube_mesh(center=(0.72, 0.0, 0.0), half=0.4,
                  uv_lo=(0.1, 0.1), uv_hi=(0.9, 0.9))
    mesh = Mesh(vertices=np.concatenate([a.vertices, b.vertices]),
                normals=np.concatenate([a.normals, b.normals]),
                uvs=np.concatenate([a.uvs, b.uvs]),
                triangles=np.concatenate(
                    [a.triangles, b.triangles + len(a.vertices)]))
    res = 32
    emission = np.zeros((res, res, 3))
    emission[:, res // 2:] = [0.8, 0.2, 0.2]
    u = (np.arange(res) + 0.5) / res
    uu, vv = np.meshgrid(u, u)
    albedo = np.stack([0.3 + 0.4 * uu, 0.3 + 0.4 * vv,
                       0.4 + 0.3 * np.sin(2 * np.pi * uu)], axis=-1)
    mats = MaterialSet(albedo=TextureMap.from_array(albedo),
                       metallic=TextureMap.constant(0.0, channels=1),
                       roughness=TextureMap.constant(1.0, channels=1),
                       emission=TextureMap.from_array(emission),
                       emission_strength=1.5)
    return Asset(id=asset_id, mesh=mesh, materials=mats, metadata=("multi_object",))
