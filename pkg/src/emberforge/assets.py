"""Core data model: meshes, PBR material sets with emission, assets."""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidAsset
from .textures import TextureMap

_ID_RE = re.compile(r"^[A-Za-z0-9._-]+$")


@dataclass(frozen=True)
class Mesh:
    """Indexed triangle mesh with per-vertex normals and UVs.

    Arrays are float32/uint32 so a GLB round trip is bit-exact.
    """

    vertices: np.ndarray  # (n, 3) float32
    normals: np.ndarray   # (n, 3) float32, unit length
    uvs: np.ndarray       # (n, 2) float32 in [0, 1]^2
    triangles: np.ndarray  # (m, 3) uint32

    def __post_init__(self):
        v = np.ascontiguousarray(np.asarray(self.vertices, dtype=np.float32))
        n = np.ascontiguousarray(np.asarray(self.normals, dtype=np.float32))
        uv = np.ascontiguousarray(np.asarray(self.uvs, dtype=np.float32))
        tri = np.ascontiguousarray(np.asarray(self.triangles, dtype=np.uint32))
        if v.ndim != 2 or v.shape[1] != 3:
            raise InvalidAsset("vertices must be (n, 3)")
        if n.shape != v.shape:
            raise InvalidAsset("normals must match vertices")
        if uv.shape != (v.shape[0], 2):
            raise InvalidAsset("uvs must be (n, 2)")
        if tri.ndim != 2 or tri.shape[1] != 3:
            raise InvalidAsset("triangles must be (m, 3)")
        if tri.size and tri.max() >= v.shape[0]:
            raise InvalidAsset("triangle index out of range")
        lens = np.linalg.norm(n.astype(np.float64), axis=1)
        if n.shape[0] and np.abs(lens - 1.0).max() > 1e-4:
            raise InvalidAsset("normals must be unit length within 1e-4")
        for name, arr in (("vertices", v), ("normals", n), ("uvs", uv), ("triangles", tri)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def vertex_count(self) -> int:
        return int(self.vertices.shape[0])

    @property
    def triangle_count(self) -> int:
        return int(self.triangles.shape[0])

    def bounding_radius(self) -> float:
        if self.vertex_count == 0:
            return 0.0
        return float(np.linalg.norm(self.vertices.astype(np.float64), axis=1).max())

    def bounds(self):
        v = self.vertices.astype(np.float64)
        return v.min(axis=0), v.max(axis=0)


@dataclass(frozen=True)
class MaterialSet:
    """Metallic-roughness PBR maps plus an emission map and global strength.

    All maps are linear; scalar maps (metallic/roughness) are 1-channel.
    """

    albedo: TextureMap
    metallic: TextureMap
    roughness: TextureMap
    emission: TextureMap
    emission_strength: float

    def __post_init__(self):
        if self.albedo.channels != 3 or self.emission.channels != 3:
            raise InvalidAsset("albedo and emission must be 3-channel")
        if self.metallic.channels != 1 or self.roughness.channels != 1:
            raise InvalidAsset("metallic and roughness must be 1-channel")
        if self.emission_strength < 0:
            raise InvalidAsset("emission_strength must be >= 0")
        if self.emission.data.min() < 0 or self.emission.data.max() > 1:
            raise InvalidAsset("emission texels must be in [0, 1]")


@dataclass(frozen=True)
class Asset:
    id: str
    mesh: Mesh
    materials: MaterialSet
    metadata: tuple = field(default_factory=tuple)

    def __post_init__(self):
        if not self.id or not _ID_RE.match(self.id):
            raise InvalidAsset(f"asset id {self.id!r} is not filesystem-safe")
        object.__setattr__(self, "metadata", tuple(self.metadata))
