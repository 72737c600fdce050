"""Emission-texture toolkit: asset I/O, curation, rendering, loss math,
strength estimation, UV baking, and evaluation."""

__version__ = "0.1.0"

from .assets import Asset, MaterialSet, Mesh
from .textures import TextureMap

__all__ = ["Asset", "MaterialSet", "Mesh", "TextureMap", "__version__"]
