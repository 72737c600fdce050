"""Glue between curation and the renderer: emission passes per strength and
the four screening views, computed with the in-package tracer."""

from __future__ import annotations

from dataclasses import dataclass

from .assets import Asset
from .render import (
    RenderConfig,
    canonical_views,
    render_aovs,
    render_view,
    sample_light_rig,
    screening_views,
)
import numpy as np


@dataclass
class CurationRenderer:
    """Renders what Steps 4 and 5 need.

    Emission AOVs are lighting-independent, so strength selection renders
    each canonical view once and scales the pass analytically.
    """

    distance: float = 3.2
    fov: float = 40.0
    resolution: int = 64
    screening_spp: int = 8
    seed: int = 0

    def __post_init__(self):
        self._aov_cache: dict[str, list] = {}

    def emission_passes(self, asset: Asset, strength: float):
        from .textures import TextureMap

        if asset.id not in self._aov_cache:
            views = canonical_views(self.distance, self.fov, self.resolution)
            self._aov_cache[asset.id] = [
                render_aovs(asset, view, 1.0)["emission"] for view in views]
        return [TextureMap.from_array(p.data * strength)
                for p in self._aov_cache[asset.id]]

    def screening_views(self, asset: Asset):
        rng = np.random.default_rng(self.seed)
        rig = sample_light_rig(rng, max(asset.mesh.bounding_radius(), 1e-6))
        cfg = RenderConfig(samples_per_pixel=self.screening_spp, seed=self.seed)
        views = screening_views(self.distance, self.fov, self.resolution)
        return [render_view(asset, view, rig, asset.materials.emission_strength,
                            cfg, view_index=i).beauty
                for i, view in enumerate(views)]
