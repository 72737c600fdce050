"""Validated pipeline configuration loaded from a single JSON file."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .bake import BakeConfig
from .curation import CurationConfig
from .diffusion import SoftMaskParams
from .render import BloomParams, RenderConfig

_KNOWN_KEYS = {"curation", "render", "bake", "mask", "lambda", "paths", "seed"}


@dataclass(frozen=True)
class PipelineConfig:
    curation: CurationConfig = field(default_factory=CurationConfig)
    render: RenderConfig = field(default_factory=RenderConfig)
    bake: BakeConfig = field(default_factory=BakeConfig)
    mask: SoftMaskParams = field(default_factory=SoftMaskParams)
    lam: float = 0.1
    paths: dict = field(default_factory=dict)
    seed: int = 0

    @classmethod
    def from_dict(cls, raw: dict) -> "PipelineConfig":
        unknown = set(raw) - _KNOWN_KEYS
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")

        def sub(key, allowed):
            entry = dict(raw.get(key, {}))
            bad = set(entry) - set(allowed)
            if bad:
                raise ValueError(f"unknown {key} config keys: {sorted(bad)}")
            return entry

        render_raw = sub("render", ("samples_per_pixel", "max_bounces",
                                    "seed", "bloom"))
        bloom = BloomParams(**render_raw.pop("bloom", {}))
        return cls(
            curation=CurationConfig.from_dict(raw.get("curation", {})),
            render=RenderConfig(bloom=bloom, **render_raw),
            bake=BakeConfig(**sub("bake", ("texture_resolution",
                                           "cos_weight_power", "depth_epsilon",
                                           "seam_dilation", "view_order"))),
            mask=SoftMaskParams(**sub("mask", ("tau", "k"))),
            lam=float(raw.get("lambda", 0.1)),
            paths=dict(raw.get("paths", {})),
            seed=int(raw.get("seed", 0)),
        )

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        p = Path(path)
        if not p.exists():
            raise FileNotFoundError(f"input not found: {p}")
        return cls.from_dict(json.loads(p.read_text()))
