"""Asset curation pipeline: coarse filtering, emission verification,
luminous-area-based strength selection, and single-object screening.
"""

from __future__ import annotations

import io
import json
import logging
import urllib.request
import uuid
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

from .assets import Asset
from .errors import ClientUnavailable, ViewCountMismatch
from .gltf import NO_MR_TAG
from .textures import TextureMap, color_entropy, linear_to_srgb

log = logging.getLogger(__name__)

DEFAULT_STRENGTH_LEVELS = (1.0, 1.25, 1.5, 1.75, 2.0, 2.5, 3.0)
CANONICAL_VIEW_COUNT = 10


@dataclass(frozen=True)
class CurationConfig:
    min_vertices: int = 500
    min_entropy: float = 1.5
    luminous_pixel_threshold: float = 0.01
    ratio_low: float = 0.01
    ratio_high: float = 0.8
    strength_levels: tuple[float, ...] = DEFAULT_STRENGTH_LEVELS

    def __post_init__(self):
        if not 0.0 < self.ratio_low < self.ratio_high <= 1.0:
            raise ValueError("need 0 < ratio_low < ratio_high <= 1")
        levels = tuple(float(s) for s in self.strength_levels)
        if any(s <= 0 for s in levels) or any(
                b <= a for a, b in zip(levels, levels[1:])):
            raise ValueError("strength_levels must be positive and strictly increasing")
        object.__setattr__(self, "strength_levels", levels)

    @classmethod
    def from_dict(cls, d: dict) -> "CurationConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown curation config keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class CurationVerdict:
    asset_id: str
    passed_coarse: bool = False
    passed_emission: bool = False
    valid_strengths: list[float] = field(default_factory=list)
    single_object: str = "unknown"  # "single" | "multiple" | "unknown"
    rejection_reason: str | None = None

    def to_dict(self) -> dict:
        return {
            "asset_id": self.asset_id,
            "passed_coarse": self.passed_coarse,
            "passed_emission": self.passed_emission,
            "valid_strengths": self.valid_strengths,
            "single_object": self.single_object,
            "rejection_reason": self.rejection_reason,
        }


# ---------------------------------------------------------------------------
# steps 1, 2, 4

def coarse_filter(asset: Asset, cfg: CurationConfig):
    """Step 1: vertex count and albedo color entropy thresholds."""
    if asset.mesh.vertex_count < cfg.min_vertices:
        return "vertex_count"
    if color_entropy(asset.materials.albedo) < cfg.min_entropy:
        return "entropy"
    return None


def verify_emission(asset: Asset):
    """Step 2: emission map exists, is non-zero with positive strength,
    differs from the albedo, and metallic/roughness maps are present."""
    mats = asset.materials
    if NO_MR_TAG in asset.metadata:
        return "missing_metallic_roughness"
    if mats.emission.data.max() <= 0.0:
        return "zero_emission_map"
    if mats.emission_strength <= 0.0:
        return "zero_emission_strength"
    w = min(mats.emission.width, mats.albedo.width)
    h = min(mats.emission.height, mats.albedo.height)
    em = mats.emission.resized_nearest(w, h).data
    al = mats.albedo.resized_nearest(w, h).data
    if np.abs(em - al).max() <= 1.0 / 255.0:
        return "emission_equals_albedo"
    return None


def luminous_ratio(view_emission_pass: TextureMap, threshold: float) -> float:
    """Fraction of pixels whose clamped emission exceeds the threshold."""
    data = np.clip(view_emission_pass.data, 0.0, 1.0)
    peak = data.max(axis=-1)
    return float(np.mean(peak > threshold))


def select_strengths(per_strength_views: dict[float, list[TextureMap]],
                     cfg: CurationConfig) -> list[float]:
    """Step 4: keep strengths whose every view has an admissible luminous ratio."""
    for s, views in per_strength_views.items():
        if len(views) != CANONICAL_VIEW_COUNT:
            raise ViewCountMismatch(
                f"strength {s}: expected {CANONICAL_VIEW_COUNT} views, got {len(views)}")
    valid = []
    for s in per_strength_views:
        ratios = [luminous_ratio(vp, cfg.luminous_pixel_threshold)
                  for vp in per_strength_views[s]]
        if all(cfg.ratio_low <= r <= cfg.ratio_high for r in ratios):
            valid.append(s)
    return valid


# ---------------------------------------------------------------------------
# step 5: single-object screening

class SingleObjectClient:
    """Interface: classify 4 rendered views as single/multiple/unknown."""

    def classify(self, views: list[TextureMap]) -> str:
        raise NotImplementedError


class MockSingleObjectClient(SingleObjectClient):
    """Deterministic keyword-table classifier driven by asset metadata."""

    def __init__(self, metadata=(), default: str = "single"):
        self.metadata = tuple(metadata)
        self.default = default

    def classify(self, views) -> str:
        if "multi_object" in self.metadata:
            return "multiple"
        if "single_object" in self.metadata:
            return "single"
        return self.default


class HttpSingleObjectClient(SingleObjectClient):
    """POSTs the 4 views as multipart PNGs; expects {"objects": <int>}."""

    def __init__(self, url: str, timeout: float = 10.0):
        self.url = url
        self.timeout = timeout

    @staticmethod
    def _png(tex: TextureMap) -> bytes:
        arr = np.rint(linear_to_srgb(tex.data) * 255).astype(np.uint8)
        if arr.shape[-1] == 1:
            arr = np.repeat(arr, 3, axis=-1)
        buf = io.BytesIO()
        Image.fromarray(arr).save(buf, format="PNG")
        return buf.getvalue()

    def classify(self, views) -> str:
        boundary = uuid.uuid4().hex
        body = b""
        for i, view in enumerate(views):
            body += (f"--{boundary}\r\n"
                     f'Content-Disposition: form-data; name="view{i}"; '
                     f'filename="view{i}.png"\r\n'
                     "Content-Type: image/png\r\n\r\n").encode()
            body += self._png(view) + b"\r\n"
        body += f"--{boundary}--\r\n".encode()
        req = urllib.request.Request(
            self.url, data=body, method="POST",
            headers={"Content-Type": f"multipart/form-data; boundary={boundary}"})
        try:
            with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                payload = json.loads(resp.read())
        except Exception as exc:
            raise ClientUnavailable(str(exc)) from exc
        count = int(payload.get("objects", -1))
        if count == 1:
            return "single"
        if count > 1:
            return "multiple"
        return "unknown"


def screen_single_object(asset: Asset, client: SingleObjectClient, renderer) -> str:
    """Render the front/top/right/left-rear-upper views and ask the client.

    A failing client yields "unknown" (logged), never an exception.
    """
    views = renderer.screening_views(asset)
    try:
        return client.classify(views)
    except ClientUnavailable as exc:
        log.warning("single-object classifier unavailable for %s: %s", asset.id, exc)
        return "unknown"


# ---------------------------------------------------------------------------
# composed pipeline

def curate(asset: Asset, cfg: CurationConfig, client: SingleObjectClient,
           renderer) -> CurationVerdict:
    """Run Steps 1, 2, 4, 5 in order, short-circuiting on first rejection."""
    verdict = CurationVerdict(asset_id=asset.id)
    reason = coarse_filter(asset, cfg)
    if reason is not None:
        verdict.rejection_reason = reason
        return verdict
    verdict.passed_coarse = True

    reason = verify_emission(asset)
    if reason is not None:
        verdict.rejection_reason = reason
        return verdict
    verdict.passed_emission = True

    per_strength = {s: renderer.emission_passes(asset, s) for s in cfg.strength_levels}
    verdict.valid_strengths = select_strengths(per_strength, cfg)
    if not verdict.valid_strengths:
        verdict.rejection_reason = "no_valid_strengths"
        return verdict

    verdict.single_object = screen_single_object(asset, client, renderer)
    if verdict.single_object == "multiple":
        verdict.rejection_reason = "multiple_objects"
    return verdict
