from .camera import (
    DIAGONAL_ELEVATION_DEG,
    SCREENING_VIEWS,
    ViewSpec,
    camera_basis,
    canonical_views,
    pixel_rays,
    screening_views,
)
from .lights import (
    AreaLight,
    LightRig,
    PointLight,
    SceneLights,
    as_scene_lights,
    rig_from_dict,
    rig_to_dict,
    sample_light_rig,
)
from .tracer import (
    BloomParams,
    RenderConfig,
    RenderedView,
    apply_bloom,
    brdf_eval,
    intersect,
    render_aovs,
    render_asset,
    render_view,
    sample_bilinear,
)

__all__ = [
    "DIAGONAL_ELEVATION_DEG", "SCREENING_VIEWS", "ViewSpec", "camera_basis",
    "canonical_views", "pixel_rays", "screening_views",
    "AreaLight", "LightRig", "PointLight", "SceneLights", "as_scene_lights",
    "rig_from_dict", "rig_to_dict", "sample_light_rig",
    "BloomParams", "RenderConfig", "RenderedView", "apply_bloom", "brdf_eval",
    "intersect", "render_aovs", "render_asset", "render_view", "sample_bilinear",
]
