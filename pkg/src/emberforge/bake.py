"""UV back-projection: fuse per-view albedo/emission maps into UV textures."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .assets import Asset, MaterialSet, Mesh
from .errors import EmptyViews, MissingUVs, ResolutionMismatch, UncoveredSurface
from .render.camera import ViewSpec, camera_basis, pixel_rays
from .render.tracer import _Scene, intersect, sample_bilinear, sample_nearest
from .textures import TextureMap


@dataclass(frozen=True)
class BakeConfig:
    texture_resolution: int = 128
    cos_weight_power: float = 4.0
    depth_epsilon: float = 1e-3  # relative to scene diameter
    seam_dilation: int = 2
    view_order: tuple | None = None  # indices into the views list; None = given order

    def __post_init__(self):
        res = self.texture_resolution
        if res < 64 or res & (res - 1):
            raise ValueError("texture_resolution must be a power of two >= 64")
        if self.cos_weight_power < 0:
            raise ValueError("cos_weight_power must be >= 0")


@dataclass(frozen=True)
class BakeResult:
    albedo_uv: TextureMap
    emission_uv: TextureMap
    coverage_uv: np.ndarray       # per-texel weight sum
    occupied_mask: np.ndarray     # texels inside some UV triangle
    unseen_texel_count: int


def _rasterize_uv(mesh: Mesh, resolution: int):
    """Map each texel center to (triangle, position, normal) via UV coverage."""
    uvs = mesh.uvs.astype(np.float64)
    if not np.isfinite(uvs).all() or uvs.size == 0:
        raise MissingUVs("mesh has no usable UVs")
    tri = mesh.triangles.astype(np.int64)
    verts = mesh.vertices.astype(np.float64)
    normals = mesh.normals.astype(np.float64)

    res = resolution
    positions = np.zeros((res, res, 3))
    texel_normals = np.zeros((res, res, 3))
    occupied = np.zeros((res, res), dtype=bool)

    centers = (np.arange(res) + 0.5) / res
    for t in range(tri.shape[0]):
        a, b, c = uvs[tri[t, 0]], uvs[tri[t, 1]], uvs[tri[t, 2]]
        lo = np.minimum(np.minimum(a, b), c)
        hi = np.maximum(np.maximum(a, b), c)
        x0 = np.searchsorted(centers, lo[0] - 1e-9)
        x1 = np.searchsorted(centers, hi[0] + 1e-9)
        y0 = np.searchsorted(centers, lo[1] - 1e-9)
        y1 = np.searchsorted(centers, hi[1] + 1e-9)
        if x0 >= x1 or y0 >= y1:
            continue
        u_grid, v_grid = np.meshgrid(centers[x0:x1], centers[y0:y1])
        d00 = b - a
        d01 = c - a
        denom = d00[0] * d01[1] - d01[0] * d00[1]
        if abs(denom) < 1e-14:
            continue
        pu = u_grid - a[0]
        pv = v_grid - a[1]
        w1 = (pu * d01[1] - d01[0] * pv) / denom
        w2 = (d00[0] * pv - pu * d00[1]) / denom
        w0 = 1.0 - w1 - w2
        inside = (w0 >= -1e-9) & (w1 >= -1e-9) & (w2 >= -1e-9)
        if not inside.any():
            continue
        rows = res - 1 - (y0 + np.nonzero(inside)[0])  # v=0 is the bottom row
        cols = x0 + np.nonzero(inside)[1]
        bary = np.stack([w0[inside], w1[inside], w2[inside]], axis=1)
        pos = bary @ verts[tri[t]]
        nrm = bary @ normals[tri[t]]
        nrm /= np.maximum(np.linalg.norm(nrm, axis=1, keepdims=True), 1e-30)
        new = ~occupied[rows, cols]
        positions[rows[new], cols[new]] = pos[new]
        texel_normals[rows[new], cols[new]] = nrm[new]
        occupied[rows[new], cols[new]] = True
    return positions, texel_normals, occupied


def _view_depth_buffer(scene: _Scene, view: ViewSpec):
    origins, dirs = pixel_rays(view)
    t, tri, _, _ = intersect(scene, origins, dirs)
    eye, _, _, forward = camera_basis(view)
    depth = np.where(tri >= 0, t * (dirs @ forward), np.inf)
    return depth.reshape(view.resolution, view.resolution)


def bake(mesh: Mesh, views, cfg: BakeConfig, asset_for_depth: Asset | None = None) -> BakeResult:
    """Fuse view-space albedo/emission images into UV textures.

    ``views`` is a list of (ViewSpec, albedo TextureMap, emission TextureMap).
    Visibility uses per-view depth buffers ray-cast from ``mesh`` (wrapped in
    ``asset_for_depth`` when provided, otherwise a throwaway gray asset).
    Albedo samples are blended with cos(theta)^p weights; emission takes the
    nearest-sampled value from the single best-weight view, so hard region
    boundaries survive the fusion instead of bleeding across the 0.01
    luminous threshold. Texels seen by no view are filled by limited seam
    dilation inside their UV island.
    """
    if not views:
        raise EmptyViews("bake requires at least one view")
    if cfg.view_order is not None:
        views = [views[i] for i in cfg.view_order]
    res = cfg.texture_resolution
    positions, texel_normals, occupied = _rasterize_uv(mesh, res)

    if asset_for_depth is None:
        mats = MaterialSet(albedo=TextureMap.constant([0.5] * 3),
                           metallic=TextureMap.constant(0.0, channels=1),
                           roughness=TextureMap.constant(1.0, channels=1),
                           emission=TextureMap.constant([0.0] * 3),
                           emission_strength=0.0)
        asset_for_depth = Asset(id="bake_depth_proxy", mesh=mesh, materials=mats)
    scene = _Scene(asset_for_depth, 0.0)

    lo, hi = mesh.bounds()
    diameter = float(np.linalg.norm(hi - lo))
    eps = cfg.depth_epsilon * max(diameter, 1e-9)

    occ_idx = np.nonzero(occupied)
    pts = positions[occ_idx]
    nrms = texel_normals[occ_idx]
    n_tex = pts.shape[0]

    albedo_acc = np.zeros((n_tex, 3))
    emission_best = np.zeros((n_tex, 3))
    best_weight = np.zeros(n_tex)
    weight_acc = np.zeros(n_tex)

    for view, albedo_img, emission_img in views:
        eye, right, up, forward = camera_basis(view)
        tan_half = math.tan(math.radians(view.fov) / 2.0)
        vres = view.resolution
        depth_buf = _view_depth_buffer(scene, view)

        d = pts - eye
        depth = d @ forward
        valid = depth > 1e-9
        sd = np.where(valid, depth, 1.0)
        x_ndc = (d @ right) / (sd * tan_half)
        y_ndc = (d @ up) / (sd * tan_half)
        px = (x_ndc + 1.0) / 2.0 * vres - 0.5
        py = (1.0 - y_ndc) / 2.0 * vres - 0.5
        inside = valid & (px >= 0) & (px <= vres - 1) & (py >= 0) & (py <= vres - 1)

        to_eye = -d / np.maximum(np.linalg.norm(d, axis=1, keepdims=True), 1e-30)
        cos = np.einsum("nk,nk->n", nrms, to_eye)
        inside &= cos > 1e-6

        rr = np.clip(np.rint(py), 0, vres - 1).astype(np.int64)
        cc = np.clip(np.rint(px), 0, vres - 1).astype(np.int64)
        visible = inside & (depth <= depth_buf[rr, cc] + eps)
        if not visible.any():
            continue

        uv_img = np.stack([(px[visible] + 0.5) / vres,
                           1.0 - (py[visible] + 0.5) / vres], axis=1)
        w = cos[visible] ** cfg.cos_weight_power
        albedo_acc[visible] += w[:, None] * sample_bilinear(albedo_img, uv_img)
        weight_acc[visible] += w
        better = np.zeros(n_tex, dtype=bool)
        better[visible] = w > best_weight[visible]
        if better.any():
            uv_best = np.stack([(px[better] + 0.5) / vres,
                                1.0 - (py[better] + 0.5) / vres], axis=1)
            emission_best[better] = sample_nearest(emission_img, uv_best)
            best_weight[better] = cos[better] ** cfg.cos_weight_power

    albedo_uv = np.zeros((res, res, 3))
    emission_uv = np.zeros((res, res, 3))
    coverage = np.zeros((res, res))
    covered = weight_acc > 0
    safe_w = np.where(covered, weight_acc, 1.0)
    albedo_uv[occ_idx] = albedo_acc / safe_w[:, None]
    emission_uv[occ_idx] = emission_best
    coverage[occ_idx] = weight_acc

    # limited seam dilation inside the occupied (island) region
    covered_grid = np.zeros((res, res), dtype=bool)
    covered_grid[occ_idx] = covered
    for _ in range(cfg.seam_dilation):
        holes = occupied & ~covered_grid
        if not holes.any():
            break
        pad_cov = np.pad(covered_grid, 1)
        pad_alb = np.pad(albedo_uv, ((1, 1), (1, 1), (0, 0)))
        pad_emi = np.pad(emission_uv, ((1, 1), (1, 1), (0, 0)))
        nb_count = np.zeros((res, res))
        nb_alb = np.zeros((res, res, 3))
        nb_emi = np.zeros((res, res, 3))
        for dy in (-1, 0, 1):
            for dx in (-1, 0, 1):
                if dy == 0 and dx == 0:
                    continue
                sl = (slice(1 + dy, 1 + dy + res), slice(1 + dx, 1 + dx + res))
                mask = pad_cov[sl]
                nb_count += mask
                nb_alb += np.where(mask[:, :, None], pad_alb[sl], 0.0)
                nb_emi += np.where(mask[:, :, None], pad_emi[sl], 0.0)
        fill = holes & (nb_count > 0)
        albedo_uv[fill] = nb_alb[fill] / nb_count[fill][:, None]
        emission_uv[fill] = nb_emi[fill] / nb_count[fill][:, None]
        covered_grid |= fill

    unseen = int(np.sum(occupied & ~covered_grid))
    return BakeResult(albedo_uv=TextureMap.from_array(albedo_uv),
                      emission_uv=TextureMap.from_array(np.clip(emission_uv, 0.0, 1.0)),
                      coverage_uv=coverage,
                      occupied_mask=occupied,
                      unseen_texel_count=unseen)


def assemble_asset(mesh: Mesh, bake_result: BakeResult, metallic: TextureMap,
                   roughness: TextureMap, strength: float,
                   asset_id: str = "baked", max_unseen_fraction: float = 0.2) -> Asset:
    """Final asset carrying baked albedo/emission and pass-through metal/rough."""
    occupied = int(bake_result.occupied_mask.sum())
    if occupied and bake_result.unseen_texel_count > max_unseen_fraction * occupied:
        raise UncoveredSurface(
            f"{bake_result.unseen_texel_count}/{occupied} occupied texels unseen")
    a, e = bake_result.albedo_uv, bake_result.emission_uv
    if (a.width, a.height) != (e.width, e.height):
        raise ResolutionMismatch("baked albedo/emission resolutions differ")
    for tex in (metallic, roughness):
        if not tex.is_constant and (tex.width, tex.height) != (a.width, a.height):
            raise ResolutionMismatch("metallic/roughness resolution mismatch")
    mats = MaterialSet(albedo=TextureMap.from_array(np.clip(a.data, 0.0, 1.0)),
                       metallic=metallic, roughness=roughness,
                       emission=e, emission_strength=float(strength))
    return Asset(id=asset_id, mesh=mesh, materials=mats)
