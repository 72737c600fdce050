"""CPU path tracer with next-event estimation and emissive-surface transport.

Beauty pass: unidirectional path tracing, Cook-Torrance GGX surface model,
NEE toward point lights, the area light, and emissive triangles; constant
environment dome picked up by escaping rays. AOV passes are deterministic
single-bounce rasterizations (center rays, no RNG).

Determinism: all random draws are full-resolution arrays from a Philox
stream keyed by (seed, view index, rig index), so output is independent
of chunking and of how views are scheduled across threads.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from ..assets import Asset
from ..errors import DegenerateMesh
from ..textures import TextureMap, luminance
from .camera import ViewSpec, canonical_views, pixel_rays
from .lights import SceneLights, as_scene_lights

_EPS_T = 1e-6
_RAY_CHUNK = 256  # keeps per-chunk temporaries cache-friendly


@dataclass(frozen=True)
class BloomParams:
    threshold: float = 1.0
    sigma_frac: float = 0.015  # of image width
    gain: float = 1.0


@dataclass(frozen=True)
class RenderConfig:
    samples_per_pixel: int = 64
    max_bounces: int = 3
    bloom: BloomParams = field(default_factory=BloomParams)
    seed: int = 0

    def __post_init__(self):
        if self.samples_per_pixel < 1 or self.max_bounces < 1:
            raise ValueError("samples_per_pixel and max_bounces must be >= 1")


@dataclass(frozen=True)
class RenderedView:
    beauty: TextureMap
    albedo_pass: TextureMap
    emission_pass: TextureMap
    normal_pass: TextureMap
    position_pass: TextureMap
    coverage_mask: np.ndarray
    view: ViewSpec
    strength: float
    view_index: int = 0
    rig_index: int = 0


class _Scene:
    """Preprocessed triangle soup with material textures."""

    def __init__(self, asset: Asset, strength: float):
        mesh = asset.mesh
        v = mesh.vertices.astype(np.float64)
        tri = mesh.triangles.astype(np.int64)
        self.v0 = v[tri[:, 0]]
        self.e1 = v[tri[:, 1]] - self.v0
        self.e2 = v[tri[:, 2]] - self.v0
        areas = 0.5 * np.linalg.norm(np.cross(self.e1, self.e2), axis=1)
        if tri.shape[0] and areas.max() <= 0.0:
            raise DegenerateMesh("mesh has only zero-area triangles")
        self.areas = areas
        self.corner_normals = mesh.normals.astype(np.float64)[tri]  # (m, 3, 3)
        self.corner_uvs = mesh.uvs.astype(np.float64)[tri]          # (m, 3, 2)
        self.geo_normals = np.cross(self.e1, self.e2)
        norms = np.linalg.norm(self.geo_normals, axis=1, keepdims=True)
        self.geo_normals = self.geo_normals / np.maximum(norms, 1e-30)
        # float32 copies keep the hot intersect loop in single precision
        self.v0_f = self.v0.astype(np.float32)
        self.e1_f = self.e1.astype(np.float32)
        self.e2_f = self.e2.astype(np.float32)
        mats = asset.materials
        self.albedo = mats.albedo
        self.metallic = mats.metallic
        self.roughness = mats.roughness
        self.emission = mats.emission
        self.strength = float(strength)

        # emissive-triangle power table for NEE
        centroid_uv = self.corner_uvs.mean(axis=1)
        centroid_emission = sample_bilinear(self.emission, centroid_uv) * self.strength
        power = luminance(centroid_emission) * areas
        self.emissive_idx = np.nonzero(power > 1e-12)[0]
        if self.emissive_idx.size:
            w = power[self.emissive_idx]
            self.emissive_cdf = np.cumsum(w) / w.sum()
            self.emissive_weight = w / w.sum()
        else:
            self.emissive_cdf = None


def sample_bilinear(tex: TextureMap, uv: np.ndarray) -> np.ndarray:
    """Wrap-around bilinear texture lookup; uv is (n, 2), v up = row 0."""
    if tex.is_constant:
        return np.broadcast_to(tex.data[0, 0], (uv.shape[0], tex.channels)).copy()
    w, h = tex.width, tex.height
    x = uv[:, 0] * w - 0.5
    y = (1.0 - uv[:, 1]) * h - 0.5
    x0, y0 = np.floor(x).astype(np.int64), np.floor(y).astype(np.int64)
    fx, fy = x - x0, y - y0
    x0 %= w
    y0 %= h
    x1, y1 = (x0 + 1) % w, (y0 + 1) % h
    d = tex.data
    top = d[y0, x0] * (1 - fx)[:, None] + d[y0, x1] * fx[:, None]
    bot = d[y1, x0] * (1 - fx)[:, None] + d[y1, x1] * fx[:, None]
    return top * (1 - fy)[:, None] + bot * fy[:, None]


def sample_nearest(tex: TextureMap, uv: np.ndarray) -> np.ndarray:
    """Nearest-texel lookup; keeps hard emission-region boundaries crisp."""
    if tex.is_constant:
        return np.broadcast_to(tex.data[0, 0], (uv.shape[0], tex.channels)).copy()
    w, h = tex.width, tex.height
    x = np.floor(uv[:, 0] * w).astype(np.int64) % w
    y = np.floor((1.0 - uv[:, 1]) * h).astype(np.int64) % h
    return tex.data[y, x]


def _cross3(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # np.cross spends most of its time in moveaxis for these shapes
    out = np.empty(np.broadcast_shapes(a.shape, b.shape), dtype=np.result_type(a, b))
    out[..., 0] = a[..., 1] * b[..., 2] - a[..., 2] * b[..., 1]
    out[..., 1] = a[..., 2] * b[..., 0] - a[..., 0] * b[..., 2]
    out[..., 2] = a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]
    return out


def intersect(scene: _Scene, origins: np.ndarray, dirs: np.ndarray):
    """Nearest-hit Moller-Trumbore over all triangles, chunked over rays.

    Returns (t, tri_index, bary_u, bary_v); tri_index == -1 on miss.
    """
    n = origins.shape[0]
    t_out = np.full(n, np.inf)
    idx_out = np.full(n, -1, dtype=np.int64)
    u_out = np.zeros(n)
    v_out = np.zeros(n)
    if scene.v0.shape[0] == 0:
        return t_out, idx_out, u_out, v_out
    e1, e2, v0 = scene.e1_f, scene.e2_f, scene.v0_f
    # target a fixed number of ray-triangle pairs per chunk
    chunk = max(_RAY_CHUNK, int(250_000 / max(e1.shape[0], 1)))
    for s in range(0, n, chunk):
        o = origins[s:s + chunk, None, :].astype(np.float32)
        d = dirs[s:s + chunk, None, :].astype(np.float32)
        pvec = _cross3(d, e2[None, :, :])
        det = np.einsum("mk,rmk->rm", e1, pvec)
        safe = np.abs(det) > 1e-9
        inv_det = np.where(safe, 1.0 / np.where(safe, det, 1.0), 0.0)
        tvec = o - v0[None, :, :]
        u = np.einsum("rmk,rmk->rm", tvec, pvec) * inv_det
        qvec = _cross3(tvec, e1[None, :, :])
        v = np.einsum("rmk,rmk->rm", np.broadcast_to(d, qvec.shape), qvec) * inv_det
        t = np.einsum("mk,rmk->rm", e2, qvec) * inv_det
        ok = safe & (u >= -1e-9) & (v >= -1e-9) & (u + v <= 1.0 + 1e-9) & (t > _EPS_T)
        t = np.where(ok, t, np.inf)
        best = np.argmin(t, axis=1)
        rows = np.arange(t.shape[0])
        tb = t[rows, best]
        hit = np.isfinite(tb)
        sl = slice(s, s + t.shape[0])
        t_out[sl] = tb
        idx_out[sl] = np.where(hit, best, -1)
        u_out[sl] = np.where(hit, u[rows, best], 0.0)
        v_out[sl] = np.where(hit, v[rows, best], 0.0)
    return t_out, idx_out, u_out, v_out


def _occluded(scene: _Scene, origins: np.ndarray, targets: np.ndarray) -> np.ndarray:
    delta = targets - origins
    dist = np.linalg.norm(delta, axis=1)
    dirs = delta / np.maximum(dist[:, None], 1e-30)
    t, idx, _, _ = intersect(scene, origins, dirs)
    return (idx >= 0) & (t < dist * (1.0 - 1e-4))


def _shade_inputs(scene: _Scene, tri: np.ndarray, u: np.ndarray, v: np.ndarray):
    bary = np.stack([1.0 - u - v, u, v], axis=1)  # (n, 3)
    normals = np.einsum("nc,nck->nk", bary, scene.corner_normals[tri])
    normals /= np.maximum(np.linalg.norm(normals, axis=1, keepdims=True), 1e-30)
    uvs = np.einsum("nc,nck->nk", bary, scene.corner_uvs[tri])
    return normals, uvs


def brdf_eval(wo, wi, n, albedo, metallic, roughness):
    """Cook-Torrance GGX + Lambert diffuse; zero below the horizon."""
    ndl = np.einsum("nk,nk->n", n, wi)
    ndv = np.einsum("nk,nk->n", n, wo)
    up = (ndl > 0) & (ndv > 0)
    h = wo + wi
    h /= np.maximum(np.linalg.norm(h, axis=1, keepdims=True), 1e-30)
    ndh = np.clip(np.einsum("nk,nk->n", n, h), 0.0, 1.0)
    vdh = np.clip(np.einsum("nk,nk->n", wo, h), 0.0, 1.0)
    alpha = np.clip(roughness, 0.03, 1.0) ** 2
    a2 = alpha * alpha
    denom = ndh * ndh * (a2 - 1.0) + 1.0
    dist = a2 / np.maximum(np.pi * denom * denom, 1e-30)
    f0 = 0.04 * (1.0 - metallic)[:, None] + albedo * metallic[:, None]
    fresnel = f0 + (1.0 - f0) * (1.0 - vdh)[:, None] ** 5

    def g1(ndx):
        return 2.0 * ndx / np.maximum(ndx + np.sqrt(a2 + (1.0 - a2) * ndx * ndx), 1e-30)

    geo = g1(np.clip(ndl, 0, 1)) * g1(np.clip(ndv, 0, 1))
    spec = fresnel * (dist * geo / np.maximum(4.0 * ndl * ndv, 1e-30))[:, None]
    diff = albedo * (1.0 - metallic)[:, None] / np.pi
    return np.where(up[:, None], diff + spec, 0.0)


def _cosine_hemisphere(n: np.ndarray, u1: np.ndarray, u2: np.ndarray) -> np.ndarray:
    r = np.sqrt(u1)
    phi = 2.0 * np.pi * u2
    x, y = r * np.cos(phi), r * np.sin(phi)
    z = np.sqrt(np.maximum(1.0 - u1, 0.0))
    helper = np.where(np.abs(n[:, 0:1]) < 0.9, [[1.0, 0.0, 0.0]], [[0.0, 1.0, 0.0]])
    t1 = np.cross(helper, n)
    t1 /= np.maximum(np.linalg.norm(t1, axis=1, keepdims=True), 1e-30)
    t2 = np.cross(n, t1)
    return x[:, None] * t1 + y[:, None] * t2 + z[:, None] * n


def _nee(scene, lights: SceneLights, x, wo, ns, albedo, metallic, roughness, rng):
    """Direct lighting at shading points via next-event estimation."""
    n = x.shape[0]
    out = np.zeros((n, 3))
    offset = x + ns * 1e-6

    for pl in lights.point_lights:
        delta = pl.position[None, :] - x
        dist2 = np.einsum("nk,nk->n", delta, delta)
        wi = delta / np.sqrt(dist2)[:, None]
        cos = np.einsum("nk,nk->n", ns, wi)
        vis = ~_occluded(scene, offset, np.broadcast_to(pl.position, x.shape))
        f = brdf_eval(wo, wi, ns, albedo, metallic, roughness)
        intensity = pl.power / (4.0 * np.pi)
        out += f * (np.clip(cos, 0, None) * vis * intensity / dist2)[:, None]

    al = lights.area_light
    if al is not None and al.radius > 0:
        u1, u2 = rng.random(n), rng.random(n)
        r = al.radius * np.sqrt(u1)
        phi = 2.0 * np.pi * u2
        helper = np.array([1.0, 0.0, 0.0]) if abs(al.normal[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
        t1 = np.cross(helper, al.normal)
        t1 /= np.linalg.norm(t1)
        t2 = np.cross(al.normal, t1)
        pts = al.center + (r * np.cos(phi))[:, None] * t1 + (r * np.sin(phi))[:, None] * t2
        delta = pts - x
        dist2 = np.einsum("nk,nk->n", delta, delta)
        wi = delta / np.sqrt(dist2)[:, None]
        cos_s = np.einsum("nk,nk->n", ns, wi)
        cos_l = np.clip(-wi @ al.normal, 0.0, None)  # one-sided emitter
        area = np.pi * al.radius ** 2
        radiance = al.power / (np.pi * area)
        vis = ~_occluded(scene, offset, pts)
        f = brdf_eval(wo, wi, ns, albedo, metallic, roughness)
        out += f * (np.clip(cos_s, 0, None) * cos_l * vis * radiance * area / dist2)[:, None]

    if scene.emissive_cdf is not None:
        pick = np.searchsorted(scene.emissive_cdf, rng.random(n))
        pick = np.minimum(pick, scene.emissive_idx.size - 1)
        tri = scene.emissive_idx[pick]
        r1 = np.sqrt(rng.random(n))
        b1 = 1.0 - r1
        b2 = rng.random(n) * r1
        b0 = 1.0 - b1 - b2
        bary = np.stack([b0, b1, b2], axis=1)
        pts = scene.v0[tri] + b1[:, None] * scene.e1[tri] + b2[:, None] * scene.e2[tri]
        uv = np.einsum("nc,nck->nk", bary, scene.corner_uvs[tri])
        emitted = sample_bilinear(scene.emission, uv) * scene.strength
        delta = pts - x
        dist2 = np.einsum("nk,nk->n", delta, delta)
        close = dist2 < 1e-12
        dist2 = np.where(close, 1.0, dist2)
        wi = delta / np.sqrt(dist2)[:, None]
        cos_s = np.clip(np.einsum("nk,nk->n", ns, wi), 0.0, None)
        cos_l = np.abs(np.einsum("nk,nk->n", wi, scene.geo_normals[tri]))  # two-sided
        pdf_area = scene.emissive_weight[pick] / np.maximum(scene.areas[tri], 1e-30)
        vis = ~_occluded(scene, offset, pts - 1e-6 * wi * np.sqrt(dist2)[:, None])
        f = brdf_eval(wo, wi, ns, albedo, metallic, roughness)
        weight = np.where(close, 0.0, cos_s * cos_l * vis / (dist2 * np.maximum(pdf_area, 1e-30)))
        out += f * emitted * weight[:, None]
    return out


def render_aovs(asset: Asset, view: ViewSpec, strength: float):
    """Deterministic albedo/emission/normal/position passes and coverage."""
    scene = _Scene(asset, strength)
    res = view.resolution
    origins, dirs = pixel_rays(view)
    t, tri, u, v = intersect(scene, origins, dirs)
    hit = tri >= 0
    albedo = np.zeros((res * res, 3))
    emission = np.zeros((res * res, 3))
    normal = np.zeros((res * res, 3))
    position = np.zeros((res * res, 3))
    if hit.any():
        ns, uvs = _shade_inputs(scene, tri[hit], u[hit], v[hit])
        albedo[hit] = sample_bilinear(scene.albedo, uvs)
        # nearest, not bilinear: interpolating across an emission-region
        # boundary would invent dim emitters and dilate luminous-area masks
        emission[hit] = sample_nearest(scene.emission, uvs) * strength
        normal[hit] = ns
        position[hit] = origins[hit] + t[hit, None] * dirs[hit]
    shape = (res, res, 3)
    return {
        "albedo": TextureMap.from_array(albedo.reshape(shape)),
        "emission": TextureMap.from_array(emission.reshape(shape)),
        "normal": TextureMap.from_array(normal.reshape(shape)),
        "position": TextureMap.from_array(position.reshape(shape)),
        "coverage": hit.reshape(res, res),
    }


def _trace_beauty(scene: _Scene, view: ViewSpec, lights: SceneLights,
                  cfg: RenderConfig, stream_key: tuple) -> np.ndarray:
    res = view.resolution
    npix = res * res
    rng = np.random.Generator(np.random.Philox(key=abs(hash(stream_key)) % (2 ** 63)))
    total = np.zeros((npix, 3))
    for _ in range(cfg.samples_per_pixel):
        jitter = rng.random((res, res, 2))
        origins, dirs = pixel_rays(view, jitter)
        origins = np.array(origins)
        dirs = np.array(dirs)
        throughput = np.ones((npix, 3))
        active = np.ones(npix, dtype=bool)
        radiance = np.zeros((npix, 3))
        for bounce in range(cfg.max_bounces):
            if not active.any():
                break
            idx = np.nonzero(active)[0]
            t, tri, u, v = intersect(scene, origins[idx], dirs[idx])
            miss = tri < 0
            radiance[idx[miss]] += throughput[idx[miss]] * lights.env_intensity
            hit_rows = idx[~miss]
            if hit_rows.size == 0:
                active[:] = False
                break
            tri_h, u_h, v_h = tri[~miss], u[~miss], v[~miss]
            x = origins[hit_rows] + t[~miss, None] * dirs[hit_rows]
            ns, uvs = _shade_inputs(scene, tri_h, u_h, v_h)
            wo = -dirs[hit_rows]
            flip = np.einsum("nk,nk->n", ns, wo) < 0
            ns[flip] = -ns[flip]
            albedo = sample_bilinear(scene.albedo, uvs)
            metallic = sample_bilinear(scene.metallic, uvs)[:, 0]
            roughness = sample_bilinear(scene.roughness, uvs)[:, 0]
            if bounce == 0:
                emitted = sample_bilinear(scene.emission, uvs) * scene.strength
                radiance[hit_rows] += throughput[hit_rows] * emitted
            radiance[hit_rows] += throughput[hit_rows] * _nee(
                scene, lights, x, wo, ns, albedo, metallic, roughness, rng)
            # cosine-weighted bounce; f*cos/pdf = pi*f
            wi = _cosine_hemisphere(ns, rng.random(hit_rows.size), rng.random(hit_rows.size))
            f = brdf_eval(wo, wi, ns, albedo, metallic, roughness)
            throughput[hit_rows] *= np.pi * f
            origins[hit_rows] = x + ns * 1e-6
            dirs[hit_rows] = wi
            active[:] = False
            alive = np.einsum("nk->n", throughput[hit_rows]) > 1e-9
            active[hit_rows[alive]] = True
        total += radiance
    return (total / cfg.samples_per_pixel).reshape(res, res, 3)


def apply_bloom(beauty: np.ndarray, bloom: BloomParams) -> np.ndarray:
    if bloom.gain <= 0.0:
        return beauty
    lum = luminance(beauty)
    bright = np.where((lum > bloom.threshold)[:, :, None], beauty, 0.0)
    sigma = bloom.sigma_frac * beauty.shape[1]
    blurred = np.stack(
        [ndimage.gaussian_filter(bright[:, :, c], sigma=sigma) for c in range(3)], axis=-1)
    return beauty + bloom.gain * blurred


def render_view(asset: Asset, view: ViewSpec, rig, strength: float,
                cfg: RenderConfig, view_index: int = 0, rig_index: int = 0) -> RenderedView:
    """Render one view: path-traced beauty plus deterministic AOV passes."""
    lights = as_scene_lights(rig)
    scene = _Scene(asset, strength)
    aovs = render_aovs(asset, view, strength)
    key = (cfg.seed, view_index, rig_index)
    beauty = _trace_beauty(scene, view, lights, cfg, key)
    beauty = apply_bloom(beauty, cfg.bloom)
    return RenderedView(
        beauty=TextureMap.from_array(beauty),
        albedo_pass=aovs["albedo"],
        emission_pass=aovs["emission"],
        normal_pass=aovs["normal"],
        position_pass=aovs["position"],
        coverage_mask=aovs["coverage"],
        view=view,
        strength=float(strength),
        view_index=view_index,
        rig_index=rig_index,
    )


def render_asset(asset: Asset, strengths, rigs, cfg: RenderConfig,
                 distance: float = 2.5, fov: float = 40.0, resolution: int = 256,
                 jobs: int = 1) -> list[RenderedView]:
    """Cartesian product of the 10 canonical views x strengths x rigs.

    Output order is view-major, then strength, then rig; deterministic
    regardless of ``jobs``.
    """
    views = canonical_views(distance, fov, resolution)
    tasks = [(vi, view, si, s, ri, rig)
             for vi, view in enumerate(views)
             for si, s in enumerate(strengths)
             for ri, rig in enumerate(rigs)]

    def run(task):
        vi, view, _si, s, ri, rig = task
        return render_view(asset, view, rig, s, cfg, view_index=vi, rig_index=ri)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(run, tasks))
    return [run(t) for t in tasks]
