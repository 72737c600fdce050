"""Render-then-evaluate benchmark: PSNR, SSIM, Dice, Frechet distance,
cosine similarity, strength RMSE, and the composed evaluation protocol.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .assets import Asset
from .errors import (
    DimensionMismatch,
    EmptyInput,
    ImageTooSmall,
    NonConvergedSqrt,
    ShapeMismatch,
    TopologyMismatch,
    ZeroVector,
)
from .textures import TextureMap, luminance

PSNR_CAP_DB = 100.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def psnr(a: TextureMap, b: TextureMap, peak: float = 1.0) -> float:
    """10 log10(peak^2 / MSE), capped at 100 dB for identical images."""
    if a.data.shape != b.data.shape:
        raise ShapeMismatch(f"{a.data.shape} vs {b.data.shape}")
    mse = float(np.mean((a.data - b.data) ** 2))
    if mse <= peak * peak * 10 ** (-PSNR_CAP_DB / 10.0):
        return PSNR_CAP_DB
    return 10.0 * math.log10(peak * peak / mse)


def _to_gray(tex: TextureMap) -> np.ndarray:
    if tex.channels == 3:
        return luminance(tex.data)
    return tex.data[:, :, 0]


def ssim(a: TextureMap, b: TextureMap, dynamic_range: float = 1.0) -> float:
    """Mean local SSIM: 11x11 Gaussian window (sigma 1.5), K1/K2 = 0.01/0.03.

    RGB inputs are converted to Rec.709 luma first.
    """
    if a.data.shape != b.data.shape:
        raise ShapeMismatch(f"{a.data.shape} vs {b.data.shape}")
    if a.width < SSIM_WINDOW or a.height < SSIM_WINDOW:
        raise ImageTooSmall(f"SSIM needs >= {SSIM_WINDOW} px per side")
    x, y = _to_gray(a), _to_gray(b)
    c1 = (SSIM_K1 * dynamic_range) ** 2
    c2 = (SSIM_K2 * dynamic_range) ** 2
    truncate = (SSIM_WINDOW - 1) / 2 / SSIM_SIGMA

    def blur(img):
        return ndimage.gaussian_filter(img, SSIM_SIGMA, truncate=truncate, mode="reflect")

    mu_x, mu_y = blur(x), blur(y)
    var_x = blur(x * x) - mu_x * mu_x
    var_y = blur(y * y) - mu_y * mu_y
    cov = blur(x * y) - mu_x * mu_y
    num = (2 * mu_x * mu_y + c1) * (2 * cov + c2)
    den = (mu_x ** 2 + mu_y ** 2 + c1) * (var_x + var_y + c2)
    return float(np.mean(num / den))


def emission_dice(pred_emission: TextureMap, gt_emission: TextureMap,
                  threshold: float = 0.01) -> float:
    """Hard-threshold Dice; both-empty masks agree perfectly (1.0)."""
    if pred_emission.data.shape != gt_emission.data.shape:
        raise ShapeMismatch(f"{pred_emission.data.shape} vs {gt_emission.data.shape}")
    a = np.clip(pred_emission.data, 0, 1).max(axis=-1) > threshold
    b = np.clip(gt_emission.data, 0, 1).max(axis=-1) > threshold
    total = a.sum() + b.sum()
    if total == 0:
        return 1.0
    return float(2.0 * np.sum(a & b) / total)


# ---------------------------------------------------------------------------
# feature-space statistics

@dataclass(frozen=True)
class GaussianFit:
    mean: np.ndarray
    cov: np.ndarray

    @classmethod
    def from_features(cls, features: np.ndarray) -> "GaussianFit":
        feats = np.asarray(features, dtype=np.float64)
        if feats.ndim != 2 or feats.shape[0] < 2:
            raise EmptyInput("need >= 2 feature vectors to fit a Gaussian")
        mean = feats.mean(axis=0)
        cov = np.cov(feats, rowvar=False)
        cov = np.atleast_2d(cov)
        return cls(mean=mean, cov=0.5 * (cov + cov.T))


def _sqrtm_psd(mat: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(0.5 * (mat + mat.T))
    if vals.min() < -1e-6 * max(1.0, abs(vals.max())):
        raise NonConvergedSqrt(f"matrix not PSD: min eigenvalue {vals.min()}")
    return (vecs * np.sqrt(np.clip(vals, 0.0, None))) @ vecs.T


def frechet_distance(fit_a: GaussianFit, fit_b: GaussianFit,
                     reg: float = 1e-6) -> float:
    """||mu_a - mu_b||^2 + Tr(Sa + Sb - 2 (Sa Sb)^{1/2}).

    The cross term uses the symmetrized product sqrt(Sa)^T Sb sqrt(Sa),
    whose trace of square root equals Tr((Sa Sb)^{1/2}).
    """
    if fit_a.mean.shape != fit_b.mean.shape:
        raise DimensionMismatch(f"{fit_a.mean.shape} vs {fit_b.mean.shape}")
    d = fit_a.mean.size
    sa = fit_a.cov + reg * np.eye(d)
    sb = fit_b.cov + reg * np.eye(d)
    root_a = _sqrtm_psd(sa)
    inner = root_a @ sb @ root_a
    vals = np.linalg.eigvalsh(0.5 * (inner + inner.T))
    tr_cross = float(np.sqrt(np.clip(vals, 0.0, None)).sum())
    diff = fit_a.mean - fit_b.mean
    return max(float(diff @ diff + np.trace(sa) + np.trace(sb) - 2.0 * tr_cross), 0.0)


def cosine_similarity(f_a: np.ndarray, f_b: np.ndarray) -> float:
    a = np.asarray(f_a, dtype=np.float64).ravel()
    b = np.asarray(f_b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise DimensionMismatch(f"{a.shape} vs {b.shape}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise ZeroVector("cosine similarity undefined for zero vectors")
    return float(np.clip(a @ b / (na * nb), -1.0, 1.0))


def strength_rmse(pairs) -> float:
    pairs = list(pairs)
    if not pairs:
        raise EmptyInput("strength_rmse needs at least one (pred, gt) pair")
    arr = np.asarray(pairs, dtype=np.float64)
    return float(np.sqrt(np.mean((arr[:, 0] - arr[:, 1]) ** 2)))


# ---------------------------------------------------------------------------
# composed protocol

@dataclass
class ViewMetrics:
    view_index: int
    albedo_psnr: float
    albedo_ssim: float
    emission_psnr: float
    emission_ssim: float
    dice: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class MetricReport:
    per_view: list[ViewMetrics] = field(default_factory=list)
    aggregate: dict = field(default_factory=dict)
    schema_version: int = 1

    def recompute_aggregate(self, frechet: float, cosine_mean: float,
                            rmse: float) -> None:
        for key in ("albedo_psnr", "albedo_ssim", "emission_psnr",
                    "emission_ssim", "dice"):
            self.aggregate[f"mean_{key}"] = float(
                np.mean([getattr(v, key) for v in self.per_view]))
        self.aggregate["frechet_distance"] = frechet
        self.aggregate["cosine_similarity_mean"] = cosine_mean
        self.aggregate["strength_rmse"] = rmse

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "per_view": [v.to_dict() for v in self.per_view],
            "aggregate": self.aggregate,
        }


@dataclass(frozen=True)
class EvalProtocol:
    distance: float = 2.5
    fov: float = 40.0
    resolution: int = 64
    samples_per_pixel: int = 8
    rig_seed: int = 7
    seed: int = 0
    dice_threshold: float = 0.01


def evaluate(pred_asset: Asset, gt_asset: Asset, protocol: EvalProtocol,
             provider, jobs: int = 1) -> MetricReport:
    """Render both assets under identical seeds/views/lighting and compare.

    ``provider`` maps a beauty pass to a feature vector (see
    strength.FeatureProvider); it feeds the Frechet and cosine metrics.
    """
    from .render import RenderConfig, render_asset, sample_light_rig

    if pred_asset.mesh.triangles.shape != gt_asset.mesh.triangles.shape or \
            not np.array_equal(pred_asset.mesh.triangles, gt_asset.mesh.triangles) or \
            not np.array_equal(pred_asset.mesh.vertices, gt_asset.mesh.vertices):
        raise TopologyMismatch("evaluate requires identical mesh geometry")

    rig_rng = np.random.default_rng(protocol.rig_seed)
    rig = sample_light_rig(rig_rng, gt_asset.mesh.bounding_radius())
    cfg = RenderConfig(samples_per_pixel=protocol.samples_per_pixel, seed=protocol.seed)

    def render_all(asset):
        return render_asset(
            asset, strengths=[asset.materials.emission_strength], rigs=[rig],
            cfg=cfg, distance=protocol.distance, fov=protocol.fov,
            resolution=protocol.resolution, jobs=jobs)

    pred_views = render_all(pred_asset)
    gt_views = render_all(gt_asset)

    report = MetricReport()
    feats_pred, feats_gt, cosines = [], [], []
    for pv, gv in zip(pred_views, gt_views):
        report.per_view.append(ViewMetrics(
            view_index=pv.view_index,
            albedo_psnr=psnr(pv.albedo_pass, gv.albedo_pass),
            albedo_ssim=ssim(pv.albedo_pass, gv.albedo_pass),
            emission_psnr=psnr(pv.emission_pass, gv.emission_pass),
            emission_ssim=ssim(pv.emission_pass, gv.emission_pass),
            dice=emission_dice(pv.emission_pass, gv.emission_pass,
                               protocol.dice_threshold),
        ))
        fa = provider.extract(pv.beauty)
        fb = provider.extract(gv.beauty)
        feats_pred.append(fa)
        feats_gt.append(fb)
        cosines.append(cosine_similarity(fa, fb))

    frechet = frechet_distance(GaussianFit.from_features(np.array(feats_pred)),
                               GaussianFit.from_features(np.array(feats_gt)))
    rmse = strength_rmse([(pred_asset.materials.emission_strength,
                           gt_asset.materials.emission_strength)])
    report.recompute_aggregate(frechet, float(np.mean(cosines)), rmse)
    return report
