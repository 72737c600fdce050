"""Emission-strength estimation: pluggable feature providers and a
three-layer MLP regression head with hand-derived gradients.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import DivergenceDetected
from .textures import TextureMap, luminance

STRENGTH_RANGE = (1.0, 3.0)
LUMINOUS_THRESHOLDS = (0.01, 0.05, 0.2)


class FeatureProvider:
    """Interface: deterministic image -> fixed-dimension feature vector."""

    dimension: int

    def extract(self, image: TextureMap) -> np.ndarray:
        raise NotImplementedError


class StatFeatures(FeatureProvider):
    """Handcrafted 8-dim luminance statistics of a linear HDR beauty pass.

    Features: luminous ratios at thresholds 0.01/0.05/0.2, mean and max
    luminance, mean luminance inside the luminous area, luminance
    variance, and a bloom-halo proxy (mean luminance in a 2-px dilation
    ring around the luminous area).
    """

    dimension = 8

    def extract(self, image: TextureMap) -> np.ndarray:
        lum = luminance(image.data) if image.channels == 3 else image.data[:, :, 0]
        feats = [float(np.mean(lum > t)) for t in LUMINOUS_THRESHOLDS]
        feats += [float(lum.mean()), float(lum.max())]
        area = lum > LUMINOUS_THRESHOLDS[0]
        feats.append(float(lum[area].mean()) if area.any() else 0.0)
        feats.append(float(lum.var()))
        ring = ndimage.binary_dilation(area, iterations=2) & ~area
        feats.append(float(lum[ring].mean()) if ring.any() else 0.0)
        return np.array(feats)


@dataclass
class MlpHead:
    """d -> 64 -> 32 -> 1 regressor with tanh nonlinearities.

    Inputs and labels are standardized with stored scalers so features of
    very different magnitudes train stably.
    """

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    w3: np.ndarray
    b3: np.ndarray
    feat_mean: np.ndarray
    feat_std: np.ndarray
    label_mean: float = 0.0
    label_std: float = 1.0
    final_train_mse: float = float("nan")
    final_val_mse: float = float("nan")

    @classmethod
    def init(cls, dim: int, hidden=(64, 32), rng: np.random.Generator | None = None) -> "MlpHead":
        rng = rng or np.random.default_rng(0)
        h1, h2 = hidden

        def glorot(shape):
            return rng.normal(0.0, np.sqrt(2.0 / sum(shape)), size=shape)

        return cls(w1=glorot((dim, h1)), b1=np.zeros(h1),
                   w2=glorot((h1, h2)), b2=np.zeros(h2),
                   w3=glorot((h2, 1)), b3=np.zeros(1),
                   feat_mean=np.zeros(dim), feat_std=np.ones(dim))

    def _forward(self, x: np.ndarray):
        a1 = np.tanh(x @ self.w1 + self.b1)
        a2 = np.tanh(a1 @ self.w2 + self.b2)
        out = a2 @ self.w3 + self.b3
        return out[:, 0], a1, a2

    def predict_standardized(self, feats: np.ndarray) -> np.ndarray:
        x = (feats - self.feat_mean) / self.feat_std
        out, _, _ = self._forward(x)
        return out * self.label_std + self.label_mean

    def loss_and_grads(self, x: np.ndarray, y: np.ndarray):
        """MSE over a standardized batch and gradients for every parameter."""
        n = x.shape[0]
        out, a1, a2 = self._forward(x)
        diff = out - y
        loss = float(np.mean(diff * diff))
        d_out = (2.0 * diff / n)[:, None]
        g_w3 = a2.T @ d_out
        g_b3 = d_out.sum(axis=0)
        d_a2 = (d_out @ self.w3.T) * (1.0 - a2 * a2)
        g_w2 = a1.T @ d_a2
        g_b2 = d_a2.sum(axis=0)
        d_a1 = (d_a2 @ self.w2.T) * (1.0 - a1 * a1)
        g_w1 = x.T @ d_a1
        g_b1 = d_a1.sum(axis=0)
        return loss, {"w1": g_w1, "b1": g_b1, "w2": g_w2, "b2": g_b2,
                      "w3": g_w3, "b3": g_b3}

    def to_json(self) -> str:
        payload = {"hidden": [self.w1.shape[1], self.w2.shape[1]],
                   "dim": self.w1.shape[0]}
        for name in ("w1", "b1", "w2", "b2", "w3", "b3", "feat_mean", "feat_std"):
            payload[name] = getattr(self, name).tolist()
        payload["label_mean"] = self.label_mean
        payload["label_std"] = self.label_std
        payload["final_train_mse"] = self.final_train_mse
        payload["final_val_mse"] = self.final_val_mse
        return json.dumps(payload)

    @classmethod
    def from_json(cls, text: str) -> "MlpHead":
        d = json.loads(text)
        kwargs = {name: np.array(d[name])
                  for name in ("w1", "b1", "w2", "b2", "w3", "b3",
                               "feat_mean", "feat_std")}
        return cls(label_mean=d["label_mean"], label_std=d["label_std"],
                   final_train_mse=d["final_train_mse"],
                   final_val_mse=d["final_val_mse"], **kwargs)


def train_head(samples, provider: FeatureProvider, epochs: int = 200,
               lr: float = 0.01, val_fraction: float = 0.2,
               seed: int = 0) -> MlpHead:
    """Adam on MSE over (image, strength) pairs; records final train/val MSE.

    ``samples`` is an iterable of (TextureMap | feature vector, label).
    """
    feats, labels = [], []
    for image, label in samples:
        vec = image if isinstance(image, np.ndarray) else provider.extract(image)
        feats.append(vec)
        labels.append(float(label))
    feats = np.asarray(feats, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)

    rng = np.random.default_rng(seed)
    head = MlpHead.init(feats.shape[1], rng=rng)
    head.feat_mean = feats.mean(axis=0)
    head.feat_std = np.maximum(feats.std(axis=0), 1e-8)
    head.label_mean = float(labels.mean())
    head.label_std = float(max(labels.std(), 1e-8))

    x = (feats - head.feat_mean) / head.feat_std
    y = (labels - head.label_mean) / head.label_std
    n_val = max(1, int(len(y) * val_fraction)) if len(y) > 4 else 0
    perm = rng.permutation(len(y))
    val_idx, train_idx = perm[:n_val], perm[n_val:]
    if train_idx.size == 0:
        train_idx = perm

    m = {k: 0.0 for k in ("w1", "b1", "w2", "b2", "w3", "b3")}
    v = dict(m)
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    loss = float("nan")
    for step in range(1, epochs + 1):
        loss, grads = head.loss_and_grads(x[train_idx], y[train_idx])
        if not np.isfinite(loss):
            raise DivergenceDetected(f"training MSE became {loss}")
        for key, g in grads.items():
            m[key] = beta1 * m[key] + (1 - beta1) * g
            v[key] = beta2 * v[key] + (1 - beta2) * g * g
            mhat = m[key] / (1 - beta1 ** step)
            vhat = v[key] / (1 - beta2 ** step)
            setattr(head, key, getattr(head, key) - lr * mhat / (np.sqrt(vhat) + eps))

    head.final_train_mse = loss * head.label_std ** 2
    if n_val:
        pred = head.predict_standardized(feats[val_idx])
        head.final_val_mse = float(np.mean((pred - labels[val_idx]) ** 2))
    else:
        head.final_val_mse = head.final_train_mse
    return head


def predict_strength(image: TextureMap, provider: FeatureProvider,
                     head: MlpHead, strength_range=STRENGTH_RANGE) -> float:
    """Clamped scalar strength prediction for one image."""
    pred = head.predict_standardized(provider.extract(image)[None, :])[0]
    return float(np.clip(pred, *strength_range))
