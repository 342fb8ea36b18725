"""Synthetic three-class sky images for desk-scale runs without SDSS access."""

from __future__ import annotations

import numpy as np

from .ingest import CLASSES, ImageSample

# class mix of the 1000-object SDSS subset: galaxy, qso, star
SDSS_PROPORTIONS = (0.440, 0.062, 0.498)

_COLORS = {
    "GALAXY": np.array([1.0, 0.85, 0.6]),
    "QSO": np.array([0.55, 0.7, 1.0]),
    "STAR": np.array([0.95, 0.95, 1.0]),
}


def class_counts(n: int, proportions=SDSS_PROPORTIONS) -> list[int]:
    raw = np.asarray(proportions, dtype=float) * n
    counts = np.floor(raw).astype(int)
    for i in np.argsort(-(raw - counts))[: n - counts.sum()]:
        counts[i] += 1
    return counts.tolist()


def _render(label: str, size: int, rng: np.random.Generator) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    cx, cy = size / 2 + rng.uniform(-4, 4, size=2)
    dx, dy = xx - cx, yy - cy
    if label == "GALAXY":
        theta = rng.uniform(0, np.pi)
        a, b = rng.uniform(5, 9), rng.uniform(2.5, 5)
        u = dx * np.cos(theta) + dy * np.sin(theta)
        v = -dx * np.sin(theta) + dy * np.cos(theta)
        profile = 0.8 * np.exp(-0.5 * ((u / a) ** 2 + (v / b) ** 2))
    else:
        sigma = rng.uniform(1.0, 1.6)
        profile = np.exp(-0.5 * (dx**2 + dy**2) / sigma**2)
        if label == "STAR":
            spike = np.exp(-0.5 * (dx / 0.7) ** 2) + np.exp(-0.5 * (dy / 0.7) ** 2)
            profile = profile + 0.35 * spike * np.exp(-np.hypot(dx, dy) / 10)
    img = profile[..., None] * _COLORS[label]
    img += 0.05 + rng.normal(0.0, 0.02, size=img.shape)
    return np.clip(img, 0.0, 1.0).astype(np.float32)


def generate_sky_shapes(
    n: int = 300,
    size: int = 64,
    seed: int = 0,
    proportions=SDSS_PROPORTIONS,
) -> list[ImageSample]:
    """Extended blobs (galaxies), white spiked points (stars), blue points (quasars)."""
    rng = np.random.default_rng(seed)
    labels = np.repeat(np.arange(len(CLASSES)), class_counts(n, proportions))
    rng.shuffle(labels)
    return [
        ImageSample(f"synth{i:05d}", _render(CLASSES[lab], size, rng), int(lab))
        for i, lab in enumerate(labels)
    ]
