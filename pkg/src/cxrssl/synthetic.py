"""Synthetic two-class image set for desk-scale experiments.

Class 0 carries horizontal band texture, class 1 vertical.  Band frequency,
phase, amplitude, base brightness, and pixel noise vary per image, so raw
intensity statistics carry almost no class signal: a useful representation
has to capture orientation, which survives cropping, jitter, and blur.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

from .data import DatasetManifest, ManifestRecord, write_manifest

CLASS_NAMES = ["bands_h", "bands_v"]


def synthetic_image(rng: np.random.Generator, size: int, label: int) -> np.ndarray:
    """One grayscale (1, size, size) image in [0, 1]."""
    freq = rng.uniform(2.0, 5.0)
    phase = rng.uniform(0.0, 2.0 * np.pi)
    amp = rng.uniform(0.2, 0.4)
    base = rng.uniform(amp + 0.05, 1.0 - amp - 0.05)
    noise = rng.normal(0.0, rng.uniform(0.02, 0.08), size=(size, size))
    axis = np.arange(size, dtype=np.float64) / size
    wave = np.sin(2.0 * np.pi * freq * axis + phase)
    field = wave[:, None] if label == 0 else wave[None, :]
    img = base + amp * field + noise
    return np.clip(img, 0.0, 1.0).astype(np.float32)[None]


def make_synthetic_dataset(root: str | Path, n_images: int, image_size: int = 32,
                           seed: int = 0, manifest_name: str = "manifest.txt") -> Path:
    """Write ``n_images`` PNGs (classes alternating) plus a labeled manifest
    under ``root``; returns the manifest path."""
    root = Path(root)
    (root / "img").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    records = []
    for i in range(n_images):
        label = i % 2
        img = synthetic_image(rng, image_size, label)
        u8 = np.round(img[0] * 255.0).astype(np.uint8)
        rel = f"img/{i:05d}.png"
        Image.fromarray(u8, mode="L").save(root / rel)
        records.append(ManifestRecord(rel, label, "unsplit"))
    manifest = DatasetManifest(records, list(CLASS_NAMES), root)
    return write_manifest(manifest, root / manifest_name)
