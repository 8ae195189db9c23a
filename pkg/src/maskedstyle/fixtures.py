"""Deterministic synthetic fixtures: contents with high region/background color
disparity, textured styles, and an on-disk dataset in the annotation format the
indexer reads. Everything derives from fixed seeds so runs are reproducible.
"""

import json
from pathlib import Path

import cv2
import numpy as np

from .dataset import encode_segmentation, save_image

FIXTURE_SIZE = 96

# (background, foreground) base colors chosen for strong whole-vs-region disparity
_CONTENT_PALETTES = (
    ((0.10, 0.14, 0.30), (0.85, 0.55, 0.15)),
    ((0.08, 0.25, 0.10), (0.80, 0.20, 0.55)),
    ((0.25, 0.10, 0.12), (0.20, 0.75, 0.85)),
    ((0.15, 0.15, 0.18), (0.90, 0.85, 0.30)),
    ((0.30, 0.28, 0.08), (0.25, 0.35, 0.90)),
    ((0.12, 0.22, 0.28), (0.95, 0.40, 0.35)),
)

_STYLE_PALETTES = (
    ((0.95, 0.75, 0.20), (0.55, 0.10, 0.35)),
    ((0.15, 0.60, 0.75), (0.90, 0.90, 0.85)),
    ((0.70, 0.15, 0.10), (0.10, 0.15, 0.45)),
    ((0.35, 0.80, 0.35), (0.95, 0.55, 0.75)),
)


def _smooth_noise(rng, size: int, cells: int, amplitude: float) -> np.ndarray:
    grid = rng.standard_normal((cells, cells, 3)).astype(np.float32)
    up = cv2.resize(grid, (size, size), interpolation=cv2.INTER_CUBIC)
    return amplitude * up


def fixture_mask(i: int, size: int = FIXTURE_SIZE) -> np.ndarray:
    """Compact blob covering roughly 8-20% of the image, away from borders."""
    rng = np.random.default_rng(7000 + i)
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float32)
    cy = size * (0.35 + 0.3 * rng.random())
    cx = size * (0.35 + 0.3 * rng.random())
    base_r = size * (0.16 + 0.08 * rng.random())
    wobble = 0.25 * np.sin(3.0 * np.arctan2(yy - cy, xx - cx) + rng.random() * 6.28)
    shape = i % 3
    if shape == 0:
        inside = (yy - cy) ** 2 + (xx - cx) ** 2 <= (base_r * (1 + wobble)) ** 2
    elif shape == 1:
        hh, ww = base_r * 1.2, base_r * 0.8
        inside = (np.abs(yy - cy) <= hh) & (np.abs(xx - cx) <= ww)
    else:
        inside = (np.abs(yy - cy) + np.abs(xx - cx)) <= base_r * 1.4
    return inside.astype(np.float32)


def fixture_content(i: int, size: int = FIXTURE_SIZE) -> tuple[np.ndarray, np.ndarray]:
    """(content image, region mask) with strongly separated color statistics."""
    rng = np.random.default_rng(1000 + i)
    bg, fg = _CONTENT_PALETTES[i % len(_CONTENT_PALETTES)]
    img = np.empty((size, size, 3), dtype=np.float32)
    img[:] = bg
    ramp = np.linspace(-0.05, 0.05, size, dtype=np.float32)
    img += ramp[None, :, None]
    img += _smooth_noise(rng, size, 8, 0.06)
    mask = fixture_mask(i, size)
    region = np.empty_like(img)
    region[:] = fg
    region += _smooth_noise(rng, size, 6, 0.08)
    img = np.where(mask[..., None] > 0.5, region, img)
    return np.clip(img, 0.0, 1.0).astype(np.float32), mask


def fixture_style(j: int, size: int = FIXTURE_SIZE) -> np.ndarray:
    """Textured two-color pattern; palettes rotate with j."""
    rng = np.random.default_rng(2000 + j)
    a, b = _STYLE_PALETTES[j % len(_STYLE_PALETTES)]
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float32)
    kind = j % 3
    if kind == 0:
        wave = np.sin(2 * np.pi * (xx + 0.5 * yy) / (6 + j % 5))
    elif kind == 1:
        wave = np.sign(np.sin(2 * np.pi * xx / 8) * np.sin(2 * np.pi * yy / 8))
    else:
        wave = np.cos(2 * np.pi * np.hypot(xx - size / 2, yy - size / 2) / 10)
    t = (0.5 * (wave + 1.0))[..., None]
    img = t * np.asarray(a, dtype=np.float32) + (1 - t) * np.asarray(b, dtype=np.float32)
    img += _smooth_noise(rng, size, 12, 0.05)
    return np.clip(img, 0.0, 1.0).astype(np.float32)


def fixture_triples(
    n: int = 24, size: int = FIXTURE_SIZE
) -> list[tuple[np.ndarray, np.ndarray, np.ndarray]]:
    """(content, mask, style) triples for directional metric checks."""
    triples = []
    for i in range(n):
        content, mask = fixture_content(i, size)
        style = fixture_style(i % len(_STYLE_PALETTES), size)
        triples.append((content, mask, style))
    return triples


def write_fixture_dataset(root, n: int = 24, size: int = FIXTURE_SIZE) -> tuple[Path, Path]:
    """Write images + annotation JSONs under root, styles under root/styles.

    Each annotation carries the main region mask plus a tiny distractor below
    any sane area floor, exercising the qualifying-mask filter.
    """
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    style_dir = root / "styles"
    style_dir.mkdir(exist_ok=True)
    for j in range(len(_STYLE_PALETTES)):
        save_image(fixture_style(j, size), style_dir / f"style_{j:02d}.png")
    for i in range(n):
        content, mask = fixture_content(i, size)
        name = f"img_{i:06d}"
        save_image(content, root / f"{name}.png")
        tiny = np.zeros_like(mask)
        tiny[2:4, 2:4] = 1.0
        annotations = []
        for ann_id, m in enumerate((mask, tiny)):
            annotations.append(
                {
                    "id": i * 10 + ann_id,
                    "area": int(m.sum()),
                    "segmentation": encode_segmentation(m),
                }
            )
        payload = {
            "image": {"image_id": i, "file_name": f"{name}.png", "height": size, "width": size},
            "annotations": annotations,
        }
        (root / f"{name}.json").write_text(json.dumps(payload))
    return root, style_dir
