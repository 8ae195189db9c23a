"""Parallel multi-region stylization: per-region transforms, one shared decode.

Each region is encoded and stylized independently (they may run concurrently;
nothing is shared until the merge), merged at the deepest feature resolution
with mask-weighted summation, then decoded once.
"""

import hashlib
from dataclasses import dataclass

import numpy as np

from .errors import EmptyRegionError
from .masked_ops import MaskedFeature, alpha_composite, as_mask, feather_mask
from .network import StyleNetwork
from .stylenet import (
    BlendConfig,
    apply_transform,
    compute_style_transform,
    decode,
    encode,
    reconstruction_pass,
    _check_image,
)


@dataclass
class RegionSpec:
    """One region to stylize: a mask over the shared content plus its style."""

    mask: np.ndarray
    style: np.ndarray


def merge_masked_features(items: list[MaskedFeature]) -> MaskedFeature:
    """Mask-weighted sum; overlaps are averaged, sub-unit coverage kept partial.

    merged(p) = sum_i m_i(p) f_i(p) / max(sum_i m_i(p), 1); merged mask is
    min(sum_i m_i, 1). Order-independent by construction.
    """
    if not items:
        raise ValueError("merge requires at least one item")
    shape = items[0].features.shape
    for item in items[1:]:
        if item.features.shape != shape:
            raise ValueError(
                f"feature shape mismatch in merge: {item.features.shape} vs {shape}"
            )
    weight_sum = np.zeros(shape[1:], dtype=np.float32)
    feat_sum = np.zeros(shape, dtype=np.float32)
    for item in items:
        weight_sum += item.mask
        feat_sum += item.mask[None] * item.features
    merged = feat_sum / np.maximum(weight_sum, 1.0)[None]
    return MaskedFeature(merged, np.minimum(weight_sum, 1.0))


def _style_key(style: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(style).tobytes()).hexdigest()


def stylize_multi(
    network: StyleNetwork,
    content: np.ndarray,
    regions: list[RegionSpec],
    blend: BlendConfig = BlendConfig(),
) -> np.ndarray:
    """Stylize several regions, each with its own style, in one pass."""
    if not regions:
        raise ValueError("stylize_multi requires at least one region")
    content = _check_image(content)
    h, w = content.shape[:2]
    work_masks = []
    for i, region in enumerate(regions):
        mask = as_mask(region.mask)
        if mask.shape != (h, w):
            raise ValueError(f"region {i} mask dims {mask.shape} do not match content {(h, w)}")
        work_masks.append(
            feather_mask(mask, blend.feather_kernel_px) if blend.feather_before else mask
        )

    ones_style_cache: dict[str, list[MaskedFeature]] = {}
    styled: list[MaskedFeature] = []
    failures: list[int] = []
    for i, (region, work_mask) in enumerate(zip(regions, work_masks)):
        style = _check_image(region.style)
        key = _style_key(style)
        if key not in ones_style_cache:
            ones_style_cache[key] = encode(
                network, style, np.ones(style.shape[:2], dtype=np.float32)
            )
        try:
            stages = encode(network, content, work_mask, blend)
            transform = compute_style_transform(
                network, stages[-1], ones_style_cache[key][-1]
            )
            styled.append(apply_transform(stages[-1], transform))
        except EmptyRegionError:
            failures.append(i)
    if failures:
        raise EmptyRegionError(
            f"regions {failures} select no positions at the transform stage"
        )

    merged = merge_masked_features(styled)
    merged_pixel = np.minimum(np.sum(work_masks, axis=0), 1.0).astype(np.float32)
    content_stages = None
    if blend.content_feather_decoder:
        content_stages, _ = reconstruction_pass(network, content)
    decoded = decode(network, merged, merged_pixel, content_stages, blend)
    return alpha_composite(decoded, content, merged_pixel)
