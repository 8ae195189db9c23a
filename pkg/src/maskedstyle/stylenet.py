"""Masked style-transfer pipeline: encode, statistics transform, decode, composite.

The three public entry points mirror the three ways of restricting a
stylization to a region: stylize_masked (mask-aware everywhere),
style_then_mask, and mask_then_style (the two post/pre-masking baselines).
"""

from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn.functional as F

from .errors import EmptyRegionError, ResourceLimitError
from .masked_ops import (
    MaskedFeature,
    alpha_composite,
    as_mask,
    expand_mask,
    feather_mask,
    is_binary_mask,
    mask_pool,
    mask_resize_bilinear,
    partial_conv2d,
    update_mask_only,
)
from .network import ConvLayer, PoolLayer, StyleNetwork, UpsampleLayer

# Inputs above this side length raise ResourceLimitError.
MAX_IMAGE_SIDE = 4096


@dataclass(frozen=True)
class BlendConfig:
    """The three boundary-blending switches and their shared feather width."""

    feather_before: bool = False
    expand_during: bool = False
    content_feather_decoder: bool = False
    feather_kernel_px: int = 5

    def __post_init__(self):
        if self.feather_kernel_px < 1 or self.feather_kernel_px % 2 == 0:
            raise ValueError("feather_kernel_px must be odd and >= 1")

    @property
    def any_enabled(self) -> bool:
        return self.feather_before or self.expand_during or self.content_feather_decoder


@dataclass
class StylizeRequest:
    content: np.ndarray
    style: np.ndarray
    mask: np.ndarray
    blend: BlendConfig = field(default_factory=BlendConfig)


@dataclass
class StyleTransform:
    """Channel-space linear map plus the means it shifts between."""

    matrix: np.ndarray  # (C, C)
    content_mean: np.ndarray  # (C,)
    style_mean: np.ndarray  # (C,)


def _check_image(image: np.ndarray) -> np.ndarray:
    image = np.asarray(image, dtype=np.float32)
    if image.ndim != 3 or image.shape[2] != 3:
        raise ValueError(f"expected an (H, W, 3) image, got shape {image.shape}")
    return image


def normalize_image(image: np.ndarray, channel_means: np.ndarray) -> np.ndarray:
    """(H, W, 3) in [0, 1] -> centered (3, H, W) features."""
    image = _check_image(image)
    feats = image - channel_means.reshape(1, 1, 3)
    return np.ascontiguousarray(feats.transpose(2, 0, 1))


def denormalize_features(feats: np.ndarray, channel_means: np.ndarray) -> np.ndarray:
    """(3, H, W) features -> clamped (H, W, 3) image."""
    image = feats.transpose(1, 2, 0) + channel_means.reshape(1, 1, 3)
    return np.clip(image, 0.0, 1.0).astype(np.float32)


def _activate(features: np.ndarray, activation: str) -> np.ndarray:
    if activation == "relu":
        return np.maximum(features, 0.0, out=features)  # features are freshly owned
    if activation == "linear":
        return features
    raise ValueError(f"unknown activation {activation!r}")


def _maxpool_features(features: np.ndarray, kernel: int, stride: int) -> np.ndarray:
    t = torch.from_numpy(features)[None]
    return F.max_pool2d(t, kernel_size=kernel, stride=stride)[0].numpy()


def encode(
    network: StyleNetwork,
    image: np.ndarray,
    mask: np.ndarray,
    blend: BlendConfig = BlendConfig(),
) -> list[MaskedFeature]:
    """Run the masked encoder; returns one MaskedFeature per tagged stage.

    The mask is propagated through every conv (window-reachability update) and
    pool (max). With expand_during, each conv computes with a 3x3-dilated copy
    of the running mask but the stored mask stays unexpanded, so dilation never
    accumulates across layers.
    """
    image = _check_image(image)
    mask = as_mask(mask)
    if mask.shape != image.shape[:2]:
        raise ValueError(f"mask dims {mask.shape} do not match image dims {image.shape[:2]}")
    features = normalize_image(image, network.channel_means)
    cur = MaskedFeature(features, mask)
    stages: list[MaskedFeature] = []
    first_conv = True
    for layer in network.encoder:
        if isinstance(layer, ConvLayer):
            spec = network.conv_spec(layer)
            if blend.expand_during:
                # Convolve with a dilated copy; store the unexpanded update.
                stored_mask = update_mask_only(cur.mask, spec)
                conv_mask = expand_mask(cur.mask)
                out = partial_conv2d(MaskedFeature(cur.features, conv_mask), spec)
            else:
                # The conv's own output mask IS update_mask_only(cur.mask).
                # After the first conv, features are zero outside the binary
                # running mask, so the premultiply would be a no-op.
                out = partial_conv2d(
                    MaskedFeature(cur.features, cur.mask), spec, not first_conv
                )
                stored_mask = out.mask
            cur = MaskedFeature(_activate(out.features, layer.activation), stored_mask)
            first_conv = False
            if layer.stage:
                stages.append(cur)
        elif isinstance(layer, PoolLayer):
            cur = MaskedFeature(
                _maxpool_features(cur.features, layer.kernel, layer.stride),
                mask_pool(cur.mask, layer.kernel, layer.stride),
            )
        else:
            raise ValueError(f"unexpected encoder layer {layer!r}")
    return stages


def compute_style_transform(
    network: StyleNetwork, content_feat: MaskedFeature, style_feat: MaskedFeature
) -> StyleTransform:
    """Produce the channel map from masked content statistics and style statistics.

    Statistics are computed by gathering valid positions only (stage mask
    binarized at 0.5), never by zero-filling, so means and covariances are
    unbiased over the region.
    """
    module = network.transform
    if content_feat.channels != module.channels or style_feat.channels != module.channels:
        raise ValueError(
            f"transform expects {module.channels} channels, got "
            f"{content_feat.channels}/{style_feat.channels}"
        )

    def masked_stats(feat: MaskedFeature, what: str):
        sel = feat.mask > 0.5
        n = int(sel.sum())
        if n == 0:
            raise EmptyRegionError(f"{what} mask selects no positions at the transform stage")
        x = feat.features[:, sel].astype(np.float64)
        mean = x.mean(axis=1)
        centered = module.compress.astype(np.float64) @ (x - mean[:, None])
        cov = centered @ centered.T / n
        return mean, cov

    c_mean, c_cov = masked_stats(content_feat, "content")
    s_mean, s_cov = masked_stats(style_feat, "style")
    d = module.embed

    def head(weight, bias, cov):
        return (weight.astype(np.float64) @ cov.ravel() + bias).reshape(d, d)

    content_mat = head(module.content_head_weight, module.content_head_bias, c_cov)
    style_mat = head(module.style_head_weight, module.style_head_bias, s_cov)
    matrix = module.unzip.astype(np.float64) @ (style_mat @ content_mat) @ module.compress
    return StyleTransform(
        matrix=matrix.astype(np.float32),
        content_mean=c_mean.astype(np.float32),
        style_mean=s_mean.astype(np.float32),
    )


def apply_transform(content_feat: MaskedFeature, t: StyleTransform) -> MaskedFeature:
    """features <- T (features - content_mean) + style_mean where mask > 0."""
    if t.matrix.shape != (content_feat.channels, content_feat.channels):
        raise ValueError(
            f"transform matrix {t.matrix.shape} does not match {content_feat.channels} channels"
        )
    c, h, w = content_feat.features.shape
    flat = content_feat.features.reshape(c, -1)
    out = t.matrix @ (flat - t.content_mean[:, None]) + t.style_mean[:, None]
    out = out.reshape(c, h, w) * (content_feat.mask > 0.0)[None]
    return MaskedFeature(out.astype(np.float32), content_feat.mask.copy())


def _upsample_to(features: np.ndarray, target: tuple[int, int]) -> np.ndarray:
    t = torch.from_numpy(features)[None]
    out = F.interpolate(t, size=target, mode="nearest")
    return out[0].numpy()


def decode(
    network: StyleNetwork,
    feat: MaskedFeature,
    original_mask: np.ndarray,
    content_stages: list[np.ndarray] | None = None,
    blend: BlendConfig = BlendConfig(),
) -> np.ndarray:
    """Run the decoder back to pixel space.

    Per stage the working mask is a bilinear resize of the pixel-space mask.
    With content feathering, the unstylized content features are copied around
    the stylized region (blended with the feathered mask) before every conv;
    the feature map is then fully populated, so those convs see an all-ones
    mask and border pixels genuinely inherit background context.
    """
    original_mask = as_mask(original_mask)
    if blend.content_feather_decoder:
        if content_stages is None:
            raise ValueError("content_feather_decoder requires content_stages")
        blend_mask = (
            feather_mask(original_mask, blend.feather_kernel_px)
            if is_binary_mask(original_mask)
            else original_mask
        )
    rungs = network.downsample_rungs(*original_mask.shape)
    features = feat.features
    stage_idx = 0
    for layer in network.decoder:
        if isinstance(layer, UpsampleLayer):
            features = _upsample_to(features, rungs.pop())
        elif isinstance(layer, ConvLayer):
            h, w = features.shape[1:]
            if blend.content_feather_decoder:
                bm = mask_resize_bilinear(blend_mask, h, w)[None]
                features = bm * features + (1.0 - bm) * content_stages[stage_idx]
                stage_idx += 1
                work_mask = np.ones((h, w), dtype=np.float32)
            else:
                work_mask = mask_resize_bilinear(original_mask, h, w)
            out = partial_conv2d(MaskedFeature(features, work_mask), network.conv_spec(layer))
            features = _activate(out.features, layer.activation)
        else:
            raise ValueError(f"unexpected decoder layer {layer!r}")
    return denormalize_features(features, network.channel_means)


def reconstruction_pass(network: StyleNetwork, image: np.ndarray):
    """Autoencode without stylizing: (decoder stage features, reconstruction).

    Stage features are captured right before each decoder conv; they feed the
    content-feathering blend in decode().
    """
    image = _check_image(image)
    ones = np.ones(image.shape[:2], dtype=np.float32)
    stages = encode(network, image, ones)
    features = stages[-1].features
    rungs = network.downsample_rungs(*image.shape[:2])
    captured: list[np.ndarray] = []
    for layer in network.decoder:
        if isinstance(layer, UpsampleLayer):
            features = _upsample_to(features, rungs.pop())
        elif isinstance(layer, ConvLayer):
            captured.append(features)
            h, w = features.shape[1:]
            work = np.ones((h, w), dtype=np.float32)
            out = partial_conv2d(MaskedFeature(features, work), network.conv_spec(layer))
            features = _activate(out.features, layer.activation)
    return captured, denormalize_features(features, network.channel_means)


def _check_limits(image: np.ndarray) -> None:
    h, w = image.shape[:2]
    if max(h, w) > MAX_IMAGE_SIDE:
        raise ResourceLimitError(
            f"input side {max(h, w)} exceeds the supported maximum of {MAX_IMAGE_SIDE} px"
        )


def _ones_like_mask(image: np.ndarray) -> np.ndarray:
    return np.ones(image.shape[:2], dtype=np.float32)


def stylize_masked(
    network: StyleNetwork,
    request: StylizeRequest,
    style_stages: list[MaskedFeature] | None = None,
) -> np.ndarray:
    """Full mask-aware pipeline; pixels outside the mask stay bit-exact.

    style_stages optionally carries a precomputed encode() of the style image
    (it is mask- and blend-independent), letting batch harnesses reuse it.
    """
    content = _check_image(request.content)
    style = _check_image(request.style)
    mask = as_mask(request.mask)
    if mask.shape != content.shape[:2]:
        raise ValueError(f"mask dims {mask.shape} do not match content dims {content.shape[:2]}")
    _check_limits(content)
    _check_limits(style)
    if float(mask.max(initial=0.0)) == 0.0:
        return content.copy()
    blend = request.blend
    work_mask = feather_mask(mask, blend.feather_kernel_px) if blend.feather_before else mask

    content_stages = None
    if blend.content_feather_decoder:
        content_stages, _ = reconstruction_pass(network, content)

    enc_stages = encode(network, content, work_mask, blend)
    if style_stages is None:
        style_stages = encode(network, style, _ones_like_mask(style))
    transform = compute_style_transform(network, enc_stages[-1], style_stages[-1])
    styled = apply_transform(enc_stages[-1], transform)
    decoded = decode(network, styled, work_mask, content_stages, blend)
    return alpha_composite(decoded, content, work_mask)


def style_then_mask(
    network: StyleNetwork, content: np.ndarray, style: np.ndarray, mask: np.ndarray
) -> np.ndarray:
    """Baseline: stylize the whole image, then composite the region."""
    content = _check_image(content)
    full = stylize_masked(network, StylizeRequest(content, style, _ones_like_mask(content)))
    return alpha_composite(full, content, mask)


def mask_then_style(
    network: StyleNetwork, content: np.ndarray, style: np.ndarray, mask: np.ndarray
) -> np.ndarray:
    """Baseline: black out the background (in pixel space), stylize, composite."""
    content = _check_image(content)
    mask = as_mask(mask)
    blanked = (content * mask[..., None]).astype(np.float32)
    full = stylize_masked(network, StylizeRequest(blanked, style, _ones_like_mask(content)))
    return alpha_composite(full, content, mask)
