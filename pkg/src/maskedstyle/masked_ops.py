"""Mask-aware primitives: partial convolution, mask propagation, feathering, compositing.

All functions are pure: numpy float32 in, numpy float32 out. Images are
(H, W, C) in [0, 1], masks are (H, W) in [0, 1], feature maps are (C, H, W).
Convolutions run on torch underneath (zero-copy via from_numpy).
"""

from dataclasses import dataclass, replace

import cv2
import numpy as np
import torch
import torch.nn.functional as F


def as_mask(mask: np.ndarray) -> np.ndarray:
    mask = np.asarray(mask, dtype=np.float32)
    if mask.ndim != 2:
        raise ValueError(f"mask must be 2-D, got shape {mask.shape}")
    if mask.size and (mask.min() < 0.0 or mask.max() > 1.0):
        raise ValueError("mask values must lie in [0, 1]")
    return np.ascontiguousarray(mask)


def is_binary_mask(mask: np.ndarray) -> bool:
    return bool(np.all((mask == 0.0) | (mask == 1.0)))


@dataclass(frozen=True)
class ConvSpec:
    """One convolution layer: weights (out, in, kh, kw), bias (out,)."""

    weights: np.ndarray
    bias: np.ndarray
    stride: int = 1
    padding: int = 0
    renormalize: bool = True

    def __post_init__(self):
        w = np.ascontiguousarray(np.asarray(self.weights, dtype=np.float32))
        b = np.ascontiguousarray(np.asarray(self.bias, dtype=np.float32))
        if w.ndim != 4:
            raise ValueError(f"weights must be 4-D (out, in, kh, kw), got {w.shape}")
        if w.shape[2] < 1 or w.shape[3] < 1:
            raise ValueError("kernel dims must be >= 1")
        if not np.isfinite(w).all():
            raise ValueError("weights contain non-finite values")
        if b.shape != (w.shape[0],):
            raise ValueError(f"bias shape {b.shape} does not match out_channels {w.shape[0]}")
        if not np.isfinite(b).all():
            raise ValueError("bias contains non-finite values")
        if self.stride < 1:
            raise ValueError("stride must be >= 1")
        if self.padding < 0:
            raise ValueError("padding must be >= 0")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", b)

    @property
    def out_channels(self) -> int:
        return self.weights.shape[0]

    @property
    def in_channels(self) -> int:
        return self.weights.shape[1]

    @property
    def kernel_shape(self) -> tuple[int, int]:
        return self.weights.shape[2], self.weights.shape[3]

    def with_renormalize(self, flag: bool) -> "ConvSpec":
        return replace(self, renormalize=flag)


@dataclass
class MaskedFeature:
    """A feature map (C, H, W) with a same-resolution validity mask (H, W)."""

    features: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        self.features = np.ascontiguousarray(np.asarray(self.features, dtype=np.float32))
        self.mask = as_mask(self.mask)
        if self.features.ndim != 3:
            raise ValueError(f"features must be 3-D (C, H, W), got {self.features.shape}")
        if self.features.shape[1:] != self.mask.shape:
            raise ValueError(
                f"feature dims {self.features.shape[1:]} do not match mask dims {self.mask.shape}"
            )

    @property
    def channels(self) -> int:
        return self.features.shape[0]


_IN_IMAGE_CACHE: dict[tuple, torch.Tensor] = {}


def _in_image_counts(shape: tuple[int, int], spec: ConvSpec) -> torch.Tensor:
    """Count of in-image kernel positions per window; geometry-only, so cached."""
    kh, kw = spec.kernel_shape
    key = (shape, kh, kw, spec.stride, spec.padding)
    hit = _IN_IMAGE_CACHE.get(key)
    if hit is None:
        ones = torch.ones(1, 1, *shape)
        ones_k = torch.ones(1, 1, kh, kw)
        hit = F.conv2d(ones, ones_k, stride=spec.stride, padding=spec.padding)[0, 0]
        if len(_IN_IMAGE_CACHE) > 64:
            _IN_IMAGE_CACHE.clear()
        _IN_IMAGE_CACHE[key] = hit
    return hit


def _window_sums(mask: np.ndarray, spec: ConvSpec) -> tuple[torch.Tensor, torch.Tensor]:
    """Per output window: sum of mask values and count of in-image positions."""
    kh, kw = spec.kernel_shape
    m = torch.from_numpy(mask)[None, None]
    ones_k = torch.ones(1, 1, kh, kw)
    valid = F.conv2d(m, ones_k, stride=spec.stride, padding=spec.padding)
    return valid[0, 0], _in_image_counts(mask.shape, spec)


def partial_conv2d(
    inp: MaskedFeature, spec: ConvSpec, _features_premasked: bool = False
) -> MaskedFeature:
    """Convolve only over valid positions; update the mask alongside.

    Features are premultiplied by the mask, so invalid values never reach the
    sum. With renormalize on, each window's sum is rescaled by
    kernel_size / (padding_count + valid_mask_sum): structural zero padding
    keeps its dense-conv weight, only genuinely invalid in-image positions
    shrink the denominator. This makes an all-ones mask reproduce the dense
    convolution exactly, borders included. Output mask is 1 wherever at least
    one in-image input under the window was valid; features (and bias) are
    zeroed elsewhere.

    _features_premasked skips the premultiply; pipelines may pass True when
    the features are known to be zero wherever the (binary) mask is zero,
    which leaves the result unchanged.
    """
    if spec.in_channels != inp.channels:
        raise ValueError(
            f"spec expects {spec.in_channels} input channels, features have {inp.channels}"
        )
    kh, kw = spec.kernel_shape
    window = float(kh * kw)

    f = torch.from_numpy(inp.features)[None]
    w = torch.from_numpy(spec.weights)
    if inp.mask.min() >= 1.0 and spec.padding < min(kh, kw):
        # All-valid fast path (every window overlaps the image, so the output
        # mask is all-ones and each renormalization denominator is exactly the
        # window size); bit-identical to the general path because every
        # correction there multiplies by exactly 1.0.
        out = F.conv2d(
            f, w, torch.from_numpy(spec.bias), stride=spec.stride, padding=spec.padding
        )
        return MaskedFeature(out[0].numpy(), np.ones(out.shape[2:], dtype=np.float32))

    if not _features_premasked:
        f = f * torch.from_numpy(inp.mask)[None, None]
    raw = F.conv2d(f, w, stride=spec.stride, padding=spec.padding)

    valid_sum, in_image = _window_sums(inp.mask, spec)
    out_mask = (valid_sum > 0.0).to(torch.float32)
    if spec.renormalize:
        denom = (window - in_image) + valid_sum  # padding counted at full weight
        scale = torch.where(denom > 0.0, window / denom, torch.zeros(()))
        raw.mul_(scale)
    raw.add_(torch.from_numpy(spec.bias).view(1, -1, 1, 1)).mul_(out_mask)
    return MaskedFeature(raw[0].numpy(), out_mask.numpy())


def update_mask_only(mask: np.ndarray, spec: ConvSpec) -> np.ndarray:
    """Mask component of partial_conv2d for the same spec, feature-free."""
    mask = as_mask(mask)
    valid_sum, _ = _window_sums(mask, spec)
    return (valid_sum > 0.0).to(torch.float32).numpy()


def mask_pool(mask: np.ndarray, kernel: int, stride: int) -> np.ndarray:
    """Max-pool the mask so it tracks pooled feature dims."""
    if kernel < 1 or stride < 1:
        raise ValueError("kernel and stride must be >= 1")
    mask = as_mask(mask)
    m = torch.from_numpy(mask)[None, None]
    out = F.max_pool2d(m, kernel_size=kernel, stride=stride)
    return out[0, 0].numpy()


def mask_pad(mask: np.ndarray, padding: int) -> np.ndarray:
    """Zero-valued border of the given width on all sides."""
    if padding < 0:
        raise ValueError("padding must be >= 0")
    mask = as_mask(mask)
    if padding == 0:
        return mask.copy()
    return np.pad(mask, padding, mode="constant", constant_values=0.0)


def mask_resize_bilinear(mask: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resample (half-pixel centers), clamped back to [0, 1]."""
    if out_h < 1 or out_w < 1:
        raise ValueError("output dims must be >= 1")
    mask = as_mask(mask)
    out = cv2.resize(mask, (out_w, out_h), interpolation=cv2.INTER_LINEAR)
    return np.clip(out, 0.0, 1.0).astype(np.float32)


def expand_mask(mask: np.ndarray) -> np.ndarray:
    """3x3 max filter, stride 1, same dims.

    Used transiently inside a convolution to give filters one extra pixel of
    context; callers must not store the result as the running pipeline mask.
    """
    mask = as_mask(mask)
    m = torch.from_numpy(mask)[None, None]
    out = F.max_pool2d(m, kernel_size=3, stride=1, padding=1)
    return out[0, 0].numpy()


def feather_mask(mask: np.ndarray, kernel_px: int = 5) -> np.ndarray:
    """Turn a hard binary edge into a linear ramp of total width kernel_px.

    Normalized box filter (replicate borders), so the band is centered on the
    original boundary: 1 farther than kernel_px/2 inside, 0 farther than
    kernel_px/2 outside. Input must be binary; feathering twice is undefined.
    """
    if kernel_px < 1 or kernel_px % 2 == 0:
        raise ValueError("kernel_px must be odd and >= 1")
    mask = as_mask(mask)
    if not is_binary_mask(mask):
        raise ValueError("feather_mask requires a binary mask")
    if kernel_px == 1:
        return mask.copy()
    out = cv2.blur(mask, (kernel_px, kernel_px), borderType=cv2.BORDER_REPLICATE)
    return np.clip(out, 0.0, 1.0).astype(np.float32)


def alpha_composite(stylized: np.ndarray, original: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """out = mask * stylized + (1 - mask) * original, exact at 0 and 1."""
    stylized = np.asarray(stylized, dtype=np.float32)
    original = np.asarray(original, dtype=np.float32)
    mask = as_mask(mask)
    if stylized.shape != original.shape:
        raise ValueError(f"shape mismatch: stylized {stylized.shape} vs original {original.shape}")
    if stylized.shape[:2] != mask.shape:
        raise ValueError(f"mask dims {mask.shape} do not match image dims {stylized.shape[:2]}")
    m = mask if stylized.ndim == 2 else mask[..., None]
    return (m * stylized + (1.0 - m) * original).astype(np.float32)
