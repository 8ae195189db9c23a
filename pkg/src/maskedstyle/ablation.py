"""The eight-way blending ablation: every on/off combination of the three techniques."""

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyRegionError
from .metrics import boundary_color_contrast, boundary_gradient_magnitude
from .network import StyleNetwork
from .stylenet import (
    BlendConfig,
    StylizeRequest,
    apply_transform,
    compute_style_transform,
    decode,
    encode,
    reconstruction_pass,
    stylize_masked,
)
from .masked_ops import alpha_composite, as_mask, feather_mask

# Report column order: the three single techniques, the three pairs,
# all-on, all-off (column 7 is all-on, column 8 all-off).
BLEND_COMBINATIONS: tuple[BlendConfig, ...] = (
    BlendConfig(feather_before=True),
    BlendConfig(expand_during=True),
    BlendConfig(content_feather_decoder=True),
    BlendConfig(feather_before=True, expand_during=True),
    BlendConfig(feather_before=True, content_feather_decoder=True),
    BlendConfig(expand_during=True, content_feather_decoder=True),
    BlendConfig(feather_before=True, expand_during=True, content_feather_decoder=True),
    BlendConfig(),
)


@dataclass
class AblationGrid:
    configs: tuple[BlendConfig, ...]
    grad_magnitude: list[float]
    color_contrast: list[float]
    n_items: int
    n_failed: int
    seed: int
    metadata: dict = field(default_factory=dict)


def _stylize_all_configs(network: StyleNetwork, content, mask, style) -> list[np.ndarray]:
    """One output per blend combination, reusing work that is legal to share.

    The style encoding never depends on blending; the content encoding depends
    only on (feather_before, expand_during); the content reconstruction pass
    depends on nothing. Only the decode differs within an encode group, so
    outputs stay bit-identical to direct stylize_masked calls.
    """
    ones = np.ones(style.shape[:2], dtype=np.float32)
    style_stages = encode(network, style, ones)
    content_stages, _ = reconstruction_pass(network, content)

    outputs: list[np.ndarray | None] = [None] * len(BLEND_COMBINATIONS)
    groups: dict[tuple[bool, bool], list[int]] = {}
    for idx, cfg in enumerate(BLEND_COMBINATIONS):
        groups.setdefault((cfg.feather_before, cfg.expand_during), []).append(idx)
    for (feather, _expand), indices in groups.items():
        first = BLEND_COMBINATIONS[indices[0]]
        work_mask = feather_mask(mask, first.feather_kernel_px) if feather else mask
        enc_stages = encode(network, content, work_mask, first)
        transform = compute_style_transform(network, enc_stages[-1], style_stages[-1])
        styled = apply_transform(enc_stages[-1], transform)
        for idx in indices:
            cfg = BLEND_COMBINATIONS[idx]
            stages = content_stages if cfg.content_feather_decoder else None
            decoded = decode(network, styled, work_mask, stages, cfg)
            outputs[idx] = alpha_composite(decoded, content, work_mask)
    return outputs  # type: ignore[return-value]


def run_ablation(
    network: StyleNetwork,
    dataset: list[tuple[np.ndarray, np.ndarray, np.ndarray]],
    seed: int = 0,
) -> AblationGrid:
    """Average the two boundary metrics per blend combination over the dataset.

    Items that fail for any configuration are excluded from all of them, so
    every column averages the same population.
    """
    if not dataset:
        raise ValueError("ablation requires a non-empty dataset")
    n_configs = len(BLEND_COMBINATIONS)
    sums_grad = np.zeros(n_configs)
    sums_contrast = np.zeros(n_configs)
    n_used = 0
    n_failed = 0
    for content, mask, style in dataset:
        mask = as_mask(mask)
        try:
            outputs = _stylize_all_configs(network, content, mask, style)
            grads = [boundary_gradient_magnitude(out, mask) for out in outputs]
            contrasts = [boundary_color_contrast(out, mask) for out in outputs]
        except EmptyRegionError:
            n_failed += 1
            continue
        sums_grad += grads
        sums_contrast += contrasts
        n_used += 1
    if n_used == 0:
        raise EmptyRegionError("every ablation item failed")
    return AblationGrid(
        configs=BLEND_COMBINATIONS,
        grad_magnitude=list(sums_grad / n_used),
        color_contrast=list(sums_contrast / n_used),
        n_items=n_used,
        n_failed=n_failed,
        seed=seed,
    )


def ablation_to_csv(grid: AblationGrid) -> str:
    """Grid layout: three boolean technique rows, two metric rows, 8 columns."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["feature"] + [f"config_{i + 1}" for i in range(len(grid.configs))])
    writer.writerow(["feather_before"] + [int(c.feather_before) for c in grid.configs])
    writer.writerow(["expand_during"] + [int(c.expand_during) for c in grid.configs])
    writer.writerow(["content_feather_decoder"] + [int(c.content_feather_decoder) for c in grid.configs])
    writer.writerow(["grad_magnitude"] + [f"{v:.6f}" for v in grid.grad_magnitude])
    writer.writerow(["color_contrast"] + [f"{v:.6f}" for v in grid.color_contrast])
    return buf.getvalue()


def stylize_reference(network: StyleNetwork, content, mask, style) -> np.ndarray:
    """The all-off column must match a plain stylize_masked call byte for byte."""
    return stylize_masked(network, StylizeRequest(content, style, mask, BlendConfig()))
