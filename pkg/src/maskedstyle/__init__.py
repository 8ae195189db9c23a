"""Masked style transfer with partial convolutions, blending, and evaluation metrics."""

from .errors import (
    CheckpointFormatError,
    ConfigError,
    DatasetError,
    EmptyRegionError,
    ResourceLimitError,
)
from .masked_ops import (
    ConvSpec,
    MaskedFeature,
    alpha_composite,
    expand_mask,
    feather_mask,
    mask_pad,
    mask_pool,
    mask_resize_bilinear,
    partial_conv2d,
    update_mask_only,
)
from .metrics import (
    Histogram,
    MetricReport,
    boundary_band,
    boundary_color_contrast,
    boundary_gradient_magnitude,
    emd_1d,
    gram_matrix,
    gray_emd,
    masked_histogram,
    perceptual_style_loss,
    sliced_emd,
)
from .multimask import RegionSpec, merge_masked_features, stylize_multi
from .network import (
    StyleNetwork,
    TransformModule,
    build_default_network,
    build_reference_network,
    load_weights,
    save_weights,
)
from .stylenet import (
    BlendConfig,
    StyleTransform,
    StylizeRequest,
    apply_transform,
    compute_style_transform,
    decode,
    encode,
    mask_then_style,
    style_then_mask,
    stylize_masked,
)

__version__ = "0.1.0"
