import numpy as np
import pytest

from maskedstyle.network import build_default_network, build_reference_network


@pytest.fixture(scope="session")
def reference_network():
    return build_reference_network()


@pytest.fixture(scope="session")
def small_network():
    """Random-weight network with the default layout but fewer channels, for speed."""
    from maskedstyle.network import ConvLayer, PoolLayer, StyleNetwork, TransformModule, UpsampleLayer

    rng = np.random.default_rng(42)
    encoder = (
        ConvLayer("enc1", 3, 8, 3, padding=1, stage=True),
        ConvLayer("enc2", 8, 8, 3, padding=1),
        PoolLayer(2, 2),
        ConvLayer("enc3", 8, 12, 3, padding=1, stage=True),
        PoolLayer(2, 2),
        ConvLayer("enc4", 12, 16, 3, padding=1, stage=True),
    )
    decoder = (
        ConvLayer("dec1", 16, 12, 3, padding=1),
        UpsampleLayer(2),
        ConvLayer("dec2", 12, 8, 3, padding=1),
        UpsampleLayer(2),
        ConvLayer("dec3", 8, 3, 3, padding=1, activation="linear"),
    )
    params = {}
    for layer in encoder + decoder:
        if hasattr(layer, "name"):
            fan_in = layer.in_channels * layer.kernel * layer.kernel
            params[f"{layer.name}.weight"] = (
                rng.standard_normal((layer.out_channels, layer.in_channels, layer.kernel, layer.kernel))
                * np.sqrt(2.0 / fan_in)
            ).astype(np.float32)
            params[f"{layer.name}.bias"] = (rng.standard_normal(layer.out_channels) * 0.01).astype(
                np.float32
            )
    channels, embed = 16, 4
    d2 = embed * embed
    transform = TransformModule(
        compress=(rng.standard_normal((embed, channels)) / 4.0).astype(np.float32),
        unzip=(rng.standard_normal((channels, embed)) / 2.0).astype(np.float32),
        content_head_weight=(rng.standard_normal((d2, d2)) * 0.02).astype(np.float32),
        content_head_bias=np.eye(embed, dtype=np.float32).ravel(),
        style_head_weight=(rng.standard_normal((d2, d2)) * 0.02).astype(np.float32),
        style_head_bias=np.eye(embed, dtype=np.float32).ravel(),
    )
    return StyleNetwork(
        encoder=encoder,
        decoder=decoder,
        transform=transform,
        params=params,
        channel_means=np.asarray((0.485, 0.456, 0.406), dtype=np.float32),
        checkpoint_id="test-small",
    )


@pytest.fixture(scope="session")
def default_network():
    return build_default_network(seed=0)


def random_image(rng, h, w):
    return rng.random((h, w, 3), dtype=np.float32)


def random_blob_mask(rng, h, w, min_area_fraction=0.04):
    """Random compact blob mask with at least the given area fraction."""
    while True:
        cy, cx = rng.integers(h // 4, 3 * h // 4), rng.integers(w // 4, 3 * w // 4)
        ry = rng.integers(max(2, h // 8), max(3, h // 3))
        rx = rng.integers(max(2, w // 8), max(3, w // 3))
        yy, xx = np.mgrid[0:h, 0:w]
        mask = (((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0).astype(np.float32)
        if mask.sum() >= min_area_fraction * h * w and mask.sum() < 0.9 * h * w:
            return mask
