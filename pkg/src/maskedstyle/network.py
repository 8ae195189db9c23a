"""Style network definition, weights container I/O, and stock architectures.

A network is fully described by its checkpoint: a .npz container holding one
JSON manifest (layer list + shapes) plus one float32 array per parameter.
Weights are loaded verbatim and never mutated.
"""

import io
import json
import zipfile
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import CheckpointFormatError
from .masked_ops import ConvSpec

SCHEMA_VERSION = "1"

# torchvision-style RGB channel means, inverted at the pipeline boundary
DEFAULT_CHANNEL_MEANS = (0.485, 0.456, 0.406)


@dataclass(frozen=True)
class ConvLayer:
    name: str
    in_channels: int
    out_channels: int
    kernel: int
    stride: int = 1
    padding: int = 0
    activation: str = "relu"  # "relu" | "linear"
    stage: bool = False  # tapped as an encoder stage / style-loss feature

    def out_dims(self, h: int, w: int) -> tuple[int, int]:
        oh = (h + 2 * self.padding - self.kernel) // self.stride + 1
        ow = (w + 2 * self.padding - self.kernel) // self.stride + 1
        return oh, ow


@dataclass(frozen=True)
class PoolLayer:
    kernel: int = 2
    stride: int = 2

    def out_dims(self, h: int, w: int) -> tuple[int, int]:
        return (h - self.kernel) // self.stride + 1, (w - self.kernel) // self.stride + 1


@dataclass(frozen=True)
class UpsampleLayer:
    factor: int = 2


@dataclass
class TransformModule:
    """Learned linear-transform producer: statistics in, channel map out.

    compress (d, C) and unzip (C, d) bracket two heads that turn the d x d
    covariance of compressed, centered features into d x d matrices. The full
    content-to-style map is unzip @ (style_head_out @ content_head_out) @ compress.
    """

    compress: np.ndarray
    unzip: np.ndarray
    content_head_weight: np.ndarray
    content_head_bias: np.ndarray
    style_head_weight: np.ndarray
    style_head_bias: np.ndarray

    @property
    def channels(self) -> int:
        return self.compress.shape[1]

    @property
    def embed(self) -> int:
        return self.compress.shape[0]


@dataclass
class StyleNetwork:
    encoder: tuple
    decoder: tuple
    transform: TransformModule
    params: dict[str, np.ndarray]
    channel_means: np.ndarray
    checkpoint_id: str = "unnamed"
    renormalize: bool = True
    metadata: dict = field(default_factory=dict)

    def conv_spec(self, layer: ConvLayer) -> ConvSpec:
        return ConvSpec(
            weights=self.params[f"{layer.name}.weight"],
            bias=self.params[f"{layer.name}.bias"],
            stride=layer.stride,
            padding=layer.padding,
            renormalize=self.renormalize,
        )

    def with_renormalize(self, flag: bool) -> "StyleNetwork":
        return replace(self, renormalize=flag)

    @property
    def stage_names(self) -> tuple[str, ...]:
        return tuple(l.name for l in self.encoder if isinstance(l, ConvLayer) and l.stage)

    def downsample_rungs(self, h: int, w: int) -> list[tuple[int, int]]:
        """Spatial dims consumed by each downsampling encoder layer, in order."""
        rungs = []
        cur = (h, w)
        for layer in self.encoder:
            if isinstance(layer, (ConvLayer, PoolLayer)):
                nxt = layer.out_dims(*cur)
                if nxt != cur:
                    rungs.append(cur)
                cur = nxt
        return rungs


# --- manifest (de)serialization -------------------------------------------


def _layer_to_json(layer) -> dict:
    if isinstance(layer, ConvLayer):
        return {
            "kind": "conv",
            "name": layer.name,
            "in_channels": layer.in_channels,
            "out_channels": layer.out_channels,
            "kernel": layer.kernel,
            "stride": layer.stride,
            "padding": layer.padding,
            "activation": layer.activation,
            "stage": layer.stage,
        }
    if isinstance(layer, PoolLayer):
        return {"kind": "pool", "kernel": layer.kernel, "stride": layer.stride}
    if isinstance(layer, UpsampleLayer):
        return {"kind": "upsample", "factor": layer.factor}
    raise TypeError(f"unknown layer type {type(layer)!r}")


def _layer_from_json(obj: dict, where: str):
    kind = obj.get("kind")
    try:
        if kind == "conv":
            return ConvLayer(
                name=obj["name"],
                in_channels=int(obj["in_channels"]),
                out_channels=int(obj["out_channels"]),
                kernel=int(obj["kernel"]),
                stride=int(obj.get("stride", 1)),
                padding=int(obj.get("padding", 0)),
                activation=obj.get("activation", "relu"),
                stage=bool(obj.get("stage", False)),
            )
        if kind == "pool":
            return PoolLayer(kernel=int(obj["kernel"]), stride=int(obj["stride"]))
        if kind == "upsample":
            return UpsampleLayer(factor=int(obj["factor"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointFormatError(f"bad layer entry in {where}: {obj!r}") from exc
    raise CheckpointFormatError(f"unknown layer kind {kind!r} in {where}")


_TRANSFORM_PARAMS = (
    "transform.compress",
    "transform.unzip",
    "transform.content_head.weight",
    "transform.content_head.bias",
    "transform.style_head.weight",
    "transform.style_head.bias",
)


def _transform_shapes(channels: int, embed: int) -> dict[str, tuple[int, ...]]:
    d2 = embed * embed
    return {
        "transform.compress": (embed, channels),
        "transform.unzip": (channels, embed),
        "transform.content_head.weight": (d2, d2),
        "transform.content_head.bias": (d2,),
        "transform.style_head.weight": (d2, d2),
        "transform.style_head.bias": (d2,),
    }


def validate_architecture(encoder, decoder, transform_channels: int) -> None:
    """Cross-check layer chaining; raise CheckpointFormatError naming the culprit."""
    ch = 3
    n_down = 0
    last_conv = None
    for layer in encoder:
        if isinstance(layer, ConvLayer):
            if layer.in_channels != ch:
                raise CheckpointFormatError(
                    f"encoder layer {layer.name!r} expects {layer.in_channels} input "
                    f"channels but receives {ch}"
                )
            if layer.stride == 1 and layer.padding != layer.kernel // 2:
                raise CheckpointFormatError(
                    f"stride-1 layer {layer.name!r} must preserve dims "
                    f"(padding == kernel // 2)"
                )
            ch = layer.out_channels
            if layer.stride > 1:
                n_down += 1
            last_conv = layer
        elif isinstance(layer, PoolLayer):
            n_down += 1
        else:
            raise CheckpointFormatError(f"layer kind {type(layer).__name__} not allowed in encoder")
    if last_conv is None or not last_conv.stage:
        raise CheckpointFormatError("last encoder conv must be tagged as a stage")
    if ch != transform_channels:
        raise CheckpointFormatError(
            f"transform channels {transform_channels} do not match encoder output {ch}"
        )
    n_up = 0
    for layer in decoder:
        if isinstance(layer, ConvLayer):
            if layer.in_channels != ch:
                raise CheckpointFormatError(
                    f"decoder layer {layer.name!r} expects {layer.in_channels} input "
                    f"channels but receives {ch}"
                )
            if layer.stride != 1 or layer.padding != layer.kernel // 2:
                raise CheckpointFormatError(
                    f"decoder layer {layer.name!r} must be stride 1 and dims-preserving"
                )
            ch = layer.out_channels
        elif isinstance(layer, UpsampleLayer):
            n_up += 1
        else:
            raise CheckpointFormatError(f"layer kind {type(layer).__name__} not allowed in decoder")
    if ch != 3:
        raise CheckpointFormatError(f"decoder must end with 3 channels, got {ch}")
    if n_up != n_down:
        raise CheckpointFormatError(
            f"decoder has {n_up} upsampling layers but encoder downsamples {n_down} times"
        )


def save_weights(network: StyleNetwork, path) -> None:
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "checkpoint_id": network.checkpoint_id,
        "channel_means": [float(v) for v in network.channel_means],
        "transform": {"channels": network.transform.channels, "embed": network.transform.embed},
        "encoder": [_layer_to_json(l) for l in network.encoder],
        "decoder": [_layer_to_json(l) for l in network.decoder],
        "metadata": network.metadata,
    }
    arrays = {"manifest": np.frombuffer(json.dumps(manifest).encode("utf-8"), dtype=np.uint8)}
    for name, arr in network.params.items():
        arrays[name] = np.asarray(arr, dtype=np.float32)
    t = network.transform
    arrays["transform.compress"] = t.compress
    arrays["transform.unzip"] = t.unzip
    arrays["transform.content_head.weight"] = t.content_head_weight
    arrays["transform.content_head.bias"] = t.content_head_bias
    arrays["transform.style_head.weight"] = t.style_head_weight
    arrays["transform.style_head.bias"] = t.style_head_bias
    buf = io.BytesIO()
    np.savez(buf, **arrays)
    Path(path).write_bytes(buf.getvalue())


def load_weights(path) -> StyleNetwork:
    """Load a weights container; all-ones-mask execution reproduces the dense net."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    try:
        with np.load(path) as data:
            arrays = {k: data[k] for k in data.files}
    except (zipfile.BadZipFile, ValueError, OSError, EOFError) as exc:
        raise CheckpointFormatError(f"unreadable weights container {path}: {exc}") from exc
    if "manifest" not in arrays:
        raise CheckpointFormatError(f"{path} has no manifest entry")
    try:
        manifest = json.loads(bytes(arrays.pop("manifest")).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointFormatError(f"{path} manifest is not valid JSON") from exc
    if manifest.get("schema_version") != SCHEMA_VERSION:
        raise CheckpointFormatError(
            f"unsupported schema_version {manifest.get('schema_version')!r}"
        )

    encoder = tuple(_layer_from_json(o, "encoder") for o in manifest.get("encoder", ()))
    decoder = tuple(_layer_from_json(o, "decoder") for o in manifest.get("decoder", ()))
    tinfo = manifest.get("transform", {})
    channels, embed = int(tinfo.get("channels", 0)), int(tinfo.get("embed", 0))
    validate_architecture(encoder, decoder, channels)

    params: dict[str, np.ndarray] = {}
    for layer in list(encoder) + list(decoder):
        if not isinstance(layer, ConvLayer):
            continue
        wname, bname = f"{layer.name}.weight", f"{layer.name}.bias"
        expect_w = (layer.out_channels, layer.in_channels, layer.kernel, layer.kernel)
        for pname, expect in ((wname, expect_w), (bname, (layer.out_channels,))):
            if pname not in arrays:
                raise CheckpointFormatError(f"missing parameter {pname!r}")
            arr = np.asarray(arrays[pname], dtype=np.float32)
            if arr.shape != expect:
                raise CheckpointFormatError(
                    f"parameter {pname!r} has shape {arr.shape}, manifest expects {expect}"
                )
            if not np.isfinite(arr).all():
                raise CheckpointFormatError(f"parameter {pname!r} contains non-finite values")
            params[pname] = arr

    tshapes = _transform_shapes(channels, embed)
    tarrs = {}
    for pname in _TRANSFORM_PARAMS:
        if pname not in arrays:
            raise CheckpointFormatError(f"missing parameter {pname!r}")
        arr = np.asarray(arrays[pname], dtype=np.float32)
        if arr.shape != tshapes[pname]:
            raise CheckpointFormatError(
                f"parameter {pname!r} has shape {arr.shape}, manifest expects {tshapes[pname]}"
            )
        tarrs[pname] = arr
    transform = TransformModule(
        compress=tarrs["transform.compress"],
        unzip=tarrs["transform.unzip"],
        content_head_weight=tarrs["transform.content_head.weight"],
        content_head_bias=tarrs["transform.content_head.bias"],
        style_head_weight=tarrs["transform.style_head.weight"],
        style_head_bias=tarrs["transform.style_head.bias"],
    )

    means = np.asarray(manifest.get("channel_means", DEFAULT_CHANNEL_MEANS), dtype=np.float32)
    if means.shape != (3,):
        raise CheckpointFormatError("channel_means must have 3 entries")
    return StyleNetwork(
        encoder=encoder,
        decoder=decoder,
        transform=transform,
        params=params,
        channel_means=means,
        checkpoint_id=str(manifest.get("checkpoint_id", "unnamed")),
        metadata=dict(manifest.get("metadata", {})),
    )


# --- stock architectures ----------------------------------------------------


def _he_conv(rng, out_c, in_c, k):
    fan_in = in_c * k * k
    return (rng.standard_normal((out_c, in_c, k, k)) * np.sqrt(2.0 / fan_in)).astype(np.float32)


def build_default_network(seed: int = 0) -> StyleNetwork:
    """VGG-flavoured 4x-downsampling autoencoder with a 32-d transform module.

    Randomly initialized; matches the layer layout documented for converted
    pretrained checkpoints, so it stands in for them on machines without the
    real weights.
    """
    rng = np.random.default_rng(seed)
    encoder = (
        ConvLayer("enc1", 3, 64, 3, padding=1, stage=True),
        ConvLayer("enc2", 64, 64, 3, padding=1),
        PoolLayer(2, 2),
        ConvLayer("enc3", 64, 128, 3, padding=1, stage=True),
        ConvLayer("enc4", 128, 128, 3, padding=1),
        PoolLayer(2, 2),
        ConvLayer("enc5", 128, 256, 3, padding=1, stage=True),
    )
    decoder = (
        ConvLayer("dec1", 256, 128, 3, padding=1),
        UpsampleLayer(2),
        ConvLayer("dec2", 128, 128, 3, padding=1),
        ConvLayer("dec3", 128, 64, 3, padding=1),
        UpsampleLayer(2),
        ConvLayer("dec4", 64, 64, 3, padding=1),
        ConvLayer("dec5", 64, 3, 3, padding=1, activation="linear"),
    )
    params = {}
    for layer in encoder + decoder:
        if isinstance(layer, ConvLayer):
            params[f"{layer.name}.weight"] = _he_conv(
                rng, layer.out_channels, layer.in_channels, layer.kernel
            )
            params[f"{layer.name}.bias"] = np.zeros(layer.out_channels, dtype=np.float32)

    channels, embed = 256, 32
    d2 = embed * embed
    eye = np.eye(embed, dtype=np.float32).ravel()
    transform = TransformModule(
        compress=(rng.standard_normal((embed, channels)) / np.sqrt(channels)).astype(np.float32),
        unzip=(rng.standard_normal((channels, embed)) / np.sqrt(embed)).astype(np.float32),
        content_head_weight=(rng.standard_normal((d2, d2)) * (0.05 / embed)).astype(np.float32),
        content_head_bias=eye.copy(),
        style_head_weight=(rng.standard_normal((d2, d2)) * (0.05 / embed)).astype(np.float32),
        style_head_bias=eye.copy(),
    )
    return StyleNetwork(
        encoder=encoder,
        decoder=decoder,
        transform=transform,
        params=params,
        channel_means=np.asarray(DEFAULT_CHANNEL_MEANS, dtype=np.float32),
        checkpoint_id=f"random-default-seed{seed}",
    )


def build_reference_network() -> StyleNetwork:
    """Hand-constructed network whose transform genuinely matches statistics.

    Signed channels are split into positive/negative pairs so ReLU loses
    nothing, the encoder halves resolution with a 2x2 averaging conv, and the
    transform is the identity in feature space: output features are the
    content's shifted to the style's per-channel mean. Decoding inverts the
    split, so the whole pipeline is an analytically understood mean-matching
    stylizer. Used for metric fixtures and anywhere a deterministic,
    well-behaved network is needed without external weight files.
    """
    encoder = (
        ConvLayer("enc_split", 3, 6, 1, stage=True),
        ConvLayer("enc_pool", 6, 6, 2, stride=2, stage=True),
        ConvLayer("enc_mix", 6, 6, 3, padding=1, stage=True),
    )
    decoder = (
        ConvLayer("dec_mix", 6, 6, 3, padding=1, activation="linear"),
        UpsampleLayer(2),
        ConvLayer("dec_merge", 6, 3, 1, activation="linear"),
    )
    eye3 = np.eye(3, dtype=np.float32)
    split_w = np.concatenate([eye3, -eye3], axis=0).reshape(6, 3, 1, 1)

    pool_w = np.zeros((6, 6, 2, 2), dtype=np.float32)
    for c in range(6):
        pool_w[c, c] = 0.25

    mix_w = np.zeros((6, 6, 3, 3), dtype=np.float32)
    for c in range(6):
        mix_w[c, c, 1, 1] = 1.0

    merge_w = np.concatenate([eye3, -eye3], axis=1).reshape(3, 6, 1, 1)

    params = {
        "enc_split.weight": split_w,
        "enc_split.bias": np.zeros(6, dtype=np.float32),
        "enc_pool.weight": pool_w,
        "enc_pool.bias": np.zeros(6, dtype=np.float32),
        "enc_mix.weight": mix_w,
        "enc_mix.bias": np.zeros(6, dtype=np.float32),
        "dec_mix.weight": mix_w.copy(),
        "dec_mix.bias": np.zeros(6, dtype=np.float32),
        "dec_merge.weight": merge_w,
        "dec_merge.bias": np.zeros(3, dtype=np.float32),
    }
    d = 6
    eye_d = np.eye(d, dtype=np.float32)
    transform = TransformModule(
        compress=eye_d.copy(),
        unzip=eye_d.copy(),
        content_head_weight=np.zeros((d * d, d * d), dtype=np.float32),
        content_head_bias=eye_d.ravel().copy(),
        style_head_weight=np.zeros((d * d, d * d), dtype=np.float32),
        style_head_bias=eye_d.ravel().copy(),
    )
    return StyleNetwork(
        encoder=encoder,
        decoder=decoder,
        transform=transform,
        params=params,
        channel_means=np.asarray(DEFAULT_CHANNEL_MEANS, dtype=np.float32),
        checkpoint_id="reference-mean-matcher",
    )
