"""Experiment orchestration: config files, per-image reports, aggregate runs.

Reports are reproducible: CSV bodies depend only on (config, seed, dataset,
weights); wall-clock timestamps live in the JSON sidecar, never in the CSV.
"""

import csv
import hashlib
import io
import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .ablation import ablation_to_csv, run_ablation
from .dataset import DatasetIndex, index_dataset, load_image, select_random_mask
from .errors import ConfigError, EmptyRegionError
from .masked_ops import as_mask
from .metrics import (
    DEFAULT_BINS,
    DEFAULT_PROJECTIONS,
    MetricReport,
    boundary_color_contrast,
    boundary_gradient_magnitude,
    gray_emd,
    masked_pixels,
    perceptual_style_loss,
    sliced_emd,
)
from .network import StyleNetwork, load_weights
from .stylenet import BlendConfig, StylizeRequest, mask_then_style, style_then_mask, stylize_masked

SCHEMA_VERSION = "1"
WEIGHTS_ENV_VAR = "MASKEDSTYLE_WEIGHTS"

METHODS = ("partialconv", "style-then-mask", "mask-then-style")

EVALUATE_COLUMNS = (
    "schema_version",
    "image_id",
    "method",
    "gray_emd",
    "sliced_emd",
    "style_loss",
    "config_hash",
    "seed",
)

DISPARITY_COLUMNS = ("schema_version", "image_id", "gray_emd", "sliced_emd", "config_hash", "seed")


@dataclass
class RunConfig:
    dataset_root: str
    style_dir: str
    output_dir: str
    weights: str = ""
    seed: int = 0
    min_mask_area_fraction: float = 0.02
    bins: int = DEFAULT_BINS
    n_projections: int = DEFAULT_PROJECTIONS
    methods: tuple[str, ...] = ("partialconv", "style-then-mask")
    feather_before: bool = False
    expand_during: bool = False
    content_feather: bool = False
    feather_kernel_px: int = 5
    workers: int = 1

    def __post_init__(self):
        if not 0.0 < self.min_mask_area_fraction < 1.0:
            raise ConfigError("min_mask_area_fraction must lie in (0, 1)")
        if self.bins < 2:
            raise ConfigError("bins must be >= 2")
        if self.n_projections < 1:
            raise ConfigError("n_projections must be >= 1")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        for method in self.methods:
            if method not in METHODS:
                raise ConfigError(f"unknown method {method!r}; choose from {METHODS}")

    def blend(self) -> BlendConfig:
        return BlendConfig(
            feather_before=self.feather_before,
            expand_during=self.expand_during,
            content_feather_decoder=self.content_feather,
            feather_kernel_px=self.feather_kernel_px,
        )


_BOOL_VALUES = {"true": True, "1": True, "yes": True, "false": False, "0": False, "no": False}


def parse_run_config(path) -> RunConfig:
    """Flat key = value text; unknown keys are errors (fail-fast reproducibility)."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"config file not found: {path}")
    known = {f.name: f for f in fields(RunConfig)}
    values: dict = {}
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key not in known:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
        values[key] = _coerce(key, value, known[key].type)
    missing = [k for k in ("dataset_root", "style_dir", "output_dir") if k not in values]
    if missing:
        raise ConfigError(f"{path}: missing required keys {missing}")
    return RunConfig(**values)


def _coerce(key: str, value: str, ftype):
    if ftype in (int, "int"):
        try:
            return int(value)
        except ValueError as exc:
            raise ConfigError(f"key {key!r}: expected integer, got {value!r}") from exc
    if ftype in (float, "float"):
        try:
            return float(value)
        except ValueError as exc:
            raise ConfigError(f"key {key!r}: expected number, got {value!r}") from exc
    if ftype in (bool, "bool"):
        if value.lower() not in _BOOL_VALUES:
            raise ConfigError(f"key {key!r}: expected boolean, got {value!r}")
        return _BOOL_VALUES[value.lower()]
    if key == "methods":
        return tuple(m.strip() for m in value.split(",") if m.strip())
    return value


def config_hash(config: RunConfig) -> str:
    payload = {f.name: getattr(config, f.name) for f in fields(RunConfig)}
    payload["methods"] = list(payload["methods"])
    text = json.dumps(payload, sort_keys=True)
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def resolve_network(config: RunConfig) -> StyleNetwork:
    """Weights path: environment override first, then the config key."""
    path = os.environ.get(WEIGHTS_ENV_VAR, "") or config.weights
    if not path:
        raise ConfigError(
            f"no weights specified: set the 'weights' key or the {WEIGHTS_ENV_VAR} variable"
        )
    return load_weights(path)


def list_styles(style_dir) -> list[Path]:
    style_dir = Path(style_dir)
    styles = sorted(
        p for p in style_dir.iterdir() if p.suffix.lower() in (".jpg", ".jpeg", ".png")
    )
    if not styles:
        raise ConfigError(f"no style images under {style_dir}")
    return styles


def _style_rng_pick(styles: list[Path], key: str, seed: int) -> Path:
    material = f"style:{seed}:{key}".encode()
    derived = int.from_bytes(hashlib.sha256(material).digest()[:8], "little")
    rng = np.random.default_rng(derived)
    return styles[int(rng.integers(len(styles)))]


# --- single-image metric report ----------------------------------------------


def compute_image_report(
    output: np.ndarray,
    mask: np.ndarray,
    style: np.ndarray,
    network: StyleNetwork,
    bins: int = DEFAULT_BINS,
    n_projections: int = DEFAULT_PROJECTIONS,
    seed: int = 0,
    metadata: dict | None = None,
) -> MetricReport:
    """All five metrics for one stylized output against its style and mask."""
    mask = as_mask(mask)
    ones = np.ones(style.shape[:2], dtype=np.float32)
    return MetricReport(
        gray_emd=gray_emd(output, mask, style, ones, bins),
        sliced_emd=sliced_emd(
            masked_pixels(output, mask), masked_pixels(style, ones), n_projections, seed, bins
        ),
        style_loss=perceptual_style_loss(output, mask, style, network),
        boundary_grad_magnitude=boundary_gradient_magnitude(output, mask),
        boundary_color_contrast=boundary_color_contrast(output, mask),
        metadata=metadata or {},
    )


def region_disparity_emd(
    content: np.ndarray,
    mask: np.ndarray,
    bins: int = DEFAULT_BINS,
    n_projections: int = DEFAULT_PROJECTIONS,
    seed: int = 0,
) -> tuple[float, float]:
    """EMD between the whole image's color distribution and the masked region's."""
    mask = as_mask(mask)
    ones = np.ones(content.shape[:2], dtype=np.float32)
    gray = gray_emd(content, ones, content, mask, bins)
    sliced = sliced_emd(
        masked_pixels(content, ones), masked_pixels(content, mask), n_projections, seed, bins
    )
    return gray, sliced


# --- aggregate runs -----------------------------------------------------------


def _run_method(network, method: str, content, mask, style, blend: BlendConfig):
    if method == "partialconv":
        return stylize_masked(network, StylizeRequest(content, style, mask, blend))
    if method == "style-then-mask":
        return style_then_mask(network, content, style, mask)
    if method == "mask-then-style":
        return mask_then_style(network, content, style, mask)
    raise ConfigError(f"unknown method {method!r}")


def _evaluate_item(network, config, styles, entry):
    mask = select_random_mask(entry, config.min_mask_area_fraction, config.seed)
    if mask is None:
        return entry.key, None
    content = load_image(entry.image_path)
    if mask.shape != content.shape[:2]:
        return entry.key, None  # annotation dims disagree with the image file
    style = load_image(_style_rng_pick(styles, entry.key, config.seed))
    ones = np.ones(style.shape[:2], dtype=np.float32)
    style_pix = masked_pixels(style, ones)
    blend = config.blend()
    rows = []
    try:
        for method in config.methods:
            output = _run_method(network, method, content, mask, style, blend)
            rows.append(
                {
                    "image_id": entry.key,
                    "method": method,
                    "gray_emd": gray_emd(output, mask, style, ones, config.bins),
                    "sliced_emd": sliced_emd(
                        masked_pixels(output, mask),
                        style_pix,
                        config.n_projections,
                        config.seed,
                        config.bins,
                    ),
                    "style_loss": perceptual_style_loss(output, mask, style, network),
                }
            )
    except EmptyRegionError:
        return entry.key, None  # skipped symmetrically across all methods
    return entry.key, rows


def run_tab2(
    config: RunConfig, network: StyleNetwork | None = None, index: DatasetIndex | None = None
) -> dict:
    """Per-image region metrics for every enabled method, plus per-method means."""
    if not config.methods:
        raise ConfigError("methods list is empty")
    if network is None:
        network = resolve_network(config)
    if index is None:
        index = index_dataset(config.dataset_root)
    styles = list_styles(config.style_dir)
    chash = config_hash(config)

    t0 = time.time()
    if config.workers > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            results = list(
                pool.map(lambda e: _evaluate_item(network, config, styles, e), index.entries)
            )
    else:
        results = [_evaluate_item(network, config, styles, e) for e in index.entries]

    rows = []
    skipped = []
    for key, item_rows in results:
        if item_rows is None:
            skipped.append(key)
        else:
            rows.extend(item_rows)

    means = {}
    for method in config.methods:
        method_rows = [r for r in rows if r["method"] == method]
        if method_rows:
            means[method] = {
                metric: float(np.mean([r[metric] for r in method_rows]))
                for metric in ("gray_emd", "sliced_emd", "style_loss")
            }

    csv_body = _evaluate_csv(rows, means, config, chash)
    return {
        "csv": csv_body,
        "rows": rows,
        "means": means,
        "skipped": skipped,
        "config_hash": chash,
        "dataset_integrity": index.integrity_hash,
        "elapsed_s": time.time() - t0,
    }


def _evaluate_csv(rows, means, config: RunConfig, chash: str) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(EVALUATE_COLUMNS)
    for row in rows:
        writer.writerow(
            [
                SCHEMA_VERSION,
                row["image_id"],
                row["method"],
                f"{row['gray_emd']:.6f}",
                f"{row['sliced_emd']:.6f}",
                f"{row['style_loss']:.6f}",
                chash,
                config.seed,
            ]
        )
    for method in config.methods:
        if method in means:
            m = means[method]
            writer.writerow(
                [
                    SCHEMA_VERSION,
                    "MEAN",
                    method,
                    f"{m['gray_emd']:.6f}",
                    f"{m['sliced_emd']:.6f}",
                    f"{m['style_loss']:.6f}",
                    chash,
                    config.seed,
                ]
            )
    return buf.getvalue()


def run_disparity(config: RunConfig, index: DatasetIndex | None = None) -> dict:
    """Whole-image vs masked-region EMD across the dataset."""
    if index is None:
        index = index_dataset(config.dataset_root)
    chash = config_hash(config)
    rows = []
    skipped = []
    for entry in index.entries:
        mask = select_random_mask(entry, config.min_mask_area_fraction, config.seed)
        if mask is None:
            skipped.append(entry.key)
            continue
        content = load_image(entry.image_path)
        if mask.shape != content.shape[:2]:
            skipped.append(entry.key)
            continue
        try:
            gray, sliced = region_disparity_emd(
                content, mask, config.bins, config.n_projections, config.seed
            )
        except EmptyRegionError:
            skipped.append(entry.key)
            continue
        rows.append({"image_id": entry.key, "gray_emd": gray, "sliced_emd": sliced})

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(DISPARITY_COLUMNS)
    for row in rows:
        writer.writerow(
            [
                SCHEMA_VERSION,
                row["image_id"],
                f"{row['gray_emd']:.6f}",
                f"{row['sliced_emd']:.6f}",
                chash,
                config.seed,
            ]
        )
    if rows:
        writer.writerow(
            [
                SCHEMA_VERSION,
                "MEAN",
                f"{np.mean([r['gray_emd'] for r in rows]):.6f}",
                f"{np.mean([r['sliced_emd'] for r in rows]):.6f}",
                chash,
                config.seed,
            ]
        )
    return {
        "csv": buf.getvalue(),
        "rows": rows,
        "skipped": skipped,
        "config_hash": chash,
        "dataset_integrity": index.integrity_hash,
    }


def run_ablation_from_config(
    config: RunConfig, network: StyleNetwork | None = None, index: DatasetIndex | None = None
) -> dict:
    """Build (content, mask, style) triples from the dataset and run the grid."""
    if network is None:
        network = resolve_network(config)
    if index is None:
        index = index_dataset(config.dataset_root)
    styles = list_styles(config.style_dir)
    triples = []
    skipped = []
    for entry in index.entries:
        mask = select_random_mask(entry, config.min_mask_area_fraction, config.seed)
        if mask is None:
            skipped.append(entry.key)
            continue
        content = load_image(entry.image_path)
        if mask.shape != content.shape[:2]:
            skipped.append(entry.key)
            continue
        style = load_image(_style_rng_pick(styles, entry.key, config.seed))
        triples.append((content, mask, style))
    grid = run_ablation(network, triples, seed=config.seed)
    return {
        "csv": ablation_to_csv(grid),
        "grid": grid,
        "skipped": skipped,
        "config_hash": config_hash(config),
        "dataset_integrity": index.integrity_hash,
    }


def write_run_outputs(output_dir, csv_name: str, csv_body: str, sidecar: dict) -> None:
    """CSV body plus a JSON sidecar (the only place timestamps appear)."""
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    (output_dir / csv_name).write_text(csv_body)
    sidecar = dict(sidecar)
    sidecar["schema_version"] = SCHEMA_VERSION
    sidecar["timestamp"] = time.strftime("%Y-%m-%dT%H:%M:%S")
    (output_dir / "run.json").write_text(json.dumps(sidecar, indent=2, sort_keys=True))
