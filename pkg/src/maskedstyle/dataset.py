"""Dataset ingestion: images with per-image JSON mask annotations.

Annotations follow the segmentation-dataset convention: a JSON file per image
holding {"annotations": [{"segmentation": {"size": [h, w], "counts": ...},
"area": ...}, ...]}. Counts are either an uncompressed run-length list or the
compressed LEB128-style string (column-major runs, zeros first, 6 bits per
char offset by 48, deltas against count[i-2] from the fourth element on).
"""

import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import DatasetError

logger = logging.getLogger(__name__)

IMAGE_SUFFIXES = (".jpg", ".jpeg", ".png")


# --- run-length codec -------------------------------------------------------


def rle_decode_counts(counts: str) -> list[int]:
    """Decode the compressed counts string into run lengths."""
    out: list[int] = []
    pos = 0
    while pos < len(counts):
        x = 0
        k = 0
        more = True
        while more:
            c = ord(counts[pos]) - 48
            x |= (c & 0x1F) << (5 * k)
            more = bool(c & 0x20)
            pos += 1
            k += 1
            if not more and (c & 0x10):
                x |= -1 << (5 * k)
        if len(out) > 2:
            x += out[-2]
        out.append(x)
    return out


def rle_encode_counts(runs: list[int]) -> str:
    """Inverse of rle_decode_counts."""
    chars: list[str] = []
    for i, run in enumerate(runs):
        x = run - runs[i - 2] if i > 2 else run
        more = True
        while more:
            c = x & 0x1F
            x >>= 5
            more = x != -1 if (c & 0x10) else x != 0
            if more:
                c |= 0x20
            chars.append(chr(c + 48))
    return "".join(chars)


def decode_segmentation(segmentation: dict) -> np.ndarray:
    """Segmentation record -> binary float mask (H, W)."""
    h, w = (int(v) for v in segmentation["size"])
    counts = segmentation["counts"]
    runs = rle_decode_counts(counts) if isinstance(counts, str) else [int(v) for v in counts]
    if sum(runs) != h * w:
        raise ValueError(f"run lengths sum to {sum(runs)}, expected {h * w}")
    flat = np.zeros(h * w, dtype=np.float32)
    pos = 0
    value = 0.0  # runs alternate starting with zeros
    for run in runs:
        if value:
            flat[pos : pos + run] = 1.0
        pos += run
        value = 1.0 - value
    return flat.reshape(w, h).T  # column-major storage


def encode_segmentation(mask: np.ndarray) -> dict:
    """Binary mask -> segmentation record with compressed counts."""
    h, w = mask.shape
    flat = (np.asarray(mask) > 0.5).T.reshape(-1)
    runs: list[int] = []
    pos = 0
    for boundary in np.flatnonzero(np.diff(flat.astype(np.int8))):
        runs.append(int(boundary) + 1 - pos)
        pos = int(boundary) + 1
    runs.append(flat.size - pos)
    if flat[0]:  # runs must start with a zero run
        runs.insert(0, 0)
    return {"size": [h, w], "counts": rle_encode_counts(runs)}


# --- image / mask file I/O --------------------------------------------------


def load_image(path) -> np.ndarray:
    """8-bit RGB file -> (H, W, 3) float32 in [0, 1]."""
    with Image.open(path) as img:
        rgb = img.convert("RGB")
        return np.asarray(rgb, dtype=np.float32) / 255.0


def save_image(image: np.ndarray, path) -> None:
    """Float image in [0, 1] -> 8-bit PNG (lossless)."""
    arr = np.clip(np.asarray(image), 0.0, 1.0)
    data = np.round(arr * 255.0).astype(np.uint8)
    Image.fromarray(data).save(path)


def load_mask(path) -> np.ndarray:
    """Single-channel 8-bit mask file; values > 127 mean inside."""
    with Image.open(path) as img:
        gray = np.asarray(img.convert("L"))
    return (gray > 127).astype(np.float32)


def save_mask(mask: np.ndarray, path) -> None:
    data = ((np.asarray(mask) > 0.5) * 255).astype(np.uint8)
    Image.fromarray(data, mode="L").save(path)


# --- dataset index ----------------------------------------------------------


@dataclass
class MaskRecord:
    area: int
    segmentation: dict

    def decode(self) -> np.ndarray:
        return decode_segmentation(self.segmentation)

    @property
    def size(self) -> tuple[int, int]:
        h, w = self.segmentation["size"]
        return int(h), int(w)


@dataclass
class DatasetEntry:
    image_path: Path
    annotation_path: Path
    masks: list[MaskRecord]

    @property
    def key(self) -> str:
        return self.image_path.stem


@dataclass
class DatasetIndex:
    root: Path
    entries: list[DatasetEntry]
    integrity_hash: str = ""

    def __len__(self) -> int:
        return len(self.entries)


def _entry_digest(entry: DatasetEntry) -> str:
    h = hashlib.sha256()
    h.update(entry.image_path.name.encode())
    h.update(entry.image_path.read_bytes())
    h.update(entry.annotation_path.read_bytes())
    return h.hexdigest()


def index_dataset(root) -> DatasetIndex:
    """Enumerate image/annotation pairs under root; masks decode lazily."""
    root = Path(root)
    if not root.is_dir():
        raise DatasetError(f"dataset root {root} is not a readable directory")
    entries: list[DatasetEntry] = []
    for image_path in sorted(p for p in root.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES):
        ann_path = image_path.with_suffix(".json")
        if not ann_path.exists():
            logger.warning("no annotation for %s, skipping", image_path.name)
            continue
        try:
            payload = json.loads(ann_path.read_text())
            masks = [
                MaskRecord(area=int(a["area"]), segmentation=a["segmentation"])
                for a in payload["annotations"]
            ]
            if any(m.area < 0 for m in masks):
                raise ValueError("negative mask area")
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            logger.warning("corrupt annotation %s (%s), skipping", ann_path.name, exc)
            continue
        entries.append(DatasetEntry(image_path=image_path, annotation_path=ann_path, masks=masks))
    if not entries:
        raise DatasetError(f"no usable image/annotation pairs under {root}")
    digest = hashlib.sha256()
    for entry in entries:
        digest.update(_entry_digest(entry).encode())
    return DatasetIndex(root=root, entries=entries, integrity_hash=digest.hexdigest())


def _entry_rng(entry: DatasetEntry, seed: int) -> np.random.Generator:
    material = f"{seed}:{entry.key}".encode()
    derived = int.from_bytes(hashlib.sha256(material).digest()[:8], "little")
    return np.random.default_rng(derived)


def select_random_mask(
    entry: DatasetEntry, min_area_fraction: float, seed: int
) -> np.ndarray | None:
    """Uniform choice among masks covering at least min_area_fraction; None if none."""
    qualifying = []
    for record in entry.masks:
        h, w = record.size
        if record.area / float(h * w) >= min_area_fraction:
            qualifying.append(record)
    if not qualifying:
        return None
    rng = _entry_rng(entry, seed)
    choice = qualifying[int(rng.integers(len(qualifying)))]
    return choice.decode()
