"""Feature-bundle container: the on-disk interchange between detector
feature extraction and transferability scoring.

A bundle carries, for one (model, dataset) pair, the pooled per-object
feature matrix plus each object's ground-truth corner box, class id, and
source-image size — everything the scores need, nothing detector-specific.

On disk a bundle is a single little-endian binary file:

    magic "DTFB" | version u16 (=1) | flags u16 (bit0 levels, bit1
    gradients) | M u64 | D u32 | K u32 | P u32 (0 without gradients) |
    L u8 (count of distinct pyramid levels, 0 without levels) | 3 pad
    bytes | features f32[M*D] row-major | boxes f32[M*4] | labels u32[M] |
    image_dims f32[M*2] | [levels u8[M]] | [gradients f32[M*P]] |
    crc32 u32 over all preceding bytes

plus a JSON sidecar ``<name>.manifest.json`` holding model_name,
dataset_name, extractor_info, and the checksum in hex.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import geometry
from .errors import (
    BundleCorruptionError,
    BundleFormatError,
    BundleValidationError,
)

MAGIC = b"DTFB"
FORMAT_VERSION = 1
FLAG_LEVELS = 0x1
FLAG_GRADIENTS = 0x2

_HEADER = struct.Struct("<4sHHQIIIB3x")
_CRC = struct.Struct("<I")


@dataclass(frozen=True)
class FeatureBundle:
    """Per-model package of object-level features and annotations.

    Arrays are normalized to their storage dtypes on construction
    (features/boxes/image_dims/gradients float32, labels uint32, levels
    uint8) so that write/read round-trips are bit-exact. Instances are
    immutable; share them freely across concurrent scorers.
    """

    model_name: str
    dataset_name: str
    features: np.ndarray
    boxes: np.ndarray
    labels: np.ndarray
    image_dims: np.ndarray
    num_classes: int
    levels: np.ndarray | None = None
    gradients: np.ndarray | None = None
    extractor_info: str = ""

    def __post_init__(self) -> None:
        set_ = object.__setattr__
        set_(self, "features", np.ascontiguousarray(self.features, dtype=np.float32))
        set_(self, "boxes", np.ascontiguousarray(self.boxes, dtype=np.float32))
        set_(self, "labels", np.ascontiguousarray(self.labels, dtype=np.uint32))
        set_(self, "image_dims", np.ascontiguousarray(self.image_dims, dtype=np.float32))
        if self.levels is not None:
            set_(self, "levels", np.ascontiguousarray(self.levels, dtype=np.uint8))
        if self.gradients is not None:
            set_(self, "gradients", np.ascontiguousarray(self.gradients, dtype=np.float32))

    @property
    def num_objects(self) -> int:
        return int(self.features.shape[0])

    @property
    def feature_dim(self) -> int:
        return int(self.features.shape[1])

    @property
    def gradient_dim(self) -> int:
        return 0 if self.gradients is None else int(self.gradients.shape[1])


@dataclass(frozen=True)
class BundleManifest:
    """Sidecar metadata for one bundle file."""

    format_version: int
    flags: int
    checksum: int
    model_name: str
    dataset_name: str
    extractor_info: str = ""

    @property
    def has_levels(self) -> bool:
        return bool(self.flags & FLAG_LEVELS)

    @property
    def has_gradients(self) -> bool:
        return bool(self.flags & FLAG_GRADIENTS)


def validate_bundle(bundle: FeatureBundle) -> None:
    """Check every bundle invariant; raise on the first violation.

    Raises:
        BundleValidationError: naming the first offending row or the
            shape/value problem found.
    """
    f, b, l, d = bundle.features, bundle.boxes, bundle.labels, bundle.image_dims
    if f.ndim != 2 or f.shape[0] < 1 or f.shape[1] < 1:
        raise BundleValidationError(f"features must be (M>=1, D>=1), got {f.shape}")
    M = f.shape[0]
    if bundle.num_classes < 1:
        raise BundleValidationError(f"num_classes must be >= 1, got {bundle.num_classes}")
    if b.shape != (M, 4):
        raise BundleValidationError(f"boxes must be ({M}, 4), got {b.shape}")
    if l.shape != (M,):
        raise BundleValidationError(f"labels must be ({M},), got {l.shape}")
    if d.shape != (M, 2):
        raise BundleValidationError(f"image_dims must be ({M}, 2), got {d.shape}")
    if bundle.levels is not None and bundle.levels.shape != (M,):
        raise BundleValidationError(
            f"levels must be ({M},), got {bundle.levels.shape}"
        )
    if bundle.gradients is not None and (
        bundle.gradients.ndim != 2 or bundle.gradients.shape[0] != M
    ):
        raise BundleValidationError(
            f"gradients must be ({M}, P), got {bundle.gradients.shape}"
        )

    for name, arr in (
        ("features", f),
        ("boxes", b),
        ("image_dims", d),
        ("gradients", bundle.gradients),
    ):
        if arr is None:
            continue
        finite_rows = np.isfinite(arr).all(axis=tuple(range(1, arr.ndim)))
        if not finite_rows.all():
            row = int(np.nonzero(~finite_rows)[0][0])
            raise BundleValidationError(f"non-finite {name} at row {row}")

    bad_label = np.nonzero(l >= bundle.num_classes)[0]
    if bad_label.size:
        row = int(bad_label[0])
        raise BundleValidationError(
            f"label out of range at row {row}: {int(l[row])} "
            f"(num_classes={bundle.num_classes})"
        )

    width, height = d[:, 0].astype(np.float64), d[:, 1].astype(np.float64)
    b64 = b.astype(np.float64)
    ok = (
        (b64[:, 0] < b64[:, 2])
        & (b64[:, 1] < b64[:, 3])
        & (b64[:, 0] >= 0)
        & (b64[:, 1] >= 0)
        & (b64[:, 2] <= width)
        & (b64[:, 3] <= height)
    )
    if not ok.all():
        row = int(np.nonzero(~ok)[0][0])
        raise BundleValidationError(
            f"invalid box at row {row}: {b64[row].tolist()} in image "
            f"{width[row]}x{height[row]}"
        )


def manifest_path(path: Path | str) -> Path:
    """Sidecar manifest location for a bundle path."""
    return Path(path).with_suffix(".manifest.json")


def _atomic_write_bytes(path: Path, data: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_bundle(bundle: FeatureBundle, path: Path | str) -> None:
    """Serialize a validated bundle and its manifest atomically.

    Raises:
        BundleValidationError: invariants violated (nothing is written).
        OSError: underlying I/O failure.
    """
    validate_bundle(bundle)
    path = Path(path)
    flags = 0
    if bundle.levels is not None:
        flags |= FLAG_LEVELS
    if bundle.gradients is not None:
        flags |= FLAG_GRADIENTS
    level_count = (
        0 if bundle.levels is None else int(np.unique(bundle.levels).size)
    )
    header = _HEADER.pack(
        MAGIC,
        FORMAT_VERSION,
        flags,
        bundle.num_objects,
        bundle.feature_dim,
        bundle.num_classes,
        bundle.gradient_dim,
        level_count,
    )
    parts = [
        header,
        bundle.features.tobytes(),
        bundle.boxes.tobytes(),
        bundle.labels.tobytes(),
        bundle.image_dims.tobytes(),
    ]
    if bundle.levels is not None:
        parts.append(bundle.levels.tobytes())
    if bundle.gradients is not None:
        parts.append(bundle.gradients.tobytes())
    payload = b"".join(parts)
    checksum = zlib.crc32(payload) & 0xFFFFFFFF
    _atomic_write_bytes(path, payload + _CRC.pack(checksum))

    manifest = {
        "format_version": FORMAT_VERSION,
        "flags": flags,
        "checksum": f"{checksum:08x}",
        "model_name": bundle.model_name,
        "dataset_name": bundle.dataset_name,
        "extractor_info": bundle.extractor_info,
    }
    _atomic_write_bytes(
        manifest_path(path), (json.dumps(manifest, indent=2) + "\n").encode()
    )


def expected_file_size(
    num_objects: int, feature_dim: int, *, has_levels: bool = False,
    gradient_dim: int = 0,
) -> int:
    """Exact byte size of a bundle file with the given shape."""
    size = _HEADER.size
    size += 4 * num_objects * feature_dim  # features
    size += 4 * num_objects * 4  # boxes
    size += 4 * num_objects  # labels
    size += 4 * num_objects * 2  # image_dims
    if has_levels:
        size += num_objects
    size += 4 * num_objects * gradient_dim
    return size + _CRC.size


def _read_manifest(path: Path, checksum: int) -> dict:
    mpath = manifest_path(path)
    if not mpath.exists():
        return {}
    try:
        manifest = json.loads(mpath.read_text())
    except json.JSONDecodeError as exc:
        raise BundleFormatError(f"unparseable manifest {mpath}: {exc}") from exc
    stored = manifest.get("checksum")
    if stored is not None and int(stored, 16) != checksum:
        raise BundleCorruptionError(
            f"manifest checksum {stored} does not match file checksum {checksum:08x}"
        )
    return manifest


def read_bundle(path: Path | str) -> FeatureBundle:
    """Parse, checksum-verify, and validate a bundle file.

    Raises:
        BundleFormatError: bad magic, unsupported version, or truncated /
            inconsistent layout.
        BundleCorruptionError: checksum mismatch (file or manifest).
        BundleValidationError: contents violate a bundle invariant.
    """
    path = Path(path)
    data = path.read_bytes()
    if len(data) < _HEADER.size + _CRC.size:
        raise BundleFormatError(f"{path}: truncated file ({len(data)} bytes)")
    magic, version, flags, M, D, K, P, _level_count = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise BundleFormatError(f"{path}: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise BundleFormatError(f"{path}: unsupported format version {version}")

    has_levels = bool(flags & FLAG_LEVELS)
    has_gradients = bool(flags & FLAG_GRADIENTS)
    if has_gradients and P == 0:
        raise BundleFormatError(f"{path}: gradient flag set but gradient dim is 0")
    expected = expected_file_size(
        M, D, has_levels=has_levels, gradient_dim=P if has_gradients else 0
    )
    if len(data) != expected:
        raise BundleFormatError(
            f"{path}: size {len(data)} does not match header layout ({expected})"
        )

    (stored_crc,) = _CRC.unpack_from(data, len(data) - _CRC.size)
    actual_crc = zlib.crc32(data[: -_CRC.size]) & 0xFFFFFFFF
    if stored_crc != actual_crc:
        raise BundleCorruptionError(
            f"{path}: checksum mismatch (stored {stored_crc:08x}, "
            f"computed {actual_crc:08x})"
        )

    offset = _HEADER.size

    def take(dtype, count, shape):
        nonlocal offset
        arr = np.frombuffer(data, dtype=dtype, count=count, offset=offset)
        offset += arr.nbytes
        return arr.reshape(shape).copy()

    features = take("<f4", M * D, (M, D))
    boxes = take("<f4", M * 4, (M, 4))
    labels = take("<u4", M, (M,))
    image_dims = take("<f4", M * 2, (M, 2))
    levels = take("u1", M, (M,)) if has_levels else None
    gradients = take("<f4", M * P, (M, P)) if has_gradients else None

    manifest = _read_manifest(path, actual_crc)
    bundle = FeatureBundle(
        model_name=manifest.get("model_name", path.stem),
        dataset_name=manifest.get("dataset_name", ""),
        features=features,
        boxes=boxes,
        labels=labels,
        image_dims=image_dims,
        num_classes=int(K),
        levels=levels,
        gradients=gradients,
        extractor_info=manifest.get("extractor_info", ""),
    )
    validate_bundle(bundle)
    return bundle


def synth_bundle(
    num_objects: int,
    feature_dim: int,
    num_classes: int,
    quality: float,
    seed: int,
) -> FeatureBundle:
    """Generate a synthetic bundle with a planted linear box signal.

    The features embed the class-slotted normalized box targets through a
    random orthogonal mixing, plus Gaussian noise scaled by
    ``0.5 * (1 - quality)`` and pure-noise distractor dimensions. At
    quality 1.0 the normalized boxes are an exact linear function of the
    features (up to float32 storage rounding); at quality 0.0 the signal
    is heavily corrupted. Deterministic for a fixed argument tuple.

    Args:
        num_objects: M >= num_classes; every class id occurs at least once.
        feature_dim: D >= 4.
        num_classes: K >= 1.
        quality: signal cleanliness in [0, 1].
        seed: generator seed.

    Raises:
        ValueError: invalid dims or quality outside [0, 1].
    """
    if num_classes < 1:
        raise ValueError("num_classes must be >= 1")
    if num_objects < num_classes:
        raise ValueError("need num_objects >= num_classes")
    if feature_dim < 4:
        raise ValueError("feature_dim must be >= 4")
    if not 0.0 <= quality <= 1.0:
        raise ValueError(f"quality must be in [0, 1], got {quality}")

    rng = np.random.default_rng(seed)
    side = 1000.0
    widths = rng.uniform(20.0, 400.0, num_objects)
    heights = rng.uniform(20.0, 400.0, num_objects)
    x1 = rng.uniform(0.0, side - widths)
    y1 = rng.uniform(0.0, side - heights)
    boxes = np.stack([x1, y1, x1 + widths, y1 + heights], axis=1).astype(np.float32)
    image_dims = np.full((num_objects, 2), side, dtype=np.float32)

    labels = np.concatenate(
        [
            np.arange(num_classes, dtype=np.int64),
            rng.integers(0, num_classes, num_objects - num_classes),
        ]
    )
    rng.shuffle(labels)

    # Targets are computed from the float32-stored boxes so the planted
    # linear relation matches what a reader of the bundle recomputes.
    boxes_cen = geometry.center_normalize_boxes(
        boxes.astype(np.float64), image_dims.astype(np.float64)
    )
    unified = geometry.expand_unified_labels(boxes_cen, labels, num_classes).matrix

    block = 4 * num_classes
    signal_dim = min(feature_dim, block)
    mixing, _ = np.linalg.qr(rng.normal(size=(block, block)))
    noise_scale = 0.5 * (1.0 - quality)
    features = np.empty((num_objects, feature_dim))
    features[:, :signal_dim] = unified @ mixing[:, :signal_dim]
    features[:, :signal_dim] += noise_scale * rng.normal(
        size=(num_objects, signal_dim)
    )
    if feature_dim > signal_dim:
        features[:, signal_dim:] = 0.25 * rng.normal(
            size=(num_objects, feature_dim - signal_dim)
        )

    return FeatureBundle(
        model_name=f"synthetic-q{quality:g}-seed{seed}",
        dataset_name="synthetic",
        features=features.astype(np.float32),
        boxes=boxes,
        labels=labels,
        image_dims=image_dims,
        num_classes=num_classes,
        extractor_info="synth_bundle planted linear box signal",
    )
