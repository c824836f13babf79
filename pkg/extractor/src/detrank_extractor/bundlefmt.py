"""Writer for the feature-bundle interchange format.

This is an independent implementation of the scoring core's documented
on-disk layout — the extractor talks to the core only through this file
format and the core's CLI, never through its Python API. Layout, little
endian throughout:

    magic "DTFB" | version u16 (=1) | flags u16 (bit0 levels, bit1
    gradients) | M u64 | D u32 | K u32 | P u32 | L u8 (distinct level
    count) | 3 pad bytes | features f32[M*D] | boxes f32[M*4] |
    labels u32[M] | image_dims f32[M*2] | [levels u8[M]] |
    [gradients f32[M*P]] | crc32 u32 over all preceding bytes

plus a JSON sidecar ``<name>.manifest.json`` with the model/dataset names,
a free-form extractor-settings string, and the checksum in hex.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
import zlib
from pathlib import Path

import numpy as np

MAGIC = b"DTFB"
FORMAT_VERSION = 1
FLAG_LEVELS = 0x1
FLAG_GRADIENTS = 0x2
BUNDLE_SUFFIX = ".dtfb"

HEADER = struct.Struct("<4sHHQIIIB3x")
CRC = struct.Struct("<I")


def manifest_path(path: Path | str) -> Path:
    return Path(path).with_suffix(".manifest.json")


def _atomic_write(path: Path, data: bytes) -> None:
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


def _check_arrays(
    features: np.ndarray,
    boxes: np.ndarray,
    labels: np.ndarray,
    image_dims: np.ndarray,
    num_classes: int,
    levels: np.ndarray | None,
    gradients: np.ndarray | None,
) -> None:
    if features.ndim != 2 or min(features.shape) < 1:
        raise ValueError(f"features must be (M>=1, D>=1), got {features.shape}")
    m = features.shape[0]
    if boxes.shape != (m, 4):
        raise ValueError(f"boxes must be ({m}, 4), got {boxes.shape}")
    if labels.shape != (m,):
        raise ValueError(f"labels must be ({m},), got {labels.shape}")
    if image_dims.shape != (m, 2):
        raise ValueError(f"image_dims must be ({m}, 2), got {image_dims.shape}")
    if num_classes < 1:
        raise ValueError(f"num_classes must be >= 1, got {num_classes}")
    if levels is not None and levels.shape != (m,):
        raise ValueError(f"levels must be ({m},), got {levels.shape}")
    if gradients is not None and (
        gradients.ndim != 2 or gradients.shape[0] != m or gradients.shape[1] < 1
    ):
        raise ValueError(f"gradients must be ({m}, P>=1), got {gradients.shape}")
    for name, arr in (("features", features), ("boxes", boxes),
                      ("image_dims", image_dims), ("gradients", gradients)):
        if arr is not None and not np.isfinite(arr).all():
            raise ValueError(f"non-finite values in {name}")
    if labels.max() >= num_classes:
        raise ValueError(
            f"label {int(labels.max())} out of range (num_classes={num_classes})"
        )
    widths = image_dims[:, 0].astype(np.float64)
    heights = image_dims[:, 1].astype(np.float64)
    b = boxes.astype(np.float64)
    ok = (
        (b[:, 0] < b[:, 2]) & (b[:, 1] < b[:, 3])
        & (b[:, 0] >= 0) & (b[:, 1] >= 0)
        & (b[:, 2] <= widths) & (b[:, 3] <= heights)
    )
    if not ok.all():
        row = int(np.nonzero(~ok)[0][0])
        raise ValueError(
            f"invalid box at row {row}: {b[row].tolist()} in image "
            f"{widths[row]}x{heights[row]}"
        )


def write_feature_bundle(
    path: Path | str,
    *,
    model_name: str,
    dataset_name: str,
    features: np.ndarray,
    boxes: np.ndarray,
    labels: np.ndarray,
    image_dims: np.ndarray,
    num_classes: int,
    levels: np.ndarray | None = None,
    gradients: np.ndarray | None = None,
    extractor_info: str = "",
) -> None:
    """Validate arrays and write the bundle file + manifest atomically.

    Raises:
        ValueError: shape/value problem (nothing is written).
        OSError: underlying I/O failure.
    """
    path = Path(path)
    features = np.ascontiguousarray(features, dtype="<f4")
    boxes = np.ascontiguousarray(boxes, dtype="<f4")
    labels = np.ascontiguousarray(labels, dtype="<u4")
    image_dims = np.ascontiguousarray(image_dims, dtype="<f4")
    if levels is not None:
        levels = np.ascontiguousarray(levels, dtype="u1")
    if gradients is not None:
        gradients = np.ascontiguousarray(gradients, dtype="<f4")
    _check_arrays(
        features, boxes, labels, image_dims, num_classes, levels, gradients
    )

    flags = 0
    if levels is not None:
        flags |= FLAG_LEVELS
    if gradients is not None:
        flags |= FLAG_GRADIENTS
    header = HEADER.pack(
        MAGIC,
        FORMAT_VERSION,
        flags,
        features.shape[0],
        features.shape[1],
        num_classes,
        0 if gradients is None else gradients.shape[1],
        0 if levels is None else int(np.unique(levels).size),
    )
    parts = [header, features.tobytes(), boxes.tobytes(), labels.tobytes(),
             image_dims.tobytes()]
    if levels is not None:
        parts.append(levels.tobytes())
    if gradients is not None:
        parts.append(gradients.tobytes())
    payload = b"".join(parts)
    checksum = zlib.crc32(payload) & 0xFFFFFFFF
    _atomic_write(path, payload + CRC.pack(checksum))

    manifest = {
        "format_version": FORMAT_VERSION,
        "flags": flags,
        "checksum": f"{checksum:08x}",
        "model_name": model_name,
        "dataset_name": dataset_name,
        "extractor_info": extractor_info,
    }
    _atomic_write(
        manifest_path(path), (json.dumps(manifest, indent=2) + "\n").encode()
    )
