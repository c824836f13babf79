"""Minimal COCO-style dataset handling.

The extractor consumes a single JSON annotation file with the usual
``images`` / ``annotations`` / ``categories`` arrays; boxes are COCO
``[x, y, w, h]``. Category ids map to contiguous zero-based labels in
sorted-id order. A small synthetic-dataset generator is included so the
pipeline can be exercised (and tested) without shipping real data.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw


@dataclass(frozen=True)
class ImageRecord:
    """One image plus its ground-truth objects."""

    image_id: int
    file_path: Path
    width: int
    height: int
    boxes: np.ndarray = field(default_factory=lambda: np.zeros((0, 4)))
    labels: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))


@dataclass(frozen=True)
class DetectionDataset:
    """All images of one annotation file, in annotation order."""

    name: str
    images: tuple[ImageRecord, ...]
    num_classes: int

    @property
    def num_objects(self) -> int:
        return int(sum(len(rec.labels) for rec in self.images))


def load_dataset(annotations_path: Path | str, images_dir: Path | str) -> DetectionDataset:
    """Parse a COCO-style JSON file into per-image records.

    Raises:
        ValueError: missing sections, unknown references, or boxes that do
            not fit their image (annotation/image mismatch).
        OSError: unreadable annotation file.
    """
    annotations_path = Path(annotations_path)
    images_dir = Path(images_dir)
    data = json.loads(annotations_path.read_text())
    for section in ("images", "annotations", "categories"):
        if section not in data:
            raise ValueError(f"{annotations_path}: missing {section!r} section")
    if not data["categories"]:
        raise ValueError(f"{annotations_path}: no categories")

    label_of = {
        cat["id"]: index
        for index, cat in enumerate(
            sorted(data["categories"], key=lambda c: c["id"])
        )
    }
    image_meta: dict[int, dict] = {}
    for entry in data["images"]:
        image_meta[entry["id"]] = entry
    grouped: dict[int, list[tuple[list[float], int]]] = {
        image_id: [] for image_id in image_meta
    }
    for ann in data["annotations"]:
        image_id = ann["image_id"]
        if image_id not in image_meta:
            raise ValueError(
                f"{annotations_path}: annotation {ann.get('id')} references "
                f"unknown image {image_id}"
            )
        if ann["category_id"] not in label_of:
            raise ValueError(
                f"{annotations_path}: annotation {ann.get('id')} references "
                f"unknown category {ann['category_id']}"
            )
        x, y, w, h = (float(v) for v in ann["bbox"])
        meta = image_meta[image_id]
        if w <= 0 or h <= 0 or x < 0 or y < 0 or x + w > meta["width"] \
                or y + h > meta["height"]:
            raise ValueError(
                f"{annotations_path}: annotation {ann.get('id')} box "
                f"[{x}, {y}, {w}, {h}] does not fit image {image_id} "
                f"({meta['width']}x{meta['height']})"
            )
        grouped[image_id].append(([x, y, x + w, y + h], label_of[ann["category_id"]]))

    records = []
    for image_id in sorted(image_meta):
        meta = image_meta[image_id]
        file_path = images_dir / meta["file_name"]
        if not file_path.exists():
            raise ValueError(
                f"{annotations_path}: image file missing: {file_path}"
            )
        pairs = grouped[image_id]
        boxes = np.array([p[0] for p in pairs], dtype=np.float64).reshape(-1, 4)
        labels = np.array([p[1] for p in pairs], dtype=np.int64)
        records.append(
            ImageRecord(
                image_id=image_id,
                file_path=file_path,
                width=int(meta["width"]),
                height=int(meta["height"]),
                boxes=boxes,
                labels=labels,
            )
        )
    return DetectionDataset(
        name=annotations_path.stem,
        images=tuple(records),
        num_classes=len(label_of),
    )


def make_synthetic_dataset(
    directory: Path | str,
    num_images: int,
    num_classes: int,
    seed: int,
    min_side: int = 96,
    max_side: int = 160,
) -> Path:
    """Write tiny PNG images with rectangle objects plus COCO annotations.

    Each image gets 1-3 axis-aligned rectangles with class-specific fill
    colors; the annotation records their exact boxes. Returns the path of
    the annotation file (images land next to it under ``images/``).
    """
    if num_images < 1 or num_classes < 1:
        raise ValueError("need at least one image and one class")
    directory = Path(directory)
    images_dir = directory / "images"
    images_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)

    images, annotations = [], []
    ann_id = 1
    for image_id in range(1, num_images + 1):
        width = int(rng.integers(min_side, max_side + 1))
        height = int(rng.integers(min_side, max_side + 1))
        background = rng.integers(0, 80, size=3)
        image = Image.new("RGB", (width, height), tuple(int(c) for c in background))
        draw = ImageDraw.Draw(image)
        for _ in range(int(rng.integers(1, 4))):
            bw = int(rng.integers(8, max(9, width // 2)))
            bh = int(rng.integers(8, max(9, height // 2)))
            x = int(rng.integers(0, width - bw))
            y = int(rng.integers(0, height - bh))
            label = int(rng.integers(0, num_classes))
            shade = tuple(
                int(c) for c in (80 + 40 * label % 176, 200 - 30 * label % 200, 120)
            )
            draw.rectangle([x, y, x + bw - 1, y + bh - 1], fill=shade)
            annotations.append(
                {
                    "id": ann_id,
                    "image_id": image_id,
                    "bbox": [float(x), float(y), float(bw), float(bh)],
                    "category_id": label + 1,
                    "area": float(bw * bh),
                    "iscrowd": 0,
                }
            )
            ann_id += 1
        file_name = f"img_{image_id:04d}.png"
        image.save(images_dir / file_name)
        images.append(
            {
                "id": image_id,
                "file_name": file_name,
                "width": width,
                "height": height,
            }
        )

    payload = {
        "images": images,
        "annotations": annotations,
        "categories": [
            {"id": k + 1, "name": f"class_{k}"} for k in range(num_classes)
        ],
    }
    annotations_path = directory / "annotations.json"
    annotations_path.write_text(json.dumps(payload, indent=2) + "\n")
    return annotations_path
