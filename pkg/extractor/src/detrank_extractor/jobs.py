"""Extraction-job configuration.

Jobs arrive as a flat key=value text file (``#`` comments, blank lines
ignored). Paths are resolved relative to the config file's directory so a
job folder can be moved wholesale.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from .levels import PyramidSettings

_REQUIRED = ("checkpoint", "annotations", "images_dir", "output")

_DEFAULTS = {
    "arch": "resnet18",
    "pooled_dim": "256",
    "model_name": "",
    "roi_output_size": "7",
    "sampling_ratio": "2",
    "projection_seed": "0",
    "base_level": "3",
    "min_level": "2",
    "max_level": "5",
    "small_thresh": "64",
    "large_thresh": "512",
    "gradients": "false",
    "gradient_params": "1000",
    "gradient_seed": "0",
}


@dataclass(frozen=True)
class ExtractionJob:
    """Everything one extraction run needs."""

    checkpoint: Path
    annotations: Path
    images_dir: Path
    output: Path
    arch: str = "resnet18"
    pooled_dim: int = 256
    model_name: str = ""
    roi_output_size: int = 7
    sampling_ratio: int = 2
    projection_seed: int = 0
    pyramid: PyramidSettings = field(default_factory=PyramidSettings)
    gradients: bool = False
    gradient_params: int = 1000
    gradient_seed: int = 0

    def __post_init__(self) -> None:
        if self.pooled_dim < 1:
            raise ValueError(f"pooled_dim must be >= 1, got {self.pooled_dim}")
        if self.roi_output_size < 1:
            raise ValueError(
                f"roi_output_size must be >= 1, got {self.roi_output_size}"
            )
        if self.gradient_params < 1:
            raise ValueError(
                f"gradient_params must be >= 1, got {self.gradient_params}"
            )


def _parse_bool(key: str, raw: str) -> bool:
    lowered = raw.strip().lower()
    if lowered in ("true", "yes", "1", "on"):
        return True
    if lowered in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"{key}: expected a boolean, got {raw!r}")


def parse_job_file(path: Path | str) -> ExtractionJob:
    """Read a key=value job config into an ExtractionJob.

    Raises:
        ValueError: unparseable line, unknown or missing key, bad value.
        OSError: unreadable file.
    """
    path = Path(path)
    values = dict(_DEFAULTS)
    seen = set()
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ValueError(f"{path}: line {lineno}: expected key = value")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        if key not in _DEFAULTS and key not in _REQUIRED:
            raise ValueError(f"{path}: line {lineno}: unknown key {key!r}")
        if key in seen:
            raise ValueError(f"{path}: line {lineno}: duplicate key {key!r}")
        seen.add(key)
        values[key] = raw.strip()
    missing = [key for key in _REQUIRED if key not in values]
    if missing:
        raise ValueError(f"{path}: missing required keys: {missing}")

    base = path.parent

    def _path(key: str) -> Path:
        raw = Path(values[key])
        return raw if raw.is_absolute() else base / raw

    def _int(key: str) -> int:
        try:
            return int(values[key])
        except ValueError as exc:
            raise ValueError(f"{path}: {key}: expected an integer, got "
                             f"{values[key]!r}") from exc

    def _float(key: str) -> float:
        try:
            return float(values[key])
        except ValueError as exc:
            raise ValueError(f"{path}: {key}: expected a number, got "
                             f"{values[key]!r}") from exc

    return ExtractionJob(
        checkpoint=_path("checkpoint"),
        annotations=_path("annotations"),
        images_dir=_path("images_dir"),
        output=_path("output"),
        arch=values["arch"],
        pooled_dim=_int("pooled_dim"),
        model_name=values["model_name"],
        roi_output_size=_int("roi_output_size"),
        sampling_ratio=_int("sampling_ratio"),
        projection_seed=_int("projection_seed"),
        pyramid=PyramidSettings(
            base_level=_int("base_level"),
            min_level=_int("min_level"),
            max_level=_int("max_level"),
            small_thresh=_float("small_thresh"),
            large_thresh=_float("large_thresh"),
        ),
        gradients=_parse_bool("gradients", values["gradients"]),
        gradient_params=_int("gradient_params"),
        gradient_seed=_int("gradient_seed"),
    )
