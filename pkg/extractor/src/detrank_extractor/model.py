"""Backbone construction and checkpoint handling.

The extractor runs a ResNet+FPN backbone in eval mode; checkpoints are
plain ``torch.save`` payloads carrying the architecture name and state
dict. ``init_checkpoint`` writes a seeded randomly-initialized one, which
is enough to exercise the full extraction contract where no pre-trained
weights are available.
"""

from __future__ import annotations

import os
import tempfile
from pathlib import Path

import torch
from torchvision.models.detection.backbone_utils import resnet_fpn_backbone

SUPPORTED_ARCHS = ("resnet18", "resnet34", "resnet50")

# FPN maps keyed "0".."3" cover strides 4..32, i.e. pyramid levels 2..5.
FPN_MIN_LEVEL = 2
FPN_MAX_LEVEL = 5
FPN_CHANNELS = 256


def build_backbone(arch: str) -> torch.nn.Module:
    if arch not in SUPPORTED_ARCHS:
        raise ValueError(f"unsupported arch {arch!r}; choose from {SUPPORTED_ARCHS}")
    model = resnet_fpn_backbone(backbone_name=arch, weights=None)
    model.eval()
    return model


def init_checkpoint(arch: str, seed: int, path: Path | str) -> Path:
    """Write a seeded random-init checkpoint for ``arch`` and return it."""
    path = Path(path)
    torch.manual_seed(seed)
    model = build_backbone(arch)
    payload = {"arch": arch, "seed": seed, "state_dict": model.state_dict()}
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as handle:
            torch.save(payload, handle)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def load_backbone(arch: str, checkpoint: Path | str) -> torch.nn.Module:
    """Build ``arch`` and load the checkpoint into it.

    Raises:
        ValueError: unreadable/incompatible checkpoint or arch mismatch.
    """
    checkpoint = Path(checkpoint)
    try:
        payload = torch.load(checkpoint, map_location="cpu", weights_only=True)
    except Exception as exc:
        raise ValueError(f"unloadable checkpoint {checkpoint}: {exc}") from exc
    if not isinstance(payload, dict) or "state_dict" not in payload:
        raise ValueError(
            f"unloadable checkpoint {checkpoint}: missing state_dict"
        )
    stored_arch = payload.get("arch")
    if stored_arch is not None and stored_arch != arch:
        raise ValueError(
            f"checkpoint {checkpoint} was saved for arch {stored_arch!r}, "
            f"job requests {arch!r}"
        )
    model = build_backbone(arch)
    try:
        model.load_state_dict(payload["state_dict"])
    except Exception as exc:
        raise ValueError(
            f"unloadable checkpoint {checkpoint}: state dict mismatch: {exc}"
        ) from exc
    model.eval()
    return model
