"""Hook a classifier's final convolutional layer and dump its activations.

The exporter accepts any model whose classification head is a single
linear layer fed by global average pooling. It registers a forward hook on
the named spatial layer, runs the images in batches, and writes pooled
vectors, spatial maps, the head weight matrix, predictions, and metadata in
the filterlens exchange layout (binary tensors plus a JSON manifest).

Spatial maps are exported post-activation (rectified) so pooled values
satisfy the format's nonnegativity requirement; predictions always come
from the model's own forward pass. Keypoints are supplied in original
image pixels and are re-expressed in the cropped, resized pixel space the
manifest declares.
"""

from __future__ import annotations

import json
import logging
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from filterlens import write_tensor

logger = logging.getLogger(__name__)

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)


class ArchitectureMismatch(ValueError):
    """Raised when the model head is not a single [classes x filters] linear layer."""


@dataclass
class ImageSpec:
    image_id: str
    path: Path
    true_class: int
    bbox: tuple[float, float, float, float] | None = None


@dataclass
class ExportConfig:
    """Everything the exporter needs; mirrors the CLI flags one to one."""

    model: torch.nn.Module
    class_names: list[str]
    images: list[ImageSpec]
    out_dir: Path
    layer: str                      # named module producing [B, n, H, W]
    head: str = "fc"                # attribute path of the linear head
    input_size: int = 224
    normalize: bool = True
    rectify: bool = True
    batch_size: int = 16
    device: str = "cpu"
    keypoints: dict[str, list[dict]] = field(default_factory=dict)


def load_image_listing(path) -> tuple[list[str], list[ImageSpec]]:
    """Read the exporter's image listing JSON.

    Format: {"class_names": [...], "images": [{"id", "path", "true_class",
    "bbox"?: [x0, y0, x1, y1]}]}; image paths are relative to the listing.
    """
    path = Path(path)
    payload = json.loads(path.read_text(encoding="utf-8"))
    class_names = [str(name) for name in payload["class_names"]]
    specs = []
    for entry in payload["images"]:
        bbox = entry.get("bbox")
        specs.append(
            ImageSpec(
                image_id=str(entry["id"]),
                path=path.parent / entry["path"],
                true_class=int(entry["true_class"]),
                bbox=tuple(float(v) for v in bbox) if bbox else None,
            )
        )
    return class_names, specs


def load_keypoint_file(path) -> dict[str, list[dict]]:
    """Read {"image_id": [{"name", "x", "y", "visible"?}, ...]} (original pixels)."""
    return json.loads(Path(path).read_text(encoding="utf-8"))


def resolve_module(model: torch.nn.Module, dotted: str) -> torch.nn.Module:
    module = dict(model.named_modules()).get(dotted)
    if module is None:
        raise ArchitectureMismatch(f"model has no module named {dotted!r}")
    return module


def _check_head(model: torch.nn.Module, head_name: str, n_classes: int) -> torch.nn.Linear:
    head = resolve_module(model, head_name)
    if not isinstance(head, torch.nn.Linear):
        raise ArchitectureMismatch(
            f"head {head_name!r} must be a single linear layer, got {type(head).__name__}"
        )
    if head.out_features != n_classes:
        raise ArchitectureMismatch(
            f"head produces {head.out_features} classes, listing names {n_classes}"
        )
    return head


def _atomic_write(path: Path, data: bytes) -> None:
    fd, tmp_name = tempfile.mkstemp(dir=path.parent, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(data)
        os.replace(tmp_name, path)
    except BaseException:
        os.unlink(tmp_name)
        raise


def _prepare(spec: ImageSpec, config: ExportConfig) -> tuple[torch.Tensor, dict]:
    """Load, crop, resize, and normalize one image.

    Returns the CHW tensor plus the transform needed to carry keypoints
    from original pixels into the exported pixel space.
    """
    with Image.open(spec.path) as img:
        img = img.convert("RGB")
        if spec.bbox is not None:
            x0, y0, x1, y1 = spec.bbox
            img = img.crop((x0, y0, x1, y1))
            offset = (x0, y0)
            crop_size = (x1 - x0, y1 - y0)
        else:
            offset = (0.0, 0.0)
            crop_size = img.size
        img = img.resize((config.input_size, config.input_size), Image.BILINEAR)
        array = np.asarray(img, dtype=np.float32) / 255.0
    tensor = torch.from_numpy(array).permute(2, 0, 1)
    if config.normalize:
        mean = torch.tensor(IMAGENET_MEAN).view(3, 1, 1)
        std = torch.tensor(IMAGENET_STD).view(3, 1, 1)
        tensor = (tensor - mean) / std
    transform = {
        "offset": offset,
        "scale": (config.input_size / crop_size[0], config.input_size / crop_size[1]),
    }
    return tensor, transform


def _map_keypoints(raw: list[dict], transform: dict, size: int) -> list[dict]:
    ox, oy = transform["offset"]
    sx, sy = transform["scale"]
    mapped = []
    for entry in raw:
        x = (float(entry["x"]) - ox) * sx
        y = (float(entry["y"]) - oy) * sy
        visible = bool(entry.get("visible", True))
        # a keypoint cropped away is exported but marked invisible
        if not (0 <= x < size and 0 <= y < size):
            visible = False
        mapped.append({"name": str(entry["name"]), "x": x, "y": y, "visible": visible})
    return mapped


def export(config: ExportConfig) -> Path:
    """Run the model over all listed images and write the exchange layout.

    Returns the manifest path. All tensor files are written atomically
    (temp file + rename), the manifest last.
    """
    if not config.images:
        raise ValueError("image listing is empty")
    seen = set()
    for spec in config.images:
        if spec.image_id in seen:
            raise ValueError(f"duplicate image id in listing: {spec.image_id!r}")
        seen.add(spec.image_id)
        if not 0 <= spec.true_class < len(config.class_names):
            raise ValueError(f"image {spec.image_id!r}: true_class out of range")

    device = torch.device(config.device)
    model = config.model.to(device).eval()
    head = _check_head(model, config.head, len(config.class_names))
    layer = resolve_module(model, config.layer)

    captured: list[torch.Tensor] = []

    def hook(_module, _inputs, output):
        captured.append(output.detach())

    out_dir = Path(config.out_dir)
    (out_dir / "tensors").mkdir(parents=True, exist_ok=True)

    n_filters = head.in_features
    weights = head.weight.detach().cpu().to(torch.float32).numpy()
    _atomic_write(out_dir / "weights.ftns", write_tensor(weights))

    entries = []
    handle = layer.register_forward_hook(hook)
    try:
        with torch.no_grad():
            for start in range(0, len(config.images), config.batch_size):
                batch_specs = config.images[start : start + config.batch_size]
                prepared = [_prepare(spec, config) for spec in batch_specs]
                batch = torch.stack([tensor for tensor, _ in prepared]).to(device)
                captured.clear()
                logits = model(batch)
                if len(captured) != 1:
                    raise ArchitectureMismatch(
                        f"layer {config.layer!r} fired {len(captured)} times per forward"
                    )
                spatial = captured[0].cpu().to(torch.float32)
                if spatial.ndim != 4 or spatial.shape[1] != n_filters:
                    raise ArchitectureMismatch(
                        f"layer {config.layer!r} produced shape "
                        f"{tuple(spatial.shape)}, expected [B, {n_filters}, H, W]"
                    )
                if config.rectify:
                    spatial = torch.clamp(spatial, min=0.0)
                elif bool((spatial < 0).any()):
                    raise ValueError(
                        "spatial maps contain negatives; enable rectification or "
                        "hook a post-activation layer"
                    )
                pooled = spatial.mean(dim=(2, 3))
                predictions = logits.argmax(dim=1).cpu()

                for row, (spec, (_, transform)) in enumerate(zip(batch_specs, prepared)):
                    rid = spec.image_id
                    pooled_rel = f"tensors/{rid}.pooled.ftns"
                    spatial_rel = f"tensors/{rid}.spatial.ftns"
                    _atomic_write(
                        out_dir / pooled_rel, write_tensor(pooled[row].numpy())
                    )
                    _atomic_write(
                        out_dir / spatial_rel, write_tensor(spatial[row].numpy())
                    )
                    entry = {
                        "id": rid,
                        "pooled_file": pooled_rel,
                        "spatial_file": spatial_rel,
                        "image_size": [config.input_size, config.input_size],
                        "true_class": spec.true_class,
                        "predicted_class": int(predictions[row]),
                    }
                    raw_keypoints = config.keypoints.get(rid)
                    if raw_keypoints:
                        entry["keypoints"] = _map_keypoints(
                            raw_keypoints, transform, config.input_size
                        )
                    entries.append(entry)
                logger.info("exported %d/%d images", len(entries), len(config.images))
    finally:
        handle.remove()

    manifest = {
        "version": 1,
        "n_filters": n_filters,
        "class_names": config.class_names,
        "weights_file": "weights.ftns",
        "images": entries,
    }
    manifest_path = out_dir / "manifest.json"
    _atomic_write(manifest_path, (json.dumps(manifest, indent=2) + "\n").encode())
    return manifest_path


def load_model(arch: str | None, checkpoint: str | None) -> torch.nn.Module:
    """Build the model from a torchvision name or a pickled checkpoint."""
    if (arch is None) == (checkpoint is None):
        raise ValueError("pass exactly one of --arch or --checkpoint")
    if checkpoint is not None:
        # full-module pickle: only load checkpoints you trust
        model = torch.load(checkpoint, map_location="cpu", weights_only=False)
        if not isinstance(model, torch.nn.Module):
            raise ValueError("checkpoint does not contain a torch.nn.Module")
        return model
    import torchvision.models

    factory = getattr(torchvision.models, arch, None)
    if factory is None:
        raise ValueError(f"unknown torchvision architecture: {arch!r}")
    return factory(weights=None)
