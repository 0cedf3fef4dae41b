"""Batch extraction of embeddings and predictions from a model.

The dataset is a directory of class subdirectories holding images. Classes
are indexed by sorted directory name and files iterate in sorted order, so
row order is a pure function of the directory contents. Inference runs in
eval mode under no_grad; nothing here is stochastic.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from .formats import write_labels, write_manifest, write_tensor
from .models import default_block_layers, load_model, pool_to_vectors, resolve_layers

IMAGE_EXTENSIONS = {".png", ".jpg", ".jpeg", ".bmp", ".webp"}


@dataclass
class ExtractionSpec:
    model: str
    data_dir: str
    out_dir: str
    layers: list[str] = field(default_factory=list)  # empty: infer block-final
    batch_size: int = 32
    image_size: int = 224
    weights: str | None = None
    seed: int = 0


def list_dataset(data_dir: str | Path) -> tuple[list[Path], list[int], list[str]]:
    """Sorted (files, labels, class_names) for a class-per-subdirectory tree."""
    root = Path(data_dir)
    if not root.is_dir():
        raise ValueError(f"dataset directory {root} does not exist")
    class_dirs = sorted(p for p in root.iterdir() if p.is_dir())
    if not class_dirs:
        raise ValueError(f"{root}: no class subdirectories")
    files: list[Path] = []
    labels: list[int] = []
    for class_index, class_dir in enumerate(class_dirs):
        images = sorted(
            p for p in class_dir.iterdir()
            if p.suffix.lower() in IMAGE_EXTENSIONS
        )
        files.extend(images)
        labels.extend([class_index] * len(images))
    if not files:
        raise ValueError(f"{root}: no images found")
    return files, labels, [d.name for d in class_dirs]


def load_batch(files: list[Path], image_size: int) -> torch.Tensor:
    arrays = []
    for path in files:
        with Image.open(path) as img:
            img = img.convert("RGB").resize(
                (image_size, image_size), Image.BILINEAR
            )
            arrays.append(np.asarray(img, dtype=np.float32) / 255.0)
    batch = np.stack(arrays).transpose(0, 3, 1, 2)
    return torch.from_numpy(batch)


def extract(spec: ExtractionSpec) -> Path:
    """Run the model over the dataset and write an HSTE manifest directory.

    Returns the manifest path. One tensor file per selected layer (pooled
    to [n, d]), one post-softmax predictions tensor, and a labels CSV.
    """
    model = load_model(spec.model, weights=spec.weights, seed=spec.seed)
    layer_names = spec.layers or default_block_layers(model)
    hooked = resolve_layers(model, layer_names)

    files, labels, _ = list_dataset(spec.data_dir)
    out_dir = Path(spec.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    captured: dict[str, torch.Tensor] = {}

    def hook(name):
        def fn(_module, _inputs, output):
            captured[name] = pool_to_vectors(output.detach(), name)
        return fn

    handles = [module.register_forward_hook(hook(n)) for n, module in hooked.items()]
    blocks: dict[str, list[np.ndarray]] = {n: [] for n in layer_names}
    prediction_rows: list[np.ndarray] = []
    try:
        with torch.no_grad():
            for start in range(0, len(files), spec.batch_size):
                batch = load_batch(
                    files[start : start + spec.batch_size], spec.image_size
                )
                logits = model(batch)
                if logits.ndim != 2:
                    raise ValueError(
                        f"model output of shape {tuple(logits.shape)} is not "
                        "a [n, classes] prediction"
                    )
                probs = torch.softmax(logits.double(), dim=1)
                prediction_rows.append(probs.numpy().astype(np.float32))
                for name in layer_names:
                    if name not in captured:
                        raise ValueError(
                            f"layer {name!r} produced no output during forward"
                        )
                    blocks[name].append(captured.pop(name).numpy())
    finally:
        for handle in handles:
            handle.remove()

    n = len(files)
    manifest_layers = []
    for i, name in enumerate(layer_names):
        stacked = np.concatenate(blocks[name], axis=0)
        filename = f"layer_{i:02d}.hste"
        write_tensor(out_dir / filename, stacked)
        manifest_layers.append((name, filename, stacked.shape[1]))

    predictions = np.concatenate(prediction_rows, axis=0)
    # Renormalize in float64 so the float32 rows sum to 1 within 1e-5.
    predictions = predictions / predictions.astype(np.float64).sum(
        axis=1, keepdims=True
    )
    write_tensor(out_dir / "predictions.hste", predictions.astype(np.float32))
    write_labels(out_dir / "labels.csv", labels)
    manifest_path = out_dir / "manifest.json"
    write_manifest(
        manifest_path,
        layers=manifest_layers,
        n=n,
        labels="labels.csv",
        predictions="predictions.hste",
    )
    return manifest_path
