"""Model loading and layer resolution for extraction.

A model identifier is either a path to a saved PyTorch module (``.pt`` /
``.pth``, full pickled module or TorchScript) or the name of a torchvision
architecture. Named architectures are built with random initialization
unless a state-dict path is supplied; pretrained weights are the caller's
responsibility since extraction must work offline.
"""

from __future__ import annotations

import re
from pathlib import Path

import torch
from torch import nn


def load_model(
    model_id: str, weights: str | None = None, seed: int = 0
) -> nn.Module:
    path = Path(model_id)
    if path.suffix in (".pt", ".pth") and path.exists():
        try:
            model = torch.load(str(path), map_location="cpu", weights_only=False)
        except (RuntimeError, ValueError):
            model = torch.jit.load(str(path), map_location="cpu")
        if not isinstance(model, (nn.Module, torch.jit.ScriptModule)):
            raise ValueError(f"{model_id}: file does not contain a torch module")
    else:
        import torchvision.models

        available = torchvision.models.list_models()
        if model_id not in available:
            raise ValueError(
                f"unknown model {model_id!r}: expected a .pt/.pth file or a "
                "torchvision architecture name"
            )
        # Seeded construction keeps unweighted models reproducible run to run.
        torch.manual_seed(seed)
        model = torchvision.models.get_model(model_id, weights=None)
        if weights:
            state = torch.load(weights, map_location="cpu", weights_only=True)
            model.load_state_dict(state)
    model.eval()
    return model


def resolve_layers(model: nn.Module, names: list[str]) -> dict[str, nn.Module]:
    """Map requested layer names to modules, or fail listing what exists."""
    modules = dict(model.named_modules())
    missing = [n for n in names if n not in modules]
    if missing:
        candidates = sorted(n for n in modules if n)
        raise ValueError(
            f"layer(s) {missing} not found; available layers: {candidates}"
        )
    return {n: modules[n] for n in names}


def default_block_layers(model: nn.Module) -> list[str]:
    """Block-final layers for architectures with numbered top-level blocks.

    Picks top-level children named like ``layer<k>`` (ResNet convention) and
    drops the first block, which mostly carries low-level texture. Models
    without that structure need an explicit layer list.
    """
    blocks = [
        name for name, _ in model.named_children() if re.fullmatch(r"layer\d+", name)
    ]
    if len(blocks) < 2:
        raise ValueError(
            "cannot infer block-final layers for this architecture; "
            "pass --layers explicitly"
        )
    blocks.sort(key=lambda s: int(s[5:]))
    return blocks[1:]


def pool_to_vectors(output: torch.Tensor, layer: str) -> torch.Tensor:
    """Reduce a batch of layer outputs to [batch, channels] by spatial mean."""
    if output.ndim == 4:  # conv maps [B, C, H, W]
        return output.mean(dim=(2, 3))
    if output.ndim == 3:  # token sequences [B, T, C]
        return output.mean(dim=1)
    if output.ndim == 2:
        return output
    raise ValueError(
        f"layer {layer!r} output of shape {tuple(output.shape)} is not "
        "poolable to [n, d]"
    )
