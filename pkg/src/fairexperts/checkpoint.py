"""Versioned JSON checkpoints for trained models.

The container stores layer shapes, float64 parameters (shortest
round-trip decimal encoding, so save/load is bit-exact), the model kind,
and the seed the model was trained from. Training logs are exported
separately as CSV and are not part of the checkpoint.
"""

from __future__ import annotations

import json

from .data import DataError
from .losses import VirtualCenters
from .net import Layer, Mlp
from .training import DecoupledModel, ErmModel, ExpertsModel

FORMAT_VERSION = 1


def mlp_to_dict(mlp: Mlp) -> dict:
    return {
        "layers": [
            {
                "weight": layer.weight.tolist(),
                "bias": layer.bias.tolist(),
                "activation": layer.activation,
            }
            for layer in mlp.layers
        ]
    }


def mlp_from_dict(payload: dict) -> Mlp:
    return Mlp(
        [
            Layer(entry["weight"], entry["bias"], entry["activation"])
            for entry in payload["layers"]
        ]
    )


def save_checkpoint(model, path: str) -> None:
    payload: dict = {
        "format_version": FORMAT_VERSION,
        "seed_lineage": {"seed": model.seed, "generator": "PCG64"},
    }
    if isinstance(model, ErmModel):
        payload["kind"] = "erm"
        payload["backbone"] = mlp_to_dict(model.backbone)
        payload["head"] = mlp_to_dict(model.head)
    elif isinstance(model, ExpertsModel):
        payload["kind"] = "experts"
        payload["backbone"] = mlp_to_dict(model.backbone)
        payload["discriminator"] = mlp_to_dict(model.discriminator)
        payload["centers"] = model.centers.vectors.tolist()
        payload["heads"] = [mlp_to_dict(h) for h in model.heads]
    elif isinstance(model, DecoupledModel):
        payload["kind"] = "decoupled"
        payload["backbone"] = mlp_to_dict(model.backbone)
        payload["heads"] = [mlp_to_dict(h) for h in model.heads]
    else:
        raise TypeError(f"cannot checkpoint {type(model).__name__}")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")


def load_checkpoint(path: str) -> ErmModel | ExpertsModel | DecoupledModel:
    try:
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
    except FileNotFoundError:
        raise DataError(f"checkpoint {path!r} does not exist") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"checkpoint {path!r} is not valid JSON: {exc}") from None
    version = payload.get("format_version")
    if version != FORMAT_VERSION:
        raise DataError(f"checkpoint {path!r} has unsupported format version {version!r}")
    seed = payload.get("seed_lineage", {}).get("seed")
    kind = payload.get("kind")
    try:
        if kind == "erm":
            return ErmModel(
                mlp_from_dict(payload["backbone"]), mlp_from_dict(payload["head"]), seed=seed
            )
        if kind == "experts":
            return ExpertsModel(
                mlp_from_dict(payload["backbone"]),
                mlp_from_dict(payload["discriminator"]),
                VirtualCenters(payload["centers"]),
                [mlp_from_dict(h) for h in payload["heads"]],
                seed=seed,
            )
        if kind == "decoupled":
            return DecoupledModel(
                mlp_from_dict(payload["backbone"]),
                [mlp_from_dict(h) for h in payload["heads"]],
                seed=seed,
            )
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"checkpoint {path!r} is malformed: {exc}") from None
    raise DataError(f"checkpoint {path!r} has unknown kind {kind!r}")
