"""Checkpoint container: model parameters + standardizer in one npz archive.

The archive is self-describing (variant, dimensions, seed, feature names in
a JSON metadata entry) and the parameter round trip is bit-exact: float64
arrays are stored raw.
"""

from __future__ import annotations

import json
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .dataset import Standardizer
from .model import ModelConfig, ModelParams, init_params


class CheckpointError(ValueError):
    pass


FORMAT_VERSION = 1


def save_checkpoint(
    path: str | Path,
    params: ModelParams,
    standardizer: Standardizer,
    feature_names: tuple[str, ...] = (),
) -> None:
    meta = {
        "format_version": FORMAT_VERSION,
        "variant": params.variant,
        "f_in": params.f_in,
        "t0": params.t0,
        "seed": params.seed,
        "model_config": asdict(params.config),
        "feature_names": list(feature_names),
    }
    arrays = {f"param/{name}": arr for name, arr in params.tensor_dict().items()}
    arrays["std/feature_means"] = np.asarray(standardizer.feature_means)
    arrays["std/feature_stds"] = np.asarray(standardizer.feature_stds)
    arrays["std/target"] = np.array([standardizer.target_mean, standardizer.target_std])
    arrays["meta"] = np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8)
    np.savez(path, **arrays)


def load_checkpoint(path: str | Path) -> tuple[ModelParams, Standardizer, dict]:
    with np.load(path) as archive:
        if "meta" not in archive:
            raise CheckpointError(f"{path} is not a model checkpoint")
        meta = json.loads(archive["meta"].tobytes().decode())
        if meta.get("format_version") != FORMAT_VERSION:
            raise CheckpointError(f"unsupported checkpoint version {meta.get('format_version')}")
        params = init_params(
            meta["variant"],
            meta["f_in"],
            meta["t0"],
            ModelConfig(**meta["model_config"]),
            seed=meta["seed"],
        )
        tensors = {
            key[len("param/") :]: archive[key] for key in archive.files if key.startswith("param/")
        }
        params.set_tensors(tensors)
        target = archive["std/target"]
        standardizer = Standardizer(
            feature_means=archive["std/feature_means"],
            feature_stds=archive["std/feature_stds"],
            target_mean=float(target[0]),
            target_std=float(target[1]),
        )
    return params, standardizer, meta
