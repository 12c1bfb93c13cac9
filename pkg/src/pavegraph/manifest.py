"""Run manifests: one JSON record per artifact-producing command."""

from __future__ import annotations

import hashlib
import json
import time
from pathlib import Path
from typing import Mapping, Sequence

from . import __version__

MANIFEST_NAME = "run_manifest.json"


def _digest(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(
    out_dir: str | Path,
    command: str,
    seed: int,
    config: Mapping,
    inputs: Sequence[str | Path],
    outputs: Sequence[str | Path],
) -> Path:
    """Write the manifest next to the outputs; returns its path.

    Everything except ``created_at`` is a pure function of inputs and seed,
    so repeated runs differ only in the timestamp.
    """
    out_dir = Path(out_dir)
    manifest = {
        "command": command,
        "toolkit_version": __version__,
        "seed": seed,
        "config": dict(sorted(config.items())),
        "inputs": [
            {"path": str(p), "sha256": _digest(Path(p))} for p in sorted(map(str, inputs))
        ],
        "outputs": sorted(str(Path(p).name) for p in outputs),
        "created_at": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
    }
    path = out_dir / MANIFEST_NAME
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path
