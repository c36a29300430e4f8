"""Checkpoint format: one JSON manifest plus one flat little-endian float64
binary file per named array. Language-portable and diffable at the manifest
level."""

from __future__ import annotations

import json
import os

import numpy as np

from .errors import SchemaError

CHECKPOINT_SCHEMA = "waverl.checkpoint.v1"


def _filename(name):
    return name.replace("/", "_") + ".bin"


def save_checkpoint(directory, arrays, meta):
    """Write ``arrays`` (name -> ndarray) and JSON-serializable ``meta``."""
    os.makedirs(directory, exist_ok=True)
    entries = []
    for name in sorted(arrays):
        arr = np.ascontiguousarray(arrays[name], dtype="<f8")
        fname = _filename(name)
        arr.tofile(os.path.join(directory, fname))
        entries.append({"name": name, "shape": list(arr.shape), "file": fname})
    manifest = {"schema": CHECKPOINT_SCHEMA, "meta": meta, "arrays": entries}
    with open(os.path.join(directory, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)


def load_checkpoint(directory):
    """Returns (arrays, meta)."""
    with open(os.path.join(directory, "manifest.json")) as fh:
        manifest = json.load(fh)
    if manifest.get("schema") != CHECKPOINT_SCHEMA:
        raise SchemaError(
            f"checkpoint schema {manifest.get('schema')!r} does not match {CHECKPOINT_SCHEMA!r}"
        )
    arrays = {}
    for entry in manifest["arrays"]:
        raw = np.fromfile(os.path.join(directory, entry["file"]), dtype="<f8")
        arrays[entry["name"]] = raw.reshape(entry["shape"])
    return arrays, manifest["meta"]
