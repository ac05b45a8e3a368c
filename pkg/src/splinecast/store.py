"""On-disk model store: manifest.json plus level-N/i_j_k.mfa model files."""

from __future__ import annotations

from pathlib import Path

from . import model
from .errors import FormatError
from .partition import BlockAddress, LODManifest

__all__ = ["write_store", "load_model", "load_model_bytes", "store_size_bytes"]


def write_store(store_root, manifest: LODManifest, models: dict) -> Path:
    """Serialize every model into the directory tree and save the manifest.

    Fills each manifest entry's path and byte size as it writes.
    """
    root = Path(store_root)
    for addr in sorted(models):
        entry = manifest.entries[addr]
        blob = model.serialize(models[addr])
        rel = addr.file_name
        target = root / rel
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_bytes(blob)
        entry.path = rel
        entry.nbytes = len(blob)
    manifest.save(root)
    return root


def load_model_bytes(store_root, manifest: LODManifest, addr: BlockAddress) -> bytes:
    entry = manifest.entries.get(addr)
    if entry is None or not entry.path:
        raise FormatError(f"manifest has no model file for block {addr.key}")
    path = Path(store_root) / entry.path
    if not path.exists():
        raise FormatError(f"missing model file {path}")
    return path.read_bytes()


def load_model(store_root, manifest: LODManifest, addr: BlockAddress) -> model.MicroModel:
    """Read one block's model file using the manifest's ncp and extent."""
    entry = manifest.entries[addr]
    data = load_model_bytes(store_root, manifest, addr)
    return model.deserialize(data, ncp=entry.ncp, extent=entry.extent, lod=addr.lod)


def store_size_bytes(store_root, manifest: LODManifest) -> int:
    """Actual bytes of all model files on disk (excludes the manifest)."""
    root = Path(store_root)
    return sum((root / e.path).stat().st_size for e in manifest.entries.values() if e.path)
