"""On-disk attention store: binary tensor files plus a JSON index.

Tensor file layout: a 16-byte header — magic ``ATT1``, uint32 rank,
uint32 dims[2], all little-endian — followed by the row-major float32
payload.  Rank-1 tensors store ``dims[1] = 1``.  The index maps each
(timestep, layer_id, head, kind, resolution) to its four tensor files.
"""

from __future__ import annotations

import json
import re
import struct
from pathlib import Path

import numpy as np
import torch

from .attention import AttentionRecord, AttentionStore

MAGIC = b"ATT1"
INDEX_NAME = "index.json"
FORMAT_ID = "attention-store/v1"


def write_tensor(path: Path, tensor: torch.Tensor) -> None:
    arr = np.ascontiguousarray(tensor.detach().numpy(), dtype="<f4")
    if arr.ndim == 1:
        dims = (arr.shape[0], 1)
        rank = 1
    elif arr.ndim == 2:
        dims = arr.shape
        rank = 2
    else:
        raise ValueError(f"only rank-1/2 tensors are serialized, got rank {arr.ndim}")
    header = MAGIC + struct.pack("<III", rank, dims[0], dims[1])
    path.write_bytes(header + arr.tobytes())


def read_tensor(path: Path) -> torch.Tensor:
    raw = path.read_bytes()
    if raw[:4] != MAGIC:
        raise ValueError(f"{path}: bad magic {raw[:4]!r}, expected {MAGIC!r}")
    rank, d0, d1 = struct.unpack("<III", raw[4:16])
    arr = np.frombuffer(raw[16:], dtype="<f4")
    if rank == 1:
        arr = arr.reshape(d0)
    else:
        arr = arr.reshape(d0, d1)
    return torch.from_numpy(arr.copy())


def _slug(layer_id: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]+", "-", layer_id)


def save_store(store: AttentionStore, out_dir: Path | str) -> Path:
    """Serialize every retained record under ``out_dir``; returns the index path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for key in sorted(store.records):
        rec = store.records[key]
        stem = f"t{rec.timestep:04d}_{_slug(rec.layer_id)}_h{rec.head}_{rec.kind}"
        files = {}
        for name, tensor in (
            ("map", rec.map),
            ("query", rec.query),
            ("key", rec.key),
            ("value", rec.value),
        ):
            rel = f"{stem}.{name}.att1"
            write_tensor(out_dir / rel, tensor)
            files[name] = rel
        entries.append(
            {
                "timestep": rec.timestep,
                "layer_id": rec.layer_id,
                "head": rec.head,
                "kind": rec.kind,
                "resolution": rec.resolution,
                "files": files,
            }
        )
    index_path = out_dir / INDEX_NAME
    index_path.write_text(
        json.dumps({"format": FORMAT_ID, "records": entries}, indent=2, sort_keys=True)
        + "\n",
        encoding="utf-8",
    )
    return index_path


def load_store(store_dir: Path | str) -> AttentionStore:
    """Load a serialized store; records round-trip bitwise."""
    store_dir = Path(store_dir)
    index = json.loads((store_dir / INDEX_NAME).read_text(encoding="utf-8"))
    if index.get("format") != FORMAT_ID:
        raise ValueError(f"unrecognized store format {index.get('format')!r}")
    store = AttentionStore(copy_on_insert=False)
    for entry in index["records"]:
        files = entry["files"]
        rec = AttentionRecord(
            layer_id=entry["layer_id"],
            kind=entry["kind"],
            resolution=entry["resolution"],
            timestep=entry["timestep"],
            head=entry["head"],
            query=read_tensor(store_dir / files["query"]),
            key=read_tensor(store_dir / files["key"]),
            value=read_tensor(store_dir / files["value"]),
            map=read_tensor(store_dir / files["map"]),
        )
        store.record(rec)
    return store
