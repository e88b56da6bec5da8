"""Checkpoint container: JSON manifest + concatenated named tensor records.

Layout: magic, u64 manifest length, manifest JSON (canonical key order),
then for each name listed in the manifest a length-prefixed name followed
by one tensor record (see ``svlab.tensor.write_tensor``). Canonical
ordering makes checkpoints byte-reproducible.
"""

from __future__ import annotations

import json
import struct

from .tensor import read_tensor, write_tensor

MAGIC = b"SVCK0001"


def write_checkpoint(path, manifest, tensors):
    """``tensors`` is an ordered list of (name, Tensor) pairs."""
    manifest = dict(manifest)
    manifest["tensors"] = [name for name, _ in tensors]
    blob = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for name, t in tensors:
            enc = name.encode()
            fh.write(struct.pack("<Q", len(enc)))
            fh.write(enc)
            write_tensor(fh, t)


def read_checkpoint(path):
    with open(path, "rb") as fh:
        if fh.read(len(MAGIC)) != MAGIC:
            raise IOError(f"{path}: not a checkpoint file (bad magic)")
        (mlen,) = struct.unpack("<Q", fh.read(8))
        manifest = json.loads(fh.read(mlen).decode())
        tensors = {}
        for name in manifest["tensors"]:
            (nlen,) = struct.unpack("<Q", fh.read(8))
            stored = fh.read(nlen).decode()
            if stored != name:
                raise IOError(f"{path}: tensor name mismatch ({stored!r} != {name!r})")
            tensors[name] = read_tensor(fh)
    return manifest, tensors
