"""Binary checkpoints.

Layout: 4-byte magic, u32 LE version, 32-byte taxonomy digest, u32 tensor
count, then per tensor: u16 name length + UTF-8 name, u8 rank, u32 dims,
float32 LE payload in C order. Saving the same tensors twice produces
identical bytes.
"""

from __future__ import annotations

import struct

import numpy as np

from .errors import CheckpointError

VERSION = 1


def write_checkpoint(path, magic, digest, named_tensors):
    if len(magic) != 4 or len(digest) != 32:
        raise CheckpointError(0, f"bad magic/digest lengths {len(magic)}/{len(digest)}")
    with open(path, "wb") as fh:
        fh.write(magic)
        fh.write(struct.pack("<I", VERSION))
        fh.write(digest)
        fh.write(struct.pack("<I", len(named_tensors)))
        for name, tensor in named_tensors:
            encoded = name.encode("utf-8")
            data = np.ascontiguousarray(tensor.data, dtype=np.float32)
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<B", data.ndim))
            fh.write(struct.pack(f"<{data.ndim}I", *data.shape))
            fh.write(data.tobytes())


def read_checkpoint(path, magic):
    """Returns (digest, ordered dict name -> float32 array)."""
    with open(path, "rb") as fh:
        blob = fh.read()
    pos = 0

    def take(n, what):
        nonlocal pos
        if pos + n > len(blob):
            raise CheckpointError(pos, f"truncated while reading {what}")
        chunk = blob[pos : pos + n]
        pos += n
        return chunk

    got_magic = take(4, "magic")
    if got_magic != magic:
        raise CheckpointError(0, f"bad magic {got_magic!r}, expected {magic!r}")
    (version,) = struct.unpack("<I", take(4, "version"))
    if version != VERSION:
        raise CheckpointError(4, f"unsupported version {version}")
    digest = take(32, "taxonomy digest")
    (count,) = struct.unpack("<I", take(4, "tensor count"))
    tensors = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<H", take(2, "name length"))
        name = take(name_len, "name").decode("utf-8")
        (rank,) = struct.unpack("<B", take(1, "rank"))
        dims = struct.unpack(f"<{rank}I", take(4 * rank, "dims"))
        n = int(np.prod(dims)) if rank else 1
        payload = take(4 * n, f"payload of {name}")
        tensors[name] = np.frombuffer(payload, dtype="<f4").reshape(dims).copy()
    if pos != len(blob):
        raise CheckpointError(pos, f"{len(blob) - pos} trailing bytes")
    return digest, tensors
