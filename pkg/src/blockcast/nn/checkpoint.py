"""Named-tensor checkpoint format.

Layout (little-endian): magic "NNP1", u32 tensor count, then per tensor:
u32 name length, utf-8 name, u32 rank, rank * u32 dims, f32 payload in
C order.
"""

import struct

import numpy as np

from ..errors import FormatError


def save_params(path, named_tensors) -> None:
    """Write an ordered mapping of name -> ndarray as f32."""
    with open(path, "wb") as f:
        f.write(b"NNP1")
        f.write(struct.pack("<I", len(named_tensors)))
        for name, tensor in named_tensors.items():
            raw = name.encode("utf-8")
            arr = np.asarray(tensor, dtype="<f4")
            f.write(struct.pack("<I", len(raw)))
            f.write(raw)
            f.write(struct.pack("<I", arr.ndim))
            f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            f.write(arr.tobytes())


def load_params(path) -> dict:
    """Read a checkpoint back as an ordered dict of float64 arrays."""
    out = {}
    with open(path, "rb") as f:
        if f.read(4) != b"NNP1":
            raise FormatError(f"{path} is not a parameter checkpoint")
        (count,) = struct.unpack("<I", f.read(4))
        for _ in range(count):
            (name_len,) = struct.unpack("<I", f.read(4))
            name = f.read(name_len).decode("utf-8")
            (rank,) = struct.unpack("<I", f.read(4))
            dims = struct.unpack(f"<{rank}I", f.read(4 * rank))
            n = int(np.prod(dims)) if rank else 1
            data = np.frombuffer(f.read(n * 4), dtype="<f4")
            if data.size != n:
                raise FormatError(f"truncated tensor {name!r} in {path}")
            out[name] = data.reshape(dims).astype(np.float64)
    return out
