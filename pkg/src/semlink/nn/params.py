"""Named parameter collections with a round-trip stable binary container.

File layout: magic ``PSET1`` then a count, then per record a UTF-8
length-prefixed name, the rank, the dims (uint32 LE) and the values as
little-endian float64 in row-major order.
"""

from __future__ import annotations

import struct

import numpy as np

from .tensor import Tensor

_MAGIC = b"PSET1"


class ParamSet:
    """Ordered name -> Tensor mapping; names are unique, shapes fixed."""

    def __init__(self):
        self._params: dict[str, Tensor] = {}

    def add(self, name: str, data) -> Tensor:
        if name in self._params:
            raise ValueError(f"duplicate parameter name {name!r}")
        t = Tensor(np.asarray(data, dtype=np.float64))
        self._params[name] = t
        return t

    def add_shared(self, name: str, tensor: Tensor):
        """Register an existing Tensor (for optimizers updating in place)."""
        if name in self._params:
            raise ValueError(f"duplicate parameter name {name!r}")
        self._params[name] = tensor

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self):
        return len(self._params)

    def names(self):
        return list(self._params)

    def items(self):
        return self._params.items()

    def tensors(self):
        return list(self._params.values())

    def num_scalars(self) -> int:
        return sum(t.data.size for t in self._params.values())

    def subset(self, prefix: str) -> dict[str, Tensor]:
        return {k: v for k, v in self._params.items() if k.startswith(prefix)}

    def copy_values_from(self, other: "ParamSet"):
        for name, t in self._params.items():
            t.data[...] = other[name].data

    def save(self, path):
        with open(path, "wb") as fh:
            fh.write(_MAGIC)
            fh.write(struct.pack("<I", len(self._params)))
            for name, t in self._params.items():
                raw = name.encode("utf-8")
                fh.write(struct.pack("<H", len(raw)))
                fh.write(raw)
                fh.write(struct.pack("<B", t.data.ndim))
                for d in t.data.shape:
                    fh.write(struct.pack("<I", d))
                fh.write(np.ascontiguousarray(t.data, dtype="<f8").tobytes())

    @classmethod
    def load(cls, path) -> "ParamSet":
        ps = cls()
        with open(path, "rb") as fh:
            magic = fh.read(len(_MAGIC))
            if magic != _MAGIC:
                raise ValueError(f"{path}: not a parameter container (magic {magic!r})")
            (count,) = struct.unpack("<I", fh.read(4))
            for _ in range(count):
                (nlen,) = struct.unpack("<H", fh.read(2))
                name = fh.read(nlen).decode("utf-8")
                (ndim,) = struct.unpack("<B", fh.read(1))
                shape = tuple(struct.unpack("<I", fh.read(4))[0] for _ in range(ndim))
                n = int(np.prod(shape)) if shape else 1
                buf = fh.read(8 * n)
                if len(buf) != 8 * n:
                    raise ValueError(f"{path}: truncated record for {name!r}")
                data = np.frombuffer(buf, dtype="<f8").reshape(shape).astype(np.float64)
                ps.add(name, data)
        return ps
