"""Little-endian binary readers/writers shared by the artifact file formats.

Layout conventions: fixed-width unsigned ints, length-prefixed UTF-8 strings,
and tensors carried as (dtype code, rank, dims..., raw bytes). Every format
starts with a 4-byte magic and a u32 format version; short reads raise the
error class the caller hands in, so truncation surfaces as that format's
error category.
"""

from __future__ import annotations

import io
import json
import struct

import numpy as np

from .errors import BinaryFormatError

Array = np.ndarray

_DTYPE_CODES = {np.dtype("float32"): 1, np.dtype("float64"): 2,
                np.dtype("int64"): 3, np.dtype("uint8"): 4, np.dtype("uint64"): 5}
_CODE_DTYPES = {v: k for k, v in _DTYPE_CODES.items()}


class Writer:
    def __init__(self):
        self._buf = io.BytesIO()

    def magic(self, tag: bytes, version: int) -> None:
        assert len(tag) == 4
        self._buf.write(tag)
        self.u32(version)

    def u8(self, v: int) -> None:
        self._buf.write(struct.pack("<B", v))

    def u16(self, v: int) -> None:
        self._buf.write(struct.pack("<H", v))

    def u32(self, v: int) -> None:
        self._buf.write(struct.pack("<I", v))

    def u64(self, v: int) -> None:
        self._buf.write(struct.pack("<Q", v))

    def f64(self, v: float) -> None:
        self._buf.write(struct.pack("<d", v))

    def raw(self, b: bytes) -> None:
        self._buf.write(b)

    def string(self, s: str, width: int = 32) -> None:
        b = s.encode("utf-8")
        if width == 16:
            self.u16(len(b))
        else:
            self.u32(len(b))
        self._buf.write(b)

    def json_obj(self, obj) -> None:
        self.string(json.dumps(obj, sort_keys=True))

    def array(self, a: Array) -> None:
        a = np.ascontiguousarray(a)
        code = _DTYPE_CODES.get(a.dtype)
        if code is None:
            raise BinaryFormatError(f"unsupported array dtype {a.dtype}")
        self.u8(code)
        self.u8(a.ndim)
        for d in a.shape:
            self.u32(d)
        self._buf.write(a.astype(a.dtype.newbyteorder("<"), copy=False).tobytes())

    def named_arrays(self, arrays: dict[str, Array]) -> None:
        self.u32(len(arrays))
        for name in sorted(arrays):
            self.string(name)
            self.array(arrays[name])

    def getvalue(self) -> bytes:
        return self._buf.getvalue()


class Reader:
    def __init__(self, data: bytes, error_cls: type[BinaryFormatError], what: str):
        self._buf = io.BytesIO(data)
        self._err = error_cls
        self._what = what

    def _take(self, n: int) -> bytes:
        b = self._buf.read(n)
        if len(b) != n:
            raise self._err(f"truncated {self._what}: wanted {n} more bytes, got {len(b)}")
        return b

    def magic(self, tag: bytes, version: int) -> None:
        got = self._take(4)
        if got != tag:
            raise self._err(f"bad magic for {self._what}: expected {tag!r}, got {got!r}")
        ver = self.u32()
        if ver != version:
            raise self._err(f"unsupported {self._what} format version {ver} (expected {version})")

    def u8(self) -> int:
        return struct.unpack("<B", self._take(1))[0]

    def u16(self) -> int:
        return struct.unpack("<H", self._take(2))[0]

    def u32(self) -> int:
        return struct.unpack("<I", self._take(4))[0]

    def u64(self) -> int:
        return struct.unpack("<Q", self._take(8))[0]

    def f64(self) -> float:
        return struct.unpack("<d", self._take(8))[0]

    def string(self, width: int = 32) -> str:
        n = self.u16() if width == 16 else self.u32()
        return self._take(n).decode("utf-8")

    def json_obj(self):
        return json.loads(self.string())

    def array(self) -> Array:
        code = self.u8()
        dtype = _CODE_DTYPES.get(code)
        if dtype is None:
            raise self._err(f"unknown array dtype code {code} in {self._what}")
        ndim = self.u8()
        shape = tuple(self.u32() for _ in range(ndim))
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        raw = self._take(count * dtype.itemsize)
        return np.frombuffer(raw, dtype=dtype.newbyteorder("<")).astype(dtype).reshape(shape)

    def named_arrays(self) -> dict[str, Array]:
        n = self.u32()
        out: dict[str, Array] = {}
        for _ in range(n):
            name = self.string()
            out[name] = self.array()
        return out

    def expect_eof(self) -> None:
        if self._buf.read(1):
            raise self._err(f"trailing bytes after {self._what}")
