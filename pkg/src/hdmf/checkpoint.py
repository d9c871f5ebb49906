"""Binary checkpoints for autoencoder parameters and MF factors.

Autoencoder layout (little-endian)::

    b"HDMF" | version u32 | K u32 | input_dim u32 | K x layer size u32
    | W_1 .. W_K (float64, row-major) | b_1 .. b_2K (float64) | CRC32 u32

Version 1 holds one shared parameter set. Version 2 (separate towers) repeats
the weight/bias block twice, user tower first. MF checkpoints use magic
``b"HDMM"``: ``version | n_users | n_items | k | user factors | item factors
| CRC32``. The CRC covers every byte before it.
"""
from __future__ import annotations

import struct
import zlib
from pathlib import Path

import numpy as np

from .exceptions import CheckpointError
from .network import Architecture, ModelParams

MAGIC = b"HDMF"
MF_MAGIC = b"HDMM"
SHARED_VERSION = 1
UNTIED_VERSION = 2
MF_VERSION = 1

_F64 = np.dtype("<f8")


def header_size(arch: Architecture) -> int:
    return 4 + 4 * (3 + arch.depth)


def checkpoint_size(arch: Architecture, n_towers: int = 1) -> int:
    """Exact byte length of an autoencoder checkpoint."""
    return header_size(arch) + 8 * arch.n_params() * n_towers + 4


def _pack_arrays(arrays) -> bytes:
    return b"".join(np.ascontiguousarray(a, dtype=_F64).tobytes() for a in arrays)


def encode_params(params: ModelParams, item_params: ModelParams | None = None) -> bytes:
    arch = params.arch
    untied = item_params is not None and item_params is not params
    if untied and item_params.arch != arch:
        raise ValueError("towers must share one architecture")
    head = MAGIC + struct.pack(f"<{3 + arch.depth}I",
                               UNTIED_VERSION if untied else SHARED_VERSION,
                               arch.depth, arch.input_dim, *arch.encoder_sizes)
    body = _pack_arrays(a for _, a in params.arrays())
    if untied:
        body += _pack_arrays(a for _, a in item_params.arrays())
    payload = head + body
    return payload + struct.pack("<I", zlib.crc32(payload))


def save_checkpoint(model, path, item_params: ModelParams | None = None) -> Path:
    """Write ``ModelParams`` (optionally with a separate item tower) or an ``MfModel``."""
    from .training import MfModel

    data = encode_mf(model) if isinstance(model, MfModel) else encode_params(model, item_params)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(data)
    return path


def _verify(data: bytes) -> bytes:
    if len(data) < 12:
        raise CheckpointError("checkpoint truncated")
    payload, (crc,) = data[:-4], struct.unpack("<I", data[-4:])
    if zlib.crc32(payload) != crc:
        raise CheckpointError("checkpoint CRC mismatch (corrupt or truncated file)")
    return payload


class _Reader:
    def __init__(self, payload: bytes, offset: int):
        self.buf = payload
        self.pos = offset

    def u32(self, n=1):
        end = self.pos + 4 * n
        if end > len(self.buf):
            raise CheckpointError("checkpoint truncated")
        vals = struct.unpack_from(f"<{n}I", self.buf, self.pos)
        self.pos = end
        return vals

    def array(self, shape):
        count = int(np.prod(shape))
        end = self.pos + 8 * count
        if end > len(self.buf):
            raise CheckpointError("checkpoint truncated")
        a = np.frombuffer(self.buf, dtype=_F64, count=count, offset=self.pos).reshape(shape)
        self.pos = end
        return a.astype(np.float64)  # native, writable copy

    def done(self):
        if self.pos != len(self.buf):
            raise CheckpointError("trailing bytes in checkpoint")


def decode_params(data: bytes) -> tuple[ModelParams, ModelParams | None]:
    if data[:4] != MAGIC:
        raise CheckpointError("not an HDMF checkpoint (bad magic)")
    payload = _verify(data)
    r = _Reader(payload, 4)
    version, depth, input_dim = r.u32(3)
    if version not in (SHARED_VERSION, UNTIED_VERSION):
        raise CheckpointError(f"unsupported checkpoint version {version}")
    if depth < 1 or depth > 64:
        raise CheckpointError(f"implausible depth {depth}")
    arch = Architecture(input_dim, r.u32(depth))

    def read_tower():
        W = [r.array(s) for s in arch.weight_shapes()]
        b = [r.array((n,)) for n in arch.bias_sizes()]
        return ModelParams(arch, W, b)

    user = read_tower()
    item = read_tower() if version == UNTIED_VERSION else None
    r.done()
    return user, item


def encode_mf(mf) -> bytes:
    n_users, k = mf.user_factors.shape
    n_items = mf.item_factors.shape[0]
    payload = (MF_MAGIC + struct.pack("<4I", MF_VERSION, n_users, n_items, k)
               + _pack_arrays([mf.user_factors, mf.item_factors]))
    return payload + struct.pack("<I", zlib.crc32(payload))


def decode_mf(data: bytes):
    from .training import MfModel

    if data[:4] != MF_MAGIC:
        raise CheckpointError("not an MF checkpoint (bad magic)")
    payload = _verify(data)
    r = _Reader(payload, 4)
    version, n_users, n_items, k = r.u32(4)
    if version != MF_VERSION:
        raise CheckpointError(f"unsupported MF checkpoint version {version}")
    mf = MfModel(r.array((n_users, k)), r.array((n_items, k)))
    r.done()
    return mf


def load_checkpoint(path):
    """Load a checkpoint written by :func:`save_checkpoint`.

    Returns an ``MfModel``, a ``ModelParams`` (shared towers), or a
    ``(user_params, item_params)`` tuple (separate towers).
    """
    path = Path(path)
    try:
        data = path.read_bytes()
    except FileNotFoundError:
        raise CheckpointError(f"checkpoint not found: {path}") from None
    if data[:4] == MF_MAGIC:
        return decode_mf(data)
    user, item = decode_params(data)
    return user if item is None else (user, item)
