"""Binary checkpoint format.

Layout (all integers unsigned 32-bit little-endian)::

    b"PADC" | version | len | config text (UTF-8) | tensor count
    per tensor: len | name (UTF-8) | rank | dims... | float32 LE payload
    CRC-32 (IEEE) of every preceding byte

The config text is the run configuration followed by three
``partition.theta_*=name,name,...`` lines recording which tensors belong to
the encoder, the reward head and the self-supervised head.
"""

from __future__ import annotations

import hashlib
import struct
import zlib
from pathlib import Path

import numpy as np

from padkit import policynet as pn
from padkit.bench import config as rc
from padkit.numcore import Tensor

MAGIC = b"PADC"
FORMAT_VERSION = 1
PARTS = ("theta_e", "theta_a", "theta_s")
_U32 = struct.Struct("<I")


class IntegrityError(ValueError):
    """Checksum mismatch or truncated file."""


class VersionError(ValueError):
    """Checkpoint written by an unsupported format version."""


def _frozen(name: str) -> bool:
    return name.startswith(("critic_target.", "encoder_target."))


def config_snapshot(params: pn.PolicyParams, cfg: rc.RunConfig) -> str:
    lines = [rc.serialize(cfg)]
    for part in PARTS:
        lines.append(f"partition.{part}={','.join(getattr(params, part))}\n")
    return "".join(lines)


def encode(params: pn.PolicyParams, cfg: rc.RunConfig) -> bytes:
    params.check_partition()
    text = config_snapshot(params, cfg).encode("utf-8")
    out = bytearray(MAGIC)
    out += _U32.pack(FORMAT_VERSION)
    out += _U32.pack(len(text)) + text
    tensors = [(k, t) for part in PARTS for k, t in getattr(params, part).items()]
    out += _U32.pack(len(tensors))
    for name, t in tensors:
        raw = name.encode("utf-8")
        out += _U32.pack(len(raw)) + raw
        out += _U32.pack(t.data.ndim)
        for d in t.data.shape:
            out += _U32.pack(d)
        out += np.ascontiguousarray(t.data, dtype="<f4").tobytes()
    out += _U32.pack(zlib.crc32(out) & 0xFFFFFFFF)
    return bytes(out)


class _Reader:
    def __init__(self, buf: bytes):
        self.buf, self.pos = buf, 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise IntegrityError("checkpoint truncated")
        out = self.buf[self.pos : self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return _U32.unpack(self.take(4))[0]


def decode(blob: bytes) -> tuple[pn.PolicyParams, rc.RunConfig]:
    if len(blob) < 12 or blob[:4] != MAGIC:
        raise IntegrityError("not a PADC checkpoint")
    body, (crc,) = blob[:-4], _U32.unpack(blob[-4:])
    if zlib.crc32(body) & 0xFFFFFFFF != crc:
        raise IntegrityError("checkpoint CRC mismatch")
    r = _Reader(body)
    r.take(4)
    version = r.u32()
    if version != FORMAT_VERSION:
        raise VersionError(f"checkpoint format version {version}, expected {FORMAT_VERSION}")
    text = r.take(r.u32()).decode("utf-8")
    partition, cfg_lines = {}, []
    for line in text.splitlines():
        if line.startswith("partition."):
            key, _, names = line.partition("=")
            partition[key[len("partition."):]] = [n for n in names.split(",") if n]
        else:
            cfg_lines.append(line)
    cfg = rc.parse("\n".join(cfg_lines))
    owner = {n: part for part in PARTS for n in partition.get(part, [])}
    params = pn.PolicyParams()
    for _ in range(r.u32()):
        name = r.take(r.u32()).decode("utf-8")
        shape = tuple(r.u32() for _ in range(r.u32()))
        count = int(np.prod(shape, dtype=np.int64))
        data = np.frombuffer(r.take(4 * count), dtype="<f4").reshape(shape).astype(np.float32)
        if name not in owner:
            raise IntegrityError(f"tensor {name!r} missing from partition metadata")
        getattr(params, owner[name])[name] = Tensor(data, requires_grad=not _frozen(name), name=name)
    if r.pos != len(body):
        raise IntegrityError("trailing bytes after tensor table")
    return params, cfg


def save(params: pn.PolicyParams, cfg: rc.RunConfig, path) -> str:
    """Write the checkpoint; returns its SHA-256 for provenance."""
    blob = encode(params, cfg)
    Path(path).write_bytes(blob)
    return hashlib.sha256(blob).hexdigest()


def load(path) -> tuple[pn.PolicyParams, rc.RunConfig]:
    return decode(Path(path).read_bytes())


def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
