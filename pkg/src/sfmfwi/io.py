"""Little-endian binary field (``SFWI``) and gather (``SGTH``) files.

Field:  "SFWI" | u32 version=1 | u32 nx | u32 nz | f64 dx | f64 dz | f32[nz*nx] depth-major
Gather: "SGTH" | u32 version=1 | u32 n_shots | u32 n_receivers | u32 nt | f64 dt | f32[shot][receiver][time]
"""
import struct

import numpy as np

from .errors import FormatError, InvalidArgument
from .model import Grid2D, ShotGather, VelocityModel

FIELD_MAGIC = b"SFWI"
GATHER_MAGIC = b"SGTH"
VERSION = 1
_FIELD_HEADER = struct.Struct("<4sIIIdd")
_GATHER_HEADER = struct.Struct("<4sIIIId")


def save_field(model: VelocityModel, path):
    g = model.grid
    with open(path, "wb") as fh:
        fh.write(_FIELD_HEADER.pack(FIELD_MAGIC, VERSION, g.nx, g.nz, g.dx, g.dz))
        fh.write(np.ascontiguousarray(model.values, dtype="<f4").tobytes())


def _header(data, st, magic):
    if len(data) < 4 or data[:4] != magic:
        raise FormatError(f"bad magic {data[:4]!r}, expected {magic!r}", 0)
    if len(data) < st.size:
        raise FormatError(f"truncated header: {len(data)} of {st.size} bytes", len(data))
    fields = st.unpack_from(data, 0)
    if fields[1] != VERSION:
        raise FormatError(f"unsupported version {fields[1]}, expected {VERSION}", 4)
    return fields


def _payload(data, offset, count):
    need = 4 * count
    have = len(data) - offset
    if have < need:
        raise FormatError(f"truncated payload: header promises {need} bytes, file holds {have}", offset)
    if have > need:
        raise FormatError(f"{have - need} trailing bytes after payload", offset + need)
    return np.frombuffer(data, dtype="<f4", count=count, offset=offset).astype(np.float64)


def load_field(path):
    with open(path, "rb") as fh:
        data = fh.read()
    _, _, nx, nz, dx, dz = _header(data, _FIELD_HEADER, FIELD_MAGIC)
    try:
        grid = Grid2D(nx, nz, dx, dz)
    except InvalidArgument as exc:
        raise FormatError(f"invalid grid in header: {exc}", 8) from exc
    values = _payload(data, _FIELD_HEADER.size, nx * nz).reshape(nz, nx)
    return VelocityModel(grid, values)


def save_gather(gather: ShotGather, path):
    s, r, nt = gather.traces.shape
    with open(path, "wb") as fh:
        fh.write(_GATHER_HEADER.pack(GATHER_MAGIC, VERSION, s, r, nt, gather.dt))
        fh.write(np.ascontiguousarray(gather.traces, dtype="<f4").tobytes())


def load_gather(path):
    with open(path, "rb") as fh:
        data = fh.read()
    _, _, s, r, nt, dt = _header(data, _GATHER_HEADER, GATHER_MAGIC)
    traces = _payload(data, _GATHER_HEADER.size, s * r * nt).reshape(s, r, nt)
    return ShotGather(traces, dt)
