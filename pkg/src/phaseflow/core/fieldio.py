"""Binary and CSV serialization of fields.

Binary layout (all little-endian)::

    b"PBF1"
    u32 rank                      1 (amplitude) or 2 (x, p / x, y)
    rank * {f64 min, f64 max, u64 n}   x axis first
    u8  kind                      0 real f64, 1 complex interleaved f64 pairs
    f64 time
    payload                       row-major, x fastest: index = i_p*n_x + i_x
"""

import math
import os
import struct

import numpy as np

from .errors import FieldFormatError, FieldIOError, FieldLengthError, GridValidationError
from .fields import Amplitude, PhaseDistribution, TransformField
from .grids import PhaseSpaceGrid, SpatialGrid

MAGIC = b"PBF1"
_AXIS = struct.Struct("<ddQ")
_U32 = struct.Struct("<I")
_KIND = struct.Struct("<B")
_F64 = struct.Struct("<d")

KIND_REAL = 0
KIND_COMPLEX = 1


def _axes(field):
    if isinstance(field, Amplitude):
        g = field.grid
        return [(g.x_min, g.x_max, g.n_x)]
    g = field.grid
    sx = g.spatial
    if isinstance(field, TransformField):
        half = 0.5 * sx.length
        return [(sx.x_min, sx.x_max, sx.n_x), (-half, half, g.n_p)]
    return [(sx.x_min, sx.x_max, sx.n_x), (g.p_min, g.p_max, g.n_p)]


def encode_field(field):
    values = np.asarray(field.values)
    kind = KIND_REAL if not np.any(values.imag) else KIND_COMPLEX
    axes = _axes(field)
    parts = [MAGIC, _U32.pack(len(axes))]
    parts += [_AXIS.pack(float(lo), float(hi), int(n)) for lo, hi, n in axes]
    parts.append(_KIND.pack(kind))
    parts.append(_F64.pack(field.t))
    if kind == KIND_REAL:
        payload = np.ascontiguousarray(values.real, dtype="<f8")
    else:
        payload = np.ascontiguousarray(values, dtype="<c16")
    parts.append(payload.tobytes())
    return b"".join(parts)


def save_field(field, path):
    """Write ``field`` in the PBF1 binary format."""
    data = encode_field(field)
    try:
        with open(path, "wb") as fh:
            fh.write(data)
    except OSError as exc:
        raise FieldIOError(path, f"cannot write field ({exc.strerror or exc})") from exc


def _take(buf, offset, size, what):
    if offset + size > len(buf):
        raise FieldLengthError(f"truncated field: need {size} bytes for {what} at offset {offset}, "
                               f"file has {len(buf)}")
    return buf[offset:offset + size], offset + size


def decode_field(buf, boundary="periodic", kind="phase", alpha=None):
    head, off = _take(buf, 0, 4, "magic")
    if head != MAGIC:
        raise FieldFormatError(f"bad magic {head!r}, expected {MAGIC!r}")
    raw, off = _take(buf, off, _U32.size, "rank")
    (rank,) = _U32.unpack(raw)
    if rank not in (1, 2):
        raise FieldFormatError(f"unsupported rank {rank}")
    axes = []
    for _ in range(rank):
        raw, off = _take(buf, off, _AXIS.size, "axis")
        axes.append(_AXIS.unpack(raw))
    raw, off = _take(buf, off, _KIND.size, "kind")
    (dkind,) = _KIND.unpack(raw)
    if dkind not in (KIND_REAL, KIND_COMPLEX):
        raise FieldFormatError(f"unknown payload kind {dkind}")
    raw, off = _take(buf, off, _F64.size, "time")
    (t,) = _F64.unpack(raw)

    count = 1
    for _, _, n in axes:
        count *= n
    width = 8 if dkind == KIND_REAL else 16
    raw, off = _take(buf, off, count * width, "payload")
    if off != len(buf):
        raise FieldLengthError(f"{len(buf) - off} trailing bytes after payload")
    if dkind == KIND_REAL:
        values = np.frombuffer(raw, dtype="<f8").astype(np.complex128)
    else:
        values = np.frombuffer(raw, dtype="<c16").astype(np.complex128)

    x_min, x_max, n_x = axes[0]
    spatial = SpatialGrid(x_min, x_max, int(n_x), boundary)
    if rank == 1:
        return Amplitude(spatial, values, t)
    lo, hi, n_p = axes[1]
    if not math.isclose(lo, -hi, rel_tol=1e-12, abs_tol=1e-300):
        raise GridValidationError(f"second axis must be symmetric about 0, got [{lo}, {hi})")
    values = values.reshape(int(n_p), int(n_x))
    if kind == "transform":
        grid = PhaseSpaceGrid(spatial, int(n_p), 1.0 if alpha is None else alpha)
        return TransformField(grid, values, t)
    dp = (hi - lo) / n_p
    alpha = dp * spatial.length / math.pi
    grid = PhaseSpaceGrid(spatial, int(n_p), alpha)
    return PhaseDistribution(grid, values, t)


def load_field(path, boundary="periodic", kind="phase", alpha=None):
    """Read a PBF1 file back into an :class:`Amplitude` or a rank-2 field.

    The format carries no boundary rule, so it is supplied by the caller.
    Rank-2 files are read as :class:`PhaseDistribution` (alpha recovered from
    the momentum spacing) unless ``kind="transform"``, whose y axis does not
    determine alpha; pass it explicitly.
    """
    try:
        with open(path, "rb") as fh:
            buf = fh.read()
    except OSError as exc:
        raise FieldIOError(path, f"cannot read field ({exc.strerror or exc})") from exc
    return decode_field(buf, boundary=boundary, kind=kind, alpha=alpha)


def export_csv(field, path):
    """One sample per line with header ``x[,p],re[,im]``."""
    values = np.asarray(field.values)
    complex_out = bool(np.any(values.imag))
    if isinstance(field, Amplitude):
        cols = [field.grid.x]
        header = ["x"]
    else:
        g = field.grid
        second = g.y if isinstance(field, TransformField) else g.p
        X, S = np.meshgrid(g.x, second)
        cols = [X.ravel(), S.ravel()]
        header = ["x", "y" if isinstance(field, TransformField) else "p"]
        values = values.ravel()
    cols.append(values.real)
    header.append("re")
    if complex_out:
        cols.append(values.imag)
        header.append("im")
    table = np.column_stack(cols)
    try:
        with open(path, "w", newline="") as fh:
            fh.write(",".join(header) + "\n")
            np.savetxt(fh, table, fmt="%.17g", delimiter=",")
    except OSError as exc:
        raise FieldIOError(path, f"cannot write csv ({exc.strerror or exc})") from exc


def ensure_dir(path):
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as exc:
        raise FieldIOError(path, f"cannot create directory ({exc.strerror or exc})") from exc
