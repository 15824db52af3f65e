"""Minimal NIfTI-1 single-file reader/writer plus a raw test-fixture format.

Only the single-file layout (``.nii`` / ``.nii.gz``, magic ``n+1\\0``) is
supported; paired ``.hdr``/``.img`` and NIfTI-2 are rejected. Orientation
(qform/sform rotation) is not applied: volumes are returned in stored voxel
order, x-fastest, which matches how co-registered CT/PET pairs are consumed
downstream.

The fixture format is a JSON sidecar ``<name>.json`` holding
``{"dims", "spacing", "origin"}`` next to ``<name>.raw`` containing
little-endian float32 voxels, x-fastest.
"""

import gzip
import json
import struct
from pathlib import Path

import numpy as np

from .errors import FormatError, UnsupportedDtypeError
from .volume import Volume3D

HEADER_SIZE = 348
MAGIC_SINGLE = b"n+1\x00"
MAGIC_PAIR = b"ni1\x00"

# NIfTI-1 datatype code -> numpy dtype (byte order applied at read time)
_DTYPES = {
    2: "u1",      # uint8
    4: "i2",      # int16
    8: "i4",      # int32
    16: "f4",     # float32
    64: "f8",     # float64
    512: "u2",    # uint16
}

_GZIP_MAGIC = b"\x1f\x8b"


def _read_bytes(path) -> bytes:
    raw = Path(path).read_bytes()
    if raw[:2] == _GZIP_MAGIC:
        raw = gzip.decompress(raw)
    return raw


def read_nifti(path) -> Volume3D:
    """Read a NIfTI-1 single-file volume (optionally gzipped) as float32.

    Dims come from ``dim[1..3]``, spacing from ``pixdim[1..3]``, origin from
    the sform translation column (falling back to qoffset). Values are mapped
    through ``scl_slope``/``scl_inter`` when ``scl_slope`` is nonzero.
    """
    raw = _read_bytes(path)
    if len(raw) < HEADER_SIZE + 4:
        raise OSError(f"{path}: truncated NIfTI file ({len(raw)} bytes)")

    magic = raw[344:348]
    if magic != MAGIC_SINGLE:
        if magic == MAGIC_PAIR:
            raise FormatError(f"{path}: paired .hdr/.img NIfTI-1 is not supported")
        raise FormatError(f"{path}: bad magic {magic!r}, not a NIfTI-1 single file")

    # Byte order: dim[0] (number of dimensions) must land in [1, 7].
    order = None
    for candidate in ("<", ">"):
        (ndim,) = struct.unpack_from(candidate + "h", raw, 40)
        if 1 <= ndim <= 7:
            order = candidate
            break
    if order is None:
        raise FormatError(f"{path}: cannot determine byte order from dim[0]")

    dim = struct.unpack_from(order + "8h", raw, 40)
    (datatype,) = struct.unpack_from(order + "h", raw, 70)
    pixdim = struct.unpack_from(order + "8f", raw, 76)
    (vox_offset,) = struct.unpack_from(order + "f", raw, 108)
    scl_slope, scl_inter = struct.unpack_from(order + "2f", raw, 112)
    qform_code, sform_code = struct.unpack_from(order + "2h", raw, 252)
    qoffset = struct.unpack_from(order + "3f", raw, 268)
    srow = [struct.unpack_from(order + "4f", raw, off) for off in (280, 296, 312)]

    ndim = dim[0]
    if any(d not in (0, 1) for d in dim[4 : ndim + 1]):
        raise FormatError(f"{path}: {ndim}D volumes are not supported")
    shape = tuple(max(1, dim[i]) if i <= ndim else 1 for i in (1, 2, 3))
    if any(dim[i] < 1 for i in range(1, min(ndim, 3) + 1)):
        raise FormatError(f"{path}: nonpositive dimension in {dim[1:4]}")

    if datatype not in _DTYPES:
        raise UnsupportedDtypeError(f"{path}: unsupported NIfTI datatype code {datatype}")
    dtype = np.dtype(order + _DTYPES[datatype])

    offset = int(vox_offset)
    if offset < HEADER_SIZE:
        raise FormatError(f"{path}: vox_offset {vox_offset} below header size")
    expected = shape[0] * shape[1] * shape[2] * dtype.itemsize
    payload = raw[offset:]
    if len(payload) < expected:
        raise OSError(
            f"{path}: truncated payload, expected {expected} bytes, got {len(payload)}"
        )
    if len(payload) > expected:
        raise FormatError(
            f"{path}: payload of {len(payload)} bytes exceeds the {expected} "
            f"implied by dims {shape}"
        )

    data = np.frombuffer(payload, dtype=dtype).reshape(shape, order="F")
    data = data.astype(np.float32)
    if scl_slope != 0.0 and np.isfinite(scl_slope):
        data = data * np.float32(scl_slope) + np.float32(scl_inter)
    if not np.isfinite(data).all():
        raise FormatError(f"{path}: volume contains non-finite values")

    spacing = tuple(float(p) for p in pixdim[1:4])
    if any(s <= 0 for s in spacing):
        raise FormatError(f"{path}: nonpositive pixdim {spacing}")
    if sform_code > 0:
        origin = (srow[0][3], srow[1][3], srow[2][3])
    elif qform_code > 0:
        origin = tuple(qoffset)
    else:
        origin = (0.0, 0.0, 0.0)

    return Volume3D(data, spacing, origin)


def write_nifti(vol: Volume3D, path) -> None:
    """Write a float32 NIfTI-1 single-file volume; gzipped iff path ends ``.gz``.

    ``read_nifti(write_nifti(v))`` reproduces ``v``: data bitwise (scl_slope
    is written as 0 so no rescaling happens on read), geometry within float32
    precision.
    """
    nx, ny, nz = vol.dims
    sx, sy, sz = vol.spacing
    ox, oy, oz = vol.origin

    header = bytearray(HEADER_SIZE)
    struct.pack_into("<i", header, 0, HEADER_SIZE)
    struct.pack_into("<8h", header, 40, 3, nx, ny, nz, 1, 1, 1, 1)
    struct.pack_into("<h", header, 70, 16)          # float32
    struct.pack_into("<h", header, 72, 32)          # bitpix
    struct.pack_into("<8f", header, 76, 1.0, sx, sy, sz, 0.0, 0.0, 0.0, 0.0)
    struct.pack_into("<f", header, 108, float(HEADER_SIZE + 4))  # vox_offset
    struct.pack_into("<2f", header, 112, 0.0, 0.0)  # scl_slope, scl_inter
    header[123] = 2                                 # xyzt_units: millimeters
    struct.pack_into("<2h", header, 252, 0, 1)      # qform off, sform on
    struct.pack_into("<3f", header, 268, ox, oy, oz)
    struct.pack_into("<4f", header, 280, sx, 0.0, 0.0, ox)
    struct.pack_into("<4f", header, 296, 0.0, sy, 0.0, oy)
    struct.pack_into("<4f", header, 312, 0.0, 0.0, sz, oz)
    header[344:348] = MAGIC_SINGLE

    blob = bytes(header) + b"\x00\x00\x00\x00"
    blob += np.asarray(vol.data, dtype="<f4").ravel(order="F").tobytes()

    path = Path(path)
    if path.suffix == ".gz":
        # mtime pinned so identical volumes produce identical files
        path.write_bytes(gzip.compress(blob, mtime=0))
    else:
        path.write_bytes(blob)


def _fixture_paths(path):
    p = Path(path)
    if p.suffix in (".json", ".raw"):
        p = p.with_suffix("")
    return p.with_suffix(p.suffix + ".json"), p.with_suffix(p.suffix + ".raw")


def read_fixture(path) -> Volume3D:
    """Read a JSON-sidecar + raw-float32 fixture volume.

    ``path`` may point at the sidecar, the raw file, or the shared stem.
    """
    sidecar_path, raw_path = _fixture_paths(path)
    try:
        sidecar = json.loads(sidecar_path.read_text())
        dims = tuple(int(d) for d in sidecar["dims"])
        spacing = tuple(float(s) for s in sidecar["spacing"])
        origin = tuple(float(o) for o in sidecar["origin"])
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"{sidecar_path}: malformed fixture sidecar: {exc}") from exc
    if len(dims) != 3 or any(d < 1 for d in dims):
        raise FormatError(f"{sidecar_path}: bad dims {dims}")

    raw = raw_path.read_bytes()
    expected = 4 * dims[0] * dims[1] * dims[2]
    if len(raw) != expected:
        raise FormatError(
            f"{raw_path}: raw length {len(raw)} does not match the "
            f"{expected} bytes implied by dims {dims}"
        )
    data = np.frombuffer(raw, dtype="<f4").reshape(dims, order="F")
    return Volume3D(data, spacing, origin)


def write_fixture(vol: Volume3D, path) -> None:
    """Write the JSON-sidecar + raw-float32 fixture encoding of ``vol``."""
    sidecar_path, raw_path = _fixture_paths(path)
    sidecar = {
        "dims": list(vol.dims),
        "spacing": list(vol.spacing),
        "origin": list(vol.origin),
    }
    sidecar_path.write_text(json.dumps(sidecar, indent=2) + "\n")
    raw_path.write_bytes(np.asarray(vol.data, dtype="<f4").ravel(order="F").tobytes())
