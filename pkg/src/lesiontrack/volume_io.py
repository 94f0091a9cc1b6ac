"""Label volume I/O and grid geometry.

Reads and writes NIfTI-1 label images (.nii, .nii.gz; little-endian,
348-byte header). Voxels are kept x-fastest (Fortran order), matching the
on-disk layout, so a load is a header parse plus one reshape of the raw
buffer. Only axis-aligned grids are supported: the header affine is checked
for rotation/shear and everything downstream uses spacing magnitudes only,
so direction flips in the affine are tolerated and ignored.
"""

from __future__ import annotations

import gzip
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import GridMismatchError, VolumeFormatError

# Accepted NIfTI-1 datatype codes for label images.
_DTYPES = {
    2: np.dtype("<u1"),    # uint8
    4: np.dtype("<i2"),    # int16
    8: np.dtype("<i4"),    # int32
    16: np.dtype("<f4"),   # float32
    512: np.dtype("<u2"),  # uint16
}

_HEADER_SIZE = 348
_AXES = "xyz"
_AXIS_ALIGN_TOL = 1e-2
_GZIP_MAGIC = b"\x1f\x8b"


@dataclass(frozen=True)
class GridGeometry:
    """Axis-aligned voxel grid: counts, mm spacing, and mm origin per axis."""

    dims: tuple[int, int, int]
    spacing: tuple[float, float, float]
    origin: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if len(self.dims) != 3 or any(int(d) < 1 for d in self.dims):
            raise VolumeFormatError(f"dims must be three counts >= 1, got {self.dims!r}")
        if len(self.spacing) != 3 or any(not (float(s) > 0) for s in self.spacing):
            raise VolumeFormatError(f"non-positive spacing: {self.spacing!r}")
        if len(self.origin) != 3 or any(not math.isfinite(float(o)) for o in self.origin):
            raise VolumeFormatError(f"invalid origin: {self.origin!r}")
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        object.__setattr__(self, "spacing", tuple(float(s) for s in self.spacing))
        object.__setattr__(self, "origin", tuple(float(o) for o in self.origin))

    @property
    def voxel_count(self) -> int:
        nx, ny, nz = self.dims
        return nx * ny * nz


@dataclass(frozen=True)
class LabelVolume:
    """Dense grid of non-negative integer labels; 0 is background.

    Treated as immutable after construction: operations that change voxels
    return a new instance, so volumes can be shared across workers.
    """

    geometry: GridGeometry
    voxels: np.ndarray

    def __post_init__(self):
        if tuple(self.voxels.shape) != self.geometry.dims:
            raise VolumeFormatError(
                f"voxel array shape {self.voxels.shape} does not match dims {self.geometry.dims}"
            )
        if not np.issubdtype(self.voxels.dtype, np.integer):
            raise VolumeFormatError(f"voxels must be integer, got dtype {self.voxels.dtype}")

    def foreground(self) -> np.ndarray:
        """Boolean mask of nonzero voxels."""
        return self.voxels != 0


def voxel_volume_cc(geometry: GridGeometry) -> float:
    """Physical volume of one voxel in cc (1 cc = 1000 mm^3)."""
    sx, sy, sz = geometry.spacing
    return sx * sy * sz / 1000.0


def assert_same_grid(a, b, tol: float = 1e-3) -> None:
    """Require two volumes (or geometries) to share a grid.

    Dims must match exactly; spacing and origin within `tol` relative
    (with `tol` mm absolute slack near zero). Raises GridMismatchError
    naming the offending axis.
    """
    ga = a.geometry if isinstance(a, LabelVolume) else a
    gb = b.geometry if isinstance(b, LabelVolume) else b
    for ax, da, db in zip(_AXES, ga.dims, gb.dims):
        if da != db:
            raise GridMismatchError(f"dimension mismatch on {ax}: {da} vs {db}")
    for ax, sa, sb in zip(_AXES, ga.spacing, gb.spacing):
        if not math.isclose(sa, sb, rel_tol=tol, abs_tol=tol):
            raise GridMismatchError(f"spacing mismatch on {ax}: {sa} vs {sb}")
    for ax, oa, ob in zip(_AXES, ga.origin, gb.origin):
        if not math.isclose(oa, ob, rel_tol=tol, abs_tol=tol):
            raise GridMismatchError(f"origin mismatch on {ax}: {oa} vs {ob}")


# ---------------------------------------------------------------------------
# NIfTI-1 reading
# ---------------------------------------------------------------------------


def _open_for_read(path: Path):
    f = open(path, "rb")
    try:
        magic = f.read(2)
        f.seek(0)
    except OSError:
        f.close()
        raise
    if magic == _GZIP_MAGIC:
        inner = gzip.GzipFile(fileobj=f)
        return inner
    return f


def _quaternion_rotation(b: float, c: float, d: float, qfac: float) -> np.ndarray:
    a2 = 1.0 - (b * b + c * c + d * d)
    a = math.sqrt(a2) if a2 > 0 else 0.0
    r = np.array(
        [
            [a * a + b * b - c * c - d * d, 2 * (b * c - a * d), 2 * (b * d + a * c)],
            [2 * (b * c + a * d), a * a + c * c - b * b - d * d, 2 * (c * d - a * b)],
            [2 * (b * d - a * c), 2 * (c * d + a * b), a * a + d * d - b * b - c * c],
        ]
    )
    r[:, 2] *= qfac
    return r


def _check_axis_aligned(m3: np.ndarray, spacing, path) -> None:
    # Each column of the affine's 3x3 part must point along one grid axis
    # (sign free); off-axis leakage beyond 1% of the column scale is an error.
    for j in range(3):
        col = m3[:, j]
        scale = max(float(np.abs(col).max()), spacing[j])
        off = [abs(float(col[i])) for i in range(3) if i != j]
        if max(off) > _AXIS_ALIGN_TOL * scale:
            raise VolumeFormatError(
                f"{path}: affine is not axis-aligned (column {_AXES[j]} has rotation/shear)"
            )


def load_label_volume(path) -> LabelVolume:
    """Load a NIfTI-1 label image (.nii or .nii.gz, sniffed by content).

    Float voxel data is rounded to the nearest integer. Raises
    VolumeFormatError for unreadable files, non-3D images, non-positive
    spacing, NaN voxels, negative labels, or labels above 16 bits.
    """
    path = Path(path)
    try:
        f = _open_for_read(path)
    except OSError as exc:
        raise VolumeFormatError(f"unreadable file: {path} ({exc})") from exc
    try:
        try:
            hdr = f.read(_HEADER_SIZE)
        except (OSError, gzip.BadGzipFile, EOFError) as exc:
            raise VolumeFormatError(f"unreadable file: {path} ({exc})") from exc
        if len(hdr) < _HEADER_SIZE:
            raise VolumeFormatError(f"{path}: truncated header ({len(hdr)} bytes)")

        sizeof_hdr = struct.unpack_from("<i", hdr, 0)[0]
        if sizeof_hdr != _HEADER_SIZE:
            if struct.unpack_from(">i", hdr, 0)[0] == _HEADER_SIZE:
                raise VolumeFormatError(f"{path}: big-endian NIfTI-1 is not supported")
            raise VolumeFormatError(f"{path}: not a NIfTI-1 file (sizeof_hdr={sizeof_hdr})")
        magic = hdr[344:348]
        if magic == b"ni1\x00":
            raise VolumeFormatError(f"{path}: detached .hdr/.img pairs are not supported")
        if magic != b"n+1\x00":
            raise VolumeFormatError(f"{path}: bad NIfTI magic {magic!r}")

        dim = struct.unpack_from("<8h", hdr, 40)
        ndim = dim[0]
        if ndim < 3 or ndim > 7 or any(d > 1 for d in dim[4 : 1 + ndim]):
            raise VolumeFormatError(f"{path}: non-3D image (dim={dim[: 1 + max(ndim, 0)]})")
        dims = (int(dim[1]), int(dim[2]), int(dim[3]))
        if any(d < 1 for d in dims):
            raise VolumeFormatError(f"{path}: non-3D image (dim={dim[:4]})")

        datatype, bitpix = struct.unpack_from("<hh", hdr, 70)
        if datatype not in _DTYPES:
            raise VolumeFormatError(f"{path}: unsupported datatype code {datatype}")
        dt = _DTYPES[datatype]
        if bitpix != dt.itemsize * 8:
            raise VolumeFormatError(f"{path}: bitpix {bitpix} inconsistent with datatype {datatype}")

        pixdim = struct.unpack_from("<8f", hdr, 76)
        spacing = tuple(float(p) for p in pixdim[1:4])
        if any(not (s > 0) for s in spacing):
            raise VolumeFormatError(f"{path}: non-positive spacing {spacing}")

        vox_offset = int(round(struct.unpack_from("<f", hdr, 108)[0]))
        if vox_offset < _HEADER_SIZE:
            raise VolumeFormatError(f"{path}: bad vox_offset {vox_offset}")
        scl_slope, scl_inter = struct.unpack_from("<ff", hdr, 112)

        qform_code, sform_code = struct.unpack_from("<hh", hdr, 252)
        origin = (0.0, 0.0, 0.0)
        if sform_code > 0:
            srow = np.array(
                [
                    struct.unpack_from("<4f", hdr, 280),
                    struct.unpack_from("<4f", hdr, 296),
                    struct.unpack_from("<4f", hdr, 312),
                ],
                dtype=np.float64,
            )
            _check_axis_aligned(srow[:, :3], spacing, path)
            origin = tuple(float(v) for v in srow[:, 3])
        elif qform_code > 0:
            qb, qc, qd = struct.unpack_from("<3f", hdr, 256)
            qx, qy, qz = struct.unpack_from("<3f", hdr, 268)
            qfac = -1.0 if pixdim[0] == -1.0 else 1.0
            rot = _quaternion_rotation(qb, qc, qd, qfac) * np.asarray(spacing)
            _check_axis_aligned(rot, spacing, path)
            origin = (float(qx), float(qy), float(qz))

        skip = vox_offset - _HEADER_SIZE
        if skip:
            f.read(skip)
        nvox = dims[0] * dims[1] * dims[2]
        need = nvox * dt.itemsize
        try:
            buf = f.read(need)
        except (OSError, gzip.BadGzipFile, EOFError) as exc:
            raise VolumeFormatError(f"unreadable file: {path} ({exc})") from exc
        if len(buf) < need:
            raise VolumeFormatError(f"{path}: truncated voxel data ({len(buf)} of {need} bytes)")
        raw = np.frombuffer(buf, dtype=dt).reshape(dims, order="F")
    finally:
        f.close()

    scaled = scl_slope not in (0.0, 1.0) or scl_inter != 0.0
    if raw.dtype.kind == "f" or scaled:
        data = raw.astype(np.float64)
        if np.isnan(data).any():
            raise VolumeFormatError(f"{path}: NaN voxels")
        if scaled:
            data = data * scl_slope + scl_inter
        data = np.rint(data)
        if data.min() < 0:
            raise VolumeFormatError(f"{path}: negative label values")
        if data.max() > np.iinfo(np.uint16).max:
            raise VolumeFormatError(f"{path}: label values exceed 16 bits")
        voxels = data.astype(np.uint16)
    else:
        if raw.size and int(raw.min()) < 0:
            raise VolumeFormatError(f"{path}: negative label values")
        if raw.size and int(raw.max()) > np.iinfo(np.uint16).max:
            raise VolumeFormatError(f"{path}: label values exceed 16 bits")
        voxels = raw.astype(np.uint16, copy=False)

    return LabelVolume(GridGeometry(dims, spacing, origin), voxels)


# ---------------------------------------------------------------------------
# NIfTI-1 writing
# ---------------------------------------------------------------------------


def save_label_volume(volume: LabelVolume, path) -> Path:
    """Write a volume as single-file NIfTI-1, uint16, gzipped iff path ends .gz."""
    path = Path(path)
    nx, ny, nz = volume.geometry.dims
    sx, sy, sz = volume.geometry.spacing
    ox, oy, oz = volume.geometry.origin

    hdr = bytearray(352)  # 348-byte header + 4-byte extension flag
    struct.pack_into("<i", hdr, 0, _HEADER_SIZE)
    struct.pack_into("<8h", hdr, 40, 3, nx, ny, nz, 1, 1, 1, 1)
    struct.pack_into("<hh", hdr, 70, 512, 16)  # uint16
    struct.pack_into("<8f", hdr, 76, 1.0, sx, sy, sz, 0.0, 0.0, 0.0, 0.0)
    struct.pack_into("<f", hdr, 108, 352.0)
    struct.pack_into("<ff", hdr, 112, 1.0, 0.0)
    hdr[123] = 2  # spatial units: mm
    struct.pack_into("<hh", hdr, 252, 0, 1)  # qform off, sform on
    struct.pack_into("<4f", hdr, 280, sx, 0.0, 0.0, ox)
    struct.pack_into("<4f", hdr, 296, 0.0, sy, 0.0, oy)
    struct.pack_into("<4f", hdr, 312, 0.0, 0.0, sz, oz)
    hdr[344:348] = b"n+1\x00"

    data = volume.voxels.astype(np.uint16, copy=False).tobytes(order="F")
    opener = gzip.open if path.name.endswith(".gz") else open
    path.parent.mkdir(parents=True, exist_ok=True)
    with opener(path, "wb") as f:
        f.write(bytes(hdr))
        f.write(data)
    return path
