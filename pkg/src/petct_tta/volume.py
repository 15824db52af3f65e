"""3D scalar volumes with physical geometry.

A :class:`Volume3D` couples a dense float32 grid with voxel spacing and a
physical origin (both in millimeters). Data is indexed ``data[x, y, z]``;
the flat on-disk layout is x-fastest (Fortran order), matching NIfTI.
:class:`MaskVolume` is the binary counterpart used for ground truth and
binarized predictions.

Volumes are immutable after construction: the backing array is marked
read-only so they can be shared freely across threads.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError

GEOMETRY_TOL_MM = 1e-4


def _as_triple(values, name):
    t = tuple(float(v) for v in values)
    if len(t) != 3:
        raise ParameterError(f"{name} must have 3 components, got {len(t)}")
    return t


@dataclass(frozen=True)
class Volume3D:
    """Dense 3D scalar grid with spacing and origin in millimeters."""

    data: np.ndarray
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)
    origin: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float32)
        if data.ndim != 3:
            raise ParameterError(f"volume data must be 3D, got shape {data.shape}")
        if data.size == 0:
            raise ParameterError("volume data must be nonempty")
        if not np.isfinite(data).all():
            raise ParameterError("volume data contains NaN or Inf")
        spacing = _as_triple(self.spacing, "spacing")
        if any(s <= 0 for s in spacing):
            raise ParameterError(f"spacing components must be > 0, got {spacing}")
        origin = _as_triple(self.origin, "origin")
        data.flags.writeable = False
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "origin", origin)

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.data.shape

    @property
    def voxel_volume_ml(self) -> float:
        sx, sy, sz = self.spacing
        return sx * sy * sz / 1000.0

    def with_data(self, data: np.ndarray) -> "Volume3D":
        """New volume with the same geometry and different voxel data."""
        return Volume3D(data, self.spacing, self.origin)


@dataclass(frozen=True)
class MaskVolume:
    """Binary 3D mask sharing the geometry conventions of :class:`Volume3D`."""

    data: np.ndarray
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)
    origin: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 3:
            raise ParameterError(f"mask data must be 3D, got shape {data.shape}")
        if data.dtype != np.uint8:
            as_u8 = data.astype(np.uint8)
            if not np.array_equal(as_u8, data):
                raise ParameterError("mask voxels must be exactly 0 or 1")
            data = as_u8
        if data.size and data.max() > 1:
            raise ParameterError("mask voxels must be exactly 0 or 1")
        spacing = _as_triple(self.spacing, "spacing")
        if any(s <= 0 for s in spacing):
            raise ParameterError(f"spacing components must be > 0, got {spacing}")
        origin = _as_triple(self.origin, "origin")
        data.flags.writeable = False
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "origin", origin)

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.data.shape

    @property
    def voxel_volume_ml(self) -> float:
        sx, sy, sz = self.spacing
        return sx * sy * sz / 1000.0

    def to_volume(self) -> Volume3D:
        """Float view of the mask, e.g. for writing to NIfTI."""
        return Volume3D(self.data.astype(np.float32), self.spacing, self.origin)

    def with_data(self, data: np.ndarray) -> "MaskVolume":
        return MaskVolume(data, self.spacing, self.origin)


def mask_from_volume(vol: Volume3D, threshold: float = 0.5) -> MaskVolume:
    """Binarize a float volume at ``threshold`` (>= rule), keeping geometry."""
    return MaskVolume((vol.data >= threshold).astype(np.uint8), vol.spacing, vol.origin)


def geometry_match(a, b, tol_mm: float = GEOMETRY_TOL_MM) -> bool:
    """True iff dims are identical and spacing/origin agree within ``tol_mm``."""
    if a.dims != b.dims:
        return False
    for pa, pb in zip(a.spacing + a.origin, b.spacing + b.origin):
        if abs(pa - pb) > tol_mm:
            return False
    return True


def require_geometry_match(a, b, what: str = "volumes") -> None:
    if not geometry_match(a, b):
        raise ParameterError(
            f"{what} are not geometry-matched: "
            f"dims {a.dims} vs {b.dims}, spacing {a.spacing} vs {b.spacing}, "
            f"origin {a.origin} vs {b.origin}"
        )
