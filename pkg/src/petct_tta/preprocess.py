"""Intensity windowing and CT-driven foreground cropping.

CT defaults to the [100, 250] window and PET to [0, 15] (SUV), both mapped to
[0, 1]. The windows are plain configuration values: pipelines that prefer the
conventional -100 HU soft-tissue floor can override ``in_min`` without code
changes.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .volume import MaskVolume, Volume3D


@dataclass(frozen=True)
class ScaleWindow:
    """Linear intensity map [in_min, in_max] -> [out_min, out_max]."""

    in_min: float
    in_max: float
    out_min: float = 0.0
    out_max: float = 1.0
    clamp: bool = True

    def __post_init__(self):
        if not self.in_min < self.in_max:
            raise ParameterError(
                f"degenerate window: in_min {self.in_min} must be < in_max {self.in_max}"
            )
        if not self.out_min < self.out_max:
            raise ParameterError(
                f"degenerate window: out_min {self.out_min} must be < out_max {self.out_max}"
            )

    def to_json(self) -> dict:
        return {
            "in_min": self.in_min,
            "in_max": self.in_max,
            "out_min": self.out_min,
            "out_max": self.out_max,
            "clamp": self.clamp,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "ScaleWindow":
        return cls(**doc)


CT_WINDOW = ScaleWindow(in_min=100.0, in_max=250.0)
PET_WINDOW = ScaleWindow(in_min=0.0, in_max=15.0)


@dataclass(frozen=True)
class BBox:
    """Axis-aligned voxel box, lo inclusive / hi exclusive."""

    lo: tuple[int, int, int]
    hi: tuple[int, int, int]

    def __post_init__(self):
        lo = tuple(int(v) for v in self.lo)
        hi = tuple(int(v) for v in self.hi)
        if len(lo) != 3 or len(hi) != 3:
            raise ParameterError("bbox lo/hi must each have 3 components")
        if not all(a < b for a, b in zip(lo, hi)):
            raise ParameterError(f"bbox must satisfy lo < hi componentwise: {lo} vs {hi}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def extent(self) -> tuple[int, int, int]:
        return tuple(h - l for l, h in zip(self.lo, self.hi))

    def to_json(self) -> dict:
        return {"lo": list(self.lo), "hi": list(self.hi)}

    @classmethod
    def from_json(cls, doc: dict) -> "BBox":
        return cls(tuple(doc["lo"]), tuple(doc["hi"]))


def scale_intensity(vol: Volume3D, window: ScaleWindow) -> Volume3D:
    """Map voxel intensities through ``window``; geometry unchanged.

    With ``clamp`` the input is clipped to [in_min, in_max] first, so output
    lands in [out_min, out_max]; without it the linear map is applied as-is.
    """
    data = vol.data.astype(np.float64)
    if window.clamp:
        data = np.clip(data, window.in_min, window.in_max)
    gain = (window.out_max - window.out_min) / (window.in_max - window.in_min)
    data = window.out_min + (data - window.in_min) * gain
    return vol.with_data(data.astype(np.float32))


def foreground_bbox(ct: Volume3D, threshold: float, margin: int = 0) -> BBox:
    """Tightest box holding all voxels strictly above ``threshold``, dilated
    by ``margin`` voxels and clipped to the volume; full box when empty."""
    if margin < 0:
        raise ParameterError(f"margin must be >= 0, got {margin}")
    above = np.argwhere(ct.data > threshold)
    if above.size == 0:
        return BBox((0, 0, 0), ct.dims)
    lo = np.maximum(above.min(axis=0) - margin, 0)
    hi = np.minimum(above.max(axis=0) + 1 + margin, ct.dims)
    return BBox(tuple(lo), tuple(hi))


def _check_box(box: BBox, dims: tuple[int, int, int]) -> None:
    if any(h > d for h, d in zip(box.hi, dims)):
        raise ParameterError(f"bbox {box} exceeds volume dims {dims}")


def crop(vol: Volume3D, box: BBox) -> Volume3D:
    """Sub-volume copy; spacing kept, origin shifted by lo * spacing."""
    _check_box(box, vol.dims)
    (x0, y0, z0), (x1, y1, z1) = box.lo, box.hi
    data = vol.data[x0:x1, y0:y1, z0:z1].copy()
    origin = tuple(o + l * s for o, l, s in zip(vol.origin, box.lo, vol.spacing))
    return Volume3D(data, vol.spacing, origin)


def crop_mask(mask: MaskVolume, box: BBox) -> MaskVolume:
    _check_box(box, mask.dims)
    (x0, y0, z0), (x1, y1, z1) = box.lo, box.hi
    data = mask.data[x0:x1, y0:y1, z0:z1].copy()
    origin = tuple(o + l * s for o, l, s in zip(mask.origin, box.lo, mask.spacing))
    return MaskVolume(data, mask.spacing, origin)


def uncrop_mask(mask: MaskVolume, box: BBox, full_dims: tuple[int, int, int]) -> MaskVolume:
    """Zero-pad ``mask`` back into a ``full_dims`` frame at ``box.lo``.

    Inverse of :func:`crop_mask` for masks supported inside the box. The
    origin moves back by lo * spacing to the uncropped frame.
    """
    full_dims = tuple(int(d) for d in full_dims)
    if mask.dims != box.extent:
        raise ParameterError(f"mask dims {mask.dims} do not match box extent {box.extent}")
    _check_box(box, full_dims)
    data = np.zeros(full_dims, dtype=np.uint8)
    (x0, y0, z0), (x1, y1, z1) = box.lo, box.hi
    data[x0:x1, y0:y1, z0:z1] = mask.data
    origin = tuple(o - l * s for o, l, s in zip(mask.origin, box.lo, mask.spacing))
    return MaskVolume(data, mask.spacing, origin)


def uncrop_volume(vol: Volume3D, box: BBox, full_dims: tuple[int, int, int]) -> Volume3D:
    """Zero-pad a float volume back into the uncropped frame (soft maps)."""
    full_dims = tuple(int(d) for d in full_dims)
    if vol.dims != box.extent:
        raise ParameterError(f"volume dims {vol.dims} do not match box extent {box.extent}")
    _check_box(box, full_dims)
    data = np.zeros(full_dims, dtype=np.float32)
    (x0, y0, z0), (x1, y1, z1) = box.lo, box.hi
    data[x0:x1, y0:y1, z0:z1] = vol.data
    origin = tuple(o - l * s for o, l, s in zip(vol.origin, box.lo, vol.spacing))
    return Volume3D(data, vol.spacing, origin)
