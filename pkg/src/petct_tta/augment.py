"""Invertible test-time augmentations over CT/PET pairs.

Transforms are deterministic with fixed parameters (no sampling at apply
time), so the same ordered list can be replayed for every case and its
spatial part inverted exactly on the returned prediction maps. Spatial kinds
(flip, rotate90, zoom) act on both channels; intensity kinds (shift, noise)
act on the targeted channel only and need no inversion because predictions
live in probability space.
"""

import json
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ParameterError
from .volume import Volume3D, require_geometry_match

KIND_IDENTITY = "identity"
KIND_FLIP = "flip"
KIND_ROTATE90 = "rotate90"
KIND_SHIFT = "shift"
KIND_NOISE = "noise"
KIND_ZOOM = "zoom"

TARGET_CT = "ct"
TARGET_PET = "pet"
TARGET_BOTH = "both"

_PLANE_AXES = {"xy": (0, 1), "yz": (1, 2), "xz": (0, 2)}
_SPATIAL_KINDS = {KIND_FLIP, KIND_ROTATE90, KIND_ZOOM}
_INTENSITY_KINDS = {KIND_SHIFT, KIND_NOISE}


@dataclass(frozen=True)
class TransformSpec:
    """One parameterized augmentation; unused fields stay None.

    kind        identity | flip | rotate90 | shift | noise | zoom
    axis        flip axis, 1-based spatial axis in {1, 2, 3}
    plane, k    rotate90 plane in {xy, yz, xz} and quarter-turn count 1..3
    offset      shift fraction of the channel's (max - min), in [-1, 1]
    sigma, seed noise level (>= 0) and RNG seed
    factor      zoom factor in [0.5, 2.0]
    target      ct | pet | both, intensity kinds only
    """

    kind: str
    axis: int | None = None
    plane: str | None = None
    k: int | None = None
    offset: float | None = None
    sigma: float | None = None
    seed: int | None = None
    factor: float | None = None
    target: str | None = None

    def __post_init__(self):
        allowed = {
            KIND_IDENTITY: set(),
            KIND_FLIP: {"axis"},
            KIND_ROTATE90: {"plane", "k"},
            KIND_SHIFT: {"offset", "target"},
            KIND_NOISE: {"sigma", "seed", "target"},
            KIND_ZOOM: {"factor"},
        }
        if self.kind not in allowed:
            raise ParameterError(f"unknown transform kind {self.kind!r}")
        for name in ("axis", "plane", "k", "offset", "sigma", "seed", "factor", "target"):
            if getattr(self, name) is not None and name not in allowed[self.kind]:
                raise ParameterError(f"{self.kind} transform does not take {name!r}")

        if self.kind == KIND_FLIP:
            if self.axis not in (1, 2, 3):
                raise ParameterError(f"flip axis must be 1, 2 or 3, got {self.axis}")
        elif self.kind == KIND_ROTATE90:
            if self.plane not in _PLANE_AXES:
                raise ParameterError(f"rotate90 plane must be xy, yz or xz, got {self.plane}")
            if self.k not in (1, 2, 3):
                raise ParameterError(f"rotate90 k must be 1, 2 or 3, got {self.k}")
        elif self.kind == KIND_SHIFT:
            if self.offset is None or not -1.0 <= self.offset <= 1.0:
                raise ParameterError(f"shift offset must be in [-1, 1], got {self.offset}")
            object.__setattr__(self, "target", self.target or TARGET_BOTH)
        elif self.kind == KIND_NOISE:
            if self.sigma is None or self.sigma < 0:
                raise ParameterError(f"noise sigma must be >= 0, got {self.sigma}")
            object.__setattr__(self, "seed", 0 if self.seed is None else int(self.seed))
            object.__setattr__(self, "target", self.target or TARGET_BOTH)
        elif self.kind == KIND_ZOOM:
            if self.factor is None or not 0.5 <= self.factor <= 2.0:
                raise ParameterError(f"zoom factor must be in [0.5, 2.0], got {self.factor}")
        if self.target is not None and self.target not in (TARGET_CT, TARGET_PET, TARGET_BOTH):
            raise ParameterError(f"target must be ct, pet or both, got {self.target}")

    def to_json(self) -> dict:
        doc = {"kind": self.kind}
        for name in ("axis", "plane", "k", "offset", "sigma", "seed", "factor", "target"):
            value = getattr(self, name)
            if value is not None:
                doc[name] = value
        return doc

    @classmethod
    def from_json(cls, doc: dict) -> "TransformSpec":
        unknown = set(doc) - {"kind", "axis", "plane", "k", "offset", "sigma", "seed", "factor", "target"}
        if unknown:
            raise ParameterError(f"unknown transform fields {sorted(unknown)}")
        return cls(**doc)


IDENTITY = TransformSpec(KIND_IDENTITY)


def is_spatial(spec: TransformSpec) -> bool:
    """True for transforms that move voxels (flip, rotate90, zoom)."""
    return spec.kind in _SPATIAL_KINDS


def _spatial_forward(spec: TransformSpec, data: np.ndarray) -> np.ndarray:
    if spec.kind == KIND_FLIP:
        return np.flip(data, axis=spec.axis - 1)
    if spec.kind == KIND_ROTATE90:
        axes = _PLANE_AXES[spec.plane]
        if spec.k % 2 == 1 and data.shape[axes[0]] != data.shape[axes[1]]:
            raise ParameterError(
                f"rotate90 k={spec.k} needs equal dims in plane {spec.plane}, "
                f"got {data.shape[axes[0]]}x{data.shape[axes[1]]}"
            )
        return np.rot90(data, k=spec.k, axes=axes)
    if spec.kind == KIND_ZOOM:
        return kernels.zoom_resample(data, spec.factor)
    raise ParameterError(f"{spec.kind} is not a spatial transform")


def inverse_spec(spec: TransformSpec) -> TransformSpec:
    """Exact inverse of a spatial spec; identity-like kinds invert to identity."""
    if spec.kind == KIND_FLIP:
        return spec
    if spec.kind == KIND_ROTATE90:
        return TransformSpec(KIND_ROTATE90, plane=spec.plane, k=4 - spec.k)
    if spec.kind == KIND_ZOOM:
        return TransformSpec(KIND_ZOOM, factor=1.0 / spec.factor)
    return IDENTITY


def apply_spatial(spec: TransformSpec, vol: Volume3D) -> Volume3D:
    """Apply only the spatial part of ``spec`` to a single volume."""
    if not is_spatial(spec):
        return vol
    return vol.with_data(np.ascontiguousarray(_spatial_forward(spec, vol.data)))


def _shift_channel(data: np.ndarray, offset_fraction: float) -> np.ndarray:
    span = float(data.max()) - float(data.min())
    return data + np.float32(offset_fraction * span)


def apply(spec: TransformSpec, ct: Volume3D, pet: Volume3D) -> tuple[Volume3D, Volume3D]:
    """Transform a CT/PET pair; spatial kinds hit both channels identically,
    intensity kinds only the targeted channel."""
    require_geometry_match(ct, pet, "ct and pet")
    if spec.kind == KIND_IDENTITY:
        return ct, pet
    if is_spatial(spec):
        return apply_spatial(spec, ct), apply_spatial(spec, pet)
    if spec.kind == KIND_SHIFT:
        ct_data, pet_data = ct.data, pet.data
        if spec.target in (TARGET_CT, TARGET_BOTH):
            ct_data = _shift_channel(ct_data, spec.offset)
        if spec.target in (TARGET_PET, TARGET_BOTH):
            pet_data = _shift_channel(pet_data, spec.offset)
        return ct.with_data(ct_data), pet.with_data(pet_data)
    if spec.kind == KIND_NOISE:
        rng = np.random.default_rng(spec.seed)
        ct_out, pet_out = ct, pet
        if spec.target in (TARGET_CT, TARGET_BOTH):
            noise = rng.standard_normal(ct.dims, dtype=np.float32) * np.float32(spec.sigma)
            ct_out = ct.with_data(ct.data + noise)
        if spec.target in (TARGET_PET, TARGET_BOTH):
            noise = rng.standard_normal(pet.dims, dtype=np.float32) * np.float32(spec.sigma)
            pet_out = pet.with_data(pet.data + noise)
        return ct_out, pet_out
    raise ParameterError(f"unknown transform kind {spec.kind!r}")


def invert_on_prediction(spec: TransformSpec, prob: Volume3D) -> Volume3D:
    """Map a prediction made on transformed input back to the reference frame.

    Flip is self-inverse, rotate90 inverts with 4-k quarter turns, zoom with
    the reciprocal factor; intensity kinds and identity pass through.
    """
    if not is_spatial(spec):
        return prob
    return apply_spatial(inverse_spec(spec), prob)


@dataclass(frozen=True)
class AugmentationSet:
    """Ordered transforms; index i is the coefficient index of weight i.

    The first entry is always the identity so index 0 is the unaugmented
    baseline prediction.
    """

    specs: tuple[TransformSpec, ...]

    def __post_init__(self):
        specs = tuple(self.specs)
        if len(specs) < 1:
            raise ParameterError("augmentation set must contain at least one transform")
        if specs[0].kind != KIND_IDENTITY:
            raise ParameterError("augmentation set must start with the identity transform")
        if len(set(specs)) != len(specs):
            raise ParameterError("augmentation set contains duplicate transforms")
        object.__setattr__(self, "specs", specs)

    def __len__(self) -> int:
        return len(self.specs)

    def __iter__(self):
        return iter(self.specs)

    def to_json(self) -> list[dict]:
        return [spec.to_json() for spec in self.specs]

    @classmethod
    def from_json(cls, doc: list[dict]) -> "AugmentationSet":
        return cls(tuple(TransformSpec.from_json(item) for item in doc))

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2)


def default_augmentation_set() -> AugmentationSet:
    """The stock 11-transform set: identity, the three axis flips, one
    in-plane quarter turn, per-channel intensity shifts and noise, and a
    zoom in/out pair."""
    return AugmentationSet((
        IDENTITY,
        TransformSpec(KIND_FLIP, axis=1),
        TransformSpec(KIND_FLIP, axis=2),
        TransformSpec(KIND_FLIP, axis=3),
        TransformSpec(KIND_ROTATE90, plane="xy", k=1),
        TransformSpec(KIND_SHIFT, offset=0.10, target=TARGET_CT),
        TransformSpec(KIND_SHIFT, offset=0.10, target=TARGET_PET),
        TransformSpec(KIND_NOISE, sigma=0.05, seed=101, target=TARGET_CT),
        TransformSpec(KIND_NOISE, sigma=0.05, seed=202, target=TARGET_PET),
        TransformSpec(KIND_ZOOM, factor=1.1),
        TransformSpec(KIND_ZOOM, factor=0.9),
    ))
