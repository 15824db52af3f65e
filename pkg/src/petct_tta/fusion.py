"""Weighted averaging of aligned per-augmentation predictions.

The fusion rule is the weighted mean (1/n) * sum(omega_i * map_i) with the
coefficients constrained to sum(omega) = n, so the result is a convex
combination of the input maps. n is fixed to the number of augmentations by
default, which makes uniform omega_i = 1 the plain TTA average.
"""

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import augment, predictor
from .errors import ContractViolation, ParameterError
from .volume import MaskVolume, Volume3D, geometry_match, require_geometry_match

SUM_TOL_REL = 1e-9


@dataclass(frozen=True)
class CoefficientVector:
    """Nonnegative contribution weights omega with sum(omega) = n."""

    omegas: tuple[float, ...]
    n: float

    def __post_init__(self):
        omegas = tuple(float(w) for w in self.omegas)
        if len(omegas) < 1:
            raise ParameterError("coefficient vector must have at least one entry")
        if any(w < 0 for w in omegas):
            raise ParameterError(f"coefficients must be >= 0, got {omegas}")
        n = float(self.n)
        if n <= 0:
            raise ParameterError(f"normalization constant must be > 0, got {n}")
        if abs(sum(omegas) - n) > SUM_TOL_REL * n:
            raise ParameterError(
                f"coefficients sum to {sum(omegas)!r}, expected {n!r} (rel tol {SUM_TOL_REL})"
            )
        object.__setattr__(self, "omegas", omegas)
        object.__setattr__(self, "n", n)

    def __len__(self) -> int:
        return len(self.omegas)

    @property
    def normalized(self) -> np.ndarray:
        """omega / n as float64; sums to 1."""
        return np.asarray(self.omegas, dtype=np.float64) / self.n

    @classmethod
    def uniform(cls, m: int, n: float | None = None) -> "CoefficientVector":
        n = float(m if n is None else n)
        return cls((n / m,) * m, n)

    def to_json(self) -> dict:
        return {"n": self.n, "omegas": list(self.omegas)}

    @classmethod
    def from_json(cls, doc: dict) -> "CoefficientVector":
        return cls(tuple(doc["omegas"]), doc["n"])

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2)


@dataclass(frozen=True)
class PredictionSet:
    """Aligned per-augmentation probability maps for one case."""

    case_id: str
    maps: tuple[Volume3D, ...]

    def __post_init__(self):
        maps = tuple(self.maps)
        if not maps:
            raise ParameterError("prediction set must contain at least one map")
        for i, vol in enumerate(maps[1:], start=1):
            if not geometry_match(maps[0], vol):
                raise ParameterError(
                    f"prediction map {i} geometry does not match map 0 "
                    f"({vol.dims} vs {maps[0].dims})"
                )
        for i, vol in enumerate(maps):
            lo, hi = float(vol.data.min()), float(vol.data.max())
            if lo < 0.0 or hi > 1.0:
                raise ParameterError(f"prediction map {i} has values outside [0, 1]")
        object.__setattr__(self, "maps", maps)

    def __len__(self) -> int:
        return len(self.maps)


def fuse(preds: PredictionSet, weights: CoefficientVector) -> Volume3D:
    """Voxelwise (1/n) * sum(omega_i * map_i); output stays in [0, 1].

    Zero-weight maps are skipped, so a one-hot weight vector returns the
    selected map bit-for-bit.
    """
    if len(weights) != len(preds):
        raise ParameterError(
            f"{len(weights)} coefficients for {len(preds)} prediction maps"
        )
    u = weights.normalized
    acc = np.zeros(preds.maps[0].dims, dtype=np.float64)
    for ui, vol in zip(u, preds.maps):
        if ui > 0:
            acc += ui * vol.data.astype(np.float64)
    fused = np.clip(acc, 0.0, 1.0).astype(np.float32)
    ref = preds.maps[0]
    return Volume3D(fused, ref.spacing, ref.origin)


def binarize(prob: Volume3D, theta: float = 0.5) -> MaskVolume:
    """Threshold a probability map; voxels with prob >= theta become 1."""
    if not 0.0 < theta < 1.0:
        raise ParameterError(f"threshold must be inside (0, 1), got {theta}")
    return MaskVolume((prob.data >= theta).astype(np.uint8), prob.spacing, prob.origin)


def tta_collect(binding, ct: Volume3D, pet: Volume3D, augs: augment.AugmentationSet,
                case_id: str = "case", jobs: int = 1) -> PredictionSet:
    """Predict on every augmented copy and invert back to the reference frame.

    The per-augmentation branches are independent; ``jobs`` > 1 runs them in
    a thread pool (useful for subprocess-backed predictors). The returned
    map order always follows the augmentation order.
    """
    require_geometry_match(ct, pet, "ct and pet")

    def one(idx_spec):
        idx, spec = idx_spec
        ct_t, pet_t = augment.apply(spec, ct, pet)
        prob = predictor.predict(binding, ct_t, pet_t, case_id, idx)
        aligned = augment.invert_on_prediction(spec, prob)
        if not geometry_match(aligned, ct):
            raise ContractViolation(
                f"augmentation {idx}: inverted prediction geometry {aligned.dims} "
                f"does not match the reference frame {ct.dims}"
            )
        return idx, aligned

    items = list(enumerate(augs))
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = dict(pool.map(one, items))
    else:
        results = dict(map(one, items))
    return PredictionSet(case_id, tuple(results[i] for i in range(len(items))))


def tta_predict_soft(binding, ct: Volume3D, pet: Volume3D, augs: augment.AugmentationSet,
                     weights: CoefficientVector, case_id: str = "case",
                     jobs: int = 1) -> Volume3D:
    """Fused soft probability map of the full TTA ensemble."""
    if len(weights) != len(augs):
        raise ParameterError(f"{len(weights)} coefficients for {len(augs)} augmentations")
    preds = tta_collect(binding, ct, pet, augs, case_id=case_id, jobs=jobs)
    return fuse(preds, weights)


def tta_predict(binding, ct: Volume3D, pet: Volume3D, augs: augment.AugmentationSet,
                weights: CoefficientVector, theta: float = 0.5,
                case_id: str = "case", jobs: int = 1) -> MaskVolume:
    """End-to-end TTA prediction: augment, predict, invert, fuse, binarize."""
    return binarize(tta_predict_soft(binding, ct, pet, augs, weights,
                                     case_id=case_id, jobs=jobs), theta)
