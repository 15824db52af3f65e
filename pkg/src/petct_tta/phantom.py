"""Synthetic CT/PET/ground-truth phantom cases for desk-scale experiments.

A case is an elliptical soft-tissue body on an air background (CT) plus a
low-uptake PET background carrying a few Gaussian hot lesions. Ground truth
is the set of voxels whose final PET value exceeds the lesion threshold, so
a threshold oracle at the same setting reproduces it almost perfectly and
every ground-truth voxel is guaranteed to sit above the default oracle
threshold.
"""

from pathlib import Path

import numpy as np
from scipy import ndimage

from .coeffopt import ValidationCase
from .errors import ParameterError
from .nifti import write_nifti
from .volume import MaskVolume, Volume3D

DEFAULT_DIMS = (64, 64, 64)
DEFAULT_SPACING = (2.0, 2.0, 2.0)
LESION_THRESHOLD = 2.0       # matches the default oracle pet_threshold
PET_BACKGROUND = 0.4
AIR_HU = -1000.0


def _smooth_field(rng, dims, sigma=4.0):
    field = ndimage.gaussian_filter(rng.standard_normal(dims), sigma=sigma, mode="nearest")
    peak = np.abs(field).max()
    return field / peak if peak > 0 else field


def generate_case(rng, dims=DEFAULT_DIMS, spacing=DEFAULT_SPACING,
                  n_lesions_range=(1, 3), pet_noise_sigma=0.04):
    """One phantom case: returns (ct, pet, gt).

    Lesions are Gaussian PET bumps whose cores rise well above
    ``LESION_THRESHOLD``; gt is the final PET thresholded strictly above it.
    """
    dims = tuple(int(d) for d in dims)
    if any(d < 16 for d in dims):
        raise ParameterError(f"phantom dims must be >= 16 per axis, got {dims}")
    lo, hi = (int(v) for v in n_lesions_range)
    if lo < 0 or hi < lo:
        raise ParameterError(f"bad lesion count range ({lo}, {hi})")

    nx, ny, nz = dims
    grid = np.indices(dims, dtype=np.float64)
    center = np.array([(d - 1) / 2.0 for d in dims]).reshape(3, 1, 1, 1)
    semi = np.array([0.42 * d for d in dims]).reshape(3, 1, 1, 1)
    body = (((grid - center) / semi) ** 2).sum(axis=0) <= 1.0

    ct = np.full(dims, AIR_HU, dtype=np.float64)
    ct[body] = 180.0 + 60.0 * _smooth_field(rng, dims)[body]

    pet = np.zeros(dims, dtype=np.float64)
    pet[body] = PET_BACKGROUND

    n_lesions = int(rng.integers(lo, hi + 1))
    for _ in range(n_lesions):
        cx = rng.uniform(0.30 * nx, 0.70 * nx)
        cy = rng.uniform(0.30 * ny, 0.70 * ny)
        cz = rng.uniform(0.30 * nz, 0.70 * nz)
        sigma = rng.uniform(2.0, 4.0)
        amplitude = rng.uniform(3.0, 5.0)
        d2 = ((grid[0] - cx) ** 2 + (grid[1] - cy) ** 2 + (grid[2] - cz) ** 2)
        pet += amplitude * np.exp(-d2 / (2.0 * sigma * sigma))

    if pet_noise_sigma > 0:
        pet = pet + pet_noise_sigma * rng.standard_normal(dims)
    pet = np.clip(pet, 0.0, None)

    gt = pet > LESION_THRESHOLD

    ct_vol = Volume3D(ct.astype(np.float32), spacing)
    pet_vol = Volume3D(pet.astype(np.float32), spacing)
    gt_vol = MaskVolume(gt.astype(np.uint8), spacing)
    return ct_vol, pet_vol, gt_vol


def make_validation_cases(n_cases, dims=DEFAULT_DIMS, spacing=DEFAULT_SPACING,
                          n_lesions_range=(1, 3), seed=0) -> list[ValidationCase]:
    """In-memory phantom suite; case k is seeded by (seed, k)."""
    cases = []
    for k in range(n_cases):
        rng = np.random.default_rng((seed, k))
        ct, pet, gt = generate_case(rng, dims=dims, spacing=spacing,
                                    n_lesions_range=n_lesions_range)
        cases.append(ValidationCase(case_id=f"case_{k:03d}", ct=ct, pet=pet, gt=gt))
    return cases


def generate_dataset(out_dir, n_cases, dims=DEFAULT_DIMS, spacing=DEFAULT_SPACING,
                     n_lesions_range=(1, 3), seed=0) -> list[str]:
    """Write ct/pet/seg NIfTI triples, one directory per case; deterministic
    for a given seed regardless of generation order."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    case_ids = []
    for k in range(int(n_cases)):
        rng = np.random.default_rng((seed, k))
        ct, pet, gt = generate_case(rng, dims=dims, spacing=spacing,
                                    n_lesions_range=n_lesions_range)
        case_id = f"case_{k:03d}"
        case_dir = out_dir / case_id
        case_dir.mkdir(exist_ok=True)
        write_nifti(ct, case_dir / "ct.nii.gz")
        write_nifti(pet, case_dir / "pet.nii.gz")
        write_nifti(gt.to_volume(), case_dir / "seg.nii.gz")
        case_ids.append(case_id)
    return case_ids
