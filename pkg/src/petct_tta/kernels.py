"""Hot numeric kernels with two interchangeable backends.

The numba backend is used when importable; setting the environment variable
``PETCT_TTA_DISABLE_NUMBA=1`` (before import) forces the pure numpy/scipy
fallback. Both backends implement the same contracts and agree to float
rounding; ``benchmarks/bench_kernels.py`` compares their throughput.
"""

import os

import numpy as np
from scipy import ndimage

DISABLE_ENV = "PETCT_TTA_DISABLE_NUMBA"

_nb = None
_numba = None
if os.environ.get(DISABLE_ENV, "").strip().lower() not in {"1", "true", "yes", "on"}:
    # the default layer probe warns on boxes with an old TBB; workqueue is
    # always available and the user can still override the choice
    os.environ.setdefault("NUMBA_THREADING_LAYER", "workqueue")
    try:
        import numba as _numba
        from . import _numba_kernels as _nb
    except ImportError:
        _nb = None
        _numba = None


def backend() -> str:
    """Active kernel backend, ``"numba"`` or ``"numpy"``."""
    return "numpy" if _nb is None else "numba"


# ---------------------------------------------------------------------------
# zoom resampling

def zoom_resample_numpy(src: np.ndarray, factor: float) -> np.ndarray:
    """Trilinear center resample, vectorized numpy path."""
    src = np.asarray(src, dtype=np.float32)
    nx, ny, nz = src.shape
    coords = []
    for n, idx in zip((nx, ny, nz), np.ix_(np.arange(nx), np.arange(ny), np.arange(nz))):
        c = (n - 1) * 0.5
        coords.append(c + (idx.astype(np.float64) - c) / factor)
    base = [np.floor(c).astype(np.int64) for c in coords]
    frac = [c - b for c, b in zip(coords, base)]

    out = np.zeros((nx, ny, nz), dtype=np.float64)
    dims = (nx, ny, nz)
    for dx in range(2):
        wx = frac[0] if dx == 1 else 1.0 - frac[0]
        ix = base[0] + dx
        for dy in range(2):
            wy = frac[1] if dy == 1 else 1.0 - frac[1]
            iy = base[1] + dy
            for dz in range(2):
                wz = frac[2] if dz == 1 else 1.0 - frac[2]
                iz = base[2] + dz
                valid = (
                    (ix >= 0) & (ix < dims[0])
                    & (iy >= 0) & (iy < dims[1])
                    & (iz >= 0) & (iz < dims[2])
                )
                vals = src[ix.clip(0, dims[0] - 1), iy.clip(0, dims[1] - 1), iz.clip(0, dims[2] - 1)]
                out += np.where(valid, wx * wy * wz * vals, 0.0)
    return out.astype(np.float32)


def zoom_resample(src: np.ndarray, factor: float) -> np.ndarray:
    """Resample about the volume center by ``factor``; dims preserved,
    out-of-range samples read as zero."""
    if _nb is None:
        return zoom_resample_numpy(src, factor)
    return _nb.zoom_resample(np.asarray(src, dtype=np.float32), float(factor))


# ---------------------------------------------------------------------------
# connected-component labeling

_CONNECTIVITY_RANK = {6: 1, 18: 2, 26: 3}


def neighbor_offsets(connectivity: int) -> np.ndarray:
    """(K, 3) displacement table for 6/18/26 3D connectivity."""
    if connectivity not in _CONNECTIVITY_RANK:
        raise ValueError(f"connectivity must be 6, 18 or 26, got {connectivity}")
    rank = _CONNECTIVITY_RANK[connectivity]
    offs = [
        (dx, dy, dz)
        for dx in (-1, 0, 1)
        for dy in (-1, 0, 1)
        for dz in (-1, 0, 1)
        if (dx, dy, dz) != (0, 0, 0) and abs(dx) + abs(dy) + abs(dz) <= rank
    ]
    return np.array(offs, dtype=np.int64)


def label_components_numpy(mask: np.ndarray, connectivity: int):
    """scipy.ndimage labeling path."""
    if connectivity not in _CONNECTIVITY_RANK:
        raise ValueError(f"connectivity must be 6, 18 or 26, got {connectivity}")
    structure = ndimage.generate_binary_structure(3, _CONNECTIVITY_RANK[connectivity])
    labels, count = ndimage.label(np.asarray(mask) != 0, structure=structure)
    return labels.astype(np.int32), int(count)


def label_components(mask: np.ndarray, connectivity: int):
    """Label foreground components; returns (int32 label volume, count).

    Voxels share a label iff connected under the chosen neighborhood;
    background stays 0, labels run 1..count.
    """
    if _nb is None:
        return label_components_numpy(mask, connectivity)
    mask_u8 = np.ascontiguousarray(np.asarray(mask) != 0).view(np.uint8)
    labels, count = _nb.label_components(mask_u8, neighbor_offsets(connectivity))
    return labels, int(count)


# ---------------------------------------------------------------------------
# fused-dice counting (the optimizer's inner loop)

def fused_counts_numpy(stack_t: np.ndarray, u: np.ndarray, theta: float, gt: np.ndarray):
    fused = stack_t @ u.astype(np.float32)
    pred = fused >= theta
    return int(np.count_nonzero(pred & (gt != 0))), int(np.count_nonzero(pred))


def fused_counts(stack_t: np.ndarray, u: np.ndarray, theta: float, gt: np.ndarray):
    """Counts for the thresholded weighted average of aligned maps.

    ``stack_t``: (N, m) float32 voxel-major prediction stack; ``u``: (m,)
    normalized weights; ``gt``: (N,) uint8. Returns (|pred∧gt|, |pred|).
    """
    if _nb is None:
        return fused_counts_numpy(stack_t, u, theta, gt)
    inter, psum = _nb.fused_counts(
        np.ascontiguousarray(stack_t, dtype=np.float32),
        np.asarray(u, dtype=np.float64),
        float(theta),
        np.ascontiguousarray(gt, dtype=np.uint8),
    )
    return int(inter), int(psum)


def batch_fused_counts_numpy(stack_t, cand, theta, gt, chunk=64):
    n_cand = cand.shape[0]
    inter = np.empty(n_cand, dtype=np.int64)
    psum = np.empty(n_cand, dtype=np.int64)
    gt_rows = np.flatnonzero(gt)
    cand32 = cand.astype(np.float32)
    for lo in range(0, n_cand, chunk):
        hi = min(lo + chunk, n_cand)
        fused = stack_t @ cand32[lo:hi].T       # (N, hi-lo)
        pred = fused >= theta
        psum[lo:hi] = np.count_nonzero(pred, axis=0)
        inter[lo:hi] = np.count_nonzero(pred[gt_rows], axis=0)
    return inter, psum


def batch_fused_counts(stack_t: np.ndarray, cand: np.ndarray, theta: float, gt: np.ndarray):
    """:func:`fused_counts` for each row of candidate weights ``cand`` (L, m)."""
    if _nb is None:
        return batch_fused_counts_numpy(stack_t, cand, theta, gt)
    n_cand = cand.shape[0]
    inter = np.empty(n_cand, dtype=np.int64)
    psum = np.empty(n_cand, dtype=np.int64)
    _nb.batch_fused_counts(
        np.ascontiguousarray(stack_t, dtype=np.float32),
        np.ascontiguousarray(np.asarray(cand, dtype=np.float64).T),
        float(theta),
        np.ascontiguousarray(gt, dtype=np.uint8),
        _numba.get_num_threads(),
        inter,
        psum,
    )
    return inter, psum
