"""Shared test helpers: random data builders and independent brute-force
oracles (kept deliberately naive and separate from the library code paths)."""

from collections import deque

import numpy as np

from petct_tta.volume import MaskVolume, Volume3D


def random_volume(rng, dims=(4, 4, 4), spacing=(1.0, 1.0, 1.0), origin=(0.0, 0.0, 0.0),
                  lo=0.0, hi=1.0) -> Volume3D:
    data = rng.uniform(lo, hi, size=dims).astype(np.float32)
    return Volume3D(data, spacing, origin)


def random_mask(rng, dims=(6, 6, 6), density=0.4, spacing=(1.0, 1.0, 1.0)) -> MaskVolume:
    data = (rng.random(dims) < density).astype(np.uint8)
    return MaskVolume(data, spacing)


def random_pair(rng, dims=(8, 8, 8), spacing=(1.0, 1.0, 1.0)):
    """A geometry-matched CT/PET pair with distinct content."""
    ct = random_volume(rng, dims, spacing, lo=0.0, hi=1.0)
    pet = random_volume(rng, dims, spacing, lo=0.0, hi=5.0)
    return ct, pet


def smooth_blob_field(rng, dims=(64, 64, 64), n_blobs=3) -> np.ndarray:
    """Sum of Gaussian bumps confined to the central region so the field has
    decayed to ~0 before the shell that zooming in pushes out of frame.

    Rescaled (not clipped) into [0, 1]: clipping would crease the field and
    ruin the smoothness the interpolation error bound relies on.
    """
    field = np.zeros(dims, dtype=np.float32)
    grid = np.indices(dims, dtype=np.float64)
    for _ in range(n_blobs):
        center = [rng.uniform(0.375 * d, 0.625 * d) for d in dims]
        sigma = rng.uniform(5.0, 8.0)
        d2 = sum((g - c) ** 2 for g, c in zip(grid, center))
        field += (rng.uniform(0.3, 1.0) * np.exp(-d2 / (2.0 * sigma * sigma))).astype(np.float32)
    peak = float(field.max())
    if peak > 1.0:
        field /= peak
    return field


# ---------------------------------------------------------------------------
# brute-force metric oracles

def neighbor_deltas(connectivity):
    deltas = []
    for dx in (-1, 0, 1):
        for dy in (-1, 0, 1):
            for dz in (-1, 0, 1):
                if (dx, dy, dz) == (0, 0, 0):
                    continue
                manhattan = abs(dx) + abs(dy) + abs(dz)
                if connectivity == 6 and manhattan > 1:
                    continue
                if connectivity == 18 and manhattan > 2:
                    continue
                deltas.append((dx, dy, dz))
    return deltas


def flood_fill_labels(mask: np.ndarray, connectivity: int):
    """Queue-based flood fill over a boolean array; returns (labels, count)."""
    mask = np.asarray(mask) != 0
    labels = np.zeros(mask.shape, dtype=np.int32)
    deltas = neighbor_deltas(connectivity)
    nx, ny, nz = mask.shape
    count = 0
    for sx in range(nx):
        for sy in range(ny):
            for sz in range(nz):
                if not mask[sx, sy, sz] or labels[sx, sy, sz]:
                    continue
                count += 1
                queue = deque([(sx, sy, sz)])
                labels[sx, sy, sz] = count
                while queue:
                    x, y, z = queue.popleft()
                    for dx, dy, dz in deltas:
                        ax, ay, az = x + dx, y + dy, z + dz
                        if 0 <= ax < nx and 0 <= ay < ny and 0 <= az < nz \
                                and mask[ax, ay, az] and not labels[ax, ay, az]:
                            labels[ax, ay, az] = count
                            queue.append((ax, ay, az))
    return labels, count


def brute_force_dice(pred: MaskVolume, gt: MaskVolume) -> float:
    inter = 0
    psum = 0
    gsum = 0
    nx, ny, nz = pred.dims
    for x in range(nx):
        for y in range(ny):
            for z in range(nz):
                p = pred.data[x, y, z] != 0
                g = gt.data[x, y, z] != 0
                inter += p and g
                psum += p
                gsum += g
    if psum + gsum == 0:
        return 1.0
    return 2.0 * inter / (psum + gsum)


def brute_force_unmatched_ml(a: MaskVolume, b: MaskVolume, connectivity: int) -> float:
    labels, count = flood_fill_labels(a.data, connectivity)
    missed = 0
    for label in range(1, count + 1):
        component = labels == label
        if not (component & (b.data != 0)).any():
            missed += int(component.sum())
    return missed * a.voxel_volume_ml


def canonical_labels(labels: np.ndarray) -> np.ndarray:
    """Relabel components in first-occurrence raster order so labelings from
    different algorithms can be compared directly."""
    labels = np.asarray(labels)
    mapping = {}
    out = np.zeros_like(labels)
    flat = labels.ravel()
    canon = out.ravel()
    for idx in range(flat.size):
        value = flat[idx]
        if value == 0:
            continue
        if value not in mapping:
            mapping[value] = len(mapping) + 1
        canon[idx] = mapping[value]
    return out
