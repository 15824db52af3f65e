"""Numba-compiled hot kernels. Import only via :mod:`petct_tta.kernels`."""

import numpy as np
from numba import njit, prange


@njit(cache=True, parallel=True)
def zoom_resample(src, factor):
    """Resample ``src`` about its center by ``factor``, trilinear, zero outside.

    Output voxel (i,j,k) samples src at center + (index - center)/factor, so
    factor > 1 magnifies the central region and factor < 1 shrinks the content
    into the interior with zero padding. Dims are preserved.
    """
    nx, ny, nz = src.shape
    out = np.zeros((nx, ny, nz), dtype=np.float32)
    cx = (nx - 1) * 0.5
    cy = (ny - 1) * 0.5
    cz = (nz - 1) * 0.5
    inv = 1.0 / factor
    for i in prange(nx):
        x = cx + (i - cx) * inv
        x0 = int(np.floor(x))
        fx = x - x0
        for j in range(ny):
            y = cy + (j - cy) * inv
            y0 = int(np.floor(y))
            fy = y - y0
            for k in range(nz):
                z = cz + (k - cz) * inv
                z0 = int(np.floor(z))
                fz = z - z0
                acc = 0.0
                for dx in range(2):
                    xi = x0 + dx
                    if xi < 0 or xi >= nx:
                        continue
                    wx = fx if dx == 1 else 1.0 - fx
                    for dy in range(2):
                        yj = y0 + dy
                        if yj < 0 or yj >= ny:
                            continue
                        wy = fy if dy == 1 else 1.0 - fy
                        for dz in range(2):
                            zk = z0 + dz
                            if zk < 0 or zk >= nz:
                                continue
                            wz = fz if dz == 1 else 1.0 - fz
                            acc += wx * wy * wz * src[xi, yj, zk]
                out[i, j, k] = acc
    return out


@njit(cache=True)
def label_components(mask, offsets):
    """Label connected foreground components with an explicit-stack flood fill.

    ``offsets`` is a (K, 3) int64 array of neighbor displacements defining the
    connectivity. Labels are assigned 1..count in raster-scan seed order.
    """
    nx, ny, nz = mask.shape
    labels = np.zeros((nx, ny, nz), dtype=np.int32)
    stack = np.empty(mask.size, dtype=np.int64)
    count = 0
    for x in range(nx):
        for y in range(ny):
            for z in range(nz):
                if mask[x, y, z] == 0 or labels[x, y, z] != 0:
                    continue
                count += 1
                labels[x, y, z] = count
                stack[0] = (x * ny + y) * nz + z
                top = 1
                while top > 0:
                    top -= 1
                    flat = stack[top]
                    cz = flat % nz
                    rest = flat // nz
                    cy = rest % ny
                    cx = rest // ny
                    for o in range(offsets.shape[0]):
                        ax = cx + offsets[o, 0]
                        ay = cy + offsets[o, 1]
                        az = cz + offsets[o, 2]
                        if ax < 0 or ax >= nx or ay < 0 or ay >= ny or az < 0 or az >= nz:
                            continue
                        if mask[ax, ay, az] != 0 and labels[ax, ay, az] == 0:
                            labels[ax, ay, az] = count
                            stack[top] = (ax * ny + ay) * nz + az
                            top += 1
    return labels, count


@njit(cache=True, parallel=True)
def fused_counts(stack_t, u, theta, gt):
    """Threshold the weighted combination of prediction maps and count voxels.

    ``stack_t`` is (N, m) float32, one row per voxel; ``u`` (m,) float64 sums
    to 1. Returns (intersection-with-gt count, predicted-foreground count).
    """
    n, m = stack_t.shape
    inter = 0
    psum = 0
    for j in prange(n):
        acc = 0.0
        for i in range(m):
            acc += u[i] * stack_t[j, i]
        if acc >= theta:
            psum += 1
            if gt[j] != 0:
                inter += 1
    return inter, psum


@njit(cache=True, parallel=True)
def batch_fused_counts(stack_t, cand_t, theta, gt, nthreads, inter_out, psum_out):
    """:func:`fused_counts` for every candidate column of ``cand_t`` (m, L).

    Voxels are chunked across ``nthreads`` workers and the candidate loop runs
    innermost over contiguous memory, so each stack row is streamed once per
    pass and the combination vectorizes across candidates. ``nthreads`` comes
    in as an argument because querying it here would defeat the compile cache.
    """
    n, m = stack_t.shape
    n_cand = cand_t.shape[1]
    chunk = (n + nthreads - 1) // nthreads
    inter_parts = np.zeros((nthreads, n_cand), dtype=np.int64)
    psum_parts = np.zeros((nthreads, n_cand), dtype=np.int64)
    for t in prange(nthreads):
        lo = t * chunk
        hi = min(lo + chunk, n)
        acc = np.empty(n_cand, dtype=np.float64)
        for j in range(lo, hi):
            v0 = stack_t[j, 0]
            for c in range(n_cand):
                acc[c] = v0 * cand_t[0, c]
            for i in range(1, m):
                vi = stack_t[j, i]
                for c in range(n_cand):
                    acc[c] += vi * cand_t[i, c]
            in_gt = gt[j] != 0
            for c in range(n_cand):
                if acc[c] >= theta:
                    psum_parts[t, c] += 1
                    if in_gt:
                        inter_parts[t, c] += 1
    for c in range(n_cand):
        inter = 0
        psum = 0
        for t in range(nthreads):
            inter += inter_parts[t, c]
            psum += psum_parts[t, c]
        inter_out[c] = inter
        psum_out[c] = psum
