"""Differentiable grid sampling and 3-D convolution.

Bilinear sampling is differentiable w.r.t. both the grid and the
coordinates.  Out-of-range coordinates are clamped to the grid (clamp,
not reflect/zero: learned offsets must not see a value cliff at the
border), and the coordinate gradient is zero in the saturated region.
Inside the grid the adjoint uses the local bilinear patch; the cell for
a coordinate in [k, k+1) is cell k (right-continuous), with the top
edge folded into the last cell.
"""

from __future__ import annotations

import numpy as np

from .tensor import Tensor, _finish


def _corner_indices(coords: np.ndarray, n: int):
    """Clamped cell corners and fractional parts for one axis."""
    c = np.clip(coords, 0.0, n - 1.0)
    lo = np.floor(c).astype(np.intp)
    np.clip(lo, 0, max(n - 2, 0), out=lo)
    hi = np.minimum(lo + 1, n - 1)
    frac = c - lo
    # clamp saturation: no coordinate gradient outside the open interval
    interior = (coords > 0.0) & (coords < n - 1.0)
    return lo, hi, frac, interior


def _bilinear_forward(grids: np.ndarray, frame_idx, pts: np.ndarray):
    """Shared kernel: sample ``grids[frame_idx[i]]`` at ``pts[i]``.

    grids: (G, H, W, C); frame_idx: (M,) intp; pts: (M, 2) as (y, x).
    Returns (out, cache-for-backward).
    """
    _, h, w, _ = grids.shape
    y0, y1, fy, iny = _corner_indices(pts[:, 0], h)
    x0, x1, fx, inx = _corner_indices(pts[:, 1], w)
    g00 = grids[frame_idx, y0, x0]
    g01 = grids[frame_idx, y0, x1]
    g10 = grids[frame_idx, y1, x0]
    g11 = grids[frame_idx, y1, x1]
    wy = fy[:, None]
    wx = fx[:, None]
    top = g00 * (1.0 - wx) + g01 * wx
    bot = g10 * (1.0 - wx) + g11 * wx
    out = top * (1.0 - wy) + bot * wy
    cache = (y0, y1, fy, iny, x0, x1, fx, inx, g00, g01, g10, g11)
    return out, cache


def _bilinear_backward(g_out, grids_data, frame_idx, cache, need_grid, need_pts):
    y0, y1, fy, iny, x0, x1, fx, inx, g00, g01, g10, g11 = cache
    wy = fy[:, None]
    wx = fx[:, None]
    d_grids = None
    d_pts = None
    if need_grid:
        d_grids = np.zeros_like(grids_data)
        np.add.at(d_grids, (frame_idx, y0, x0), g_out * (1.0 - wy) * (1.0 - wx))
        np.add.at(d_grids, (frame_idx, y0, x1), g_out * (1.0 - wy) * wx)
        np.add.at(d_grids, (frame_idx, y1, x0), g_out * wy * (1.0 - wx))
        np.add.at(d_grids, (frame_idx, y1, x1), g_out * wy * wx)
    if need_pts:
        dy = ((g10 - g00) * (1.0 - wx) + (g11 - g01) * wx) * g_out
        dx = ((g01 - g00) * (1.0 - wy) + (g11 - g10) * wy) * g_out
        d_pts = np.stack([dy.sum(axis=-1) * iny, dx.sum(axis=-1) * inx], axis=-1)
    return d_grids, d_pts


def bilinear_sample(grid: Tensor, pts: Tensor) -> Tensor:
    """Sample a (H, W, C) grid at M real-valued (y, x) points -> (M, C)."""
    if grid.ndim != 3:
        raise ValueError(f"bilinear_sample expects grid (H, W, C); got {grid.shape}")
    pts_t = pts if isinstance(pts, Tensor) else Tensor(np.asarray(pts, dtype=grid.dtype))
    if pts_t.ndim != 2 or pts_t.shape[1] != 2:
        raise ValueError(f"bilinear_sample expects pts (M, 2); got {pts_t.shape}")
    grids = grid.data[None]
    frame_idx = np.zeros(pts_t.shape[0], dtype=np.intp)
    data, cache = _bilinear_forward(grids, frame_idx, pts_t.data)
    out = Tensor(data)

    def backward(g):
        d_grids, d_pts = _bilinear_backward(
            g, grids, frame_idx, cache, grid.requires_grad, pts_t.requires_grad)
        if grid.requires_grad:
            grid._accumulate(d_grids[0])
        if pts_t.requires_grad:
            pts_t._accumulate(d_pts)

    return _finish(out, (grid, pts_t), backward)


def bilinear_gather(grids: Tensor, frame_idx, pts: Tensor) -> Tensor:
    """Batched sampling across a stack of grids.

    grids: (G, H, W, C); frame_idx: (M,) int array choosing the grid per
    point (not differentiated); pts: (M, 2).  Returns (M, C).
    """
    if grids.ndim != 4:
        raise ValueError(f"bilinear_gather expects grids (G, H, W, C); got {grids.shape}")
    frame_idx = np.asarray(frame_idx, dtype=np.intp)
    data, cache = _bilinear_forward(grids.data, frame_idx, pts.data)
    out = Tensor(data)

    def backward(g):
        d_grids, d_pts = _bilinear_backward(
            g, grids.data, frame_idx, cache, grids.requires_grad, pts.requires_grad)
        if grids.requires_grad:
            grids._accumulate(d_grids)
        if pts.requires_grad:
            pts._accumulate(d_pts)

    return _finish(out, (grids, pts), backward)


def conv3d(x: Tensor, kernel: Tensor, strides=(1, 1, 1)) -> Tensor:
    """3x3x3 convolution over a (T, H, W, C) volume, zero padding 1.

    Output extents are ceil(T/st) x ceil(H/sh) x ceil(W/sw) x C'.
    Implemented as 27 strided-slice matmuls, which keeps the adjoint a
    mirror image of the forward pass.
    """
    st, sh, sw = (int(s) for s in strides)
    if min(st, sh, sw) < 1:
        raise ValueError(f"strides must be >= 1; got {strides}")
    if kernel.shape[:3] != (3, 3, 3):
        raise ValueError(f"conv3d expects a 3x3x3 kernel; got {kernel.shape}")
    t, h, w, c = x.shape
    if kernel.shape[3] != c:
        raise ValueError(f"kernel input channels {kernel.shape[3]} != data channels {c}")
    c_out = kernel.shape[4]
    to = -(-t // st)
    ho = -(-h // sh)
    wo = -(-w // sw)

    xp = np.pad(x.data, ((1, 1), (1, 1), (1, 1), (0, 0)))

    def tap(arr, k0, k1, k2):
        return arr[k0:k0 + st * (to - 1) + 1:st,
                   k1:k1 + sh * (ho - 1) + 1:sh,
                   k2:k2 + sw * (wo - 1) + 1:sw]

    acc = np.zeros((to, ho, wo, c_out), dtype=x.dtype)
    for k0 in range(3):
        for k1 in range(3):
            for k2 in range(3):
                acc += tap(xp, k0, k1, k2) @ kernel.data[k0, k1, k2]
    out = Tensor(acc)

    def backward(g):
        if kernel.requires_grad:
            dk = np.zeros_like(kernel.data)
            gm = g.reshape(-1, c_out)
            for k0 in range(3):
                for k1 in range(3):
                    for k2 in range(3):
                        patch = tap(xp, k0, k1, k2).reshape(-1, c)
                        dk[k0, k1, k2] = patch.T @ gm
            kernel._accumulate(dk)
        if x.requires_grad:
            dxp = np.zeros_like(xp)
            for k0 in range(3):
                for k1 in range(3):
                    for k2 in range(3):
                        tap(dxp, k0, k1, k2)[...] += g @ kernel.data[k0, k1, k2].T
            x._accumulate(dxp[1:1 + t, 1:1 + h, 1:1 + w])

    return _finish(out, (x, kernel), backward)
