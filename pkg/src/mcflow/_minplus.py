"""Exact min-plus convolution with the Euclidean cone on a box of cells.

Computes, for every requested target cell ``i``,

    out_i = min(cap, min_{j source} vals_j + eps * |j - i|)

by branch and bound over square tiles of sources. A tile is skipped only
when a lower bound on all of its candidates exceeds the current best by
more than ``margin``, so the result equals the brute-force minimum bit for
bit (each candidate is computed with the same floating point expression,
and ``min`` does not depend on visiting order).
"""

from __future__ import annotations

from functools import lru_cache

import os

import numba
import numpy as np

# skip the TBB probe (it warns on old TBB builds); an explicit env choice wins
if "NUMBA_THREADING_LAYER" not in os.environ:
    try:
        from numba.np.ufunc import omppool  # noqa: F401
        numba.config.THREADING_LAYER = "omp"
    except ImportError:
        numba.config.THREADING_LAYER = "workqueue"

_MARGIN = 1e-9


@numba.njit(cache=True, parallel=True)
def _scan(targets, coords, tshape, tstrides, block, eps, off, off_lb,
          tile_ptr, tile_src, tile_min, gmin, vals, cap, margin, init, out):
    ndim = coords.shape[1]
    n_off = off.shape[0]
    for t in numba.prange(targets.shape[0]):
        i = targets[t]
        best = cap if init[t] > cap else init[t]
        for o in range(n_off):
            if off_lb[o] + gmin > best + margin:
                break
            tid = 0
            box2 = 0
            inside = True
            for k in range(ndim):
                c = coords[i, k]
                tk = c // block + off[o, k]
                if tk < 0 or tk >= tshape[k]:
                    inside = False
                    break
                tid += tk * tstrides[k]
                lo = tk * block
                hi = lo + block - 1
                if c < lo:
                    box2 += (lo - c) * (lo - c)
                elif c > hi:
                    box2 += (c - hi) * (c - hi)
            if not inside:
                continue
            s0 = tile_ptr[tid]
            s1 = tile_ptr[tid + 1]
            if s0 == s1:
                continue
            if tile_min[tid] + eps * np.sqrt(np.float64(box2)) > best + margin:
                continue
            for p in range(s0, s1):
                j = tile_src[p]
                d2 = 0
                for k in range(ndim):
                    dd = coords[j, k] - coords[i, k]
                    d2 += dd * dd
                cand = vals[j] + eps * np.sqrt(np.float64(d2))
                if cand < best:
                    best = cand
        out[t] = best


_NDIR = 32


@numba.njit(cache=True)
def _dir_minima(src, coords, vals, block, tshape1, eps, cs, sn):
    """Per tile and direction ``e_k``: min over sources of ``vals_j + eps * e_k . (j - c)``."""
    ndir = cs.shape[0]
    nt = tshape1[0] * tshape1[1]
    out = np.full((nt, ndir), np.inf)
    half = 0.5 * (block - 1)
    for p in range(src.shape[0]):
        j = src[p]
        tx = coords[j, 0] // block
        ty = coords[j, 1] // block
        t = tx * tshape1[1] + ty
        dx = coords[j, 0] - (tx * block + half)
        dy = coords[j, 1] - (ty * block + half)
        v = vals[j]
        for k in range(ndir):
            c = v + eps * (cs[k] * dx + sn[k] * dy)
            if c < out[t, k]:
                out[t, k] = c
    return out


_PSEUDO_BINS = 512


def _direction_table(ndir: int):
    """Unit directions and a pseudo-angle -> nearest-direction lookup table."""
    ang = 2.0 * np.pi * np.arange(ndir) / ndir
    cs, sn = np.cos(ang), np.sin(ang)
    centers = (np.arange(_PSEUDO_BINS) + 0.5) * 4.0 / _PSEUDO_BINS
    # invert the pseudo-angle at bin centers
    q = np.floor(centers).astype(int)
    f = centers - q
    theta = q * (np.pi / 2) + np.arctan2(f, 1.0 - f)
    table = np.rint(theta / (2.0 * np.pi) * ndir).astype(np.int64) % ndir
    return cs, sn, table


@numba.njit(cache=True, inline="always")
def _pseudo_angle(x, y):
    # monotone in the true angle, values in [0, 4)
    ax = abs(x)
    ay = abs(y)
    f = ay / (ax + ay)
    if x >= 0.0:
        p = f if y >= 0.0 else 4.0 - f
    else:
        p = 2.0 - f if y >= 0.0 else 2.0 + f
    return p if p < 4.0 else 0.0


@numba.njit(cache=True, inline="always")
def _tile_bound(cx, cy, tx, ty, block, tmin, dmin, eps, radius, cs, sn, table, thr):
    lo = tx * block
    hi = lo + block - 1
    bx = lo - cx if cx < lo else (cx - hi if cx > hi else 0)
    lo = ty * block
    hi = lo + block - 1
    by = lo - cy if cy < lo else (cy - hi if cy > hi else 0)
    b1 = tmin + eps * np.sqrt(np.float64(bx * bx + by * by))
    if b1 > thr:
        return b1
    # |j - i| >= e.(j - c) + |c - i| with e = (c - i)/|c - i|; e is replaced by a
    # tabulated direction e_k at the cost of |e - e_k| * radius
    half = 0.5 * (block - 1)
    ex = tx * block + half - cx
    ey = ty * block + half - cy
    n = np.sqrt(ex * ex + ey * ey)
    if n == 0.0:
        return b1
    k = table[int(_pseudo_angle(ex, ey) * (table.shape[0] / 4.0))]
    gx = ex / n - cs[k]
    gy = ey / n - sn[k]
    b2 = dmin[k] + eps * (n - np.sqrt(gx * gx + gy * gy) * radius * 1.000001)
    return b1 if b1 > b2 else b2


@numba.njit(cache=True, parallel=True)
def _scan2d(targets, coords, shape1, shape2, block, ratio, eps, off2, lb2,
            tmin1, dmin1, tmin2, dmin2, tile_ptr, tile_src, gmin, vals, cap,
            margin, cs, sn, table, init, out):
    n_off = off2.shape[0]
    block2 = block * ratio
    r1 = (block - 1) / np.sqrt(2.0)
    r2 = (block2 - 1) / np.sqrt(2.0)
    eps2 = eps * eps
    for t in numba.prange(targets.shape[0]):
        i = targets[t]
        cx = coords[i, 0]
        cy = coords[i, 1]
        best = cap if init[t] > cap else init[t]
        for o in range(n_off):
            if lb2[o] + gmin > best + margin:
                break
            sx = cx // block2 + off2[o, 0]
            sy = cy // block2 + off2[o, 1]
            if sx < 0 or sx >= shape2[0] or sy < 0 or sy >= shape2[1]:
                continue
            s = sx * shape2[1] + sy
            if tmin2[s] == np.inf:
                continue
            thr = best + margin
            if _tile_bound(cx, cy, sx, sy, block2, tmin2[s], dmin2[s], eps, r2,
                           cs, sn, table, thr) > thr:
                continue
            for ax in range(ratio):
                tx = sx * ratio + ax
                if tx >= shape1[0]:
                    break
                for ay in range(ratio):
                    ty = sy * ratio + ay
                    if ty >= shape1[1]:
                        break
                    tid = tx * shape1[1] + ty
                    s0 = tile_ptr[tid]
                    s1 = tile_ptr[tid + 1]
                    if s0 == s1:
                        continue
                    thr = best + margin
                    if _tile_bound(cx, cy, tx, ty, block, tmin1[tid], dmin1[tid], eps, r1,
                                   cs, sn, table, thr) > thr:
                        continue
                    for p in range(s0, s1):
                        j = tile_src[p]
                        # cheap reject without the square root: cand > best + margin
                        room = best - vals[j]
                        if room <= 0.0:
                            continue
                        dx = coords[j, 0] - cx
                        dy = coords[j, 1] - cy
                        d2 = np.float64(dx * dx + dy * dy)
                        room += margin
                        if eps2 * d2 > room * room:
                            continue
                        cand = vals[j] + eps * np.sqrt(d2)
                        if cand < best:
                            best = cand
        out[t] = best


@lru_cache(maxsize=32)
def _coords(shape: tuple[int, ...]) -> np.ndarray:
    c = np.indices(shape).reshape(len(shape), -1).T
    return np.ascontiguousarray(c, dtype=np.int64)


@lru_cache(maxsize=32)
def _tile_offsets(tshape: tuple[int, ...], block: int, eps: float):
    ndim = len(tshape)
    rng = [np.arange(-(n - 1), n) for n in tshape]
    off = np.stack(np.meshgrid(*rng, indexing="ij"), axis=-1).reshape(-1, ndim)
    gap = np.maximum(np.abs(off) * block - (block - 1), 0)
    lb = eps * np.sqrt((gap * gap).sum(axis=1).astype(np.float64))
    order = np.argsort(lb, kind="stable")
    return np.ascontiguousarray(off[order], dtype=np.int64), np.ascontiguousarray(lb[order])


_DIRS = _direction_table(_NDIR)


def default_block(ndim: int) -> int:
    return 4 if ndim <= 2 else 2


def cone_min(vals: np.ndarray, sources: np.ndarray, targets: np.ndarray, eps: float,
             cap: float, block: int | None = None, init=None) -> np.ndarray:
    """Min-plus cone transform restricted to ``sources`` and evaluated at ``targets``.

    Parameters
    ----------
    vals : ndarray
        Values on the full box (only entries where ``sources`` is true are used).
    sources : ndarray of bool
        Same shape as ``vals``.
    targets : ndarray of bool or of flat indices
        Cells at which to evaluate.
    cap : float
        Upper cap; also the value returned when there are no sources.
    init : ndarray, optional
        Known upper bound per target (e.g. an exact candidate already in the
        source set); only used to start the search.

    Returns
    -------
    ndarray
        One value per target, in flat-index order.
    """
    shape = vals.shape
    ndim = vals.ndim
    block = default_block(ndim) if block is None else int(block)
    if targets.dtype == bool:
        targets = np.flatnonzero(targets)
    targets = np.ascontiguousarray(targets, dtype=np.int64)
    out = np.empty(len(targets))
    src_idx = np.flatnonzero(sources)
    if len(src_idx) == 0 or len(targets) == 0:
        out[:] = cap if init is None else np.minimum(init, cap)
        return out
    if init is None:
        init = np.full(len(targets), np.inf)
    init = np.ascontiguousarray(init, dtype=np.float64)

    coords = _coords(shape)
    tshape = tuple(-(-n // block) for n in shape)
    tstrides = np.array([int(np.prod(tshape[k + 1:])) for k in range(ndim)], dtype=np.int64)
    flat_vals = np.ascontiguousarray(vals, dtype=np.float64).ravel()

    tile_of = (coords[src_idx] // block) @ tstrides
    order = np.argsort(tile_of, kind="stable")
    tile_src = np.ascontiguousarray(src_idx[order])
    sorted_tiles = tile_of[order]
    ntiles = int(np.prod(tshape))
    counts = np.bincount(sorted_tiles, minlength=ntiles)
    tile_ptr = np.zeros(ntiles + 1, dtype=np.int64)
    np.cumsum(counts, out=tile_ptr[1:])
    tile_min = _tile_minima(flat_vals[tile_src], tile_ptr)

    gmin = float(flat_vals[src_idx].min())
    margin = _MARGIN * float(eps)
    if ndim == 2:
        ratio = 4
        block2 = block * ratio
        shape2 = tuple(-(-n // block2) for n in shape)
        tile2_of = (coords[tile_src] // block2) @ np.array([shape2[1], 1])
        order2 = np.argsort(tile2_of, kind="stable")
        ptr2 = np.zeros(shape2[0] * shape2[1] + 1, dtype=np.int64)
        np.cumsum(np.bincount(tile2_of, minlength=len(ptr2) - 1), out=ptr2[1:])
        tmin2 = _tile_minima(flat_vals[tile_src[order2]], ptr2)
        cs, sn, table = _DIRS
        dmin1 = _dir_minima(tile_src, coords, flat_vals, block,
                            np.array(tshape, dtype=np.int64), float(eps), cs, sn)
        dmin2 = _dir_minima(tile_src, coords, flat_vals, block2,
                            np.array(shape2, dtype=np.int64), float(eps), cs, sn)
        off2, lb2 = _tile_offsets(shape2, block2, float(eps))
        _scan2d(targets, coords, np.array(tshape, dtype=np.int64),
                np.array(shape2, dtype=np.int64), block, ratio, float(eps), off2, lb2,
                tile_min, dmin1, tmin2, dmin2, tile_ptr, tile_src, gmin, flat_vals,
                float(cap), margin, cs, sn, table, init, out)
        return out

    off, lb = _tile_offsets(tshape, block, float(eps))
    _scan(targets, coords, np.array(tshape, dtype=np.int64), tstrides, block, float(eps),
          off, lb, tile_ptr, tile_src, tile_min, gmin, flat_vals, float(cap), margin, init, out)
    return out


def _tile_minima(sorted_vals: np.ndarray, ptr: np.ndarray) -> np.ndarray:
    out = np.full(len(ptr) - 1, np.inf)
    nonempty = ptr[1:] > ptr[:-1]
    if nonempty.any():
        out[nonempty] = np.minimum.reduceat(sorted_vals, ptr[:-1][nonempty])
    return out


def cone_max(vals, sources, targets, eps, floor, block=None, init=None):
    """``max(floor, max_j vals_j - eps*|j - i|)``, via negation of :func:`cone_min`."""
    neg_init = None if init is None else -np.asarray(init, dtype=np.float64)
    return -cone_min(-np.asarray(vals, dtype=np.float64), sources, targets, eps, -floor,
                     block, neg_init)
