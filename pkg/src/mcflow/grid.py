"""Uniform grid geometry, scalar fields on it, phase masks and the discrete Laplacian.

Cells are indexed by integer tuples; the center of cell ``i`` sits at ``eps * i``.
Distances between cells are always evaluated as ``eps * sqrt(sum(di**2))`` so
that every routine (fast or brute force) produces bit-identical candidates.
Out-of-box neighbors are mirrored at the faces (half-sample symmetric
reflection), the convention diagonalized by the type-II DCT.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .errors import GeometryMismatch

DEFAULT_SATURATION_CELLS = 30.0


@dataclass(frozen=True)
class GridGeometry:
    """Box of cells on the lattice ``eps * Z^N``."""

    extents: tuple[int, ...]
    spacing: float = 1.0

    def __post_init__(self):
        ext = tuple(int(n) for n in self.extents)
        object.__setattr__(self, "extents", ext)
        if len(ext) < 1:
            raise ValueError("grid needs at least one axis")
        if any(n < 3 for n in ext):
            raise ValueError(f"every extent must be >= 3, got {ext}")
        if not self.spacing > 0:
            raise ValueError(f"spacing must be positive, got {self.spacing}")

    @property
    def dim(self) -> int:
        return len(self.extents)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.extents

    @property
    def size(self) -> int:
        return int(np.prod(self.extents))

    def reflect(self, index: Sequence[int]) -> tuple[int, ...]:
        """Map a possibly out-of-box cell index to its mirror image inside the box."""
        out = []
        for i, n in zip(index, self.extents):
            period = 2 * n
            i = i % period
            out.append(i if i < n else period - 1 - i)
        return tuple(out)

    def index_grids(self) -> list[np.ndarray]:
        return list(np.indices(self.extents))

    def distance_from(self, center: Sequence[float]) -> np.ndarray:
        """Euclidean distance (length units) from each cell center to ``center`` (index units)."""
        grids = self.index_grids()
        d2 = sum((g - c) ** 2 for g, c in zip(grids, center))
        return self.spacing * np.sqrt(d2)


@dataclass
class ScalarField:
    """Real values on a grid, saturated at ``+-saturation``.

    ``flags`` carries soft failure markers such as ``"one_phase_empty"`` or
    ``"extinct"`` set by operations that return a saturated field instead of
    raising.
    """

    geometry: GridGeometry
    values: np.ndarray
    saturation: float | None = None
    lipschitz: bool = False
    flags: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != self.geometry.shape:
            raise GeometryMismatch(
                f"values shape {self.values.shape} != grid {self.geometry.shape}"
            )
        if self.saturation is None:
            self.saturation = DEFAULT_SATURATION_CELLS * self.geometry.spacing
        if not self.saturation > 0:
            raise ValueError("saturation must be positive")

    def with_values(self, values, *, lipschitz=False, flags=frozenset()) -> "ScalarField":
        return replace(self, values=np.asarray(values, dtype=np.float64),
                       lipschitz=lipschitz, flags=frozenset(flags))

    @property
    def negative_count(self) -> int:
        return int(np.count_nonzero(self.values < 0))


@dataclass
class PhaseMask:
    """Integer labels per cell.

    For two-phase problems label 0 marks the inside set (negative distance)
    and 1 the outside; partitions use labels ``1..L``.
    """

    geometry: GridGeometry
    labels: np.ndarray

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.labels.shape != self.geometry.shape:
            raise GeometryMismatch(
                f"labels shape {self.labels.shape} != grid {self.geometry.shape}"
            )

    @property
    def inside(self) -> np.ndarray:
        return self.labels == 0

    def is_binary(self) -> bool:
        return bool(np.isin(self.labels, (0, 1)).all())


def disk_mask(geometry: GridGeometry, radius: float, center=None) -> PhaseMask:
    """Mask whose inside set is the closed ball of ``radius`` (length units).

    ``center`` is given in index units and defaults to the cell ``n // 2`` on
    each axis, so the ball is centered on a lattice point.
    """
    if center is None:
        center = [n // 2 for n in geometry.extents]
    r = geometry.distance_from(center)
    return PhaseMask(geometry, np.where(r <= radius, 0, 1))


def discrete_laplacian(field: ScalarField) -> ScalarField:
    """Five-point (2N+1-point) Laplacian with mirror reflection at the box faces."""
    v = field.values
    eps2 = field.geometry.spacing ** 2
    padded = np.pad(v, 1, mode="symmetric")
    inner = tuple(slice(1, -1) for _ in range(v.ndim))
    out = np.zeros_like(v)
    for axis in range(v.ndim):
        lo = list(inner)
        hi = list(inner)
        lo[axis] = slice(0, -2)
        hi[axis] = slice(2, None)
        out += padded[tuple(lo)] + padded[tuple(hi)] - 2.0 * v
    return field.with_values(out / eps2)


def _pairwise_min_distance(src: np.ndarray, dst: np.ndarray, eps: float,
                           chunk: int = 2048) -> np.ndarray:
    """For each row of ``dst`` the minimum distance to any row of ``src`` (brute force)."""
    out = np.empty(len(dst))
    for start in range(0, len(dst), chunk):
        block = dst[start:start + chunk]
        diff = block[:, None, :] - src[None, :, :]
        d2 = (diff * diff).sum(axis=-1).astype(np.float64)
        out[start:start + chunk] = eps * np.sqrt(d2.min(axis=1))
    return out


def exact_signed_distance(mask: PhaseMask, saturation: float | None = None) -> ScalarField:
    """Brute-force signed distance between cell centers, negative on label 0.

    Each cell gets the distance to the nearest cell of the opposite phase.
    If a phase is empty the field is saturated and flagged
    ``"one_phase_empty"``.

    On the lattice this is only 1-Lipschitz up to ``eps``: an inside cell and
    an outside cell can both sit a full step from the interface along
    directions that do not line up (the result is not flagged Lipschitz).
    """
    geom = mask.geometry
    eps = geom.spacing
    dbar = DEFAULT_SATURATION_CELLS * eps if saturation is None else saturation
    inside = mask.inside
    coords = np.argwhere(np.ones(geom.shape, dtype=bool))
    flat_inside = inside.ravel()
    if flat_inside.all() or not flat_inside.any():
        val = -dbar if flat_inside.all() else dbar
        return ScalarField(geom, np.full(geom.shape, val), dbar, lipschitz=True,
                           flags=frozenset({"one_phase_empty"}))
    pin = coords[flat_inside]
    pout = coords[~flat_inside]
    values = np.empty(geom.size)
    values[flat_inside] = -_pairwise_min_distance(pout, pin, eps)
    values[~flat_inside] = _pairwise_min_distance(pin, pout, eps)
    values = np.clip(values, -dbar, dbar).reshape(geom.shape)
    return ScalarField(geom, values, dbar)


def seed_field(mask: PhaseMask, saturation: float | None = None) -> ScalarField:
    """``-eps/2`` on the inside set, ``+eps/2`` elsewhere."""
    half = 0.5 * mask.geometry.spacing
    values = np.where(mask.inside, -half, half)
    return ScalarField(mask.geometry, values, saturation, lipschitz=True)


@dataclass
class LipschitzReport:
    ok: bool
    worst_excess: float
    worst_pair: tuple | None
    pairs_checked: int

    def __bool__(self):
        return self.ok


def _neighbor_offsets(ndim: int) -> list[tuple[int, ...]]:
    # half of the 3^N - 1 neighbor offsets; the other half are their negatives
    offs = np.indices((3,) * ndim).reshape(ndim, -1).T - 1
    keep = []
    for o in offs:
        nz = np.flatnonzero(o)
        if len(nz) and o[nz[0]] > 0:
            keep.append(tuple(int(x) for x in o))
    return keep


def lipschitz_check(field: ScalarField, n_random: int = 10_000, seed: int = 0,
                    tol: float | None = None) -> LipschitzReport:
    """Check ``|v_i - v_j| <= |i - j| + tol`` on all neighbor pairs plus random pairs.

    Neighbor pairs include diagonals. Adjacency alone does not imply the
    Euclidean bound globally, hence the ``n_random`` long-range samples.
    """
    v = field.values
    eps = field.geometry.spacing
    tol = 1e-9 * eps if tol is None else tol
    worst = -np.inf
    worst_pair = None
    checked = 0
    for off in _neighbor_offsets(v.ndim):
        a = tuple(slice(max(0, -o), n - max(0, o)) for n, o in zip(v.shape, off))
        b = tuple(slice(max(0, o), n - max(0, -o)) for n, o in zip(v.shape, off))
        excess = np.abs(v[a] - v[b]) - eps * np.sqrt(sum(o * o for o in off))
        checked += excess.size
        if excess.size:
            k = int(np.argmax(excess))
            if excess.flat[k] > worst:
                worst = float(excess.flat[k])
                ia = np.unravel_index(k, excess.shape)
                i = tuple(int(x + s.start) for x, s in zip(ia, a))
                j = tuple(x + o for x, o in zip(i, off))
                worst_pair = (i, j)
    if n_random and v.size > 1:
        rng = np.random.default_rng(seed)
        flat = v.ravel()
        p = rng.integers(0, v.size, n_random)
        q = rng.integers(0, v.size, n_random)
        pc = np.array(np.unravel_index(p, v.shape)).T
        qc = np.array(np.unravel_index(q, v.shape)).T
        dist = eps * np.sqrt(((pc - qc) ** 2).sum(axis=1).astype(np.float64))
        excess = np.abs(flat[p] - flat[q]) - dist
        checked += n_random
        k = int(np.argmax(excess))
        if excess[k] > worst:
            worst = float(excess[k])
            worst_pair = (tuple(int(x) for x in pc[k]), tuple(int(x) for x in qc[k]))
    return LipschitzReport(bool(worst <= tol), float(worst), worst_pair, checked)
