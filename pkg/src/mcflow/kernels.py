"""Diffusion kernels: finite stencils and spectral symbols on the Neumann box.

A stencil kernel is a list of integer offsets with weights. A spectral kernel
is a symbol evaluated on the cosine frequencies ``xi_k = k / (2 n eps)`` of the
box and applied with the orthonormal type-II DCT, which diagonalizes the
mirror-reflected Laplacian.

Both carry ``derived_h``, the time step implied by the kernel's second moment.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy import fft

from .errors import BadTheta, GeometryMismatch
from .grid import GridGeometry, ScalarField

BUILTIN_KERNELS = ("explicit", "implicit", "heat")
CONSISTENCY_FREQS = (0.1, 0.25, 0.5)
CONSISTENCY_SCALES = (1.0, 0.5, 0.25)


class CFLWarning(UserWarning):
    """Time step below eps^2, outside the regime covered by the convergence theory."""


@dataclass(frozen=True)
class StencilKernel:
    """Finite kernel ``sum_j K_j delta_{eps j}``.

    Parameters
    ----------
    offsets : ndarray of int, shape (m, N)
    weights : ndarray, shape (m,)
    spacing : float
    """

    offsets: np.ndarray
    weights: np.ndarray
    spacing: float = 1.0
    name: str = "stencil"

    def __post_init__(self):
        off = np.atleast_2d(np.asarray(self.offsets, dtype=np.int64))
        w = np.asarray(self.weights, dtype=np.float64).ravel()
        if off.shape[0] != w.shape[0]:
            raise ValueError("one weight per offset required")
        object.__setattr__(self, "offsets", off)
        object.__setattr__(self, "weights", w)

    @property
    def dim(self) -> int:
        return self.offsets.shape[1]

    @property
    def derived_h(self) -> float:
        """``(1/2N) sum_j |eps j|^2 K_j``."""
        sq = (self.offsets.astype(np.float64) ** 2).sum(axis=1) * self.spacing ** 2
        return float((sq * self.weights).sum() / (2 * self.dim))

    def symbol(self, xi) -> np.ndarray:
        """Real part of ``sum_j K_j exp(-2 pi i eps j.xi)``; ``xi`` has shape (..., N)."""
        xi = np.asarray(xi, dtype=np.float64)
        phase = 2 * np.pi * self.spacing * (xi @ self.offsets.T.astype(np.float64))
        return np.cos(phase) @ self.weights

    def at_spacing(self, eps: float) -> "StencilKernel":
        # same weights on a finer lattice; h scales like eps^2
        return StencilKernel(self.offsets, self.weights, eps, self.name)


@dataclass(frozen=True)
class SpectralKernel:
    """Kernel given by its symbol, applied through the DCT on ``geometry``.

    ``kind`` is ``"implicit"`` (resolvent ``1/(1 - tau Lap)``) or ``"heat"``
    (semigroup ``exp(tau Lap)``), with ``Lap`` the symbol of the discrete
    Laplacian.
    """

    kind: str
    tau: float
    geometry: GridGeometry

    def __post_init__(self):
        if self.kind not in ("implicit", "heat"):
            raise ValueError(f"unknown spectral kernel {self.kind!r}")
        if not self.tau > 0:
            raise ValueError("tau must be positive")

    @property
    def name(self) -> str:
        return self.kind

    @property
    def spacing(self) -> float:
        return self.geometry.spacing

    @property
    def dim(self) -> int:
        return self.geometry.dim

    def symbol(self, xi) -> np.ndarray:
        xi = np.asarray(xi, dtype=np.float64)
        eps = self.spacing
        lap = (2.0 / eps ** 2) * (np.cos(2 * np.pi * eps * xi) - 1.0).sum(axis=-1)
        if self.kind == "implicit":
            return 1.0 / (1.0 - self.tau * lap)
        return np.exp(self.tau * lap)

    @cached_property
    def grid_symbol(self) -> np.ndarray:
        """Symbol on the tensor grid of cosine frequencies of the box."""
        axes = [np.arange(n) / (2.0 * n * self.spacing) for n in self.geometry.extents]
        xi = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
        return self.symbol(xi)

    @cached_property
    def derived_h(self) -> float:
        return _spectral_h(self.symbol, self.dim, self.spacing, self.tau)

    def at_spacing(self, eps: float) -> "SpectralKernel":
        # keep tau/eps^2 fixed so the family stays in the same regime
        scale = eps / self.spacing
        geom = GridGeometry(self.geometry.extents, eps)
        return SpectralKernel(self.kind, self.tau * scale ** 2, geom)


def _spectral_h(symbol, ndim: int, eps: float, tau: float) -> float:
    # h = -Lap(symbol)(0) / (8 pi^2 N); second differences with one Richardson step
    delta = 1e-3 / max(eps, math.sqrt(tau))

    def lap(d):
        total = 0.0
        for n in range(ndim):
            e = np.zeros(ndim)
            e[n] = d
            total += (symbol(e) + symbol(-e) - 2.0 * symbol(np.zeros(ndim))) / d ** 2
        return total

    rich = (4.0 * lap(delta / 2) - lap(delta)) / 3.0
    return float(-rich / (8 * np.pi ** 2 * ndim))


def _cfl_warn(tau: float, eps: float):
    if tau < eps ** 2:
        warnings.warn(f"h = {tau} is below eps^2 = {eps ** 2}", CFLWarning, stacklevel=3)


def explicit_euler_kernel(theta: float, epsilon: float, N: int) -> StencilKernel:
    """``(1 - theta) delta_0 + theta/(2N) sum_k (delta_{e_k} + delta_{-e_k})``.

    This is one explicit Euler step of the discrete heat equation with
    ``tau = theta eps^2 / (2N)``.

    Raises
    ------
    BadTheta
        If ``theta`` is outside ``(0, 1]``.
    """
    if not 0 < theta <= 1:
        raise BadTheta(f"theta must lie in (0, 1], got {theta}")
    offsets = [np.zeros(N, dtype=np.int64)]
    for k in range(N):
        for s in (1, -1):
            o = np.zeros(N, dtype=np.int64)
            o[k] = s
            offsets.append(o)
    weights = [1.0 - theta] + [theta / (2 * N)] * (2 * N)
    return StencilKernel(np.array(offsets), np.array(weights), float(epsilon), "explicit")


def explicit_tau(theta: float, epsilon: float, N: int) -> float:
    return theta * epsilon ** 2 / (2 * N)


def implicit_euler_symbol(tau: float, epsilon: float, geometry: GridGeometry) -> SpectralKernel:
    """Resolvent of ``u - tau Lap u = g``."""
    geometry = _with_spacing(geometry, epsilon)
    _cfl_warn(tau, epsilon)
    return SpectralKernel("implicit", float(tau), geometry)


def heat_semigroup_symbol(tau: float, epsilon: float, geometry: GridGeometry) -> SpectralKernel:
    """Discrete heat flow ``v_t = Lap v`` run for time ``tau``."""
    geometry = _with_spacing(geometry, epsilon)
    _cfl_warn(tau, epsilon)
    return SpectralKernel("heat", float(tau), geometry)


def _with_spacing(geometry: GridGeometry, eps: float) -> GridGeometry:
    if geometry.spacing == eps:
        return geometry
    return GridGeometry(geometry.extents, eps)


def apply_kernel(kernel, field: ScalarField) -> ScalarField:
    """Convolve ``field`` with ``kernel`` under mirror reflection at the faces.

    Raises
    ------
    GeometryMismatch
        If the kernel's dimension, spacing or (spectral) box differs from the field's.
    """
    geom = field.geometry
    if isinstance(kernel, SpectralKernel):
        if kernel.geometry != geom:
            raise GeometryMismatch(f"kernel built for {kernel.geometry}, field on {geom}")
        coef = fft.dctn(field.values, type=2, norm="ortho")
        out = fft.idctn(coef * kernel.grid_symbol, type=2, norm="ortho")
        # the builtin symbols are positive kernels of mass one
        return field.with_values(out, lipschitz=field.lipschitz, flags=field.flags)
    if kernel.dim != geom.dim or kernel.spacing != geom.spacing:
        raise GeometryMismatch(
            f"stencil is {kernel.dim}-D with spacing {kernel.spacing}, field is "
            f"{geom.dim}-D with spacing {geom.spacing}"
        )
    out = _convolve_stencil(kernel, field.values)
    # a nonnegative mass-one stencil averages shifted copies: Lipschitz is kept
    keeps = bool(np.all(kernel.weights >= 0)) and abs(float(kernel.weights.sum()) - 1.0) < 1e-12
    return field.with_values(out, lipschitz=field.lipschitz and keeps, flags=field.flags)


def _convolve_stencil(kernel: StencilKernel, v: np.ndarray) -> np.ndarray:
    r = int(np.abs(kernel.offsets).max()) if kernel.offsets.size else 0
    if r == 0:
        return v * kernel.weights.sum()
    if any(r > n for n in v.shape):
        idx = np.ix_(*[_reflected_range(n, r) for n in v.shape])
        padded = v[idx]
    else:
        padded = np.pad(v, r, mode="symmetric")
    out = np.zeros_like(v)
    for off, w in zip(kernel.offsets, kernel.weights):
        if w == 0.0:
            continue
        sl = tuple(slice(r + o, r + o + n) for o, n in zip(off, v.shape))
        out += w * padded[sl]
    return out


def _reflected_range(n: int, r: int) -> np.ndarray:
    i = np.arange(-r, n + r) % (2 * n)
    return np.where(i < n, i, 2 * n - 1 - i)


def impulse_response(kernel: SpectralKernel) -> np.ndarray:
    """Kernel applied to a unit mass at the box center."""
    delta = np.zeros(kernel.geometry.shape)
    delta[tuple(n // 2 for n in kernel.geometry.extents)] = 1.0
    return apply_kernel(kernel, ScalarField(kernel.geometry, delta)).values


@dataclass
class KernelReport:
    """Outcome of :func:`validate_kernel`.

    ``passes`` covers the axioms (mass, symmetry, positivity) and the symbol
    bound. The consistency check is a trend: ``consistency_errors[s][f]`` is
    ``|(1 - K(xi))/h - 4 pi^2 |xi|^2|`` at spacing scale ``s`` and frequency
    ``f``, and ``consistency_decreasing`` says whether it falls with eps at
    every frequency.
    """

    name: str
    mass_error: float
    symmetry_error: float
    positivity_violations: int
    derived_h: float
    symbol_bound_violations: int
    symbol_consistency_error: float
    consistency_errors: list = field(default_factory=list)
    consistency_decreasing: bool = True
    frequencies_checked: int = 0

    @property
    def passes(self) -> bool:
        return (self.mass_error < 1e-10 and self.symmetry_error == 0
                and self.positivity_violations == 0 and self.symbol_bound_violations == 0)

    @property
    def ok(self) -> bool:
        return self.passes and self.consistency_decreasing

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "passes": self.passes,
            "consistency_decreasing": self.consistency_decreasing,
            "mass_error": self.mass_error,
            "symmetry_error": self.symmetry_error,
            "positivity_violations": self.positivity_violations,
            "derived_h": self.derived_h,
            "symbol_bound_violations": self.symbol_bound_violations,
            "symbol_consistency_error": self.symbol_consistency_error,
            "consistency_errors": self.consistency_errors,
            "frequencies_checked": self.frequencies_checked,
        }


def _stencil_symmetry(kernel: StencilKernel) -> float:
    table = {}
    for off, w in zip(map(tuple, kernel.offsets), kernel.weights):
        table[off] = table.get(off, 0.0) + w
    return max((abs(w - table.get(tuple(-x for x in off), 0.0)) for off, w in table.items()),
               default=0.0)


def _sample_frequencies(kernel, n_random: int, seed: int) -> np.ndarray:
    eps, N = kernel.spacing, kernel.dim
    if isinstance(kernel, SpectralKernel):
        extents = kernel.geometry.extents
    else:
        extents = (16,) * N
    axes = [np.arange(n) / (2.0 * n * eps) for n in extents]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, N)
    rng = np.random.default_rng(seed)
    rand = rng.uniform(-0.5 / eps, 0.5 / eps, size=(n_random, N))
    return np.concatenate([grid, rand])


def _consistency(kernel) -> tuple[list, bool]:
    errors = []
    for s in CONSISTENCY_SCALES:
        k = kernel.at_spacing(kernel.spacing * s)
        h = k.derived_h
        row = []
        for f in CONSISTENCY_FREQS:
            xi = np.zeros(kernel.dim)
            xi[0] = f / kernel.spacing
            approx = (1.0 - float(k.symbol(xi))) / h
            row.append(abs(approx - 4 * np.pi ** 2 * float(xi @ xi)))
        errors.append(row)
    arr = np.array(errors)
    decreasing = bool(np.all(np.diff(arr, axis=0) < 0))
    return errors, decreasing


def validate_kernel(kernel, n_random: int = 1000, seed: int = 0) -> KernelReport:
    """Check the kernel axioms, the symbol bound and the consistency trend.

    The bound ``0 <= (1 - K(xi))/h <= 4 pi^2 N |xi|^2`` is tested on the full
    cosine-frequency grid of the box (a 16^N grid for stencils) plus
    ``n_random`` uniform samples in the Nyquist cell. Positivity of a spectral
    kernel is checked on its impulse response; entries above ``-1e-13`` times
    the peak count as roundoff.
    """
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", CFLWarning)
        h = kernel.derived_h
        if isinstance(kernel, StencilKernel):
            mass = abs(float(kernel.weights.sum()) - 1.0)
            sym = _stencil_symmetry(kernel)
            pos = int(np.count_nonzero(kernel.weights < 0))
        else:
            mass = abs(float(kernel.symbol(np.zeros(kernel.dim))) - 1.0)
            sym = 0.0
            resp = impulse_response(kernel)
            pos = int(np.count_nonzero(resp < -1e-13 * resp.max()))
        xi = _sample_frequencies(kernel, n_random, seed)
        ratio = (1.0 - kernel.symbol(xi)) / h
        upper = 4 * np.pi ** 2 * kernel.dim * (xi ** 2).sum(axis=1)
        slack = 1e-12 * np.maximum(1.0, upper)
        bad = (ratio < -slack) | (ratio > upper + slack)
        cons, decreasing = _consistency(kernel)
    return KernelReport(
        name=kernel.name, mass_error=mass, symmetry_error=float(sym),
        positivity_violations=pos, derived_h=float(h),
        symbol_bound_violations=int(np.count_nonzero(bad)),
        symbol_consistency_error=float(np.max(cons)),
        consistency_errors=cons, consistency_decreasing=decreasing,
        frequencies_checked=len(xi),
    )


def builtin_kernel(name: str, geometry: GridGeometry, theta: float = 1.0,
                   tau: float | None = None):
    """``explicit`` uses ``theta``; ``implicit``/``heat`` use ``tau`` (default ``eps^2``)."""
    eps = geometry.spacing
    if name == "explicit":
        return explicit_euler_kernel(theta, eps, geometry.dim)
    tau = eps ** 2 if tau is None else tau
    if name == "implicit":
        return implicit_euler_symbol(tau, eps, geometry)
    if name == "heat":
        return heat_semigroup_symbol(tau, eps, geometry)
    raise ValueError(f"unknown builtin kernel {name!r}; choose from {BUILTIN_KERNELS}")


def kernel_from_spec(spec, geometry: GridGeometry):
    """Build a kernel from a JSON spec (dict, JSON text, path, or builtin name).

    Format: ``{"type": "explicit|implicit|heat|stencil", "theta": .., "tau": ..,
    "weights": [[offset, w], ...]}``.
    """
    if isinstance(spec, (str, Path)):
        text = str(spec)
        if text in BUILTIN_KERNELS:
            spec = {"type": text}
        elif text.lstrip().startswith("{"):
            spec = json.loads(text)
        else:
            spec = json.loads(Path(text).read_text())
    if not isinstance(spec, dict) or "type" not in spec:
        raise ValueError("kernel spec needs a 'type' field")
    kind = spec["type"]
    if kind == "stencil":
        pairs = spec.get("weights")
        if not pairs:
            raise ValueError("stencil spec needs 'weights'")
        offsets, weights = [], []
        for item in pairs:
            off, w = item
            off = [off] if np.isscalar(off) else list(off)
            if len(off) != geometry.dim:
                raise ValueError(f"offset {off} does not match dimension {geometry.dim}")
            offsets.append(off)
            weights.append(float(w))
        return StencilKernel(np.array(offsets), np.array(weights), geometry.spacing)
    return builtin_kernel(kind, geometry, float(spec.get("theta", 1.0)), spec.get("tau"))
