"""Checks of the schemes against closed forms and the one-step ball estimates."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._minplus import cone_min
from .errors import HypothesisViolated, WrongDimension
from .grid import GridGeometry, PhaseMask, ScalarField, exact_signed_distance
from .kernels import apply_kernel, builtin_kernel
from .redistance import RedistanceConfig, redistance, sd_plus, sd_strip


def radius_from_field(field: ScalarField) -> float:
    """``sqrt(area / pi)`` of the negative set of a 2-D field; 0 when it is empty."""
    if field.geometry.dim != 2:
        raise WrongDimension(f"radius extraction needs N=2, got N={field.geometry.dim}")
    area = field.negative_count * field.geometry.spacing ** 2
    return math.sqrt(area / math.pi)


@dataclass(frozen=True)
class RadiusLaw:
    """Exact shrinking ball: ``r(t) = sqrt(R0^2 - 2 (N-1) t)``."""

    R0: float
    dim: int = 2

    def __post_init__(self):
        if not self.R0 > 0:
            raise ValueError("initial radius must be positive")
        if self.dim < 2:
            raise ValueError("balls only move for N >= 2")

    @property
    def extinction_time(self) -> float:
        return self.R0 ** 2 / (2 * (self.dim - 1))

    def radius(self, t):
        t = np.asarray(t, dtype=np.float64)
        return np.sqrt(np.maximum(self.R0 ** 2 - 2 * (self.dim - 1) * t, 0.0))


@dataclass
class LawComparison:
    max_deviation: float
    worst_time: float | None
    floor: float
    extinction_time: float | None
    predicted_extinction: float
    extinction_error: float | None
    tolerance: float

    @property
    def within_tolerance(self) -> bool:
        return self.max_deviation <= self.tolerance

    @property
    def extinction_not_late(self) -> bool:
        return self.extinction_time is not None and self.extinction_time <= self.predicted_extinction

    @property
    def ok(self) -> bool:
        return self.within_tolerance and self.extinction_not_late

    def to_dict(self) -> dict:
        return {
            "max_deviation": self.max_deviation,
            "worst_time": self.worst_time,
            "radius_floor": self.floor,
            "tolerance": self.tolerance,
            "extinction_time": self.extinction_time,
            "predicted_extinction": self.predicted_extinction,
            "extinction_error": self.extinction_error,
            "within_tolerance": self.within_tolerance,
            "extinction_not_late": self.extinction_not_late,
        }


def compare_to_law(trace, law: RadiusLaw, eps: float = 1.0) -> LawComparison:
    """Max radius deviation while the predicted radius is at least ``10 eps``.

    The tolerance is ``2 eps``. ``trace`` needs ``times()``, ``radii()`` and
    ``extinction_time`` (an :class:`~mcflow.scheme.EvolutionTrace` works).
    """
    t = trace.times()
    r = trace.radii()
    pred = law.radius(t)
    sel = pred >= 10 * eps
    if sel.any():
        dev = np.abs(r[sel] - pred[sel])
        k = int(np.argmax(dev))
        worst, when = float(dev[k]), float(t[sel][k])
    else:
        worst, when = 0.0, None
    ext = trace.extinction_time
    err = None if ext is None else ext - law.extinction_time
    return LawComparison(worst, when, 10 * eps, ext, law.extinction_time, err, 2 * eps)


@dataclass
class AnalyticTrace:
    """A trace sampled from the law itself (for sanity checks of the comparison)."""

    law: RadiusLaw
    h: float

    def times(self):
        n = int(math.floor(self.law.extinction_time / self.h))
        return np.arange(n + 1) * self.h

    def radii(self):
        return self.law.radius(self.times())

    @property
    def extinction_time(self):
        return self.law.extinction_time


@dataclass
class ScalingPoint:
    eps: float
    R: float
    excess: float
    h: float


@dataclass
class ScalingReport:
    """Excess ``max(sd_after - (|i| - R))`` per (eps, R) and the log-linear fit.

    The fit is ``log e = log C + a log eps + b log(1/R)``; the ball estimate
    predicts ``a = 2`` and ``b = 1``.
    """

    kernel: str
    points: list = field(default_factory=list)
    eps_exponent: float = float("nan")
    inv_radius_exponent: float = float("nan")
    constant: float = float("nan")

    @property
    def ok(self) -> bool:
        return 1.7 <= self.eps_exponent <= 2.3 and 0.7 <= self.inv_radius_exponent <= 1.3

    def to_dict(self) -> dict:
        return {
            "kernel": self.kernel,
            "eps_exponent": self.eps_exponent,
            "inv_radius_exponent": self.inv_radius_exponent,
            "constant": self.constant,
            "points": [vars(p) for p in self.points],
        }


def ball_excess(eps: float, R: float, kernel_family: str = "explicit", theta: float = 1.0,
                band: float = 3.0) -> ScalingPoint:
    """One diffuse + ``sd+`` step on ``|i| - R``; max excess over the band ``||i| - R| <= band eps``.

    Spectral kernels use ``tau = eps^2``. The estimate relies on sources at
    depth up to ``R/2`` inside the ball, so the field is not truncated
    (saturation ``R``). The box leaves ``band + 3`` cells around the ball:
    ``d+`` on the positive side only reads negative cells, so the mirrored
    faces cannot reach the band.
    """
    if eps > R / 8:
        raise HypothesisViolated(f"eps={eps} exceeds R/8={R / 8}")
    half = R + (band + 3) * eps
    n = 2 * int(math.ceil(half / eps)) + 1
    geom = GridGeometry((n, n), eps)
    c = n // 2
    r = geom.distance_from((c, c))
    u = ScalarField(geom, r - R, float(R), lipschitz=True)
    kernel = builtin_kernel(kernel_family, geom, theta=theta, tau=eps ** 2)
    after = sd_plus(apply_kernel(kernel, u), check=False).values
    sel = np.abs(r - R) <= band * eps
    excess = float(np.max(after[sel] - (r[sel] - R)))
    return ScalingPoint(eps, R, excess, kernel.derived_h)


def ball_step_scaling(eps_list, R_list, kernel_family: str = "explicit",
                      theta: float = 1.0) -> ScalingReport:
    """Measure the one-step excess over a grid of (eps, R) and fit the exponents."""
    for e in eps_list:
        for R in R_list:
            if e > R / 8:
                raise HypothesisViolated(f"eps={e} exceeds R/8={R / 8}")
    rep = ScalingReport(kernel_family)
    for e in eps_list:
        for R in R_list:
            rep.points.append(ball_excess(e, R, kernel_family, theta))
    ex = np.array([p.excess for p in rep.points])
    if np.all(ex > 0) and len(rep.points) >= 3:
        A = np.column_stack([np.ones(len(ex)),
                             np.log([p.eps for p in rep.points]),
                             np.log([1.0 / p.R for p in rep.points])])
        coef, *_ = np.linalg.lstsq(A, np.log(ex), rcond=None)
        rep.constant = float(np.exp(coef[0]))
        rep.eps_exponent = float(coef[1])
        rep.inv_radius_exponent = float(coef[2])
    return rep


@dataclass
class StripCheck:
    M: float
    strip_cells: int
    max_excess_over_full: float
    bound_one: float
    violations_one: int
    max_oracle_error: float
    bound_two: float
    violations_two: int

    @property
    def ok(self) -> bool:
        return self.violations_one == 0 and self.violations_two == 0


def strip_cells(u: ScalarField, M: float) -> np.ndarray:
    """``S_M{u<0} | S_M{u>=0}``: cells within ``M`` of the opposite sign class."""
    v = u.values
    eps = u.geometry.spacing
    neg = v < 0
    zeros = np.zeros(v.shape)
    cap = M + 2 * eps
    to_other = np.full(v.shape, np.inf)
    to_other[neg] = cone_min(zeros, ~neg, neg, eps, cap)
    to_other[~neg] = cone_min(zeros, neg, ~neg, eps, cap)
    return to_other <= M


def strip_equivalence(u: ScalarField, M_list, tol: float = 1e-9) -> list[StripCheck]:
    """Compare ``sd^{M,+}`` with ``sd+`` and the cell-center signed distance on the strip.

    Bounds: ``sd^M <= sd+ + 4 N eps^2 / M`` and ``|sd^M - d| <= sqrt(N) eps``,
    where ``d`` is the signed distance between cell centers (positive on
    ``{u >= 0}``). Saturation is lifted for the comparison so that both
    operators see the same untruncated field.
    """
    geom = u.geometry
    eps, N = geom.spacing, geom.dim
    big = 4.0 * eps * sum(geom.extents)
    uu = ScalarField(geom, u.values, big, lipschitz=u.lipschitz)
    full = sd_plus(uu, check=False).values
    mask = PhaseMask(geom, np.where(u.values < 0, 0, 1))
    oracle = exact_signed_distance(mask, big).values
    out = []
    for M in M_list:
        sdm = sd_strip(uu, M, check=False).values
        sel = strip_cells(uu, M)
        b1 = 4 * N * eps ** 2 / M
        over = sdm[sel] - full[sel]
        err = np.abs(sdm[sel] - oracle[sel])
        b2 = math.sqrt(N) * eps
        out.append(StripCheck(
            float(M), int(sel.sum()), float(over.max(initial=-np.inf)), b1,
            int(np.count_nonzero(over > b1 + tol)), float(err.max(initial=0.0)), b2,
            int(np.count_nonzero(err > b2 + tol)),
        ))
    return out


def random_lipschitz_field(geometry: GridGeometry, seed: int, amplitude: float = 8.0,
                           saturation: float | None = None) -> ScalarField:
    """Deterministic random 1-Lipschitz field with both signs present.

    Uniform values in ``[0, amplitude * eps)`` are replaced by their
    inf-convolution with the distance (the largest 1-Lipschitz minorant) and
    shifted so the median sits at zero. If every value equals the median the
    field is shifted by half a cell so both sign classes are nonempty.
    """
    rng = np.random.default_rng(seed)
    eps = geometry.spacing
    raw = rng.uniform(0.0, amplitude * eps, size=geometry.shape)
    every = np.ones(geometry.shape, dtype=bool)
    w = cone_min(raw, every, every, eps, np.inf).reshape(geometry.shape)
    w = w - np.median(w)
    if not (w < 0).any():
        w = w - 0.5 * eps
    return ScalarField(geometry, w, saturation, lipschitz=True)


def redistance_oracle_violations(u: ScalarField, variant: str = "plus") -> tuple[int, float]:
    """Count cells where the redistanced field misses the distance bound.

    With ``d`` the (clamped) signed distance between cell centers and
    ``C = (4 sqrt(N) + 1) eps``: ``d - C <= sd <= d`` where ``u >= 0`` and
    ``d <= sd <= d + C`` where ``u < 0``. Returns the violation count and the
    largest amount by which a bound is exceeded (negative when all hold).
    """
    geom = u.geometry
    eps, N = geom.spacing, geom.dim
    C = (4 * math.sqrt(N) + 1) * eps
    sd = redistance(u, RedistanceConfig(variant)).values
    mask = PhaseMask(geom, np.where(u.values < 0, 0, 1))
    d = exact_signed_distance(mask, u.saturation).values
    pos = u.values >= 0
    gap = np.where(pos, np.maximum(sd - d, d - C - sd), np.maximum(d - sd, sd - d - C))
    return int(np.count_nonzero(gap > 1e-9 * eps)), float(gap.max())
