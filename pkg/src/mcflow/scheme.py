"""Time stepping: diffuse with a kernel, then redistance.

Three drivers are provided:

* ``linear``: ``u <- sd[K * u]`` on a signed distance field.
* ``nonlinear``: ``u <- sd[atanh(K * tanh(u))]``, distances capped at 15.
* ``multiphase`` (experimental): one nonnegative distance per phase,
  ``u_l <- max(0, sd+[w_l - min_{l' != l} w_l'])`` with ``w = K * u``.

Time starts at the redistanced seed (t = 0); the k-th diffusion lands at ``k h``.
"""

from __future__ import annotations

import io
import math
import time
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .errors import Extinct, McflowError, PhaseVanished
from .grid import PhaseMask, ScalarField, discrete_laplacian, lipschitz_check, seed_field
from .kernels import SpectralKernel, StencilKernel, apply_kernel, kernel_from_spec
from .redistance import (
    RedistanceConfig,
    gamma,
    nonlinear_redistance,
    redistance,
)

SCHEME_VARIANTS = ("linear", "nonlinear", "multiphase")


@dataclass
class SchemeConfig:
    """Resolved run configuration.

    ``kernel`` is a builtin name, a JSON-style spec dict, or a kernel object.
    ``theta`` feeds the explicit kernel, ``tau`` the spectral ones. The run
    stops after ``ceil(final_time / h)`` steps, ``max_steps`` steps, or at
    extinction, whichever comes first; with neither limit it runs to extinction.
    """

    kernel: Any = "explicit"
    theta: float = 1.0
    tau: float | None = None
    redistance: RedistanceConfig = field(default_factory=RedistanceConfig)
    final_time: float | None = None
    max_steps: int | None = None
    snapshot_every: int = 0
    variant: str = "linear"
    check_lipschitz: bool = True
    debug: bool = False

    def __post_init__(self):
        if self.variant not in SCHEME_VARIANTS:
            raise ValueError(f"unknown scheme variant {self.variant!r}")
        if self.final_time is not None and self.final_time < 0:
            raise ValueError("final time must be nonnegative")
        if self.max_steps is not None and self.max_steps < 0:
            raise ValueError("max_steps must be nonnegative")
        if self.snapshot_every < 0:
            raise ValueError("snapshot stride must be nonnegative")

    def build_kernel(self, geometry):
        if isinstance(self.kernel, (StencilKernel, SpectralKernel)):
            return self.kernel
        spec = self.kernel
        if isinstance(spec, str) and spec in ("explicit", "implicit", "heat"):
            spec = {"type": spec, "theta": self.theta, "tau": self.tau}
        return kernel_from_spec(spec, geometry)

    def step_limit(self, h: float) -> int | None:
        limits = []
        if self.final_time is not None:
            # guard against ceil(1224.5 / 0.25 + tiny) overshooting by one
            limits.append(int(math.ceil(self.final_time / h - 1e-9)))
        if self.max_steps is not None:
            limits.append(self.max_steps)
        return min(limits) if limits else None


@dataclass
class TraceRecord:
    step: int
    time: float
    neg_cells: int
    area: float
    radius: float
    lipschitz: bool | None = None


@dataclass
class EvolutionTrace:
    """Per-step records, optional snapshots and the terminal event."""

    h: float
    records: list = field(default_factory=list)
    snapshots: dict = field(default_factory=dict)
    extinction_step: int | None = None
    extinct_sign: str | None = None
    events: list = field(default_factory=list)
    timings: dict = field(default_factory=lambda: {"diffusion": 0.0, "redistance": 0.0})
    final_field: Any = None

    @property
    def extinction_time(self) -> float | None:
        return None if self.extinction_step is None else self.extinction_step * self.h

    def times(self) -> np.ndarray:
        return np.array([r.time for r in self.records])

    def radii(self) -> np.ndarray:
        return np.array([r.radius for r in self.records])

    def all_lipschitz(self) -> bool:
        return all(r.lipschitz is not False for r in self.records)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("step,time,neg_cells,area,radius\n")
        for r in self.records:
            buf.write(f"{r.step},{r.time!r},{r.neg_cells},{r.area!r},{r.radius!r}\n")
        return buf.getvalue()

    def summary(self) -> dict:
        last = self.records[-1] if self.records else None
        return {
            "h": self.h,
            "steps": last.step if last else 0,
            "final_time": last.time if last else 0.0,
            "extinction_step": self.extinction_step,
            "extinction_time": self.extinction_time,
            "extinct_sign": self.extinct_sign,
            "all_lipschitz": self.all_lipschitz(),
            "events": list(self.events),
        }


def _ball_volume(ndim: int) -> float:
    return math.pi ** (ndim / 2) / math.gamma(ndim / 2 + 1)


def equivalent_radius(count: int, eps: float, ndim: int) -> float:
    """Radius of the ball with the same volume as ``count`` cells."""
    if count == 0:
        return 0.0
    return (count * eps ** ndim / _ball_volume(ndim)) ** (1.0 / ndim)


def _sign_check(u: ScalarField):
    neg = u.values < 0
    if not neg.any():
        raise Extinct("negative")
    if neg.all():
        raise Extinct("positive")


def _check_discrete_inequalities(sd, new, h):
    # explicit kernel: (new - sd)/h >= Lap sd where new >= 0 and <= where new < 0
    rate = (new.values - sd.values) / h
    lap = discrete_laplacian(sd).values
    tol = 1e-9 / h
    pos = new.values >= 0
    bad = (pos & (rate < lap - tol)) | (~pos & (rate > lap + tol))
    # saturated cells are excluded: clamping is not part of the inequality
    bad &= np.abs(new.values) < new.saturation
    if bad.any():
        i = tuple(int(x) for x in np.argwhere(bad)[0])
        raise AssertionError(f"discrete sub/supersolution inequality fails at {i}")


def step_linear(sd: ScalarField, kernel, rcfg: RedistanceConfig, debug: bool = False) -> ScalarField:
    """One step ``sd <- sd[K * sd]``.

    Raises
    ------
    Extinct
        If a sign class is empty after the convolution.
    """
    u = apply_kernel(kernel, sd)
    _sign_check(u)
    new = redistance(u, rcfg)
    if debug and isinstance(kernel, StencilKernel) and kernel.name == "explicit":
        _check_discrete_inequalities(sd, new, kernel.derived_h)
    return new


def step_nonlinear(u: ScalarField, kernel, rcfg: RedistanceConfig) -> ScalarField:
    """One step ``u <- sd[atanh(K * tanh(u))]`` with the profile cap of ``rcfg``."""
    p = apply_kernel(kernel, u.with_values(gamma(u.values)))
    _sign_check(p)
    return nonlinear_redistance(p, rcfg)


def _phase_distance(signed: ScalarField, rcfg: RedistanceConfig) -> ScalarField:
    cfg = RedistanceConfig("plus", rcfg.strip_width, rcfg.saturation, rcfg.nonlinear_cap)
    sd = redistance(signed, cfg)
    return sd.with_values(np.maximum(sd.values, 0.0), lipschitz=True, flags=sd.flags)


def step_multiphase(phases: list, kernel, rcfg: RedistanceConfig,
                    strict: bool = False) -> tuple[list, list]:
    """One step of the partition scheme (experimental, no convergence theory).

    Returns the surviving phase fields and the indices (into ``phases``) of
    phases whose negative set ``{v_l < 0}`` became empty. With ``strict`` a
    vanished phase raises :class:`PhaseVanished` instead.

    For two phases ``v_2 = -v_1`` and ``v_1 = K * (u_1 - u_2)``, which makes the
    step coincide with the linear scheme on the signed field under the
    ``split`` redistancing.
    """
    L = len(phases)
    if L < 2:
        raise ValueError("need at least two phases")
    if L == 2:
        v1 = apply_kernel(kernel, phases[0].with_values(phases[0].values - phases[1].values))
        vs = [v1, v1.with_values(-v1.values)]
    else:
        ws = [apply_kernel(kernel, p).values for p in phases]
        stack = np.stack(ws)
        vs = []
        for l in range(L):
            others = np.delete(stack, l, axis=0).min(axis=0)
            vs.append(phases[l].with_values(ws[l] - others))
    vanished = [l for l, v in enumerate(vs) if not (v.values < 0).any()]
    if vanished and strict:
        raise PhaseVanished(vanished)
    out = [_phase_distance(v, rcfg) for l, v in enumerate(vs) if l not in vanished]
    return out, vanished


def label_map(phases: list) -> np.ndarray:
    """``argmin_l u_l`` with ties going to the lowest index."""
    return np.argmin(np.stack([p.values for p in phases]), axis=0)


def initial_phases(mask: PhaseMask, rcfg: RedistanceConfig) -> tuple[list, list]:
    """Nonnegative distance to each labelled phase, in increasing label order."""
    labels = [int(x) for x in np.unique(mask.labels)]
    phases = []
    for lab in labels:
        sub = PhaseMask(mask.geometry, np.where(mask.labels == lab, 0, 1))
        seed = seed_field(sub, rcfg.saturation)
        phases.append(_phase_distance(seed, rcfg))
    return phases, labels


def _initial_field(mask: PhaseMask, cfg: SchemeConfig) -> ScalarField:
    rcfg = cfg.redistance
    if cfg.variant == "nonlinear":
        cap = min(rcfg.nonlinear_cap, rcfg.saturation or rcfg.nonlinear_cap)
        seed = seed_field(mask, cap)
        return redistance(seed, RedistanceConfig(rcfg.variant, rcfg.strip_width, cap))
    return redistance(seed_field(mask, rcfg.saturation), rcfg)


def _record(trace, step, h, neg, geom, lip):
    eps, N = geom.spacing, geom.dim
    trace.records.append(TraceRecord(step, step * h, int(neg), neg * eps ** N,
                                     equivalent_radius(int(neg), eps, N), lip))


def run(mask: PhaseMask, cfg: SchemeConfig, progress=None) -> EvolutionTrace:
    """Evolve ``mask`` and record the trace.

    For the two-phase drivers the tracked set is the inside (label 0). For the
    multiphase driver every label is a phase and the trace follows the first
    one; vanished phases are logged in ``events``. Errors raised during a step
    end the run and are logged as the terminal event.
    """
    geom = mask.geometry
    kernel = cfg.build_kernel(geom)
    h = kernel.derived_h
    limit = cfg.step_limit(h)
    rcfg = cfg.redistance
    trace = EvolutionTrace(h=h)

    def lip_ok(fields):
        if not cfg.check_lipschitz:
            return None
        return all(lipschitz_check(f).ok for f in fields)

    if cfg.variant == "multiphase":
        fields, labels = initial_phases(mask, rcfg)
        tracked = labels[0]

        def neg_count(fs, labs):
            if tracked not in labs:
                return 0
            return int(np.count_nonzero(label_map(fs) == labs.index(tracked)))
    else:
        fields, labels = [_initial_field(mask, cfg)], None

        def neg_count(fs, labs):
            return fs[0].negative_count

    _record(trace, 0, h, neg_count(fields, labels), geom, lip_ok(fields))
    if cfg.snapshot_every:
        trace.snapshots[0] = [f.values.copy() for f in fields]

    k = 0
    while limit is None or k < limit:
        k += 1
        try:
            if cfg.variant == "multiphase":
                t0 = time.perf_counter()
                fields, vanished = step_multiphase(fields, kernel, rcfg)
                trace.timings["redistance"] += time.perf_counter() - t0
                if vanished:
                    gone = [labels[l] for l in vanished]
                    labels = [lab for l, lab in enumerate(labels) if l not in vanished]
                    trace.events.append({"step": k, "event": "phase_vanished", "labels": gone})
                    if len(labels) < 2:
                        raise Extinct("negative" if tracked in gone else "positive")
            else:
                fields = [_timed_step(fields[0], kernel, cfg, trace)]
        except Extinct as exc:
            trace.extinction_step = k
            trace.extinct_sign = exc.sign
            trace.events.append({"step": k, "event": "extinct", "sign": exc.sign})
            neg = 0 if exc.sign == "negative" else geom.size
            _record(trace, k, h, neg, geom, None)
            break
        except McflowError as exc:
            trace.events.append({"step": k, "event": "error", "message": str(exc)})
            break
        _record(trace, k, h, neg_count(fields, labels), geom, lip_ok(fields))
        if cfg.snapshot_every and k % cfg.snapshot_every == 0:
            trace.snapshots[k] = [f.values.copy() for f in fields]
        if progress is not None:
            progress(k, fields)
    trace.final_field = fields
    return trace


def _timed_step(u, kernel, cfg, trace):
    rcfg = cfg.redistance
    t0 = time.perf_counter()
    if cfg.variant == "nonlinear":
        p = apply_kernel(kernel, u.with_values(gamma(u.values)))
    else:
        p = apply_kernel(kernel, u)
    t1 = time.perf_counter()
    trace.timings["diffusion"] += t1 - t0
    _sign_check(p)
    if cfg.variant == "nonlinear":
        new = nonlinear_redistance(p, rcfg)
    else:
        new = redistance(p, rcfg)
        if cfg.debug and isinstance(kernel, StencilKernel) and kernel.name == "explicit":
            _check_discrete_inequalities(u, new, kernel.derived_h)
    trace.timings["redistance"] += time.perf_counter() - t1
    return new
