"""Redistancing by inf/sup convolution with the Euclidean norm.

For a 1-Lipschitz ``u`` the one-sided operators are

    d+[u]_i  = inf_{j: u_j < 0}  u_j + |j - i|
    sd+[u]_i = sup_{j: u_j >= 0} d+[u]_j - |j - i|

and ``sd-[u] = -sd+[-u]``. All results are saturated at the field's level
``dbar``: inputs are clamped to ``[-dbar, dbar]`` first and an empty inf (sup)
evaluates to ``+dbar`` (``-dbar``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._minplus import cone_max, cone_min
from .errors import NotLipschitz
from .grid import ScalarField, lipschitz_check

VARIANTS = ("plus", "minus", "average", "split")

# largest double below 1; atanh of it is ~18.7
_ONE_MINUS = float(np.nextafter(1.0, 0.0))
MAX_NONLINEAR_CAP = 15.0


@dataclass(frozen=True)
class RedistanceConfig:
    """Which redistancing operator to apply.

    ``variant`` is one of ``plus``, ``minus``, ``average`` (mean of the two)
    or ``split`` (``sd+`` on the nonnegative side, ``sd-`` on the negative
    side, which is what the two-phase partition scheme reduces to). Its
    positive and negative parts are 1-Lipschitz separately but the field
    itself is not, so it is returned unflagged.
    ``strip_width`` restricts the sources to cells within that distance of
    the opposite sign set; ``None`` uses the full sets.
    """

    variant: str = "plus"
    strip_width: float | None = None
    saturation: float | None = None
    nonlinear_cap: float = MAX_NONLINEAR_CAP

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown redistance variant {self.variant!r}")
        if self.strip_width is not None and not self.strip_width > 0:
            raise ValueError("strip width must be positive")
        if not 0 < self.nonlinear_cap <= MAX_NONLINEAR_CAP:
            raise ValueError(f"nonlinear cap must lie in (0, {MAX_NONLINEAR_CAP}]")


def _require_lipschitz(u: ScalarField) -> ScalarField:
    rep = lipschitz_check(u)
    if not rep.ok:
        raise NotLipschitz(rep)
    return u if u.lipschitz else u.with_values(u.values, lipschitz=True, flags=u.flags)


def _clamped(u: ScalarField) -> np.ndarray:
    return np.clip(u.values, -u.saturation, u.saturation)


def _guard_signs(sd: np.ndarray, v: np.ndarray, below=None, lip: bool = True) -> np.ndarray:
    # sd+ >= u >= 0 where u >= 0 and sd+ <= u < 0 on the cells in ``below``
    # (every negative cell unless a strip says otherwise). Both hold exactly
    # for 1-Lipschitz u; inputs that are Lipschitz only up to rounding can
    # miss them by an ulp, which would break exact comparisons downstream.
    # Without the Lipschitz flag only the sign is restored.
    pos = v >= 0
    if lip:
        below = ~pos if below is None else below
        sd = np.where(pos, np.maximum(sd, v), sd)
        sd = np.where(below, np.minimum(sd, v), sd)
    else:
        sd = np.where(pos, np.maximum(sd, 0.0), sd)
    return np.where(~pos & (sd >= 0), v, sd)


def d_plus(u: ScalarField, check: bool = True) -> ScalarField:
    """Inf-convolution of the negative part of ``u`` with the distance."""
    if check:
        u = _require_lipschitz(u)
    v = _clamped(u)
    eps, dbar = u.geometry.spacing, u.saturation
    neg = v < 0
    out = cone_min(v, neg, np.ones(v.shape, dtype=bool), eps, dbar).reshape(v.shape)
    flags = {"one_phase_empty"} if not neg.any() else set()
    return u.with_values(out, lipschitz=True, flags=flags)


def d_minus(u: ScalarField, check: bool = True) -> ScalarField:
    neg = d_plus(u.with_values(-u.values), check=check)
    return neg.with_values(-neg.values, lipschitz=True, flags=neg.flags)


def _second_pass(d: np.ndarray, v: np.ndarray, sources: np.ndarray, eps: float,
                 dbar: float, lip: bool = True) -> np.ndarray:
    """``max(-dbar, sup_{j in sources} d_j - |j - i|)`` where ``u < 0``.

    On ``u >= 0`` the sup equals ``d`` itself (``d`` is 1-Lipschitz and
    ``j = i`` is a source), so it is copied rather than searched. Cells with
    ``u <= -dbar`` are saturated since the result is ``<= u`` there (this
    needs a 1-Lipschitz ``u``; with ``lip=False`` every negative cell is searched).
    """
    sd = np.where(v >= 0, d, -dbar)
    targets = (v < 0) & (v > -dbar) if lip else (v < 0)
    sd[targets] = cone_max(d, sources, targets, eps, -dbar)
    return sd


def _first_pass(v, sources, eps, dbar, lip):
    # d+ on the nonnegative cells; d+ >= u >= dbar is saturated when u is 1-Lipschitz
    pos = v >= 0
    d = v.copy()
    d[pos] = dbar
    if lip:
        active = pos & (v < dbar)
        d[active] = np.maximum(cone_min(v, sources, active, eps, dbar), v[active])
    else:
        d[pos] = cone_min(v, sources, pos, eps, dbar)
    return d


def _sd_plus_values(v: np.ndarray, eps: float, dbar: float, lip: bool = True) -> np.ndarray:
    neg = v < 0
    d = _first_pass(v, neg, eps, dbar, lip)
    return _guard_signs(_second_pass(d, v, ~neg, eps, dbar, lip), v, lip=lip)


def _sd_strip_values(v: np.ndarray, eps: float, dbar: float, width: float, lip: bool = True):
    neg = v < 0
    pos = ~neg
    if not neg.any() or not pos.any():
        return None
    zeros = np.zeros(v.shape)
    big = width + 2 * eps
    dist_to_pos = np.full(v.shape, np.inf)
    dist_to_pos[neg] = cone_min(zeros, pos, neg, eps, big)
    dist_to_neg = np.full(v.shape, np.inf)
    dist_to_neg[pos] = cone_min(zeros, neg, pos, eps, big)
    strip_neg = neg & (dist_to_pos <= width)
    strip_pos = pos & (dist_to_neg <= width)
    d = _first_pass(v, strip_neg, eps, dbar, lip)
    # beyond the positive strip the sup has no nearby source and would dip
    # below zero; _second_pass keeps the one-sided value d there as well
    sd = _second_pass(d, v, strip_pos, eps, dbar, lip)
    return _guard_signs(sd, v, strip_neg, lip)


def _plus(u: ScalarField, strip_width=None, lip=None) -> tuple[np.ndarray, set]:
    lip = u.lipschitz if lip is None else lip
    v = _clamped(u)
    eps, dbar = u.geometry.spacing, u.saturation
    neg = v < 0
    if neg.all() or not neg.any():
        val = -dbar if neg.all() else dbar
        return np.full(v.shape, val), {"one_phase_empty"}
    if strip_width is None:
        return _sd_plus_values(v, eps, dbar, lip), set()
    out = _sd_strip_values(v, eps, dbar, strip_width, lip)
    return out, set()


def sd_plus(u: ScalarField, check: bool = True) -> ScalarField:
    """Two-pass redistancing; ``sd+ >= 0`` exactly where ``u >= 0``.

    A field with an empty sign class comes back saturated and flagged
    ``"one_phase_empty"``.
    """
    if check:
        u = _require_lipschitz(u)
    values, flags = _plus(u)
    return u.with_values(values, lipschitz=True, flags=flags)


def sd_minus(u: ScalarField, check: bool = True) -> ScalarField:
    """Mirror of :func:`sd_plus`: ``sd-[u] = -sd+[-u]``."""
    if check:
        u = _require_lipschitz(u)
    values, flags = _plus(u.with_values(-u.values), lip=u.lipschitz)
    return u.with_values(-values, lipschitz=True, flags=flags)


def sd_strip(u: ScalarField, width: float, check: bool = True) -> ScalarField:
    """Redistancing with sources restricted to strips of ``width`` around the interface.

    Sources of the inf pass are the negative cells within ``width`` of a
    nonnegative cell and vice versa for the sup pass. When either strip is
    empty the field is returned saturated with the ``"empty_strip"`` flag.
    """
    eps = u.geometry.spacing
    if not width > eps:
        raise ValueError(f"strip width must exceed the spacing {eps}")
    if check:
        u = _require_lipschitz(u)
    values, flags = _plus(u, strip_width=width)
    if flags:
        flags = flags | {"empty_strip"}
    return u.with_values(values, lipschitz=True, flags=flags)


def redistance(u: ScalarField, cfg: RedistanceConfig, check: bool = False) -> ScalarField:
    """Apply the configured variant. Saturation in ``cfg`` overrides the field's."""
    if cfg.saturation is not None and cfg.saturation != u.saturation:
        u = ScalarField(u.geometry, u.values, cfg.saturation, u.lipschitz, u.flags)
    if check:
        u = _require_lipschitz(u)
    width = cfg.strip_width
    if width is not None and not width > u.geometry.spacing:
        raise ValueError(f"strip width must exceed the spacing {u.geometry.spacing}")
    flags = set()
    if cfg.variant in ("plus", "average", "split"):
        plus, f = _plus(u, width)
        flags |= f
    if cfg.variant in ("minus", "average", "split"):
        m, f = _plus(u.with_values(-u.values), width, u.lipschitz)
        minus = -m
        flags |= f
    if cfg.variant == "plus":
        values = plus
    elif cfg.variant == "minus":
        values = minus
    elif cfg.variant == "average":
        values = 0.5 * (plus + minus)
    else:
        values = np.maximum(plus, 0.0) + np.minimum(minus, 0.0)
    # split: each sign part is 1-Lipschitz, the jump across the interface is not
    return u.with_values(values, lipschitz=cfg.variant != "split", flags=flags)


def gamma(s):
    """Optimal transition profile of the double-well energy, ``tanh``."""
    return np.tanh(s)


def gamma_inv(p, cap: float = MAX_NONLINEAR_CAP):
    """``atanh`` with the argument kept inside (-1, 1) and the result clamped to ``+-cap``."""
    p = np.clip(p, -_ONE_MINUS, _ONE_MINUS)
    return np.clip(np.arctanh(p), -cap, cap)


def nonlinear_redistance(profile: ScalarField, cfg: RedistanceConfig | None = None) -> ScalarField:
    """Map a profile field back through ``atanh`` and redistance it.

    The distance is saturated at ``cfg.nonlinear_cap`` (or the field's own
    level if smaller), since ``tanh`` is numerically flat beyond it.
    """
    cfg = RedistanceConfig() if cfg is None else cfg
    cap = min(cfg.nonlinear_cap, profile.saturation if cfg.saturation is None else cfg.saturation)
    dist = ScalarField(profile.geometry, gamma_inv(profile.values, cap), cap, lipschitz=True)
    inner = RedistanceConfig(cfg.variant, cfg.strip_width, cap, cfg.nonlinear_cap)
    return redistance(dist, inner)


def compdist_constant(ndim: int) -> float:
    """``4 sqrt(N) + 1``: accuracy of sd+ against the true distance, in units of eps."""
    return 4.0 * math.sqrt(ndim) + 1.0
