import itertools
import math

import numpy as np
import pytest

from mcflow.grid import GridGeometry, ScalarField


def brute_sd_plus(values, eps=1.0, dbar=np.inf):
    """Literal two-pass formula over all cell pairs (test oracle)."""
    v = np.clip(np.asarray(values, dtype=float), -dbar, dbar)
    shape = v.shape
    cells = list(itertools.product(*[range(n) for n in shape]))
    pts = np.array(cells, dtype=float)
    flat = v.ravel()
    dist = eps * np.sqrt(((pts[:, None, :] - pts[None, :, :]) ** 2).sum(-1))
    neg = flat < 0
    if neg.all() or not neg.any():
        return np.full(shape, -dbar if neg.all() else dbar)
    d = np.min(np.where(neg[None, :], flat[None, :] + dist, np.inf), axis=1)
    d = np.minimum(d, dbar)
    sd = np.max(np.where(~neg[None, :], d[None, :] - dist, -np.inf), axis=1)
    sd = np.maximum(sd, -dbar)
    return sd.reshape(shape)


def brute_signed_distance(inside, eps=1.0):
    """Double-loop cell-center distance to the opposite class, negative inside."""
    inside = np.asarray(inside, dtype=bool)
    idx = np.argwhere(np.ones(inside.shape, dtype=bool))
    out = np.zeros(inside.shape)
    for i in idx:
        best = math.inf
        for j in idx:
            if inside[tuple(j)] != inside[tuple(i)]:
                best = min(best, eps * math.dist(i, j))
        out[tuple(i)] = -best if inside[tuple(i)] else best
    return out


@pytest.fixture
def geom2():
    return GridGeometry((12, 12))


def field_of(values, eps=1.0, saturation=None):
    values = np.asarray(values, dtype=float)
    return ScalarField(GridGeometry(values.shape, eps), values, saturation, lipschitz=True)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
