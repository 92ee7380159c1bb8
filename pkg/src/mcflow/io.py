"""Reading masks and writing fields, traces and snapshots.

Masks: binary or plain PGM (P5/P2), cell is inside (label 0) when its pixel
is below 128; or plain text with one row of 0/1 digits per line (0 = inside).
Fields: CSV with header ``x,y[,z],value``, one row per cell in C order.
"""

from __future__ import annotations

import hashlib
from pathlib import Path

import numpy as np

from .grid import GridGeometry, PhaseMask, ScalarField

PGM_THRESHOLD = 128
_AXES = ("x", "y", "z", "w")


def _pgm_tokens(data: bytes):
    # header tokens, skipping '#' comments; returns tokens and the offset after the 4th
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ValueError("truncated PGM header")
        tokens.append(data[start:pos].decode("ascii"))
    return tokens, pos + 1


def read_pgm(path) -> np.ndarray:
    """Pixel array (rows, cols) of a P2 or P5 file."""
    data = Path(path).read_bytes()
    (magic, w, h, maxval), offset = _pgm_tokens(data)
    w, h, maxval = int(w), int(h), int(maxval)
    if magic == "P5":
        dtype = np.uint8 if maxval < 256 else np.dtype(">u2")
        pix = np.frombuffer(data, dtype=dtype, count=w * h, offset=offset)
    elif magic == "P2":
        pix = np.array(data[offset:].split()[: w * h], dtype=np.int64)
    else:
        raise ValueError(f"{path}: not a PGM file (magic {magic!r})")
    if pix.size != w * h:
        raise ValueError(f"{path}: expected {w * h} pixels, found {pix.size}")
    return pix.reshape(h, w).astype(np.int64)


def write_pgm(path, pixels: np.ndarray):
    pix = np.clip(np.asarray(pixels), 0, 255).astype(np.uint8)
    h, w = pix.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(pix.tobytes())


def read_text_mask(path) -> np.ndarray:
    rows = [line.strip() for line in Path(path).read_text().splitlines() if line.strip()]
    if not rows or any(set(r) - {"0", "1"} for r in rows):
        raise ValueError(f"{path}: text masks contain only rows of 0/1 digits")
    if len({len(r) for r in rows}) != 1:
        raise ValueError(f"{path}: rows have different lengths")
    return np.array([[int(c) for c in r] for r in rows], dtype=np.int64)


def load_mask(path, spacing: float = 1.0) -> PhaseMask:
    """Read a PGM or 0/1 text mask. Array axis 0 is the first grid axis."""
    path = Path(path)
    head = path.read_bytes()[:2]
    if head in (b"P2", b"P5"):
        labels = np.where(read_pgm(path) < PGM_THRESHOLD, 0, 1)
    else:
        labels = read_text_mask(path)
    return PhaseMask(GridGeometry(labels.shape, spacing), labels)


def save_mask_pgm(path, mask: PhaseMask):
    write_pgm(path, np.where(mask.inside, 0, 255))


def write_field_csv(path, field: ScalarField):
    v = field.values
    idx = np.indices(v.shape).reshape(v.ndim, -1).T
    header = ",".join(_AXES[: v.ndim]) + ",value"
    with open(path, "w", newline="\n") as fh:
        fh.write(header + "\n")
        for coords, val in zip(idx, v.ravel()):
            fh.write(",".join(str(int(c)) for c in coords) + f",{float(val)!r}\n")


def read_field_csv(path, spacing: float = 1.0, saturation: float | None = None) -> ScalarField:
    """Inverse of :func:`write_field_csv`; the box is the bounding box of the indices."""
    lines = Path(path).read_text().splitlines()
    if not lines:
        raise ValueError(f"{path}: empty field file")
    header = lines[0].strip().split(",")
    ndim = len(header) - 1
    if ndim < 1 or header[-1] != "value" or header[:-1] != list(_AXES[:ndim]):
        raise ValueError(f"{path}: header must be x,y[,z],value")
    rows = np.array([ln.split(",") for ln in lines[1:] if ln.strip()], dtype=np.float64)
    coords = rows[:, :ndim].astype(np.int64)
    shape = tuple(int(c) + 1 for c in coords.max(axis=0))
    values = np.full(shape, np.nan)
    values[tuple(coords.T)] = rows[:, ndim]
    if np.isnan(values).any():
        raise ValueError(f"{path}: field does not cover its bounding box")
    return ScalarField(GridGeometry(shape, spacing), values, saturation)


def field_to_pgm(path, field: ScalarField):
    """Snapshot of a 2-D field rescaled linearly to [0, 255]."""
    v = field.values if isinstance(field, ScalarField) else np.asarray(field)
    lo, hi = float(v.min()), float(v.max())
    scaled = np.zeros_like(v) if hi == lo else (v - lo) / (hi - lo) * 255.0
    write_pgm(path, np.rint(scaled))


def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
