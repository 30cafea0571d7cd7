"""Permeability rasters, synthetic high-contrast generators and source terms.

Raster text format::

    nx ny
    v(0,0) v(1,0) ... v(nx-1,0)         <- bottom row
    ...
    v(0,ny-1) ...   v(nx-1,ny-1)        <- top row

Lines starting with ``#`` are ignored.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .fem import CoefficientField
from .mesh import FineMesh

PATTERNS = ("channels", "inclusions", "checkerboard")


class RasterFormatError(ValueError):
    def __init__(self, path, line, msg):
        self.path, self.line = path, line
        super().__init__(f"{path}:{line}: {msg}")


@dataclass(frozen=True, eq=False)
class RasterField:
    nx: int
    ny: int
    values: np.ndarray   # (ny, nx), row 0 at the bottom

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (self.ny, self.nx):
            raise ValueError(f"raster values have shape {v.shape}, expected {(self.ny, self.nx)}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def alpha0(self) -> float:
        return float(self.values.min())

    @property
    def alpha1(self) -> float:
        return float(self.values.max())

    @property
    def contrast(self) -> float:
        return self.alpha1 / self.alpha0

    def cell_values(self, mesh: FineMesh) -> np.ndarray:
        """Per-cell values on ``mesh``; each raster pixel covers an integer block of cells."""
        if mesh.n_x % self.nx or mesh.n_y % self.ny:
            raise ValueError(f"raster {self.nx}x{self.ny} does not divide mesh {mesh.n_x}x{mesh.n_y}")
        rx, ry = mesh.n_x // self.nx, mesh.n_y // self.ny
        i, j = mesh.cell_ij
        return self.values[j // ry, i // rx]

    def to_coefficient(self, mesh: FineMesh) -> CoefficientField:
        return CoefficientField(self.cell_values(mesh))


def _data_lines(text: str):
    for k, line in enumerate(text.splitlines(), start=1):
        s = line.strip()
        if s and not s.startswith("#"):
            yield k, s


def load_raster(path, positive: bool = True) -> RasterField:
    path = Path(path)
    lines = list(_data_lines(path.read_text()))
    if not lines:
        raise RasterFormatError(path, 1, "empty file, expected header 'nx ny'")
    k, header = lines[0]
    parts = header.split()
    try:
        if len(parts) != 2:
            raise ValueError
        nx, ny = int(parts[0]), int(parts[1])
    except ValueError:
        raise RasterFormatError(path, k, f"malformed header {header!r}, expected two integers 'nx ny'") from None
    if nx < 1 or ny < 1:
        raise RasterFormatError(path, k, f"raster dimensions must be positive, got {nx} x {ny}")
    rows = lines[1:]
    if len(rows) < ny:
        last = rows[-1][0] if rows else k
        raise RasterFormatError(path, last, f"header declares {ny} rows, found only {len(rows)}")
    if len(rows) > ny:
        raise RasterFormatError(path, rows[ny][0], f"header declares {ny} rows, found {len(rows)}")
    values = np.empty((ny, nx))
    for r, (k, s) in enumerate(rows):
        toks = s.split()
        if len(toks) != nx:
            raise RasterFormatError(path, k, f"expected {nx} values, found {len(toks)}")
        try:
            row = np.array([float(t) for t in toks])
        except ValueError as exc:
            raise RasterFormatError(path, k, f"not a number ({exc})") from None
        if not np.all(np.isfinite(row)):
            raise RasterFormatError(path, k, "non-finite value")
        if positive and np.any(row <= 0):
            c = int(np.flatnonzero(row <= 0)[0])
            raise RasterFormatError(path, k, f"nonpositive value {row[c]!r} in column {c + 1}")
        values[r] = row
    return RasterField(nx, ny, values)


def save_raster(field: RasterField, path, comment: str | None = None) -> None:
    out = []
    if comment:
        out.extend(f"# {c}" for c in comment.splitlines())
    out.append(f"{field.nx} {field.ny}")
    for row in field.values:
        out.append(" ".join(repr(float(v)) for v in row))
    Path(path).write_text("\n".join(out) + "\n")


def generate_highcontrast(nx: int, ny: int, pattern: str, contrast: float, seed: int = 0) -> RasterField:
    """Two-valued field in {1, contrast}: background 1, structures at ``contrast``."""
    if pattern not in PATTERNS:
        raise ValueError(f"unknown pattern {pattern!r}; choose from {PATTERNS}")
    if not contrast >= 1:
        raise ValueError("contrast must be >= 1")
    rng = np.random.default_rng(seed)
    mask = np.zeros((ny, nx), dtype=bool)
    if pattern == "checkerboard":
        b = max(1, nx // 8)
        jj, ii = np.mgrid[0:ny, 0:nx]
        mask = ((ii // b + jj // b) % 2) == 1
    elif pattern == "inclusions":
        n_inc = max(1, (nx * ny) // 64)
        for _ in range(n_inc):
            w = int(rng.integers(1, max(2, nx // 12) + 1))
            h = int(rng.integers(1, max(2, ny // 12) + 1))
            i0 = int(rng.integers(0, nx - w + 1))
            j0 = int(rng.integers(0, ny - h + 1))
            mask[j0:j0 + h, i0:i0 + w] = True
    else:
        # meandering horizontal channels from the left to the right boundary
        n_ch = max(1, ny // 16)
        width = max(1, ny // 40)
        for c in range(n_ch):
            y = int(rng.integers(0, ny))
            for i in range(nx):
                mask[max(0, y - width + 1):min(ny, y + width), i] = True
                step = int(rng.integers(-1, 2))
                y_new = min(max(y + step, 0), ny - 1)
                # keep consecutive columns edge-connected
                mask[min(y, y_new):max(y, y_new) + 1, i] = True
                y = y_new
    values = np.where(mask, float(contrast), 1.0)
    if contrast > 1 and mask.all():
        values[0, 0] = 1.0
    if contrast > 1 and not mask.any():
        values[0, 0] = float(contrast)
    return RasterField(nx, ny, values)


def example1_source(x, y):
    return 2.0 * np.pi ** 2 * np.cos(np.pi * x) * np.cos(np.pi * y)


def example1_exact(x, y):
    """Closed-form (p, u_x, u_y) for the constant-coefficient example, u = grad p."""
    p = np.cos(np.pi * x) * np.cos(np.pi * y)
    ux = -np.pi * np.sin(np.pi * x) * np.cos(np.pi * y)
    uy = -np.pi * np.cos(np.pi * x) * np.sin(np.pi * y)
    return p, ux, uy


def wells_source(x, y):
    """Injection in the bottom-left corner, production in the top-right corner."""
    x, y = np.asarray(x), np.asarray(y)
    return np.where((x < 0.1) & (y < 0.1), 100.0, 0.0) - np.where((x > 0.9) & (y > 0.9), 100.0, 0.0)


def zero_source(x, y):
    return np.zeros(np.broadcast(np.asarray(x), np.asarray(y)).shape)
