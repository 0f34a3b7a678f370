"""Polar hexbin images of phased light curves.

A curve is wrapped around the origin (phase -> clockwise azimuth from +y,
amplitude-normalized flux -> radius in [0.2, 1]), the points are counted on
a hexagonal grid over [-1, 1]^2, and the counts are painted into a square
grayscale raster.

The hexagonal grid is the union of two rectangular lattices of centres: A at
``(-1 + j*dx, -1 + k*dy)`` and B shifted by ``(dx/2, dy/2)``. A point belongs
to the nearest centre; the nearest centre of each lattice comes from
per-axis rounding, so only two candidates need comparing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from .curve import PhasedCurve
from .errors import EmptyCurve, FormatError

R_MIN = 0.2
R_MAX = 1.0
IMAGE_SIZE = 224
DEFAULT_GRIDSIZE = 24


def to_polar(curve: PhasedCurve) -> np.ndarray:
    """Return an ``(n, 2)`` array of Cartesian points."""
    if curve.n_points == 0:
        raise EmptyCurve("cannot transform an empty curve")
    f = curve.fluxes
    f_min, f_max = f.min(), f.max()
    if f_max == f_min:
        r = np.full(f.shape, R_MAX)
    else:
        r = R_MIN + (R_MAX - R_MIN) * (f - f_min) / (f_max - f_min)
    phi = 2 * np.pi * curve.phases
    return np.column_stack([r * np.sin(phi), r * np.cos(phi)])


@dataclass(frozen=True)
class HexLattice:
    gridsize: int

    def __post_init__(self):
        if self.gridsize < 4:
            raise ValueError("gridsize must be >= 4")

    @property
    def dx(self) -> float:
        return 2.0 / self.gridsize

    @property
    def dy(self) -> float:
        return self.dx * math.sqrt(3.0) / 2.0

    @property
    def shape_a(self) -> tuple[int, int]:
        return self.gridsize + 1, math.ceil(2.0 / self.dy) + 1

    @property
    def shape_b(self) -> tuple[int, int]:
        nx, ny = self.shape_a
        return nx - 1, ny - 1

    @property
    def n_bins(self) -> int:
        return math.prod(self.shape_a) + math.prod(self.shape_b)

    @cached_property
    def centers(self) -> np.ndarray:
        """All centres, lattice A first (j-major), then lattice B."""
        nxa, nya = self.shape_a
        nxb, nyb = self.shape_b
        ja, ka = np.meshgrid(np.arange(nxa), np.arange(nya), indexing="ij")
        jb, kb = np.meshgrid(np.arange(nxb), np.arange(nyb), indexing="ij")
        a = np.column_stack([-1.0 + ja.ravel() * self.dx, -1.0 + ka.ravel() * self.dy])
        b = np.column_stack([
            -1.0 + (jb.ravel() + 0.5) * self.dx,
            -1.0 + (kb.ravel() + 0.5) * self.dy,
        ])
        return np.vstack([a, b])

    def axis_centers(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        nxa, nya = self.shape_a
        nxb, nyb = self.shape_b
        return (
            -1.0 + np.arange(nxa) * self.dx,
            -1.0 + np.arange(nya) * self.dy,
            -1.0 + (np.arange(nxb) + 0.5) * self.dx,
            -1.0 + (np.arange(nyb) + 0.5) * self.dy,
        )

    def assign(self, xy: np.ndarray) -> np.ndarray:
        """Flat bin index of the nearest centre for each point (ties -> lattice A)."""
        xy = np.asarray(xy, dtype=float).reshape(-1, 2)
        x, y = xy[:, 0], xy[:, 1]
        xa, ya, xb, yb = self.axis_centers()
        u = (x + 1.0) / self.dx
        v = (y + 1.0) / self.dy
        ja = _nearest_on_axis(x, xa, np.floor(u + 0.5))
        ka = _nearest_on_axis(y, ya, np.floor(v + 0.5))
        jb = _nearest_on_axis(x, xb, np.floor(u))
        kb = _nearest_on_axis(y, yb, np.floor(v))
        da = (x - xa[ja]) ** 2 + (y - ya[ka]) ** 2
        db = (x - xb[jb]) ** 2 + (y - yb[kb]) ** 2
        idx_a = ja * ya.size + ka
        idx_b = xa.size * ya.size + jb * yb.size + kb
        return np.where(da <= db, idx_a, idx_b)


def _nearest_on_axis(coord: np.ndarray, axis: np.ndarray, guess: np.ndarray) -> np.ndarray:
    # the rounded guess is exact up to float error at cell edges; settle those
    # by comparing with the two neighbours (ties -> lower index)
    n = axis.size
    best = np.clip(guess, 0, n - 1).astype(np.int64)
    best_d = (coord - axis[best]) ** 2
    for step in (-1, 1):
        cand = np.clip(best + step, 0, n - 1)
        d = (coord - axis[cand]) ** 2
        better = (d < best_d) | ((d == best_d) & (cand < best))
        best = np.where(better, cand, best)
        best_d = np.where(better, d, best_d)
    return best


@dataclass(frozen=True)
class HexGrid:
    lattice: HexLattice
    counts: np.ndarray  # flat, aligned with lattice.centers

    @property
    def gridsize(self) -> int:
        return self.lattice.gridsize

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def nonzero(self) -> dict[int, int]:
        return {int(i): int(self.counts[i]) for i in np.flatnonzero(self.counts)}


def hexbin_counts(points: np.ndarray, gridsize: int = DEFAULT_GRIDSIZE) -> HexGrid:
    lattice = _lattice(gridsize)
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    counts = np.bincount(lattice.assign(points), minlength=lattice.n_bins).astype(np.int64)
    return HexGrid(lattice, counts)


_LATTICES: dict[int, HexLattice] = {}
_PIXEL_BINS: dict[tuple[int, int], np.ndarray] = {}


def _lattice(gridsize: int) -> HexLattice:
    if gridsize not in _LATTICES:
        _LATTICES[gridsize] = HexLattice(gridsize)
    return _LATTICES[gridsize]


def pixel_centers(size: int = IMAGE_SIZE) -> np.ndarray:
    """Domain coordinates of pixel centres, row-major, row 0 at the top."""
    c = -1.0 + (np.arange(size) + 0.5) * (2.0 / size)
    xs, ys = np.meshgrid(c, c[::-1])
    return np.column_stack([xs.ravel(), ys.ravel()])


def pixel_bins(gridsize: int, size: int = IMAGE_SIZE) -> np.ndarray:
    key = (gridsize, size)
    if key not in _PIXEL_BINS:
        bins = _lattice(gridsize).assign(pixel_centers(size)).reshape(size, size)
        bins.setflags(write=False)
        _PIXEL_BINS[key] = bins
    return _PIXEL_BINS[key]


def rasterize(grid: HexGrid, size: int = IMAGE_SIZE) -> np.ndarray:
    """Paint each pixel with its hexagon's count / max count, float64 in [0, 1]."""
    if size < 32:
        raise ValueError("size must be >= 32")
    peak = grid.counts.max() if grid.counts.size else 0
    if peak == 0:
        return np.zeros((size, size))
    return grid.counts[pixel_bins(grid.gridsize, size)] / peak


def curve_to_image(curve: PhasedCurve, gridsize: int = DEFAULT_GRIDSIZE, size: int = IMAGE_SIZE) -> np.ndarray:
    return rasterize(hexbin_counts(to_polar(curve), gridsize), size)


def quantize(image: np.ndarray) -> np.ndarray:
    return np.floor(255.0 * np.clip(image, 0.0, 1.0) + 0.5).astype(np.uint8)


def write_pgm(path, image: np.ndarray) -> None:
    """Binary PGM (P5, maxval 255)."""
    data = image if image.dtype == np.uint8 else quantize(image)
    h, w = data.shape
    Path(path).write_bytes(f"P5\n{w} {h}\n255\n".encode("ascii") + data.tobytes())


def read_pgm(path, raw_bytes: bool = False) -> np.ndarray:
    """Read a binary PGM back as float intensities in [0, 1], or as stored uint8."""
    raw = Path(path).read_bytes()
    fields = []
    pos = 0
    while len(fields) < 4:
        while raw[pos:pos + 1].isspace():
            pos += 1
        if raw[pos:pos + 1] == b"#":
            pos = raw.index(b"\n", pos) + 1
            continue
        end = pos
        while not raw[end:end + 1].isspace():
            end += 1
        fields.append(raw[pos:end])
        pos = end
    if fields[0] != b"P5":
        raise FormatError(f"{path}: not a binary PGM")
    w, h, maxval = (int(x) for x in fields[1:])
    pos += 1
    data = np.frombuffer(raw[pos:pos + w * h], dtype=np.uint8)
    if data.size != w * h:
        raise FormatError(f"{path}: truncated pixel data")
    if raw_bytes:
        return data.reshape(h, w).copy()
    return data.reshape(h, w).astype(np.float64) / maxval
