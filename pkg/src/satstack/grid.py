"""Georeferenced raster grids and stacks.

A RasterGrid is one band of 64-bit floats on a regular lattice; missing
cells are NaN in memory and a nodata tag on disk.  A GridStack is an
ordered, date-tagged collection of grids sharing one geometry.  All
operations are pure: they return new grids and never mutate inputs.
"""

from __future__ import annotations

import datetime as dt
import re
import warnings
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from satstack.errors import (
    CrsMismatchError,
    DayOutOfRangeError,
    EmptyIntersectionError,
    GeorefMismatchError,
    InvalidBoundsError,
    InvalidRoiError,
    LatticeMisalignedError,
    NoDateTokenError,
    RaggedStackError,
)
from satstack.geoproj import CrsSpec, transform

_REDUCERS: dict[str, Callable] = {
    "mean": np.nanmean,
    "median": np.nanmedian,
    "max": np.nanmax,
}


@dataclass(frozen=True)
class GeoRef:
    """Grid geometry: origin (outer corner of cell (0, 0)), cell sizes, shape, CRS.

    pixel_h is negative for north-up grids.  Cell (row r, col c) has center
    (origin_x + (c + 0.5) * pixel_w, origin_y + (r + 0.5) * pixel_h).
    """

    origin_x: float
    origin_y: float
    pixel_w: float
    pixel_h: float
    n_cols: int
    n_rows: int
    crs: CrsSpec

    def __post_init__(self):
        if self.n_cols < 1 or self.n_rows < 1:
            raise InvalidBoundsError("grid must have at least one row and column")
        if not self.pixel_w > 0:
            raise InvalidBoundsError("pixel_w must be positive")
        if self.pixel_h == 0:
            raise InvalidBoundsError("pixel_h must be nonzero")

    def cell_center(self, row: int, col: int) -> tuple[float, float]:
        return (
            self.origin_x + (col + 0.5) * self.pixel_w,
            self.origin_y + (row + 0.5) * self.pixel_h,
        )

    def x_centers(self) -> np.ndarray:
        return self.origin_x + (np.arange(self.n_cols) + 0.5) * self.pixel_w

    def y_centers(self) -> np.ndarray:
        return self.origin_y + (np.arange(self.n_rows) + 0.5) * self.pixel_h

    def cell_centers(self) -> tuple[np.ndarray, np.ndarray]:
        """Flattened (x, y) coordinates of every cell center, row-major."""
        gx, gy = np.meshgrid(self.x_centers(), self.y_centers())
        return gx.ravel(), gy.ravel()

    def extent(self) -> tuple[float, float, float, float]:
        """(xmin, ymin, xmax, ymax) of the outer cell edges."""
        x0 = self.origin_x
        x1 = self.origin_x + self.n_cols * self.pixel_w
        y0 = self.origin_y
        y1 = self.origin_y + self.n_rows * self.pixel_h
        return (min(x0, x1), min(y0, y1), max(x0, x1), max(y0, y1))

    def cell_area(self) -> float:
        return abs(self.pixel_w * self.pixel_h)


class RasterGrid:
    """One georeferenced band; values are float64, missing cells are NaN."""

    __slots__ = ("georef", "values", "source")

    def __init__(self, georef: GeoRef, values, source: str | None = None):
        arr = np.asarray(values, dtype=np.float64)
        if arr.shape != (georef.n_rows, georef.n_cols):
            raise InvalidBoundsError(
                f"values shape {arr.shape} does not match georef "
                f"({georef.n_rows}, {georef.n_cols})"
            )
        self.georef = georef
        self.values = arr
        self.source = source

    @classmethod
    def full(cls, georef: GeoRef, fill: float = np.nan) -> "RasterGrid":
        return cls(georef, np.full((georef.n_rows, georef.n_cols), fill))

    def copy(self) -> "RasterGrid":
        return RasterGrid(self.georef, self.values.copy(), source=self.source)

    @property
    def missing(self) -> np.ndarray:
        return ~np.isfinite(self.values)

    def with_values(self, values) -> "RasterGrid":
        return RasterGrid(self.georef, values, source=self.source)


class GridStack:
    """Ordered layers sharing one GeoRef, each tagged with a date and label.

    Ragged inputs (any layer on a different geometry) are rejected here so
    every downstream operation can assume a common lattice.
    """

    def __init__(
        self,
        layers: Sequence[RasterGrid],
        dates: Sequence[dt.date],
        labels: Sequence[str],
    ):
        layers = list(layers)
        dates = list(dates)
        labels = list(labels)
        if not (len(layers) == len(dates) == len(labels)):
            raise RaggedStackError("layers, dates and labels must have equal length")
        for layer in layers[1:]:
            if layer.georef != layers[0].georef:
                raise RaggedStackError(
                    "all layers must share one GeoRef; mosaic/crop first"
                )
        self.layers = layers
        self.dates = dates
        self.labels = labels

    @property
    def georef(self) -> GeoRef:
        return self.layers[0].georef

    def __len__(self) -> int:
        return len(self.layers)

    def __iter__(self):
        return iter(zip(self.layers, self.dates, self.labels))

    def as_array(self) -> np.ndarray:
        return np.stack([layer.values for layer in self.layers])

    def sorted_by_date(self) -> "GridStack":
        order = sorted(range(len(self)), key=lambda i: (self.dates[i], self.labels[i]))
        return GridStack(
            [self.layers[i] for i in order],
            [self.dates[i] for i in order],
            [self.labels[i] for i in order],
        )


# --- region of interest -----------------------------------------------------

def _segments_properly_intersect(p, q, r, s) -> bool:
    def orient(a, b, c):
        v = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        return 0 if v == 0 else (1 if v > 0 else -1)

    def on_segment(a, b, c):
        return (
            min(a[0], b[0]) <= c[0] <= max(a[0], b[0])
            and min(a[1], b[1]) <= c[1] <= max(a[1], b[1])
        )

    o1 = orient(p, q, r)
    o2 = orient(p, q, s)
    o3 = orient(r, s, p)
    o4 = orient(r, s, q)
    if o1 != o2 and o3 != o4:
        return True
    if o1 == 0 and on_segment(p, q, r):
        return True
    if o2 == 0 and on_segment(p, q, s):
        return True
    if o3 == 0 and on_segment(r, s, p):
        return True
    if o4 == 0 and on_segment(r, s, q):
        return True
    return False


def _check_ring(ring: Sequence[tuple[float, float]]):
    if len(ring) < 4 or tuple(ring[0]) != tuple(ring[-1]):
        raise InvalidRoiError("polygon ring must be closed (first point == last)")
    segs = [(tuple(ring[i]), tuple(ring[i + 1])) for i in range(len(ring) - 1)]
    # sweep over segments ordered by min x; only x-overlapping pairs are tested
    order = sorted(range(len(segs)), key=lambda i: min(segs[i][0][0], segs[i][1][0]))
    n = len(segs)
    for ii in range(n):
        i = order[ii]
        (p, q) = segs[i]
        xmax_i = max(p[0], q[0])
        for jj in range(ii + 1, n):
            j = order[jj]
            (r, s) = segs[j]
            if min(r[0], s[0]) > xmax_i:
                break
            if abs(i - j) in (1, n - 1):  # adjacent segments share an endpoint
                continue
            if _segments_properly_intersect(p, q, r, s):
                raise InvalidRoiError("polygon ring is self-intersecting")


@dataclass(frozen=True)
class Roi:
    """Axis-aligned bbox or closed polygon ring(s), tagged with a CRS."""

    crs: CrsSpec
    bbox: tuple[float, float, float, float] | None = None
    rings: tuple[tuple[tuple[float, float], ...], ...] | None = None

    def __post_init__(self):
        if (self.bbox is None) == (self.rings is None):
            raise InvalidRoiError("exactly one of bbox or rings must be given")
        if self.bbox is not None:
            xmin, ymin, xmax, ymax = self.bbox
            if not (xmin < xmax and ymin < ymax):
                raise InvalidRoiError("bbox must have min < max on both axes")
        else:
            for ring in self.rings:
                _check_ring(ring)

    @classmethod
    def from_bbox(cls, xmin, ymin, xmax, ymax, crs: CrsSpec) -> "Roi":
        return cls(crs=crs, bbox=(float(xmin), float(ymin), float(xmax), float(ymax)))

    @classmethod
    def from_polygon(cls, rings, crs: CrsSpec) -> "Roi":
        return cls(
            crs=crs,
            rings=tuple(tuple((float(x), float(y)) for x, y in ring) for ring in rings),
        )

    def envelope(self) -> tuple[float, float, float, float]:
        if self.bbox is not None:
            return self.bbox
        xs = [p[0] for ring in self.rings for p in ring]
        ys = [p[1] for ring in self.rings for p in ring]
        return (min(xs), min(ys), max(xs), max(ys))

    def envelope_in(self, crs: CrsSpec) -> tuple[float, float, float, float]:
        """Envelope reprojected into another CRS (boundary-sampled)."""
        xmin, ymin, xmax, ymax = self.envelope()
        if crs == self.crs:
            return (xmin, ymin, xmax, ymax)
        ts = np.linspace(0.0, 1.0, 9)
        ex = np.concatenate(
            [
                xmin + ts * (xmax - xmin),
                np.full_like(ts, xmax),
                xmax - ts * (xmax - xmin),
                np.full_like(ts, xmin),
            ]
        )
        ey = np.concatenate(
            [
                np.full_like(ts, ymin),
                ymin + ts * (ymax - ymin),
                np.full_like(ts, ymax),
                ymax - ts * (ymax - ymin),
            ]
        )
        px, py = transform(self.crs, crs, ex, ey)
        return (float(px.min()), float(py.min()), float(px.max()), float(py.max()))


# --- operations -------------------------------------------------------------

def mosaic(
    grids: Sequence[RasterGrid],
    roi: Roi | None = None,
    keys: Sequence | None = None,
) -> RasterGrid:
    """Join same-date tiles into one grid covering their union extent.

    Inputs must share CRS and pixel sizes and sit on one aligned lattice.
    Where tiles overlap, the first non-missing value wins after sorting the
    inputs deterministically by ``keys`` (tile label, then source path;
    defaults to each grid's ``source``).
    """
    if not grids:
        raise InvalidBoundsError("mosaic requires at least one grid")
    g0 = grids[0].georef
    for g in grids[1:]:
        if g.georef.crs != g0.crs:
            raise CrsMismatchError("mosaic inputs must share one CRS")
        if g.georef.pixel_w != g0.pixel_w or g.georef.pixel_h != g0.pixel_h:
            raise LatticeMisalignedError("mosaic inputs must share pixel sizes")
        for delta, step in (
            (g.georef.origin_x - g0.origin_x, g0.pixel_w),
            (g.georef.origin_y - g0.origin_y, g0.pixel_h),
        ):
            shift = delta / step
            if abs(shift - round(shift)) > 1e-6:
                raise LatticeMisalignedError(
                    f"grid origins differ by {shift} cells (not an integer)"
                )

    if keys is None:
        keys = [g.source or "" for g in grids]
    order = sorted(range(len(grids)), key=lambda i: (keys[i], i))

    # union extent on the shared lattice
    sign_h = 1.0 if g0.pixel_h > 0 else -1.0
    ox = min(g.georef.origin_x for g in grids)
    oy = (min if sign_h > 0 else max)(g.georef.origin_y for g in grids)
    col_ends = []
    row_ends = []
    for g in grids:
        dc = round((g.georef.origin_x - ox) / g0.pixel_w)
        dr = round((g.georef.origin_y - oy) / g0.pixel_h)
        col_ends.append(dc + g.georef.n_cols)
        row_ends.append(dr + g.georef.n_rows)
    n_cols = max(col_ends)
    n_rows = max(row_ends)

    out_ref = GeoRef(ox, oy, g0.pixel_w, g0.pixel_h, n_cols, n_rows, g0.crs)
    out = np.full((n_rows, n_cols), np.nan)
    for i in order:
        g = grids[i]
        dc = round((g.georef.origin_x - ox) / g0.pixel_w)
        dr = round((g.georef.origin_y - oy) / g0.pixel_h)
        window = out[dr : dr + g.georef.n_rows, dc : dc + g.georef.n_cols]
        take = np.isnan(window) & np.isfinite(g.values)
        window[take] = g.values[take]

    result = RasterGrid(out_ref, out)
    if roi is not None:
        result = crop(result, roi)
    return result


def crop(grid: RasterGrid, roi: Roi) -> RasterGrid:
    """Keep the cells whose centers fall inside the ROI bounding box."""
    xmin, ymin, xmax, ymax = roi.envelope_in(grid.georef.crs)
    xs = grid.georef.x_centers()
    ys = grid.georef.y_centers()
    cols = np.nonzero((xs >= xmin) & (xs <= xmax))[0]
    rows = np.nonzero((ys >= ymin) & (ys <= ymax))[0]
    if cols.size == 0 or rows.size == 0:
        raise EmptyIntersectionError("ROI does not intersect the grid extent")
    c0, c1 = int(cols[0]), int(cols[-1]) + 1
    r0, r1 = int(rows[0]), int(rows[-1]) + 1
    ref = grid.georef
    new_ref = GeoRef(
        ref.origin_x + c0 * ref.pixel_w,
        ref.origin_y + r0 * ref.pixel_h,
        ref.pixel_w,
        ref.pixel_h,
        c1 - c0,
        r1 - r0,
        ref.crs,
    )
    return RasterGrid(new_ref, grid.values[r0:r1, c0:c1].copy(), source=grid.source)


def clamp(grid: RasterGrid, lo: float, hi: float) -> RasterGrid:
    """Truncate finite cells into [lo, hi]; missing cells stay missing."""
    if lo > hi:
        raise InvalidBoundsError(f"clamp bounds inverted: {lo} > {hi}")
    return grid.with_values(np.clip(grid.values, lo, hi))


def rescale_reflectance(
    grid: RasterGrid,
    scale: float = 1e-4,
    valid_lo: float = -100.0,
    valid_hi: float = 16000.0,
) -> RasterGrid:
    """Truncate raw reflectance counts to the valid range, then rescale.

    Defaults follow the MOD09GA convention: counts in [-100, 16000] scaled
    by 1e-4.
    """
    if not scale > 0:
        raise InvalidBoundsError("scale must be positive")
    clamped = clamp(grid, valid_lo, valid_hi)
    return grid.with_values(clamped.values * scale)


def aggregate(grid: RasterGrid, fact: int, fun: str = "mean") -> RasterGrid:
    """Block-reduce fact x fact cells into one, ignoring missing values.

    Trailing partial blocks are reduced over the cells present; a block
    with no finite cell stays missing.  Pixel sizes scale by fact and the
    origin is unchanged.
    """
    if fact < 1 or int(fact) != fact:
        raise InvalidBoundsError("fact must be a positive integer")
    if fun not in ("mean", "median"):
        raise InvalidBoundsError(f"unsupported aggregation {fun!r}")
    fact = int(fact)
    if fact == 1:
        return grid.copy()
    ref = grid.georef
    out_rows = -(-ref.n_rows // fact)
    out_cols = -(-ref.n_cols // fact)
    padded = np.full((out_rows * fact, out_cols * fact), np.nan)
    padded[: ref.n_rows, : ref.n_cols] = grid.values
    blocks = padded.reshape(out_rows, fact, out_cols, fact).swapaxes(1, 2)
    blocks = blocks.reshape(out_rows, out_cols, fact * fact)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        out = _REDUCERS[fun](blocks, axis=2)
    new_ref = GeoRef(
        ref.origin_x,
        ref.origin_y,
        ref.pixel_w * fact,
        ref.pixel_h * fact,
        out_cols,
        out_rows,
        ref.crs,
    )
    return RasterGrid(new_ref, out)


def composite(stack: GridStack, window_days: int, fun: str = "median") -> GridStack:
    """Reduce layers falling in consecutive date windows to one layer each.

    Windows of ``window_days`` start at the earliest date; each non-empty
    window yields one layer (per-cell reduction ignoring missing) dated at
    the window start.
    """
    if len(stack) == 0:
        raise InvalidBoundsError("composite requires a non-empty stack")
    if window_days < 1:
        raise InvalidBoundsError("window_days must be positive")
    if fun not in _REDUCERS:
        raise InvalidBoundsError(f"unsupported composite function {fun!r}")
    start = min(stack.dates)
    groups: dict[int, list[int]] = {}
    for i, d in enumerate(stack.dates):
        groups.setdefault((d - start).days // window_days, []).append(i)
    layers, dates, labels = [], [], []
    for win in sorted(groups):
        idx = groups[win]
        cube = np.stack([stack.layers[i].values for i in idx])
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            vals = _REDUCERS[fun](cube, axis=0)
        win_date = start + dt.timedelta(days=win * window_days)
        prefix = stack.labels[idx[0]].split("_")[0] if stack.labels[idx[0]] else "COMP"
        layers.append(RasterGrid(stack.georef, vals))
        dates.append(win_date)
        labels.append(f"{prefix}_{format_layer_date(win_date)}")
    return GridStack(layers, dates, labels)


_DATE_TOKEN = re.compile(r"(?<!\d)(\d{4})(\d{3})(?!\d)")


def _is_leap(year: int) -> bool:
    return year % 4 == 0 and (year % 100 != 0 or year % 400 == 0)


def parse_layer_date(label: str) -> dt.date:
    """Extract the YYYYJJJ token from a layer name as a calendar date."""
    m = _DATE_TOKEN.search(label)
    if m is None:
        raise NoDateTokenError(f"no YYYYJJJ token in {label!r}")
    year = int(m.group(1))
    doy = int(m.group(2))
    max_day = 366 if _is_leap(year) else 365
    if not 1 <= doy <= max_day:
        raise DayOutOfRangeError(f"day {doy} out of range for year {year}")
    return dt.date(year, 1, 1) + dt.timedelta(days=doy - 1)


def format_layer_date(d: dt.date) -> str:
    return f"{d.year:04d}{d.timetuple().tm_yday:03d}"


def apply_pixel_mask(grid: RasterGrid, mask: RasterGrid) -> RasterGrid:
    """Apply a 1/missing mask with elementwise-product semantics."""
    if grid.georef != mask.georef:
        raise GeorefMismatchError("grid and mask geometries differ")
    return grid.with_values(mask.values * grid.values)


def stack_from_files(paths: Iterable[str]) -> GridStack:
    """Build a date-sorted GridStack from GeoTIFF files named *_YYYYJJJ*."""
    from satstack.geotiff import read_geotiff

    paths = sorted(str(p) for p in paths)
    layers, dates, labels = [], [], []
    for p in paths:
        stem = p.replace("\\", "/").rsplit("/", 1)[-1]
        stem = stem.rsplit(".", 1)[0]
        layers.append(read_geotiff(p))
        dates.append(parse_layer_date(stem))
        labels.append(stem)
    return GridStack(layers, dates, labels).sorted_by_date()
