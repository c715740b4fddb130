"""Water detection and water-level estimation against an elevation model.

The pipeline works entirely on the raster lattice: flooded cells (NDWI above
a threshold) are labeled into 8-connected components, the largest component
is the main water body, its boundary cells are the shoreline, and the median
shoreline elevation is the level estimate.  Accuracy is summarized as MAE
(overall and per satellite) and Pearson correlation against gauge readings.
"""

from __future__ import annotations

import csv
import datetime as dt
import math
from dataclasses import dataclass

import numpy as np

from satstack import kernels
from satstack.errors import (
    AllMissingElevationError,
    EmptyShorelineError,
    GeorefMismatchError,
    InsufficientPairsError,
    InvalidBoundsError,
    NoComponentsError,
    NoPointsError,
    UnknownComponentError,
)
from satstack.grid import GeoRef, GridStack, RasterGrid
from satstack.interp import IdwModel, idw_predict

DEM_PLAUSIBLE_RANGE = (-500.0, 9000.0)
DEFAULT_NDWI_THRESHOLD = -0.1


@dataclass
class Dem:
    """Elevation grid in meters above sea level."""

    grid: RasterGrid

    def __post_init__(self):
        vals = self.grid.values
        finite = np.isfinite(vals)
        lo, hi = DEM_PLAUSIBLE_RANGE
        if finite.any() and (vals[finite].min() <= lo or vals[finite].max() >= hi):
            raise InvalidBoundsError(
                f"elevations outside the plausible range {DEM_PLAUSIBLE_RANGE}"
            )


@dataclass
class ComponentLabels:
    grid: np.ndarray  # int32, 0 = background
    count: int
    cell_counts: np.ndarray  # (count,), cells per component id 1..count
    georef: GeoRef


@dataclass
class Observation:
    date: dt.date
    level_masl: float


@dataclass
class WaterLevelResult:
    sat: str
    date: dt.date
    est: float
    obs: float | None = None


@dataclass
class EvalMetrics:
    mae: float
    mae_per_sat: dict[str, float]
    pearson_r: float
    n_pairs: int


def idw_dem(contours, target: GeoRef, power: float = 2.0) -> Dem:
    """Interpolate (x, y, z) contour points onto a grid by IDW."""
    pts = np.asarray(contours, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 3 or pts.shape[0] < 1:
        raise NoPointsError("need at least one (x, y, z) contour point")
    model = IdwModel(points=pts, power=power)
    gx, gy = target.cell_centers()
    vals = idw_predict(model, np.column_stack([gx, gy]))
    return Dem(RasterGrid(target, vals.reshape(target.n_rows, target.n_cols)))


def connected_components(binary: RasterGrid) -> ComponentLabels:
    """Label the 1-cells of a 1/missing grid with 8-connectivity."""
    vals = binary.values
    finite = np.isfinite(vals)
    mask = np.zeros(vals.shape, dtype=np.uint8)
    mask[finite & (vals == 1.0)] = 1
    labels, count = kernels.label_components(np.ascontiguousarray(mask))
    counts = np.bincount(labels.ravel(), minlength=count + 1)[1:]
    return ComponentLabels(
        grid=labels, count=count, cell_counts=counts, georef=binary.georef
    )


def detect_water(
    ndwi: RasterGrid, threshold: float = DEFAULT_NDWI_THRESHOLD
) -> ComponentLabels:
    """Flood mask = (ndwi > threshold), labeled into connected components."""
    with np.errstate(invalid="ignore"):
        flooded = ndwi.values > threshold
    binary = np.where(flooded, 1.0, np.nan)
    return connected_components(RasterGrid(ndwi.georef, binary))


def largest_component(labels: ComponentLabels, cell_area: float) -> tuple[int, float]:
    """(component id, area m^2) of the biggest component; ties pick the lower id."""
    if labels.count < 1:
        raise NoComponentsError("no components to choose from")
    comp = int(np.argmax(labels.cell_counts)) + 1  # argmax returns the first max
    return comp, float(labels.cell_counts[comp - 1] * cell_area)


def shoreline_cells(labels: ComponentLabels, comp_id: int) -> set[tuple[int, int]]:
    """Cells of a component with any 4-neighbor outside it (border included)."""
    if not 1 <= comp_id <= labels.count:
        raise UnknownComponentError(f"component {comp_id} does not exist")
    grid = labels.grid
    inside = grid == comp_id
    padded = np.zeros((grid.shape[0] + 2, grid.shape[1] + 2), dtype=bool)
    padded[1:-1, 1:-1] = inside
    surrounded = (
        padded[:-2, 1:-1] & padded[2:, 1:-1] & padded[1:-1, :-2] & padded[1:-1, 2:]
    )
    edge = inside & ~surrounded
    return {(int(r), int(c)) for r, c in zip(*np.nonzero(edge))}


def water_level(dem: Dem, shoreline: set[tuple[int, int]]) -> float:
    """Median DEM elevation over the shoreline cells (missing DEM cells drop)."""
    if not shoreline:
        raise EmptyShorelineError("empty shoreline")
    rows = np.fromiter((rc[0] for rc in sorted(shoreline)), dtype=np.int64)
    cols = np.fromiter((rc[1] for rc in sorted(shoreline)), dtype=np.int64)
    zs = dem.grid.values[rows, cols]
    zs = zs[np.isfinite(zs)]
    if zs.size == 0:
        raise AllMissingElevationError("no finite elevation under the shoreline")
    return float(np.median(zs))


def estimate_levels(
    ndwi_stack: GridStack,
    dem: Dem,
    threshold: float = DEFAULT_NDWI_THRESHOLD,
    observations: list[Observation] | None = None,
) -> list[WaterLevelResult]:
    """Per-layer water level through detect -> largest -> shoreline -> median.

    The satellite tag is read from the trailing label segment (e.g.
    NDWI_2018214_LS8); observations join by exact date.
    """
    if dem.grid.georef != ndwi_stack.georef:
        raise GeorefMismatchError("DEM must be on the NDWI geometry")
    obs_by_date = {o.date: o.level_masl for o in observations or []}
    results = []
    for layer, date, label in ndwi_stack:
        parts = label.split("_")
        sat = parts[-1] if parts and not parts[-1].isdigit() else "other"
        labels = detect_water(layer, threshold)
        if labels.count == 0:
            continue
        comp, _area = largest_component(labels, layer.georef.cell_area())
        shoreline = shoreline_cells(labels, comp)
        est = water_level(dem, shoreline)
        results.append(
            WaterLevelResult(sat=sat, date=date, est=est, obs=obs_by_date.get(date))
        )
    return results


def evaluate(results: list[WaterLevelResult]) -> EvalMetrics:
    """MAE (overall and per satellite) and Pearson r over observed rows."""
    paired = [(r.sat, r.obs, r.est) for r in results if r.obs is not None]
    if len(paired) < 2:
        raise InsufficientPairsError("correlation needs at least 2 (est, obs) pairs")
    obs = np.array([p[1] for p in paired])
    est = np.array([p[2] for p in paired])
    err = np.abs(obs - est)
    mae = float(err.mean())
    per_sat: dict[str, float] = {}
    for sat in sorted({p[0] for p in paired}):
        sel = [abs(o - e) for s, o, e in paired if s == sat]
        per_sat[sat] = float(np.mean(sel))
    obs_c = obs - obs.mean()
    est_c = est - est.mean()
    denom = math.sqrt(float((obs_c**2).sum()) * float((est_c**2).sum()))
    r = float((obs_c * est_c).sum() / denom) if denom > 0 else float("nan")
    return EvalMetrics(mae=mae, mae_per_sat=per_sat, pearson_r=r, n_pairs=len(paired))


# --- CSV interfaces ---------------------------------------------------------

def read_observations(path: str) -> list[Observation]:
    """`date,level.masl` rows with ISO dates and decimal meters."""
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "date" not in reader.fieldnames:
            raise InvalidBoundsError("observations CSV needs a 'date' column")
        level_col = "level.masl" if "level.masl" in reader.fieldnames else None
        if level_col is None:
            raise InvalidBoundsError("observations CSV needs a 'level.masl' column")
        for row in reader:
            out.append(
                Observation(
                    date=dt.date.fromisoformat(row["date"].strip()),
                    level_masl=float(row[level_col]),
                )
            )
    seen = set()
    for o in out:
        if o.date in seen:
            raise InvalidBoundsError(f"duplicate observation date {o.date}")
        seen.add(o.date)
    return out


def read_contours(path: str) -> np.ndarray:
    """`x,y,z` rows in target CRS units and meters."""
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            rows.append((float(row["x"]), float(row["y"]), float(row["z"])))
    if not rows:
        raise NoPointsError(f"no contour points in {path}")
    return np.asarray(rows, dtype=np.float64)


def write_results(path: str, results: list[WaterLevelResult]) -> None:
    """`sat,date,obs,est` rows; missing observations stay blank."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sat", "date", "obs", "est"])
        for r in results:
            writer.writerow(
                [r.sat, r.date.isoformat(), "" if r.obs is None else repr(r.obs), repr(r.est)]
            )


def read_results(path: str) -> list[WaterLevelResult]:
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            obs = row.get("obs", "").strip()
            out.append(
                WaterLevelResult(
                    sat=row["sat"],
                    date=dt.date.fromisoformat(row["date"]),
                    est=float(row["est"]),
                    obs=float(obs) if obs else None,
                )
            )
    return out
