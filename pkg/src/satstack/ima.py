"""Gap-filling and smoothing of image time-series by mean-anomaly interpolation.

For each target layer: average a temporal neighborhood, subtract it from the
target, screen anomalies outside a percentile window, aggregate the anomaly
image to a coarser lattice, interpolate the aggregated anomalies with a
thin-plate spline, and predict target = mean image + interpolated anomaly at
the original resolution.  Incomplete neighborhoods are used as-is; targets
with no neighbors or fewer than 3 finite aggregated cells are skipped and
reported.
"""

from __future__ import annotations

import datetime as dt
import warnings
from dataclasses import dataclass, field

import numpy as np

from satstack.errors import (
    EmptyNeighborhoodError,
    GeorefMismatchError,
    InvalidBoundsError,
    TargetNotFoundError,
)
from satstack.grid import GridStack, RasterGrid, aggregate
from satstack.interp import tps_fit, tps_predict


@dataclass
class ImaParams:
    """Neighborhood size, anomaly screen, aggregation, and fill mode."""

    n_days: int = 0
    n_years: int = 0
    a_filter: tuple[float, float] = (0.05, 0.95)
    fact: int = 1
    fun: str = "mean"
    only_na: bool = False
    targets: list[int] | None = None  # default: every layer
    include_target: bool = False  # include the target layer in its own mean

    def __post_init__(self):
        if self.n_days < 0 or self.n_years < 0:
            raise InvalidBoundsError("n_days and n_years must be >= 0")
        q_lo, q_hi = self.a_filter
        if not (0.0 <= q_lo < q_hi <= 1.0):
            raise InvalidBoundsError("a_filter must satisfy 0 <= q_lo < q_hi <= 1")
        if self.fact < 1:
            raise InvalidBoundsError("fact must be a positive integer")
        if self.fun not in ("mean", "median"):
            raise InvalidBoundsError(f"unsupported aggregation {self.fun!r}")


@dataclass
class ImaTargetReport:
    index: int
    date: dt.date
    neighborhood: list[dt.date]
    screened: int = 0
    knots: int = 0
    filled: int = 0
    skipped: str | None = None


@dataclass
class ImaReport:
    targets: list[ImaTargetReport] = field(default_factory=list)


def _is_leap(year: int) -> bool:
    return year % 4 == 0 and (year % 100 != 0 or year % 400 == 0)


def _shift_years(d: dt.date, years: int) -> dt.date:
    """Same day-of-year in another year; day 366 clamps to 365 off leap years."""
    doy = d.timetuple().tm_yday
    year = d.year + years
    if doy == 366 and not _is_leap(year):
        doy = 365
    return dt.date(year, 1, 1) + dt.timedelta(days=doy - 1)


def select_neighborhood(
    dates: list[dt.date],
    target: dt.date,
    n_days: int,
    n_years: int,
    include_target: bool = False,
) -> list[int]:
    """Indices of layers within n_days of the target date in any of the
    n_years surrounding years (same day-of-year alignment)."""
    if target not in dates:
        raise TargetNotFoundError(f"{target} is not in the stack dates")
    picked: set[int] = set()
    for y in range(-n_years, n_years + 1):
        anchor = _shift_years(target, y)
        lo = anchor - dt.timedelta(days=n_days)
        hi = anchor + dt.timedelta(days=n_days)
        for i, d in enumerate(dates):
            if lo <= d <= hi:
                picked.add(i)
    if not include_target:
        picked = {i for i in picked if dates[i] != target}
    return sorted(picked)


def mean_image(stack: GridStack, indices: list[int]) -> RasterGrid:
    """Per-cell mean over the selected layers, ignoring missing values."""
    if not indices:
        raise EmptyNeighborhoodError("no layers selected")
    cube = np.stack([stack.layers[i].values for i in indices])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return RasterGrid(stack.georef, np.nanmean(cube, axis=0))


def anomaly_screen(
    target: RasterGrid,
    mean_img: RasterGrid,
    a_filter: tuple[float, float] = (0.05, 0.95),
) -> RasterGrid:
    """target - mean, with anomalies outside the percentile window removed.

    Quantiles use the linear-interpolation definition; values strictly
    outside [Q(q_lo), Q(q_hi)] become missing.
    """
    if target.georef != mean_img.georef:
        raise GeorefMismatchError("target and mean image geometries differ")
    anomaly = target.values - mean_img.values
    finite = np.isfinite(anomaly)
    if finite.any():
        q_lo, q_hi = np.quantile(anomaly[finite], a_filter, method="linear")
        out = anomaly.copy()
        out[finite & ((anomaly < q_lo) | (anomaly > q_hi))] = np.nan
    else:
        out = anomaly
    return RasterGrid(target.georef, out)


def ima_fill(
    stack: GridStack,
    params: ImaParams,
    covariates: list[GridStack] | None = None,
) -> tuple[GridStack, ImaReport]:
    """Run the six-step fill/smooth over the target layers of a stack.

    ``covariates`` supplies one GridStack per covariate; each must share the
    stack geometry and contain a layer for every target date (matched by
    date).  With ``only_na`` the observed cells of the target pass through
    bit-identical and only missing cells take predictions.
    """
    for cov in covariates or []:
        if cov.georef != stack.georef:
            raise GeorefMismatchError("covariate stacks must share the stack GeoRef")

    targets = params.targets if params.targets is not None else list(range(len(stack)))
    for t in targets:
        if not 0 <= t < len(stack):
            raise TargetNotFoundError(f"target index {t} outside the stack")

    fine_x, fine_y = stack.georef.cell_centers()
    fine_query = np.column_stack([fine_x, fine_y])
    out_layers = [layer for layer in stack.layers]
    report = ImaReport()

    for t in targets:
        entry = ImaTargetReport(index=t, date=stack.dates[t], neighborhood=[])
        report.targets.append(entry)
        original = stack.layers[t]

        nb = select_neighborhood(
            stack.dates, stack.dates[t], params.n_days, params.n_years,
            include_target=params.include_target,
        )
        entry.neighborhood = [stack.dates[i] for i in nb]
        if not nb:
            entry.skipped = "empty-neighborhood"
            continue

        mean_img = mean_image(stack, nb)
        anomaly = anomaly_screen(original, mean_img, params.a_filter)
        entry.screened = int(
            np.isfinite(original.values - mean_img.values).sum()
            - np.isfinite(anomaly.values).sum()
        )

        agg = aggregate(anomaly, params.fact, params.fun)
        knot_mask = np.isfinite(agg.values).ravel()

        cov_fit = None
        cov_query = None
        if covariates:
            fit_cols, query_cols = [], []
            for cov in covariates:
                try:
                    li = cov.dates.index(stack.dates[t])
                except ValueError:
                    raise TargetNotFoundError(
                        f"covariate stack lacks a layer for {stack.dates[t]}"
                    ) from None
                cov_layer = cov.layers[li]
                cov_agg = aggregate(cov_layer, params.fact, params.fun)
                fit_cols.append(cov_agg.values.ravel())
                query_cols.append(cov_layer.values.ravel())
                knot_mask &= np.isfinite(cov_agg.values).ravel()
            cov_fit = np.column_stack(fit_cols)
            cov_query = np.column_stack(query_cols)

        if knot_mask.sum() < 3:
            entry.skipped = "insufficient-knots"
            continue
        entry.knots = int(knot_mask.sum())

        agg_x, agg_y = agg.georef.cell_centers()
        knots = np.column_stack([agg_x[knot_mask], agg_y[knot_mask]])
        model = tps_fit(
            knots,
            agg.values.ravel()[knot_mask],
            lam=0.0,
            covariates=None if cov_fit is None else cov_fit[knot_mask],
        )
        pred = tps_predict(model, fine_query, covariates=cov_query)
        predicted = pred.reshape(stack.georef.n_rows, stack.georef.n_cols)
        predicted = predicted + mean_img.values  # missing mean stays missing

        if params.only_na:
            observed = np.isfinite(original.values)
            merged = np.where(observed, original.values, predicted)
            entry.filled = int((~observed & np.isfinite(predicted)).sum())
            out_layers[t] = RasterGrid(stack.georef, merged)
        else:
            entry.filled = int(
                (~np.isfinite(original.values) & np.isfinite(predicted)).sum()
            )
            out_layers[t] = RasterGrid(stack.georef, predicted)

    return GridStack(out_layers, list(stack.dates), list(stack.labels)), report
