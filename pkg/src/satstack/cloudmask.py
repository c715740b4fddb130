"""Quality-band decoding into clear-sky masks and clear-date selection.

Masks hold 1 for clear cells and missing for everything else, so masking is
a plain elementwise product.  Decode rules are data, not code: a bitfield
spec (bit ranges that must equal given values) or a probability threshold,
with per-mission defaults that can be overridden from a config file.
"""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass

import numpy as np

from satstack.errors import (
    InvalidBoundsError,
    NegativeQaValueError,
    NonBinaryMaskError,
)
from satstack.geoproj import reproject_grid
from satstack.grid import GridStack, RasterGrid, Roi, apply_pixel_mask


@dataclass(frozen=True)
class QaDecodeRule:
    """Either ``bits`` ((lo, hi, required_value), ...) or a percent threshold."""

    mission: str
    bits: tuple[tuple[int, int, int], ...] | None = None
    threshold: float | None = None

    def __post_init__(self):
        if (self.bits is None) == (self.threshold is None):
            raise InvalidBoundsError("rule needs exactly one of bits or threshold")
        if self.bits is not None:
            for lo, hi, _val in self.bits:
                if not (0 <= lo <= hi <= 15):
                    raise InvalidBoundsError("bit ranges must lie within 0-15")
        if self.threshold is not None and not (0.0 <= self.threshold <= 100.0):
            raise InvalidBoundsError("threshold must be a percentage in [0, 100]")


# MODIS state band: cloud state bits 0-1 must be 00 and shadow bit 2 clear.
# Landsat-8 pixel_qa: clear bit 1 set, cloud bit 5 unset.
# Sentinel-2 CLDPRB: clear up to 50 % cloud probability.
DEFAULT_QA_RULES: dict[str, QaDecodeRule] = {
    "modis": QaDecodeRule("modis", bits=((0, 1, 0), (2, 2, 0))),
    "landsat8": QaDecodeRule("landsat8", bits=((1, 1, 1), (5, 5, 0))),
    "sentinel2": QaDecodeRule("sentinel2", threshold=50.0),
}


def parse_rule_overrides(path: str) -> dict[str, QaDecodeRule]:
    """Defaults plus `mission.qa.bits = lo-hi:v,...` / `mission.qa.threshold = pct`."""
    rules = dict(DEFAULT_QA_RULES)
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, _, value = line.partition("=")
            parts = key.strip().split(".")
            if len(parts) != 3 or parts[1] != "qa":
                raise InvalidBoundsError(f"bad QA override line: {line!r}")
            mission, _, what = parts
            value = value.strip()
            if what == "threshold":
                rules[mission] = QaDecodeRule(mission, threshold=float(value))
            elif what == "bits":
                specs = []
                for item in value.split(","):
                    rng, _, val = item.partition(":")
                    lo, _, hi = rng.partition("-")
                    lo_i = int(lo)
                    hi_i = int(hi) if hi else lo_i
                    specs.append((lo_i, hi_i, int(val)))
                rules[mission] = QaDecodeRule(mission, bits=tuple(specs))
            else:
                raise InvalidBoundsError(f"bad QA override key: {key!r}")
    return rules


def decode_qa(
    mission: str,
    qa: RasterGrid,
    rule: QaDecodeRule | None = None,
) -> RasterGrid:
    """Turn a quality band into a 1/missing clear-sky mask."""
    rule = rule or DEFAULT_QA_RULES.get(mission)
    if rule is None:
        raise InvalidBoundsError(f"no QA decode rule for mission {mission!r}")
    vals = qa.values
    finite = np.isfinite(vals)
    if np.any(vals[finite] < 0):
        raise NegativeQaValueError("QA band contains negative values")
    if rule.threshold is not None:
        clear = finite & (vals <= rule.threshold)
    else:
        ints = np.zeros(vals.shape, dtype=np.int64)
        ints[finite] = vals[finite].astype(np.int64)
        clear = finite
        for lo, hi, required in rule.bits:
            width = hi - lo + 1
            clear &= ((ints >> lo) & ((1 << width) - 1)) == required
    out = np.where(clear, 1.0, np.nan)
    return RasterGrid(qa.georef, out)


def cloud_fraction(mask: RasterGrid, roi: Roi | None = None) -> float:
    """Share of cloudy (missing) cells, optionally restricted to an ROI bbox."""
    vals = mask.values
    if roi is not None:
        xmin, ymin, xmax, ymax = roi.envelope_in(mask.georef.crs)
        xs = mask.georef.x_centers()
        ys = mask.georef.y_centers()
        cols = (xs >= xmin) & (xs <= xmax)
        rows = (ys >= ymin) & (ys <= ymax)
        vals = vals[np.ix_(rows, cols)]
        if vals.size == 0:
            raise InvalidBoundsError("ROI does not cover any mask cells")
    finite = np.isfinite(vals)
    if np.any(vals[finite] != 1.0):
        raise NonBinaryMaskError("mask must contain only 1 and missing")
    return float((~finite).sum() / vals.size)


def clear_dates(masks: GridStack, threshold: float) -> list[dt.date]:
    """Dates whose cloud fraction is strictly below the threshold, ascending."""
    if not 0.0 <= threshold <= 1.0:
        raise InvalidBoundsError("threshold must lie in [0, 1]")
    out = [
        date
        for layer, date, _label in masks
        if cloud_fraction(layer) < threshold
    ]
    return sorted(out)


@dataclass
class MaskStackReport:
    unmatched: list[dt.date]


def mask_stack(indices: GridStack, masks: GridStack) -> tuple[GridStack, MaskStackReport]:
    """Apply per-date masks to an index stack (nearest-resampled when coarser).

    Index layers without a same-date mask pass through unmasked and are
    reported.
    """
    by_date: dict[dt.date, RasterGrid] = {}
    for layer, date, _label in masks:
        by_date.setdefault(date, layer)
    out_layers = []
    unmatched = []
    for layer, date, _label in indices:
        mask = by_date.get(date)
        if mask is None:
            out_layers.append(layer)
            unmatched.append(date)
            continue
        if mask.georef != layer.georef:
            mask = reproject_grid(mask, layer.georef, method="nearest")
        out_layers.append(apply_pixel_mask(layer, mask))
    stack = GridStack(out_layers, list(indices.dates), list(indices.labels))
    return stack, MaskStackReport(unmatched=unmatched)
