"""Mission-aware band roles and remote-sensing index computation.

The same wavelength carries different band numbers across missions, so
index functions are written against roles (red, nir, green, ...) and a
MissionBandMap resolves each (mission, role) pair to the file token used
by that mission.  Unknown pairs raise; nothing is guessed.
"""

from __future__ import annotations

import os
import re
from dataclasses import dataclass, field

import numpy as np

from satstack.errors import (
    GeorefMismatchError,
    NoInputFilesError,
    UnmappedRoleError,
)
from satstack.grid import RasterGrid, format_layer_date, parse_layer_date

BAND_ROLES = ("blue", "green", "red", "nir", "swir1", "swir2", "quality")

MISSIONS = ("landsat7", "landsat8", "modis", "sentinel2")

DEFAULT_BAND_MAP: dict[str, dict[str, str]] = {
    "landsat7": {"green": "B2", "red": "B3", "nir": "B4"},
    "landsat8": {"green": "B3", "red": "B4", "nir": "B5", "quality": "pixel_qa"},
    "sentinel2": {"green": "B03", "red": "B04", "nir": "B08", "quality": "CLDPRB"},
    "modis": {"red": "B01", "nir": "B02", "quality": "state"},
}

INDEX_ROLES = {
    "ndvi": ("red", "nir"),
    "ndwi": ("green", "nir"),
    "evi": ("blue", "red", "nir"),
    "nbr": ("nir", "swir2"),
}


@dataclass
class MissionBandMap:
    """Per-mission role -> band-token table, overridable from a config file."""

    table: dict[str, dict[str, str]] = field(
        default_factory=lambda: {m: dict(r) for m, r in DEFAULT_BAND_MAP.items()}
    )

    def band_for_role(self, mission: str, role: str) -> str:
        if role not in BAND_ROLES:
            raise UnmappedRoleError(f"unknown band role {role!r}")
        token = self.table.get(mission, {}).get(role)
        if token is None:
            raise UnmappedRoleError(f"no band mapped for ({mission}, {role})")
        return token

    def override(self, mission: str, role: str, token: str) -> None:
        if role not in BAND_ROLES:
            raise UnmappedRoleError(f"unknown band role {role!r}")
        self.table.setdefault(mission, {})[role] = token

    @classmethod
    def from_file(cls, path: str) -> "MissionBandMap":
        """Load overrides from `mission.role = token` lines on the defaults."""
        bmap = cls()
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                key, _, token = line.partition("=")
                mission, _, role = key.strip().partition(".")
                bmap.override(mission.strip(), role.strip(), token.strip())
        return bmap


def band_for_role(bmap: MissionBandMap, mission: str, role: str) -> str:
    return bmap.band_for_role(mission, role)


def _check_georefs(*grids: RasterGrid):
    for g in grids[1:]:
        if g.georef != grids[0].georef:
            raise GeorefMismatchError("index inputs must share one GeoRef")


def _normalized_difference(a: RasterGrid, b: RasterGrid) -> RasterGrid:
    _check_georefs(a, b)
    num = a.values - b.values
    den = a.values + b.values
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(den != 0.0, num / den, np.nan)
    return RasterGrid(a.georef, out)


def index_ndvi(red: RasterGrid, nir: RasterGrid) -> RasterGrid:
    """(nir - red) / (nir + red)"""
    return _normalized_difference(nir, red)


def index_ndwi(green: RasterGrid, nir: RasterGrid) -> RasterGrid:
    """(green - nir) / (green + nir); open water pushes toward +1."""
    return _normalized_difference(green, nir)


def index_nbr(nir: RasterGrid, swir2: RasterGrid) -> RasterGrid:
    """(nir - swir2) / (nir + swir2)"""
    return _normalized_difference(nir, swir2)


def index_evi(blue: RasterGrid, red: RasterGrid, nir: RasterGrid) -> RasterGrid:
    """2.5 (nir - red) / (nir + 6 red - 7.5 blue + 1)"""
    _check_georefs(blue, red, nir)
    den = nir.values + 6.0 * red.values - 7.5 * blue.values + 1.0
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(den != 0.0, 2.5 * (nir.values - red.values) / den, np.nan)
    return RasterGrid(blue.georef, out)


_INDEX_FUNCS = {
    "ndvi": lambda g: index_ndvi(g["red"], g["nir"]),
    "ndwi": lambda g: index_ndwi(g["green"], g["nir"]),
    "evi": lambda g: index_evi(g["blue"], g["red"], g["nir"]),
    "nbr": lambda g: index_nbr(g["nir"], g["swir2"]),
}


@dataclass
class FolderIndexReport:
    written: list[str] = field(default_factory=list)
    skipped: list[tuple[str, str]] = field(default_factory=list)  # (date token, why)


def _scan_band_files(src_dir: str) -> dict[str, dict[str, str]]:
    """date token -> {filename segment -> path} for *_YYYYJJJ*_SEG*.tif files."""
    by_date: dict[str, dict[str, str]] = {}
    for name in sorted(os.listdir(src_dir)):
        if not name.lower().endswith(".tif"):
            continue
        stem = name[: name.rfind(".")]
        m = re.search(r"(?<!\d)(\d{7})(?!\d)", stem)
        if not m:
            continue
        try:
            parse_layer_date(stem)
        except Exception:
            continue
        segments = stem.split("_")
        slots = by_date.setdefault(m.group(1), {})
        for seg in segments:
            slots.setdefault(seg, os.path.join(src_dir, name))
    return by_date


def folder_to_index(
    src_dir: str,
    index: str,
    mission: str,
    bmap: MissionBandMap | None = None,
    dates=None,
    out_dir: str | None = None,
) -> FolderIndexReport:
    """Compute an index for every (selected) date in a band-file folder.

    Outputs <INDEX>_<YYYYJJJ>.tif per date; dates missing a required band
    are skipped and listed in the report.
    """
    from satstack.geotiff import read_geotiff, write_geotiff

    if index not in _INDEX_FUNCS:
        raise UnmappedRoleError(f"unknown index {index!r}")
    bmap = bmap or MissionBandMap()
    out_dir = out_dir or src_dir
    by_date = _scan_band_files(src_dir)
    if not by_date:
        raise NoInputFilesError(f"no dated band files under {src_dir}")

    wanted = None
    if dates is not None:
        wanted = {format_layer_date(d) for d in dates}

    tokens = {role: bmap.band_for_role(mission, role) for role in INDEX_ROLES[index]}
    report = FolderIndexReport()
    os.makedirs(out_dir, exist_ok=True)
    for token_date in sorted(by_date):
        if wanted is not None and token_date not in wanted:
            continue
        slots = by_date[token_date]
        missing = [role for role, tok in tokens.items() if tok not in slots]
        if missing:
            report.skipped.append((token_date, f"missing bands: {', '.join(missing)}"))
            continue
        grids = {role: read_geotiff(slots[tok]) for role, tok in tokens.items()}
        result = _INDEX_FUNCS[index](grids)
        out_path = os.path.join(out_dir, f"{index.upper()}_{token_date}.tif")
        write_geotiff(result, out_path)
        report.written.append(out_path)
    if wanted is not None and not report.written and not report.skipped:
        raise NoInputFilesError("no selected dates found in the folder")
    return report
