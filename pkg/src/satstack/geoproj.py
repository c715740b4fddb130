"""Coordinate reference systems and reprojection.

Three CRS kinds are supported: WGS84 geographic (degrees), UTM on the
WGS84 ellipsoid (transverse Mercator series), and the MODIS global
sinusoidal grid on the authalic sphere.  Forward/inverse transforms are
vectorized over numpy arrays; reproject_grid resamples one raster onto a
target geometry with nearest or bilinear sampling.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from satstack.errors import (
    LatitudeOutOfRangeError,
    OutOfDomainError,
    UnsupportedCrsError,
)

# WGS84 ellipsoid
WGS84_A = 6378137.0
WGS84_INV_F = 298.257223563
WGS84_B = WGS84_A * (1.0 - 1.0 / WGS84_INV_F)
UTM_K0 = 0.9996
UTM_FALSE_EASTING = 500000.0
UTM_FALSE_NORTHING_SOUTH = 10000000.0

# authalic sphere radius used by the MODIS sinusoidal grid
MODIS_SPHERE_RADIUS = 6371007.181


@dataclass(frozen=True)
class CrsSpec:
    """One of: geographic WGS84, UTM WGS84 (zone + hemisphere), MODIS sinusoidal."""

    kind: str  # "geographic" | "utm" | "sinusoidal"
    zone: int | None = None
    hemisphere: str | None = None  # "N" | "S"
    sphere_radius_m: float = MODIS_SPHERE_RADIUS

    def __post_init__(self):
        if self.kind not in ("geographic", "utm", "sinusoidal"):
            raise UnsupportedCrsError(f"unknown CRS kind {self.kind!r}")
        if self.kind == "utm":
            if self.zone is None or not 1 <= self.zone <= 60:
                raise UnsupportedCrsError(f"UTM zone {self.zone!r} outside 1-60")
            if self.hemisphere not in ("N", "S"):
                raise UnsupportedCrsError(f"UTM hemisphere {self.hemisphere!r}")
        if self.kind == "sinusoidal" and self.sphere_radius_m <= 0:
            raise UnsupportedCrsError("sphere radius must be positive")

    @property
    def is_projected(self) -> bool:
        return self.kind != "geographic"

    def to_epsg(self) -> int | None:
        """EPSG code, or None for the (user-defined) sinusoidal grid."""
        if self.kind == "geographic":
            return 4326
        if self.kind == "utm":
            base = 32600 if self.hemisphere == "N" else 32700
            return base + self.zone
        return None

    @classmethod
    def from_epsg(cls, code: int) -> "CrsSpec":
        if code == 4326:
            return cls("geographic")
        if 32601 <= code <= 32660:
            return cls("utm", zone=code - 32600, hemisphere="N")
        if 32701 <= code <= 32760:
            return cls("utm", zone=code - 32700, hemisphere="S")
        raise UnsupportedCrsError(f"EPSG:{code} is not supported")


GEOGRAPHIC = CrsSpec("geographic")
SINUSOIDAL = CrsSpec("sinusoidal")


def utm(zone: int, hemisphere: str = "N") -> CrsSpec:
    return CrsSpec("utm", zone=zone, hemisphere=hemisphere)


def _normalize_lon(lon):
    out = (np.asarray(lon, dtype=np.float64) + 180.0) % 360.0 - 180.0
    return np.where(out == -180.0, 180.0, out)


def _check_lat(lat):
    lat = np.asarray(lat, dtype=np.float64)
    if np.any(np.abs(lat) > 90.0):
        raise LatitudeOutOfRangeError("latitude outside [-90, 90]")
    return lat


# --- transverse Mercator series (WGS84) -----------------------------------
# Series from Hoffmann-Wellenhof et al., GPS: Theory and Practice; accurate
# to well below 1e-6 degrees on round trip within a UTM zone.

_N = (WGS84_A - WGS84_B) / (WGS84_A + WGS84_B)
_ALPHA = (WGS84_A + WGS84_B) / 2.0 * (1.0 + _N**2 / 4.0 + _N**4 / 64.0)
_EP2 = (WGS84_A**2 - WGS84_B**2) / WGS84_B**2


def _meridian_arc(phi):
    n = _N
    beta = -3.0 * n / 2.0 + 9.0 * n**3 / 16.0 - 3.0 * n**5 / 32.0
    gamma = 15.0 * n**2 / 16.0 - 15.0 * n**4 / 32.0
    delta = -35.0 * n**3 / 48.0 + 105.0 * n**5 / 256.0
    eps = 315.0 * n**4 / 512.0
    return _ALPHA * (
        phi
        + beta * np.sin(2.0 * phi)
        + gamma * np.sin(4.0 * phi)
        + delta * np.sin(6.0 * phi)
        + eps * np.sin(8.0 * phi)
    )


def _footpoint_latitude(y):
    n = _N
    y_ = y / _ALPHA
    beta = 3.0 * n / 2.0 - 27.0 * n**3 / 32.0 + 269.0 * n**5 / 512.0
    gamma = 21.0 * n**2 / 16.0 - 55.0 * n**4 / 32.0
    delta = 151.0 * n**3 / 96.0 - 417.0 * n**5 / 128.0
    eps = 1097.0 * n**4 / 512.0
    return (
        y_
        + beta * np.sin(2.0 * y_)
        + gamma * np.sin(4.0 * y_)
        + delta * np.sin(6.0 * y_)
        + eps * np.sin(8.0 * y_)
    )


def _tm_forward(phi, lam, lam0):
    cphi = np.cos(phi)
    nu2 = _EP2 * cphi * cphi
    big_n = WGS84_A**2 / (WGS84_B * np.sqrt(1.0 + nu2))
    t = np.tan(phi)
    t2 = t * t
    l = lam - lam0

    l3 = 1.0 - t2 + nu2
    l4 = 5.0 - t2 + 9.0 * nu2 + 4.0 * nu2 * nu2
    l5 = 5.0 - 18.0 * t2 + t2 * t2 + 14.0 * nu2 - 58.0 * t2 * nu2
    l6 = 61.0 - 58.0 * t2 + t2 * t2 + 270.0 * nu2 - 330.0 * t2 * nu2
    l7 = 61.0 - 479.0 * t2 + 179.0 * t2 * t2 - t2 * t2 * t2
    l8 = 1385.0 - 3111.0 * t2 + 543.0 * t2 * t2 - t2 * t2 * t2

    x = (
        big_n * cphi * l
        + big_n / 6.0 * cphi**3 * l3 * l**3
        + big_n / 120.0 * cphi**5 * l5 * l**5
        + big_n / 5040.0 * cphi**7 * l7 * l**7
    )
    y = (
        _meridian_arc(phi)
        + t / 2.0 * big_n * cphi**2 * l**2
        + t / 24.0 * big_n * cphi**4 * l4 * l**4
        + t / 720.0 * big_n * cphi**6 * l6 * l**6
        + t / 40320.0 * big_n * cphi**8 * l8 * l**8
    )
    return x, y


def _tm_inverse(x, y, lam0):
    phif = _footpoint_latitude(y)
    cf = np.cos(phif)
    nuf2 = _EP2 * cf * cf
    nf = WGS84_A**2 / (WGS84_B * np.sqrt(1.0 + nuf2))
    tf = np.tan(phif)
    tf2 = tf * tf
    tf4 = tf2 * tf2

    nf2 = nf * nf
    nf3 = nf2 * nf
    nf4 = nf3 * nf
    nf5 = nf4 * nf
    nf6 = nf5 * nf
    nf7 = nf6 * nf
    nf8 = nf7 * nf

    x1frac = 1.0 / (nf * cf)
    x2frac = tf / (2.0 * nf2)
    x3frac = 1.0 / (6.0 * nf3 * cf)
    x4frac = tf / (24.0 * nf4)
    x5frac = 1.0 / (120.0 * nf5 * cf)
    x6frac = tf / (720.0 * nf6)
    x7frac = 1.0 / (5040.0 * nf7 * cf)
    x8frac = tf / (40320.0 * nf8)

    x2poly = -1.0 - nuf2
    x3poly = -1.0 - 2.0 * tf2 - nuf2
    x4poly = (
        5.0 + 3.0 * tf2 + 6.0 * nuf2 - 6.0 * tf2 * nuf2
        - 3.0 * nuf2 * nuf2 - 9.0 * tf2 * nuf2 * nuf2
    )
    x5poly = 5.0 + 28.0 * tf2 + 24.0 * tf4 + 6.0 * nuf2 + 8.0 * tf2 * nuf2
    x6poly = -61.0 - 90.0 * tf2 - 45.0 * tf4 - 107.0 * nuf2 + 162.0 * tf2 * nuf2
    x7poly = -61.0 - 662.0 * tf2 - 1320.0 * tf4 - 720.0 * tf4 * tf2
    x8poly = 1385.0 + 3633.0 * tf2 + 4095.0 * tf4 + 1575.0 * tf4 * tf2

    phi = (
        phif
        + x2frac * x2poly * x**2
        + x4frac * x4poly * x**4
        + x6frac * x6poly * x**6
        + x8frac * x8poly * x**8
    )
    lam = (
        lam0
        + x1frac * x
        + x3frac * x3poly * x**3
        + x5frac * x5poly * x**5
        + x7frac * x7poly * x**7
    )
    return phi, lam


def _utm_central_meridian_rad(zone: int) -> float:
    return np.radians(-183.0 + 6.0 * zone)


# --- public transforms -----------------------------------------------------

def forward(crs: CrsSpec, lon_deg, lat_deg):
    """Project geographic coordinates (degrees) into the CRS.

    Returns (x, y): degrees for the geographic CRS, meters otherwise.
    Scalars in, scalars out; arrays in, arrays out.
    """
    scalar = np.isscalar(lon_deg) and np.isscalar(lat_deg)
    lon = _normalize_lon(lon_deg)
    lat = _check_lat(lat_deg)
    if crs.kind == "geographic":
        x, y = lon + 0.0, lat + 0.0
    elif crs.kind == "sinusoidal":
        r = crs.sphere_radius_m
        lam = np.radians(lon)
        phi = np.radians(lat)
        x = r * lam * np.cos(phi)
        y = r * phi
    else:
        phi = np.radians(lat)
        lam = np.radians(lon)
        x, y = _tm_forward(phi, lam, _utm_central_meridian_rad(crs.zone))
        x = x * UTM_K0 + UTM_FALSE_EASTING
        y = y * UTM_K0
        if crs.hemisphere == "S":
            y = y + UTM_FALSE_NORTHING_SOUTH
    if scalar:
        return float(x), float(y)
    return np.asarray(x), np.asarray(y)


def inverse(crs: CrsSpec, x, y):
    """Unproject CRS coordinates back to (lon_deg, lat_deg)."""
    scalar = np.isscalar(x) and np.isscalar(y)
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if crs.kind == "geographic":
        if np.any(np.abs(y) > 90.0):
            raise OutOfDomainError("geographic y outside [-90, 90]")
        lon, lat = x + 0.0, y + 0.0
    elif crs.kind == "sinusoidal":
        r = crs.sphere_radius_m
        phi = y / r
        if np.any(np.abs(phi) > np.pi / 2 + 1e-12):
            raise OutOfDomainError("sinusoidal y outside the pole range")
        cphi = np.cos(phi)
        with np.errstate(divide="ignore", invalid="ignore"):
            lam = np.where(cphi > 0.0, x / (r * cphi), 0.0)
        if np.any(np.abs(lam) > np.pi + 1e-9):
            raise OutOfDomainError("sinusoidal x outside the longitude range")
        lon, lat = np.degrees(lam), np.degrees(phi)
    else:
        xn = (x - UTM_FALSE_EASTING) / UTM_K0
        yn = y.copy()
        if crs.hemisphere == "S":
            yn = yn - UTM_FALSE_NORTHING_SOUTH
        yn = yn / UTM_K0
        phi, lam = _tm_inverse(xn, yn, _utm_central_meridian_rad(crs.zone))
        if np.any(np.abs(phi) > np.radians(89.999)):
            raise OutOfDomainError("UTM northing outside the series domain")
        lon, lat = np.degrees(lam), np.degrees(phi)
    if scalar:
        return float(lon), float(lat)
    return np.asarray(lon), np.asarray(lat)


def transform(src: CrsSpec, dst: CrsSpec, x, y):
    """Map coordinates from one CRS to another through geographic."""
    if src == dst:
        return np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64)
    lon, lat = inverse(src, x, y)
    return forward(dst, lon, lat)


def reproject_grid(src, target, method: str = "nearest"):
    """Resample a RasterGrid onto a target GeoRef.

    Each target cell center is mapped into the source CRS and sampled with
    the requested method.  Nearest sampling never invents values; bilinear
    renormalizes over the finite corners and only goes missing when all
    corners are missing or the point falls outside the source extent.
    """
    from satstack.grid import RasterGrid

    if method not in ("nearest", "bilinear"):
        raise ValueError(f"unknown resampling method {method!r}")
    if src.georef == target and method == "nearest":
        return RasterGrid(target, src.values.copy(), source=src.source)

    tx = target.x_centers()
    ty = target.y_centers()
    gx, gy = np.meshgrid(tx, ty)
    sx, sy = transform(target.crs, src.georef.crs, gx.ravel(), gy.ravel())

    col_f = (sx - src.georef.origin_x) / src.georef.pixel_w - 0.5
    row_f = (sy - src.georef.origin_y) / src.georef.pixel_h - 0.5
    n_rows, n_cols = src.values.shape
    out = np.full(gx.size, np.nan)

    inside = (
        (col_f >= -0.5) & (col_f <= n_cols - 0.5)
        & (row_f >= -0.5) & (row_f <= n_rows - 0.5)
    )
    if method == "nearest":
        r = np.clip(np.rint(row_f), 0, n_rows - 1).astype(np.int64)
        c = np.clip(np.rint(col_f), 0, n_cols - 1).astype(np.int64)
        out[inside] = src.values[r[inside], c[inside]]
    else:
        r0 = np.floor(row_f).astype(np.int64)
        c0 = np.floor(col_f).astype(np.int64)
        fr = row_f - r0
        fc = col_f - c0
        acc = np.zeros(gx.size)
        wacc = np.zeros(gx.size)
        for dr, dc, w in (
            (0, 0, (1 - fr) * (1 - fc)),
            (0, 1, (1 - fr) * fc),
            (1, 0, fr * (1 - fc)),
            (1, 1, fr * fc),
        ):
            rr = r0 + dr
            cc = c0 + dc
            ok = inside & (rr >= 0) & (rr < n_rows) & (cc >= 0) & (cc < n_cols)
            vals = np.full(gx.size, np.nan)
            vals[ok] = src.values[rr[ok], cc[ok]]
            use = ok & np.isfinite(vals)
            acc[use] += w[use] * vals[use]
            wacc[use] += w[use]
        nz = wacc > 0.0
        out[nz] = acc[nz] / wacc[nz]

    return RasterGrid(target, out.reshape(target.n_rows, target.n_cols))
