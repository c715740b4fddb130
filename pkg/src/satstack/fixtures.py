"""Deterministic generators for every test input.

All generators are pure functions of their spec, built on a SplitMix64
PRNG (constants below) so outputs are bit-reproducible across runs and
platforms: synthetic spatio-temporal fields with seeded holes, the cone
reservoir scene, recorded-shape catalog responses, and a band archive.
"""

from __future__ import annotations

import datetime as dt
import gzip
import io
import json
import os
import tarfile
import tempfile
from dataclasses import dataclass

import numpy as np

from satstack.errors import InvalidBoundsError
from satstack.geoproj import utm
from satstack.grid import GeoRef, GridStack, RasterGrid, format_layer_date
from satstack.hydro import Dem

_MASK64 = (1 << 64) - 1


class SplitMix64:
    """SplitMix64 (Steele/Lea/Vigna): gamma 0x9E3779B97F4A7C15,
    mixers 0xBF58476D1CE4E5B9 and 0x94D049BB133111EB, final xor-shift 31."""

    GAMMA = 0x9E3779B97F4A7C15
    MIX1 = 0xBF58476D1CE4E5B9
    MIX2 = 0x94D049BB133111EB

    def __init__(self, seed: int):
        self.state = seed & _MASK64

    def next_u64(self) -> int:
        self.state = (self.state + self.GAMMA) & _MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * self.MIX1) & _MASK64
        z = ((z ^ (z >> 27)) * self.MIX2) & _MASK64
        return z ^ (z >> 31)

    def uniform(self) -> float:
        """Uniform in [0, 1) with 53 random bits."""
        return (self.next_u64() >> 11) * 2.0**-53

    def below(self, n: int) -> int:
        """Unbiased integer in [0, n) by rejection sampling."""
        if n <= 0:
            raise InvalidBoundsError("below() needs n > 0")
        limit = (_MASK64 + 1) - (_MASK64 + 1) % n
        while True:
            v = self.next_u64()
            if v < limit:
                return v % n

    def sample_indices(self, n: int, k: int) -> np.ndarray:
        """k distinct indices from range(n) by partial Fisher-Yates."""
        if k > n:
            raise InvalidBoundsError("cannot sample more indices than exist")
        pool = np.arange(n, dtype=np.int64)
        for i in range(k):
            j = i + self.below(n - i)
            pool[i], pool[j] = pool[j], pool[i]
        return pool[:k].copy()


_FIELD_GEOREF_ORIGIN = (600000.0, 4750000.0)


def _field_georef(n_rows: int, n_cols: int, cell: float = 10.0) -> GeoRef:
    ox, oy = _FIELD_GEOREF_ORIGIN
    return GeoRef(ox, oy, cell, -cell, n_cols, n_rows, utm(30, "N"))


@dataclass
class SyntheticField:
    """f(x, y, t) = a + b sin(2 pi x / period_x) sin(2 pi y / period_y)
    + c sin(2 pi t / period_t), with x/y in cells and t in days."""

    n_rows: int
    n_cols: int
    n_dates: int
    hole_fraction: float = 0.0
    seed: int = 1
    a: float = 0.5
    b: float = 0.25
    c: float = 0.1
    period_x: float | None = None  # defaults to the grid width
    period_y: float | None = None
    period_t: float = 30.0
    start: dt.date = dt.date(2018, 1, 1)

    def __post_init__(self):
        if min(self.n_rows, self.n_cols, self.n_dates) < 1:
            raise InvalidBoundsError("field dimensions must be positive")
        if not 0.0 <= self.hole_fraction < 1.0:
            raise InvalidBoundsError("hole_fraction must lie in [0, 1)")


def gen_field(spec: SyntheticField) -> tuple[GridStack, GridStack]:
    """(truth, holed) stacks; holed drops exactly floor(frac * cells) cells
    per layer at seeded positions."""
    ref = _field_georef(spec.n_rows, spec.n_cols)
    lx = spec.period_x if spec.period_x is not None else float(spec.n_cols)
    ly = spec.period_y if spec.period_y is not None else float(spec.n_rows)
    cols = np.arange(spec.n_cols) + 0.5
    rows = np.arange(spec.n_rows) + 0.5
    space = np.sin(2 * np.pi * cols[None, :] / lx) * np.sin(2 * np.pi * rows[:, None] / ly)

    rng = SplitMix64(spec.seed)
    n_holes = int(spec.hole_fraction * spec.n_rows * spec.n_cols)
    truth_layers, holed_layers, dates, labels = [], [], [], []
    for i in range(spec.n_dates):
        t = float(i)
        vals = spec.a + spec.b * space + spec.c * np.sin(2 * np.pi * t / spec.period_t)
        date = spec.start + dt.timedelta(days=i)
        label = f"FIELD_{format_layer_date(date)}"
        truth_layers.append(RasterGrid(ref, vals))
        holed = vals.copy()
        if n_holes:
            idx = rng.sample_indices(spec.n_rows * spec.n_cols, n_holes)
            holed.ravel()[idx] = np.nan
        holed_layers.append(RasterGrid(ref, holed))
        dates.append(date)
        labels.append(label)
    return (
        GridStack(truth_layers, dates, labels),
        GridStack(holed_layers, list(dates), list(labels)),
    )


@dataclass
class SyntheticReservoir:
    """Conical basin DEM z = z_bottom + slope * dist(cell, center); NDWI is
    +0.5 on submerged cells (z below the fill level), -0.5 elsewhere.

    The basin keeps the flooded body away from the grid border, so its
    shoreline is the ring where the terrain crosses the fill level.
    """

    n_rows: int = 200
    n_cols: int = 200
    cell_size: float = 10.0
    z_bottom: float = 550.0
    slope_per_cell: float = 1.0
    fill_level: float = 575.0

    def __post_init__(self):
        if self.slope_per_cell <= 0:
            raise InvalidBoundsError("cone slope must be positive")
        if min(self.n_rows, self.n_cols) < 1 or self.cell_size <= 0:
            raise InvalidBoundsError("bad reservoir grid")


def gen_reservoir(spec: SyntheticReservoir) -> tuple[Dem, RasterGrid, float]:
    """(dem, ndwi, true_level) for the basin reservoir scene.

    The shoreline ring sits at radius (fill_level - z_bottom) / slope cells
    from the basin center.
    """
    ref = _field_georef(spec.n_rows, spec.n_cols, cell=spec.cell_size)
    rows = np.arange(spec.n_rows, dtype=np.float64)
    cols = np.arange(spec.n_cols, dtype=np.float64)
    cr = (spec.n_rows - 1) / 2.0
    cc = (spec.n_cols - 1) / 2.0
    dist = np.sqrt((rows[:, None] - cr) ** 2 + (cols[None, :] - cc) ** 2)
    z = spec.z_bottom + spec.slope_per_cell * dist
    ndwi = np.where(z < spec.fill_level, 0.5, -0.5)
    return Dem(RasterGrid(ref, z)), RasterGrid(ref, ndwi), spec.fill_level


def gen_ndvi_demo_stack() -> GridStack:
    """Canonical 8-layer NDVI-like stack (2018-08-02..09) for panel rendering."""
    truth, holed = gen_field(
        SyntheticField(
            n_rows=40, n_cols=40, n_dates=8, hole_fraction=0.05, seed=2018,
            a=0.5, b=0.35, c=0.1, start=dt.date(2018, 8, 2),
        )
    )
    labels = [f"NDVI_{format_layer_date(d)}" for d in holed.dates]
    return GridStack(holed.layers, holed.dates, labels)


# --- recorded-shape catalog responses ---------------------------------------

_CMR_ENTRY = """  <entry>
    <id>G{gid}-LPDAAC_ECS</id>
    <title>SC:{product}.006:{gid}</title>
    <updated>2019-01-01T00:00:00.000Z</updated>
    <echo:producerGranuleId>{granule}</echo:producerGranuleId>
    <time:start>{date}T10:00:00.000Z</time:start>
    <georss:box>41.9 -2.5 43.4 -0.7</georss:box>
    <link rel="http://esipfed.org/ns/fedsearch/1.1/data#" href="https://e4ftl01.cr.usgs.gov/{product}/{granule}.hdf"/>
    <link rel="http://esipfed.org/ns/fedsearch/1.1/browse#" href="https://e4ftl01.cr.usgs.gov/{product}/{granule}.jpg"/>
    <echo:granuleSizeMB>84.25</echo:granuleSizeMB>
  </entry>
"""


def gen_cmr_response(
    product: str = "MOD09GA",
    start: dt.date = dt.date(2018, 8, 2),
    n_days: int = 8,
    tile: str = "h17v04",
) -> bytes:
    """Atom feed in the CMR granule-search shape, one entry per day."""
    entries = []
    for i in range(n_days):
        date = start + dt.timedelta(days=i)
        jdate = format_layer_date(date)
        granule = f"{product}.A{jdate}.{tile}.006.{jdate}032416"
        entries.append(
            _CMR_ENTRY.format(
                gid=1550000000 + i, product=product, granule=granule,
                date=date.isoformat(),
            )
        )
    feed = (
        '<?xml version="1.0" encoding="UTF-8"?>\n'
        '<feed xmlns="http://www.w3.org/2005/Atom" '
        'xmlns:echo="https://cmr.earthdata.nasa.gov/search/site/docs/search/api.html" '
        'xmlns:georss="http://www.georss.org/georss/10" '
        'xmlns:time="http://a9.com/-/opensearch/extensions/time/1.0/">\n'
        "  <title>ECHO granule metadata</title>\n"
        f"{''.join(entries)}"
        "</feed>\n"
    )
    return feed.encode("utf-8")


_SCIHUB_ENTRY = """  <entry>
    <title>{title}</title>
    <id>{uuid}</id>
    <link href="https://scihub.copernicus.eu/dhus/odata/v1/Products('{uuid}')/$value"/>
    <link rel="icon" href="https://scihub.copernicus.eu/dhus/odata/v1/Products('{uuid}')/Products('Quicklook')/$value"/>
    <summary>Date: {date}T10:56:21.024Z, Instrument: MSI, Mode: , Satellite: Sentinel-2, Size: 1.05 GB</summary>
    <date name="beginposition">{date}T10:56:21.024Z</date>
    <double name="cloudcoverpercentage">{cloud}</double>
    <str name="footprint">POLYGON((-2.5 41.9,-0.7 41.9,-0.7 43.4,-2.5 43.4,-2.5 41.9))</str>
    <str name="size">1.05 GB</str>
    <str name="tileid">{mgrs}</str>
  </entry>
"""


def gen_scihub_response(
    product: str = "S2MSI2A",
    page: int = 1,
    total_pages: int = 1,
) -> bytes:
    """OpenSearch Atom feed in the SciHub shape: 8 entries over two MGRS tiles."""
    sm = SplitMix64(40 + page)
    entries = []
    base = dt.date(2018, 7, 6)
    for i in range(8):
        date = base + dt.timedelta(days=5 * i)
        mgrs = "30TXN" if i % 2 == 0 else "30TWN"
        stamp = date.strftime("%Y%m%d")
        title = f"S2A_MSIL2A_{stamp}T105621_N0208_R094_T{mgrs}_{stamp}T141742"
        uuid = f"{sm.next_u64():016x}-0000-0000-0000-{sm.next_u64():012x}"[:36]
        cloud = round(80.0 * sm.uniform(), 4)
        entries.append(
            _SCIHUB_ENTRY.format(title=title, uuid=uuid, date=date.isoformat(),
                                 cloud=cloud, mgrs=mgrs)
        )
    next_link = ""
    if page < total_pages:
        next_link = (
            f'  <link rel="next" href="https://scihub.copernicus.eu/dhus/search'
            f'?q=producttype:{product}&amp;start={80 * page}&amp;rows=80"/>\n'
        )
    feed = (
        '<?xml version="1.0" encoding="utf-8"?>\n'
        '<feed xmlns:opensearch="http://a9.com/-/spec/opensearch/1.1/" '
        'xmlns="http://www.w3.org/2005/Atom">\n'
        "  <title>Sentinels GNSS RINEX Hub search results</title>\n"
        f"  <opensearch:totalResults>{8 * total_pages}</opensearch:totalResults>\n"
        f"{next_link}"
        f"{''.join(entries)}"
        "</feed>\n"
    )
    return feed.encode("utf-8")


def gen_m2m_response(n_scenes: int = 5) -> bytes:
    """JSON body in the M2M scene-search shape for Landsat-8."""
    sm = SplitMix64(8)
    results = []
    base = dt.date(2018, 7, 12)
    for i in range(n_scenes):
        date = base + dt.timedelta(days=16 * i)
        stamp = date.strftime("%Y%m%d")
        results.append(
            {
                "browse": [
                    {
                        "browsePath": f"https://ims.cr.usgs.gov/browse/landsat_8_c1/LC08_L1TP_200030_{stamp}.jpg"
                    }
                ],
                "cloudCover": round(80.0 * sm.uniform(), 2),
                "displayId": f"LC08_L1TP_200030_{stamp}_{stamp}_01_T1",
                "entityId": f"LC8200030{date.year}{date.timetuple().tm_yday:03d}LGN00",
                "spatialBounds": {
                    "coordinates": [
                        [[-2.9, 41.5], [-2.9, 43.7], [-0.2, 43.7], [-0.2, 41.5], [-2.9, 41.5]]
                    ],
                    "type": "Polygon",
                },
                "temporalCoverage": {"endDate": f"{date.isoformat()} 00:00:00",
                                     "startDate": f"{date.isoformat()} 00:00:00"},
                "options": {"download": True, "bulk": True},
            }
        )
    body = {
        "data": {
            "nextRecord": None,
            "recordsReturned": n_scenes,
            "results": results,
            "startingNumber": 1,
            "totalHits": n_scenes,
        },
        "errorCode": None,
        "errorMessage": None,
        "requestId": 702314,
        "version": "stable",
    }
    return json.dumps(body, sort_keys=True, indent=1).encode("utf-8")


def gen_band_archive(products=("B01", "B02", "B03", "state")) -> bytes:
    """tar.gz (POSIX ustar in gzip) with one tiny GeoTIFF per band token."""
    from satstack.geotiff import write_geotiff

    ref = _field_georef(4, 4, cell=463.3127165)
    tar_buf = io.BytesIO()
    with tarfile.open(fileobj=tar_buf, mode="w", format=tarfile.USTAR_FORMAT) as tar:
        for k, band in enumerate(products):
            vals = np.full((4, 4), float(100 * (k + 1)))
            with tempfile.TemporaryDirectory() as d:
                p = os.path.join(d, "x.tif")
                write_geotiff(RasterGrid(ref, vals), p, dtype="uint16")
                with open(p, "rb") as fh:
                    data = fh.read()
            info = tarfile.TarInfo(name=f"MOD09GA.A2018214.h17v04.006_{band}_1km.tif")
            info.size = len(data)
            info.mtime = 0
            info.uid = info.gid = 0
            info.uname = info.gname = ""
            tar.addfile(info, io.BytesIO(data))
    gz_buf = io.BytesIO()
    with gzip.GzipFile(fileobj=gz_buf, mode="wb", mtime=0) as gz:
        gz.write(tar_buf.getvalue())
    return gz_buf.getvalue()


def gen_browse_bytes() -> bytes:
    """Stand-in browse image payload (JPEG passthrough bytes)."""
    return b"\xff\xd8\xff\xe0" + b"\x00\x10JFIF" + bytes(range(64)) + b"\xff\xd9"
