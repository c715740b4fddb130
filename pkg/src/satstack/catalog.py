"""Archive search, response parsing, download planning and unpacking.

Each mission speaks a different dialect: MODIS granules through a CMR-style
atom feed, Sentinel-2 through an OpenSearch feed with basic auth, Landsat
through a JSON POST API with token auth.  build_query freezes one concrete
request shape per mission (the golden `.req` fixtures pin it); parsing and
downloading run against any Transport, so tests use recorded fixtures and
`--live` swaps in a real HTTP transport.
"""

from __future__ import annotations

import datetime as dt
import hashlib
import json
import os
import tarfile
import urllib.error
import urllib.parse
import urllib.request
import zipfile
import xml.etree.ElementTree as ET
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

from satstack.errors import (
    InvalidQueryError,
    MissingCredentialsError,
    NoBrowseUrlError,
    ResponseParseError,
    ResponseSchemaError,
    TransportError,
)
from satstack.geoproj import GEOGRAPHIC
from satstack.grid import Roi, parse_layer_date

MISSIONS = ("landsat7", "landsat8", "modis", "sentinel2")

ENV_EARTHDATA_USER = "EARTHDATA_USER"
ENV_EARTHDATA_PASS = "EARTHDATA_PASS"
ENV_SCIHUB_USER = "SCIHUB_USER"
ENV_SCIHUB_PASS = "SCIHUB_PASS"

CMR_GRANULES_URL = "https://cmr.earthdata.nasa.gov/search/granules.atom"
SCIHUB_SEARCH_URL = "https://scihub.copernicus.eu/dhus/search"
M2M_SCENE_SEARCH_URL = "https://m2m.cr.usgs.gov/api/api/json/stable/scene-search"
ESPA_ORDER_URL = "https://espa.cr.usgs.gov/api/v1/order"
ESPA_STATUS_URL = "https://espa.cr.usgs.gov/api/v1/order-status"

PAGE_SIZE = 100

ESPA_BACKOFF_BASE_S = 30.0
ESPA_BACKOFF_FACTOR = 2.0
ESPA_BACKOFF_CAP_S = 900.0


@dataclass(frozen=True)
class RequestDescriptor:
    """One HTTP request, canonically serializable (credentials excluded)."""

    method: str
    url: str
    params: tuple[tuple[str, str], ...] = ()
    body: bytes = b""
    auth: str = "none"  # none | basic | token | transport

    def canonical_bytes(self) -> bytes:
        """METHOD + URL line, sorted params, auth mode, blank line, body."""
        lines = [f"{self.method} {self.url}"]
        lines.extend(f"{k}={v}" for k, v in sorted(self.params))
        lines.append(f"auth={self.auth}")
        return ("\n".join(lines) + "\n\n").encode("utf-8") + self.body

    def full_url(self) -> str:
        if not self.params:
            return self.url
        return self.url + "?" + urllib.parse.urlencode(sorted(self.params))


@dataclass(frozen=True)
class SceneQuery:
    mission: str
    product: str
    date_from: dt.date
    date_to: dt.date
    roi: Roi
    cloud_cover: tuple[float, float] | None = None
    credentials: tuple[str, str] | None = None

    def __post_init__(self):
        if self.mission not in MISSIONS:
            raise InvalidQueryError(f"unknown mission {self.mission!r}")
        if self.date_from > self.date_to:
            raise InvalidQueryError("empty date interval")
        if self.cloud_cover is not None:
            lo, hi = self.cloud_cover
            if not (0 <= lo <= hi <= 100):
                raise InvalidQueryError("cloud cover bounds must satisfy 0<=lo<=hi<=100")


@dataclass
class SceneRecord:
    mission: str
    product: str
    tile_id: str
    capture_date: dt.date
    download_url: str
    cloud_cover_pct: float | None = None
    browse_url: str | None = None
    file_size_bytes: int | None = None
    footprint_lonlat: tuple[float, float, float, float] | None = None

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["capture_date"] = self.capture_date.isoformat()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SceneRecord":
        d = dict(d)
        d["capture_date"] = dt.date.fromisoformat(d["capture_date"])
        if d.get("footprint_lonlat") is not None:
            d["footprint_lonlat"] = tuple(d["footprint_lonlat"])
        return cls(**d)


@dataclass
class DownloadPlan:
    records: list[SceneRecord]
    dest_dir: str
    extract: bool = False
    band_filter: tuple[str, ...] = ()
    remove_archives: bool = False
    overwrite: bool = False
    workers: int = 3

    def __post_init__(self):
        if any(not tok for tok in self.band_filter):
            raise InvalidQueryError("band filter tokens must be non-empty")
        if self.workers < 1:
            raise InvalidQueryError("worker count must be >= 1")


def _fmt6(v: float) -> str:
    return f"{v:.6f}"


def _fmt_cloud(v: float) -> str:
    return str(int(v)) if float(v) == int(v) else repr(float(v))


def _roi_ring_lonlat(roi: Roi) -> list[tuple[float, float]]:
    if roi.rings is not None and roi.crs == GEOGRAPHIC:
        return list(roi.rings[0])
    xmin, ymin, xmax, ymax = roi.envelope_in(GEOGRAPHIC)
    return [(xmin, ymin), (xmax, ymin), (xmax, ymax), (xmin, ymax), (xmin, ymin)]


def build_query(q: SceneQuery) -> RequestDescriptor:
    """Deterministic search request for one mission's archive."""
    if q.mission == "modis":
        xmin, ymin, xmax, ymax = q.roi.envelope_in(GEOGRAPHIC)
        params = (
            ("bounding_box", ",".join(_fmt6(v) for v in (xmin, ymin, xmax, ymax))),
            ("page_num", "1"),
            ("page_size", str(PAGE_SIZE)),
            ("short_name", q.product),
            (
                "temporal",
                f"{q.date_from.isoformat()}T00:00:00Z,{q.date_to.isoformat()}T23:59:59Z",
            ),
        )
        return RequestDescriptor("GET", CMR_GRANULES_URL, params=params, auth="none")

    if q.mission == "sentinel2":
        if q.credentials is None:
            raise MissingCredentialsError("SciHub search requires credentials")
        ring = _roi_ring_lonlat(q.roi)
        wkt = ",".join(f"{_fmt6(x)} {_fmt6(y)}" for x, y in ring)
        terms = [
            f"producttype:{q.product}",
            (
                f"beginPosition:[{q.date_from.isoformat()}T00:00:00.000Z TO "
                f"{q.date_to.isoformat()}T23:59:59.999Z]"
            ),
            f'footprint:"Intersects(POLYGON(({wkt})))"',
        ]
        if q.cloud_cover is not None:
            lo, hi = q.cloud_cover
            terms.append(
                f"cloudcoverpercentage:[{_fmt_cloud(lo)} TO {_fmt_cloud(hi)}]"
            )
        params = (
            ("q", " AND ".join(terms)),
            ("rows", str(PAGE_SIZE)),
            ("start", "0"),
        )
        return RequestDescriptor("GET", SCIHUB_SEARCH_URL, params=params, auth="basic")

    # Landsat missions share the M2M JSON API
    if q.credentials is None:
        raise MissingCredentialsError("Landsat search requires credentials")
    xmin, ymin, xmax, ymax = q.roi.envelope_in(GEOGRAPHIC)
    scene_filter: dict = {
        "acquisitionFilter": {
            "end": q.date_to.isoformat(),
            "start": q.date_from.isoformat(),
        },
        "spatialFilter": {
            "filterType": "mbr",
            "lowerLeft": {"latitude": ymin, "longitude": xmin},
            "upperRight": {"latitude": ymax, "longitude": xmax},
        },
    }
    if q.cloud_cover is not None:
        lo, hi = q.cloud_cover
        scene_filter["cloudCoverFilter"] = {
            "includeUnknown": False,
            "max": int(hi) if hi == int(hi) else hi,
            "min": int(lo) if lo == int(lo) else lo,
        }
    body = json.dumps(
        {
            "datasetName": q.product,
            "maxResults": PAGE_SIZE,
            "sceneFilter": scene_filter,
            "startingNumber": 1,
        },
        sort_keys=True,
        separators=(",", ":"),
    ).encode("utf-8")
    return RequestDescriptor("POST", M2M_SCENE_SEARCH_URL, body=body, auth="token")


# --- response parsing -------------------------------------------------------

def _local(tag: str) -> str:
    return tag.rsplit("}", 1)[-1]


def _parse_xml(body: bytes) -> ET.Element:
    try:
        return ET.fromstring(body)
    except ET.ParseError as exc:
        raise ResponseParseError(f"malformed XML: {exc}") from exc


def _entry_fields(entry: ET.Element) -> dict:
    fields: dict = {"links": []}
    for child in entry:
        name = _local(child.tag)
        if name == "link":
            fields["links"].append((child.get("rel") or "", child.get("href") or ""))
        else:
            key = child.get("name") or name
            fields[key] = (child.text or "").strip()
    return fields


def _parse_modis_feed(body: bytes, mission: str) -> list[SceneRecord]:
    root = _parse_xml(body)
    records = []
    for entry in root:
        if _local(entry.tag) != "entry":
            continue
        f = _entry_fields(entry)
        granule = f.get("producerGranuleId")
        if not granule:
            raise ResponseSchemaError("granule entry lacks producerGranuleId")
        parts = granule.split(".")
        if len(parts) < 3:
            raise ResponseSchemaError(f"unexpected granule id {granule!r}")
        product, a_date, tile = parts[0], parts[1], parts[2]
        capture = parse_layer_date(a_date.lstrip("A"))
        download = browse = None
        for rel, href in f["links"]:
            if rel.endswith("data#"):
                download = href
            elif rel.endswith("browse#"):
                browse = href
        if not download:
            raise ResponseSchemaError(f"granule {granule!r} lacks a data link")
        size = None
        if "granuleSizeMB" in f:
            size = int(float(f["granuleSizeMB"]) * 1024 * 1024)
        footprint = None
        if "box" in f:
            s, w, n, e = (float(v) for v in f["box"].split())
            footprint = (w, s, e, n)
        records.append(
            SceneRecord(
                mission=mission,
                product=product,
                tile_id=tile,
                capture_date=capture,
                download_url=download,
                browse_url=browse,
                file_size_bytes=size,
                footprint_lonlat=footprint,
            )
        )
    return records


_SIZE_UNITS = {"B": 1, "KB": 1024, "MB": 1024**2, "GB": 1024**3, "TB": 1024**4}


def _wkt_envelope(wkt: str) -> tuple[float, float, float, float]:
    inner = wkt[wkt.rfind("((") + 2 : wkt.find("))")]
    xs, ys = [], []
    for pair in inner.split(","):
        x, y = pair.split()
        xs.append(float(x))
        ys.append(float(y))
    return (min(xs), min(ys), max(xs), max(ys))


def _parse_sentinel_feed(body: bytes, mission: str) -> list[SceneRecord]:
    root = _parse_xml(body)
    records = []
    for entry in root:
        if _local(entry.tag) != "entry":
            continue
        f = _entry_fields(entry)
        title = f.get("title")
        if not title:
            raise ResponseSchemaError("feed entry lacks a title")
        parts = title.split("_")
        level = parts[1] if len(parts) > 1 else ""
        product = "S2" + level.replace("MSIL", "MSI") if level.startswith("MSIL") else level
        tile = next((p[1:] for p in parts if len(p) == 6 and p.startswith("T")), title)
        begin = f.get("beginposition") or f.get("beginPosition")
        if not begin:
            raise ResponseSchemaError(f"entry {title!r} lacks beginposition")
        capture = dt.date.fromisoformat(begin[:10])
        download = browse = None
        for rel, href in f["links"]:
            if rel == "icon":
                browse = href
            elif rel in ("", "alternative") and download is None:
                download = href
        if not download:
            raise ResponseSchemaError(f"entry {title!r} lacks a download link")
        cloud = f.get("cloudcoverpercentage")
        size = None
        if "size" in f:
            try:
                number, unit = f["size"].split()
                size = int(float(number) * _SIZE_UNITS[unit.upper()])
            except (ValueError, KeyError):
                size = None
        footprint = _wkt_envelope(f["footprint"]) if "footprint" in f else None
        records.append(
            SceneRecord(
                mission=mission,
                product=product,
                tile_id=tile,
                capture_date=capture,
                download_url=download,
                cloud_cover_pct=float(cloud) if cloud else None,
                browse_url=browse,
                file_size_bytes=size,
                footprint_lonlat=footprint,
            )
        )
    return records


def _parse_landsat_json(body: bytes, mission: str) -> list[SceneRecord]:
    try:
        doc = json.loads(body)
    except json.JSONDecodeError as exc:
        raise ResponseParseError(f"malformed JSON: {exc}") from exc
    if not isinstance(doc, dict) or "data" not in doc:
        raise ResponseSchemaError("scene-search response lacks a data object")
    if doc.get("errorCode"):
        raise ResponseSchemaError(f"API error: {doc.get('errorMessage')}")
    data = doc["data"] or {}
    records = []
    for item in data.get("results", []):
        display = item.get("displayId")
        entity = item.get("entityId")
        if not display or not entity:
            raise ResponseSchemaError("scene result lacks displayId/entityId")
        parts = display.split("_")
        if len(parts) < 4:
            raise ResponseSchemaError(f"unexpected displayId {display!r}")
        pathrow = parts[2]
        tile = f"{pathrow[:3]}/{pathrow[3:]}"
        capture = dt.datetime.strptime(parts[3], "%Y%m%d").date()
        browse = None
        if item.get("browse"):
            browse = item["browse"][0].get("browsePath")
        footprint = None
        bounds = item.get("spatialBounds") or {}
        if bounds.get("type") == "Polygon":
            ring = bounds["coordinates"][0]
            xs = [p[0] for p in ring]
            ys = [p[1] for p in ring]
            footprint = (min(xs), min(ys), max(xs), max(ys))
        records.append(
            SceneRecord(
                mission=mission,
                product=parts[0],
                tile_id=tile,
                capture_date=capture,
                download_url=(
                    "https://m2m.cr.usgs.gov/api/api/json/stable/download"
                    f"?entityId={entity}"
                ),
                cloud_cover_pct=item.get("cloudCover"),
                browse_url=browse,
                footprint_lonlat=footprint,
            )
        )
    return records


def parse_search_response(mission: str, body: bytes) -> list[SceneRecord]:
    """One SceneRecord per granule/feature in a mission's response body."""
    if mission == "modis":
        return _parse_modis_feed(body, mission)
    if mission == "sentinel2":
        return _parse_sentinel_feed(body, mission)
    if mission in ("landsat7", "landsat8"):
        return _parse_landsat_json(body, mission)
    raise InvalidQueryError(f"unknown mission {mission!r}")


def next_page(
    mission: str, descriptor: RequestDescriptor, body: bytes
) -> RequestDescriptor | None:
    """Descriptor for the next result page, or None on the last page."""
    if mission in ("modis", "sentinel2"):
        root = _parse_xml(body)
        for child in root:
            if _local(child.tag) == "link" and child.get("rel") == "next":
                return RequestDescriptor(
                    "GET", child.get("href") or "", auth=descriptor.auth
                )
        return None
    doc = json.loads(body)
    nxt = (doc.get("data") or {}).get("nextRecord")
    if not nxt:
        return None
    payload = json.loads(descriptor.body.decode("utf-8"))
    payload["startingNumber"] = int(nxt)
    return replace(
        descriptor,
        body=json.dumps(payload, sort_keys=True, separators=(",", ":")).encode("utf-8"),
    )


def _bbox_intersects(a, b) -> bool:
    return not (a[2] < b[0] or b[2] < a[0] or a[3] < b[1] or b[3] < a[1])


def filter_records(
    records: list[SceneRecord],
    roi: Roi | None = None,
    cloud: tuple[float, float] | None = None,
) -> list[SceneRecord]:
    """Keep records intersecting the ROI and inside the cloud range.

    Records without a cloud percentage pass when no range is given and are
    dropped when one is; records without a footprint always pass the ROI
    test (it cannot be evaluated).
    """
    out = []
    roi_env = roi.envelope_in(GEOGRAPHIC) if roi is not None else None
    for rec in records:
        if roi_env is not None and rec.footprint_lonlat is not None:
            if not _bbox_intersects(rec.footprint_lonlat, roi_env):
                continue
        if cloud is not None:
            if rec.cloud_cover_pct is None:
                continue
            lo, hi = cloud
            if not lo <= rec.cloud_cover_pct <= hi:
                continue
        out.append(rec)
    return out


# --- transports -------------------------------------------------------------

class MappingTransport:
    """Transport backed by an in-memory url -> (status, headers, bytes) map.

    Values may also be plain bytes (status 200) or a filesystem path.
    Records every request and the bytes served, for assertions.
    """

    def __init__(self, mapping: dict | None = None):
        self.mapping = dict(mapping or {})
        self.requests: list[str] = []

    def add(self, url: str, payload, status: int = 200, headers: dict | None = None):
        self.mapping[url] = (status, headers or {}, payload)

    def send(self, descriptor: RequestDescriptor):
        url = descriptor.full_url()
        self.requests.append(url)
        if url not in self.mapping:
            return 404, {}, b""
        value = self.mapping[url]
        if isinstance(value, (bytes, bytearray)):
            return 200, {}, bytes(value)
        if isinstance(value, str):
            with open(value, "rb") as fh:
                return 200, {}, fh.read()
        status, headers, payload = value
        if isinstance(payload, str):
            with open(payload, "rb") as fh:
                payload = fh.read()
        return status, dict(headers), bytes(payload)


class FixtureTransport:
    """Serves recorded fixtures: a search descriptor whose canonical dump
    matches `<dir>/<mission>/<name>.req` returns the paired `.resp`; plain
    URLs resolve through `<dir>/urls.json` (url -> relative file path)."""

    def __init__(self, fixture_dir: str):
        self.fixture_dir = fixture_dir
        self.url_map: dict[str, str] = {}
        url_file = os.path.join(fixture_dir, "urls.json")
        if os.path.exists(url_file):
            with open(url_file, encoding="utf-8") as fh:
                self.url_map = json.load(fh)

    def send(self, descriptor: RequestDescriptor):
        wanted = descriptor.canonical_bytes()
        for root, _dirs, files in os.walk(self.fixture_dir):
            for name in sorted(files):
                if not name.endswith(".req"):
                    continue
                req_path = os.path.join(root, name)
                with open(req_path, "rb") as fh:
                    if fh.read() != wanted:
                        continue
                with open(req_path[:-4] + ".resp", "rb") as fh:
                    return 200, {}, fh.read()
        rel = self.url_map.get(descriptor.full_url())
        if rel is not None:
            with open(os.path.join(self.fixture_dir, rel), "rb") as fh:
                return 200, {}, fh.read()
        return 404, {}, b""


class LiveTransport:
    """urllib-backed transport; only reached through the --live CLI flag."""

    def __init__(self, credentials: tuple[str, str] | None = None, timeout: float = 60.0):
        self.credentials = credentials
        self.timeout = timeout

    def send(self, descriptor: RequestDescriptor):
        req = urllib.request.Request(
            descriptor.full_url(),
            data=descriptor.body or None,
            method=descriptor.method,
        )
        if descriptor.body:
            req.add_header("Content-Type", "application/json")
        if self.credentials and descriptor.auth in ("basic", "transport"):
            import base64

            token = base64.b64encode(
                f"{self.credentials[0]}:{self.credentials[1]}".encode()
            ).decode("ascii")
            req.add_header("Authorization", f"Basic {token}")
        try:
            with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                return resp.status, dict(resp.headers), resp.read()
        except urllib.error.HTTPError as exc:
            return exc.code, dict(exc.headers or {}), exc.read()
        except urllib.error.URLError as exc:
            raise TransportError(f"request failed: {exc.reason}") from exc


def run_search(query: SceneQuery, transport) -> list[SceneRecord]:
    """build_query + transport + parse, following pagination."""
    descriptor = build_query(query)
    records: list[SceneRecord] = []
    while descriptor is not None:
        status, _headers, body = transport.send(descriptor)
        if status in (401, 403):
            raise MissingCredentialsError(f"archive refused the search ({status})")
        if status != 200:
            raise TransportError(f"search failed with HTTP {status}")
        records.extend(parse_search_response(query.mission, body))
        descriptor = next_page(query.mission, descriptor, body)
    return records


# --- downloads --------------------------------------------------------------

@dataclass
class RecordReport:
    record: SceneRecord
    status: str  # ok | skipped | auth-error | network-error | checksum-mismatch
    bytes_transferred: int = 0
    outputs: list[str] = field(default_factory=list)
    error: str | None = None


@dataclass
class PlanReport:
    records: list[RecordReport]

    @property
    def total_bytes(self) -> int:
        return sum(r.bytes_transferred for r in self.records)


def _archive_name(url: str) -> str:
    parsed = urllib.parse.urlparse(url)
    name = parsed.path.rsplit("/", 1)[-1]
    if "." not in name:
        # API-style endpoints ("/download?entityId=X") name every record the
        # same; the entity id keeps archives distinct
        entity = urllib.parse.parse_qs(parsed.query).get("entityId")
        if entity:
            return entity[0] + ".tar.gz"
    return name or "download.bin"


def _extract_members(archive_path: str, tif_dir: str, band_filter, overwrite: bool):
    written = []
    name = archive_path.lower()

    def want(member_name: str) -> bool:
        base = member_name.rsplit("/", 1)[-1]
        return not band_filter or any(tok in base for tok in band_filter)

    def target_for(member_name: str) -> str | None:
        base = member_name.rsplit("/", 1)[-1]
        if not base or not want(member_name):
            return None
        out = os.path.join(tif_dir, base)
        if os.path.exists(out) and not overwrite:
            return None
        return out

    if name.endswith(".zip"):
        with zipfile.ZipFile(archive_path) as zf:
            for info in zf.infolist():
                if info.is_dir():
                    continue
                out = target_for(info.filename)
                if out is None:
                    continue
                with zf.open(info) as src, open(out, "wb") as dst:
                    dst.write(src.read())
                written.append(out)
    else:
        with tarfile.open(archive_path, "r:*") as tf:
            for member in tf.getmembers():
                if not member.isfile():
                    continue
                out = target_for(member.name)
                if out is None:
                    continue
                src = tf.extractfile(member)
                with open(out, "wb") as dst:
                    dst.write(src.read())
                written.append(out)
    return written


def _fetch_record(rec: SceneRecord, plan: DownloadPlan, transport) -> RecordReport:
    report = RecordReport(record=rec, status="ok")
    raw_dir = os.path.join(plan.dest_dir, "raw")
    tif_dir = os.path.join(plan.dest_dir, "tif")
    os.makedirs(raw_dir, exist_ok=True)
    if plan.extract:
        os.makedirs(tif_dir, exist_ok=True)
    archive_path = os.path.join(raw_dir, _archive_name(rec.download_url))

    if os.path.exists(archive_path) and not plan.overwrite:
        report.status = "skipped"
    else:
        try:
            status, headers, body = transport.send(
                RequestDescriptor("GET", rec.download_url, auth="transport")
            )
        except TransportError as exc:
            report.status = "network-error"
            report.error = str(exc)
            return report
        if status in (401, 403):
            report.status = "auth-error"
            report.error = f"HTTP {status}"
            return report
        if status != 200:
            report.status = "network-error"
            report.error = f"HTTP {status}"
            return report
        expected = {k.lower(): v for k, v in headers.items()}.get("x-sha256")
        if expected and hashlib.sha256(body).hexdigest() != expected:
            report.status = "checksum-mismatch"
            report.error = "sha256 digest does not match the transport header"
            return report
        with open(archive_path, "wb") as fh:
            fh.write(body)
        report.bytes_transferred = len(body)
        report.outputs.append(archive_path)

    if plan.extract:
        try:
            extracted = _extract_members(
                archive_path, tif_dir, plan.band_filter, plan.overwrite
            )
        except (tarfile.TarError, zipfile.BadZipFile, OSError) as exc:
            report.status = "network-error"
            report.error = f"unpack failed: {exc}"
            return report
        report.outputs.extend(extracted)
        if plan.remove_archives:
            os.unlink(archive_path)
            if archive_path in report.outputs:
                report.outputs.remove(archive_path)
    return report


def execute_plan(plan: DownloadPlan, transport) -> PlanReport:
    """Fetch every record (bounded concurrency), unpack filtered bands.

    Failures are recorded per record and never abort the remaining ones;
    the report lists records in input order.
    """
    with ThreadPoolExecutor(max_workers=plan.workers) as pool:
        reports = list(pool.map(lambda r: _fetch_record(r, plan, transport), plan.records))
    return PlanReport(records=reports)


def fetch_browse(record: SceneRecord, transport, dest: str) -> str:
    """Save a record's browse image as-is for offline inspection."""
    if not record.browse_url:
        raise NoBrowseUrlError(f"record {record.tile_id} has no browse URL")
    status, _headers, body = transport.send(
        RequestDescriptor("GET", record.browse_url, auth="transport")
    )
    if status != 200:
        raise TransportError(f"browse fetch failed with HTTP {status}")
    os.makedirs(os.path.dirname(dest) or ".", exist_ok=True)
    with open(dest, "wb") as fh:
        fh.write(body)
    return dest


# --- ESPA level-2 ordering (request construction + status parsing only) -----

def build_espa_order(
    records: list[SceneRecord], request_name: str, products: tuple[str, ...] = ("sr",)
) -> RequestDescriptor:
    """Order descriptor asking ESPA to process level-1 scenes to level 2."""
    inputs = sorted(
        urllib.parse.parse_qs(urllib.parse.urlparse(r.download_url).query)
        .get("entityId", [r.tile_id])[0]
        for r in records
    )
    body = json.dumps(
        {
            "format": "gtiff",
            "note": request_name,
            "olitirs8_collection": {"inputs": inputs, "products": list(products)},
        },
        sort_keys=True,
        separators=(",", ":"),
    ).encode("utf-8")
    return RequestDescriptor("POST", ESPA_ORDER_URL, body=body, auth="basic")


def parse_espa_order_response(body: bytes) -> str:
    try:
        doc = json.loads(body)
    except json.JSONDecodeError as exc:
        raise ResponseParseError(f"malformed JSON: {exc}") from exc
    order_id = doc.get("orderid")
    if not order_id:
        raise ResponseSchemaError("order response lacks an orderid")
    return order_id


def poll_espa_order(order_id: str, transport, sleep, max_polls: int = 50) -> str:
    """Poll order status with exponential backoff until it completes.

    Backoff starts at 30 s, doubles, and caps at 15 min.  ``sleep`` is
    injected so tests never wait.
    """
    delay = ESPA_BACKOFF_BASE_S
    for _ in range(max_polls):
        status, _headers, body = transport.send(
            RequestDescriptor(
                "GET", f"{ESPA_STATUS_URL}/{order_id}", auth="basic"
            )
        )
        if status != 200:
            raise TransportError(f"order status failed with HTTP {status}")
        state = json.loads(body).get("status")
        if state in ("complete", "unavailable", "cancelled"):
            return state
        sleep(delay)
        delay = min(delay * ESPA_BACKOFF_FACTOR, ESPA_BACKOFF_CAP_S)
    raise TransportError(f"order {order_id} did not complete after {max_polls} polls")
