import datetime as dt
import hashlib
import json
import os

import pytest

from satstack import fixtures as fx
from satstack.catalog import (
    DownloadPlan,
    FixtureTransport,
    MappingTransport,
    RequestDescriptor,
    SceneQuery,
    SceneRecord,
    build_espa_order,
    build_query,
    execute_plan,
    fetch_browse,
    filter_records,
    next_page,
    parse_espa_order_response,
    parse_search_response,
    poll_espa_order,
    run_search,
)
from satstack.errors import (
    InvalidQueryError,
    MissingCredentialsError,
    NoBrowseUrlError,
    ResponseParseError,
    ResponseSchemaError,
    TransportError,
)
from satstack.geoproj import GEOGRAPHIC
from satstack.grid import Roi

NAVARRE = Roi.from_bbox(-2.5, 41.9, -0.72, 43.31, GEOGRAPHIC)
ITOIZ = Roi.from_bbox(-1.40, 42.79, -1.30, 42.88, GEOGRAPHIC)


def modis_query():
    return SceneQuery(
        mission="modis", product="MOD09GA",
        date_from=dt.date(2018, 8, 2), date_to=dt.date(2018, 8, 9), roi=NAVARRE,
    )


def sentinel_query(**kw):
    base = dict(
        mission="sentinel2", product="S2MSI2A",
        date_from=dt.date(2018, 7, 1), date_to=dt.date(2019, 5, 1), roi=ITOIZ,
        cloud_cover=(0, 80), credentials=("user", "pass"),
    )
    base.update(kw)
    return SceneQuery(**base)


def landsat_query(**kw):
    base = dict(
        mission="landsat8", product="LANDSAT_8_C1",
        date_from=dt.date(2018, 7, 1), date_to=dt.date(2019, 5, 1), roi=ITOIZ,
        cloud_cover=(0, 80), credentials=("user", "pass"),
    )
    base.update(kw)
    return SceneQuery(**base)


# --- build_query ---------------------------------------------------------------

def test_build_query_matches_golden_fixtures(fixture_dir):
    cases = [
        (modis_query(), "modis/cmr_mod09ga.req"),
        (sentinel_query(), "sentinel2/scihub_s2msi2a.req"),
        (landsat_query(), "landsat8/m2m_landsat8.req"),
    ]
    for query, rel in cases:
        with open(os.path.join(fixture_dir, rel), "rb") as fh:
            golden = fh.read()
        assert build_query(query).canonical_bytes() == golden, rel


def test_build_query_is_pure_and_credential_free():
    a = build_query(sentinel_query(credentials=("alice", "secret1")))
    b = build_query(sentinel_query(credentials=("bob", "secret2")))
    assert a.canonical_bytes() == b.canonical_bytes()
    assert b"secret1" not in a.canonical_bytes()
    assert a.auth == "basic"


def test_build_query_cloud_bounds_present():
    desc = build_query(sentinel_query())
    text = desc.canonical_bytes().decode()
    assert "cloudcoverpercentage:[0 TO 80]" in text
    ls = build_query(landsat_query()).canonical_bytes().decode()
    assert '"max":80' in ls and '"min":0' in ls


def test_build_query_requires_credentials():
    with pytest.raises(MissingCredentialsError):
        build_query(sentinel_query(credentials=None))
    with pytest.raises(MissingCredentialsError):
        build_query(landsat_query(credentials=None))
    build_query(modis_query())  # MODIS search needs none


def test_query_validation():
    with pytest.raises(InvalidQueryError):
        SceneQuery(mission="aster", product="X", date_from=dt.date(2018, 1, 1),
                   date_to=dt.date(2018, 1, 2), roi=NAVARRE)
    with pytest.raises(InvalidQueryError):
        SceneQuery(mission="modis", product="X", date_from=dt.date(2018, 1, 3),
                   date_to=dt.date(2018, 1, 2), roi=NAVARRE)
    with pytest.raises(InvalidQueryError):
        SceneQuery(mission="modis", product="X", date_from=dt.date(2018, 1, 1),
                   date_to=dt.date(2018, 1, 2), roi=NAVARRE, cloud_cover=(50, 200))


# --- parse_search_response -------------------------------------------------------

def test_parse_modis_fixture(fixture_dir):
    with open(os.path.join(fixture_dir, "modis/cmr_mod09ga.resp"), "rb") as fh:
        records = parse_search_response("modis", fh.read())
    assert len(records) == 8
    assert {r.tile_id for r in records} == {"h17v04"}
    assert records[0].capture_date == dt.date(2018, 8, 2)
    assert records[-1].capture_date == dt.date(2018, 8, 9)
    assert all(r.download_url.endswith(".hdf") for r in records)
    assert all(r.browse_url for r in records)
    assert records[0].file_size_bytes == int(84.25 * 1024 * 1024)


def test_parse_sentinel_fixture(fixture_dir):
    with open(os.path.join(fixture_dir, "sentinel2/scihub_feed_p1.resp"), "rb") as fh:
        records = parse_search_response("sentinel2", fh.read())
    assert len(records) == 8
    assert [r.tile_id for r in records] == ["30TXN", "30TWN"] * 4
    assert all(r.product == "S2MSI2A" for r in records)
    assert all(r.cloud_cover_pct is not None for r in records)
    assert all(0 <= r.cloud_cover_pct <= 80 for r in records)
    assert records[0].footprint_lonlat == (-2.5, 41.9, -0.7, 43.4)


def test_parse_landsat_fixture(fixture_dir):
    with open(os.path.join(fixture_dir, "landsat8/m2m_landsat8.resp"), "rb") as fh:
        records = parse_search_response("landsat8", fh.read())
    assert len(records) == 5
    assert {r.tile_id for r in records} == {"200/030"}
    assert records[0].capture_date == dt.date(2018, 7, 12)
    assert all("entityId=" in r.download_url for r in records)


def test_parse_empty_feed():
    empty = b'<?xml version="1.0"?><feed xmlns="http://www.w3.org/2005/Atom"></feed>'
    assert parse_search_response("modis", empty) == []
    assert parse_search_response("sentinel2", empty) == []


def test_parse_truncated_xml():
    with pytest.raises(ResponseParseError):
        parse_search_response("modis", b"<feed><entry><title>x</title>")


def test_parse_bad_json():
    with pytest.raises(ResponseParseError):
        parse_search_response("landsat8", b"{not json")
    with pytest.raises(ResponseSchemaError):
        parse_search_response("landsat8", b"[1, 2]")


def test_parse_schema_errors():
    missing_id = (
        b'<?xml version="1.0"?><feed xmlns="http://www.w3.org/2005/Atom">'
        b"<entry><title>t</title></entry></feed>"
    )
    with pytest.raises(ResponseSchemaError):
        parse_search_response("modis", missing_id)


def test_roundtrip_record_serialization(fixture_dir):
    with open(os.path.join(fixture_dir, "modis/cmr_mod09ga.resp"), "rb") as fh:
        records = parse_search_response("modis", fh.read())
    back = [SceneRecord.from_dict(r.to_dict()) for r in records]
    assert back == records


# --- next_page -------------------------------------------------------------------

def test_next_page_sentinel_feed():
    desc = build_query(sentinel_query())
    body = fx.gen_scihub_response(page=1, total_pages=2)
    nxt = next_page("sentinel2", desc, body)
    assert nxt is not None
    assert "start=80" in nxt.full_url()
    last = fx.gen_scihub_response(page=2, total_pages=2)
    assert next_page("sentinel2", nxt, last) is None


def test_next_page_landsat_json():
    desc = build_query(landsat_query())
    body = json.dumps({"data": {"nextRecord": 101}}).encode()
    nxt = next_page("landsat8", desc, body)
    assert nxt is not None
    assert b'"startingNumber":101' in nxt.body
    assert next_page("landsat8", desc, json.dumps({"data": {}}).encode()) is None


def test_run_search_follows_pages():
    desc = build_query(sentinel_query())
    page1 = fx.gen_scihub_response(page=1, total_pages=2)
    page2 = fx.gen_scihub_response(page=2, total_pages=2)
    transport = MappingTransport({desc.full_url(): page1})
    nxt = next_page("sentinel2", desc, page1)
    transport.add(nxt.full_url(), page2)
    records = run_search(sentinel_query(), transport)
    assert len(records) == 16


# --- filter_records ----------------------------------------------------------------

def _rec(cloud=None, footprint=None):
    return SceneRecord(
        mission="sentinel2", product="S2MSI2A", tile_id="30TXN",
        capture_date=dt.date(2018, 8, 2), download_url="https://x/y.zip",
        cloud_cover_pct=cloud, footprint_lonlat=footprint,
    )


def test_filter_disjoint_footprint_dropped():
    far = _rec(footprint=(10.0, 10.0, 11.0, 11.0))
    near = _rec(footprint=(-2.0, 42.0, -1.0, 43.0))
    assert filter_records([far, near], roi=ITOIZ) == [near]


def test_filter_cloud_range():
    assert filter_records([_rec(cloud=85.0)], cloud=(0, 80)) == []
    assert filter_records([_rec(cloud=42.0)], cloud=(0, 80)) != []
    # records without cloud info drop only when a range is requested
    assert filter_records([_rec()], cloud=(0, 80)) == []
    assert filter_records([_rec()]) == [_rec()]


def test_filter_is_subset_and_monotone():
    records = [_rec(cloud=float(c)) for c in range(0, 100, 7)]
    narrow = filter_records(records, cloud=(0, 30))
    wide = filter_records(records, cloud=(0, 60))
    assert set(r.cloud_cover_pct for r in narrow) <= set(
        r.cloud_cover_pct for r in wide
    )
    assert all(r in records for r in wide)


# --- execute_plan -------------------------------------------------------------------

def _archive_record(url="https://archive.test/MOD09GA.A2018214.h17v04.tar.gz"):
    return SceneRecord(
        mission="modis", product="MOD09GA", tile_id="h17v04",
        capture_date=dt.date(2018, 8, 2), download_url=url,
        browse_url="https://archive.test/browse.jpg",
    )


def test_execute_plan_band_filter_extracts_three(tmp_path):
    archive = fx.gen_band_archive()  # members B01, B02, B03, state
    rec = _archive_record()
    transport = MappingTransport({rec.download_url: archive})
    plan = DownloadPlan(
        records=[rec], dest_dir=str(tmp_path), extract=True,
        band_filter=("B01", "B02", "state"),
    )
    report = execute_plan(plan, transport)
    assert report.records[0].status == "ok"
    tif_dir = tmp_path / "tif"
    extracted = sorted(os.listdir(tif_dir))
    assert len(extracted) == 3
    assert not any("B03" in name for name in extracted)
    assert report.total_bytes == len(archive)


def test_execute_plan_remove_archives(tmp_path):
    rec = _archive_record()
    transport = MappingTransport({rec.download_url: fx.gen_band_archive()})
    plan = DownloadPlan(records=[rec], dest_dir=str(tmp_path), extract=True,
                        band_filter=("B01",), remove_archives=True)
    execute_plan(plan, transport)
    assert not os.listdir(tmp_path / "raw")
    assert len(os.listdir(tmp_path / "tif")) == 1


def test_execute_plan_auth_error_does_not_abort(tmp_path):
    ok = _archive_record()
    denied = _archive_record(url="https://archive.test/denied.tar.gz")
    transport = MappingTransport({ok.download_url: fx.gen_band_archive()})
    transport.add(denied.download_url, b"", status=401)
    plan = DownloadPlan(records=[denied, ok], dest_dir=str(tmp_path), extract=True,
                        band_filter=("B01",))
    report = execute_plan(plan, transport)
    assert report.records[0].status == "auth-error"
    assert report.records[1].status == "ok"
    assert report.records[0].record is denied  # report keeps input order


def test_execute_plan_skip_existing_transfers_zero_bytes(tmp_path):
    rec = _archive_record()
    transport = MappingTransport({rec.download_url: fx.gen_band_archive()})
    plan = DownloadPlan(records=[rec], dest_dir=str(tmp_path), extract=True,
                        band_filter=("B01", "B02", "state"))
    first = execute_plan(plan, transport)
    assert first.total_bytes > 0
    second = execute_plan(plan, transport)
    assert second.total_bytes == 0
    assert second.records[0].status == "skipped"


def test_execute_plan_checksum_mismatch(tmp_path):
    rec = _archive_record()
    payload = fx.gen_band_archive()
    transport = MappingTransport()
    transport.add(rec.download_url, payload,
                  headers={"x-sha256": "0" * 64})
    plan = DownloadPlan(records=[rec], dest_dir=str(tmp_path))
    report = execute_plan(plan, transport)
    assert report.records[0].status == "checksum-mismatch"
    assert not os.path.exists(tmp_path / "raw" / "MOD09GA.A2018214.h17v04.tar.gz")
    good = MappingTransport()
    good.add(rec.download_url, payload,
             headers={"x-sha256": hashlib.sha256(payload).hexdigest()})
    assert execute_plan(plan, good).records[0].status == "ok"


def test_execute_plan_zip_archive(tmp_path):
    import io
    import zipfile

    buf = io.BytesIO()
    with zipfile.ZipFile(buf, "w") as zf:
        zf.writestr("S2A/GRANULE/IMG_DATA/T30TXN_B03_10m.jp2", b"g" * 10)
        zf.writestr("S2A/GRANULE/IMG_DATA/T30TXN_B08_10m.jp2", b"n" * 10)
        zf.writestr("S2A/GRANULE/QI_DATA/CLDPRB_20m.jp2", b"q" * 10)
    rec = _archive_record(url="https://archive.test/S2A_T30TXN.zip")
    transport = MappingTransport({rec.download_url: buf.getvalue()})
    plan = DownloadPlan(records=[rec], dest_dir=str(tmp_path), extract=True,
                        band_filter=("B03_10m", "CLDPRB"))
    report = execute_plan(plan, transport)
    assert report.records[0].status == "ok"
    assert sorted(os.listdir(tmp_path / "tif")) == [
        "CLDPRB_20m.jp2", "T30TXN_B03_10m.jp2",
    ]


def test_execute_plan_api_style_urls_get_distinct_archives(tmp_path):
    recs = [
        _archive_record(url="https://m2m.test/download?entityId=LC8A"),
        _archive_record(url="https://m2m.test/download?entityId=LC8B"),
    ]
    transport = MappingTransport(
        {r.download_url: fx.gen_band_archive() for r in recs}
    )
    plan = DownloadPlan(records=recs, dest_dir=str(tmp_path))
    report = execute_plan(plan, transport)
    assert all(r.status == "ok" for r in report.records)
    assert sorted(os.listdir(tmp_path / "raw")) == ["LC8A.tar.gz", "LC8B.tar.gz"]


def test_plan_validation(tmp_path):
    with pytest.raises(InvalidQueryError):
        DownloadPlan(records=[], dest_dir=str(tmp_path), band_filter=("",))
    with pytest.raises(InvalidQueryError):
        DownloadPlan(records=[], dest_dir=str(tmp_path), workers=0)


# --- fetch_browse --------------------------------------------------------------------

def test_fetch_browse(tmp_path):
    rec = _archive_record()
    transport = MappingTransport({rec.browse_url: fx.gen_browse_bytes()})
    dest = str(tmp_path / "browse" / "h17v04.jpg")
    path = fetch_browse(rec, transport, dest)
    with open(path, "rb") as fh:
        assert fh.read() == fx.gen_browse_bytes()


def test_fetch_browse_errors(tmp_path):
    rec = _archive_record()
    rec.browse_url = None
    with pytest.raises(NoBrowseUrlError):
        fetch_browse(rec, MappingTransport(), str(tmp_path / "x.jpg"))
    rec2 = _archive_record()
    with pytest.raises(TransportError):
        fetch_browse(rec2, MappingTransport(), str(tmp_path / "x.jpg"))  # 404


def test_fixture_transport_serves_request_and_urls(fixture_dir):
    transport = FixtureTransport(fixture_dir)
    status, _headers, body = transport.send(build_query(modis_query()))
    assert status == 200
    assert parse_search_response("modis", body)
    status, _, _ = transport.send(
        RequestDescriptor("GET", "https://nowhere.test/missing")
    )
    assert status == 404


# --- ESPA ordering --------------------------------------------------------------------

def test_espa_order_descriptor_and_response(fixture_dir):
    with open(os.path.join(fixture_dir, "landsat8/m2m_landsat8.resp"), "rb") as fh:
        records = parse_search_response("landsat8", fh.read())
    desc = build_espa_order(records, "itoiz-levels")
    assert desc.method == "POST"
    payload = json.loads(desc.body)
    assert payload["note"] == "itoiz-levels"
    assert payload["format"] == "gtiff"
    assert len(payload["olitirs8_collection"]["inputs"]) == 5
    assert desc.canonical_bytes() == build_espa_order(records, "itoiz-levels").canonical_bytes()

    assert parse_espa_order_response(b'{"orderid": "abc-123", "status": "ordered"}') == "abc-123"
    with pytest.raises(ResponseSchemaError):
        parse_espa_order_response(b"{}")


def test_espa_poll_backoff_sequence():
    calls = {"n": 0}

    class StatusTransport:
        def send(self, descriptor):
            calls["n"] += 1
            state = "complete" if calls["n"] >= 7 else "processing"
            return 200, {}, json.dumps({"status": state}).encode()

    delays = []
    state = poll_espa_order("abc", StatusTransport(), sleep=delays.append)
    assert state == "complete"
    # base 30 s, doubling, capped at 900 s
    assert delays == [30.0, 60.0, 120.0, 240.0, 480.0, 900.0]
