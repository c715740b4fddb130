"""satstack command line: search, download, mosaic, index, cloudmask,
composite, ima, waterlevel, render, evaluate, fixtures gen.

Exit codes: 0 success, 1 operation error, 2 usage error.  Every subcommand
prints its output location on completion.  The fixture transport is the
default for network-facing commands; --live opts into real requests.
"""

from __future__ import annotations

import argparse
import glob
import json
import os
import sys

from satstack import catalog, cloudmask, fixtures, hydro, ima, render, spectral
from satstack.errors import SatstackError
from satstack.geoproj import GEOGRAPHIC, CrsSpec
from satstack.geotiff import write_geotiff
from satstack.grid import (
    GridStack,
    Roi,
    clamp,
    composite,
    format_layer_date,
    mosaic,
    parse_layer_date,
    stack_from_files,
)

CONFIG_NAME = "satstack.conf"


def _load_config(workspace: str | None) -> dict[str, str]:
    conf: dict[str, str] = {}
    if not workspace:
        return conf
    path = os.path.join(workspace, CONFIG_NAME)
    if not os.path.exists(path):
        return conf
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, _, value = line.partition("=")
            conf[key.strip()] = value.strip()
    return conf


def _credentials(mission: str, conf: dict[str, str]) -> tuple[str, str] | None:
    if mission == "sentinel2":
        user = conf.get("scihub_user") or os.environ.get(catalog.ENV_SCIHUB_USER)
        pw = conf.get("scihub_pass") or os.environ.get(catalog.ENV_SCIHUB_PASS)
    else:
        user = conf.get("earthdata_user") or os.environ.get(catalog.ENV_EARTHDATA_USER)
        pw = conf.get("earthdata_pass") or os.environ.get(catalog.ENV_EARTHDATA_PASS)
    if user and pw:
        return (user, pw)
    return None


def _parse_crs(text: str) -> CrsSpec:
    text = text.strip()
    if text.lower() in ("sinusoidal", "modis"):
        return CrsSpec("sinusoidal")
    if text.upper().startswith("EPSG:"):
        return CrsSpec.from_epsg(int(text.split(":", 1)[1]))
    return CrsSpec.from_epsg(int(text))


def _geojson_rings(doc) -> list[list[tuple[float, float]]]:
    kind = doc.get("type")
    if kind == "FeatureCollection":
        return _geojson_rings(doc["features"][0])
    if kind == "Feature":
        return _geojson_rings(doc["geometry"])
    if kind == "Polygon":
        return [[(float(x), float(y)) for x, y in ring] for ring in doc["coordinates"]]
    if kind == "MultiPolygon":
        return [[(float(x), float(y)) for x, y in ring] for ring in doc["coordinates"][0]]
    raise SatstackError(f"unsupported GeoJSON type {kind!r}")


def _roi_from_args(args) -> Roi | None:
    if getattr(args, "roi", None):
        with open(args.roi, encoding="utf-8") as fh:
            rings = _geojson_rings(json.load(fh))
        return Roi.from_polygon(rings, GEOGRAPHIC)
    if getattr(args, "bbox", None):
        vals = [float(v) for v in args.bbox.split(",")]
        if len(vals) != 4:
            raise SatstackError("--bbox needs xmin,ymin,xmax,ymax")
        crs = _parse_crs(getattr(args, "crs", None) or "EPSG:4326")
        return Roi.from_bbox(*vals, crs)
    return None


def _pair(text: str) -> tuple[float, float]:
    parts = [float(v) for v in text.split(",")]
    if len(parts) != 2:
        raise argparse.ArgumentTypeError("expected two comma-separated numbers")
    return (parts[0], parts[1])


def _transport(args, conf, mission=None):
    if getattr(args, "live", False):
        creds = _credentials(mission or "modis", conf)
        return catalog.LiveTransport(credentials=creds)
    fixture_dir = getattr(args, "fixtures", None) or conf.get("fixtures")
    if not fixture_dir:
        raise SatstackError(
            "no fixture directory configured; pass --fixtures DIR or --live"
        )
    return catalog.FixtureTransport(fixture_dir)


def _stack_from_dir(path: str) -> GridStack:
    files = sorted(glob.glob(os.path.join(path, "*.tif")))
    if not files:
        raise SatstackError(f"no .tif files under {path}")
    return stack_from_files(files)


# --- subcommands -------------------------------------------------------------

def _cmd_search(args) -> int:
    conf = _load_config(args.workspace)
    roi = _roi_from_args(args)
    if roi is None:
        raise SatstackError("search needs --roi or --bbox")
    query = catalog.SceneQuery(
        mission=args.mission,
        product=args.product,
        date_from=args.date_from,
        date_to=args.date_to,
        roi=roi,
        cloud_cover=tuple(args.cloud) if args.cloud else None,
        credentials=_credentials(args.mission, conf),
    )
    records = catalog.run_search(query, _transport(args, conf, args.mission))
    records = catalog.filter_records(records, roi=roi, cloud=query.cloud_cover)
    if args.save:
        with open(args.save, "w", encoding="utf-8") as fh:
            json.dump([r.to_dict() for r in records], fh, indent=1, sort_keys=True)
    if args.json:
        print(json.dumps([r.to_dict() for r in records], indent=1, sort_keys=True))
    else:
        print(f"{'tile':<12} {'date':<12} {'cloud%':>7}  url")
        for r in records:
            cloud = "-" if r.cloud_cover_pct is None else f"{r.cloud_cover_pct:.1f}"
            print(f"{r.tile_id:<12} {r.capture_date.isoformat():<12} {cloud:>7}  {r.download_url}")
        print(f"{len(records)} scene(s) found")
    if args.save:
        print(f"records written to {args.save}")
    return 0


def _cmd_download(args) -> int:
    conf = _load_config(args.workspace)
    with open(args.records, encoding="utf-8") as fh:
        records = [catalog.SceneRecord.from_dict(d) for d in json.load(fh)]
    plan = catalog.DownloadPlan(
        records=records,
        dest_dir=args.dest,
        extract=args.extract,
        band_filter=tuple(args.bands.split(",")) if args.bands else (),
        remove_archives=args.rm_archives,
        overwrite=args.overwrite,
        workers=args.workers,
    )
    report = catalog.execute_plan(plan, _transport(args, conf))
    failed = 0
    for entry in report.records:
        line = f"{entry.record.tile_id} {entry.record.capture_date}: {entry.status}"
        if entry.error:
            line += f" ({entry.error})"
            failed += 1
        print(line)
    print(f"{report.total_bytes} bytes transferred into {args.dest}")
    return 1 if failed else 0


def _cmd_mosaic(args) -> int:
    roi = _roi_from_args(args)
    files = sorted(glob.glob(os.path.join(args.in_dir, "*.tif")))
    if not files:
        raise SatstackError(f"no .tif files under {args.in_dir}")
    from satstack.geotiff import read_geotiff

    by_date: dict[str, list] = {}
    for path in files:
        stem = os.path.splitext(os.path.basename(path))[0]
        token = format_layer_date(parse_layer_date(stem))
        by_date.setdefault(token, []).append(read_geotiff(path))
    os.makedirs(args.out_dir, exist_ok=True)
    for token in sorted(by_date):
        merged = mosaic(by_date[token], roi=roi)
        write_geotiff(merged, os.path.join(args.out_dir, f"{args.name}_{token}.tif"))
    print(f"{len(by_date)} mosaic(s) written to {args.out_dir}")
    return 0


def _cmd_index(args) -> int:
    bmap = spectral.MissionBandMap.from_file(args.bandmap) if args.bandmap else None
    dates = None
    if args.dates:
        import datetime as dt

        dates = [dt.date.fromisoformat(d) for d in args.dates.split(",")]
    report = spectral.folder_to_index(
        args.in_dir, args.index, args.mission, bmap=bmap, dates=dates,
        out_dir=args.out_dir,
    )
    for token, why in report.skipped:
        print(f"skipped {token}: {why}", file=sys.stderr)
    print(f"{len(report.written)} index file(s) written to {args.out_dir}")
    return 0


def _cmd_cloudmask(args) -> int:
    from satstack.geotiff import read_geotiff

    rules = cloudmask.parse_rule_overrides(args.rules) if args.rules else None
    files = sorted(glob.glob(os.path.join(args.in_dir, "*.tif")))
    if not files:
        raise SatstackError(f"no .tif files under {args.in_dir}")
    os.makedirs(args.out_dir, exist_ok=True)
    written = 0
    for path in files:
        stem = os.path.splitext(os.path.basename(path))[0]
        token = format_layer_date(parse_layer_date(stem))
        rule = (rules or cloudmask.DEFAULT_QA_RULES).get(args.mission)
        mask = cloudmask.decode_qa(args.mission, read_geotiff(path), rule)
        write_geotiff(mask, os.path.join(args.out_dir, f"CLDMASK_{token}.tif"))
        written += 1
    print(f"{written} mask(s) written to {args.out_dir}")
    return 0


def _cmd_composite(args) -> int:
    stack = _stack_from_dir(args.in_dir)
    result = composite(stack, args.window, fun=args.fun)
    os.makedirs(args.out_dir, exist_ok=True)
    for layer, _date, label in result:
        write_geotiff(layer, os.path.join(args.out_dir, f"{label}.tif"))
    print(f"{len(result)} composite(s) written to {args.out_dir}")
    return 0


def _cmd_ima(args) -> int:
    stack = _stack_from_dir(args.in_dir)
    params = ima.ImaParams(
        n_days=args.ndays,
        n_years=args.nyears,
        a_filter=tuple(args.afilter),
        fact=args.fact,
        fun=args.fun,
        only_na=args.only_na,
        targets=[int(t) for t in args.targets.split(",")] if args.targets else None,
        include_target=args.include_target,
    )
    filled, report = ima.ima_fill(stack, params)
    os.makedirs(args.out_dir, exist_ok=True)
    for layer, _date, label in filled:
        write_geotiff(layer, os.path.join(args.out_dir, f"{label}.tif"))
    for entry in report.targets:
        if entry.skipped:
            print(f"layer {entry.index} ({entry.date}): skipped, {entry.skipped}",
                  file=sys.stderr)
    print(f"{len(filled)} layer(s) written to {args.out_dir}")
    return 0


def _cmd_waterlevel(args) -> int:
    from satstack.geotiff import read_geotiff

    stack = _stack_from_dir(args.in_dir)
    dem = hydro.Dem(read_geotiff(args.dem))
    observations = hydro.read_observations(args.obs) if args.obs else None
    results = hydro.estimate_levels(
        stack, dem, threshold=args.threshold, observations=observations
    )
    hydro.write_results(args.out, results)
    if args.json:
        print(json.dumps(
            [
                {
                    "sat": r.sat,
                    "date": r.date.isoformat(),
                    "est": r.est,
                    "obs": r.obs,
                }
                for r in results
            ],
            indent=1,
        ))
    print(f"{len(results)} level estimate(s) written to {args.out}")
    return 0


def _cmd_evaluate(args) -> int:
    results = hydro.read_results(args.results)
    metrics = hydro.evaluate(results)
    if args.json:
        print(json.dumps(
            {
                "mae": metrics.mae,
                "mae_per_sat": metrics.mae_per_sat,
                "pearson_r": metrics.pearson_r,
                "n_pairs": metrics.n_pairs,
            },
            indent=1,
            sort_keys=True,
        ))
    else:
        print(f"MAE: {metrics.mae:.4f} m over {metrics.n_pairs} pair(s)")
        for sat, mae in metrics.mae_per_sat.items():
            print(f"MAE[{sat}]: {mae:.4f} m")
        print(f"Pearson r: {metrics.pearson_r:.4f}")
    return 0


def _cmd_render(args) -> int:
    stack = _stack_from_dir(args.in_dir)
    if args.clamp:
        lo, hi = args.clamp
        stack = GridStack(
            [clamp(layer, lo, hi) for layer in stack.layers],
            list(stack.dates),
            list(stack.labels),
        )
    zlim = args.zlim or args.clamp or (0.0, 1.0)
    render.render_panels(stack, zlim, args.out)
    print(f"panel figure written to {args.out}")
    return 0


def _cmd_fixtures_gen(args) -> int:
    dest = args.dest
    os.makedirs(dest, exist_ok=True)
    written = fixtures_gen(dest)
    for path in written:
        print(path)
    print(f"{len(written)} fixture file(s) written to {dest}")
    return 0


def fixtures_gen(dest: str) -> list[str]:
    """Write the recorded-shape catalog fixtures and synthetic scenes."""
    import datetime as dt

    written = []

    def emit(rel: str, payload: bytes) -> str:
        path = os.path.join(dest, rel)
        os.makedirs(os.path.dirname(path), exist_ok=True)
        with open(path, "wb") as fh:
            fh.write(payload)
        written.append(path)
        return path

    navarre = Roi.from_bbox(-2.5, 41.9, -0.72, 43.31, GEOGRAPHIC)
    itoiz = Roi.from_bbox(-1.40, 42.79, -1.30, 42.88, GEOGRAPHIC)

    modis_q = catalog.SceneQuery(
        mission="modis", product="MOD09GA",
        date_from=dt.date(2018, 8, 2), date_to=dt.date(2018, 8, 9), roi=navarre,
    )
    emit("modis/cmr_mod09ga.req", catalog.build_query(modis_q).canonical_bytes())
    emit("modis/cmr_mod09ga.resp", fixtures.gen_cmr_response())

    sen_q = catalog.SceneQuery(
        mission="sentinel2", product="S2MSI2A",
        date_from=dt.date(2018, 7, 1), date_to=dt.date(2019, 5, 1), roi=itoiz,
        cloud_cover=(0, 80), credentials=("user", "pass"),
    )
    emit("sentinel2/scihub_s2msi2a.req", catalog.build_query(sen_q).canonical_bytes())
    emit("sentinel2/scihub_feed_p1.resp", fixtures.gen_scihub_response())

    ls_q = catalog.SceneQuery(
        mission="landsat8", product="LANDSAT_8_C1",
        date_from=dt.date(2018, 7, 1), date_to=dt.date(2019, 5, 1), roi=itoiz,
        cloud_cover=(0, 80), credentials=("user", "pass"),
    )
    emit("landsat8/m2m_landsat8.req", catalog.build_query(ls_q).canonical_bytes())
    emit("landsat8/m2m_landsat8.resp", fixtures.gen_m2m_response())

    emit("archives/modis_bands.tar.gz", fixtures.gen_band_archive())
    emit("archives/browse.jpg", fixtures.gen_browse_bytes())

    records = catalog.parse_search_response(
        "modis", fixtures.gen_cmr_response()
    )
    url_map = {rec.download_url: "archives/modis_bands.tar.gz" for rec in records}
    url_map.update({rec.browse_url: "archives/browse.jpg" for rec in records})
    emit("urls.json", json.dumps(url_map, indent=1, sort_keys=True).encode())

    dem, ndwi, _level = fixtures.gen_reservoir(fixtures.SyntheticReservoir())
    reservoir_dir = os.path.join(dest, "reservoir")
    os.makedirs(reservoir_dir, exist_ok=True)
    dem_path = os.path.join(reservoir_dir, "dem_itoiz_synthetic.tif")
    ndwi_path = os.path.join(reservoir_dir, "NDWI_2018214_LS8.tif")
    write_geotiff(dem.grid, dem_path)
    write_geotiff(ndwi, ndwi_path)
    written.extend([dem_path, ndwi_path])

    golden = os.path.join(dest, "golden_panels.png")
    render.render_panels(fixtures.gen_ndvi_demo_stack(), (0.0, 1.0), golden)
    written.append(golden)
    return written


def _build_parser() -> argparse.ArgumentParser:
    import datetime as dt

    parser = argparse.ArgumentParser(
        prog="satstack",
        description="multi-mission satellite image time-series toolkit",
    )
    parser.add_argument("--workspace", help="workspace directory holding satstack.conf")
    sub = parser.add_subparsers(dest="command")

    def add_roi(p):
        p.add_argument("--roi", help="GeoJSON polygon file (WGS84)")
        p.add_argument("--bbox", help="xmin,ymin,xmax,ymax")
        p.add_argument("--crs", help="CRS of --bbox (default EPSG:4326)")

    def add_transport(p):
        p.add_argument("--fixtures", help="fixture directory (default transport)")
        p.add_argument("--live", action="store_true", help="use real network access")

    p = sub.add_parser("search", help="search an archive for scenes")
    p.add_argument("--mission", required=True, choices=catalog.MISSIONS)
    p.add_argument("--product", required=True)
    p.add_argument("--from", dest="date_from", required=True, type=dt.date.fromisoformat)
    p.add_argument("--to", dest="date_to", required=True, type=dt.date.fromisoformat)
    add_roi(p)
    p.add_argument("--cloud", type=_pair, help="cloud cover bounds lo,hi in percent")
    add_transport(p)
    p.add_argument("--json", action="store_true")
    p.add_argument("--save", help="write records JSON for `download`")
    p.set_defaults(func=_cmd_search)

    p = sub.add_parser("download", help="execute a download plan")
    p.add_argument("--records", required=True, help="records JSON from search --save")
    p.add_argument("--dest", required=True)
    p.add_argument("--bands", help="band filter tokens, comma separated")
    p.add_argument("--extract", action="store_true")
    p.add_argument("--rm-archives", action="store_true", dest="rm_archives")
    p.add_argument("--overwrite", action="store_true")
    p.add_argument("--workers", type=int, default=3)
    add_transport(p)
    p.set_defaults(func=_cmd_download)

    p = sub.add_parser("mosaic", help="merge per-date tiles and crop to an ROI")
    p.add_argument("--in", dest="in_dir", required=True)
    p.add_argument("--out", dest="out_dir", required=True)
    p.add_argument("--name", default="MOSAIC")
    add_roi(p)
    p.set_defaults(func=_cmd_mosaic)

    p = sub.add_parser("index", help="compute a spectral index over a band folder")
    p.add_argument("--in", dest="in_dir", required=True)
    p.add_argument("--index", required=True, choices=sorted(spectral.INDEX_ROLES))
    p.add_argument("--mission", required=True, choices=spectral.MISSIONS)
    p.add_argument("--out", dest="out_dir", required=True)
    p.add_argument("--dates", help="ISO dates, comma separated")
    p.add_argument("--bandmap", help="band map override file")
    p.set_defaults(func=_cmd_index)

    p = sub.add_parser("cloudmask", help="decode QA bands into clear-sky masks")
    p.add_argument("--in", dest="in_dir", required=True)
    p.add_argument("--mission", required=True)
    p.add_argument("--out", dest="out_dir", required=True)
    p.add_argument("--rules", help="QA rule override file")
    p.set_defaults(func=_cmd_cloudmask)

    p = sub.add_parser("composite", help="reduce date windows to single layers")
    p.add_argument("--in", dest="in_dir", required=True)
    p.add_argument("--window", type=int, required=True, help="window length in days")
    p.add_argument("--fun", default="median", choices=("mean", "median", "max"))
    p.add_argument("--out", dest="out_dir", required=True)
    p.set_defaults(func=_cmd_composite)

    p = sub.add_parser("ima", help="gap-fill/smooth a stack by mean-anomaly interpolation")
    p.add_argument("--in", dest="in_dir", required=True)
    p.add_argument("--ndays", type=int, required=True)
    p.add_argument("--nyears", type=int, required=True)
    p.add_argument("--afilter", type=_pair, default=(0.05, 0.95))
    p.add_argument("--fact", type=int, default=1)
    p.add_argument("--fun", default="mean", choices=("mean", "median"))
    p.add_argument("--only-na", action="store_true", dest="only_na")
    p.add_argument("--targets", help="layer indices, comma separated (default all)")
    p.add_argument("--include-target", action="store_true", dest="include_target",
                   help="include the target layer in its own neighborhood mean")
    p.add_argument("--out", dest="out_dir", required=True)
    p.set_defaults(func=_cmd_ima)

    p = sub.add_parser("waterlevel", help="estimate water levels from NDWI + DEM")
    p.add_argument("--in", dest="in_dir", required=True, help="NDWI GeoTIFF folder")
    p.add_argument("--dem", required=True)
    p.add_argument("--obs", help="observations CSV (date,level.masl)")
    p.add_argument("--threshold", type=float, default=hydro.DEFAULT_NDWI_THRESHOLD)
    p.add_argument("--out", required=True, help="results CSV path")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=_cmd_waterlevel)

    p = sub.add_parser("evaluate", help="accuracy metrics from a results CSV")
    p.add_argument("--results", required=True)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("render", help="render a stack into a PNG panel figure")
    p.add_argument("--in", dest="in_dir", required=True)
    p.add_argument("--clamp", type=_pair, help="clamp values to lo,hi first")
    p.add_argument("--zlim", type=_pair, help="color ramp range (default clamp or 0,1)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_render)

    p = sub.add_parser("fixtures", help="deterministic test-input generators")
    fsub = p.add_subparsers(dest="fixtures_command")
    pg = fsub.add_parser("gen", help="write all fixture files")
    pg.add_argument("--dest", required=True)
    pg.set_defaults(func=_cmd_fixtures_gen)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if getattr(args, "func", None) is None:
        parser.print_usage(file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except SatstackError as exc:
        print(f"satstack {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"satstack {args.command}: io-failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
