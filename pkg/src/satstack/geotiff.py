"""Minimal GeoTIFF I/O for the profile this toolkit produces and consumes.

Supported: little-endian classic TIFF, one band per file, strip-organized,
uint8/uint16/int16/float32 samples, no compression or deflate, georeferencing
via ModelPixelScale + ModelTiepoint + GeoKeyDirectory (EPSG 4326, UTM WGS84
zones, or the user-defined MODIS sinusoidal key), nodata as GDAL ASCII tag
42113.  Everything else is rejected, never guessed.

The writer places pixel data after all metadata, and the reader bounds-checks
every offset, so an arbitrarily truncated file parses to malformed-tiff
rather than crashing.
"""

from __future__ import annotations

import math
import struct
import zlib

import numpy as np

from satstack.errors import (
    InvalidBoundsError,
    MalformedTiffError,
    MissingGeoreferencingError,
    UnsupportedProfileError,
)
from satstack.geoproj import CrsSpec
from satstack.grid import GeoRef, RasterGrid

TAG_IMAGE_WIDTH = 256
TAG_IMAGE_LENGTH = 257
TAG_BITS_PER_SAMPLE = 258
TAG_COMPRESSION = 259
TAG_PHOTOMETRIC = 262
TAG_STRIP_OFFSETS = 273
TAG_SAMPLES_PER_PIXEL = 277
TAG_ROWS_PER_STRIP = 278
TAG_STRIP_BYTE_COUNTS = 279
TAG_SAMPLE_FORMAT = 339
TAG_MODEL_PIXEL_SCALE = 33550
TAG_MODEL_TIEPOINT = 33922
TAG_GEO_KEY_DIRECTORY = 34735
TAG_GEO_ASCII_PARAMS = 34737
TAG_GDAL_NODATA = 42113

TYPE_ASCII = 2
TYPE_SHORT = 3
TYPE_LONG = 4
TYPE_DOUBLE = 12
_TYPE_SIZE = {TYPE_ASCII: 1, TYPE_SHORT: 2, TYPE_LONG: 4, TYPE_DOUBLE: 8}
_TYPE_FMT = {TYPE_SHORT: "H", TYPE_LONG: "L", TYPE_DOUBLE: "d"}

COMPRESSION_NONE = 1
COMPRESSION_DEFLATE = 8
COMPRESSION_DEFLATE_OLD = 32946

KEY_MODEL_TYPE = 1024
KEY_RASTER_TYPE = 1025
KEY_CITATION = 1026
KEY_GEOGRAPHIC_TYPE = 2048
KEY_PROJECTED_CS_TYPE = 3072
USER_DEFINED = 32767
SINUSOIDAL_CITATION = "MODIS Sinusoidal"

# (bits, sample_format) -> numpy dtype
_PROFILE_DTYPES = {
    ("uint8", (8, 1)): np.uint8,
    ("uint16", (16, 1)): np.uint16,
    ("int16", (16, 2)): np.int16,
    ("float32", (32, 3)): np.float32,
}
DTYPES = {name: (spec, dt) for (name, spec), dt in _PROFILE_DTYPES.items()}
_SPEC_TO_DTYPE = {spec: dt for (_, spec), dt in _PROFILE_DTYPES.items()}


def _geokeys_for(crs: CrsSpec):
    """(geokey shorts, ascii params) for the three supported CRSs."""
    if crs.kind == "geographic":
        keys = [(KEY_MODEL_TYPE, 0, 1, 2), (KEY_RASTER_TYPE, 0, 1, 1),
                (KEY_GEOGRAPHIC_TYPE, 0, 1, 4326)]
        ascii_params = b""
    elif crs.kind == "utm":
        keys = [(KEY_MODEL_TYPE, 0, 1, 1), (KEY_RASTER_TYPE, 0, 1, 1),
                (KEY_PROJECTED_CS_TYPE, 0, 1, crs.to_epsg())]
        ascii_params = b""
    else:
        citation = (SINUSOIDAL_CITATION + "|").encode("ascii")
        keys = [(KEY_MODEL_TYPE, 0, 1, 1), (KEY_RASTER_TYPE, 0, 1, 1),
                (KEY_CITATION, TAG_GEO_ASCII_PARAMS, len(citation), 0),
                (KEY_PROJECTED_CS_TYPE, 0, 1, USER_DEFINED)]
        ascii_params = citation + b"\x00"
    shorts = [1, 1, 0, len(keys)]
    for k in keys:
        shorts.extend(k)
    return shorts, ascii_params


def _format_nodata(nodata: float) -> str:
    if math.isnan(nodata):
        return "nan"
    if float(nodata) == int(nodata):
        return str(int(nodata))
    return repr(float(nodata))


def write_geotiff(
    grid: RasterGrid,
    path: str,
    dtype: str = "float32",
    nodata: float | None = None,
    compression: str = "none",
) -> None:
    """Write one grid as a single-band GeoTIFF in the supported profile.

    Missing cells are stored as ``nodata`` (NaN by default for float32;
    integer storage requires an explicit value).
    """
    if dtype not in DTYPES:
        raise UnsupportedProfileError(f"dtype {dtype!r} outside the profile")
    if compression not in ("none", "deflate"):
        raise UnsupportedProfileError(f"compression {compression!r} outside the profile")
    (bits, sample_format), np_dtype = DTYPES[dtype]

    ref = grid.georef
    missing = grid.missing
    if missing.any() and nodata is None:
        if dtype == "float32":
            nodata = float("nan")
        else:
            raise InvalidBoundsError(
                "grid has missing cells: integer storage needs an explicit nodata"
            )

    vals = grid.values
    if nodata is not None and missing.any():
        vals = vals.copy()
        vals[missing] = nodata
    data = np.ascontiguousarray(vals.astype(np_dtype))

    row_bytes = ref.n_cols * data.itemsize
    rows_per_strip = max(1, min(ref.n_rows, 8192 // max(1, row_bytes)))
    n_strips = -(-ref.n_rows // rows_per_strip)
    strips = []
    for s in range(n_strips):
        raw = data[s * rows_per_strip : (s + 1) * rows_per_strip].tobytes()
        strips.append(zlib.compress(raw, 6) if compression == "deflate" else raw)

    geokeys, ascii_params = _geokeys_for(ref.crs)
    scale = (ref.pixel_w, -ref.pixel_h, 0.0)
    tiepoint = (0.0, 0.0, 0.0, ref.origin_x, ref.origin_y, 0.0)

    entries: list[tuple[int, int, int, bytes]] = []

    def add(tag, typ, values):
        if typ == TYPE_ASCII:
            payload = values
            count = len(payload)
        else:
            payload = struct.pack("<" + _TYPE_FMT[typ] * len(values), *values)
            count = len(values)
        entries.append((tag, typ, count, payload))

    comp_code = COMPRESSION_DEFLATE if compression == "deflate" else COMPRESSION_NONE
    add(TAG_IMAGE_WIDTH, TYPE_LONG, [ref.n_cols])
    add(TAG_IMAGE_LENGTH, TYPE_LONG, [ref.n_rows])
    add(TAG_BITS_PER_SAMPLE, TYPE_SHORT, [bits])
    add(TAG_COMPRESSION, TYPE_SHORT, [comp_code])
    add(TAG_PHOTOMETRIC, TYPE_SHORT, [1])
    add(TAG_STRIP_OFFSETS, TYPE_LONG, [0] * n_strips)  # patched below
    add(TAG_SAMPLES_PER_PIXEL, TYPE_SHORT, [1])
    add(TAG_ROWS_PER_STRIP, TYPE_LONG, [rows_per_strip])
    add(TAG_STRIP_BYTE_COUNTS, TYPE_LONG, [len(s) for s in strips])
    add(TAG_SAMPLE_FORMAT, TYPE_SHORT, [sample_format])
    add(TAG_MODEL_PIXEL_SCALE, TYPE_DOUBLE, scale)
    add(TAG_MODEL_TIEPOINT, TYPE_DOUBLE, tiepoint)
    add(TAG_GEO_KEY_DIRECTORY, TYPE_SHORT, geokeys)
    if ascii_params:
        add(TAG_GEO_ASCII_PARAMS, TYPE_ASCII, ascii_params)
    if nodata is not None:
        add(TAG_GDAL_NODATA, TYPE_ASCII, _format_nodata(nodata).encode("ascii") + b"\x00")

    entries.sort(key=lambda e: e[0])
    ifd_offset = 8
    ifd_size = 2 + 12 * len(entries) + 4
    cursor = ifd_offset + ifd_size
    external: list[bytes] = []
    offsets: dict[int, int] = {}
    for tag, typ, count, payload in entries:
        if len(payload) > 4:
            if cursor % 2:
                external.append(b"\x00")
                cursor += 1
            offsets[tag] = cursor
            external.append(payload)
            cursor += len(payload)
    if cursor % 2:
        external.append(b"\x00")
        cursor += 1
    strip_offsets = []
    for s in strips:
        strip_offsets.append(cursor)
        cursor += len(s)

    # patch the strip-offset array now that the layout is known
    patched = struct.pack("<" + "L" * n_strips, *strip_offsets)
    entries = [
        (tag, typ, count, patched if tag == TAG_STRIP_OFFSETS else payload)
        for tag, typ, count, payload in entries
    ]
    # recompute external blocks with the patched payloads, same layout
    external = []
    pos = ifd_offset + ifd_size
    for tag, typ, count, payload in entries:
        if len(payload) > 4:
            if pos % 2:
                external.append(b"\x00")
                pos += 1
            assert offsets[tag] == pos
            external.append(payload)
            pos += len(payload)
    if pos % 2:
        external.append(b"\x00")
        pos += 1

    out = bytearray()
    out += struct.pack("<2sHL", b"II", 42, ifd_offset)
    out += struct.pack("<H", len(entries))
    for tag, typ, count, payload in entries:
        if len(payload) > 4:
            value_field = struct.pack("<L", offsets[tag])
        else:
            value_field = payload + b"\x00" * (4 - len(payload))
        out += struct.pack("<HHL", tag, typ, count) + value_field
    out += struct.pack("<L", 0)  # no next IFD
    for block in external:
        out += block
    for s in strips:
        out += s

    with open(path, "wb") as fh:
        fh.write(bytes(out))


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf

    def unpack(self, fmt: str, offset: int):
        size = struct.calcsize(fmt)
        if offset < 0 or offset + size > len(self.buf):
            raise MalformedTiffError("read past end of file")
        return struct.unpack_from(fmt, self.buf, offset)

    def raw(self, offset: int, size: int) -> bytes:
        if offset < 0 or size < 0 or offset + size > len(self.buf):
            raise MalformedTiffError("data offset outside file")
        return self.buf[offset : offset + size]


def _decode_values(rd: _Reader, typ: int, count: int, field: bytes):
    size = _TYPE_SIZE.get(typ)
    if size is None:
        raise UnsupportedProfileError(f"TIFF value type {typ} outside the profile")
    total = size * count
    if total <= 4:
        payload = field[:total]
    else:
        (offset,) = struct.unpack("<L", field)
        payload = rd.raw(offset, total)
    if typ == TYPE_ASCII:
        return payload
    return struct.unpack("<" + _TYPE_FMT[typ] * count, payload)


def _crs_from_geokeys(shorts, ascii_params: bytes) -> CrsSpec:
    if len(shorts) < 4:
        raise MalformedTiffError("GeoKeyDirectory too short")
    n_keys = shorts[3]
    if len(shorts) < 4 * (n_keys + 1):
        raise MalformedTiffError("GeoKeyDirectory truncated")
    keys = {}
    for i in range(n_keys):
        key_id, loc, count, value = shorts[4 * (i + 1) : 4 * (i + 2)]
        keys[key_id] = (loc, count, value)
    if KEY_GEOGRAPHIC_TYPE in keys and keys[KEY_GEOGRAPHIC_TYPE][2] == 4326:
        return CrsSpec.from_epsg(4326)
    if KEY_PROJECTED_CS_TYPE in keys:
        code = keys[KEY_PROJECTED_CS_TYPE][2]
        if code == USER_DEFINED:
            citation = ""
            if KEY_CITATION in keys and keys[KEY_CITATION][0] == TAG_GEO_ASCII_PARAMS:
                loc, count, value = keys[KEY_CITATION]
                citation = ascii_params[value : value + count].decode(
                    "ascii", "replace"
                )
            if SINUSOIDAL_CITATION in citation:
                return CrsSpec("sinusoidal")
            raise UnsupportedProfileError(
                f"user-defined projection {citation!r} is not the MODIS sinusoidal"
            )
        if 32601 <= code <= 32660 or 32701 <= code <= 32760:
            return CrsSpec.from_epsg(code)
        raise UnsupportedProfileError(f"EPSG:{code} outside the profile")
    raise MissingGeoreferencingError("no recognizable CRS geokeys")


def read_geotiff(path: str) -> RasterGrid:
    """Read a single-band GeoTIFF in the supported profile into a RasterGrid."""
    with open(path, "rb") as fh:
        buf = fh.read()
    rd = _Reader(buf)

    byte_order = rd.raw(0, 2)
    if byte_order == b"MM":
        raise UnsupportedProfileError("big-endian TIFF outside the profile")
    if byte_order != b"II":
        raise MalformedTiffError("not a TIFF file")
    magic, ifd_offset = rd.unpack("<HL", 2)
    if magic == 43:
        raise UnsupportedProfileError("BigTIFF outside the profile")
    if magic != 42:
        raise MalformedTiffError("bad TIFF magic number")

    (n_entries,) = rd.unpack("<H", ifd_offset)
    tags: dict[int, tuple[int, int, bytes]] = {}
    for i in range(n_entries):
        tag, typ, count = rd.unpack("<HHL", ifd_offset + 2 + 12 * i)
        field = rd.raw(ifd_offset + 2 + 12 * i + 8, 4)
        tags[tag] = (typ, count, field)
    rd.unpack("<L", ifd_offset + 2 + 12 * n_entries)  # next-IFD pointer in bounds

    def get(tag, default=None):
        if tag not in tags:
            return default
        typ, count, field = tags[tag]
        return _decode_values(rd, typ, count, field)

    def get1(tag, default=None):
        vals = get(tag)
        if vals is None:
            return default
        if len(vals) < 1:
            raise MalformedTiffError(f"tag {tag} has no value")
        return vals[0]

    width = get1(TAG_IMAGE_WIDTH)
    height = get1(TAG_IMAGE_LENGTH)
    if width is None or height is None:
        raise MalformedTiffError("missing image dimensions")
    if width < 1 or height < 1:
        raise MalformedTiffError("degenerate image dimensions")
    if get1(TAG_SAMPLES_PER_PIXEL, 1) != 1:
        raise UnsupportedProfileError("multi-band files outside the profile")
    bits = get1(TAG_BITS_PER_SAMPLE, 1)
    sample_format = get1(TAG_SAMPLE_FORMAT, 1)
    np_dtype = _SPEC_TO_DTYPE.get((bits, sample_format))
    if np_dtype is None:
        raise UnsupportedProfileError(
            f"sample type (bits={bits}, format={sample_format}) outside the profile"
        )
    compression = get1(TAG_COMPRESSION, COMPRESSION_NONE)
    if compression not in (COMPRESSION_NONE, COMPRESSION_DEFLATE, COMPRESSION_DEFLATE_OLD):
        raise UnsupportedProfileError(f"compression {compression} outside the profile")

    strip_offsets = get(TAG_STRIP_OFFSETS)
    strip_counts = get(TAG_STRIP_BYTE_COUNTS)
    if strip_offsets is None or strip_counts is None:
        raise MalformedTiffError("missing strip layout (tiled files unsupported)")
    if len(strip_offsets) != len(strip_counts):
        raise MalformedTiffError("strip offset/count arrays disagree")
    rows_per_strip = get1(TAG_ROWS_PER_STRIP, height)
    if rows_per_strip < 1:
        raise MalformedTiffError("RowsPerStrip must be positive")
    if len(strip_offsets) != -(-height // rows_per_strip):
        raise MalformedTiffError("strip count does not cover the image")

    itemsize = np.dtype(np_dtype).itemsize
    chunks = []
    for s, (off, cnt) in enumerate(zip(strip_offsets, strip_counts)):
        raw = rd.raw(off, cnt)
        if compression != COMPRESSION_NONE:
            try:
                raw = zlib.decompress(raw)
            except zlib.error as exc:
                raise MalformedTiffError(f"bad deflate strip: {exc}") from exc
        rows_here = min(rows_per_strip, height - s * rows_per_strip)
        if len(raw) != rows_here * width * itemsize:
            raise MalformedTiffError("strip size does not match its row span")
        chunks.append(raw)
    data = np.frombuffer(b"".join(chunks), dtype=np_dtype).reshape(height, width)

    scale = get(TAG_MODEL_PIXEL_SCALE)
    tiepoint = get(TAG_MODEL_TIEPOINT)
    geokeys = get(TAG_GEO_KEY_DIRECTORY)
    if scale is None or tiepoint is None or geokeys is None:
        raise MissingGeoreferencingError("missing geo-tags")
    if len(scale) < 2 or len(tiepoint) < 6:
        raise MalformedTiffError("geo-tag arrays too short")
    ascii_params = get(TAG_GEO_ASCII_PARAMS) or b""
    crs = _crs_from_geokeys(geokeys, ascii_params)

    pixel_w = float(scale[0])
    pixel_h = -float(scale[1])
    if pixel_w <= 0 or pixel_h == 0:
        raise MalformedTiffError("degenerate pixel scale")
    origin_x = float(tiepoint[3]) - float(tiepoint[0]) * pixel_w
    origin_y = float(tiepoint[4]) - float(tiepoint[1]) * pixel_h
    ref = GeoRef(origin_x, origin_y, pixel_w, pixel_h, int(width), int(height), crs)

    nodata_raw = get(TAG_GDAL_NODATA)
    values = data.astype(np.float64)
    if nodata_raw is not None:
        text = nodata_raw.split(b"\x00")[0].decode("ascii", "replace").strip()
        try:
            nodata = float(text)
        except ValueError as exc:
            raise MalformedTiffError(f"bad nodata value {text!r}") from exc
        if math.isnan(nodata):
            mask = np.isnan(data) if np_dtype == np.float32 else np.zeros_like(data, bool)
        else:
            mask = data == np_dtype(nodata)
        values[mask] = np.nan
    return RasterGrid(ref, values, source=path)
