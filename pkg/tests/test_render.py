import datetime as dt
import struct
import zlib

import numpy as np
import pytest

from satstack.errors import InvalidBoundsError
from satstack.geoproj import GEOGRAPHIC
from satstack.grid import GeoRef, GridStack, RasterGrid, format_layer_date
from satstack.render import render_panels, terrain_ramp, write_png

M = np.nan


def decode_png(path):
    """Minimal independent PNG reader for filter-0 RGBA images."""
    with open(path, "rb") as fh:
        data = fh.read()
    assert data[:8] == b"\x89PNG\r\n\x1a\n"
    pos = 8
    width = height = None
    idat = b""
    while pos < len(data):
        (length,) = struct.unpack(">I", data[pos : pos + 4])
        tag = data[pos + 4 : pos + 8]
        payload = data[pos + 8 : pos + 8 + length]
        (crc,) = struct.unpack(">I", data[pos + 8 + length : pos + 12 + length])
        assert crc == zlib.crc32(tag + payload) & 0xFFFFFFFF
        if tag == b"IHDR":
            width, height, bits, color, comp, filt, interlace = struct.unpack(
                ">IIBBBBB", payload
            )
            assert (bits, color, interlace) == (8, 6, 0)
        elif tag == b"IDAT":
            idat += payload
        pos += 12 + length
    raw = zlib.decompress(idat)
    stride = width * 4 + 1
    rows = []
    for r in range(height):
        row = raw[r * stride : (r + 1) * stride]
        assert row[0] == 0  # filter type 0
        rows.append(np.frombuffer(row[1:], dtype=np.uint8).reshape(width, 4))
    return np.stack(rows)


def grid(values):
    values = np.atleast_2d(np.asarray(values, dtype=float))
    ref = GeoRef(0.0, float(values.shape[0]), 1.0, -1.0,
                 values.shape[1], values.shape[0], GEOGRAPHIC)
    return RasterGrid(ref, values)


def stack_of(layers, labels=None):
    dates = [dt.date(2018, 8, 2) + dt.timedelta(days=i) for i in range(len(layers))]
    labels = labels or [f"NDVI_{format_layer_date(d)}" for d in dates]
    return GridStack([grid(v) for v in layers], dates, labels)


def test_write_png_roundtrip(tmp_path):
    rgba = np.zeros((5, 7, 4), dtype=np.uint8)
    rgba[2, 3] = (10, 200, 30, 255)
    path = str(tmp_path / "t.png")
    write_png(path, rgba)
    assert np.array_equal(decode_png(path), rgba)


def test_terrain_ramp_shape_and_ends():
    ramp = terrain_ramp()
    assert ramp.shape == (256, 4)
    assert tuple(ramp[0, :3]) == (34, 139, 34)  # green end
    assert tuple(ramp[-1, :3]) == (255, 255, 255)  # white end
    assert np.all(ramp[:, 3] == 255)


def test_single_constant_layer_flat_panel(tmp_path):
    path = str(tmp_path / "p.png")
    render_panels(stack_of([np.full((10, 12), 0.5)]), (0.0, 1.0), path)
    img = decode_png(path)
    # panel body (below the caption strip) is one flat color
    body = img[13:23, 2:14]
    colors = {tuple(px) for px in body.reshape(-1, 4)}
    assert len(colors) == 1
    assert body[0, 0, 3] == 255


def test_missing_cells_transparent(tmp_path):
    vals = np.full((6, 6), 0.5)
    vals[0, 0] = M
    path = str(tmp_path / "p.png")
    render_panels(stack_of([vals]), (0.0, 1.0), path)
    img = decode_png(path)
    assert img[13, 2, 3] == 0  # missing cell -> alpha 0
    assert img[14, 3, 3] == 255


def test_below_zlim_clamps_to_first_color(tmp_path):
    ramp = terrain_ramp()
    path = str(tmp_path / "p.png")
    render_panels(stack_of([np.full((4, 4), -9.0)]), (0.0, 1.0), path)
    img = decode_png(path)
    assert tuple(img[13, 2]) == tuple(ramp[0])


def test_eight_layers_use_four_columns(tmp_path):
    layers = [np.full((8, 8), i / 8.0) for i in range(8)]
    path = str(tmp_path / "p.png")
    render_panels(stack_of(layers), (0.0, 1.0), path)
    img = decode_png(path)
    # 4-column row-major layout -> 2 panel rows
    n_cols_expected = 4
    assert img.shape[1] > img.shape[0]
    # caption pixels present for every panel (black text)
    black = (img[:, :, :3] == 0).all(axis=2) & (img[:, :, 3] == 255)
    assert black.sum() > 8 * 10  # some glyph pixels per caption
    assert img.shape[0] == 2 + 2 * (8 + 11 + 2)
    cell_w = max(8, 6 * len("NDVI_2018214")) + 2
    assert img.shape[1] == 2 + n_cols_expected * cell_w


def test_render_deterministic(tmp_path):
    layers = [np.random.default_rng(1).random((6, 6)) for _ in range(3)]
    p1 = str(tmp_path / "a.png")
    p2 = str(tmp_path / "b.png")
    render_panels(stack_of(layers), (0.0, 1.0), p1)
    render_panels(stack_of(layers), (0.0, 1.0), p2)
    assert open(p1, "rb").read() == open(p2, "rb").read()


def test_render_validation(tmp_path):
    with pytest.raises(InvalidBoundsError):
        render_panels(stack_of([np.ones((2, 2))]), (1.0, 0.0), str(tmp_path / "x.png"))
