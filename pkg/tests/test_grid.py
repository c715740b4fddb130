import datetime as dt

import numpy as np
import pytest

from satstack.errors import (
    CrsMismatchError,
    DayOutOfRangeError,
    EmptyIntersectionError,
    GeorefMismatchError,
    InvalidBoundsError,
    InvalidRoiError,
    LatticeMisalignedError,
    NoDateTokenError,
    RaggedStackError,
)
from satstack.geoproj import GEOGRAPHIC, utm
from satstack.grid import (
    GeoRef,
    GridStack,
    RasterGrid,
    Roi,
    aggregate,
    apply_pixel_mask,
    clamp,
    composite,
    crop,
    format_layer_date,
    mosaic,
    parse_layer_date,
    rescale_reflectance,
)

M = np.nan


def grid(values, origin=(0.0, None), pixel=(1.0, -1.0), crs=GEOGRAPHIC, source=None):
    values = np.asarray(values, dtype=float)
    oy = origin[1] if origin[1] is not None else values.shape[0] * abs(pixel[1])
    ref = GeoRef(origin[0], oy, pixel[0], pixel[1], values.shape[1], values.shape[0], crs)
    return RasterGrid(ref, values, source=source)


# --- types ------------------------------------------------------------------

def test_georef_validation():
    with pytest.raises(InvalidBoundsError):
        GeoRef(0, 0, -1.0, -1.0, 4, 4, GEOGRAPHIC)
    with pytest.raises(InvalidBoundsError):
        GeoRef(0, 0, 1.0, 0.0, 4, 4, GEOGRAPHIC)
    with pytest.raises(InvalidBoundsError):
        GeoRef(0, 0, 1.0, -1.0, 0, 4, GEOGRAPHIC)


def test_cell_center_mapping_is_invertible():
    ref = GeoRef(10.0, 20.0, 0.5, -0.25, 8, 6, GEOGRAPHIC)
    for row, col in [(0, 0), (5, 7), (3, 2)]:
        x, y = ref.cell_center(row, col)
        assert (x - ref.origin_x) / ref.pixel_w - 0.5 == pytest.approx(col)
        assert (y - ref.origin_y) / ref.pixel_h - 0.5 == pytest.approx(row)


def test_rastergrid_shape_checked():
    ref = GeoRef(0, 4, 1, -1, 4, 4, GEOGRAPHIC)
    with pytest.raises(InvalidBoundsError):
        RasterGrid(ref, np.zeros((3, 4)))


def test_gridstack_rejects_ragged_and_mismatched():
    a = grid(np.zeros((2, 2)))
    b = grid(np.zeros((3, 3)))
    with pytest.raises(RaggedStackError):
        GridStack([a, b], [dt.date(2018, 1, 1)] * 2, ["a", "b"])
    with pytest.raises(RaggedStackError):
        GridStack([a], [dt.date(2018, 1, 1)], ["a", "b"])


def test_roi_validation():
    with pytest.raises(InvalidRoiError):
        Roi.from_bbox(2, 0, 1, 1, GEOGRAPHIC)
    with pytest.raises(InvalidRoiError):
        Roi.from_polygon([[(0, 0), (1, 0), (1, 1)]], GEOGRAPHIC)  # not closed
    with pytest.raises(InvalidRoiError):
        # bow-tie ring
        Roi.from_polygon([[(0, 0), (1, 1), (1, 0), (0, 1), (0, 0)]], GEOGRAPHIC)
    ok = Roi.from_polygon([[(0, 0), (1, 0), (1, 1), (0, 1), (0, 0)]], GEOGRAPHIC)
    assert ok.envelope() == (0, 0, 1, 1)


# --- mosaic -----------------------------------------------------------------

def test_mosaic_disjoint_union():
    a = grid(np.full((2, 2), 5.0), origin=(0.0, 2.0))
    b = grid(np.full((2, 2), 9.0), origin=(2.0, 2.0))
    out = mosaic([a, b], keys=["a", "b"])
    assert out.values.shape == (2, 4)
    assert np.array_equal(out.values, [[5, 5, 9, 9], [5, 5, 9, 9]])


def test_mosaic_overlap_first_non_missing_wins():
    a = grid(np.full((2, 2), 5.0), origin=(0.0, 2.0))
    b = grid(np.full((2, 2), 9.0), origin=(1.0, 2.0))
    out = mosaic([a, b], keys=["a", "b"])
    assert out.values[0, 1] == 5.0  # overlap column belongs to a


def test_mosaic_overlap_missing_filled_by_later():
    vals = np.full((2, 2), 5.0)
    vals[:, 1] = np.nan
    a = grid(vals, origin=(0.0, 2.0))
    b = grid(np.full((2, 2), 9.0), origin=(1.0, 2.0))
    out = mosaic([a, b], keys=["a", "b"])
    assert out.values[0, 1] == 9.0


def test_mosaic_single_grid_identity():
    g = grid(np.arange(6, dtype=float).reshape(2, 3))
    out = mosaic([g])
    assert out.georef == g.georef
    assert np.array_equal(out.values, g.values)


def test_mosaic_order_independent_after_sort():
    a = grid(np.full((2, 2), 1.0), origin=(0.0, 2.0), source="tile_a.tif")
    b = grid(np.full((2, 2), 2.0), origin=(1.0, 2.0), source="tile_b.tif")
    out1 = mosaic([a, b])
    out2 = mosaic([b, a])
    assert np.array_equal(out1.values, out2.values)
    assert out1.georef == out2.georef


def test_mosaic_errors():
    a = grid(np.zeros((2, 2)))
    b = grid(np.zeros((2, 2)), crs=utm(30, "N"))
    with pytest.raises(CrsMismatchError):
        mosaic([a, b])
    c = grid(np.zeros((2, 2)), origin=(0.5001, 2.0))
    with pytest.raises(LatticeMisalignedError):
        mosaic([a, c])


# --- crop -------------------------------------------------------------------

def test_crop_full_extent_identity():
    g = grid(np.arange(16, dtype=float).reshape(4, 4))
    out = crop(g, Roi.from_bbox(0, 0, 4, 4, GEOGRAPHIC))
    assert out.georef == g.georef
    assert np.array_equal(out.values, g.values)


def test_crop_left_half():
    g = grid(np.arange(16, dtype=float).reshape(4, 4))
    out = crop(g, Roi.from_bbox(0, 0, 2, 4, GEOGRAPHIC))
    assert out.values.shape == (4, 2)
    assert np.array_equal(out.values, g.values[:, :2])
    assert out.georef.origin_x == 0.0


def test_crop_disjoint_raises():
    g = grid(np.zeros((4, 4)))
    with pytest.raises(EmptyIntersectionError):
        crop(g, Roi.from_bbox(10, 10, 12, 12, GEOGRAPHIC))


def test_crop_idempotent():
    g = grid(np.arange(36, dtype=float).reshape(6, 6))
    roi = Roi.from_bbox(1.2, 1.2, 4.8, 4.8, GEOGRAPHIC)
    once = crop(g, roi)
    twice = crop(once, roi)
    assert once.georef == twice.georef
    assert np.array_equal(once.values, twice.values)


# --- clamp / rescale --------------------------------------------------------

def test_clamp_example():
    g = grid([[-2.0, 0.5, 3.0]])
    out = clamp(g, -1.0, 1.0)
    assert np.array_equal(out.values, [[-1.0, 0.5, 1.0]])


def test_clamp_identity_and_missing():
    g = grid([[0.1, M, 0.9]])
    out = clamp(g, -1.0, 1.0)
    assert out.values[0, 0] == 0.1 and out.values[0, 2] == 0.9
    assert np.isnan(out.values[0, 1])
    with pytest.raises(InvalidBoundsError):
        clamp(g, 1.0, -1.0)


def test_clamp_idempotent_and_monotone():
    rng = np.random.default_rng(3)
    vals = rng.normal(0, 2, (5, 5))
    vals[rng.random((5, 5)) < 0.2] = np.nan
    g = grid(vals)
    once = clamp(g, -1, 1)
    assert np.array_equal(clamp(once, -1, 1).values, once.values, equal_nan=True)
    a = clamp(g, -1, 1).values
    b = clamp(g, -2, 2).values
    fin = np.isfinite(vals)
    assert np.all(a[fin] <= b[fin] + 2)  # clamped range ordering
    assert np.array_equal(np.isnan(a), np.isnan(vals))


def test_rescale_reflectance_defaults():
    g = grid([[16000.0, 0.0, 20000.0]])
    out = rescale_reflectance(g)
    assert out.values[0, 0] == pytest.approx(1.6)
    assert out.values[0, 1] == 0.0
    assert out.values[0, 2] == pytest.approx(1.6)  # truncated to 16000 first


# --- aggregate --------------------------------------------------------------

def test_aggregate_mean_block():
    g = grid([[1.0, 3.0], [5.0, 7.0]])
    out = aggregate(g, 2, "mean")
    assert out.values.shape == (1, 1)
    assert out.values[0, 0] == 4.0
    assert out.georef.pixel_w == 2.0 and out.georef.pixel_h == -2.0
    assert out.georef.origin_x == g.georef.origin_x


def test_aggregate_ignores_missing():
    g = grid([[1.0, M], [5.0, 7.0]])
    out = aggregate(g, 2, "mean")
    assert out.values[0, 0] == pytest.approx(13.0 / 3.0)


def test_aggregate_fact1_identity():
    g = grid(np.arange(4, dtype=float).reshape(2, 2))
    out = aggregate(g, 1, "mean")
    assert out.georef == g.georef
    assert np.array_equal(out.values, g.values)


def test_aggregate_constant_and_partial_blocks():
    g = grid(np.full((5, 5), 2.5))
    out = aggregate(g, 2, "median")
    assert out.values.shape == (3, 3)
    assert np.all(out.values == 2.5)
    allnan = grid(np.full((2, 2), np.nan))
    assert np.isnan(aggregate(allnan, 2, "mean").values).all()


# --- composite ---------------------------------------------------------------

def _stack(layers, dates, labels=None):
    labels = labels or [f"NDVI_{format_layer_date(d)}" for d in dates]
    return GridStack([grid(v) for v in layers], dates, labels)


def test_composite_same_date_median():
    d = dt.date(2018, 8, 2)
    stack = _stack(
        [[[0.1, 0.2]], [[0.3, 0.4]], [[0.5, 0.6]]],
        [d, d, d],
    )
    out = composite(stack, 8, "median")
    assert len(out) == 1
    assert np.allclose(out.layers[0].values, [[0.3, 0.4]])
    assert out.dates[0] == d


def test_composite_window_spanning_everything():
    dates = [dt.date(2018, 8, 2) + dt.timedelta(days=i) for i in range(5)]
    stack = _stack([[[float(i)]] for i in range(5)], dates)
    out = composite(stack, 365, "mean")
    assert len(out) == 1
    assert out.layers[0].values[0, 0] == pytest.approx(2.0)


def test_composite_mean_ignores_missing():
    d = dt.date(2018, 8, 2)
    stack = _stack([[[0.1]], [[M]], [[0.3]]], [d, d, d])
    out = composite(stack, 8, "mean")
    assert out.layers[0].values[0, 0] == pytest.approx(0.2)


def test_composite_splits_windows():
    dates = [dt.date(2018, 8, 2), dt.date(2018, 8, 3), dt.date(2018, 8, 12)]
    stack = _stack([[[1.0]], [[3.0]], [[10.0]]], dates)
    out = composite(stack, 8, "mean")
    assert len(out) == 2
    assert out.layers[0].values[0, 0] == 2.0
    assert out.layers[1].values[0, 0] == 10.0
    assert out.dates[1] == dt.date(2018, 8, 10)  # window start, not layer date


# --- layer dates --------------------------------------------------------------

def test_parse_layer_date_examples():
    assert parse_layer_date("NDVI_2018001") == dt.date(2018, 1, 1)
    # oracle: calendar arithmetic
    assert parse_layer_date("NDVI_2018214") == dt.date(2018, 1, 1) + dt.timedelta(213)
    assert parse_layer_date("NDVI_2018214") == dt.date(2018, 8, 2)
    assert parse_layer_date("X_2020060") == dt.date(2020, 2, 29)  # leap year


def test_parse_layer_date_errors():
    with pytest.raises(NoDateTokenError):
        parse_layer_date("NDVI_nodate")
    with pytest.raises(DayOutOfRangeError):
        parse_layer_date("NDVI_2018366")  # 2018 is not a leap year
    assert parse_layer_date("NDVI_2020366") == dt.date(2020, 12, 31)


def test_parse_format_roundtrip_1900_2100():
    day = dt.date(1900, 1, 1)
    end = dt.date(2100, 12, 31)
    step = dt.timedelta(days=1)
    while day <= end:
        assert parse_layer_date(f"X_{format_layer_date(day)}") == day
        day += step


# --- masking -----------------------------------------------------------------

def test_apply_pixel_mask():
    g = grid([[1.0, 2.0], [3.0, 4.0]])
    ones = grid([[1.0, 1.0], [1.0, 1.0]])
    assert np.array_equal(apply_pixel_mask(g, ones).values, g.values)
    allmiss = grid([[M, M], [M, M]])
    assert np.isnan(apply_pixel_mask(g, allmiss).values).all()
    mixed = grid([[1.0, M], [1.0, 1.0]])
    out = apply_pixel_mask(g, mixed)
    assert out.values[0, 0] == 1.0 and np.isnan(out.values[0, 1])
    other = grid(np.ones((2, 2)), origin=(5.0, 2.0))
    with pytest.raises(GeorefMismatchError):
        apply_pixel_mask(g, other)
