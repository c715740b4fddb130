import numpy as np
import pytest

from satstack.errors import InvalidBoundsError
from satstack.fixtures import (
    SplitMix64,
    SyntheticField,
    SyntheticReservoir,
    gen_band_archive,
    gen_cmr_response,
    gen_field,
    gen_m2m_response,
    gen_reservoir,
    gen_scihub_response,
)


def test_splitmix64_known_answers():
    # reference outputs of the standard splitmix64 stream for seed 0
    sm = SplitMix64(0)
    assert [sm.next_u64() for _ in range(4)] == [
        0xE220A8397B1DCDAF,
        0x6E789E6AA1B965F4,
        0x06C45D188009454F,
        0xF88BB8A8724C81EC,
    ]


def test_splitmix64_uniform_and_below():
    sm = SplitMix64(99)
    vals = [sm.uniform() for _ in range(1000)]
    assert all(0.0 <= v < 1.0 for v in vals)
    sm2 = SplitMix64(99)
    assert [SplitMix64(7).below(10) for _ in range(1)] == [SplitMix64(7).below(10)]
    counts = [0] * 5
    for _ in range(5000):
        counts[sm2.below(5)] += 1
    assert min(counts) > 800  # roughly uniform


def test_sample_indices_distinct_and_deterministic():
    a = SplitMix64(3).sample_indices(100, 30)
    b = SplitMix64(3).sample_indices(100, 30)
    assert np.array_equal(a, b)
    assert len(set(a.tolist())) == 30
    with pytest.raises(InvalidBoundsError):
        SplitMix64(3).sample_indices(5, 6)


def test_gen_field_hole_counts_and_determinism():
    spec = SyntheticField(n_rows=20, n_cols=25, n_dates=3, hole_fraction=0.1, seed=11)
    truth, holed = gen_field(spec)
    assert len(truth) == len(holed) == 3
    for layer in truth.layers:
        assert np.isfinite(layer.values).all()
    for layer in holed.layers:
        assert (~np.isfinite(layer.values)).sum() == int(0.1 * 20 * 25)
    truth2, holed2 = gen_field(spec)
    for a, b in zip(holed.layers, holed2.layers):
        assert np.array_equal(a.values, b.values, equal_nan=True)


def test_gen_field_no_holes():
    truth, holed = gen_field(SyntheticField(n_rows=5, n_cols=5, n_dates=2))
    for t, h in zip(truth.layers, holed.layers):
        assert np.array_equal(t.values, h.values)


def test_gen_reservoir_fill_levels():
    spec = SyntheticReservoir(n_rows=40, n_cols=40, z_bottom=550.0,
                              slope_per_cell=1.0, fill_level=560.0)
    dem, ndwi, level = gen_reservoir(spec)
    assert level == 560.0
    # below the DEM minimum: nothing flooded
    _, dry, _ = gen_reservoir(
        SyntheticReservoir(n_rows=40, n_cols=40, fill_level=549.0)
    )
    assert np.all(dry.values == -0.5)
    # above the DEM maximum: everything flooded
    _, wet, _ = gen_reservoir(
        SyntheticReservoir(n_rows=10, n_cols=10, fill_level=1000.0)
    )
    assert np.all(wet.values == 0.5)


def test_gen_reservoir_ring_radius_geometry():
    # geometry oracle: flooded cells are exactly those with
    # dist(center) < (L - z_bottom) / slope
    spec = SyntheticReservoir(n_rows=60, n_cols=60, z_bottom=550.0,
                              slope_per_cell=1.0, fill_level=575.0)
    _dem, ndwi, _ = gen_reservoir(spec)
    r = (spec.fill_level - spec.z_bottom) / spec.slope_per_cell
    cr = (spec.n_rows - 1) / 2
    cc = (spec.n_cols - 1) / 2
    rows, cols = np.nonzero(ndwi.values == 0.5)
    dist = np.sqrt((rows - cr) ** 2 + (cols - cc) ** 2)
    assert dist.max() < r
    dry_rows, dry_cols = np.nonzero(ndwi.values == -0.5)
    dry_dist = np.sqrt((dry_rows - cr) ** 2 + (dry_cols - cc) ** 2)
    assert dry_dist.min() >= r


def test_reservoir_validation():
    with pytest.raises(InvalidBoundsError):
        SyntheticReservoir(slope_per_cell=0.0)


def test_catalog_response_shapes_are_deterministic():
    assert gen_cmr_response() == gen_cmr_response()
    assert gen_scihub_response() == gen_scihub_response()
    assert gen_m2m_response() == gen_m2m_response()
    assert gen_band_archive() == gen_band_archive()
