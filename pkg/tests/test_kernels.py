"""Equivalence of the compiled kernels and the numpy fallback, plus oracle
checks that hold for either implementation."""

import numpy as np
import pytest

from satstack import _kernels_py, kernels


def _flood_fill_components(mask):
    """Independent 8-connectivity oracle: BFS flood fill, first-touch order."""
    n_rows, n_cols = mask.shape
    labels = np.zeros((n_rows, n_cols), dtype=np.int32)
    count = 0
    for r0 in range(n_rows):
        for c0 in range(n_cols):
            if not mask[r0, c0] or labels[r0, c0]:
                continue
            count += 1
            queue = [(r0, c0)]
            labels[r0, c0] = count
            while queue:
                r, c = queue.pop()
                for dr in (-1, 0, 1):
                    for dc in (-1, 0, 1):
                        rr, cc = r + dr, c + dc
                        if (
                            0 <= rr < n_rows
                            and 0 <= cc < n_cols
                            and mask[rr, cc]
                            and not labels[rr, cc]
                        ):
                            labels[rr, cc] = count
                            queue.append((rr, cc))
    return labels, count


IMPLS = [_kernels_py]
if kernels.USING_EXTENSION:
    from satstack import _kernels

    IMPLS.append(_kernels)


@pytest.mark.parametrize("impl", IMPLS)
def test_tps_kernel_matrix_values(impl):
    ax = np.array([0.0, 1.0])
    ay = np.array([0.0, 0.0])
    k = impl.tps_kernel_matrix(ax, ay, ax, ay)
    assert k[0, 0] == 0.0 and k[1, 1] == 0.0  # phi(0) = 0
    assert k[0, 1] == pytest.approx(0.0)  # r=1 -> log 1 = 0
    bx = np.array([2.0])
    by = np.array([0.0])
    k2 = impl.tps_kernel_matrix(ax, ay, bx, by)
    assert k2[0, 0] == pytest.approx(4.0 * np.log(2.0))


@pytest.mark.skipif(not kernels.USING_EXTENSION, reason="extension not built")
def test_compiled_matches_fallback():
    rng = np.random.default_rng(9)
    from satstack import _kernels

    ax, ay = rng.normal(size=50), rng.normal(size=50)
    bx, by = rng.normal(size=70), rng.normal(size=70)
    assert np.allclose(
        _kernels.tps_kernel_matrix(ax, ay, bx, by),
        _kernels_py.tps_kernel_matrix(ax, ay, bx, by),
        rtol=0, atol=1e-12,
    )

    pv = rng.normal(size=50)
    got_c = _kernels.idw_predict(ax, ay, pv, bx, by, 2.0, 1e-12)
    got_py = _kernels_py.idw_predict(ax, ay, pv, bx, by, 2.0, 1e-12)
    assert np.allclose(got_c, got_py, rtol=0, atol=1e-12)
    # exact hits resolve identically
    hit = _kernels.idw_predict(ax, ay, pv, ax[:5], ay[:5], 2.0, 1e-12)
    hit_py = _kernels_py.idw_predict(ax, ay, pv, ax[:5], ay[:5], 2.0, 1e-12)
    assert np.array_equal(hit, pv[:5]) and np.array_equal(hit_py, pv[:5])

    for _ in range(25):
        mask = (rng.random((12, 15)) > 0.55).astype(np.uint8)
        l_c, n_c = _kernels.label_components(np.ascontiguousarray(mask))
        l_py, n_py = _kernels_py.label_components(mask)
        assert n_c == n_py
        assert np.array_equal(l_c, l_py)


@pytest.mark.parametrize("impl", IMPLS)
def test_label_components_against_flood_fill(impl):
    rng = np.random.default_rng(17)
    for _ in range(50):
        mask = (rng.random((9, 9)) > 0.5).astype(np.uint8)
        got_labels, got_n = impl.label_components(np.ascontiguousarray(mask))
        exp_labels, exp_n = _flood_fill_components(mask)
        assert got_n == exp_n
        assert np.array_equal(got_labels, exp_labels)


@pytest.mark.parametrize("impl", IMPLS)
def test_label_order_is_first_touch_row_major(impl):
    # two components; the one whose first cell comes first in row-major scan
    # gets label 1 even though the other is larger
    mask = np.array(
        [
            [0, 1, 0, 0],
            [0, 0, 0, 1],
            [0, 0, 1, 1],
            [0, 0, 1, 1],
        ],
        dtype=np.uint8,
    )
    labels, n = impl.label_components(np.ascontiguousarray(mask))
    assert n == 2
    assert labels[0, 1] == 1
    assert labels[2, 2] == 2
