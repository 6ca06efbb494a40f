import itertools

import numpy as np
import pytest

from conftest import IXI_SPACING
from mravessel.libs import BinaryMask, EmptySelection, InvalidGeometry, InvalidParameter, Volume3D
from mravessel.threshold import (
    ThresholdPair,
    hysteresis,
    relative_thresholds,
    simple_threshold,
    threshold_grid,
    union_masks,
)


def offsets(connectivity: int):
    for d in itertools.product((-1, 0, 1), repeat=3):
        n = sum(_ != 0 for _ in d)
        if n == 0:
            continue
        if connectivity == 6 and n > 1:
            continue
        if connectivity == 18 and n > 2:
            continue
        yield d


def dilate(mask: np.ndarray, connectivity: int) -> np.ndarray:
    padded = np.pad(mask, 1)
    out = mask.copy()
    nx, ny, nz = mask.shape
    for dx, dy, dz in offsets(connectivity):
        out |= padded[1 + dx:1 + dx + nx, 1 + dy:1 + dy + ny, 1 + dz:1 + dz + nz]
    return out


def dilation_oracle(data: np.ndarray, low: float, high: float, connectivity: int) -> np.ndarray:
    candidate = data >= low
    m = data >= high
    while True:
        grown = m | (dilate(m, connectivity) & candidate)
        if np.array_equal(grown, m):
            return m
        m = grown


def strip(values) -> Volume3D:
    return Volume3D(np.asarray(values, dtype=np.float64).reshape((-1, 1, 1)), IXI_SPACING)


class TestRelativeThresholds:
    @pytest.mark.parametrize('fracs,expected', [((0.57, 0.67), (57, 67)), ((0.39, 0.49), (39, 49))])
    def test_anchor_100(self, fracs, expected):
        data = np.full((10, 10, 10), 100.0)
        data[0, 0, 0] = 0.0
        th = relative_thresholds(Volume3D(data, IXI_SPACING), *fracs)
        assert th.anchor == 100.0
        assert (th.low, th.high) == pytest.approx(expected)
        assert (th.low_frac, th.high_frac) == fracs

    def test_anchor_is_percentile_of_positive_voxels(self, rng):
        data = rng.random((12, 12, 12))
        data[:6] = 0.0
        vol = Volume3D(data, IXI_SPACING)
        values = np.sort(data[data > 0])
        k = int(np.ceil(999 * values.size / 1000))
        th = relative_thresholds(vol, 0.57, 0.67)
        assert th.anchor == values[k - 1]

    @pytest.mark.parametrize('fracs', [(0.5, 0.5), (0.67, 0.57), (0.0, 0.5), (0.5, 1.1)])
    def test_bad_fractions(self, fracs):
        with pytest.raises(InvalidParameter):
            relative_thresholds(Volume3D(np.ones((3, 3, 3)), IXI_SPACING), *fracs)

    def test_empty_map(self):
        with pytest.raises(EmptySelection):
            relative_thresholds(Volume3D(np.zeros((3, 3, 3)), IXI_SPACING), 0.57, 0.67)


class TestThresholdPair:
    def test_degenerate_pair_allowed(self):
        th = ThresholdPair(3.0, 3.0)
        assert tuple(th) == (3.0, 3.0)

    @pytest.mark.parametrize('low,high', [(5.0, 4.0), (0.0, 1.0), (-1.0, 1.0), (1.0, float('inf'))])
    def test_invalid(self, low, high):
        with pytest.raises(InvalidParameter):
            ThresholdPair(low, high)


class TestHysteresis:
    def test_strip_example(self):
        out = hysteresis(strip([70, 60, 60, 40, 60]), ThresholdPair(57, 67))
        assert out.data.ravel().tolist() == [True, True, True, False, False]

    def test_all_below_low(self):
        assert hysteresis(strip([10, 20, 30]), ThresholdPair(57, 67)).count == 0

    def test_all_strong(self):
        assert hysteresis(strip([67, 80, 99]), ThresholdPair(57, 67)).count == 3

    def test_inclusive_comparisons(self):
        out = hysteresis(strip([67, 57, 56.9]), ThresholdPair(57, 67))
        assert out.data.ravel().tolist() == [True, True, False]

    def test_matches_dilation_oracle(self, rng):
        for _ in range(200):
            data = rng.random((16, 16, 16))
            low, high = np.sort(rng.uniform(0.3, 0.99, size=2))
            high = max(high, low)
            connectivity = int(rng.choice([6, 18, 26]))
            vol = Volume3D(data, IXI_SPACING)
            out = hysteresis(vol, ThresholdPair(low, high), connectivity)
            assert np.array_equal(out.data, dilation_oracle(data, low, high, connectivity))

    def test_degenerate_pair_is_simple_threshold(self, rng):
        vol = Volume3D(rng.random((10, 10, 10)), IXI_SPACING)
        assert hysteresis(vol, ThresholdPair(0.6, 0.6)) == simple_threshold(vol, 0.6)

    def test_bounds_and_monotonicity(self, rng):
        data = rng.random((14, 14, 14))
        vol = Volume3D(data, IXI_SPACING)
        base = hysteresis(vol, ThresholdPair(0.6, 0.8))
        assert np.all(data[base.data] >= 0.6)
        assert base.data[data >= 0.8].all()
        assert base.is_subset_of(hysteresis(vol, ThresholdPair(0.5, 0.8)))
        assert hysteresis(vol, ThresholdPair(0.6, 0.9)).is_subset_of(base)

    def test_connectivity_monotonicity(self, rng):
        vol = Volume3D(rng.random((12, 12, 12)), IXI_SPACING)
        th = ThresholdPair(0.55, 0.85)
        m6, m18, m26 = (hysteresis(vol, th, c) for c in (6, 18, 26))
        assert m6.is_subset_of(m18) and m18.is_subset_of(m26)

    def test_bad_connectivity(self):
        with pytest.raises(InvalidParameter):
            hysteresis(strip([70, 60]), ThresholdPair(57, 67), 4)


class TestUnion:
    def test_union_properties(self, rng):
        a, b, c = (BinaryMask(rng.random((6, 6, 6)) > 0.7, IXI_SPACING) for _ in range(3))
        empty = BinaryMask.empty(a)
        assert union_masks(a, b) == union_masks(b, a)
        assert union_masks(union_masks(a, b), c) == union_masks(a, union_masks(b, c))
        assert union_masks(a, a) == a
        assert union_masks(a, empty) == a

    def test_disjoint(self):
        p = np.zeros((3, 3, 3), dtype=bool)
        q = p.copy()
        p[0, 0, 0] = q[2, 2, 2] = True
        out = union_masks(BinaryMask(p, IXI_SPACING), BinaryMask(q, IXI_SPACING))
        assert out.count == 2 and out.data[0, 0, 0] and out.data[2, 2, 2]

    def test_geometry_mismatch(self):
        a = BinaryMask(np.zeros((3, 3, 3)), IXI_SPACING)
        b = BinaryMask(np.zeros((3, 3, 4)), IXI_SPACING)
        with pytest.raises(InvalidGeometry):
            union_masks(a, b)


class TestThresholdGrid:
    def test_low_scale_grid(self):
        assert threshold_grid((0.57, 0.67)) == [
            (0.77, 0.87),
            (0.67, 0.77),
            (0.57, 0.67),
            (0.47, 0.57),
            (0.37, 0.47),
        ]

    def test_high_scale_grid(self):
        grid = threshold_grid((0.39, 0.49))
        assert grid[0] == (0.59, 0.69)
        assert grid[-1] == (0.19, 0.29)

    def test_pairs_leaving_range_are_dropped(self):
        assert threshold_grid((0.85, 0.95), steps_each_side=1) == [(0.85, 0.95), (0.75, 0.85)]

    @pytest.mark.parametrize('steps,step', [(-1, 0.1), (2, 0.0)])
    def test_invalid(self, steps, step):
        with pytest.raises(InvalidParameter):
            threshold_grid((0.57, 0.67), steps, step)
