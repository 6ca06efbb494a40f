from collections import deque

import numpy as np
import pytest

from conftest import IXI_SPACING
from mravessel.components import filter_small, label_components, remove_small_components
from mravessel.libs import BinaryMask, InvalidParameter

from test_threshold import offsets


def bfs_partition(mask: np.ndarray, connectivity: int) -> set[frozenset]:
    seen = np.zeros_like(mask, dtype=bool)
    steps = list(offsets(connectivity))
    parts = set()
    for start in zip(*np.nonzero(mask)):
        if seen[start]:
            continue
        seen[start] = True
        queue, part = deque([start]), []
        while queue:
            v = queue.popleft()
            part.append(v)
            for d in steps:
                w = tuple(a + b for a, b in zip(v, d))
                if all(0 <= w[i] < mask.shape[i] for i in range(3)) and mask[w] and not seen[w]:
                    seen[w] = True
                    queue.append(w)
        parts.add(frozenset(part))
    return parts


def label_partition(labels: np.ndarray) -> set[frozenset]:
    return {
        frozenset(zip(*((int(_) for _ in idx) for idx in np.nonzero(labels == k))))
        for k in range(1, int(labels.max()) + 1)
    }


def cluster_mask(sizes, dims=(64, 10, 10)) -> BinaryMask:
    """Separated straight runs along x with the given voxel counts"""
    data = np.zeros(dims, dtype=bool)
    for row, size in enumerate(sizes):
        y, z = 1 + 2 * (row % 4), 1 + 2 * (row // 4)
        data[:size, y, z] = True
    return BinaryMask(data, IXI_SPACING)


class TestLabel:
    def test_opposite_corners(self):
        data = np.zeros((4, 4, 4), dtype=bool)
        data[0, 0, 0] = data[3, 3, 3] = True
        lab = label_components(BinaryMask(data, IXI_SPACING))
        assert lab.n_components == 2
        assert lab.counts.tolist() == [1, 1]

    def test_full_mask(self):
        lab = label_components(BinaryMask(np.ones((5, 4, 3)), IXI_SPACING))
        assert lab.n_components == 1
        assert lab.counts.tolist() == [60]

    def test_empty_mask(self):
        lab = label_components(BinaryMask(np.zeros((3, 3, 3)), IXI_SPACING))
        assert len(lab) == 0
        assert lab.mask().count == 0

    @pytest.mark.parametrize('connectivity', [6, 18, 26])
    def test_matches_bfs_oracle(self, rng, connectivity):
        for _ in range(200 if connectivity == 26 else 40):
            data = rng.random((16, 16, 16)) < rng.uniform(0.05, 0.35)
            lab = label_components(BinaryMask(data, IXI_SPACING), connectivity)
            assert label_partition(lab.labels) == bfs_partition(data, connectivity)
            assert int(lab.counts.sum()) == int(data.sum())

    def test_labels_follow_scan_order(self, rng):
        data = rng.random((12, 12, 12)) < 0.2
        labels = label_components(BinaryMask(data, IXI_SPACING), 6).labels
        flat = labels.ravel()
        firsts = [int(np.flatnonzero(flat == k)[0]) for k in range(1, int(flat.max()) + 1)]
        assert firsts == sorted(firsts)

    def test_dense_labels(self, rng):
        data = rng.random((10, 10, 10)) < 0.3
        lab = label_components(BinaryMask(data, IXI_SPACING))
        assert set(np.unique(lab.labels).tolist()) == set(range(lab.n_components + 1))

    @pytest.mark.parametrize('connectivity', [6, 18, 26])
    def test_invariant_under_transpose_and_flip(self, rng, connectivity):
        data = rng.random((12, 10, 8)) < 0.25
        expected = label_partition(label_components(BinaryMask(data, IXI_SPACING), connectivity).labels)
        swapped = label_components(BinaryMask(data.transpose(2, 1, 0), IXI_SPACING[::-1]), connectivity)
        assert label_partition(swapped.labels.transpose(2, 1, 0)) == expected
        flipped = label_components(BinaryMask(np.flip(data, axis=0), IXI_SPACING), connectivity)
        assert label_partition(np.flip(flipped.labels, axis=0)) == expected

    def test_connectivity_monotonicity(self, rng):
        data = rng.random((14, 14, 14)) < 0.25
        mask = BinaryMask(data, IXI_SPACING)
        assert label_components(mask, 26).n_components <= label_components(mask, 6).n_components


class TestFilterSmall:
    def test_ixi_cutoff(self):
        mask = cluster_mask([56, 57])
        lab = label_components(mask)
        assert lab.volumes_mm3.tolist() == pytest.approx([56 * 0.17672, 57 * 0.17672])
        out = filter_small(lab, 10.0, 0.17672)
        assert out.count == 57
        assert out.data[:57, 3, 1].all()
        assert not out.data[:, 1, 1].any()

    def test_zero_cutoff_keeps_everything(self, rng):
        mask = BinaryMask(rng.random((10, 10, 10)) < 0.2, IXI_SPACING)
        assert filter_small(label_components(mask), 0.0) == mask

    def test_single_small_component(self):
        assert filter_small(label_components(cluster_mask([5])), 10.0).count == 0

    def test_properties(self, rng):
        mask = BinaryMask(rng.random((16, 16, 16)) < 0.22, IXI_SPACING)
        lab = label_components(mask)
        out = filter_small(lab, 1.0)
        assert out.is_subset_of(mask)
        for k in range(1, lab.n_components + 1):
            component = lab.labels == k
            kept = out.data[component]
            assert kept.all() or not kept.any()
            assert bool(kept.all()) == (lab.counts[k - 1] * 0.17672 >= 1.0)
        assert filter_small(label_components(out), 1.0) == out

    def test_remove_small_components(self):
        out = remove_small_components(cluster_mask([3, 40, 57]), 10.0)
        assert out.count == 57

    def test_invalid(self):
        lab = label_components(cluster_mask([3]))
        with pytest.raises(InvalidParameter):
            filter_small(lab, -1.0)
        with pytest.raises(InvalidParameter):
            filter_small(lab, 10.0, 0.0)
