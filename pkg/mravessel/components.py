# -*- coding: utf-8 -*-
"""Components

三维连通分量标记，去除物理体积小于阈值(默认10mm³)的团簇。
体积恰好等于阈值的团簇保留。
"""

import math

import numpy as np
from scipy import ndimage

from mravessel.libs import (
    BinaryMask,
    InvalidParameter,
    Orientation,
    neighbourhood,
    voxel_volume,
)
from mravessel.utils import get_logger

__all__ = [
    'LabeledComponents',
    'filter_small',
    'label_components',
    'remove_small_components',
]

mod_logger = get_logger('Components', log_level=20)


class LabeledComponents:
    """Dense labels 1..K (0 = background) with per-label sizes"""

    __slots__ = ('labels', 'counts', 'volumes_mm3', 'connectivity', 'spacing', 'orientation')

    def __init__(
        self,
        labels: np.ndarray,
        counts: np.ndarray,
        spacing,
        orientation: Orientation | None = None,
        *,
        connectivity: int = 26,
    ):
        """

        :param labels: 整型标记体
        :param counts: counts[i] 为标记 i+1 的体素数
        :param spacing:
        :param orientation:
        :param connectivity:
        """
        self.labels = labels
        self.counts = np.asarray(counts, dtype=np.int64)
        self.spacing = tuple(spacing)
        self.orientation = orientation
        self.connectivity = connectivity
        self.volumes_mm3 = self.counts * math.prod(self.spacing)

    def __repr__(self):
        return f"<LabeledComponents K={self.n_components} connectivity={self.connectivity}>"

    def __len__(self):
        return self.n_components

    @property
    def n_components(self) -> int:
        return int(self.counts.size)

    def mask(self, keep: np.ndarray | None = None) -> BinaryMask:
        """keep[i] 表示是否保留标记 i+1，默认全部保留"""
        if keep is None:
            data = self.labels > 0
        else:
            lut = np.concatenate([[False], np.asarray(keep, dtype=bool)])
            data = lut[self.labels]
        return BinaryMask(data, self.spacing, self.orientation)


def label_components(mask: BinaryMask, connectivity: int = 26) -> LabeledComponents:
    """连通分量标记，标记按光栅扫描中首次出现的顺序重新编号"""
    structure = neighbourhood(connectivity)
    labels, n = ndimage.label(mask.data, structure=structure)

    if n:
        # 每个标记首次出现的位置
        uniq, first = np.unique(labels.ravel(), return_index=True)
        fg = uniq > 0
        order = uniq[fg][np.argsort(first[fg], kind='stable')]
        lut = np.zeros(n + 1, dtype=labels.dtype)
        lut[order] = np.arange(1, n + 1, dtype=labels.dtype)
        labels = lut[labels]
        counts = np.bincount(labels.ravel(), minlength=n + 1)[1:]
    else:
        counts = np.zeros(0, dtype=np.int64)

    mod_logger.debug(f"label_components: {n} components ({connectivity}-connectivity)")
    return LabeledComponents(labels, counts, mask.spacing, mask.orientation, connectivity=connectivity)


def filter_small(lab: LabeledComponents, min_mm3: float, voxel_mm3: float | None = None) -> BinaryMask:
    """保留 count * voxel_mm3 >= min_mm3 的分量

    :param lab:
    :param min_mm3: 体积阈值, mm³
    :param voxel_mm3: 单个体素体积，默认由spacing计算
    :return:
    """
    if voxel_mm3 is None:
        voxel_mm3 = math.prod(lab.spacing)
    if not voxel_mm3 > 0:
        raise InvalidParameter(f"voxel_mm3 must be > 0, got {voxel_mm3}")
    if not min_mm3 >= 0:
        raise InvalidParameter(f"min_mm3 must be >= 0, got {min_mm3}")

    keep = lab.counts * voxel_mm3 >= min_mm3
    mod_logger.debug(f"filter_small {min_mm3}mm³: kept {int(keep.sum())}/{lab.n_components}")
    return lab.mask(keep)


def remove_small_components(mask: BinaryMask, min_mm3: float, connectivity: int = 26) -> BinaryMask:
    return filter_small(label_components(mask, connectivity), min_mm3, voxel_volume(mask))
