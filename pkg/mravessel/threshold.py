# -*- coding: utf-8 -*-
"""Threshold

以99.9百分位为锚点的滞后阈值(hysteresis)分割，以及各尺度掩膜的并集。

    强体素 S = {v : I(v) >= HTV}
    弱体素 W = {v : LTV <= I(v) < HTV}
    输出   = S ∪ {w ∈ W : w 经 S ∪ W 可达 S}

两个阈值均使用 >= 比较。
"""

import math

import numpy as np
from scipy import ndimage

from mravessel.libs import (
    BinaryMask,
    EmptySelection,
    InvalidParameter,
    Volume3D,
    check_same_geometry,
    neighbourhood,
    percentile,
)
from mravessel.utils import get_logger

__all__ = [
    'ThresholdPair',
    'hysteresis',
    'relative_thresholds',
    'simple_threshold',
    'threshold_grid',
    'union_masks',
]

mod_logger = get_logger('Threshold', log_level=20)


def check_fractions(low_frac: float, high_frac: float):
    if not (0 < low_frac < high_frac <= 1):
        raise InvalidParameter(f"Expected 0 < low_frac < high_frac <= 1, got ({low_frac}, {high_frac})")


class ThresholdPair:
    """Absolute low/high hysteresis thresholds (LTV/HTV)"""

    __slots__ = ('low', 'high', 'low_frac', 'high_frac', 'anchor')

    def __init__(
        self,
        low: float,
        high: float,
        low_frac: float | None = None,
        high_frac: float | None = None,
        *,
        anchor: float | None = None,
    ):
        """

        :param low: LTV, 绝对强度
        :param high: HTV, 绝对强度
        :param low_frac: LTV 相对锚点的比例
        :param high_frac: HTV 相对锚点的比例
        :param anchor: 锚点强度(99.9百分位)
        """
        low, high = float(low), float(high)
        if not (math.isfinite(low) and math.isfinite(high) and 0 < low <= high):
            raise InvalidParameter(f"Expected 0 < low <= high, got ({low}, {high})")
        if low_frac is not None or high_frac is not None:
            check_fractions(low_frac, high_frac)
        self.low = low
        self.high = high
        self.low_frac = low_frac
        self.high_frac = high_frac
        self.anchor = anchor

    def __repr__(self):
        return f"<ThresholdPair LTV={self.low:.6g} HTV={self.high:.6g}>"

    def __iter__(self):
        yield self.low
        yield self.high


def relative_thresholds(
    vmap: Volume3D,
    low_frac: float,
    high_frac: float,
    *,
    p: float = 99.9,
    restrict_to_positive: bool = True,
) -> ThresholdPair:
    """LTV/HTV = 比例 * 第p百分位强度

    :raise EmptySelection: 没有可用的正值体素
    :raise InvalidParameter: 比例不满足 0 < low < high <= 1
    """
    check_fractions(low_frac, high_frac)
    anchor = percentile(vmap, p, restrict_to_positive)
    if anchor <= 0:
        raise EmptySelection(f"Percentile anchor must be positive, got {anchor}")
    th = ThresholdPair(low_frac * anchor, high_frac * anchor, low_frac, high_frac, anchor=anchor)
    mod_logger.debug(f"anchor p{p}={anchor:.6g} -> {th}")
    return th


def hysteresis(vmap: Volume3D, th: ThresholdPair, connectivity: int = 26) -> BinaryMask:
    """滞后阈值

    对候选集合 S ∪ W 做连通分量标记，保留包含强体素的分量，
    与从所有强体素出发的广度优先填充结果相同。
    """
    structure = neighbourhood(connectivity)
    data = vmap.data
    candidate = data >= th.low
    strong = data >= th.high

    labels, n = ndimage.label(candidate, structure=structure)
    keep = np.zeros(n + 1, dtype=bool)
    keep[labels[strong]] = True
    keep[0] = False
    mask = keep[labels]
    mod_logger.debug(f"hysteresis {th}: strong={int(strong.sum())}, kept={int(mask.sum())}")
    return BinaryMask.like(vmap, mask)


def simple_threshold(vmap: Volume3D, t: float) -> BinaryMask:
    """单阈值分割 I(v) >= t"""
    return BinaryMask.like(vmap, vmap.data >= t)


def union_masks(a: BinaryMask, b: BinaryMask) -> BinaryMask:
    check_same_geometry(a, b)
    return BinaryMask.like(a, a.data | b.data)


def threshold_grid(
    center: tuple[float, float],
    steps_each_side: int = 2,
    step: float = 0.10,
) -> list[tuple[float, float]]:
    """以center为中心，步长step上下各取steps_each_side组比例，由高到低排列

    例如 (0.57, 0.67) -> (0.77, 0.87), (0.67, 0.77), (0.57, 0.67), (0.47, 0.57), (0.37, 0.47)
    """
    if steps_each_side < 0 or not step > 0:
        raise InvalidParameter(f"Expected steps >= 0 and step > 0, got ({steps_each_side}, {step})")
    low, high = center
    check_fractions(low, high)
    pairs = []
    for k in range(steps_each_side, -steps_each_side - 1, -1):
        pair = (round(low + k * step, 10), round(high + k * step, 10))
        if 0 < pair[0] < pair[1] <= 1:
            pairs.append(pair)
    return pairs
