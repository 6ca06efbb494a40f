# -*- coding: utf-8 -*-
"""Phantom

合成管道体模(含真值)与自动化评价指标(dice/敏感度/假阳性比例/连通分量数)。

体模强度：

    I(x) = background + Σ contrast·exp(-d²/(2·(r/2)²)) + noise_sigma·N(0, 1)

其中 d 为体素中心到管道中心线的距离(mm)。真值为 d <= r 的体素。
噪声由 PCG64 生成器按体素位置顺序(C顺序)填充，给定种子结果确定。
"""

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Final, NamedTuple, Sequence

import numpy as np

from mravessel.components import label_components
from mravessel.libs import (
    BinaryMask,
    EvalReport,
    InvalidPhantom,
    TubeScores,
    Volume3D,
    check_same_geometry,
)
from mravessel.utils import get_logger

try:
    import ujson as json
except ImportError:
    import json

__all__ = [
    'RNG_ALGORITHM',
    'ArcPath',
    'Phantom',
    'PhantomSpec',
    'SpeckSpec',
    'StraightPath',
    'TubeMask',
    'TubeSpec',
    'dice',
    'evaluate',
    'generate_phantom',
    'reference_phantom_spec',
]

mod_logger = get_logger('Phantom', log_level=20)

RNG_ALGORITHM: Final[str] = 'PCG64'
# 中心线采样点数，用于越界检查
_PATH_SAMPLES: Final[int] = 65
_BOUNDS_EPS: Final[float] = 1e-9


def _vec3(value, name: str) -> tuple[float, float, float]:
    try:
        v = tuple(float(_) for _ in value)
    except (TypeError, ValueError):
        raise InvalidPhantom(f"{name}: expected three numbers, got {value!r}")
    if len(v) != 3 or not all(math.isfinite(_) for _ in v):
        raise InvalidPhantom(f"{name}: expected three finite numbers, got {value!r}")
    return v


def _grid(dims, spacing):
    """体素中心的物理坐标(开放网格)"""
    return [
        (np.arange(n, dtype=np.float64) * s).reshape([-1 if a == i else 1 for a in range(3)])
        for i, (n, s) in enumerate(zip(dims, spacing))
    ]


@dataclass(frozen=True)
class StraightPath:
    """Straight centerline segment, endpoints in mm"""

    start: tuple[float, float, float]
    end: tuple[float, float, float]

    def __post_init__(self):
        object.__setattr__(self, 'start', _vec3(self.start, 'start'))
        object.__setattr__(self, 'end', _vec3(self.end, 'end'))
        if self.length <= 0:
            raise InvalidPhantom("Straight path needs distinct endpoints.")

    @property
    def length(self) -> float:
        return math.dist(self.start, self.end)

    def sample(self, n: int = _PATH_SAMPLES) -> np.ndarray:
        t = np.linspace(0.0, 1.0, n)[:, None]
        a, b = np.array(self.start), np.array(self.end)
        return a + t * (b - a)

    def distance2(self, x, y, z) -> np.ndarray:
        a = self.start
        d = [e - s for s, e in zip(self.start, self.end)]
        t = ((x - a[0]) * d[0] + (y - a[1]) * d[1] + (z - a[2]) * d[2]) / (self.length ** 2)
        t = np.clip(t, 0.0, 1.0)
        return (x - a[0] - t * d[0]) ** 2 + (y - a[1] - t * d[1]) ** 2 + (z - a[2] - t * d[2]) ** 2

    def to_dict(self) -> dict:
        return {'type': 'straight', 'start': list(self.start), 'end': list(self.end)}


@dataclass(frozen=True)
class ArcPath:
    """Circular arc centerline

    :param center: 圆心, mm
    :param curve_radius: 圆弧半径, mm
    :param normal: 圆弧所在平面的法向
    :param start_angle: 起始角, rad
    :param sweep: 圆心角, rad, (0, 2π]
    """

    center: tuple[float, float, float]
    curve_radius: float
    normal: tuple[float, float, float] = (0.0, 0.0, 1.0)
    start_angle: float = 0.0
    sweep: float = math.pi

    def __post_init__(self):
        object.__setattr__(self, 'center', _vec3(self.center, 'center'))
        object.__setattr__(self, 'normal', _vec3(self.normal, 'normal'))
        if not self.curve_radius > 0:
            raise InvalidPhantom(f"curve_radius must be > 0, got {self.curve_radius}")
        if not 0 < self.sweep <= 2 * math.pi:
            raise InvalidPhantom(f"sweep must be in (0, 2π], got {self.sweep}")
        if np.linalg.norm(self.normal) == 0:
            raise InvalidPhantom("normal must be non-zero")

    def basis(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        n = np.array(self.normal) / np.linalg.norm(self.normal)
        helper = np.eye(3)[int(np.argmin(np.abs(n)))]
        u = np.cross(n, helper)
        u /= np.linalg.norm(u)
        v = np.cross(n, u)
        return u, v, n

    def sample(self, n: int = _PATH_SAMPLES) -> np.ndarray:
        u, v, _ = self.basis()
        theta = self.start_angle + np.linspace(0.0, self.sweep, n)[:, None]
        return np.array(self.center) + self.curve_radius * (np.cos(theta) * u + np.sin(theta) * v)

    def distance2(self, x, y, z) -> np.ndarray:
        u, v, n = self.basis()
        c = self.center
        wx, wy, wz = x - c[0], y - c[1], z - c[2]
        a = wx * u[0] + wy * u[1] + wz * u[2]
        b = wx * v[0] + wy * v[1] + wz * v[2]
        h = wx * n[0] + wy * n[1] + wz * n[2]
        rho = np.sqrt(a * a + b * b)
        on_circle = (rho - self.curve_radius) ** 2 + h * h

        rel = np.mod(np.arctan2(b, a) - self.start_angle, 2 * math.pi)
        ends = self.sample(2)
        to_ends = np.minimum(
            (x - ends[0, 0]) ** 2 + (y - ends[0, 1]) ** 2 + (z - ends[0, 2]) ** 2,
            (x - ends[1, 0]) ** 2 + (y - ends[1, 1]) ** 2 + (z - ends[1, 2]) ** 2,
        )
        return np.where(rel <= self.sweep, on_circle, to_ends)

    def to_dict(self) -> dict:
        return {
            'type': 'arc',
            'center': list(self.center),
            'curve_radius': self.curve_radius,
            'normal': list(self.normal),
            'start_angle': self.start_angle,
            'sweep': self.sweep,
        }


@dataclass(frozen=True)
class TubeSpec:
    path: StraightPath | ArcPath
    radius_mm: float
    contrast: float = 1.0

    def __post_init__(self):
        if not self.radius_mm > 0:
            raise InvalidPhantom(f"Tube radius must be > 0, got {self.radius_mm}")
        if not self.contrast > 0:
            raise InvalidPhantom(f"Tube contrast must be > 0, got {self.contrast}")

    def to_dict(self) -> dict:
        return {'path': self.path.to_dict(), 'radius_mm': self.radius_mm, 'contrast': self.contrast}


@dataclass(frozen=True)
class SpeckSpec:
    """Small bright blob, not part of the ground truth"""

    center: tuple[float, float, float]
    radius_mm: float
    contrast: float

    def __post_init__(self):
        object.__setattr__(self, 'center', _vec3(self.center, 'center'))
        if not (self.radius_mm > 0 and self.contrast > 0):
            raise InvalidPhantom(f"Speck radius and contrast must be > 0, got {self}")

    def to_dict(self) -> dict:
        return {'center': list(self.center), 'radius_mm': self.radius_mm, 'contrast': self.contrast}


def _path_from_dict(d: dict) -> StraightPath | ArcPath:
    kind = d.get('type', 'straight')
    if kind == 'straight':
        return StraightPath(d['start'], d['end'])
    if kind == 'arc':
        return ArcPath(
            d['center'],
            float(d['curve_radius']),
            d.get('normal', (0.0, 0.0, 1.0)),
            float(d.get('start_angle', 0.0)),
            float(d.get('sweep', math.pi)),
        )
    raise InvalidPhantom(f"Unknown path type {kind!r}")


@dataclass(frozen=True)
class PhantomSpec:
    dims: tuple[int, int, int]
    spacing: tuple[float, float, float]
    tubes: tuple[TubeSpec, ...] = ()
    background: float = 0.0
    noise_sigma: float = 0.0
    rng_seed: int = 0
    specks: tuple[SpeckSpec, ...] = field(default=())

    def __post_init__(self):
        dims = tuple(int(_) for _ in self.dims)
        if len(dims) != 3 or min(dims) <= 0:
            raise InvalidPhantom(f"dims must be three positive ints, got {self.dims}")
        spacing = _vec3(self.spacing, 'spacing')
        if min(spacing) <= 0:
            raise InvalidPhantom(f"spacing must be positive, got {spacing}")
        if not self.noise_sigma >= 0:
            raise InvalidPhantom(f"noise_sigma must be >= 0, got {self.noise_sigma}")
        object.__setattr__(self, 'dims', dims)
        object.__setattr__(self, 'spacing', spacing)
        object.__setattr__(self, 'tubes', tuple(self.tubes))
        object.__setattr__(self, 'specks', tuple(self.specks))

        upper = np.array([(n - 1) * s for n, s in zip(dims, spacing)])
        for i, tube in enumerate(self.tubes):
            points = tube.path.sample()
            if (points < -_BOUNDS_EPS).any() or (points > upper + _BOUNDS_EPS).any():
                raise InvalidPhantom(f"Tube {i} leaves the volume bounds [0, {upper.tolist()}] mm")
        for i, speck in enumerate(self.specks):
            point = np.array(speck.center)
            if (point < -_BOUNDS_EPS).any() or (point > upper + _BOUNDS_EPS).any():
                raise InvalidPhantom(f"Speck {i} lies outside the volume bounds")

    @classmethod
    def from_dict(cls, d: dict) -> 'PhantomSpec':
        try:
            return cls(
                dims=d['dims'],
                spacing=d['spacing'],
                tubes=[
                    TubeSpec(_path_from_dict(t['path']), float(t['radius_mm']), float(t.get('contrast', 1.0)))
                    for t in d.get('tubes', [])
                ],
                background=float(d.get('background', 0.0)),
                noise_sigma=float(d.get('noise_sigma', 0.0)),
                rng_seed=int(d.get('rng_seed', 0)),
                specks=[
                    SpeckSpec(s['center'], float(s['radius_mm']), float(s['contrast']))
                    for s in d.get('specks', [])
                ],
            )
        except (KeyError, TypeError, ValueError, AttributeError) as e:
            raise InvalidPhantom(f"Malformed phantom spec: {e!r}")

    def to_dict(self) -> dict:
        return {
            'dims': list(self.dims),
            'spacing': list(self.spacing),
            'background': self.background,
            'noise_sigma': self.noise_sigma,
            'rng_seed': self.rng_seed,
            'tubes': [_.to_dict() for _ in self.tubes],
            'specks': [_.to_dict() for _ in self.specks],
        }

    @classmethod
    def from_file(cls, path: str | Path) -> 'PhantomSpec':
        try:
            d = json.loads(Path(path).read_text(encoding='utf-8'))
        except ValueError as e:
            raise InvalidPhantom(f"'{path}' is not valid JSON: {e}")
        if not isinstance(d, dict):
            raise InvalidPhantom(f"'{path}' must contain a JSON object")
        return cls.from_dict(d)

    def to_file(self, path: str | Path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2), encoding='utf-8')


class TubeMask(NamedTuple):
    """Ground truth of one tube plus the region its per-tube score is measured in"""

    tube: TubeSpec
    mask: BinaryMask
    territory: BinaryMask | None = None


class Phantom(NamedTuple):
    volume: Volume3D
    ground_truth: BinaryMask
    tube_masks: list[TubeMask]


def generate_phantom(spec: PhantomSpec) -> Phantom:
    """生成体模、总真值和每根管道的真值

    每根管道的评价区域(territory)为到其中心线 2r 以内、且不属于其他管道真值的体素。
    """
    x, y, z = _grid(spec.dims, spec.spacing)
    data = np.full(spec.dims, float(spec.background), dtype=np.float64)

    gt = np.zeros(spec.dims, dtype=bool)
    masks, near = [], []
    for tube in spec.tubes:
        d2 = np.broadcast_to(tube.path.distance2(x, y, z), spec.dims)
        scale = tube.radius_mm / 2.0
        data += tube.contrast * np.exp(-d2 / (2.0 * scale * scale))
        inside = d2 <= tube.radius_mm ** 2
        gt |= inside
        masks.append(inside)
        near.append(d2 <= (2.0 * tube.radius_mm) ** 2)

    for speck in spec.specks:
        c = speck.center
        d2 = (x - c[0]) ** 2 + (y - c[1]) ** 2 + (z - c[2]) ** 2
        scale = speck.radius_mm / 2.0
        data += speck.contrast * np.exp(-d2 / (2.0 * scale * scale))

    if spec.noise_sigma > 0:
        rng = np.random.Generator(np.random.PCG64(spec.rng_seed))
        data += spec.noise_sigma * rng.standard_normal(spec.dims)

    volume = Volume3D(data, spec.spacing)
    tube_masks = []
    for i, tube in enumerate(spec.tubes):
        others = np.zeros(spec.dims, dtype=bool)
        for j, m in enumerate(masks):
            if j != i:
                others |= m
        tube_masks.append(
            TubeMask(
                tube,
                BinaryMask.like(volume, masks[i]),
                BinaryMask.like(volume, near[i] & ~others),
            )
        )
    mod_logger.debug(f"phantom {spec.dims}: {len(spec.tubes)} tubes, gt voxels={int(gt.sum())}")
    return Phantom(volume, BinaryMask.like(volume, gt), tube_masks)


def dice(pred: BinaryMask, gt: BinaryMask) -> float:
    """2|P∩G| / (|P|+|G|)，两者均为空时为1"""
    check_same_geometry(pred, gt)
    p, g = pred.count, gt.count
    if p + g == 0:
        return 1.0
    return 2.0 * int(np.count_nonzero(pred.data & gt.data)) / (p + g)


def _tube_groups(tube_masks: Sequence[TubeMask]) -> dict[str, tuple[np.ndarray, np.ndarray | None]]:
    """同一半径的管道合并评价"""
    groups = {}
    for tm in tube_masks:
        key = TubeScores.key(tm.tube.radius_mm)
        territory = None if tm.territory is None else tm.territory.data
        if key in groups:
            mask, region = groups[key]
            if region is not None and territory is not None:
                region = region | territory
            else:
                region = None
            groups[key] = (mask | tm.mask.data, region)
        else:
            groups[key] = (tm.mask.data, territory)
    return groups


def evaluate(
    pred: BinaryMask,
    gt: BinaryMask,
    tube_masks: Sequence[TubeMask] = (),
    *,
    connectivity: int = 26,
    name: str | None = None,
    rng_algorithm: str | None = RNG_ALGORITHM,
) -> EvalReport:
    """计算全部评价指标

    :param pred: 预测掩膜
    :param gt: 真值
    :param tube_masks: 每根管道的真值；带territory时只在该区域内统计预测
    :param connectivity: 统计连通分量数所用的连通性
    :param name: 报告名称
    :param rng_algorithm: 体模噪声所用的随机数算法
    :return:
    """
    check_same_geometry(pred, gt)
    p, g = pred.count, gt.count
    tp = int(np.count_nonzero(pred.data & gt.data))
    fp = p - tp

    tube_dice = TubeScores()
    for key, (mask, region) in _tube_groups(tube_masks).items():
        check_same_geometry(pred, BinaryMask.like(pred, mask))
        local = pred.data if region is None else pred.data & region
        tube_dice[key] = dice(BinaryMask.like(pred, local), BinaryMask.like(pred, mask))

    return EvalReport(
        dice=dice(pred, gt),
        sensitivity=tp / g if g else 1.0,
        false_positive_voxel_fraction=fp / p if p else 0.0,
        component_count_pred=label_components(pred, connectivity).n_components,
        component_count_gt=label_components(gt, connectivity).n_components,
        tube_dice=tube_dice,
        name=name,
        rng_algorithm=rng_algorithm,
    )


def reference_phantom_spec(
    noise_sigma: float = 0.1,
    rng_seed: int = 0,
    *,
    with_specks: bool = False,
    contrast: float = 1.0,
) -> PhantomSpec:
    """128³ 参考体模，spacing (0.47, 0.47, 0.8) mm，半径1~3mm的直管与弧形管

    with_specks 时加入三个半径0.5mm的高亮斑点(不计入真值)。
    """
    tubes = [
        TubeSpec(StraightPath((15.0, 15.0, 5.0), (15.0, 15.0, 96.0)), 3.0, contrast),
        TubeSpec(StraightPath((40.0, 10.0, 10.0), (50.0, 45.0, 90.0)), 1.0, contrast),
        TubeSpec(ArcPath((32.0, 40.0, 50.0), 12.0, (1.0, 0.0, 0.0), 0.0, math.pi), 2.0, contrast),
        TubeSpec(StraightPath((5.0, 52.0, 20.0), (55.0, 52.0, 20.0)), 1.5, contrast),
    ]
    specks = []
    if with_specks:
        specks = [
            SpeckSpec((50.0, 25.0, 80.0), 0.5, 4.0 * contrast),
            SpeckSpec((25.0, 35.0, 15.0), 0.5, 4.0 * contrast),
            SpeckSpec((10.0, 45.0, 70.0), 0.5, 4.0 * contrast),
        ]
    return PhantomSpec(
        dims=(128, 128, 128),
        spacing=(0.47, 0.47, 0.8),
        tubes=tubes,
        noise_sigma=noise_sigma,
        rng_seed=rng_seed,
        specks=specks,
    )
