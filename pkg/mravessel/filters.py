# -*- coding: utf-8 -*-
"""Filters

基于Hessian矩阵特征值的三维线状结构增强(vesselness)：

    vol --gaussian_smooth(σ)--> f --中心差分--> H (6个通道)
        --eig_sym3--> λ1 ≥ λ2 ≥ λ3 --sato_vesselness--> v ≥ 0

σ以mm为单位，按各轴spacing换算为体素单位(各向同性于mm，各向异性于体素)。
所有边界均采用镜像(mirror, 不重复边界体素)处理。
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Final, Iterator

import numpy as np
from scipy import ndimage

from mravessel.libs import InvalidGeometry, InvalidParameter, Orientation, Volume3D
from mravessel.utils import get_logger

__all__ = [
    'HessianField',
    'EigenTriple',
    'SatoParams',
    'VesselnessMap',
    'eig_sym3',
    'eig_sym3_matrix',
    'gaussian_kernel',
    'gaussian_smooth',
    'hessian',
    'sato_vesselness',
    'vessel_enhance',
]

mod_logger = get_logger('Filters', log_level=20)

# 高斯核截断半径 ceil(4σ)
KERNEL_TRUNCATE: Final[float] = 4.0
# 每块处理的体素数，与线程数无关，保证分块方式固定
CHUNK_SIZE: Final[int] = 1 << 18
# 低于 峰值*VESSELNESS_FLOOR 的响应视为平坦区域的舍入残差
VESSELNESS_FLOOR: Final[float] = 1e-12

# 解析法退化判据
_DEGENERATE_RTOL: Final[float] = 1e-24
_ACOS_GUARD: Final[float] = 1e-10
# Jacobi 迭代
JACOBI_MAX_SWEEPS: Final[int] = 50
_JACOBI_TOL: Final[float] = 1e-30
_JACOBI_PAIRS: Final[tuple] = ((0, 1), (0, 2), (1, 2))

_FIRST_DIFF = np.array([-0.5, 0.0, 0.5])
_SECOND_DIFF = np.array([1.0, -2.0, 1.0])


def _check_sigma(sigma_mm: float) -> float:
    try:
        sigma_mm = float(sigma_mm)
    except (TypeError, ValueError):
        raise InvalidParameter(f"Expected sigma in mm, got {sigma_mm!r}")
    if not (math.isfinite(sigma_mm) and sigma_mm > 0):
        raise InvalidParameter(f"sigma must be > 0, got {sigma_mm}")
    return sigma_mm


def gaussian_kernel(sigma_vox: float) -> np.ndarray:
    """采样的归一化高斯核，截断于 ceil(4σ)，重新归一化使和为1"""
    if not (math.isfinite(sigma_vox) and sigma_vox > 0):
        raise InvalidParameter(f"sigma must be > 0, got {sigma_vox}")
    radius = math.ceil(KERNEL_TRUNCATE * sigma_vox)
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    kernel = np.exp(-0.5 * (x / sigma_vox) ** 2)
    return kernel / kernel.sum()


def gaussian_smooth(vol: Volume3D, sigma_mm: float) -> Volume3D:
    """可分离高斯平滑，σ_axis = sigma_mm / spacing_axis"""
    sigma_mm = _check_sigma(sigma_mm)
    out = vol.data
    for axis, step in enumerate(vol.spacing):
        out = ndimage.correlate1d(out, gaussian_kernel(sigma_mm / step), axis=axis, mode='mirror')
    return vol.with_data(out)


class HessianField:
    """Six channels of the symmetric Hessian, intensity·mm⁻²"""

    __slots__ = ('hxx', 'hyy', 'hzz', 'hxy', 'hxz', 'hyz', 'spacing', 'orientation')

    def __init__(self, hxx, hyy, hzz, hxy, hxz, hyz, spacing, orientation: Orientation | None = None):
        channels = [np.asarray(_, dtype=np.float64) for _ in (hxx, hyy, hzz, hxy, hxz, hyz)]
        shape = channels[0].shape
        assert all(_.shape == shape for _ in channels), "Hessian channels differ in shape"
        if not all(np.isfinite(_).all() for _ in channels):
            raise InvalidParameter("Hessian contains non-finite values.")
        self.hxx, self.hyy, self.hzz, self.hxy, self.hxz, self.hyz = channels
        self.spacing = tuple(spacing)
        self.orientation = orientation

    def __repr__(self):
        return f"<HessianField {self.hxx.shape}>"

    def channels(self) -> tuple[np.ndarray, ...]:
        return self.hxx, self.hyy, self.hzz, self.hxy, self.hxz, self.hyz

    def matrix(self, index) -> np.ndarray:
        """某个体素处的3x3矩阵"""
        xx, yy, zz, xy, xz, yz = (float(_[index]) for _ in self.channels())
        return np.array([[xx, xy, xz], [xy, yy, yz], [xz, yz, zz]])


def hessian(vol: Volume3D, sigma_mm: float) -> HessianField:
    """先高斯平滑，再以物理步长(mm)做中心差分

    Hxx = (f[i+1] - 2f[i] + f[i-1]) / sx²，混合项为两次中心一阶差分。
    """
    if min(vol.dims) < 3:
        raise InvalidGeometry(f"Hessian needs at least 3 voxels per axis, got {vol.dims}")
    f = gaussian_smooth(vol, sigma_mm).data
    sx, sy, sz = vol.spacing

    def d1(arr, axis, step):
        return ndimage.correlate1d(arr, _FIRST_DIFF, axis=axis, mode='mirror') / step

    def d2(arr, axis, step):
        return ndimage.correlate1d(arr, _SECOND_DIFF, axis=axis, mode='mirror') / (step * step)

    fx = d1(f, 0, sx)
    fy = d1(f, 1, sy)
    return HessianField(
        d2(f, 0, sx),
        d2(f, 1, sy),
        d2(f, 2, sz),
        d1(fx, 1, sy),
        d1(fx, 2, sz),
        d1(fy, 2, sz),
        vol.spacing,
        vol.orientation,
    )


class EigenTriple:
    """λ1 ≥ λ2 ≥ λ3, scalars or arrays of equal shape"""

    __slots__ = ('l1', 'l2', 'l3')

    def __init__(self, l1, l2, l3, *, check: bool = True):
        self.l1, self.l2, self.l3 = (np.asarray(_, dtype=np.float64) for _ in (l1, l2, l3))
        if check and not (np.all(self.l1 >= self.l2) and np.all(self.l2 >= self.l3)):
            raise InvalidParameter(f"Eigenvalues must be sorted descending, got {self}")

    def __repr__(self):
        if self.l1.ndim == 0:
            return f"<EigenTriple ({float(self.l1)}, {float(self.l2)}, {float(self.l3)})>"
        return f"<EigenTriple {self.l1.shape}>"

    def __iter__(self) -> Iterator[np.ndarray]:
        yield self.l1
        yield self.l2
        yield self.l3

    def as_tuple(self) -> tuple:
        return tuple(float(_) if _.ndim == 0 else _ for _ in self)

    @property
    def trace(self):
        return self.l1 + self.l2 + self.l3


def _jacobi_eigvals(mats: np.ndarray) -> np.ndarray:
    """循环Jacobi旋转，mats: (n, 3, 3) -> (n, 3) 对角元素(未排序)"""
    a = np.array(mats, dtype=np.float64)
    eye = np.eye(3)
    for _ in range(JACOBI_MAX_SWEEPS):
        off = a[:, 0, 1] ** 2 + a[:, 0, 2] ** 2 + a[:, 1, 2] ** 2
        norm = np.einsum('nij,nij->n', a, a)
        if np.all(off <= _JACOBI_TOL * norm):
            break
        for p, q in _JACOBI_PAIRS:
            apq = a[:, p, q]
            active = apq != 0
            if not active.any():
                continue
            theta = (a[:, q, q] - a[:, p, p]) / (2.0 * np.where(active, apq, 1.0))
            t = np.where(theta >= 0, 1.0, -1.0) / (np.abs(theta) + np.hypot(theta, 1.0))
            t = np.where(active, t, 0.0)
            c = 1.0 / np.sqrt(t * t + 1.0)
            s = t * c
            rot = np.broadcast_to(eye, a.shape).copy()
            rot[:, p, p] = c
            rot[:, q, q] = c
            rot[:, p, q] = s
            rot[:, q, p] = -s
            a = np.einsum('nji,njk,nkl->nil', rot, a, rot)
    return np.diagonal(a, axis1=1, axis2=2).copy()


def eig_sym3(hxx, hyy, hzz, hxy, hxz, hyz) -> EigenTriple:
    """3x3对称矩阵的特征值(降序)

    三角函数解析法；矩阵接近数量矩阵或存在重根(acos参数接近±1)时改用Jacobi迭代，
    对角矩阵直接取对角元素。输入可以是标量或同形数组。
    """
    arrays = np.broadcast_arrays(*(np.asarray(_, dtype=np.float64) for _ in (hxx, hyy, hzz, hxy, hxz, hyz)))
    shape = arrays[0].shape
    hxx, hyy, hzz, hxy, hxz, hyz = (_.ravel() for _ in arrays)
    for _ in (hxx, hyy, hzz, hxy, hxz, hyz):
        if not np.isfinite(_).all():
            raise InvalidParameter("eig_sym3 got non-finite input.")

    q = (hxx + hyy + hzz) / 3.0
    dxx, dyy, dzz = hxx - q, hyy - q, hzz - q
    p1 = hxy * hxy + hxz * hxz + hyz * hyz
    p2 = dxx * dxx + dyy * dyy + dzz * dzz + 2.0 * p1
    p = np.sqrt(p2 / 6.0)
    inv = np.divide(1.0, p, out=np.zeros_like(p), where=p > 0)

    bxx, byy, bzz = dxx * inv, dyy * inv, dzz * inv
    bxy, bxz, byz = hxy * inv, hxz * inv, hyz * inv
    det = bxx * (byy * bzz - byz * byz) - bxy * (bxy * bzz - byz * bxz) + bxz * (bxy * byz - byy * bxz)
    r = np.clip(det / 2.0, -1.0, 1.0)
    phi = np.arccos(r) / 3.0

    e1 = q + 2.0 * p * np.cos(phi)
    e3 = q + 2.0 * p * np.cos(phi + 2.0 * math.pi / 3.0)
    e2 = 3.0 * q - e1 - e3
    eig = np.stack([e1, e2, e3], axis=-1)

    diagonal = p1 == 0
    if diagonal.any():
        eig[diagonal] = np.stack([hxx[diagonal], hyy[diagonal], hzz[diagonal]], axis=-1)

    scale2 = hxx * hxx + hyy * hyy + hzz * hzz + 2.0 * p1
    degenerate = ~diagonal & ((p2 <= _DEGENERATE_RTOL * scale2) | (np.abs(r) >= 1.0 - _ACOS_GUARD))
    if degenerate.any():
        idx = np.flatnonzero(degenerate)
        mats = np.empty((idx.size, 3, 3))
        mats[:, 0, 0], mats[:, 1, 1], mats[:, 2, 2] = hxx[idx], hyy[idx], hzz[idx]
        mats[:, 0, 1] = mats[:, 1, 0] = hxy[idx]
        mats[:, 0, 2] = mats[:, 2, 0] = hxz[idx]
        mats[:, 1, 2] = mats[:, 2, 1] = hyz[idx]
        eig[idx] = _jacobi_eigvals(mats)

    eig = -np.sort(-eig, axis=-1)
    return EigenTriple(
        eig[:, 0].reshape(shape),
        eig[:, 1].reshape(shape),
        eig[:, 2].reshape(shape),
        check=False,
    )


def eig_sym3_matrix(m) -> EigenTriple:
    """(..., 3, 3) 对称矩阵，只读取上三角"""
    m = np.asarray(m, dtype=np.float64)
    if m.shape[-2:] != (3, 3):
        raise InvalidParameter(f"Expected (..., 3, 3) matrices, got {m.shape}")
    return eig_sym3(m[..., 0, 0], m[..., 1, 1], m[..., 2, 2], m[..., 0, 1], m[..., 0, 2], m[..., 1, 2])


@dataclass(frozen=True)
class SatoParams:
    """Line measure parameters

    :param gamma23: λ2/λ3 比值的指数
    :param gamma12: λ1 权重的指数
    :param alpha: λ1 > 0 时的衰减系数
    :param scale_normalized: 是否乘以σ²，跨尺度比较响应时使用
    """

    gamma23: float = 1.0
    gamma12: float = 1.0
    alpha: float = 0.25
    scale_normalized: bool = False

    def __post_init__(self):
        if not (self.gamma23 > 0 and self.gamma12 > 0 and self.alpha > 0):
            raise InvalidParameter(f"Sato parameters must be > 0, got {self}")


def sato_vesselness(e: EigenTriple, params: SatoParams | None = None):
    """亮管状结构的线测度

    λ3 ≤ λ2 < 0 时 v = |λ3|·(λ2/λ3)^γ23·w(λ1, λ2)，否则为0，其中

        w = (1 + λ1/|λ2|)^γ12        λ1 ≤ 0
        w = (1 - α·λ1/|λ2|)^γ12      0 < λ1 < |λ2|/α
        w = 0                        其他
    """
    params = params or SatoParams()
    l1, l2, l3 = e
    tube = (l3 <= l2) & (l2 < 0)
    abs2 = np.where(tube, -l2, 1.0)
    ratio = np.where(tube, l2 / np.where(tube, l3, -1.0), 0.0)
    x = l1 / abs2
    w = np.where(
        l1 <= 0,
        np.maximum(1.0 + x, 0.0) ** params.gamma12,
        np.where(l1 < abs2 / params.alpha, np.maximum(1.0 - params.alpha * x, 0.0) ** params.gamma12, 0.0),
    )
    v = np.where(tube, -l3 * ratio ** params.gamma23 * w, 0.0)
    return float(v) if v.ndim == 0 else v


class VesselnessMap(Volume3D):
    """Nonnegative vesselness scores at one scale"""

    __slots__ = ('scale_mm',)

    def __init__(self, data, spacing, orientation: Orientation | None = None, *, scale_mm: float):
        super().__init__(data, spacing, orientation)
        if (self.data < 0).any():
            raise InvalidParameter("Vesselness scores must be >= 0.")
        self.scale_mm = float(scale_mm)

    def __repr__(self):
        return f"<VesselnessMap σ={self.scale_mm}mm {self.dims}>"


def vessel_enhance(
    vol: Volume3D,
    sigma_mm: float,
    params: SatoParams | None = None,
    *,
    workers: int = 1,
) -> VesselnessMap:
    """单尺度vesselness：hessian -> eig_sym3 -> sato_vesselness

    不做跨尺度归一化(除非params.scale_normalized)。逐体素计算按固定大小分块，
    workers>1时由线程池并行，各块写入互不重叠的切片，结果与线程数无关。

    :param vol:
    :param sigma_mm: 尺度σ, mm
    :param params:
    :param workers: 线程数
    :return:
    """
    sigma_mm = _check_sigma(sigma_mm)
    params = params or SatoParams()
    mod_logger.debug(f"vessel_enhance σ={sigma_mm}mm on {vol}")

    h = hessian(vol, sigma_mm)
    channels = [_.ravel() for _ in h.channels()]
    n = vol.size
    out = np.empty(n, dtype=np.float64)

    def _work(bounds: tuple[int, int]):
        lo, hi = bounds
        e = eig_sym3(*(_[lo:hi] for _ in channels))
        out[lo:hi] = sato_vesselness(e, params)

    chunks = [(lo, min(lo + CHUNK_SIZE, n)) for lo in range(0, n, CHUNK_SIZE)]
    if workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(_work, chunks))
    else:
        for chunk in chunks:
            _work(chunk)

    if params.scale_normalized:
        out *= sigma_mm * sigma_mm

    peak = out.max()
    if peak > 0:
        out[out < VESSELNESS_FLOOR * peak] = 0.0

    return VesselnessMap(out.reshape(vol.dims), vol.spacing, vol.orientation, scale_mm=sigma_mm)
