# -*- coding: utf-8 -*-
"""Volume

三维体数据(Volume3D)与二值掩膜(BinaryMask)，以及NIfTI-1文件的读写。

    NIfTI-1 单文件格式:

        header      = 348 bytes                 ; sizeof_hdr 字段 = 348, 用于判断字节序
        extension   = [4 bytes + extensions]    ; 可选
        data        = vox_offset 起始的体素数据  ; Fortran 顺序 (x 变化最快)

        magic       = "n+1\\0"                  ; 位于 header 的 344..348 字节

    以 ".gz" 结尾的文件透明地按 gzip 处理。

输入约定：已完成颅骨剥离(skull stripping)和偏置场校正(bias-field correction)，
本模块不做任何重采样或配准。
"""

import math
import zlib
from decimal import Decimal
from pathlib import Path
from typing import Final

import nibabel as nib
import numpy as np
from nibabel.nifti1 import Nifti1Header, Nifti1Image
from nibabel.openers import ImageOpener
from nibabel.spatialimages import HeaderDataError
from scipy import ndimage

from mravessel.libs.exceptions import (
    CorruptFile,
    EmptySelection,
    InvalidFormat,
    InvalidGeometry,
    InvalidIntensity,
    InvalidParameter,
    UnsupportedDatatype,
    WriteFailure,
)
from mravessel.utils.logger import get_logger

__all__ = [
    'Orientation',
    'Volume3D',
    'BinaryMask',
    'SUPPORTED_DATATYPES',
    'check_same_geometry',
    'neighbourhood',
    'percentile',
    'read_mask',
    'read_nifti',
    'voxel_volume',
    'write_nifti',
]

mod_logger = get_logger('Volume', log_level=20)

HEADER_SIZE: Final[int] = 348
SINGLE_FILE_MAGIC: Final[bytes] = b'n+1\x00'

# NIfTI datatype code -> 名称
SUPPORTED_DATATYPES: Final[dict[int, str]] = {
    2: 'uint8',
    4: 'int16',
    8: 'int32',
    16: 'float32',
    64: 'float64',
}

# 原样保留的方向(orientation)相关字段
ORIENTATION_FIELDS: Final[tuple[str, ...]] = (
    'qform_code',
    'sform_code',
    'quatern_b',
    'quatern_c',
    'quatern_d',
    'qoffset_x',
    'qoffset_y',
    'qoffset_z',
    'srow_x',
    'srow_y',
    'srow_z',
    'xyzt_units',
)

CONNECTIVITY_RANK: Final[dict[int, int]] = {6: 1, 18: 2, 26: 3}

SPACING_RTOL: Final[float] = 1e-6


def neighbourhood(connectivity: int) -> np.ndarray:
    """6/18/26 邻域对应的3x3x3结构元素"""
    try:
        rank = CONNECTIVITY_RANK[int(connectivity)]
    except (KeyError, TypeError, ValueError):
        raise InvalidParameter(f"Expected connectivity in (6, 18, 26), got {connectivity!r}")
    return ndimage.generate_binary_structure(3, rank)


class Orientation:
    """方向元数据

    从输入头文件中原样拷贝的qform/sform字段，写出时原样写回。
    """

    __slots__ = ('fields', 'qfac')

    def __init__(self, fields: dict, qfac: float = 1.0):
        self.fields = {k: np.array(v, copy=True) for k, v in fields.items()}
        self.qfac = float(qfac)

    def __repr__(self):
        return f"<Orientation qform_code={int(self.fields['qform_code'])} sform_code={int(self.fields['sform_code'])}>"

    @classmethod
    def from_header(cls, header: Nifti1Header) -> 'Orientation':
        return cls({k: header[k] for k in ORIENTATION_FIELDS}, qfac=float(header['pixdim'][0]))

    @classmethod
    def from_spacing(cls, spacing) -> 'Orientation':
        """内存中创建的体数据：对角仿射矩阵，qform/sform均为scanner坐标"""
        header = Nifti1Header()
        affine = np.diag([*map(float, spacing), 1.0])
        header.set_qform(affine, code=1)
        header.set_sform(affine, code=1)
        return cls.from_header(header)

    def apply(self, header: Nifti1Header):
        for k, v in self.fields.items():
            header[k] = v
        pixdim = header['pixdim'].copy()
        pixdim[0] = self.qfac
        header['pixdim'] = pixdim

    def affine(self, spacing) -> np.ndarray:
        header = Nifti1Header()
        self.apply(header)
        header.set_zooms(tuple(spacing))
        return header.get_best_affine()


def _check_spacing(spacing) -> tuple[float, float, float]:
    try:
        spacing = tuple(float(_) for _ in spacing)
    except (TypeError, ValueError):
        raise InvalidGeometry(f"Expected three spacing values, got {spacing!r}")
    if len(spacing) != 3:
        raise InvalidGeometry(f"Expected three spacing values, got {spacing!r}")
    if not all(math.isfinite(_) and _ > 0 for _ in spacing):
        raise InvalidGeometry(f"Spacing must be positive and finite, got {spacing}")
    return spacing


def _check_shape(data: np.ndarray):
    if data.ndim != 3:
        raise InvalidGeometry(f"Expected 3D data, got {data.ndim}D")
    if 0 in data.shape:
        raise InvalidGeometry(f"Expected positive dims, got {data.shape}")


class _Geometry:
    """Volume3D/BinaryMask 的公共几何信息"""

    __slots__ = ('data', 'spacing', 'orientation')

    data: np.ndarray
    spacing: tuple[float, float, float]
    orientation: Orientation

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(int(_) for _ in self.data.shape)

    @property
    def size(self) -> int:
        return int(self.data.size)

    @property
    def affine(self) -> np.ndarray:
        return self.orientation.affine(self.spacing)

    def same_geometry(self, other: '_Geometry') -> bool:
        """spacing 按float32精度比较(pixdim在文件中为float32)"""
        return self.dims == other.dims and bool(
            np.allclose(self.spacing, other.spacing, rtol=SPACING_RTOL, atol=0.0)
        )


def check_same_geometry(a: _Geometry, b: _Geometry):
    if not a.same_geometry(b):
        raise InvalidGeometry(
            f"Geometry mismatch: {a.dims}@{a.spacing} vs {b.dims}@{b.spacing}"
        )


class Volume3D(_Geometry):
    """Scalar 3D image

    数据统一转换为float64，构造后只读。
    """

    __slots__ = ('source_dtype',)

    def __init__(
        self,
        data,
        spacing,
        orientation: Orientation | None = None,
        *,
        source_dtype: str | None = None,
    ):
        """

        :param data: 三维强度数组，下标顺序(x, y, z)
        :param spacing: 每个轴的体素尺寸, mm
        :param orientation: 方向元数据，默认由spacing生成
        :param source_dtype: 文件中的原始数据类型，仅用于显示
        """
        data = np.array(data, dtype=np.float64)
        _check_shape(data)
        if not np.isfinite(data).all():
            raise InvalidIntensity("Volume contains NaN or Inf intensities.")
        data.flags.writeable = False

        self.data = data
        self.spacing = _check_spacing(spacing)
        self.orientation = orientation or Orientation.from_spacing(self.spacing)
        self.source_dtype = source_dtype or 'float64'

    def __repr__(self):
        return f"<Volume3D {self.dims} @ {self.spacing} mm>"

    def with_data(self, data) -> 'Volume3D':
        """相同几何信息的新体数据"""
        return Volume3D(data, self.spacing, self.orientation)

    def has_positive(self) -> bool:
        return bool((self.data > 0).any())


class BinaryMask(_Geometry):
    """Boolean 3D mask sharing geometry with its source volume"""

    __slots__ = ()

    def __init__(self, data, spacing, orientation: Orientation | None = None):
        data = np.array(data, dtype=bool)
        _check_shape(data)
        data.flags.writeable = False

        self.data = data
        self.spacing = _check_spacing(spacing)
        self.orientation = orientation or Orientation.from_spacing(self.spacing)

    def __repr__(self):
        return f"<BinaryMask {self.dims} @ {self.spacing} mm [{self.count}]>"

    def __eq__(self, other):
        if not isinstance(other, BinaryMask):
            return NotImplemented
        return self.same_geometry(other) and np.array_equal(self.data, other.data)

    __hash__ = None

    @classmethod
    def like(cls, geometry: _Geometry, data) -> 'BinaryMask':
        return cls(data, geometry.spacing, geometry.orientation)

    @classmethod
    def empty(cls, geometry: _Geometry) -> 'BinaryMask':
        return cls(np.zeros(geometry.dims, dtype=bool), geometry.spacing, geometry.orientation)

    @property
    def count(self) -> int:
        return int(np.count_nonzero(self.data))

    def is_subset_of(self, other: 'BinaryMask') -> bool:
        check_same_geometry(self, other)
        return not bool((self.data & ~other.data).any())


def voxel_volume(vol: _Geometry) -> float:
    """体素的物理体积, mm³"""
    return math.prod(vol.spacing)


def percentile(vol: _Geometry, p: float, restrict_to_positive: bool = True) -> float:
    """最近秩(nearest-rank)百分位数

    将候选体素升序排列，返回第 ceil(p/100 * N) 个(从1开始)的值，不插值。

    :param vol:
    :param p: 百分位, (0, 100]
    :param restrict_to_positive: 只统计严格大于0的体素(默认)，颅骨剥离后0为背景
    :return:
    """
    if not (0 < p <= 100):
        raise InvalidParameter(f"Expected percentile in (0, 100], got {p}")

    values = vol.data.ravel()
    if restrict_to_positive:
        values = values[values > 0]
    n = values.size
    if n == 0:
        raise EmptySelection("No eligible voxels for percentile.")

    # 十进制运算，避免 99.9/100*1000 之类的浮点误差影响取整
    rank = max(1, math.ceil(Decimal(repr(float(p))) * n / 100))
    return float(np.partition(values, rank - 1)[rank - 1])


def _read_bytes(path: Path) -> bytes:
    try:
        with ImageOpener(str(path), 'rb') as fobj:
            return fobj.read()
    except FileNotFoundError:
        raise
    except (OSError, EOFError, zlib.error) as e:
        raise CorruptFile(f"Unable to read '{path}': {e}")


def _header_endianness(raw: bytes) -> str:
    if len(raw) < HEADER_SIZE:
        raise CorruptFile(f"File is shorter than a NIfTI-1 header ({len(raw)} bytes).")
    for endian in ('<', '>'):
        if int(np.frombuffer(raw, dtype=f'{endian}i4', count=1)[0]) == HEADER_SIZE:
            return endian
    raise CorruptFile(f"Header size field is not {HEADER_SIZE}.")


def read_nifti(path: str | Path) -> Volume3D:
    """读取NIfTI-1单文件(.nii 或 .nii.gz)

    :param path:
    :return: Volume3D, 已应用scl_slope/scl_inter
    :raise InvalidFormat: magic 不是 "n+1"
    :raise CorruptFile: header size 不是348，vox_offset 落在头内，或数据长度与dim不符
    :raise UnsupportedDatatype:
    :raise InvalidGeometry: pixdim 非正，或不是3D(4D且第四维为1)
    :raise InvalidIntensity: 数据中包含 NaN/Inf
    """
    path = Path(path)
    raw = _read_bytes(path)
    endian = _header_endianness(raw)

    magic = raw[344:348]
    if magic != SINGLE_FILE_MAGIC:
        raise InvalidFormat(f"Expected magic {SINGLE_FILE_MAGIC!r}, got {magic!r}")

    try:
        header = Nifti1Header(raw[:HEADER_SIZE], endianness=endian, check=False)
    except HeaderDataError as e:
        raise CorruptFile(f"Invalid header in '{path}': {e}")

    code = int(header['datatype'])
    if code not in SUPPORTED_DATATYPES:
        raise UnsupportedDatatype(f"Datatype code {code} is not supported.")

    dim = [int(_) for _ in header['dim']]
    ndim = dim[0]
    if ndim not in (3, 4) or (ndim == 4 and dim[4] != 1):
        raise InvalidGeometry(f"Expected a 3D volume, got dim={dim[:ndim + 1]}")
    dims = tuple(dim[1:4])
    if min(dims) <= 0:
        raise CorruptFile(f"Invalid dims {dims}")

    pixdim = tuple(float(_) for _ in header['pixdim'][1:4])
    if not all(math.isfinite(_) and _ > 0 for _ in pixdim):
        raise InvalidGeometry(f"Pixel dimensions must be positive, got {pixdim}")

    dtype = header.get_data_dtype()
    count = math.prod(dims)
    offset = int(header['vox_offset'])
    if offset < HEADER_SIZE:
        raise CorruptFile(f"vox_offset {offset} lies inside the {HEADER_SIZE}-byte header")
    if len(raw) < offset + count * dtype.itemsize:
        raise CorruptFile(
            f"Expected {count * dtype.itemsize} data bytes at offset {offset}, "
            f"got {max(0, len(raw) - offset)}"
        )
    data = np.frombuffer(raw, dtype=dtype, count=count, offset=offset).reshape(dims, order='F')
    data = data.astype(np.float64)

    try:
        slope, inter = header.get_slope_inter()
    except HeaderDataError as e:
        raise CorruptFile(f"Invalid scaling in '{path}': {e}")
    if slope is not None:
        data = data * float(slope) + float(inter or 0.0)

    if not np.isfinite(data).all():
        raise InvalidIntensity(f"'{path}' contains NaN or Inf intensities.")

    mod_logger.debug(f"read {path}: dims={dims}, spacing={pixdim}, datatype={SUPPORTED_DATATYPES[code]}")
    return Volume3D(
        data,
        pixdim,
        Orientation.from_header(header),
        source_dtype=SUPPORTED_DATATYPES[code],
    )


def read_mask(path: str | Path) -> BinaryMask:
    """读取掩膜文件，非零体素为前景"""
    vol = read_nifti(path)
    return BinaryMask(vol.data != 0, vol.spacing, vol.orientation)


def write_nifti(vol: Volume3D | BinaryMask, path: str | Path):
    """写出NIfTI-1单文件，以 ".gz" 结尾时gzip压缩

    体数据以float64写出(读回逐位一致)，掩膜以uint8 {0,1}写出；scl_slope=1, scl_inter=0。

    :raise WriteFailure:
    """
    path = Path(path)
    if not path.parent.is_dir():
        raise WriteFailure(f"Directory not found: '{path.parent}'")

    if isinstance(vol, BinaryMask):
        data = vol.data.astype(np.uint8)
    else:
        data = np.asarray(vol.data, dtype=np.float64)

    header = Nifti1Header()
    header.set_data_shape(data.shape)
    header.set_data_dtype(data.dtype)
    img = Nifti1Image(data, None, header=header)
    vol.orientation.apply(img.header)
    img.header.set_zooms(vol.spacing)
    img.header.set_slope_inter(1.0, 0.0)

    try:
        nib.save(img, str(path))
    except OSError as e:
        raise WriteFailure(f"Unable to write '{path}': {e}")
    mod_logger.debug(f"wrote {path}: {vol}")
