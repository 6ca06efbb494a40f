import gzip
import struct
from pathlib import Path

import numpy as np
import pytest

from mravessel.libs import Volume3D
from mravessel.phantom import PhantomSpec, StraightPath, TubeSpec

IXI_SPACING = (0.47, 0.47, 0.8)

# NIfTI datatype code -> (numpy type, bitpix)
DATATYPES = {
    2: ('u1', 8),
    4: ('i2', 16),
    8: ('i4', 32),
    16: ('f4', 32),
    64: ('f8', 64),
}


def raw_nifti_bytes(
    data,
    spacing=IXI_SPACING,
    *,
    datatype: int = 16,
    endian: str = '<',
    magic: bytes = b'n+1\x00',
    sizeof_hdr: int = 348,
    dim=None,
    slope: float = 0.0,
    inter: float = 0.0,
    truncate: int = 0,
    vox_offset: float = 352.0,
) -> bytes:
    """Single-file NIfTI-1 built field by field with struct"""
    data = np.asarray(data)
    kind, bitpix = DATATYPES.get(datatype, ('f4', 32))
    hdr = bytearray(348)
    struct.pack_into(f'{endian}i', hdr, 0, sizeof_hdr)
    if dim is None:
        dim = [data.ndim, *data.shape] + [1] * (7 - data.ndim)
    struct.pack_into(f'{endian}8h', hdr, 40, *dim)
    struct.pack_into(f'{endian}h', hdr, 70, datatype)
    struct.pack_into(f'{endian}h', hdr, 72, bitpix)
    pixdim = [1.0, *spacing] + [1.0] * 4
    struct.pack_into(f'{endian}8f', hdr, 76, *pixdim)
    struct.pack_into(f'{endian}f', hdr, 108, vox_offset)
    struct.pack_into(f'{endian}f', hdr, 112, slope)
    struct.pack_into(f'{endian}f', hdr, 116, inter)
    struct.pack_into(f'{endian}B', hdr, 123, 2)
    struct.pack_into(f'{endian}2h', hdr, 252, 1, 1)
    struct.pack_into(f'{endian}4f', hdr, 280, spacing[0], 0.0, 0.0, 0.0)
    struct.pack_into(f'{endian}4f', hdr, 296, 0.0, spacing[1], 0.0, 0.0)
    struct.pack_into(f'{endian}4f', hdr, 312, 0.0, 0.0, spacing[2], 0.0)
    hdr[344:348] = magic

    body = data.astype(f'{endian}{kind}').tobytes(order='F')
    raw = bytes(hdr) + b'\x00' * 4 + body
    if truncate:
        raw = raw[:-truncate]
    return raw


def write_raw_nifti(path, data, spacing=IXI_SPACING, **kwargs) -> Path:
    path = Path(path)
    raw = raw_nifti_bytes(data, spacing, **kwargs)
    if path.name.endswith('.gz'):
        raw = gzip.compress(raw)
    path.write_bytes(raw)
    return path


@pytest.fixture
def rng():
    return np.random.default_rng(20240501)


@pytest.fixture
def nifti_writer():
    return write_raw_nifti


@pytest.fixture
def tiny_nifti(tmp_path) -> Path:
    """2x2x2 float32 volume at IXI spacing"""
    data = np.arange(1, 9, dtype=np.float32).reshape((2, 2, 2), order='F')
    return write_raw_nifti(tmp_path / 'tiny.nii', data)


def tube_spec(radius: float, *, dims=(36, 36, 24), spacing=IXI_SPACING, noise_sigma=0.0, rng_seed=0,
              contrast=1.0, specks=()) -> PhantomSpec:
    """One straight tube along z through the volume center"""
    cx = (dims[0] - 1) * spacing[0] / 2
    cy = (dims[1] - 1) * spacing[1] / 2
    top = (dims[2] - 1) * spacing[2]
    return PhantomSpec(
        dims=dims,
        spacing=spacing,
        tubes=[TubeSpec(StraightPath((cx, cy, 0.0), (cx, cy, top)), radius, contrast)],
        noise_sigma=noise_sigma,
        rng_seed=rng_seed,
        specks=specks,
    )


@pytest.fixture
def small_tube_spec() -> PhantomSpec:
    return tube_spec(1.5, noise_sigma=0.1, rng_seed=7)


@pytest.fixture
def blob_volume() -> Volume3D:
    """Positive smooth random field, small enough for the full pipeline"""
    gen = np.random.default_rng(99)
    data = gen.random((20, 18, 16)) + 0.5
    return Volume3D(data, IXI_SPACING)
