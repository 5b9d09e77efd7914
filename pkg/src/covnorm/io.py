"""Binary file formats. All integers are u64 and all values f64, little-endian.

    MatrixFile  b"CVNMAT01" rows cols <rows*cols values, row-major>
    PcaFile     b"CVNPCA01" d n <mean: d> <eigenvalues: d, descending> <components: d*d>
    LayerFile   b"CVNLAY01" d kx ky side
                lrows lcols <left> rrows rcols <right> <bias: d>

Covariances behind a PcaFile use the population convention (divide by n).
The layer ``side`` flag is 0 when the mini-adaptation matrix was folded into
the whitening factor, 1 when folded into the coloring factor, 2 for a plain
factor pair and 3 for a diagonal (BN) layer.
"""
from __future__ import annotations

import os
import struct
import tempfile

import numpy as np

from .errors import FormatError
from .recolor import ABSORB_COLORING, ABSORB_WHITENING, DIAGONAL, FACTORS, CompressedLayer, expected_param_count
from .stats import Pca

MATRIX_MAGIC = b"CVNMAT01"
PCA_MAGIC = b"CVNPCA01"
LAYER_MAGIC = b"CVNLAY01"
ORTHONORMAL_TOL = 1e-8

_U64 = struct.Struct("<Q")
_F64 = np.dtype("<f8")
SIDE_METHODS = {ABSORB_WHITENING: "covnorm", ABSORB_COLORING: "covnorm", FACTORS: "factors", DIAGONAL: "bn"}


def atomic_write(path, data: bytes):
    """Write to a temporary file in the target directory, then rename over ``path``."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _values(a) -> bytes:
    return np.ascontiguousarray(a, dtype=_F64).tobytes()


class _Reader:
    def __init__(self, data: bytes, what: str):
        self.data = data
        self.pos = 0
        self.what = what

    def take(self, n: int) -> bytes:
        if n < 0 or self.pos + n > len(self.data):
            raise FormatError(f"{self.what}: truncated file")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def magic(self, expected: bytes):
        if self.take(8) != expected:
            raise FormatError(f"{self.what}: bad magic, expected {expected!r}")

    def u64(self) -> int:
        return _U64.unpack(self.take(8))[0]

    def floats(self, count: int) -> np.ndarray:
        if count > len(self.data):
            raise FormatError(f"{self.what}: declared size exceeds file")
        arr = np.frombuffer(self.take(8 * count), dtype=_F64).astype(np.float64)
        if not np.all(np.isfinite(arr)):
            raise FormatError(f"{self.what}: non-finite values")
        return arr

    def matrix(self, rows: int, cols: int) -> np.ndarray:
        return self.floats(rows * cols).reshape(rows, cols)

    def done(self):
        if self.pos != len(self.data):
            raise FormatError(f"{self.what}: {len(self.data) - self.pos} trailing bytes")


def _read_bytes(path) -> bytes:
    try:
        with open(path, "rb") as f:
            return f.read()
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc}") from exc


def encode_matrix(a) -> bytes:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise FormatError("only 2-D matrices can be stored")
    if not np.all(np.isfinite(a)):
        raise FormatError("refusing to store non-finite values")
    return MATRIX_MAGIC + _U64.pack(a.shape[0]) + _U64.pack(a.shape[1]) + _values(a)


def decode_matrix(data: bytes) -> np.ndarray:
    r = _Reader(data, "matrix file")
    r.magic(MATRIX_MAGIC)
    rows, cols = r.u64(), r.u64()
    out = r.matrix(rows, cols)
    r.done()
    return out


def write_matrix(path, a):
    atomic_write(path, encode_matrix(a))


def read_matrix(path) -> np.ndarray:
    return decode_matrix(_read_bytes(path))


def encode_pca(p: Pca) -> bytes:
    d = p.dim
    if p.eigenvalues.shape != (d,) or p.components.shape != (d, d):
        raise FormatError("PCA fields have inconsistent shapes")
    return b"".join(
        [PCA_MAGIC, _U64.pack(d), _U64.pack(int(p.n)), _values(p.mean), _values(p.eigenvalues), _values(p.components)]
    )


def decode_pca(data: bytes) -> Pca:
    r = _Reader(data, "PCA file")
    r.magic(PCA_MAGIC)
    d, n = r.u64(), r.u64()
    mean = r.floats(d)
    eig = r.floats(d)
    comps = r.matrix(d, d)
    r.done()
    if np.any(np.diff(eig) > 0.0):
        raise FormatError("PCA file: eigenvalues are not descending")
    if d and np.max(np.abs(comps.T @ comps - np.eye(d))) > ORTHONORMAL_TOL:
        raise FormatError("PCA file: components are not orthonormal")
    return Pca(mean, eig, comps, n)


def write_pca(path, p: Pca):
    atomic_write(path, encode_pca(p))


def read_pca(path) -> Pca:
    return decode_pca(_read_bytes(path))


def encode_layer(layer: CompressedLayer) -> bytes:
    parts = [LAYER_MAGIC]
    for v in (layer.dim, layer.kx, layer.ky, layer.side):
        parts.append(_U64.pack(int(v)))
    for m in (layer.left, layer.right):
        parts += [_U64.pack(m.shape[0]), _U64.pack(m.shape[1]), _values(m)]
    parts.append(_values(layer.bias))
    return b"".join(parts)


def _check_layer_shapes(d, kx, ky, side, r):
    if side == ABSORB_WHITENING:
        ok = kx >= ky and r == ky
    elif side == ABSORB_COLORING:
        ok = kx < ky and r == kx
    elif side == FACTORS:
        ok = kx == ky == r
    elif side == DIAGONAL:
        ok = kx == ky == r == d
    else:
        raise FormatError(f"layer file: unknown side flag {side}")
    if not ok or not 1 <= r <= d:
        raise FormatError(f"layer file: shapes inconsistent with d={d}, kx={kx}, ky={ky}, side={side}")


def decode_layer(data: bytes) -> CompressedLayer:
    r = _Reader(data, "layer file")
    r.magic(LAYER_MAGIC)
    d, kx, ky, side = (r.u64() for _ in range(4))
    lrows, lcols = r.u64(), r.u64()
    if lrows != d:
        raise FormatError("layer file: left factor row count differs from d")
    left = r.matrix(lrows, lcols)
    rrows, rcols = r.u64(), r.u64()
    if rcols != d or rrows != lcols:
        raise FormatError("layer file: right factor shape does not chain")
    right = r.matrix(rrows, rcols)
    bias = r.floats(d)
    r.done()
    _check_layer_shapes(d, kx, ky, side, lcols)
    count = expected_param_count(side, d, left, right)
    return CompressedLayer(left, right, bias, kx, ky, count, side, SIDE_METHODS[side])


def write_layer(path, layer: CompressedLayer):
    atomic_write(path, encode_layer(layer))


def read_layer(path) -> CompressedLayer:
    return decode_layer(_read_bytes(path))
