"""Orthonormal 2D DCT-II/IDCT, frequency-band masks and exchanges, zigzag
reordering, and spectral window partitioning.

The orthonormal convention is fixed package-wide so that Parseval holds
exactly: total coefficient energy equals total pixel energy. Two transform
paths exist per axis: a cached cosine-matrix product for short axes and an
FFT-based path (even/odd folding of the input into a half-length-symmetric
sequence) for long ones; both agree to near machine precision.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import (
    CorruptDataError,
    CutoffRangeError,
    DimensionMismatchError,
    LengthMismatchError,
    PartitionMismatchError,
)
from .imgio import FEATURE, PlanarImage

# Axes at least this long take the FFT path; shorter ones use the matrix path.
FFT_MIN_LEN = 64

SPECTRUM_MAGIC = b"SPEC"


@dataclass(frozen=True)
class Spectrum:
    """Per-channel orthonormal DCT-II coefficient planes, shape (C, H, W).

    ``origin`` records the colorspace of the image the spectrum came from so
    a round trip restores the tag.
    """

    coeffs: np.ndarray
    origin: str = FEATURE

    def __post_init__(self):
        arr = np.ascontiguousarray(np.asarray(self.coeffs, dtype=np.float64))
        if arr.ndim != 3:
            raise DimensionMismatchError(
                f"expected (channels, height, width), got shape {arr.shape}")
        arr.flags.writeable = False
        object.__setattr__(self, "coeffs", arr)

    @property
    def channels(self) -> int:
        return self.coeffs.shape[0]

    @property
    def height(self) -> int:
        return self.coeffs.shape[1]

    @property
    def width(self) -> int:
        return self.coeffs.shape[2]


# ---------------------------------------------------------------------------
# 1-D orthonormal DCT-II / DCT-III kernels
# ---------------------------------------------------------------------------

@lru_cache(maxsize=64)
def _dct_basis(n: int) -> np.ndarray:
    """Orthonormal DCT-II matrix: row u is the frequency-u basis vector."""
    u = np.arange(n)[:, None]
    i = np.arange(n)[None, :]
    basis = np.sqrt(2.0 / n) * np.cos(np.pi * (2 * i + 1) * u / (2 * n))
    basis[0, :] = np.sqrt(1.0 / n)
    return basis


def _ortho_scale(n: int) -> np.ndarray:
    s = np.full(n, np.sqrt(1.0 / (2 * n)))
    s[0] = np.sqrt(1.0 / (4 * n))
    return s


def _dct1d_fft(x: np.ndarray) -> np.ndarray:
    """Orthonormal DCT-II along the last axis via even/odd FFT folding."""
    n = x.shape[-1]
    v = np.concatenate([x[..., 0::2], x[..., 1::2][..., ::-1]], axis=-1)
    r = np.fft.rfft(v, axis=-1)
    k = np.arange(n)
    vk = r[..., np.minimum(k, n - k)]
    flip = k > n // 2
    vk[..., flip] = np.conj(vk[..., flip])
    c = 2.0 * np.real(np.exp(-1j * np.pi * k / (2 * n)) * vk)
    return c * _ortho_scale(n)


def _idct1d_fft(coeff: np.ndarray) -> np.ndarray:
    """Inverse of :func:`_dct1d_fft` along the last axis."""
    n = coeff.shape[-1]
    c = coeff / _ortho_scale(n)
    m = n // 2 + 1
    k = np.arange(m)
    crev = c[..., (n - k) % n]
    crev[..., 0] = 0.0
    w = 0.5 * (c[..., :m] - 1j * crev)
    vk = np.exp(1j * np.pi * k / (2 * n)) * w
    v = np.fft.irfft(vk, n=n, axis=-1)
    half = (n + 1) // 2
    out = np.empty_like(v)
    out[..., 0::2] = v[..., :half]
    out[..., 1::2] = v[..., half:][..., ::-1]
    return out


def _transform_axis(arr: np.ndarray, axis: int, inverse: bool, method: str) -> np.ndarray:
    n = arr.shape[axis]
    if method == "auto":
        method = "fft" if n >= FFT_MIN_LEN else "matrix"
    if method == "matrix":
        basis = _dct_basis(n)
        mat = basis.T if inverse else basis
        return np.moveaxis(np.tensordot(mat, arr, axes=(1, axis)), 0, axis)
    if method == "fft":
        moved = np.moveaxis(arr, axis, -1)
        out = _idct1d_fft(moved) if inverse else _dct1d_fft(moved)
        return np.moveaxis(out, -1, axis)
    raise ValueError(f"unknown transform method {method!r}")


# ---------------------------------------------------------------------------
# 2-D transforms
# ---------------------------------------------------------------------------

def dct_planes(arr: np.ndarray, method: str = "auto") -> np.ndarray:
    """Orthonormal 2D DCT-II over the last two axes of a bare array."""
    arr = np.asarray(arr, dtype=np.float64)
    out = _transform_axis(arr, arr.ndim - 2, False, method)
    return _transform_axis(out, arr.ndim - 1, False, method)


def idct_planes(arr: np.ndarray, method: str = "auto") -> np.ndarray:
    """Inverse of :func:`dct_planes` over the last two axes."""
    arr = np.asarray(arr, dtype=np.float64)
    out = _transform_axis(arr, arr.ndim - 1, True, method)
    return _transform_axis(out, arr.ndim - 2, True, method)


def dct2(img: PlanarImage, method: str = "auto") -> Spectrum:
    """Per-channel orthonormal 2D DCT-II of an image.

    ``method`` selects the per-axis kernel: "auto" (matrix for short axes,
    FFT otherwise), "fft", or "matrix".
    """
    return Spectrum(dct_planes(img.data, method), origin=img.colorspace)


def idct2(spec: Spectrum, method: str = "auto") -> PlanarImage:
    """Inverse of :func:`dct2`; restores the origin colorspace tag."""
    return PlanarImage(idct_planes(spec.coeffs, method), spec.origin)


def dct2_tiled(img: PlanarImage, tile: int = 512) -> Spectrum:
    """Independent per-tile DCT for memory-constrained runs.

    NOT equivalent to the whole-image transform: each tile carries its own
    local spectrum (edge tiles may be smaller than ``tile``).
    """
    if tile < 1:
        raise ValueError("tile size must be positive")
    out = np.empty_like(img.data)
    for r0 in range(0, img.height, tile):
        for c0 in range(0, img.width, tile):
            block = img.data[:, r0:r0 + tile, c0:c0 + tile]
            sub = _transform_axis(_transform_axis(block, 1, False, "auto"), 2, False, "auto")
            out[:, r0:r0 + tile, c0:c0 + tile] = sub
    return Spectrum(out, origin=img.colorspace)


def dc_reconstruct(spec: Spectrum) -> PlanarImage:
    """Image rebuilt from the (0,0) coefficient alone: a per-channel
    constant equal to the channel mean (orthonormal DC = mean * sqrt(H*W))."""
    h, w = spec.height, spec.width
    const = spec.coeffs[:, 0, 0] / np.sqrt(h * w)
    planes = np.broadcast_to(const[:, None, None], spec.coeffs.shape)
    return PlanarImage(np.array(planes), spec.origin)


# ---------------------------------------------------------------------------
# Frequency-band masks
# ---------------------------------------------------------------------------

ZERO_BAND = "zero"
LOW_BAND = "low"
HIGH_BAND = "high"


def validate_cutoff(k: int, height: int, width: int) -> int:
    """Check 0 <= k <= max index; clamping per axis happens in the masks."""
    n = max(height - 1, width - 1)
    if not (0 <= k <= n):
        raise CutoffRangeError(f"cutoff {k} outside [0, {n}] for {height}x{width}")
    return int(k)


@dataclass(frozen=True)
class BandMask:
    """Index set for one of the three frequency regions.

    zero: {(0,0)}.
    low:  [0,k] x [0,k] minus the DC term, box clamped per axis.
    high: {(i,j): i >= k or j >= k}, as written; low and high deliberately
    overlap on the band boundary.
    """

    kind: str
    k: int
    height: int
    width: int

    def __post_init__(self):
        if self.kind not in (ZERO_BAND, LOW_BAND, HIGH_BAND):
            raise ValueError(f"unknown band kind {self.kind!r}")
        validate_cutoff(self.k, self.height, self.width)

    def to_mask(self) -> np.ndarray:
        """Boolean (height, width) membership array."""
        i = np.arange(self.height)[:, None]
        j = np.arange(self.width)[None, :]
        if self.kind == ZERO_BAND:
            return (i == 0) & (j == 0)
        if self.kind == LOW_BAND:
            ki = min(self.k, self.height - 1)
            kj = min(self.k, self.width - 1)
            box = (i <= ki) & (j <= kj)
            box[0, 0] = False
            return box
        return (i >= self.k) | (j >= self.k)


def zero_mask(height: int, width: int) -> BandMask:
    return BandMask(ZERO_BAND, 0, height, width)


def low_mask(k: int, height: int, width: int) -> BandMask:
    return BandMask(LOW_BAND, k, height, width)


def high_mask(k: int, height: int, width: int) -> BandMask:
    return BandMask(HIGH_BAND, k, height, width)


def exchange_band(a: Spectrum, b: Spectrum, mask: BandMask):
    """Swap the coefficients selected by ``mask`` between two spectra.

    Returns the new pair; applying the same exchange twice restores the
    originals bit-exactly.
    """
    if a.coeffs.shape != b.coeffs.shape:
        raise DimensionMismatchError(
            f"spectra differ: {a.coeffs.shape} vs {b.coeffs.shape}")
    if (mask.height, mask.width) != (a.height, a.width):
        raise DimensionMismatchError("mask dimensions do not match the spectra")
    m = mask.to_mask()[None, :, :]
    return (Spectrum(np.where(m, b.coeffs, a.coeffs), a.origin),
            Spectrum(np.where(m, a.coeffs, b.coeffs), b.origin))


# ---------------------------------------------------------------------------
# Zigzag reordering
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ZigzagOrder:
    """JPEG-style anti-diagonal traversal of an H x W index grid.

    ``flat`` holds row-major flat indices in visit order; position 0 is
    always (0,0) and the last position is (H-1, W-1).
    """

    height: int
    width: int
    flat: np.ndarray

    def pairs(self) -> np.ndarray:
        """(H*W, 2) array of (i, j) pairs in visit order."""
        return np.stack(np.divmod(self.flat, self.width), axis=1)


def zigzag_order(height: int, width: int) -> ZigzagOrder:
    """Build the zigzag permutation: anti-diagonals of increasing i+j,
    odd diagonals walked with i increasing, even ones with i decreasing."""
    if height < 1 or width < 1:
        raise ValueError("zigzag needs a non-empty grid")
    idx = []
    for d in range(height + width - 1):
        lo = max(0, d - (width - 1))
        hi = min(d, height - 1)
        rows = range(lo, hi + 1) if d % 2 == 1 else range(hi, lo - 1, -1)
        idx.extend(i * width + (d - i) for i in rows)
    flat = np.asarray(idx, dtype=np.intp)
    flat.flags.writeable = False
    return ZigzagOrder(height, width, flat)


def apply_zigzag(spec: Spectrum, order: ZigzagOrder) -> np.ndarray:
    """Flatten spectrum planes to (C, H*W) sequences in zigzag order."""
    if (order.height, order.width) != (spec.height, spec.width):
        raise LengthMismatchError("zigzag order built for a different plane size")
    return spec.coeffs.reshape(spec.channels, -1)[:, order.flat]


def invert_zigzag(seq: np.ndarray, order: ZigzagOrder, origin: str = FEATURE) -> Spectrum:
    """Rebuild a Spectrum from (C, H*W) zigzag sequences."""
    seq = np.asarray(seq, dtype=np.float64)
    if seq.ndim == 1:
        seq = seq[None, :]
    n = order.height * order.width
    if seq.shape[-1] != n:
        raise LengthMismatchError(
            f"sequence length {seq.shape[-1]} != {order.height}*{order.width}")
    planes = np.empty_like(seq)
    planes[:, order.flat] = seq
    return Spectrum(planes.reshape(seq.shape[0], order.height, order.width), origin)


# ---------------------------------------------------------------------------
# Window partition / reverse
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WindowPartition:
    window_len: int
    count: int
    pad: int


def window_partition(seq: np.ndarray, window_len: int):
    """Chunk the last axis into zero-padded windows.

    Returns (windows, partition) where windows has shape
    (..., count, window_len) and 0 <= pad < window_len.
    """
    if window_len < 1:
        raise ValueError("window_len must be positive")
    seq = np.asarray(seq, dtype=np.float64)
    length = seq.shape[-1]
    count = max(1, -(-length // window_len))
    pad = count * window_len - length
    if pad:
        widths = [(0, 0)] * (seq.ndim - 1) + [(0, pad)]
        seq = np.pad(seq, widths)
    windows = seq.reshape(seq.shape[:-1] + (count, window_len))
    return windows, WindowPartition(window_len, count, pad)


def window_reverse(windows: np.ndarray, part: WindowPartition) -> np.ndarray:
    """Undo :func:`window_partition`, dropping the zero pad."""
    windows = np.asarray(windows, dtype=np.float64)
    if windows.shape[-2:] != (part.count, part.window_len):
        raise PartitionMismatchError(
            f"windows shaped {windows.shape[-2:]}, metadata says "
            f"({part.count}, {part.window_len})")
    flat = windows.reshape(windows.shape[:-2] + (part.count * part.window_len,))
    length = part.count * part.window_len - part.pad
    return flat[..., :length]


# ---------------------------------------------------------------------------
# Binary spectrum dump
# ---------------------------------------------------------------------------

def write_spectrum(spec: Spectrum, path) -> None:
    """Write the 16-byte "SPEC" header plus float32-LE planes, row-major
    per channel."""
    with open(path, "wb") as fh:
        fh.write(SPECTRUM_MAGIC)
        fh.write(struct.pack("<III", spec.height, spec.width, spec.channels))
        fh.write(spec.coeffs.astype("<f4").tobytes())


def read_spectrum(path) -> Spectrum:
    with open(path, "rb") as fh:
        head = fh.read(16)
        if len(head) != 16 or head[:4] != SPECTRUM_MAGIC:
            raise CorruptDataError(f"{path}: missing SPEC header")
        h, w, c = struct.unpack("<III", head[4:])
        data = np.frombuffer(fh.read(), dtype="<f4")
    if data.size != h * w * c:
        raise CorruptDataError(f"{path}: payload size mismatch")
    return Spectrum(data.astype(np.float64).reshape(c, h, w))
