"""Image containers, file I/O, color conversion, and full-resolution
evaluation strategies (integer-factor resize and non-overlapping
patch split/stitch)."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from PIL import Image

from .errors import (
    CallbackShapeError,
    ChannelCountError,
    CorruptDataError,
    DimensionMismatchError,
    IndivisibleDimensionsError,
    PatchCountMismatchError,
    UnsupportedFormatError,
)

RGB = "rgb"
LUMA = "luma"
FEATURE = "feature"

_COLORSPACES = (RGB, LUMA, FEATURE)

# BT.601 luma weights; classical JPEG/GLCM convention.
LUMA_WEIGHTS = (0.299, 0.587, 0.114)


@dataclass(frozen=True)
class PlanarImage:
    """Channel-planar raster: ``data`` has shape (channels, height, width).

    Samples are float64. For ``rgb`` and ``luma`` images loaded from disk
    values lie in [0, 1]; ``feature`` planes are unbounded.
    """

    data: np.ndarray
    colorspace: str = FEATURE

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim != 3:
            raise DimensionMismatchError(
                f"expected (channels, height, width), got shape {arr.shape}")
        if arr.shape[0] not in (1, 3):
            raise ChannelCountError(f"expected 1 or 3 channels, got {arr.shape[0]}")
        if self.colorspace not in _COLORSPACES:
            raise ValueError(f"unknown colorspace {self.colorspace!r}")
        if arr.shape[0] == 1 and self.colorspace == RGB:
            raise ChannelCountError("single-channel image cannot be tagged rgb")
        arr = np.ascontiguousarray(arr)
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    @classmethod
    def from_array(cls, arr, colorspace: str) -> "PlanarImage":
        """Wrap a (H, W), (C, H, W), or interleaved (H, W, C) array."""
        arr = np.asarray(arr, dtype=np.float64)
        if arr.ndim == 2:
            arr = arr[None, :, :]
        elif arr.ndim == 3 and arr.shape[2] in (1, 3) and arr.shape[0] not in (1, 3):
            arr = np.moveaxis(arr, 2, 0)
        return cls(arr, colorspace)

    def plane(self, c: int) -> np.ndarray:
        return self.data[c]

    def same_shape(self, other: "PlanarImage") -> bool:
        return self.data.shape == other.data.shape


@dataclass(frozen=True)
class ResampleSpec:
    """Full-resolution evaluation strategy.

    ``resize`` downsamples by an integer factor, restores, and upsamples
    back; ``stitch`` splits into a rows-by-cols grid of non-overlapping
    patches that must tile the image exactly.
    """

    mode: str
    factor: int = 2
    grid: tuple = (2, 2)
    filter: str = "bilinear"

    def __post_init__(self):
        if self.mode not in ("resize", "stitch"):
            raise ValueError(f"unknown resample mode {self.mode!r}")
        if self.mode == "resize" and self.factor < 1:
            raise ValueError("resize factor must be >= 1")
        if self.mode == "stitch" and (self.grid[0] < 1 or self.grid[1] < 1):
            raise ValueError("stitch grid must be at least 1x1")
        if self.filter not in ("bilinear", "bicubic"):
            raise ValueError(f"unknown filter {self.filter!r}")


# ---------------------------------------------------------------------------
# Loading and saving
# ---------------------------------------------------------------------------

def load_image(path) -> PlanarImage:
    """Load a PNG or binary PPM/PGM file into a PlanarImage.

    8-bit samples map to [0, 1] as v/255 and 16-bit as v/65535 (generally
    v/maxval for netpbm). Channel count is preserved: grayscale files load
    as single-plane luma, color files as three-plane rgb.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(str(path))
    with open(path, "rb") as fh:
        magic = fh.read(8)
    if magic.startswith(b"\x89PNG"):
        return _load_png(path)
    if magic[:2] in (b"P5", b"P6"):
        return _load_netpbm(path)
    raise UnsupportedFormatError(f"{path}: not a PNG or binary PPM/PGM file")


def _load_png(path: Path) -> PlanarImage:
    try:
        img = Image.open(path)
        img.load()
    except Exception as exc:  # PIL raises assorted types for truncated data
        raise CorruptDataError(f"{path}: {exc}") from exc
    if img.mode == "P":
        img = img.convert("RGB")
    if img.mode in ("L", "RGB"):
        arr = np.asarray(img, dtype=np.float64) / 255.0
    elif img.mode in ("I;16", "I"):
        arr = np.asarray(img, dtype=np.float64) / 65535.0
    else:
        raise UnsupportedFormatError(f"{path}: unsupported PNG mode {img.mode!r}")
    if arr.ndim == 2:
        return PlanarImage(arr[None], LUMA)
    return PlanarImage(np.moveaxis(arr, 2, 0), RGB)


def _load_netpbm(path: Path) -> PlanarImage:
    with open(path, "rb") as fh:
        raw = fh.read()
    try:
        magic, width, height, maxval, payload = _parse_netpbm_header(raw)
    except CorruptDataError:
        raise
    except Exception as exc:
        raise CorruptDataError(f"{path}: bad netpbm header") from exc
    nchan = 3 if magic == b"P6" else 1
    count = width * height * nchan
    if maxval < 256:
        expect = count
        data = np.frombuffer(payload[:expect], dtype=np.uint8)
    else:
        expect = 2 * count
        data = np.frombuffer(payload[:expect], dtype=">u2")
    if data.size != count:
        raise CorruptDataError(f"{path}: truncated pixel data")
    arr = data.astype(np.float64).reshape(height, width, nchan) / float(maxval)
    if nchan == 1:
        return PlanarImage(arr[:, :, 0][None], LUMA)
    return PlanarImage(np.moveaxis(arr, 2, 0), RGB)


def _parse_netpbm_header(raw: bytes):
    magic = raw[:2]
    pos = 2
    fields = []
    while len(fields) < 3:
        while pos < len(raw) and raw[pos:pos + 1].isspace():
            pos += 1
        if raw[pos:pos + 1] == b"#":
            while pos < len(raw) and raw[pos:pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise CorruptDataError("truncated header")
        fields.append(int(raw[start:pos]))
    pos += 1  # single whitespace byte after maxval
    width, height, maxval = fields
    if width < 1 or height < 1 or not (0 < maxval < 65536):
        raise CorruptDataError("invalid netpbm dimensions")
    return magic, width, height, maxval, raw[pos:]


def save_image(img: PlanarImage, path, clip: bool = True) -> None:
    """Save to PNG (.png) or binary netpbm (.ppm/.pgm) at 8 bits.

    Values are clipped to [0, 1] by default before quantization, so
    slightly out-of-range reconstructions save without wrapping.
    """
    path = Path(path)
    data = img.data
    if clip:
        data = np.clip(data, 0.0, 1.0)
    quant = np.rint(data * 255.0).astype(np.uint8)
    suffix = path.suffix.lower()
    if suffix == ".png":
        if img.channels == 1:
            Image.fromarray(quant[0], mode="L").save(path)
        else:
            Image.fromarray(np.moveaxis(quant, 0, 2), mode="RGB").save(path)
    elif suffix in (".ppm", ".pgm"):
        magic = b"P6" if img.channels == 3 else b"P5"
        if suffix == ".pgm" and img.channels != 1:
            raise ChannelCountError("PGM requires a single channel")
        with open(path, "wb") as fh:
            fh.write(magic + b"\n%d %d\n255\n" % (img.width, img.height))
            fh.write(np.moveaxis(quant, 0, 2).tobytes())
    else:
        raise UnsupportedFormatError(f"cannot save to {suffix!r} (use .png/.ppm/.pgm)")


# ---------------------------------------------------------------------------
# Color conversion
# ---------------------------------------------------------------------------

def to_luma(img: PlanarImage) -> PlanarImage:
    """BT.601 luma: 0.299 R + 0.587 G + 0.114 B."""
    if img.channels != 3:
        raise ChannelCountError(f"to_luma needs 3 channels, got {img.channels}")
    r, g, b = LUMA_WEIGHTS
    plane = r * img.data[0] + g * img.data[1] + b * img.data[2]
    return PlanarImage(plane[None], LUMA)


def replicate_channels(img: PlanarImage) -> PlanarImage:
    """Replicate a single plane into a 3-channel rgb image."""
    if img.channels != 1:
        raise ChannelCountError("replicate_channels needs a single channel")
    return PlanarImage(np.repeat(img.data, 3, axis=0), RGB)


# ---------------------------------------------------------------------------
# Patch split / stitch
# ---------------------------------------------------------------------------

def split_patches(img: PlanarImage, grid) -> list:
    """Split into a rows-by-cols list of patches in row-major order."""
    rows, cols = grid
    if rows < 1 or cols < 1:
        raise IndivisibleDimensionsError("grid must be at least 1x1")
    if img.height % rows or img.width % cols:
        raise IndivisibleDimensionsError(
            f"{img.height}x{img.width} not divisible by grid {rows}x{cols}")
    ph, pw = img.height // rows, img.width // cols
    out = []
    for r in range(rows):
        for c in range(cols):
            patch = img.data[:, r * ph:(r + 1) * ph, c * pw:(c + 1) * pw]
            out.append(PlanarImage(patch, img.colorspace))
    return out


def stitch_patches(patches: Sequence[PlanarImage], grid) -> PlanarImage:
    """Reassemble patches produced by :func:`split_patches` (exact inverse)."""
    rows, cols = grid
    if len(patches) != rows * cols:
        raise PatchCountMismatchError(
            f"expected {rows * cols} patches for grid {rows}x{cols}, got {len(patches)}")
    first = patches[0]
    for p in patches:
        if p.data.shape != first.data.shape:
            raise DimensionMismatchError("patches must share a single shape")
    ph, pw = first.height, first.width
    out = np.empty((first.channels, rows * ph, cols * pw))
    for i, p in enumerate(patches):
        r, c = divmod(i, cols)
        out[:, r * ph:(r + 1) * ph, c * pw:(c + 1) * pw] = p.data
    return PlanarImage(out, first.colorspace)


# ---------------------------------------------------------------------------
# Resize / stitch evaluation strategies
# ---------------------------------------------------------------------------

_PIL_FILTERS = {
    "bilinear": Image.Resampling.BILINEAR,
    "bicubic": Image.Resampling.BICUBIC,
}


def _resize_planes(img: PlanarImage, size, filt: str) -> PlanarImage:
    """Resize each plane to (height, width) with the given PIL filter."""
    h, w = size
    planes = []
    for c in range(img.channels):
        pil = Image.fromarray(img.data[c].astype(np.float32), mode="F")
        planes.append(np.asarray(pil.resize((w, h), _PIL_FILTERS[filt]), dtype=np.float64))
    return PlanarImage(np.stack(planes), img.colorspace)


def resample(img: PlanarImage, spec: ResampleSpec,
             restore: Callable[[PlanarImage], PlanarImage]) -> PlanarImage:
    """Run ``restore`` under the resize or stitch strategy.

    resize: downsample by ``spec.factor``, restore, upsample back to the
    original size. stitch: split into ``spec.grid`` patches, restore each,
    reassemble. Output dimensions always equal input dimensions.
    """
    if spec.mode == "resize":
        small = (max(1, img.height // spec.factor), max(1, img.width // spec.factor))
        down = _resize_planes(img, small, spec.filter)
        restored = restore(down)
        if restored.data.shape != down.data.shape:
            raise CallbackShapeError(
                f"callback changed shape {down.data.shape} -> {restored.data.shape}")
        return _resize_planes(restored, (img.height, img.width), spec.filter)

    patches = split_patches(img, spec.grid)
    restored = []
    for p in patches:
        q = restore(p)
        if q.data.shape != p.data.shape:
            raise CallbackShapeError(
                f"callback changed shape {p.data.shape} -> {q.data.shape}")
        restored.append(q)
    return stitch_patches(restored, spec.grid)
