"""Benchmark synthesis: seeded Gaussian noise, JPEG round-trips at fixed
quality factors, and paired train/val/test split assembly with a
provenance index."""

from __future__ import annotations

import hashlib
import io
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import (
    ChannelCountError,
    CodecError,
    InsufficientImagesError,
    InsufficientSpecsError,
)
from .imgio import PlanarImage, load_image, save_image

INDEX_VERSION = 1
JPEG_SUBSAMPLING = "4:2:0"  # Pillow subsampling=2; recorded because codecs differ


@dataclass(frozen=True)
class DegradationSpec:
    """One synthetic degradation: ``gaussian_noise`` with an 8-bit-scale
    sigma, or ``jpeg`` with a quality factor 1..100."""

    kind: str
    sigma: float = 0.0
    quality: int = 0

    def __post_init__(self):
        if self.kind == "gaussian_noise":
            if not self.sigma > 0:
                raise ValueError("gaussian_noise needs sigma > 0")
        elif self.kind == "jpeg":
            if not 1 <= self.quality <= 100:
                raise ValueError("jpeg quality must be in 1..100")
        else:
            raise ValueError(f"unknown degradation kind {self.kind!r}")

    @property
    def tag(self) -> str:
        if self.kind == "gaussian_noise":
            return f"noise{self.sigma:g}"
        return f"jpeg{self.quality}"

    def to_dict(self) -> dict:
        if self.kind == "gaussian_noise":
            return {"kind": self.kind, "sigma": self.sigma}
        return {"kind": self.kind, "quality": self.quality}


@dataclass(frozen=True)
class BenchmarkSpec:
    """Split sizes, degradations, and the master seed of a benchmark."""

    splits: dict
    specs: tuple
    seed: int = 0

    def __post_init__(self):
        for name in ("train", "val", "test"):
            if self.splits.get(name, 0) < 0:
                raise ValueError(f"split {name} cannot be negative")
        object.__setattr__(self, "specs", tuple(self.specs))


def derive_seed(master_seed: int, key: str) -> int:
    """Stable per-item substream seed from (master seed, path-like key);
    hashing keeps outputs independent of processing order and thread
    count."""
    digest = hashlib.blake2b(f"{master_seed}:{key}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def add_gaussian_noise(img: PlanarImage, sigma: float, seed: int) -> PlanarImage:
    """clamp(img + N(0, (sigma/255)^2)) with i.i.d. per-sample noise;
    sigma is on the 8-bit scale."""
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    rng = np.random.default_rng(seed)
    noisy = img.data + rng.normal(0.0, sigma / 255.0, size=img.data.shape)
    return PlanarImage(np.clip(noisy, 0.0, 1.0), img.colorspace)


def jpeg_roundtrip(img: PlanarImage, quality: int) -> PlanarImage:
    """Encode to baseline JPEG at the given quality factor (4:2:0 chroma)
    and decode back to [0,1] RGB."""
    if img.channels != 3:
        raise ChannelCountError("jpeg_roundtrip needs an RGB image")
    if not 1 <= quality <= 100:
        raise ValueError("quality must be in 1..100")
    quant = np.rint(np.clip(img.data, 0.0, 1.0) * 255.0).astype(np.uint8)
    try:
        buf = io.BytesIO()
        Image.fromarray(np.moveaxis(quant, 0, 2), mode="RGB").save(
            buf, format="JPEG", quality=quality, subsampling=2)
        buf.seek(0)
        decoded = Image.open(buf)
        decoded.load()
        arr = np.asarray(decoded, dtype=np.float64) / 255.0
    except (OSError, ValueError) as exc:
        raise CodecError(f"JPEG round trip failed: {exc}") from exc
    if arr.shape[:2] != (img.height, img.width):
        raise CodecError("codec changed the image dimensions")
    return PlanarImage(np.moveaxis(arr, 2, 0), img.colorspace)


def apply_degradation(img: PlanarImage, spec: DegradationSpec, seed: int) -> PlanarImage:
    if spec.kind == "gaussian_noise":
        return add_gaussian_noise(img, spec.sigma, seed)
    return jpeg_roundtrip(img, spec.quality)


# ---------------------------------------------------------------------------
# Benchmark assembly
# ---------------------------------------------------------------------------

def _assign_splits(paths, spec: BenchmarkSpec):
    """Seeded shuffle then contiguous split assignment."""
    counts = {name: spec.splits.get(name, 0) for name in ("train", "val", "test")}
    need = sum(counts.values())
    if need > len(paths):
        raise InsufficientImagesError(
            f"splits need {need} images, corpus has {len(paths)}")
    rng = np.random.default_rng(spec.seed)
    order = [paths[i] for i in rng.permutation(len(paths))]
    assignment = []
    pos = 0
    for name in ("train", "val", "test"):
        for _ in range(counts[name]):
            assignment.append((order[pos], name))
            pos += 1
    return assignment


def build_benchmark(selected_paths, spec: BenchmarkSpec, out_dir,
                    threads: int = 0) -> dict:
    """Write clean/degraded pairs under out_dir/{split}/{gt,input_tag}/ and
    an index.json with per-pair provenance. Returns the index document.

    ``selected_paths`` is typically a curation manifest's selected set.
    Rebuilding with the same seed reproduces the index byte for byte.
    """
    if not spec.specs:
        raise InsufficientSpecsError("benchmark needs at least one degradation spec")
    paths = sorted(str(p) for p in selected_paths)
    if not paths:
        raise InsufficientImagesError("selected set is empty")
    stems = [Path(p).stem for p in paths]
    if len(set(stems)) != len(stems):
        raise InsufficientImagesError("duplicate basenames in the selected set")
    assignment = _assign_splits(paths, spec)
    out_dir = Path(out_dir)

    def process(item):
        src, split = item
        stem = Path(src).stem
        img = load_image(src)
        gt_path = out_dir / split / "gt" / f"{stem}.png"
        gt_path.parent.mkdir(parents=True, exist_ok=True)
        save_image(img, gt_path)
        inputs = []
        for dspec in spec.specs:
            item_seed = derive_seed(spec.seed, f"{stem}/{dspec.tag}")
            degraded = apply_degradation(img, dspec, item_seed)
            dst = out_dir / split / f"input_{dspec.tag}" / f"{stem}.png"
            dst.parent.mkdir(parents=True, exist_ok=True)
            save_image(degraded, dst)
            entry = dspec.to_dict()
            entry.update({"tag": dspec.tag, "seed": item_seed,
                          "path": str(dst.relative_to(out_dir))})
            inputs.append(entry)
        return {"source": src, "split": split,
                "gt": str(gt_path.relative_to(out_dir)), "inputs": inputs}

    workers = threads if threads > 0 else (os.cpu_count() or 1)
    if workers == 1 or len(assignment) <= 1:
        entries = [process(it) for it in assignment]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            entries = list(pool.map(process, assignment))
    entries.sort(key=lambda e: (e["split"], e["source"]))
    index = {
        "version": INDEX_VERSION,
        "seed": spec.seed,
        "splits": {n: spec.splits.get(n, 0) for n in ("train", "val", "test")},
        "codec": {"jpeg": "baseline", "subsampling": JPEG_SUBSAMPLING},
        "entries": entries,
    }
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "index.json", "w") as fh:
        json.dump(index, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return index
