"""Corpus curation pipeline: two-stage low-level screening (sharpness and
edge density), texture scoring via gray-level co-occurrence statistics,
content-complexity scoring via Shannon entropy, top-fraction selection,
subset intersection, and manifest persistence."""

from __future__ import annotations

import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy.ndimage import convolve

from .errors import ChannelCountError, EmptyInputError
from .imgio import PlanarImage, load_image, to_luma

MANIFEST_SCHEMA_VERSION = 1

GLCM_ORIENTATIONS = (0, 45, 90, 135)
# (row, col) step per orientation at distance 1; symmetric counting makes
# the sign convention irrelevant.
_GLCM_OFFSETS = {0: (0, 1), 45: (-1, 1), 90: (-1, 0), 135: (-1, -1)}

LAPLACIAN_KERNEL = np.array([[0.0, 1.0, 0.0],
                             [1.0, -4.0, 1.0],
                             [0.0, 1.0, 0.0]])
SOBEL_X = np.array([[-1.0, 0.0, 1.0],
                    [-2.0, 0.0, 2.0],
                    [-1.0, 0.0, 1.0]])
SOBEL_Y = SOBEL_X.T


def _require_luma(img: PlanarImage, op: str) -> np.ndarray:
    if img.channels != 1:
        raise ChannelCountError(f"{op} needs a single-channel image")
    return img.data[0]


# ---------------------------------------------------------------------------
# Low-level screening statistics
# ---------------------------------------------------------------------------

def laplacian_variance(img: PlanarImage) -> float:
    """Variance of the 3x3 Laplacian response over interior pixels.

    Interior-only statistics keep the measure invariant to whole-pixel
    translation; an affine ramp therefore scores exactly zero.
    """
    plane = _require_luma(img, "laplacian_variance")
    resp = convolve(plane, LAPLACIAN_KERNEL, mode="nearest")
    interior = resp[1:-1, 1:-1]
    if interior.size == 0:
        return 0.0
    return float(interior.var())


def sobel_edge_density(img: PlanarImage, mag_threshold: float = 0.1) -> float:
    """Fraction of interior pixels whose Sobel gradient magnitude exceeds
    the threshold."""
    plane = _require_luma(img, "sobel_edge_density")
    gx = convolve(plane, SOBEL_X, mode="nearest")[1:-1, 1:-1]
    gy = convolve(plane, SOBEL_Y, mode="nearest")[1:-1, 1:-1]
    if gx.size == 0:
        return 0.0
    mag = np.hypot(gx, gy)
    return float(np.count_nonzero(mag > mag_threshold) / mag.size)


# ---------------------------------------------------------------------------
# Texture and complexity scores
# ---------------------------------------------------------------------------

def quantize_levels(plane: np.ndarray, levels: int) -> np.ndarray:
    """Map [0,1] samples onto integer bins 0..levels-1."""
    q = np.floor(plane * levels).astype(np.intp)
    return np.clip(q, 0, levels - 1)


def co_occurrence_matrix(img: PlanarImage, levels: int = 64, distance: int = 1,
                         orientation: int = 0) -> np.ndarray:
    """Normalized symmetric co-occurrence matrix for one orientation.

    All in-bounds pixel pairs at the orientation's offset are counted in
    both directions, then the matrix is normalized to sum to one. An image
    with no valid pairs yields the all-zero matrix.
    """
    if levels < 2:
        raise ValueError("levels must be at least 2")
    plane = _require_luma(img, "co_occurrence_matrix")
    q = quantize_levels(plane, levels)
    h, w = q.shape
    dr, dc = _GLCM_OFFSETS[orientation]
    dr, dc = dr * distance, dc * distance
    r0, r1 = max(0, -dr), min(h, h - dr)
    c0, c1 = max(0, -dc), min(w, w - dc)
    a = q[r0:r1, c0:c1].ravel()
    b = q[r0 + dr:r1 + dr, c0 + dc:c1 + dc].ravel()
    counts = np.bincount(a * levels + b, minlength=levels * levels)
    mat = counts.reshape(levels, levels).astype(np.float64)
    mat = mat + mat.T
    total = mat.sum()
    return mat / total if total > 0 else mat


def glcm_stats(img: PlanarImage, levels: int = 64, distance: int = 1,
               orientations=GLCM_ORIENTATIONS) -> dict:
    """Co-occurrence statistics per orientation.

    Returns {orientation: {contrast, entropy, correlation, degenerate}}.
    Entropy is in bits. A single-gray-level image has zero marginal spread,
    so correlation is reported as 0 with the degenerate flag set.
    """
    out = {}
    for ang in orientations:
        p = co_occurrence_matrix(img, levels, distance, ang)
        if p.sum() == 0:
            out[ang] = {"contrast": 0.0, "entropy": 0.0,
                        "correlation": 0.0, "degenerate": True}
            continue
        i = np.arange(levels)[:, None]
        j = np.arange(levels)[None, :]
        contrast = float((p * (i - j) ** 2).sum())
        nz = p[p > 0]
        entropy = float(-(nz * np.log2(nz)).sum())
        marg = p.sum(axis=1)
        mu = float((np.arange(levels) * marg).sum())
        var = float(((np.arange(levels) - mu) ** 2 * marg).sum())
        if var == 0.0:
            out[ang] = {"contrast": contrast, "entropy": entropy,
                        "correlation": 0.0, "degenerate": True}
        else:
            corr = float((p * (i - mu) * (j - mu)).sum() / var)
            out[ang] = {"contrast": contrast, "entropy": entropy,
                        "correlation": corr, "degenerate": False}
    return out


def shannon_entropy(img: PlanarImage) -> float:
    """Entropy in bits of the 256-bin intensity histogram."""
    plane = _require_luma(img, "shannon_entropy")
    counts = np.bincount(quantize_levels(plane, 256).ravel(), minlength=256)
    p = counts[counts > 0] / counts.sum()
    return float(-(p * np.log2(p)).sum())


# ---------------------------------------------------------------------------
# Screening and selection
# ---------------------------------------------------------------------------

@dataclass
class QualityReport:
    """Per-image screening statistics plus the selection flags filled in
    by the pipeline."""

    path: str
    width: int
    height: int
    laplacian_var: float
    edge_density: float
    glcm: dict
    glcm_score: float
    shannon_entropy: float
    passed_screen: bool = False
    in_sg: bool = False
    in_se: bool = False
    selected: bool = False


@dataclass(frozen=True)
class CurationConfig:
    """Pipeline knobs. The screening thresholds are implementation
    defaults, not values taken from any reference corpus."""

    lap_low: float = 10.0 / 255.0 ** 2
    lap_high: float = math.inf
    edge_min: float = 0.01
    edge_threshold: float = 0.1
    glcm_levels: int = 64
    glcm_distance: int = 1
    fraction: float = 0.5
    approved: tuple | None = None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["lap_high"] = "inf" if math.isinf(self.lap_high) else self.lap_high
        d["approved"] = list(self.approved) if self.approved is not None else None
        return d


def screen_corpus(reports, lap_low: float, lap_high: float, edge_min: float):
    """Candidate set S: moderate sharpness plus sufficient edge content."""
    return [
        r for r in reports
        if lap_low <= r.laplacian_var <= lap_high and r.edge_density >= edge_min
    ]


def select_top_fraction(scores: dict, fraction: float = 0.5) -> set:
    """Paths of the ceil(fraction*n) highest scores; ties break toward
    lexicographically earlier paths so selection is deterministic."""
    if not scores:
        raise EmptyInputError("no scores to select from")
    if not (0.0 < fraction <= 1.0):
        raise ValueError("fraction must be in (0, 1]")
    n = math.ceil(fraction * len(scores))
    ranked = sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))
    return {path for path, _ in ranked[:n]}


def aggregate_glcm_scores(reports) -> dict:
    """Detail-richness score: mean over orientations of the z-normalized
    contrast + entropy + correlation, normalized across the given reports."""
    stats = ("contrast", "entropy", "correlation")
    if not reports:
        return {}
    norm = {}
    for ang in GLCM_ORIENTATIONS:
        for st in stats:
            vals = np.array([r.glcm[ang][st] for r in reports])
            std = vals.std()
            mean = vals.mean()
            norm[(ang, st)] = (mean, std if std > 0 else None)
    scores = {}
    for r in reports:
        per_ang = []
        for ang in GLCM_ORIENTATIONS:
            z = 0.0
            for st in stats:
                mean, std = norm[(ang, st)]
                if std is not None:
                    z += (r.glcm[ang][st] - mean) / std
            per_ang.append(z)
        scores[r.path] = float(np.mean(per_ang))
    return scores


# ---------------------------------------------------------------------------
# Pipeline
# ---------------------------------------------------------------------------

IMAGE_SUFFIXES = (".png", ".ppm", ".pgm")


def compute_report(path, config: CurationConfig) -> QualityReport:
    img = load_image(path)
    luma = to_luma(img) if img.channels == 3 else img
    glcm = glcm_stats(luma, levels=config.glcm_levels, distance=config.glcm_distance)
    return QualityReport(
        path=str(path),
        width=img.width,
        height=img.height,
        laplacian_var=laplacian_variance(luma),
        edge_density=sobel_edge_density(luma, config.edge_threshold),
        glcm=glcm,
        glcm_score=0.0,
        shannon_entropy=shannon_entropy(luma),
    )


@dataclass
class CurationManifest:
    config: dict
    counts: dict
    reports: list
    errors: list
    created_at: str
    schema_version: int = MANIFEST_SCHEMA_VERSION

    def to_json(self) -> str:
        doc = {
            "schema_version": self.schema_version,
            "created_at": self.created_at,
            "config": self.config,
            "counts": self.counts,
            "errors": self.errors,
            "reports": [asdict(r) for r in self.reports],
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "CurationManifest":
        doc = json.loads(text)
        reports = []
        for rec in doc["reports"]:
            rec = dict(rec)
            rec["glcm"] = {int(k): v for k, v in rec["glcm"].items()}
            reports.append(QualityReport(**rec))
        return cls(config=doc["config"], counts=doc["counts"], reports=reports,
                   errors=doc["errors"], created_at=doc["created_at"],
                   schema_version=doc["schema_version"])

    def selected_paths(self) -> list:
        return [r.path for r in self.reports if r.selected]

    def to_csv(self) -> str:
        cols = ["path", "width", "height", "laplacian_var", "edge_density",
                "glcm_score", "shannon_entropy", "passed_screen", "in_sg",
                "in_se", "selected"]
        lines = [",".join(cols)]
        for r in self.reports:
            vals = [getattr(r, c) for c in cols]
            lines.append(",".join(str(v) for v in vals))
        return "\n".join(lines) + "\n"


def _timestamp() -> str:
    # SOURCE_DATE_EPOCH makes manifests byte-reproducible when set.
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    t = float(epoch) if epoch else time.time()
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime(t))


def run_pipeline(corpus_dir, config: CurationConfig | None = None,
                 threads: int = 0) -> CurationManifest:
    """Screen, score, and select a corpus directory into a manifest.

    Per-image failures are recorded and skipped rather than aborting the
    run. Deterministic for a fixed corpus and config: reports are ordered
    by path and scoring is corpus-order independent.
    """
    config = config or CurationConfig()
    paths = sorted(p for p in Path(corpus_dir).iterdir()
                   if p.suffix.lower() in IMAGE_SUFFIXES)
    reports, errors = [], []
    workers = threads if threads > 0 else (os.cpu_count() or 1)

    def worker(path):
        try:
            return compute_report(path, config), None
        except Exception as exc:
            return None, {"path": str(path), "error": str(exc)}

    if workers == 1 or len(paths) <= 1:
        results = [worker(p) for p in paths]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(worker, paths))
    for rep, err in results:
        if rep is not None:
            reports.append(rep)
        else:
            errors.append(err)

    screened = screen_corpus(reports, config.lap_low, config.lap_high,
                             config.edge_min)
    for r in screened:
        r.passed_screen = True
    if screened:
        glcm_scores = aggregate_glcm_scores(screened)
        for r in screened:
            r.glcm_score = glcm_scores[r.path]
        s_g = select_top_fraction(glcm_scores, config.fraction)
        s_e = select_top_fraction(
            {r.path: r.shannon_entropy for r in screened}, config.fraction)
    else:
        s_g, s_e = set(), set()
    selected = s_g & s_e
    if config.approved is not None:
        selected &= set(config.approved)
    for r in reports:
        r.in_sg = r.path in s_g
        r.in_se = r.path in s_e
        r.selected = r.path in selected

    counts = {
        "total": len(paths),
        "loaded": len(reports),
        "failed": len(errors),
        "screened": len(screened),
        "s_g": len(s_g),
        "s_e": len(s_e),
        "selected": len(selected),
    }
    return CurationManifest(config=config.to_dict(), counts=counts,
                            reports=reports, errors=errors,
                            created_at=_timestamp())
