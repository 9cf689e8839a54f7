"""Command-line front end: analyze, evaluate, curate, degrade, kan-check,
and dct subcommands with TOML config files, seeded determinism, and
order-stable parallel execution.

Exit codes: 0 success, 2 usage or bad parameters, 3 I/O failure, 4 data
inconsistency, 5 tolerance failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from . import analysis, curation, degrade, metrics, neuralkernels
from .errors import (
    CodecError,
    CorruptDataError,
    CutoffRangeError,
    InsufficientImagesError,
    InsufficientSpecsError,
    SpectraDecError,
    UnsupportedFormatError,
)
from .imgio import load_image, save_image
from .spectral import dct2, dct2_tiled, write_spectrum

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_DATA = 4
EXIT_TOLERANCE = 5

THREADS_ENV = "SPECTRADEC_THREADS"
KAN_TOLERANCE = 1e-4
KINK_EPS = 1e-6
FD_STEP = 1e-5


@dataclass
class RunConfig:
    threads: int = 0        # 0 = one worker per CPU
    seed: int = 0
    tile_size: int | None = None
    cutoff_k: int = 8
    fmt: str = "csv"

    @property
    def workers(self) -> int:
        return self.threads if self.threads > 0 else (os.cpu_count() or 1)


def _load_toml(path) -> dict:
    with open(path, "rb") as fh:
        return tomllib.load(fh)


def _resolve_config(args) -> RunConfig:
    """Defaults, then the [run] table of --config, then the environment
    thread fallback, then explicit flags."""
    cfg = RunConfig()
    doc = _load_toml(args.config).get("run", {}) if getattr(args, "config", None) else {}
    for key, attr in (("threads", "threads"), ("seed", "seed"),
                      ("tile_size", "tile_size"), ("cutoff_k", "cutoff_k"),
                      ("format", "fmt")):
        if key in doc:
            setattr(cfg, attr, doc[key])
    env_threads = os.environ.get(THREADS_ENV)
    if getattr(args, "threads", None) is not None:
        cfg.threads = args.threads
    elif env_threads is not None and "threads" not in doc:
        cfg.threads = int(env_threads)
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "tile", None) is not None:
        cfg.tile_size = args.tile
    if getattr(args, "k", None) is not None:
        cfg.cutoff_k = args.k
    if getattr(args, "format", None) is not None:
        cfg.fmt = args.format
    return cfg


def _map_ordered(fn, items, workers: int):
    """Parallel map whose output order always matches the input order."""
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# analyze
# ---------------------------------------------------------------------------

def cmd_analyze(args, cfg: RunConfig) -> int:
    inp = load_image(args.input)
    gt = load_image(args.gt)
    ks = [int(s) for s in args.ks.split(",")] if args.ks else None
    swap = analysis.zero_swap_experiment(inp, gt)
    curve = analysis.progressive_fill_curve(inp, gt, ks=ks,
                                            include_dc=not args.no_dc,
                                            threads=cfg.workers)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "curve.csv").write_text(curve.to_csv())
    (out / "curve.json").write_text(curve.to_json())
    save_image(swap.exchanged_input, out / "exchanged_input.png")
    save_image(swap.exchanged_gt, out / "exchanged_gt.png")
    swap_doc = {"psnr_in": swap.psnr_in, "psnr_xin": swap.psnr_xin,
                "psnr_xgt": swap.psnr_xgt}
    (out / "swap.json").write_text(
        json.dumps(metrics.jsonable(swap_doc), indent=2) + "\n")
    return EXIT_OK


# ---------------------------------------------------------------------------
# evaluate
# ---------------------------------------------------------------------------

_EVAL_COLUMNS = ("path", "psnr", "ssim", "zf_psnr", "l_zf", "l_lf", "l_hf", "k")


def _record_row(rec: metrics.MetricsRecord) -> str:
    vals = [rec.path] + [metrics.format_value(getattr(rec, c))
                         for c in _EVAL_COLUMNS[1:-1]] + [str(rec.k)]
    return ",".join(vals)


def cmd_evaluate(args, cfg: RunConfig) -> int:
    restored_dir = Path(args.restored)
    gt_dir = Path(args.gt)
    suffixes = curation.IMAGE_SUFFIXES
    restored = {p.name: p for p in restored_dir.iterdir() if p.suffix.lower() in suffixes}
    gts = {p.name: p for p in gt_dir.iterdir() if p.suffix.lower() in suffixes}
    common = sorted(set(restored) & set(gts))
    missing = sorted(set(restored) ^ set(gts))

    def one(name):
        return metrics.compute_record(load_image(restored[name]),
                                      load_image(gts[name]),
                                      cfg.cutoff_k, path=name)

    records = _map_ordered(one, common, cfg.workers)
    means = None
    if records:
        means = metrics.MetricsRecord(
            path="mean",
            psnr=float(np.mean([r.psnr for r in records])),
            ssim=float(np.mean([r.ssim for r in records])),
            zf_psnr=float(np.mean([r.zf_psnr for r in records])),
            l_zf=float(np.mean([r.l_zf for r in records])),
            l_lf=float(np.mean([r.l_lf for r in records])),
            l_hf=float(np.mean([r.l_hf for r in records])),
            k=cfg.cutoff_k,
        )
    if cfg.fmt == "json":
        from dataclasses import asdict
        doc = {"records": [asdict(r) for r in records],
               "mean": asdict(means) if means else None}
        text = json.dumps(metrics.jsonable(doc), indent=2) + "\n"
    else:
        lines = [",".join(_EVAL_COLUMNS)]
        lines.extend(_record_row(r) for r in records)
        if means:
            lines.append(_record_row(means))
        text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    if missing:
        for name in missing:
            where = "restored" if name in restored else "gt"
            print(f"missing pair: {name} (only in {where})", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


# ---------------------------------------------------------------------------
# curate
# ---------------------------------------------------------------------------

def _curation_config(args) -> curation.CurationConfig:
    doc = {}
    if args.config:
        doc = _load_toml(args.config).get("curation", {})
    kwargs = {}
    for key in ("lap_low", "lap_high", "edge_min", "edge_threshold",
                "glcm_levels", "glcm_distance", "fraction"):
        if key in doc:
            kwargs[key] = doc[key]
    if "approved" in doc and doc["approved"] is not None:
        kwargs["approved"] = tuple(doc["approved"])
    return curation.CurationConfig(**kwargs)


def cmd_curate(args, cfg: RunConfig) -> int:
    config = _curation_config(args)
    manifest = curation.run_pipeline(args.corpus, config, threads=cfg.workers)
    Path(args.out).write_text(manifest.to_json())
    if args.csv:
        Path(args.csv).write_text(manifest.to_csv())
    return EXIT_OK


# ---------------------------------------------------------------------------
# degrade
# ---------------------------------------------------------------------------

def _benchmark_spec(path, seed_override=None) -> degrade.BenchmarkSpec:
    doc = _load_toml(path)
    doc = doc.get("benchmark", doc)
    specs = []
    for entry in doc.get("degradations", []):
        kind = entry.get("kind")
        if kind == "gaussian_noise":
            specs.append(degrade.DegradationSpec(kind, sigma=float(entry["sigma"])))
        elif kind == "jpeg":
            specs.append(degrade.DegradationSpec(kind, quality=int(entry["quality"])))
        else:
            raise ValueError(f"unknown degradation kind {kind!r}")
    seed = seed_override if seed_override is not None else int(doc.get("seed", 0))
    return degrade.BenchmarkSpec(splits=dict(doc.get("splits", {})),
                                 specs=tuple(specs), seed=seed)


def cmd_degrade(args, cfg: RunConfig) -> int:
    manifest = curation.CurationManifest.from_json(Path(args.manifest).read_text())
    spec = _benchmark_spec(args.spec, seed_override=args.seed)
    degrade.build_benchmark(manifest.selected_paths(), spec, args.out,
                            threads=cfg.workers)
    return EXIT_OK


# ---------------------------------------------------------------------------
# kan-check
# ---------------------------------------------------------------------------

def _grad_check(act: neuralkernels.RationalActivation, xs: np.ndarray) -> float:
    """Max relative error between analytic and central-FD gradients,
    kink samples excluded."""
    h = FD_STEP
    worst = 0.0

    def rel(a, f):
        return abs(a - f) / max(abs(a), abs(f), KINK_EPS)

    for grp in range(act.groups):
        sub = neuralkernels.RationalActivation(act.numer[grp:grp + 1],
                                               act.denom[grp:grp + 1])
        b_row = sub.denom[0]
        for x in xs:
            s = sum(b_row[j] * x ** (j + 1) for j in range(b_row.size))
            if abs(s) <= KINK_EPS:
                continue
            dx, da, db = neuralkernels.rational_backward(float(x), sub)
            fd_dx = (neuralkernels.rational_forward(x + h, sub)
                     - neuralkernels.rational_forward(x - h, sub)) / (2 * h)
            worst = max(worst, rel(float(dx), float(fd_dx)))
            for i in range(sub.numer.shape[1]):
                up = sub.numer.copy()
                dn = sub.numer.copy()
                up[0, i] += h
                dn[0, i] -= h
                fd = (neuralkernels.rational_forward(
                          x, neuralkernels.RationalActivation(up, sub.denom))
                      - neuralkernels.rational_forward(
                          x, neuralkernels.RationalActivation(dn, sub.denom))) / (2 * h)
                worst = max(worst, rel(float(da[i]), float(fd)))
            for j in range(sub.denom.shape[1]):
                up = sub.denom.copy()
                dn = sub.denom.copy()
                up[0, j] += h
                dn[0, j] -= h
                fd = (neuralkernels.rational_forward(
                          x, neuralkernels.RationalActivation(sub.numer, up))
                      - neuralkernels.rational_forward(
                          x, neuralkernels.RationalActivation(sub.numer, dn))) / (2 * h)
                worst = max(worst, rel(float(db[j]), float(fd)))
    return worst


def cmd_kan_check(args, cfg: RunConfig) -> int:
    try:
        stack = neuralkernels.stack_from_json(Path(args.stack).read_text())
    except json.JSONDecodeError as exc:
        print(f"cannot parse {args.stack}: line {exc.lineno} col {exc.colno}: "
              f"{exc.msg}", file=sys.stderr)
        return EXIT_USAGE
    except KeyError as exc:
        print(f"stack file {args.stack} is missing field {exc}", file=sys.stderr)
        return EXIT_USAGE
    rng = np.random.default_rng(cfg.seed)
    xs = rng.uniform(-5.0, 5.0, size=args.trials)
    grad_err = 0.0
    for layer in stack.layers:
        grad_err = max(grad_err, _grad_check(layer.activation, xs))

    ident = neuralkernels.identity_stack(stack.window_len, depth=stack.depth)
    probe = rng.standard_normal((3, 24, 24))
    pipeline_err = float(np.abs(
        neuralkernels.fwkan_pipeline(probe, ident) - probe).max())

    windows = rng.standard_normal((1, 4, stack.window_len))
    base = neuralkernels.apply_stack(windows, stack)
    bumped = windows.copy()
    bumped[0, 0, :] += 1.0
    after = neuralkernels.apply_stack(bumped, stack)
    locality_exact = bool(np.array_equal(base[0, 1:], after[0, 1:]))

    ok = (grad_err < KAN_TOLERANCE and pipeline_err < KAN_TOLERANCE
          and locality_exact)
    report = {
        "trials": int(args.trials),
        "seed": cfg.seed,
        "grad_max_rel_err": grad_err,
        "pipeline_max_err": pipeline_err,
        "locality_exact": locality_exact,
        "tolerance": KAN_TOLERANCE,
        "pass": ok,
    }
    text = json.dumps(metrics.jsonable(report), indent=2) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK if ok else EXIT_TOLERANCE


# ---------------------------------------------------------------------------
# dct
# ---------------------------------------------------------------------------

def cmd_dct(args, cfg: RunConfig) -> int:
    img = load_image(args.input)
    if cfg.tile_size:
        spec = dct2_tiled(img, cfg.tile_size)
    else:
        spec = dct2(img)
    write_spectrum(spec, args.out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser and dispatch
# ---------------------------------------------------------------------------

def _add_common(p: argparse.ArgumentParser) -> None:
    # SUPPRESS keeps subcommand-level flags from clobbering values already
    # parsed at the top level when the flag is omitted.
    p.add_argument("--config", default=argparse.SUPPRESS, help="TOML config file")
    p.add_argument("--threads", type=int, default=argparse.SUPPRESS,
                   help=f"worker count, 0 = auto (env {THREADS_ENV})")
    p.add_argument("--seed", type=int, default=argparse.SUPPRESS,
                   help="master RNG seed")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spectradec",
        description="DCT-domain frequency decoupling toolkit")
    parser.add_argument("--config", help="TOML config file")
    parser.add_argument("--threads", type=int, default=None,
                        help=f"worker count, 0 = auto (env {THREADS_ENV})")
    parser.add_argument("--seed", type=int, default=None, help="master RNG seed")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="zero-swap and progressive fill curve")
    p.add_argument("--input", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--ks", help="comma-separated cutoffs, default log-spaced")
    p.add_argument("--no-dc", action="store_true",
                   help="exclude the zero-frequency term from the exchange")
    _add_common(p)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("evaluate", help="per-image quality metrics")
    p.add_argument("--restored", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--k", type=int, default=None, help="frequency cutoff")
    p.add_argument("--out", help="output path (default stdout)")
    p.add_argument("--format", choices=("csv", "json"), default=None)
    _add_common(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("curate", help="corpus screening and selection")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True, help="manifest JSON path")
    p.add_argument("--csv", help="optional CSV export path")
    _add_common(p)
    p.set_defaults(func=cmd_curate)

    p = sub.add_parser("degrade", help="build a degradation benchmark")
    p.add_argument("--manifest", required=True)
    p.add_argument("--spec", required=True, help="TOML benchmark spec")
    p.add_argument("--out", required=True, help="benchmark directory")
    _add_common(p)
    p.set_defaults(func=cmd_degrade)

    p = sub.add_parser("kan-check", help="gradient and pipeline checks")
    p.add_argument("--stack", required=True, help="stack JSON file")
    p.add_argument("--trials", type=int, default=200)
    p.add_argument("--out", help="report JSON path (default stdout)")
    _add_common(p)
    p.set_defaults(func=cmd_kan_check)

    p = sub.add_parser("dct", help="dump a raw spectrum file")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--tile", type=int, default=None,
                   help="per-tile transform (not equivalent to whole-image)")
    _add_common(p)
    p.set_defaults(func=cmd_dct)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        cfg = _resolve_config(args)
        return args.func(args, cfg)
    except (InsufficientImagesError, InsufficientSpecsError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (FileNotFoundError, UnsupportedFormatError, CorruptDataError,
            CodecError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (CutoffRangeError, SpectraDecError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
