"""Dataset pairing, degradation synthesis, batch evaluation, report
emission, and qualitative montages.

Reports carry no timestamps and a config fingerprint, so two runs under
the same configuration produce byte-identical files and silent protocol
drift is detectable.
"""

from __future__ import annotations

import hashlib
import json
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .errors import DimensionError, ManifestError
from .image import Image, PixelFormat, load_image, modcrop, store_image
from .metrics import EvalRecord, SsimParams, evaluate_pair
from .pipeline import PipelineConfig, make_backend, run_pipeline
from .resample import KernelSpec, degrade, nearest_upscale

SUPPORTED_SUFFIXES = (".png", ".pgm", ".ppm")


@dataclass(frozen=True)
class ManifestEntry:
    name: str
    hr_path: Path
    lr_path: Path | None = None


@dataclass(frozen=True)
class DatasetManifest:
    """Paired evaluation entries, ordered by name."""

    entries: tuple[ManifestEntry, ...]
    scale: int = 4
    notes: str = ""


@dataclass(frozen=True)
class MetricConfig:
    shave: int = 4
    ssim: SsimParams = SsimParams()


@dataclass(frozen=True)
class Report:
    records: tuple[EvalRecord, ...]
    aggregate_psnr: float
    aggregate_ssim: float
    aggregate_score: float
    config_fingerprint: str
    tool_version: str = __version__
    partial: bool = False
    failures: tuple[tuple[str, str], ...] = ()


def _scan_images(directory: Path) -> dict[str, Path]:
    if not directory.is_dir():
        raise ManifestError(f"not a directory: {directory}")
    found: dict[str, Path] = {}
    for path in sorted(directory.iterdir()):
        if path.suffix.lower() not in SUPPORTED_SUFFIXES or not path.is_file():
            continue
        if path.stem in found:
            raise ManifestError(
                f"duplicate stem {path.stem!r} in {directory}: "
                f"{found[path.stem].name} vs {path.name}"
            )
        found[path.stem] = path
    return found


def build_manifest(
    hr_dir: str | Path, lr_dir: str | Path | None = None, scale: int = 4
) -> DatasetManifest:
    """Pair HR (and optionally LR) files by stem, case sensitively."""
    hr_dir = Path(hr_dir)
    if not hr_dir.is_dir():
        raise ManifestError(f"not a directory: {hr_dir}")
    hr_files = _scan_images(hr_dir)
    if not hr_files:
        raise ManifestError(f"no supported images found in {hr_dir}")

    lr_files: dict[str, Path] = {}
    if lr_dir is not None:
        lr_dir = Path(lr_dir)
        if not lr_dir.is_dir():
            raise ManifestError(f"not a directory: {lr_dir}")
        lr_files = _scan_images(lr_dir)
        missing = sorted(set(hr_files) - set(lr_files))
        if missing:
            raise ManifestError(f"no LR image for stem(s): {', '.join(missing)}")
        orphans = sorted(set(lr_files) - set(hr_files))
        if orphans:
            raise ManifestError(f"LR stem(s) without HR: {', '.join(orphans)}")

    entries = tuple(
        ManifestEntry(name=stem, hr_path=path, lr_path=lr_files.get(stem))
        for stem, path in sorted(hr_files.items())
    )
    return DatasetManifest(entries=entries, scale=scale)


def synthesize_lr(
    m: DatasetManifest, out_dir: str | Path, k: KernelSpec = KernelSpec()
) -> DatasetManifest:
    """Fill missing LR entries by modcrop + bicubic downsample.

    LR images are written as 16-bit files so quantization error stays
    below metric tolerances; outputs are byte-identical across runs.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for entry in m.entries:
        if entry.lr_path is not None:
            entries.append(entry)
            continue
        hr = load_image(entry.hr_path)
        lr = degrade(modcrop(hr, m.scale), m.scale, k)
        lr_path = out_dir / f"{entry.name}.png"
        store_image(lr, lr_path, PixelFormat(depth=16, channels=lr.channels))
        entries.append(ManifestEntry(entry.name, entry.hr_path, lr_path))
    return DatasetManifest(entries=tuple(entries), scale=m.scale, notes=m.notes)


def fingerprint_dict(desc: dict) -> str:
    """Stable short hash of a JSON-able description."""
    blob = json.dumps(desc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


def config_fingerprint(cfg: PipelineConfig, metric: MetricConfig) -> str:
    """Hash of everything that shapes the numbers in a report."""
    return fingerprint_dict(
        {
            "pipeline": cfg.describe(),
            "metrics": {"shave": metric.shave, "ssim": metric.ssim.describe()},
        }
    )


def run_eval(
    m: DatasetManifest,
    cfg: PipelineConfig,
    metric: MetricConfig = MetricConfig(),
    workers: int = 1,
    sr_out_dir: str | Path | None = None,
) -> Report:
    """Restore and score every manifest entry.

    Entries are processed by a worker pool in which each worker owns its
    own backend connections; records are re-ordered by name before
    aggregation, so reports are independent of the worker count. Entry
    failures are collected (not raised) and mark the report as partial.
    """
    if not m.entries:
        raise ManifestError("manifest has no entries")
    missing = [e.name for e in m.entries if e.lr_path is None]
    if missing:
        raise ManifestError(f"entries lack LR images: {', '.join(missing)}")
    if sr_out_dir is not None:
        sr_out_dir = Path(sr_out_dir)
        sr_out_dir.mkdir(parents=True, exist_ok=True)

    local = threading.local()
    created: list = []
    created_lock = threading.Lock()

    def thread_backends():
        if not hasattr(local, "backends"):
            backends = {br.name: make_backend(br, cfg) for br in cfg.branches}
            with created_lock:
                created.extend(backends.values())
            local.backends = backends
        return local.backends

    def process(entry: ManifestEntry):
        lr = load_image(entry.lr_path)
        hr = load_image(entry.hr_path)
        sr = run_pipeline(cfg, lr, backends=thread_backends())
        if sr_out_dir is not None:
            store_image(
                sr, sr_out_dir / f"{entry.name}.png",
                PixelFormat(depth=16, channels=sr.channels),
            )
        return evaluate_pair(
            hr, sr, cfg.scale, metric.shave, metric.ssim, name=entry.name
        )

    results: dict[str, EvalRecord] = {}
    failures: list[tuple[str, str]] = []
    try:
        if workers <= 1:
            outcomes = [(e, _attempt(process, e)) for e in m.entries]
        else:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                outcomes = list(
                    zip(m.entries, pool.map(lambda e: _attempt(process, e), m.entries))
                )
    finally:
        for backend in created:
            backend.close()

    for entry, (record, error) in outcomes:
        if error is not None:
            failures.append((entry.name, error))
        else:
            results[entry.name] = record

    records = tuple(results[name] for name in sorted(results))
    if not records and failures:
        raise ManifestError(
            "every entry failed; first failure: "
            f"{failures[0][0]}: {failures[0][1]}"
        )
    return Report(
        records=records,
        aggregate_psnr=_mean(r.psnr_db for r in records),
        aggregate_ssim=_mean(r.ssim for r in records),
        aggregate_score=_mean(r.score for r in records),
        config_fingerprint=config_fingerprint(cfg, metric),
        partial=bool(failures),
        failures=tuple(sorted(failures)),
    )


def _attempt(fn, entry):
    try:
        return fn(entry), None
    except Exception as e:  # noqa: BLE001 - failures become report entries
        return None, f"{type(e).__name__}: {e}"


def _mean(values) -> float:
    # Plain in-order summation keeps aggregates bit-stable.
    total = 0.0
    count = 0
    for v in values:
        total += v
        count += 1
    return total / count if count else 0.0


def report_to_dict(r: Report) -> dict:
    out = {
        "tool_version": r.tool_version,
        "config_fingerprint": r.config_fingerprint,
        "images": [
            {
                "name": rec.name,
                "psnr_db": rec.psnr_db,
                "ssim": rec.ssim,
                "score": rec.score,
                "psnr_capped": rec.psnr_capped,
            }
            for rec in r.records
        ],
        "aggregate": {
            "psnr_db": r.aggregate_psnr,
            "ssim": r.aggregate_ssim,
            "score": r.aggregate_score,
        },
        "partial": r.partial,
    }
    if r.partial:
        out["failures"] = [{"name": n, "error": e} for n, e in r.failures]
    return out


def emit_report(r: Report, path: str | Path, fmt: str = "json") -> Path:
    """Write a report as json, csv, or a 4-decimal text table."""
    path = Path(path)
    if fmt == "json":
        path.write_text(json.dumps(report_to_dict(r), indent=2) + "\n")
    elif fmt == "csv":
        lines = ["name,psnr_db,ssim,score"]
        for rec in r.records:
            lines.append(f"{rec.name},{rec.psnr_db!r},{rec.ssim!r},{rec.score!r}")
        lines.append(
            f"mean,{r.aggregate_psnr!r},{r.aggregate_ssim!r},{r.aggregate_score!r}"
        )
        path.write_text("\n".join(lines) + "\n")
    elif fmt == "table":
        width = max([len("Image")] + [len(rec.name) for rec in r.records])
        lines = [f"{'Image':<{width}}  {'PSNR':>9}  {'SSIM':>7}  {'Score':>9}"]
        for rec in r.records:
            lines.append(
                f"{rec.name:<{width}}  {rec.psnr_db:>9.4f}  "
                f"{rec.ssim:>7.4f}  {rec.score:>9.4f}"
            )
        lines.append(
            f"{'mean':<{width}}  {r.aggregate_psnr:>9.4f}  "
            f"{r.aggregate_ssim:>7.4f}  {r.aggregate_score:>9.4f}"
        )
        path.write_text("\n".join(lines) + "\n")
    else:
        raise ValueError(f"unknown report format {fmt!r}")
    return path


def _find_named(directory: Path, name: str) -> Path:
    for suffix in SUPPORTED_SUFFIXES:
        candidate = directory / f"{name}{suffix}"
        if candidate.is_file():
            return candidate
    raise ManifestError(f"no image named {name!r} in {directory}")


def montage(
    columns: list[tuple[str, str | Path]],
    names: list[str],
    out: str | Path,
    separator: int = 2,
) -> Path:
    """Assemble a qualitative grid: one row per name, one column per label.

    Images smaller than the row's largest by a uniform integer factor
    (e.g. the LR column) are nearest-upscaled for visual alignment.
    Column/row labels go to a sidecar text file next to the output.
    """
    if not columns or not names:
        raise ManifestError("montage needs at least one column and one name")
    out = Path(out)
    rows = []
    for name in names:
        cells = [load_image(_find_named(Path(d), name)) for _, d in columns]
        target_h = max(c.height for c in cells)
        target_w = max(c.width for c in cells)
        channels = max(c.channels for c in cells)
        aligned = []
        for (label, _), cell in zip(columns, cells):
            if (cell.height, cell.width) != (target_h, target_w):
                if (
                    target_h % cell.height
                    or target_w % cell.width
                    or target_h // cell.height != target_w // cell.width
                ):
                    raise DimensionError(
                        f"column {label!r}, image {name!r}: {cell.height}x{cell.width} "
                        f"does not align with {target_h}x{target_w}"
                    )
                cell = nearest_upscale(cell, target_h // cell.height)
            data = cell.data
            if cell.channels == 1 and channels == 3:
                data = np.repeat(data, 3, axis=2)
            aligned.append(data)
        rows.append(aligned)

    cell_h, cell_w, channels = rows[0][0].shape
    for name, row in zip(names, rows):
        for cell in row:
            if cell.shape != (cell_h, cell_w, channels):
                raise DimensionError(
                    f"row {name!r} cell dims {cell.shape} differ from "
                    f"{(cell_h, cell_w, channels)}"
                )
    n_rows, n_cols = len(names), len(columns)
    canvas_h = n_rows * cell_h + (n_rows - 1) * separator
    canvas_w = n_cols * cell_w + (n_cols - 1) * separator
    canvas = np.ones((canvas_h, canvas_w, channels), dtype=np.float64)
    for iy, row in enumerate(rows):
        for ix, cell in enumerate(row):
            y0 = iy * (cell_h + separator)
            x0 = ix * (cell_w + separator)
            canvas[y0 : y0 + cell_h, x0 : x0 + cell_w] = cell

    store_image(Image(canvas), out, PixelFormat(depth=8, channels=channels))
    sidecar = out.with_name(out.name + ".labels.txt")
    sidecar.write_text(
        "columns: " + ", ".join(label for label, _ in columns) + "\n"
        "rows: " + ", ".join(names) + "\n"
    )
    return out
