"""Pipeline orchestration: branch definitions, config-file parsing, and
the branch-evaluate-then-fuse runner.

A pipeline is one or more independent branches, each a backend plus
optional tiling and optional self-ensemble, merged by fixed-weight
image-space fusion. The defaults mirror the dual-branch layout this
harness was built for: tiling on the first branch, self-ensemble on the
second, equal weights.

Config files are INI-style: a [pipeline] section plus one [branch.NAME]
section per branch (file order defines branch and weight order)::

    [pipeline]
    scale = 4
    weights = 0.5, 0.5
    kernel.a = -0.5
    kernel.antialias = true

    [branch.local]
    backend = bicubic
    tile = 96
    overlap = 16
    blend = tent

    [branch.global]
    backend = bicubic
    ensemble = on
"""

from __future__ import annotations

import configparser
import shlex
from dataclasses import dataclass
from pathlib import Path

from .backends import BUILTIN_KINDS, RestorerBackend, builtin_backend, external_backend
from .ensemble import (
    EnsembleConfig,
    FusionWeights,
    TileConfig,
    fuse,
    self_ensemble,
    tiled_restore,
)
from .errors import BranchError, ConfigError
from .geometry import Transform
from .image import Image
from .resample import KernelSpec


@dataclass(frozen=True)
class BranchConfig:
    """One pipeline branch: backend choice plus its test-time refinements."""

    name: str
    backend: str  # builtin kind, or "ext:<command line>"
    tiling: TileConfig | None = None
    ensemble: EnsembleConfig | None = None

    @property
    def is_external(self) -> bool:
        return self.backend.startswith("ext:")

    def command(self) -> list[str]:
        if not self.is_external:
            raise ConfigError(f"branch {self.name} uses a built-in backend")
        argv = shlex.split(self.backend[4:])
        if not argv:
            raise ConfigError(f"branch {self.name}: empty external command")
        return argv

    def describe(self) -> dict:
        return {
            "name": self.name,
            "backend": self.backend,
            "tile": None
            if self.tiling is None
            else {
                "tile": self.tiling.tile,
                "overlap": self.tiling.overlap,
                "blend": self.tiling.blend,
            },
            "ensemble": None
            if self.ensemble is None
            else [t.short_name for t in self.ensemble.transforms],
        }


@dataclass(frozen=True)
class PipelineConfig:
    """A full run description: branches, fusion weights, scale, kernel."""

    branches: tuple[BranchConfig, ...]
    weights: FusionWeights = FusionWeights()
    scale: int = 4
    kernel: KernelSpec = KernelSpec()
    timeout: float = 60.0

    def __post_init__(self):
        if not self.branches:
            raise ConfigError("pipeline needs at least one branch")
        if len(self.branches) != len(self.weights):
            raise ConfigError(
                f"{len(self.branches)} branches but {len(self.weights)} weights"
            )
        names = [b.name for b in self.branches]
        if len(set(names)) != len(names):
            raise ConfigError(f"duplicate branch names: {names}")
        if self.scale < 1:
            raise ConfigError(f"scale must be >= 1, got {self.scale}")

    @classmethod
    def default(cls, scale: int = 4) -> "PipelineConfig":
        return cls(
            branches=(
                BranchConfig("local", "bicubic", tiling=TileConfig()),
                BranchConfig("global", "bicubic", ensemble=EnsembleConfig()),
            ),
            scale=scale,
        )

    def describe(self) -> dict:
        return {
            "scale": self.scale,
            "weights": list(self.weights.values),
            "kernel": {"a": self.kernel.a, "antialias": self.kernel.antialias},
            "branches": [b.describe() for b in self.branches],
        }


def make_backend(branch: BranchConfig, cfg: PipelineConfig) -> RestorerBackend:
    """Instantiate a branch's backend (one per worker for externals)."""
    if branch.is_external:
        return external_backend(branch.command(), timeout=cfg.timeout)
    scale = 1 if branch.backend == "identity1x" else cfg.scale
    return builtin_backend(branch.backend, scale, cfg.kernel)


def run_branch(branch: BranchConfig, backend: RestorerBackend, img_lr: Image) -> Image:
    """Apply one branch's refinements: tiling (unless the backend does its
    own local conversion internally), then self-ensemble."""
    tiling = branch.tiling
    if tiling is not None and backend.supports_internal_tlc:
        tiling = None

    if branch.ensemble is not None:
        base = backend if tiling is None else _TiledBackend(backend, tiling)
        return self_ensemble(base, img_lr, branch.ensemble)
    if tiling is not None:
        return tiled_restore(backend, img_lr, tiling)
    return backend.restore(img_lr)


class _TiledBackend(RestorerBackend):
    """Backend decorator so self-ensemble views go through tiling."""

    def __init__(self, inner: RestorerBackend, tiling: TileConfig):
        self.inner = inner
        self.tiling = tiling
        self.name = f"{inner.name}+tiled"
        self.scale = inner.scale
        self.channels = inner.channels
        self.deterministic = inner.deterministic

    def restore(self, img_lr: Image) -> Image:
        return tiled_restore(self.inner, img_lr, self.tiling)


def run_pipeline(
    cfg: PipelineConfig,
    img_lr: Image,
    backends: dict[str, RestorerBackend] | None = None,
) -> Image:
    """Evaluate every branch on the LR image and fuse the results.

    `backends` maps branch name to an already-constructed backend (useful
    for pooling external connections); missing entries are built on the
    fly and closed afterwards.
    """
    owned: list[RestorerBackend] = []
    outputs: list[Image] = []
    try:
        for branch in cfg.branches:
            backend = (backends or {}).get(branch.name)
            if backend is None:
                backend = make_backend(branch, cfg)
                owned.append(backend)
            try:
                outputs.append(run_branch(branch, backend, img_lr))
            except Exception as e:
                raise BranchError(
                    f"branch {branch.name!r} failed: {e}", branch=branch.name
                ) from e
    finally:
        for backend in owned:
            backend.close()
    if len(outputs) == 1 and cfg.weights.values == (1.0,):
        return outputs[0]
    return fuse(outputs, cfg.weights)


def _parse_bool(raw: str, context: str) -> bool:
    val = raw.strip().lower()
    if val in ("1", "true", "yes", "on"):
        return True
    if val in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"{context}: expected a boolean, got {raw!r}")


def parse_weights(raw: str) -> FusionWeights:
    try:
        values = tuple(float(v) for v in raw.replace(",", " ").split())
    except ValueError as e:
        raise ConfigError(f"bad weight list {raw!r}: {e}") from e
    return FusionWeights(values)


def _parse_branch(section: str, opts: dict[str, str]) -> BranchConfig:
    name = section.split(".", 1)[1]
    known = {"backend", "tile", "overlap", "blend", "ensemble", "transforms"}
    unknown = set(opts) - known
    if unknown:
        raise ConfigError(f"[{section}]: unknown option(s) {sorted(unknown)}")
    backend = opts.get("backend")
    if backend is None:
        raise ConfigError(f"[{section}] is missing the backend option")
    backend = backend.strip()
    if not backend.startswith("ext:") and backend not in BUILTIN_KINDS:
        raise ConfigError(
            f"[{section}]: backend must be one of {BUILTIN_KINDS} or ext:<command>"
        )

    tiling = None
    if "tile" in opts:
        try:
            tiling = TileConfig(
                tile=int(opts["tile"]),
                overlap=int(opts.get("overlap", "16")),
                blend=opts.get("blend", "tent").strip(),
            )
        except ValueError as e:
            raise ConfigError(f"[{section}]: {e}") from e
    elif "overlap" in opts or "blend" in opts:
        raise ConfigError(f"[{section}]: overlap/blend require a tile size")

    ens = None
    if _parse_bool(opts.get("ensemble", "off"), f"[{section}] ensemble"):
        transforms = opts.get("transforms")
        if transforms is None:
            ens = EnsembleConfig()
        else:
            parsed = tuple(
                Transform.from_name(n)
                for n in transforms.replace(",", " ").split()
            )
            ens = EnsembleConfig(parsed)
    elif "transforms" in opts:
        raise ConfigError(f"[{section}]: transforms requires ensemble = on")

    return BranchConfig(name, backend, tiling=tiling, ensemble=ens)


def load_pipeline_config(path: str | Path) -> PipelineConfig:
    """Parse an INI pipeline description (see module docstring)."""
    parser = configparser.ConfigParser(interpolation=None)
    try:
        with open(path, "r", encoding="utf-8") as fh:
            parser.read_file(fh)
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    except configparser.Error as e:
        raise ConfigError(f"malformed config {path}: {e}") from e

    branches = []
    for section in parser.sections():
        if section == "pipeline":
            continue
        if not section.startswith("branch."):
            raise ConfigError(f"unexpected section [{section}]")
        branches.append(_parse_branch(section, dict(parser[section])))

    top = dict(parser["pipeline"]) if parser.has_section("pipeline") else {}
    known = {"scale", "weights", "kernel.a", "kernel.antialias", "timeout"}
    unknown = set(top) - known
    if unknown:
        raise ConfigError(f"[pipeline]: unknown option(s) {sorted(unknown)}")
    try:
        scale = int(top.get("scale", "4"))
        kernel = KernelSpec(
            a=float(top.get("kernel.a", "-0.5")),
            antialias=_parse_bool(
                top.get("kernel.antialias", "true"), "[pipeline] kernel.antialias"
            ),
        )
        timeout = float(top.get("timeout", "60"))
    except ValueError as e:
        raise ConfigError(f"[pipeline]: {e}") from e
    if "weights" in top:
        weights = parse_weights(top["weights"])
    elif len(branches) == 1:
        weights = FusionWeights((1.0,))
    else:
        weights = FusionWeights(tuple(1.0 / len(branches) for _ in branches))

    return PipelineConfig(
        branches=tuple(branches),
        weights=weights,
        scale=scale,
        kernel=kernel,
        timeout=timeout,
    )
