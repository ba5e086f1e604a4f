"""Declarative pipeline configuration (YAML).

Schema (every key optional except ``paths`` and ``backend``)::

    seed: 0
    paths: {metadata, images, workspace, image_column}
    filter: {remove_keywords: {Style: [...], Field: [...], Genre: [...], Nationality: [...]},
             keep_field_keywords: [...] | null, match: substring | exact}
    backend: {kind: mock | remote, checkpoint_id, endpoint, mock_profile, max_in_flight,
              cache_dir, artist_flavors}
    embed: {normalize_context: false}
    split: {train_fraction: 0.7, seed: 0}
    gbt: {n_trees: 300, max_depth: 6, learning_rate: 0.1, subsample: 1.0, max_bins: 32, seed: 0}
    lowess: {frac: 0.6667, iters: 3}
    distances: {sample_budget: 200000, seed: 0, groupings: [author, style]}
    project2d: {method: pca, params: {}, seed: 0}
    pca: {k: 10}
    keywords: {n_words: 77, pool: 100, normalize: true, min_support: 1, top: 20}
    exclusions: {artists: path, movements: path}
    experiment: {centuries, per_century, steps, ddim_steps, seed, separator, conditions}
    noise_probe: {n: 100, seed: 0}

Relative paths resolve against the directory holding the config file. The
``ARTCONTEXT_WORKSPACE`` environment variable overrides ``paths.workspace``.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

import yaml

from .chronometry import GBTParams, SplitSpec
from .errors import ConfigurationError
from .gateway.base import BackendDescriptor
from .ingest import FilterConfig
from .timeshift import ExperimentPlan

WORKSPACE_ENV = "ARTCONTEXT_WORKSPACE"


@dataclass
class Paths:
    metadata: Optional[str] = None
    images: Optional[str] = None
    workspace: str = "workspace"
    image_column: str = "image_path"


@dataclass
class LowessParams:
    frac: float = 2.0 / 3.0
    iters: int = 3


@dataclass
class DistanceParams:
    sample_budget: int = 200_000
    seed: int = 0
    groupings: list = field(default_factory=lambda: ["author", "style"])


@dataclass
class ProjectionParams:
    method: str = "pca"
    params: dict = field(default_factory=dict)
    seed: int = 0


@dataclass
class KeywordParams:
    n_words: int = 77
    pool: int = 100
    normalize: bool = True
    min_support: int = 1
    top: int = 20


@dataclass
class ExclusionPaths:
    artists: Optional[str] = None
    movements: Optional[str] = None


@dataclass
class NoiseProbeParams:
    n: int = 100
    seed: int = 0


@dataclass
class PipelineConfig:
    paths: Paths
    backend: BackendDescriptor
    filter: FilterConfig = field(default_factory=FilterConfig)
    normalize_context: bool = False
    split: SplitSpec = field(default_factory=SplitSpec)
    gbt: GBTParams = field(default_factory=GBTParams)
    lowess: LowessParams = field(default_factory=LowessParams)
    distances: DistanceParams = field(default_factory=DistanceParams)
    project2d: ProjectionParams = field(default_factory=ProjectionParams)
    pca_k: int = 10
    keywords: KeywordParams = field(default_factory=KeywordParams)
    exclusions: ExclusionPaths = field(default_factory=ExclusionPaths)
    experiment: ExperimentPlan = field(default_factory=ExperimentPlan)
    noise_probe: NoiseProbeParams = field(default_factory=NoiseProbeParams)
    seed: int = 0

    @property
    def workspace(self) -> Path:
        return Path(self.paths.workspace)

    def as_dict(self) -> dict:
        return {f.name: _plain(getattr(self, f.name)) for f in fields(self)}

    def digest(self, *sections: str) -> str:
        """Digest of the whole config, or of the named top-level sections."""
        d = self.as_dict()
        if sections:
            d = {k: d[k] for k in sections}
        blob = json.dumps(d, sort_keys=True, default=str).encode()
        return hashlib.blake2b(blob, digest_size=8).hexdigest()


def _plain(obj):
    if hasattr(obj, "__dataclass_fields__"):
        return asdict(obj)
    return obj


def _build(cls, d, what):
    d = dict(d or {})
    known = {f.name for f in fields(cls)}
    unknown = set(d) - known
    if unknown:
        raise ConfigurationError(f"unknown keys in '{what}': {sorted(unknown)}")
    try:
        return cls(**d)
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"invalid '{what}' section: {exc}") from exc


def _resolve(base: Path, p: Optional[str]) -> Optional[str]:
    if p is None:
        return None
    p = Path(os.path.expanduser(str(p)))
    return str(p if p.is_absolute() else (base / p).resolve())


def config_from_dict(d: dict, base_dir=".", env=None) -> PipelineConfig:
    env = os.environ if env is None else env
    base = Path(base_dir)
    top = {"seed", "paths", "filter", "backend", "embed", "split", "gbt", "lowess", "distances",
           "project2d", "pca", "keywords", "exclusions", "experiment", "noise_probe"}
    unknown = set(d) - top
    if unknown:
        raise ConfigurationError(f"unknown top-level keys: {sorted(unknown)}")
    if "backend" not in d:
        raise ConfigurationError("config needs a 'backend' section")

    paths = _build(Paths, d.get("paths"), "paths")
    if env.get(WORKSPACE_ENV):
        paths.workspace = env[WORKSPACE_ENV]
    paths.metadata = _resolve(base, paths.metadata)
    paths.images = _resolve(base, paths.images)
    paths.workspace = _resolve(base, paths.workspace)

    b = dict(d["backend"])
    for key in ("mock_profile", "cache_dir", "artist_flavors"):
        b[key] = _resolve(base, b.get(key))
    backend = _build(BackendDescriptor, b, "backend")

    try:
        filt = FilterConfig.from_dict(d.get("filter") or {})
    except ValueError as exc:
        raise ConfigurationError(f"invalid 'filter' section: {exc}") from exc

    excl = _build(ExclusionPaths, d.get("exclusions"), "exclusions")
    excl.artists = _resolve(base, excl.artists)
    excl.movements = _resolve(base, excl.movements)

    embed = dict(d.get("embed") or {})
    if set(embed) - {"normalize_context"}:
        raise ConfigurationError(f"unknown keys in 'embed': {sorted(set(embed) - {'normalize_context'})}")
    pca = dict(d.get("pca") or {})

    cfg = PipelineConfig(
        paths=paths,
        backend=backend,
        filter=filt,
        normalize_context=bool(embed.get("normalize_context", False)),
        split=_build(SplitSpec, d.get("split"), "split"),
        gbt=_build(GBTParams, d.get("gbt"), "gbt"),
        lowess=_build(LowessParams, d.get("lowess"), "lowess"),
        distances=_build(DistanceParams, d.get("distances"), "distances"),
        project2d=_build(ProjectionParams, d.get("project2d"), "project2d"),
        pca_k=int(pca.get("k", 10)),
        keywords=_build(KeywordParams, d.get("keywords"), "keywords"),
        exclusions=excl,
        experiment=_build(ExperimentPlan, d.get("experiment"), "experiment"),
        noise_probe=_build(NoiseProbeParams, d.get("noise_probe"), "noise_probe"),
        seed=int(d.get("seed", 0)),
    )
    _check_files(cfg)
    return cfg


def _check_files(cfg: PipelineConfig) -> None:
    for label, p in [("paths.metadata", cfg.paths.metadata), ("backend.mock_profile", cfg.backend.mock_profile),
                     ("backend.artist_flavors", cfg.backend.artist_flavors),
                     ("exclusions.artists", cfg.exclusions.artists),
                     ("exclusions.movements", cfg.exclusions.movements)]:
        if p is not None and not Path(p).is_file():
            raise ConfigurationError(f"{label} does not exist: {p}")
    if cfg.paths.images is not None and not Path(cfg.paths.images).is_dir():
        raise ConfigurationError(f"paths.images is not a directory: {cfg.paths.images}")


def load_config(path, env=None) -> PipelineConfig:
    path = Path(path)
    try:
        d = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"config {path} is not valid YAML: {exc}") from exc
    if not isinstance(d, dict):
        raise ConfigurationError("config must be a mapping")
    cfg = config_from_dict(d, base_dir=path.parent, env=env)
    ws = cfg.workspace
    try:
        ws.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigurationError(f"workspace {ws} is not writable: {exc}") from exc
    if not os.access(ws, os.W_OK):
        raise ConfigurationError(f"workspace {ws} is not writable")
    return cfg


SAMPLE_CONFIG = """\
seed: 0
paths:
  metadata: metadata.csv
  images: .
  workspace: workspace
  image_column: image_path
filter:
  match: substring
  remove_keywords:
    Style: [sculpture, photography, installation]
    Field: [drawing, sculpture, print]
    Genre: []
    Nationality: []
  keep_field_keywords: [painting]
backend:
  kind: mock
  checkpoint_id: mock-sd2
  mock_profile: mock_profile.json
embed:
  normalize_context: false
split: {train_fraction: 0.7, seed: 0}
gbt: {n_trees: 300, max_depth: 6, learning_rate: 0.1, subsample: 1.0, max_bins: 32, seed: 0}
lowess: {frac: 0.6666666666666666, iters: 3}
distances: {sample_budget: 200000, seed: 0, groupings: [author, style]}
project2d: {method: pca, seed: 0}
pca: {k: 10}
keywords: {n_words: 77, pool: 100, normalize: true, min_support: 5, top: 20}
exclusions:
  artists: artist_names.txt
  movements: movement_names.txt
experiment:
  centuries: [1500, 1600, 1700, 1800, 1900]
  per_century: 100
  steps: [1, 25, 50]
  ddim_steps: 50
  seed: 0
  separator: space
noise_probe: {n: 100, seed: 0}
"""
