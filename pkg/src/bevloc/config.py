"""Pipeline configuration and a small key=value config-file reader.

The file format is deliberately flat: one ``key = value`` per line, ``#``
comments, blank lines ignored.  Every key must name a PipelineConfig field;
unknown keys are configuration errors rather than silent typos.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace

from .bev import DEFAULT_CELL_SIZE, CropWindow
from .errors import ConfigError
from .evaluation import DEFAULT_PERCENT, DEFAULT_SWEEP, DEFAULT_TP_THRESHOLD, EvalConfig
from .features import DEFAULT_PATCH, DEFAULT_STRIDE
from .kitti import DEFAULT_PNG_SCALE
from .training import (DEFAULT_D_NEG, DEFAULT_D_POS, DEFAULT_EMBEDDING_DIM,
                       DEFAULT_HARD_MINING_START, DEFAULT_LEARNING_RATE,
                       DEFAULT_MARGIN, DEFAULT_N_NEG, DEFAULT_N_POS,
                       TripletConfig)
from .vlad import DEFAULT_CLUSTERS

DEFAULT_DEPTH_CEILING = 80.0


@dataclass(frozen=True)
class PipelineConfig:
    """Every knob of the end-to-end pipeline, with working defaults."""

    # BEV raster
    cell_size: float = DEFAULT_CELL_SIZE
    x_min: float = -25.0
    x_max: float = 25.0
    y_min: float = 0.0
    y_max: float = 50.0
    z_min: float = -5.0
    z_max: float = 5.0
    # local features and codebook
    patch: int = DEFAULT_PATCH
    stride: int = DEFAULT_STRIDE
    clusters: int = DEFAULT_CLUSTERS
    alpha_override: float | None = None
    # metric learning
    margin: float = DEFAULT_MARGIN
    positives: int = DEFAULT_N_POS
    negatives: int = DEFAULT_N_NEG
    d_pos: float = DEFAULT_D_POS
    d_neg: float = DEFAULT_D_NEG
    hard_mining_start_epoch: int = DEFAULT_HARD_MINING_START
    learning_rate: float = DEFAULT_LEARNING_RATE
    embedding_dim: int = DEFAULT_EMBEDDING_DIM
    epochs: int = 20
    # ingest
    depth_scale: float = DEFAULT_PNG_SCALE
    disparity_scale: float = DEFAULT_PNG_SCALE
    depth_ceiling: float = DEFAULT_DEPTH_CEILING
    # evaluation
    tp_threshold: float = DEFAULT_TP_THRESHOLD
    percent: float = DEFAULT_PERCENT
    top_n: int = 1
    query_top_n: int = 5
    sweep_thresholds: tuple[float, ...] = DEFAULT_SWEEP
    exclude_window: int = 0
    # optional map-side field-of-view ablation
    map_frontal_cone: bool = False
    cone_half_angle_deg: float = 45.0
    # trained artifacts (None = untrained / identity behavior)
    codebook_path: str | None = None
    embedding_path: str | None = None

    def __post_init__(self):
        positive = {"cell_size": self.cell_size, "learning_rate": self.learning_rate,
                    "depth_scale": self.depth_scale,
                    "disparity_scale": self.disparity_scale,
                    "depth_ceiling": self.depth_ceiling,
                    "cone_half_angle_deg": self.cone_half_angle_deg}
        for name, value in positive.items():
            if not value > 0:
                raise ConfigError(f"{name} must be positive, got {value}")
        at_least = {"clusters": (self.clusters, 2), "patch": (self.patch, 2),
                    "stride": (self.stride, 1), "epochs": (self.epochs, 0),
                    "embedding_dim": (self.embedding_dim, 1),
                    "top_n": (self.top_n, 1), "query_top_n": (self.query_top_n, 1),
                    "exclude_window": (self.exclude_window, 0)}
        for name, (value, floor) in at_least.items():
            if value < floor:
                raise ConfigError(f"{name} must be at least {floor}, got {value}")
        if self.alpha_override is not None and not self.alpha_override > 0:
            raise ConfigError("alpha_override must be positive when set")
        try:
            self.window()
            self.triplet()
            self.eval()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def window(self) -> CropWindow:
        return CropWindow((self.x_min, self.x_max), (self.y_min, self.y_max),
                          (self.z_min, self.z_max))

    def triplet(self) -> TripletConfig:
        return TripletConfig(margin_m=self.margin, n_pos=self.positives,
                             n_neg=self.negatives, d_pos=self.d_pos,
                             d_neg=self.d_neg,
                             hard_mining_start_epoch=self.hard_mining_start_epoch)

    def eval(self) -> EvalConfig:
        return EvalConfig(tp_threshold_t=self.tp_threshold, top_n=self.top_n,
                          percent=self.percent, sweep=self.sweep_thresholds)


_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _parse_bool(text: str) -> bool:
    lower = text.lower()
    if lower in _TRUE:
        return True
    if lower in _FALSE:
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_value(name: str, annotation: str, text: str):
    if annotation == "int":
        return int(text)
    if annotation == "float":
        return float(text)
    if annotation == "bool":
        return _parse_bool(text)
    if annotation == "float | None":
        return None if text.lower() in ("", "none") else float(text)
    if annotation == "str | None":
        return None if text.lower() in ("", "none") else text
    if annotation == "tuple[float, ...]":
        return tuple(float(part) for part in text.split(","))
    raise ConfigError(f"field {name} has unhandled type {annotation}")


def load_config(path, base: PipelineConfig | None = None) -> PipelineConfig:
    """Read overrides from a key=value file on top of ``base`` (or defaults)."""
    known = {f.name: f.type for f in fields(PipelineConfig)}
    overrides = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            body = line.split("#", 1)[0].strip()
            if not body:
                continue
            key, sep, value = body.partition("=")
            key = key.strip()
            if not sep:
                raise ConfigError(f"{path}:{lineno}: expected key = value")
            if key not in known:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            try:
                overrides[key] = _parse_value(key, known[key], value.strip())
            except ValueError as exc:
                raise ConfigError(f"{path}:{lineno}: {exc}") from exc
    try:
        return replace(base or PipelineConfig(), **overrides)
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
