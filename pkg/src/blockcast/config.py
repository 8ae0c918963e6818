"""Run configuration: key=value file, flag overrides, full round-trip dump.

Paper-reported constants are the defaults (256x256 camera frames, 0.25 m
BEV cells, DBSCAN 0.75/5, alpha 1.1); the desk scale preset only shrinks
the model widths, so tests and toy runs override the heavy pipeline
constants explicitly.
"""

import os
from dataclasses import dataclass, fields, replace
from pathlib import Path

from .core import MODALITIES
from .errors import ConfigError
from .simgen import ScenarioConfig

ENV_DATA_ROOT = "BLOCKCAST_DATA"

_SC = ScenarioConfig()  # scenario defaults live in one place


def _parse_bool(s: str) -> bool:
    if s.lower() in ("1", "true", "yes", "on"):
        return True
    if s.lower() in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {s!r}")


def _parse_pair(s: str) -> tuple:
    parts = s.split(",")
    if len(parts) != 2:
        raise ConfigError(f"expected 'lo,hi', got {s!r}")
    return (float(parts[0]), float(parts[1]))


def _parse_dims(s: str):
    if not s or s.lower() == "none":
        return None
    parts = s.lower().split("x")
    if len(parts) != 2:
        raise ConfigError(f"expected 'AxB' dims, got {s!r}")
    return (int(parts[0]), int(parts[1]))


def _parse_modalities(s: str) -> tuple:
    if s == "all":
        return MODALITIES
    tags = tuple(sorted(set(t.strip() for t in s.split(",") if t.strip())))
    bad = [t for t in tags if t not in MODALITIES]
    if bad:
        raise ConfigError(f"unknown modalities {bad}; valid: {MODALITIES}")
    if not tags:
        raise ConfigError("modalities must name at least one sensor")
    return tags


def _parse_int_list(s: str) -> tuple:
    return tuple(int(t) for t in s.split(",") if t.strip())


def _fmt(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        if len(value) == 2 and all(isinstance(v, int) for v in value):
            return f"{value[0]}x{value[1]}"
        return ",".join(_fmt(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


@dataclass(frozen=True)
class RunConfig:
    # general
    root: str = ""
    scale: str = "desk"
    k: int = 5
    modalities: tuple = MODALITIES
    seed: int = 0
    seeds: int = 20
    jobs: int = 1
    train_seeds: tuple = (0,)

    # scenario generation (defaults mirror ScenarioConfig)
    duration_steps: int = _SC.duration_steps
    step_ms: int = _SC.step_ms
    n_blockers: int = _SC.n_blockers
    lane_offset: float = _SC.lane_offset_m
    corridor_half: float = _SC.corridor_half_m
    receiver_speed: tuple = _SC.receiver_speed_range
    blocker_length: tuple = _SC.blocker_length_range
    blocker_width: tuple = _SC.blocker_width_range
    blocker_height: tuple = _SC.blocker_height_range
    blocker_speed: tuple = _SC.blocker_speed_range
    blocker_lane: tuple = _SC.blocker_lane_range
    rsu_antenna_height: float = _SC.rsu_antenna_height_m
    receiver_antenna_height: float = _SC.receiver_antenna_height_m
    lidar_noise: float = _SC.lidar_noise_m
    gps_noise: float = _SC.gps_noise_m
    radar_snr_db: float = _SC.radar_snr_db
    image_size: tuple = _SC.image_size  # width x height
    radar_range_res: float = _SC.radar_range_res_m
    radar_vel_res: float = _SC.radar_vel_res_mps
    lidar_ground_extent: float = _SC.lidar_ground_extent_m
    lidar_ground_spacing: float = _SC.lidar_ground_spacing_m
    lidar_face_density: float = _SC.lidar_face_density

    # preprocessing pipelines
    camera_size: tuple = (256, 256)
    voxel_size: float = 0.3
    outlier_k: int = 8
    outlier_std: float = 2.0
    ransac_thresh: float = 0.15
    ransac_iters: int = 200
    dbscan_eps: float = 0.75
    dbscan_min_samples: int = 5
    bev_cell: float = 0.25
    bev_dims: tuple = None  # (H, W) override, e.g. 700x1200

    # class weighting and augmentation
    alpha: float = 1.1
    augment: bool = False
    camera_flip_prob: float = 0.5
    camera_max_rotation_deg: float = 5.0
    camera_blur_sigma: float = 0.0
    lidar_flip_prob: float = 0.5
    lidar_max_rotation_deg: float = 10.0
    lidar_scale: tuple = (0.95, 1.05)
    radar_aug_sigma: float = 0.05

    # training
    epochs: int = 30
    batch_size: int = 32
    lr: float = 1e-3
    optimizer: str = "adam"
    patience: int = 5

    # benchmarking
    bench_reps: int = 100
    bench_warmup: int = 10

    def __post_init__(self):
        if self.scale not in ("paper", "desk"):
            raise ConfigError(f"scale must be paper or desk, got {self.scale!r}")
        if self.k < 1:
            raise ConfigError("k must be >= 1")
        if self.seeds < 1:
            raise ConfigError("seeds must be >= 1")
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")
        if not self.train_seeds:
            raise ConfigError("train_seeds must be non-empty")
        if self.optimizer not in ("adam", "sgd"):
            raise ConfigError(f"optimizer must be adam or sgd, got {self.optimizer!r}")
        if self.epochs < 1 or self.batch_size < 1 or self.lr <= 0:
            raise ConfigError("epochs, batch_size and lr must be positive")

    @property
    def data_root(self) -> Path:
        root = self.root or os.environ.get(ENV_DATA_ROOT, "") or "data"
        return Path(root)

    def scenario_config(self, scenario_index: int) -> ScenarioConfig:
        return ScenarioConfig(
            rng_seed=self.seed + scenario_index,
            duration_steps=self.duration_steps,
            step_ms=self.step_ms,
            lane_offset_m=self.lane_offset,
            corridor_half_m=self.corridor_half,
            receiver_speed_range=self.receiver_speed,
            n_blockers=self.n_blockers,
            blocker_length_range=self.blocker_length,
            blocker_width_range=self.blocker_width,
            blocker_height_range=self.blocker_height,
            blocker_speed_range=self.blocker_speed,
            blocker_lane_range=self.blocker_lane,
            rsu_antenna_height_m=self.rsu_antenna_height,
            receiver_antenna_height_m=self.receiver_antenna_height,
            lidar_noise_m=self.lidar_noise,
            gps_noise_m=self.gps_noise,
            radar_snr_db=self.radar_snr_db,
            image_size=self.image_size,
            radar_range_res_m=self.radar_range_res,
            radar_vel_res_mps=self.radar_vel_res,
            lidar_ground_extent_m=self.lidar_ground_extent,
            lidar_ground_spacing_m=self.lidar_ground_spacing,
            lidar_face_density=self.lidar_face_density,
        )


_PARSERS = {
    "modalities": _parse_modalities,
    "train_seeds": _parse_int_list,
    "bev_dims": _parse_dims,
    "image_size": _parse_dims,
    "camera_size": _parse_dims,
    "augment": _parse_bool,
}


def _parse_value(name: str, text: str, default):
    if name in _PARSERS:
        return _PARSERS[name](text)
    if isinstance(default, bool):
        return _parse_bool(text)
    if isinstance(default, int):
        return int(text)
    if isinstance(default, float):
        return float(text)
    if isinstance(default, tuple):
        return _parse_pair(text)
    return text


_FIELDS = {f.name: f for f in fields(RunConfig)}


def parse_config_text(text: str, base: RunConfig = None) -> RunConfig:
    """Parse key=value lines ('#' comments allowed). Unknown keys rejected."""
    cfg = base or RunConfig()
    updates = {}
    defaults = RunConfig()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _FIELDS:
            raise ConfigError(f"line {lineno}: unknown config key {key!r}")
        try:
            updates[key] = _parse_value(key, value, getattr(defaults, key))
        except (ValueError, ConfigError) as exc:
            raise ConfigError(f"line {lineno}: bad value for {key}: {exc}") from exc
    return replace(cfg, **updates)


def load_config(path, base: RunConfig = None) -> RunConfig:
    return parse_config_text(Path(path).read_text(), base)


def dump_config(cfg: RunConfig) -> str:
    """Emit the full effective configuration; reparsing reproduces it."""
    lines = []
    for f in fields(RunConfig):
        lines.append(f"{f.name}={_fmt(getattr(cfg, f.name))}")
    return "\n".join(lines) + "\n"


def apply_overrides(cfg: RunConfig, **overrides) -> RunConfig:
    """Apply non-None keyword overrides (already-typed values)."""
    updates = {k: v for k, v in overrides.items() if v is not None}
    bad = [k for k in updates if k not in _FIELDS]
    if bad:
        raise ConfigError(f"unknown config keys {bad}")
    return replace(cfg, **updates)
