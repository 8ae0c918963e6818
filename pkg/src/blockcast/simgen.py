"""Synthetic roadside scenario generator.

Produces time-synchronized camera/GPS/LiDAR/radar frames for a sensor
suite at the origin watching a receiver vehicle drive along a lane, with
box-shaped blockers on intermediate lanes. Ground-truth blockage labels
come from a 2.5D line-of-sight test: the RSU-receiver segment against
each blocker's footprint, plus a height test at the crossing point.
"""

import json
import logging
import math
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from . import formats
from .core import FrameRecord, derive_rng
from .errors import EmptyScenarioError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ScenarioConfig:
    rng_seed: int = 0
    duration_steps: int = 60
    step_ms: int = 300

    # lane geometry: RSU at the origin, receiver on a parallel lane. The
    # corridor is narrow enough that the receiver stays inside the camera
    # field of view for every position.
    lane_offset_m: float = 12.0
    corridor_half_m: float = 15.0
    receiver_speed_range: tuple = (4.0, 9.0)
    receiver_size: tuple = (4.5, 2.0, 1.5)  # length, width, height

    n_blockers: int = 2
    blocker_length_range: tuple = (4.0, 11.0)
    blocker_width_range: tuple = (2.2, 3.0)
    blocker_height_range: tuple = (1.4, 4.0)
    blocker_speed_range: tuple = (2.0, 7.0)
    blocker_lane_range: tuple = (7.5, 10.5)

    rsu_antenna_height_m: float = 5.0
    receiver_antenna_height_m: float = 1.6

    lidar_noise_m: float = 0.02
    gps_noise_m: float = 0.5
    radar_snr_db: float = 20.0

    image_size: tuple = (64, 64)  # (width, height)
    camera_height_m: float = 5.0
    camera_hfov_deg: float = 110.0

    radar_range_res_m: float = 0.5
    radar_vel_res_mps: float = 0.25

    lidar_ground_extent_m: float = 40.0
    lidar_ground_spacing_m: float = 2.5
    lidar_face_density: float = 6.0  # points per square meter

    gps_ref_lat: float = 33.70
    gps_ref_lon: float = 35.50

    def __post_init__(self):
        if self.step_ms <= 0:
            raise ValueError("step_ms must be positive")
        for name in (
            "receiver_speed_range",
            "blocker_length_range",
            "blocker_width_range",
            "blocker_height_range",
            "blocker_speed_range",
            "blocker_lane_range",
        ):
            lo, hi = getattr(self, name)
            if hi < lo:
                raise ValueError(f"{name} must be ordered (lo <= hi)")
        if self.n_blockers < 0:
            raise ValueError("n_blockers must be >= 0")


@dataclass(frozen=True)
class BlockerBox:
    """Axis-aligned box on the ground: footprint center/extents plus height."""

    cx: float
    cy: float
    length: float  # x extent
    width: float  # y extent
    height: float
    vx: float


@dataclass(frozen=True)
class WorldState:
    step: int
    receiver_x: float
    receiver_y: float
    receiver_heading: float
    receiver_speed: float
    blockers: tuple


def _segment_hits_rect(ex: float, ey: float, rect) -> tuple:
    """Clip the segment (0,0)->(ex,ey) against an axis-aligned rectangle.

    Returns (hit, t0, t1), the clipped parameter interval.
    """
    t0, t1 = 0.0, 1.0
    for d, lo, hi in ((ex, rect[0], rect[1]), (ey, rect[2], rect[3])):
        if abs(d) < 1e-15:
            if not (lo <= 0.0 <= hi):
                return False, 0.0, 0.0
            continue
        ta, tb = lo / d, hi / d
        if ta > tb:
            ta, tb = tb, ta
        t0 = max(t0, ta)
        t1 = min(t1, tb)
        if t0 > t1:
            return False, 0.0, 0.0
    return True, t0, t1


def occlusion_label(state: WorldState, config: ScenarioConfig) -> int:
    """1 iff any blocker's footprint cuts the RSU-receiver segment and is
    taller than the line-of-sight height at some crossing point.

    The LOS height interpolates linearly between the antenna heights, so
    it suffices to test the lower endpoint of the clipped interval.
    """
    if not (math.isfinite(state.receiver_x) and math.isfinite(state.receiver_y)):
        raise ValueError("receiver pose must be finite")
    h0 = config.rsu_antenna_height_m
    h1 = config.receiver_antenna_height_m
    for b in state.blockers:
        rect = (
            b.cx - b.length / 2.0,
            b.cx + b.length / 2.0,
            b.cy - b.width / 2.0,
            b.cy + b.width / 2.0,
        )
        hit, t0, t1 = _segment_hits_rect(state.receiver_x, state.receiver_y, rect)
        if hit:
            los_min = min(h0 + t0 * (h1 - h0), h0 + t1 * (h1 - h0))
            if b.height > los_min:
                return 1
    return 0


def _wrap(x: float, half: float) -> float:
    span = 2.0 * half
    return (x + half) % span - half


def _spawn_blocker(rng, config: ScenarioConfig, at_edge: bool = False) -> BlockerBox:
    direction = 1.0 if rng.random() < 0.5 else -1.0
    half = config.corridor_half_m
    if at_edge:
        cx = -half if direction > 0 else half  # enter from the upstream edge
    else:
        cx = rng.uniform(-half, half)
    return BlockerBox(
        cx=cx,
        cy=rng.uniform(*config.blocker_lane_range),
        length=rng.uniform(*config.blocker_length_range),
        width=rng.uniform(*config.blocker_width_range),
        height=rng.uniform(*config.blocker_height_range),
        vx=direction * rng.uniform(*config.blocker_speed_range),
    )


def simulate(config: ScenarioConfig):
    """Evolve the world for duration_steps; returns [(WorldState, label)].

    Deterministic in config.rng_seed. The receiver wraps around the
    corridor; a blocker leaving the corridor is replaced by a freshly
    sampled vehicle entering from an edge.
    """
    if config.duration_steps <= 0:
        raise EmptyScenarioError("duration_steps must be >= 1")
    rng = derive_rng(config.rng_seed, "world")
    half = config.corridor_half_m
    dt = config.step_ms / 1000.0

    rx = rng.uniform(-half, half)
    rv = rng.uniform(*config.receiver_speed_range)
    blockers = [_spawn_blocker(rng, config) for _ in range(config.n_blockers)]

    out = []
    for step in range(config.duration_steps):
        state = WorldState(
            step=step,
            receiver_x=rx,
            receiver_y=config.lane_offset_m,
            receiver_heading=0.0,
            receiver_speed=rv,
            blockers=tuple(blockers),
        )
        out.append((state, occlusion_label(state, config)))
        rx = _wrap(rx + rv * dt, half)
        moved = []
        for b in blockers:
            cx = b.cx + b.vx * dt
            if abs(cx) > half:
                moved.append(_spawn_blocker(rng, config, at_edge=True))
            else:
                moved.append(replace(b, cx=cx))
        blockers = moved
    return out


def _boxes(state: WorldState, config: ScenarioConfig):
    """All scene boxes as (cx, cy, length, width, height, vx); receiver first."""
    rl, rw, rh = config.receiver_size
    boxes = [(state.receiver_x, state.receiver_y, rl, rw, rh,
              state.receiver_speed * math.cos(state.receiver_heading))]
    boxes += [(b.cx, b.cy, b.length, b.width, b.height, b.vx) for b in state.blockers]
    return boxes


def _radar_amplitude(length: float, height: float) -> float:
    """Return strength grows with the broadside cross-section."""
    return min(max(length * height / 10.0, 0.5), 2.5)


def render_lidar(state: WorldState, config: ScenarioConfig) -> np.ndarray:
    """Ground-plane grid plus points sampled on box faces, with noise."""
    rng = derive_rng(config.rng_seed, "lidar", state.step)
    ext = config.lidar_ground_extent_m
    spacing = config.lidar_ground_spacing_m
    ticks = np.arange(-ext, ext + spacing / 2, spacing)
    gx, gy = np.meshgrid(ticks, ticks, indexing="ij")
    pts = [np.stack([gx.ravel(), gy.ravel(), np.zeros(gx.size)], axis=1)]

    density = config.lidar_face_density
    for cx, cy, length, width, height, _ in _boxes(state, config):
        faces = (
            # (area, point builder): four sides then the top
            (width * height, lambda u, v: np.stack(
                [np.full_like(u, cx - length / 2), cy + (u - 0.5) * width, v * height], axis=1)),
            (width * height, lambda u, v: np.stack(
                [np.full_like(u, cx + length / 2), cy + (u - 0.5) * width, v * height], axis=1)),
            (length * height, lambda u, v: np.stack(
                [cx + (u - 0.5) * length, np.full_like(u, cy - width / 2), v * height], axis=1)),
            (length * height, lambda u, v: np.stack(
                [cx + (u - 0.5) * length, np.full_like(u, cy + width / 2), v * height], axis=1)),
            (length * width, lambda u, v: np.stack(
                [cx + (u - 0.5) * length, cy + (v - 0.5) * width, np.full_like(u, height)], axis=1)),
        )
        for area, builder in faces:
            n = max(1, int(round(area * density)))
            u = rng.random(n)
            v = rng.random(n)
            pts.append(builder(u, v))

    cloud = np.concatenate(pts, axis=0)
    if config.lidar_noise_m > 0:
        cloud = cloud + rng.normal(0.0, config.lidar_noise_m, cloud.shape)
    return cloud


def render_gps(state: WorldState, config: ScenarioConfig) -> tuple:
    """Receiver lat/lon about the reference origin, with position noise."""
    rng = derive_rng(config.rng_seed, "gps", state.step)
    noise = rng.normal(0.0, config.gps_noise_m, 2) if config.gps_noise_m > 0 else (0.0, 0.0)
    x = state.receiver_x + noise[0]
    y = state.receiver_y + noise[1]
    lat0 = math.radians(config.gps_ref_lat)
    lat = config.gps_ref_lat + math.degrees(y / 6371000.0)
    lon = config.gps_ref_lon + math.degrees(x / (6371000.0 * math.cos(lat0)))
    return lat, lon


def render_radar(state: WorldState, config: ScenarioConfig) -> np.ndarray:
    """Complex (4, 256, 250) cube: one slow-time tone per object.

    A target at range r with radial velocity v contributes a complex
    exponential whose Doppler-FFT peak lands at bin round(v / v_res) + 125,
    with a per-antenna phase progression proportional to sin(azimuth).
    Targets beyond the unambiguous range or velocity are omitted (logged).
    """
    rng = derive_rng(config.rng_seed, "radar", state.step)
    n_ch, n_range, n_dop = formats.RADAR_CUBE_SHAPE
    cube = np.zeros((n_ch, n_range, n_dop), dtype=np.complex128)
    n = np.arange(n_dop)
    for cx, cy, length, _, height, vx in _boxes(state, config):
        rng_m = math.hypot(cx, cy)
        rbin = int(round(rng_m / config.radar_range_res_m))
        v_radial = (cx * vx) / rng_m if rng_m > 1e-9 else 0.0
        k = int(round(v_radial / config.radar_vel_res_mps))
        dbin = k + n_dop // 2
        if not (0 <= rbin < n_range) or not (0 <= dbin < n_dop):
            log.debug("radar target out of ambit (range bin %s, doppler bin %s)",
                      rbin, dbin)
            continue
        azimuth = math.atan2(cx, cy)  # angle off the +y boresight
        phase_step = math.pi * math.sin(azimuth)
        tone = _radar_amplitude(length, height) * np.exp(2j * math.pi * k * n / n_dop)
        for c in range(n_ch):
            cube[c, rbin] += tone * np.exp(1j * c * phase_step)
    if config.radar_snr_db is not None:
        sigma = 10.0 ** (-config.radar_snr_db / 20.0) / math.sqrt(2.0)
        noise = rng.standard_normal((2, n_ch, n_range, n_dop))
        cube += sigma * (noise[0] + 1j * noise[1])
    return cube


def render_camera(state: WorldState, config: ScenarioConfig) -> np.ndarray:
    """Pinhole projection of scene boxes as filled rectangles on a gradient.

    Each box is drawn as the exact projection of its camera-facing
    broadside face (a frontal plane projects to an axis-aligned
    rectangle). Nearer boxes are painted last, so a blocker that cuts the
    sight line covers the receiver in image space.
    """
    w, h = config.image_size
    img = np.empty((h, w, 3), dtype=np.uint8)
    sky = np.array([140.0, 175.0, 230.0])
    ground = np.array([95.0, 100.0, 95.0])
    frac = np.linspace(0.0, 1.0, h)[:, None]
    img[:] = np.clip(sky * (1 - frac) + ground * frac, 0, 255)[:, None, :].astype(np.uint8)

    fx = (w / 2.0) / math.tan(math.radians(config.camera_hfov_deg) / 2.0)
    cx0, cy0 = (w - 1) / 2.0, (h - 1) / 2.0
    cam_h = config.camera_height_m

    boxes = _boxes(state, config)
    # receiver is blue; blockers red, brighter the taller they are
    colors = [np.array([45, 80, 200])]
    for box in boxes[1:]:
        shade = 0.5 + 0.5 * min(box[4] / 5.0, 1.0)
        colors.append((np.array([230, 90, 60]) * shade).astype(np.int64))
    order = sorted(range(len(boxes)), key=lambda i: -boxes[i][1])
    for i in order:
        cx, cy, length, width, height, _ = boxes[i]
        y_face = cy - width / 2.0
        if y_face < 0.5:
            continue  # box reaches the camera plane
        u_lo = cx0 + fx * ((cx - length / 2.0) / y_face)
        u_hi = cx0 + fx * ((cx + length / 2.0) / y_face)
        v_lo = cy0 + fx * ((cam_h - height) / y_face)
        v_hi = cy0 + fx * (cam_h / y_face)
        u0, u1 = max(0, int(u_lo)), min(w - 1, int(u_hi))
        v0, v1 = max(0, int(v_lo)), min(h - 1, int(v_hi))
        if u0 <= u1 and v0 <= v1:
            img[v0 : v1 + 1, u0 : u1 + 1] = colors[i]
    return img


def render_frame(state: WorldState, config: ScenarioConfig) -> dict:
    """All four payloads for one world state."""
    lat, lon = render_gps(state, config)
    return {
        "camera": render_camera(state, config),
        "gps": (lat, lon),
        "lidar": render_lidar(state, config),
        "radar": render_radar(state, config),
    }


def _state_to_json(state: WorldState, label: int) -> str:
    doc = {
        "step": state.step,
        "label": label,
        "receiver": {
            "x": state.receiver_x,
            "y": state.receiver_y,
            "heading": state.receiver_heading,
            "speed": state.receiver_speed,
        },
        "blockers": [asdict(b) for b in state.blockers],
    }
    return json.dumps(doc, sort_keys=True)


def load_states(path):
    """Read back states.jsonl as [(WorldState, label)]."""
    out = []
    with open(path) as f:
        for line in f:
            doc = json.loads(line)
            state = WorldState(
                step=doc["step"],
                receiver_x=doc["receiver"]["x"],
                receiver_y=doc["receiver"]["y"],
                receiver_heading=doc["receiver"]["heading"],
                receiver_speed=doc["receiver"]["speed"],
                blockers=tuple(BlockerBox(**b) for b in doc["blockers"]),
            )
            out.append((state, doc["label"]))
    return out


def write_scenario(config: ScenarioConfig, root, seq_id: str):
    """Simulate one scenario and persist all payloads under root/seq_id.

    Returns the list of FrameRecords (paths relative to root).
    """
    root = Path(root)
    seq_dir = root / seq_id
    for modality in ("camera", "gps", "lidar", "radar"):
        (seq_dir / modality).mkdir(parents=True, exist_ok=True)

    records = []
    with open(seq_dir / "states.jsonl", "w") as states_f:
        for state, label in simulate(config):
            i = state.step
            payloads = render_frame(state, config)
            rel = {
                "camera": f"{seq_id}/camera/{i:06d}.ppm",
                "gps": f"{seq_id}/gps/{i:06d}.csv",
                "lidar": f"{seq_id}/lidar/{i:06d}.lpc",
                "radar": f"{seq_id}/radar/{i:06d}.rdc",
            }
            formats.write_ppm(root / rel["camera"], payloads["camera"])
            formats.write_gps(root / rel["gps"], *payloads["gps"])
            formats.write_lidar(root / rel["lidar"], payloads["lidar"])
            formats.write_radar_cube(root / rel["radar"], payloads["radar"])
            states_f.write(_state_to_json(state, label) + "\n")
            records.append(
                FrameRecord(
                    seq_id=seq_id,
                    frame_idx=i,
                    timestamp_ms=i * config.step_ms,
                    label=label,
                    **rel,
                )
            )
    return records
