"""Kinematic feature extraction from five consecutive GPS readings."""

import math
from dataclasses import dataclass

import numpy as np

from .core import MinMaxScaler
from .errors import ArityError, CoordinateRangeError, TimestampError

EARTH_RADIUS_M = 6371000.0

GPS_FEATURE_NAMES = (
    "dist_1", "dist_2", "dist_3", "dist_4", "net_displacement", "path_length",
    "speed_1", "speed_2", "speed_3", "speed_4",
    "heading_change_1", "heading_change_2", "heading_change_3",
    "accel_1", "accel_2", "accel_3",
    "angular_velocity", "curvature",
)


@dataclass(frozen=True)
class GpsReading:
    lat: float
    lon: float
    timestamp_ms: int

    def __post_init__(self):
        if not (abs(self.lat) <= 90.0 and abs(self.lon) <= 180.0):
            raise CoordinateRangeError(
                f"lat/lon out of range: ({self.lat}, {self.lon})"
            )


def to_local_xy(readings, origin: GpsReading) -> np.ndarray:
    """Equirectangular projection (meters) of readings about an origin."""
    lat0 = math.radians(origin.lat)
    out = np.empty((len(readings), 2), dtype=np.float64)
    for i, r in enumerate(readings):
        out[i, 0] = EARTH_RADIUS_M * math.radians(r.lon - origin.lon) * math.cos(lat0)
        out[i, 1] = EARTH_RADIUS_M * math.radians(r.lat - origin.lat)
    return out


def _wrap_angle(a: float) -> float:
    """Wrap to (-pi, pi]."""
    a = (a + math.pi) % (2.0 * math.pi) - math.pi
    if a <= -math.pi:
        a += 2.0 * math.pi
    return a


def extract_gps_features(readings) -> np.ndarray:
    """18 kinematic features from 5 readings; see GPS_FEATURE_NAMES for order.

    Distances and speeds come from interval displacements in a local
    tangent plane about the first reading; headings from atan2 of those
    displacements (a zero-length interval reuses the previous heading,
    the first undefined heading is 0).
    """
    if len(readings) != 5:
        raise ArityError(f"expected 5 GPS readings, got {len(readings)}")
    ts = np.array([r.timestamp_ms for r in readings], dtype=np.float64)
    dts = np.diff(ts) / 1000.0
    if np.any(dts <= 0):
        raise TimestampError("timestamps must be strictly increasing")

    xy = to_local_xy(readings, origin=readings[0])
    steps = np.diff(xy, axis=0)  # (4, 2)
    dists = np.hypot(steps[:, 0], steps[:, 1])
    net = float(np.hypot(*(xy[-1] - xy[0])))
    path = float(dists.sum())
    speeds = dists / dts

    headings = np.zeros(4)
    prev = 0.0
    for i in range(4):
        if dists[i] > 1e-12:
            prev = math.atan2(steps[i, 1], steps[i, 0])
        headings[i] = prev
    turns = np.array([_wrap_angle(headings[i + 1] - headings[i]) for i in range(3)])

    # speed i covers interval i; difference divided by the midpoint spacing
    accel = np.array(
        [(speeds[i + 1] - speeds[i]) / ((dts[i] + dts[i + 1]) / 2.0) for i in range(3)]
    )

    omega = float(np.abs(turns).mean() / dts.mean())
    kappa = float(np.abs(turns).sum() / path) if path >= 1e-6 else 0.0

    return np.concatenate(
        [dists, [net, path], speeds, turns, accel, [omega, kappa]]
    )


def normalize_gps(vec, scaler: MinMaxScaler) -> np.ndarray:
    """Min-max scale a feature vector, clamping to [0, 1]."""
    return scaler.transform(np.asarray(vec, dtype=np.float64), clip=True)
