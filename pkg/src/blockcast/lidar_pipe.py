"""Point-cloud processing: downsample, denoise, deground, cluster, and
rasterize into the stacked 15-channel bird's-eye-view tensor."""

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _kernels
from .core import FeatureTensor, derive_rng
from .errors import ArityError, DegenerateGeometryError, InsufficientPointsError


@dataclass(frozen=True)
class BevGridSpec:
    """Raster extents and resolution for the bird's-eye-view projection.

    Output dims default to the extents divided by cell_size (400x400 for
    the stock 100 m ranges at 0.25 m); pass dims to override, in which
    case cells are mapped by independent x/y scaling.
    """

    x_range: tuple = (-50.0, 50.0)
    y_range: tuple = (-50.0, 50.0)
    z_range: tuple = (-2.5, 15.0)
    cell_size: float = 0.25
    dims: Optional[tuple] = None  # (H, W) override

    def __post_init__(self):
        if self.cell_size <= 0:
            raise ValueError("cell_size must be positive")
        for lo, hi in (self.x_range, self.y_range, self.z_range):
            if not hi > lo:
                raise ValueError("ranges must be non-degenerate")
        if self.dims is not None and (self.dims[0] < 1 or self.dims[1] < 1):
            raise ValueError("override dims must be >= 1")

    @property
    def shape(self) -> tuple:
        """(H, W): rows cover y, columns cover x."""
        if self.dims is not None:
            return tuple(self.dims)
        h = int(round((self.y_range[1] - self.y_range[0]) / self.cell_size))
        w = int(round((self.x_range[1] - self.x_range[0]) / self.cell_size))
        return (h, w)


@dataclass(frozen=True)
class Plane:
    """Plane n.p + d = 0 with unit normal."""

    normal: tuple
    d: float

    def distances(self, points) -> np.ndarray:
        return np.abs(np.asarray(points) @ np.asarray(self.normal) + self.d)


@dataclass(frozen=True)
class LidarAugmentParams:
    flip_prob: float = 0.5
    max_rotation_rad: float = math.radians(10.0)
    scale_range: tuple = (0.95, 1.05)

    def __post_init__(self):
        if not (0.0 < self.scale_range[0] <= self.scale_range[1]):
            raise ValueError("scale range must be positive and ordered")


def voxel_downsample(points, voxel: float) -> np.ndarray:
    """Replace the points in each occupied voxel by their centroid."""
    if voxel <= 0:
        raise ValueError("voxel size must be positive")
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if len(pts) == 0:
        return pts
    keys = np.floor(pts / voxel).astype(np.int64)
    uniq, inverse = np.unique(keys, axis=0, return_inverse=True)
    counts = np.bincount(inverse, minlength=len(uniq)).astype(np.float64)
    out = np.empty((len(uniq), 3), dtype=np.float64)
    for axis in range(3):
        out[:, axis] = np.bincount(inverse, weights=pts[:, axis]) / counts
    return out


def remove_outliers(points, k: int = 8, std_factor: float = 2.0) -> np.ndarray:
    """Drop points whose mean k-NN distance exceeds mean + std_factor * std.

    Clouds with at most k points are returned unchanged.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if len(pts) <= k:
        return pts
    mean_d = _kernels.knn_mean_dists(np.ascontiguousarray(pts), k)
    thresh = mean_d.mean() + std_factor * mean_d.std()
    return pts[mean_d <= thresh]


def ransac_ground(points, dist_thresh: float = 0.15, iterations: int = 200,
                  rng_seed: int = 0):
    """Fit the dominant plane by RANSAC and remove its inliers.

    Returns (plane, remaining_points). The best 3-point hypothesis is
    refined by a least-squares fit to its inliers before the final inlier
    removal. Deterministic for a given seed.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if len(pts) < 3:
        raise InsufficientPointsError("plane fit needs at least 3 points")
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    rng = derive_rng(rng_seed, "ransac")

    # sample triples of distinct indices, redrawing rows with duplicates
    triples = rng.integers(0, len(pts), size=(iterations, 3))
    while True:
        dup = (
            (triples[:, 0] == triples[:, 1])
            | (triples[:, 0] == triples[:, 2])
            | (triples[:, 1] == triples[:, 2])
        )
        if not dup.any():
            break
        triples[dup] = rng.integers(0, len(pts), size=(int(dup.sum()), 3))
    p0, p1, p2 = pts[triples[:, 0]], pts[triples[:, 1]], pts[triples[:, 2]]
    normals = np.cross(p1 - p0, p2 - p0)
    norms = np.linalg.norm(normals, axis=1)
    valid = norms > 1e-12
    if not valid.any():
        raise DegenerateGeometryError("all sampled triples were collinear")
    normals = normals[valid] / norms[valid, None]
    offsets = -np.einsum("ij,ij->i", normals, p0[valid])

    dists = np.abs(normals @ pts.T + offsets[:, None])
    counts = (dists <= dist_thresh).sum(axis=1)
    best = np.argmax(counts)
    n_best = normals[best]
    d_best = offsets[best]

    # least-squares refit to the winning hypothesis' inliers
    inliers = pts[np.abs(pts @ n_best + d_best) <= dist_thresh]
    centroid = inliers.mean(axis=0)
    _, _, vt = np.linalg.svd(inliers - centroid, full_matrices=False)
    n_fit = vt[-1]
    if n_fit[2] < 0 or (n_fit[2] == 0 and (n_fit[0] < 0 or (n_fit[0] == 0 and n_fit[1] < 0))):
        n_fit = -n_fit
    plane = Plane(normal=tuple(n_fit), d=float(-n_fit @ centroid))
    keep = plane.distances(pts) > dist_thresh
    return plane, pts[keep]


def dbscan(points, eps: float = 0.75, min_samples: int = 5) -> np.ndarray:
    """Euclidean DBSCAN labels per point; noise points get -1."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    if min_samples < 1:
        raise ValueError("min_samples must be >= 1")
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    labels = _kernels.dbscan_labels(np.ascontiguousarray(pts), eps, min_samples)
    # every DBSCAN cluster already has >= min_samples members (the founding
    # core point's neighborhood); the sweep below enforces it explicitly
    if len(labels):
        ids, counts = np.unique(labels[labels >= 0], return_counts=True)
        small = ids[counts < min_samples]
        if len(small):
            labels[np.isin(labels, small)] = -1
    return labels


def drop_noise(points, labels) -> np.ndarray:
    """Keep only clustered points (labels >= 0)."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    return pts[np.asarray(labels) >= 0]


def bev_project(points, spec: BevGridSpec = BevGridSpec()) -> FeatureTensor:
    """Rasterize a cloud into a (3, H, W) tensor of height/density/roughness.

    Channel 0: per-cell max z, min-max normalized over the z range.
    Channel 1: log(1 + count) / log(1 + max count in frame).
    Channel 2: per-cell z variance / max cell variance in frame.
    Empty cells are 0 everywhere; all values lie in [0, 1].
    """
    h, w = spec.shape
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    (x0, x1), (y0, y1), (z0, z1) = spec.x_range, spec.y_range, spec.z_range
    grid = np.zeros((3, h, w), dtype=np.float64)
    if len(pts):
        m = (
            (pts[:, 0] >= x0) & (pts[:, 0] <= x1)
            & (pts[:, 1] >= y0) & (pts[:, 1] <= y1)
            & (pts[:, 2] >= z0) & (pts[:, 2] <= z1)
        )
        pts = pts[m]
    if len(pts):
        col = np.minimum(((pts[:, 0] - x0) / (x1 - x0) * w).astype(np.int64), w - 1)
        row = np.minimum(((pts[:, 1] - y0) / (y1 - y0) * h).astype(np.int64), h - 1)
        flat = row * w + col
        count, zmax, zsum, zsumsq = _kernels.bev_scatter(flat, pts[:, 2], h * w)
        occ = count > 0
        cnt = count.astype(np.float64)

        height = np.zeros(h * w)
        height[occ] = (zmax[occ] - z0) / (z1 - z0)

        density = np.log1p(cnt) / np.log1p(cnt.max())

        var = np.zeros(h * w)
        var[occ] = np.maximum(zsumsq[occ] / cnt[occ] - (zsum[occ] / cnt[occ]) ** 2, 0.0)
        vmax = var.max()
        roughness = var / vmax if vmax > 0 else np.zeros(h * w)

        grid[0] = height.reshape(h, w)
        grid[1] = density.reshape(h, w)
        grid[2] = roughness.reshape(h, w)
    return FeatureTensor(dims=("channel", "y", "x"), data=grid)


def stack_bev(frames) -> FeatureTensor:
    """Concatenate five (3, H, W) BEV frames chronologically into (15, H, W)."""
    if len(frames) != 5:
        raise ArityError(f"expected 5 BEV frames, got {len(frames)}")
    arrays = [f.data if isinstance(f, FeatureTensor) else np.asarray(f) for f in frames]
    shape = arrays[0].shape
    for a in arrays:
        if a.shape != shape:
            raise ArityError("BEV frames must share one grid spec")
    return FeatureTensor(dims=("channel", "y", "x"), data=np.concatenate(arrays, axis=0))


def rotate_z(points, theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    return np.asarray(points, dtype=np.float64) @ rot.T


def lidar_augment(points, rng_seed: int,
                  params: LidarAugmentParams = LidarAugmentParams()) -> np.ndarray:
    """Random mirror, z-rotation and uniform scaling, deterministic per seed."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    rng = derive_rng(rng_seed, "lidar-augment")
    flip = rng.random() < params.flip_prob
    theta = rng.uniform(-params.max_rotation_rad, params.max_rotation_rad)
    scale = rng.uniform(*params.scale_range)
    if flip:
        pts = pts * np.array([-1.0, 1.0, 1.0])
    if theta != 0.0:
        pts = rotate_z(pts, theta)
    if scale != 1.0:
        pts = pts * scale
    return pts


@dataclass(frozen=True)
class LidarPipelineParams:
    """Constants for the full per-frame chain."""

    voxel_size: float = 0.3
    outlier_k: int = 8
    outlier_std_factor: float = 2.0
    ransac_dist_thresh: float = 0.15
    ransac_iterations: int = 200
    dbscan_eps: float = 0.75
    dbscan_min_samples: int = 5
    bev: BevGridSpec = field(default_factory=BevGridSpec)


def process_cloud(points, params: LidarPipelineParams, rng_seed: int = 0):
    """Full chain: downsample, denoise, remove ground, cluster, rasterize.

    Returns (bev FeatureTensor (3,H,W), cluster_count). Clustering only
    drops noise points before rasterization.
    """
    pts = voxel_downsample(points, params.voxel_size)
    pts = remove_outliers(pts, params.outlier_k, params.outlier_std_factor)
    if len(pts) >= 3:
        _, pts = ransac_ground(
            pts, params.ransac_dist_thresh, params.ransac_iterations, rng_seed
        )
    labels = dbscan(pts, params.dbscan_eps, params.dbscan_min_samples)
    n_clusters = int(labels.max() + 1) if len(labels) and labels.max() >= 0 else 0
    pts = drop_noise(pts, labels)
    return bev_project(pts, params.bev), n_clusters
