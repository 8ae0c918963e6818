"""Stage drivers for the end-to-end workflow.

Each stage reads and writes documented artifacts under the dataset root:

  simulate    seq_*/ payload trees + index.csv
  preprocess  features/ (per-frame tensors, gps features, scaler, splits)
  train       models/*.nnp checkpoints + .meta sidecars
  fuse        ensembles/*.txt manifests
  evaluate    metrics.csv
  bench       timings.csv
  report      report.md
"""

import csv
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import formats, fusion, metrics_bench, simgen
from .camera_pipe import CameraAugmentParams, camera_augment, resize_normalize
from .config import RunConfig
from .core import (
    MinMaxScaler,
    assemble_windows,
    derive_rng,
    read_index,
    split_sequences,
    stable_seed,
    write_index,
)
from .errors import DataError, MissingArtifactError
from .gps_pipe import GpsReading, extract_gps_features, normalize_gps
from .lidar_pipe import (
    BevGridSpec,
    LidarAugmentParams,
    LidarPipelineParams,
    lidar_augment,
    process_cloud,
    stack_bev,
)
from .models import MODEL_BUILDERS, WindowData, predict, train_model
from .nn import load_params, save_params
from .nn.train import TrainConfig
from .radar_pipe import assemble_radar_features, radar_augment

SPLITS = ("train", "val", "test")


def _features_dir(root: Path) -> Path:
    return root / "features"


def _models_dir(root: Path) -> Path:
    return root / "models"


def _require(path: Path, stage: str) -> Path:
    if not path.exists():
        raise MissingArtifactError(
            f"{path} is missing; run the `{stage}` stage first"
        )
    return path


def lidar_params(cfg: RunConfig) -> LidarPipelineParams:
    return LidarPipelineParams(
        voxel_size=cfg.voxel_size,
        outlier_k=cfg.outlier_k,
        outlier_std_factor=cfg.outlier_std,
        ransac_dist_thresh=cfg.ransac_thresh,
        ransac_iterations=cfg.ransac_iters,
        dbscan_eps=cfg.dbscan_eps,
        dbscan_min_samples=cfg.dbscan_min_samples,
        bev=BevGridSpec(cell_size=cfg.bev_cell, dims=cfg.bev_dims),
    )


# ---------------------------------------------------------------------------
# simulate

def _simulate_one(args):
    scfg, root, seq_id = args
    return simgen.write_scenario(scfg, root, seq_id)


def stage_simulate(cfg: RunConfig) -> Path:
    """Generate cfg.seeds scenarios and the dataset index."""
    root = cfg.data_root
    root.mkdir(parents=True, exist_ok=True)
    jobs = [
        (cfg.scenario_config(i), root, f"seq_{i:04d}") for i in range(cfg.seeds)
    ]
    if cfg.jobs > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            all_records = list(pool.map(_simulate_one, jobs))
    else:
        all_records = [_simulate_one(j) for j in jobs]
    frames = [fr for records in all_records for fr in records]
    index_path = root / "index.csv"
    write_index(index_path, frames)
    return index_path


# ---------------------------------------------------------------------------
# preprocess

def _preprocess_sequence(args):
    """Worker: all per-frame features for one sequence. Returns
    (seq_id, gps_rows, cluster_rows) where gps_rows are raw 18-feature
    vectors keyed by anchor frame_idx."""
    cfg, seq_id, frames = args
    root = cfg.data_root
    out_dir = _features_dir(root) / seq_id
    out_dir.mkdir(parents=True, exist_ok=True)
    params = lidar_params(cfg)
    cluster_rows = []
    readings = []
    for fr in frames:
        if "camera" in cfg.modalities and fr.camera:
            img = formats.read_ppm(root / fr.camera)
            tensor = resize_normalize(img, target=cfg.camera_size)
            np.save(out_dir / f"camera_{fr.frame_idx:06d}.npy",
                    tensor.data.astype(np.float32))
        if "lidar" in cfg.modalities and fr.lidar:
            cloud = formats.read_lidar(root / fr.lidar)
            bev, n_clusters = process_cloud(
                cloud, params, rng_seed=stable_seed(cfg.seed, seq_id, fr.frame_idx)
            )
            formats.write_bev(out_dir / f"bev_{fr.frame_idx:06d}.bev", bev.data)
            cluster_rows.append((seq_id, fr.frame_idx, n_clusters))
        if "radar" in cfg.modalities and fr.radar:
            cube = formats.read_radar_cube(root / fr.radar)
            feats = assemble_radar_features(cube)
            formats.write_radar_features(
                out_dir / f"radar_{fr.frame_idx:06d}.rft", feats.data
            )
        if "gps" in cfg.modalities and fr.gps:
            lat, lon = formats.read_gps(root / fr.gps)
            readings.append(GpsReading(lat, lon, fr.timestamp_ms))
        else:
            readings.append(None)

    gps_rows = []
    if "gps" in cfg.modalities:
        for t in range(4, len(frames)):
            window = readings[t - 4 : t + 1]
            if any(r is None for r in window):
                continue
            vec = extract_gps_features(window)
            gps_rows.append((frames[t].frame_idx, vec))
        with open(out_dir / "gps_features.csv", "w", newline="") as f:
            w = csv.writer(f)
            for fidx, vec in gps_rows:
                w.writerow([fidx] + [repr(float(v)) for v in vec])
    return seq_id, gps_rows, cluster_rows


def stage_preprocess(cfg: RunConfig) -> Path:
    """Turn raw payloads into model-ready feature files."""
    root = cfg.data_root
    frames = read_index(_require(root / "index.csv", "simulate"))
    by_seq = {}
    for fr in frames:
        by_seq.setdefault(fr.seq_id, []).append(fr)
    feat_dir = _features_dir(root)
    feat_dir.mkdir(parents=True, exist_ok=True)

    splits = split_sequences(by_seq.keys())
    with open(feat_dir / "splits.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["seq_id", "split"])
        for sid in sorted(splits):
            w.writerow([sid, splits[sid]])

    jobs = [(cfg, sid, by_seq[sid]) for sid in sorted(by_seq)]
    if cfg.jobs > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            results = list(pool.map(_preprocess_sequence, jobs))
    else:
        results = [_preprocess_sequence(j) for j in jobs]

    cluster_rows = [row for _, _, rows in results for row in rows]
    if cluster_rows:
        with open(feat_dir / "clusters.csv", "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["seq_id", "frame_idx", "n_clusters"])
            w.writerows(cluster_rows)

    if "gps" in cfg.modalities:
        train_rows = [
            vec
            for sid, gps_rows, _ in results
            if splits[sid] == "train"
            for _, vec in gps_rows
        ]
        if not train_rows:
            raise DataError("no GPS feature rows in the training split")
        scaler = MinMaxScaler().fit(np.array(train_rows))
        scaler.save_csv(feat_dir / "gps_scaler.csv")

    (feat_dir / "manifest.txt").write_text(
        f"camera_size={cfg.camera_size[0]}x{cfg.camera_size[1]}\n"
        f"bev_cell={cfg.bev_cell!r}\n"
        f"modalities={','.join(cfg.modalities)}\n"
        f"k={cfg.k}\n"
    )
    return feat_dir


# ---------------------------------------------------------------------------
# feature access for training/evaluation

class FeatureStore:
    """Loads preprocessed per-frame features with an in-memory f32 cache."""

    def __init__(self, root: Path):
        self.root = Path(root)
        self.dir = _features_dir(self.root)
        _require(self.dir, "preprocess")
        self._cache = {}
        self._gps = {}

    def _cached(self, key, loader):
        if key not in self._cache:
            self._cache[key] = loader().astype(np.float32)
        return self._cache[key]

    def camera(self, seq_id, frame_idx):
        return self._cached(
            ("camera", seq_id, frame_idx),
            lambda: np.load(self.dir / seq_id / f"camera_{frame_idx:06d}.npy"),
        )

    def bev(self, seq_id, frame_idx):
        return self._cached(
            ("bev", seq_id, frame_idx),
            lambda: formats.read_bev(self.dir / seq_id / f"bev_{frame_idx:06d}.bev"),
        )

    def radar(self, seq_id, frame_idx):
        return self._cached(
            ("radar", seq_id, frame_idx),
            lambda: formats.read_radar_features(
                self.dir / seq_id / f"radar_{frame_idx:06d}.rft"
            ),
        )

    def gps_raw(self, seq_id, frame_idx):
        if seq_id not in self._gps:
            rows = {}
            with open(self.dir / seq_id / "gps_features.csv", newline="") as f:
                for row in csv.reader(f):
                    rows[int(row[0])] = np.array([float(v) for v in row[1:]])
            self._gps[seq_id] = rows
        return self._gps[seq_id][frame_idx]

    def splits(self):
        out = {}
        with open(_require(self.dir / "splits.csv", "preprocess"), newline="") as f:
            reader = csv.reader(f)
            next(reader)
            for sid, split in reader:
                out[sid] = split
        return out

    def gps_scaler(self) -> MinMaxScaler:
        return MinMaxScaler.load_csv(_require(self.dir / "gps_scaler.csv", "preprocess"))


def split_windows(cfg: RunConfig, frames, splits):
    """assemble_windows per split, preserving index order."""
    out = {name: [] for name in SPLITS}
    for window in assemble_windows(frames, k=cfg.k):
        out[splits[window.seq_id]].append(window)
    return out


def window_labels(windows) -> np.ndarray:
    return np.array([w.future_labels for w in windows], dtype=np.float64)


def make_loader(cfg: RunConfig, modality: str, windows, store: FeatureStore,
                scaler=None, augment_seed=None):
    """indices -> stacked float64 batch for one modality.

    With augment_seed set (training only), camera tensors are augmented
    in feature space while lidar/radar windows are rebuilt from the raw
    payloads with geometric/noise augmentation applied first.
    """
    root = cfg.data_root
    counter = [0]

    def aug_tag():
        counter[0] += 1
        return counter[0]

    if modality == "camera":
        params = CameraAugmentParams(
            flip_prob=cfg.camera_flip_prob,
            max_rotation_deg=cfg.camera_max_rotation_deg,
            blur_sigma=cfg.camera_blur_sigma,
        )

        def load(indices):
            batch = []
            for i in indices:
                w = windows[i]
                frames = [
                    store.camera(w.seq_id, fr.frame_idx).astype(np.float64)
                    for fr in w.frames
                ]
                if augment_seed is not None:
                    tag = stable_seed(augment_seed, "camera", i, aug_tag())
                    frames = [camera_augment(fr, tag + j, params)
                              for j, fr in enumerate(frames)]
                batch.append(np.stack(frames))
            return np.stack(batch)

    elif modality == "lidar":
        params = lidar_params(cfg)
        aug = LidarAugmentParams(
            flip_prob=cfg.lidar_flip_prob,
            max_rotation_rad=np.radians(cfg.lidar_max_rotation_deg),
            scale_range=cfg.lidar_scale,
        )

        def load(indices):
            batch = []
            for i in indices:
                w = windows[i]
                if augment_seed is None:
                    bevs = [store.bev(w.seq_id, fr.frame_idx).astype(np.float64)
                            for fr in w.frames]
                else:
                    tag = stable_seed(augment_seed, "lidar", i, aug_tag())
                    bevs = []
                    for j, fr in enumerate(w.frames):
                        cloud = formats.read_lidar(root / fr.lidar)
                        cloud = lidar_augment(cloud, tag + j, aug)
                        bev, _ = process_cloud(cloud, params, rng_seed=tag + j)
                        bevs.append(bev.data)
                batch.append(np.concatenate(bevs, axis=0))
            return np.stack(batch)

    elif modality == "radar":

        def load(indices):
            batch = []
            for i in indices:
                w = windows[i]
                if augment_seed is None:
                    feats = [store.radar(w.seq_id, fr.frame_idx).astype(np.float64)
                             for fr in w.frames]
                else:
                    tag = stable_seed(augment_seed, "radar", i, aug_tag())
                    feats = []
                    for j, fr in enumerate(w.frames):
                        cube = formats.read_radar_cube(root / fr.radar)
                        cube = radar_augment(cube, tag + j, cfg.radar_aug_sigma)
                        feats.append(assemble_radar_features(cube).data)
                batch.append(np.stack(feats))
            return np.stack(batch)

    elif modality == "gps":

        def load(indices):
            return np.stack(
                [
                    normalize_gps(
                        store.gps_raw(windows[i].seq_id, windows[i].anchor), scaler
                    )
                    for i in indices
                ]
            )

    else:
        raise ValueError(f"unknown modality {modality!r}")

    return load


def build_window_data(cfg: RunConfig, modality: str, windows, store,
                      scaler=None, augment_seed=None) -> WindowData:
    return WindowData(
        loader=make_loader(cfg, modality, windows, store, scaler, augment_seed),
        labels=window_labels(windows),
    )


# ---------------------------------------------------------------------------
# train

def _model_paths(root: Path, modality: str, train_seed: int):
    base = _models_dir(root) / f"{modality}_s{train_seed}"
    return base.with_suffix(".nnp"), base.with_suffix(".meta")


def _write_meta(path, model, cfg: RunConfig, train_seed: int):
    lines = [
        f"modality={model.modality}",
        f"scale={model.scale}",
        f"k={model.k}",
        f"train_seed={train_seed}",
        "val_f1=" + ",".join(repr(v) for v in model.validation_f1),
    ]
    Path(path).write_text("\n".join(lines) + "\n")


def _read_meta(path) -> dict:
    out = {}
    for line in Path(path).read_text().splitlines():
        if line.strip():
            key, value = line.split("=", 1)
            out[key] = value
    return out


def stage_train(cfg: RunConfig, modalities=None) -> list:
    """Train each requested modality for every train seed; returns paths."""
    root = cfg.data_root
    frames = read_index(_require(root / "index.csv", "simulate"))
    store = FeatureStore(root)
    splits = store.splits()
    windows = split_windows(cfg, frames, splits)
    if not windows["train"] or not windows["val"]:
        raise DataError("train/val windows are empty; generate more data")
    scaler = store.gps_scaler() if "gps" in cfg.modalities else None
    _models_dir(root).mkdir(parents=True, exist_ok=True)

    written = []
    for modality in modalities or cfg.modalities:
        for train_seed in cfg.train_seeds:
            model = MODEL_BUILDERS[modality](
                scale=cfg.scale, k=cfg.k, rng_seed=train_seed
            )
            train_data = build_window_data(
                cfg, modality, windows["train"], store, scaler,
                augment_seed=train_seed if cfg.augment else None,
            )
            val_data = build_window_data(
                cfg, modality, windows["val"], store, scaler
            )
            tc = TrainConfig(
                epochs=cfg.epochs,
                batch_size=cfg.batch_size,
                lr=cfg.lr,
                optimizer=cfg.optimizer,
                class_weight_alpha=cfg.alpha,
                rng_seed=train_seed,
                patience=cfg.patience,
            )
            train_model(model, train_data, val_data, tc)
            nnp_path, meta_path = _model_paths(root, modality, train_seed)
            save_params(nnp_path, model.param_dict())
            _write_meta(meta_path, model, cfg, train_seed)
            written.append(nnp_path)
    return written


def load_model(root: Path, modality: str, train_seed: int):
    """Rebuild a trained model from its checkpoint + sidecar."""
    nnp_path, meta_path = _model_paths(Path(root), modality, train_seed)
    _require(nnp_path, "train")
    meta = _read_meta(meta_path)
    model = MODEL_BUILDERS[modality](
        scale=meta["scale"], k=int(meta["k"]), rng_seed=int(meta["train_seed"])
    )
    model.load_state(load_params(nnp_path))
    model.validation_f1 = [float(v) for v in meta["val_f1"].split(",")]
    return model


# ---------------------------------------------------------------------------
# fuse / evaluate

def build_ensemble(models: dict, members) -> fusion.FusionEnsemble:
    scores = [float(np.mean(models[m].validation_f1)) for m in members]
    return fusion.FusionEnsemble.from_scores(tuple(members), scores)


def stage_fuse(cfg: RunConfig, train_seed=None) -> list:
    """Write ensemble manifests for every combination of cfg.modalities."""
    root = cfg.data_root
    seed = cfg.train_seeds[0] if train_seed is None else train_seed
    models = {m: load_model(root, m, seed) for m in cfg.modalities}
    ens_dir = root / "ensembles"
    ens_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for combo in fusion.enumerate_combinations(cfg.modalities):
        ensemble = build_ensemble(models, combo)
        path = ens_dir / f"{ensemble.name}.txt"
        fusion.write_manifest(
            path, ensemble,
            {m: str(_model_paths(root, m, seed)[0].relative_to(root)) for m in combo},
        )
        paths.append(path)
    return paths


def stage_evaluate(cfg: RunConfig, train_seed=None, out_path=None):
    """Score every modality combination on the test split; write metrics.csv."""
    root = cfg.data_root
    seed = cfg.train_seeds[0] if train_seed is None else train_seed
    frames = read_index(_require(root / "index.csv", "simulate"))
    store = FeatureStore(root)
    splits = store.splits()
    windows = split_windows(cfg, frames, splits)["test"]
    if not windows:
        raise DataError("test split has no windows")
    scaler = store.gps_scaler() if "gps" in cfg.modalities else None
    labels = window_labels(windows)

    models = {m: load_model(root, m, seed) for m in cfg.modalities}
    member_probs = {}
    for m in cfg.modalities:
        data = build_window_data(cfg, m, windows, store, scaler)
        member_probs[m] = predict(models[m], data, cfg.batch_size)

    combos = []
    for combo in fusion.enumerate_combinations(cfg.modalities):
        ensemble = build_ensemble(models, combo)
        fused = np.zeros_like(labels, dtype=np.float64)
        for w, m in zip(ensemble.weights, combo):
            fused += w * member_probs[m]
        combos.append(
            metrics_bench.horizon_metrics(ensemble.name, labels, fused)
        )
    out_path = Path(out_path) if out_path else root / "metrics.csv"
    metrics_bench.write_metrics_csv(out_path, combos)
    return combos


# ---------------------------------------------------------------------------
# bench

def _bench_preprocessors(cfg: RunConfig, scaler):
    params = lidar_params(cfg)
    return {
        "camera": lambda imgs: np.stack(
            [resize_normalize(img, target=cfg.camera_size).data for img in imgs]
        ),
        "gps": lambda readings: normalize_gps(extract_gps_features(readings), scaler),
        "lidar": lambda clouds: stack_bev(
            [process_cloud(c, params, rng_seed=0)[0] for c in clouds]
        ).data,
        "radar": lambda cubes: np.stack(
            [assemble_radar_features(c).data for c in cubes]
        ),
    }


def _preload_bench_windows(cfg: RunConfig, windows, max_windows: int = 16):
    """Raw payloads for the first test windows, keyed by modality."""
    root = cfg.data_root
    out = []
    for w in windows[:max_windows]:
        item = {}
        if "camera" in cfg.modalities:
            item["camera"] = [formats.read_ppm(root / fr.camera) for fr in w.frames]
        if "gps" in cfg.modalities:
            item["gps"] = [
                GpsReading(*formats.read_gps(root / fr.gps), fr.timestamp_ms)
                for fr in w.frames
            ]
        if "lidar" in cfg.modalities:
            item["lidar"] = [formats.read_lidar(root / fr.lidar) for fr in w.frames]
        if "radar" in cfg.modalities:
            item["radar"] = [formats.read_radar_cube(root / fr.radar) for fr in w.frames]
        out.append(item)
    return out


def stage_bench(cfg: RunConfig, train_seed=None, combos=None):
    """Latency per combination over preloaded windows; writes timings.csv.

    Disk I/O is excluded: payloads are preloaded so the split between
    preprocessing and inference isolates compute.
    """
    root = cfg.data_root
    seed = cfg.train_seeds[0] if train_seed is None else train_seed
    frames = read_index(_require(root / "index.csv", "simulate"))
    store = FeatureStore(root)
    splits = store.splits()
    windows = split_windows(cfg, frames, splits)["test"]
    if not windows:
        raise DataError("test split has no windows")
    scaler = store.gps_scaler() if "gps" in cfg.modalities else None
    models = {m: load_model(root, m, seed) for m in cfg.modalities}
    preloaded = _preload_bench_windows(cfg, windows)
    preprocessors = _bench_preprocessors(cfg, scaler)

    reports = []
    for combo in combos or fusion.enumerate_combinations(cfg.modalities):
        ensemble = build_ensemble(models, combo)
        reports.append(
            metrics_bench.benchmark(
                combo, preloaded, preprocessors, models, ensemble.weights,
                repetitions=cfg.bench_reps, warmup=cfg.bench_warmup,
            )
        )
    metrics_bench.write_timings_csv(root / "timings.csv", reports)
    return reports


# ---------------------------------------------------------------------------
# report

def stage_report(cfg: RunConfig) -> dict:
    root = cfg.data_root
    combos = metrics_bench.read_metrics_csv(_require(root / "metrics.csv", "evaluate"))
    timings = []
    if (root / "timings.csv").exists():
        timings = metrics_bench.read_timings_csv(root / "timings.csv")
    return metrics_bench.emit_report(combos, timings, root)
