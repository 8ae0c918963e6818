"""The four modality predictors and their train/validate procedure.

Each model maps a window of preprocessed features to a k-vector of
independent blockage probabilities (one sigmoid per future step). Two
scale presets exist: "paper" uses the published layer sizes, "desk" is a
reduced-width configuration that trains in minutes on a laptop.
"""

import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import nn
from .core import as_array, derive_rng, positive_class_weight
from .errors import DataError, ShapeError
from .metrics_bench import f1_score
from .nn.train import TrainConfig

MODEL_SCALES = ("paper", "desk")


def _check_scale(scale: str):
    if scale not in MODEL_SCALES:
        raise ValueError(f"scale must be one of {MODEL_SCALES}, got {scale!r}")


class ResidualBackbone(nn.Layer):
    """Stem conv + staged residual blocks + global average pooling."""

    def __init__(self, name, in_ch, width, blocks_per_stage, rng=None):
        self.stem = nn.Conv2d(f"{name}.stem", in_ch, width, 3, stride=2, rng=rng,
                              input_grad=False)
        self.stem_bn = nn.BatchNorm2d(f"{name}.stem_bn", width)
        self.stem_relu = nn.ReLU()
        self.blocks = []
        ch = width
        for stage, n_blocks in enumerate(blocks_per_stage):
            out_ch = width * (2 ** stage)
            for b in range(n_blocks):
                # every stage opens with a stride-2 block (the stem has no
                # separate pooling step, so stage 0 downsamples too)
                stride = 2 if b == 0 else 1
                self.blocks.append(
                    nn.ResidualBlock(f"{name}.s{stage}b{b}", ch, out_ch, stride, rng=rng)
                )
                ch = out_ch
        self.pool = nn.AdaptiveAvgPool2d((1, 1))
        self.feature_dim = ch

    def forward(self, x, training=False, rng=None):
        x = self.stem_relu.forward(
            self.stem_bn.forward(self.stem.forward(x, training, rng), training, rng),
            training, rng,
        )
        for block in self.blocks:
            x = block.forward(x, training, rng)
        return self.pool.forward(x, training, rng)[:, :, 0, 0]

    def backward(self, grad_out):
        grad = self.pool.backward(grad_out[:, :, None, None])
        for block in reversed(self.blocks):
            grad = block.backward(grad)
        return self.stem.backward(self.stem_bn.backward(self.stem_relu.backward(grad)))

    def parameters(self):
        out = self.stem.parameters() + self.stem_bn.parameters()
        for block in self.blocks:
            out += block.parameters()
        return out


class ModalityModel:
    """Base class: sigmoid k-head over modality-specific feature extractors."""

    modality = "?"
    unbatched_ndim = 0  # ndim of a single window's input

    def __init__(self, scale: str, k: int):
        _check_scale(scale)
        self.scale = scale
        self.k = k
        self.validation_f1: Optional[list] = None
        self._out_sigmoid = nn.Sigmoid()

    # -- subclass hooks -------------------------------------------------
    def _forward_logits(self, x, training, rng):
        raise NotImplementedError

    def _backward_logits(self, grad):
        raise NotImplementedError

    def parameters(self):
        raise NotImplementedError

    # -- shared plumbing ------------------------------------------------
    def forward(self, x, training: bool = False, rng=None) -> np.ndarray:
        """Probabilities (B, k); a single unbatched window yields (k,)."""
        x = as_array(x).astype(np.float64, copy=False)
        single = x.ndim == self.unbatched_ndim
        if single:
            x = x[None]
        logits = self._forward_logits(x, training, rng)
        probs = self._out_sigmoid.forward(logits, training, rng)
        return probs[0] if single else probs

    def backward(self, grad_probs) -> None:
        grad = np.asarray(grad_probs, dtype=np.float64)
        if grad.ndim == 1:
            grad = grad[None]
        self._backward_logits(self._out_sigmoid.backward(grad))

    def param_dict(self) -> dict:
        return {p.name: p.data for p in self.parameters()}

    def load_state(self, state: dict) -> None:
        for p in self.parameters():
            if p.name not in state:
                raise KeyError(f"checkpoint missing tensor {p.name!r}")
            arr = np.asarray(state[p.name], dtype=np.float64)
            if arr.shape != p.data.shape:
                raise ShapeError(
                    f"{p.name}: checkpoint shape {arr.shape} != model {p.data.shape}"
                )
            p.data = arr.copy()


class CameraModel(ModalityModel):
    """Per-frame residual backbone, LSTM over the 5 embeddings, 2-layer head."""

    modality = "camera"
    unbatched_ndim = 4  # (5, 3, H, W)

    def __init__(self, scale="desk", k=5, rng_seed=0):
        super().__init__(scale, k)
        rng = derive_rng(rng_seed, "init", "camera")
        if scale == "paper":
            width, blocks, hidden, head = 64, (2, 2, 2, 2), 128, 64
        else:
            width, blocks, hidden, head = 8, (1, 1, 1, 1), 32, 16
        self.backbone = ResidualBackbone("camera.backbone", 3, width, blocks, rng=rng)
        self.lstm = nn.LSTM("camera.lstm", self.backbone.feature_dim, hidden, rng=rng)
        self.fc1 = nn.Linear("camera.fc1", hidden, head, rng=rng)
        self.relu = nn.ReLU()
        self.dropout = nn.Dropout(0.4)
        self.fc2 = nn.Linear("camera.fc2", head, k, rng=rng)
        self._frames = None

    def _forward_logits(self, x, training, rng):
        if x.ndim != 5 or x.shape[1] != 5 or x.shape[2] != 3:
            raise ShapeError(f"camera model expects (B, 5, 3, H, W), got {x.shape}")
        b, t = x.shape[:2]
        emb = self.backbone.forward(x.reshape((b * t,) + x.shape[2:]), training, rng)
        hs = self.lstm.forward(emb.reshape(b, t, -1), training, rng)
        self._frames = (b, t, hs.shape)
        h = self.dropout.forward(
            self.relu.forward(self.fc1.forward(hs[:, -1], training, rng), training, rng),
            training, rng,
        )
        return self.fc2.forward(h, training, rng)

    def _backward_logits(self, grad):
        b, t, hs_shape = self._frames
        self._frames = None
        dh = self.fc1.backward(self.relu.backward(self.dropout.backward(self.fc2.backward(grad))))
        dhs = np.zeros(hs_shape)
        dhs[:, -1] = dh
        demb = self.lstm.backward(dhs)
        self.backbone.backward(demb.reshape(b * t, -1))

    def parameters(self):
        return (
            self.backbone.parameters()
            + self.lstm.parameters()
            + self.fc1.parameters()
            + self.fc2.parameters()
        )


class GpsModel(ModalityModel):
    """Two stacked LSTMs over the 18-feature vector (a length-1 sequence)."""

    modality = "gps"
    unbatched_ndim = 1  # (18,)

    def __init__(self, scale="desk", k=5, rng_seed=0):
        super().__init__(scale, k)
        rng = derive_rng(rng_seed, "init", "gps")
        hidden, head = (128, 64) if scale == "paper" else (32, 16)
        self.lstm1 = nn.LSTM("gps.lstm1", 18, hidden, rng=rng)
        self.lstm2 = nn.LSTM("gps.lstm2", hidden, hidden, rng=rng)
        self.fc1 = nn.Linear("gps.fc1", hidden, head, rng=rng)
        self.relu = nn.ReLU()
        self.dropout = nn.Dropout(0.4)
        self.fc2 = nn.Linear("gps.fc2", head, k, rng=rng)

    def _forward_logits(self, x, training, rng):
        if x.ndim != 2 or x.shape[1] != 18:
            raise ShapeError(f"gps model expects (B, 18), got {x.shape}")
        hs = self.lstm2.forward(self.lstm1.forward(x[:, None, :], training, rng),
                                training, rng)
        h = self.dropout.forward(
            self.relu.forward(self.fc1.forward(hs[:, -1], training, rng), training, rng),
            training, rng,
        )
        return self.fc2.forward(h, training, rng)

    def _backward_logits(self, grad):
        dh = self.fc1.backward(self.relu.backward(self.dropout.backward(self.fc2.backward(grad))))
        self.lstm1.backward(self.lstm2.backward(dh[:, None, :]))

    def parameters(self):
        return (
            self.lstm1.parameters()
            + self.lstm2.parameters()
            + self.fc1.parameters()
            + self.fc2.parameters()
        )


class LidarModel(ModalityModel):
    """Residual backbone with a 15-channel stem; temporal context is early-fused."""

    modality = "lidar"
    unbatched_ndim = 3  # (15, H, W)

    def __init__(self, scale="desk", k=5, rng_seed=0):
        super().__init__(scale, k)
        rng = derive_rng(rng_seed, "init", "lidar")
        if scale == "paper":
            width, blocks = 64, (2, 2, 2, 2)
        else:
            width, blocks = 8, (1, 1, 1, 1)
        self.backbone = ResidualBackbone("lidar.backbone", 15, width, blocks, rng=rng)
        self.fc = nn.Linear("lidar.fc", self.backbone.feature_dim, k, rng=rng)

    def _forward_logits(self, x, training, rng):
        if x.ndim != 4 or x.shape[1] != 15:
            raise ShapeError(f"lidar model expects (B, 15, H, W), got {x.shape}")
        return self.fc.forward(self.backbone.forward(x, training, rng), training, rng)

    def _backward_logits(self, grad):
        self.backbone.backward(self.fc.backward(grad))

    def parameters(self):
        return self.backbone.parameters() + self.fc.parameters()


class RadarModel(ModalityModel):
    """Three conv/BN/ReLU stages per frame, pooled, then an LSTM over frames."""

    modality = "radar"
    unbatched_ndim = 4  # (5, 8, 256, 64)

    def __init__(self, scale="desk", k=5, rng_seed=0):
        super().__init__(scale, k)
        rng = derive_rng(rng_seed, "init", "radar")
        if scale == "paper":
            chans, hidden, head = (32, 64, 128), 64, 64
            strides = ((2, 2), (2, 2), (2, 2))
        else:
            chans, hidden, head = (16, 32, 32), 16, 16
            strides = ((4, 4), (2, 2), (2, 2))
        self.convs = []
        in_ch = 8
        for i, (out_ch, stride) in enumerate(zip(chans, strides)):
            self.convs.append(nn.Conv2d(f"radar.conv{i}", in_ch, out_ch, 3, stride,
                                        rng=rng, input_grad=i > 0))
            self.convs.append(nn.BatchNorm2d(f"radar.bn{i}", out_ch))
            self.convs.append(nn.ReLU())
            in_ch = out_ch
        self.trunk = nn.Sequential(self.convs)
        self.pool = nn.AdaptiveAvgPool2d((2, 2))
        feat = chans[-1] * 4
        self.lstm = nn.LSTM("radar.lstm", feat, hidden, rng=rng)
        self.fc1 = nn.Linear("radar.fc1", hidden, head, rng=rng)
        self.relu = nn.ReLU()
        self.dropout = nn.Dropout(0.3)
        self.fc2 = nn.Linear("radar.fc2", head, k, rng=rng)
        self._shape = None

    def _forward_logits(self, x, training, rng):
        if x.ndim != 5 or x.shape[1] != 5 or x.shape[2] != 8:
            raise ShapeError(f"radar model expects (B, 5, 8, R, D), got {x.shape}")
        b, t = x.shape[:2]
        fmap = self.trunk.forward(x.reshape((b * t,) + x.shape[2:]), training, rng)
        pooled = self.pool.forward(fmap, training, rng)
        self._shape = (b, t, pooled.shape)
        hs = self.lstm.forward(pooled.reshape(b, t, -1), training, rng)
        self._hs_shape = hs.shape
        h = self.dropout.forward(
            self.relu.forward(self.fc1.forward(hs[:, -1], training, rng), training, rng),
            training, rng,
        )
        return self.fc2.forward(h, training, rng)

    def _backward_logits(self, grad):
        b, t, pooled_shape = self._shape
        self._shape = None
        dh = self.fc1.backward(self.relu.backward(self.dropout.backward(self.fc2.backward(grad))))
        dhs = np.zeros(self._hs_shape)
        dhs[:, -1] = dh
        dpooled = self.lstm.backward(dhs).reshape(pooled_shape)
        self.trunk.backward(self.pool.backward(dpooled))

    def parameters(self):
        out = self.trunk.parameters() + self.lstm.parameters()
        return out + self.fc1.parameters() + self.fc2.parameters()


def build_camera_model(scale="desk", k=5, rng_seed=0) -> CameraModel:
    return CameraModel(scale, k, rng_seed)


def build_gps_model(scale="desk", k=5, rng_seed=0) -> GpsModel:
    return GpsModel(scale, k, rng_seed)


def build_lidar_model(scale="desk", k=5, rng_seed=0) -> LidarModel:
    return LidarModel(scale, k, rng_seed)


def build_radar_model(scale="desk", k=5, rng_seed=0) -> RadarModel:
    return RadarModel(scale, k, rng_seed)


MODEL_BUILDERS = {
    "camera": build_camera_model,
    "gps": build_gps_model,
    "lidar": build_lidar_model,
    "radar": build_radar_model,
}


@dataclass
class WindowData:
    """Feature access for a split: loader(indices) -> stacked X, plus labels."""

    loader: Callable[[np.ndarray], np.ndarray]
    labels: np.ndarray  # (N, k) binary

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.float64)

    def __len__(self):
        return len(self.labels)


@dataclass
class TrainResult:
    train_loss: list = field(default_factory=list)  # mean loss per epoch
    val_f1: list = field(default_factory=list)  # per-horizon F1 per epoch
    best_epoch: int = -1


def predict(model: ModalityModel, data: WindowData, batch_size: int = 32) -> np.ndarray:
    """Eval-mode probabilities for every window in a split."""
    out = np.empty((len(data), model.k))
    for start in range(0, len(data), batch_size):
        idx = np.arange(start, min(start + batch_size, len(data)))
        out[idx] = model.forward(data.loader(idx), training=False)
    return out


def _mean_val_f1(labels, probs) -> tuple:
    per_horizon = [
        f1_score(labels[:, i], probs[:, i])[2] for i in range(labels.shape[1])
    ]
    return float(np.mean(per_horizon)), per_horizon


def resolve_pos_weight(labels, config: TrainConfig) -> float:
    """Positive-class loss weight from the training labels (or the config)."""
    if config.pos_weight is not None:
        return config.pos_weight
    n_pos = int(labels.sum())
    n_neg = int(labels.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        warnings.warn("single-class training labels; using pos_weight=1.0")
        return 1.0
    return positive_class_weight(n_neg, n_pos, config.class_weight_alpha)


def train_model(model: ModalityModel, train_data: WindowData, val_data: WindowData,
                config: TrainConfig) -> TrainResult:
    """Minimize weighted BCE over all horizons; early-stop on mean val F1.

    The model is left holding the best-epoch parameters and stores its
    per-horizon validation F1 for later fusion weighting.
    """
    if len(train_data) == 0 or len(val_data) == 0:
        raise DataError("train and validation splits must be non-empty")
    pos_weight = resolve_pos_weight(train_data.labels, config)
    optimizer = nn.make_optimizer(
        config.optimizer, model.parameters(), config.lr, config.betas, config.eps
    )
    result = TrainResult()
    best_mean = -1.0
    best_state = None
    best_f1s = None
    bad_epochs = 0
    n = len(train_data)
    for epoch in range(config.epochs):
        order = derive_rng(config.rng_seed, "shuffle", epoch).permutation(n)
        losses = []
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            x = train_data.loader(idx)
            y = train_data.labels[idx]
            rng = derive_rng(config.rng_seed, "dropout", epoch, start)
            probs = model.forward(x, training=True, rng=rng)
            loss, dprobs = nn.weighted_bce(probs, y, pos_weight)
            optimizer.zero_grad()
            model.backward(dprobs)
            optimizer.step()
            losses.append(loss)
        result.train_loss.append(float(np.mean(losses)))

        val_probs = predict(model, val_data, config.batch_size)
        mean_f1, per_horizon = _mean_val_f1(val_data.labels, val_probs)
        result.val_f1.append(per_horizon)
        if mean_f1 > best_mean:
            best_mean = mean_f1
            best_state = {name: arr.copy() for name, arr in model.param_dict().items()}
            best_f1s = per_horizon
            result.best_epoch = epoch
            bad_epochs = 0
        else:
            bad_epochs += 1
            if bad_epochs > config.patience:
                break
    model.load_state(best_state)
    model.validation_f1 = best_f1s
    return result
