"""Differentiable primitives with explicit forward/backward passes.

All math is float64. Layers cache what backward needs during forward and
release it afterwards; parameters accumulate gradients in .grad.
"""

import numpy as np

from .. import _kernels
from ..errors import ArityError, ShapeError


class Parameter:
    __slots__ = ("name", "data", "grad")

    def __init__(self, name: str, data):
        self.name = name
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = np.zeros_like(self.data)

    def zero_grad(self):
        self.grad[...] = 0.0


class Layer:
    """Base layer; subclasses implement forward/backward."""

    def forward(self, x, training: bool = False, rng=None):
        raise NotImplementedError

    def backward(self, grad_out):
        raise NotImplementedError

    def parameters(self):
        return []


def sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


class Conv2d(Layer):
    def __init__(self, name, in_ch, out_ch, kernel=3, stride=1, padding=None,
                 rng=None, input_grad=True):
        if in_ch < 1 or out_ch < 1:
            raise ValueError("channel counts must be positive")
        self.in_ch, self.out_ch = in_ch, out_ch
        self.input_grad = input_grad  # False for a network's first layer
        self.kh, self.kw = (kernel, kernel) if np.isscalar(kernel) else kernel
        self.sh, self.sw = (stride, stride) if np.isscalar(stride) else stride
        if padding is None:
            padding = (self.kh // 2, self.kw // 2)
        self.ph, self.pw = (padding, padding) if np.isscalar(padding) else padding
        rng = rng or np.random.default_rng(0)
        fan_in = in_ch * self.kh * self.kw
        self.weight = Parameter(
            f"{name}.weight",
            rng.normal(0.0, np.sqrt(2.0 / fan_in), (out_ch, in_ch, self.kh, self.kw)),
        )
        self.bias = Parameter(f"{name}.bias", np.zeros(out_ch))
        self._cache = None

    def out_shape(self, h, w):
        oh = (h + 2 * self.ph - self.kh) // self.sh + 1
        ow = (w + 2 * self.pw - self.kw) // self.sw + 1
        return oh, ow

    def forward(self, x, training=False, rng=None):
        n, c, h, w = x.shape
        if c != self.in_ch:
            raise ShapeError(f"conv expects {self.in_ch} channels, got {c}")
        oh, ow = self.out_shape(h, w)
        cols = _kernels.im2col(
            np.ascontiguousarray(x, dtype=np.float64),
            self.kh, self.kw, self.sh, self.sw, self.ph, self.pw,
        )
        wmat = self.weight.data.reshape(self.out_ch, -1)
        out = cols @ wmat.T + self.bias.data
        self._cache = (cols, (n, c, h, w))
        return np.ascontiguousarray(
            out.reshape(n, oh, ow, self.out_ch).transpose(0, 3, 1, 2)
        )

    def backward(self, grad_out):
        cols, (n, c, h, w) = self._cache
        self._cache = None
        g = grad_out.transpose(0, 2, 3, 1).reshape(-1, self.out_ch)
        wmat = self.weight.data.reshape(self.out_ch, -1)
        self.weight.grad += (g.T @ cols).reshape(self.weight.data.shape)
        self.bias.grad += g.sum(axis=0)
        if not self.input_grad:
            return None
        dcols = g @ wmat
        return _kernels.col2im(
            dcols, n, c, h, w, self.kh, self.kw, self.sh, self.sw, self.ph, self.pw
        )

    def parameters(self):
        return [self.weight, self.bias]


class Linear(Layer):
    def __init__(self, name, in_features, out_features, rng=None):
        if in_features < 1 or out_features < 1:
            raise ValueError("feature counts must be positive")
        rng = rng or np.random.default_rng(0)
        self.weight = Parameter(
            f"{name}.weight",
            rng.normal(0.0, np.sqrt(2.0 / in_features), (out_features, in_features)),
        )
        self.bias = Parameter(f"{name}.bias", np.zeros(out_features))
        self._x = None

    def forward(self, x, training=False, rng=None):
        if x.shape[-1] != self.weight.data.shape[1]:
            raise ShapeError(
                f"linear expects {self.weight.data.shape[1]} features, got {x.shape[-1]}"
            )
        self._x = x
        return x @ self.weight.data.T + self.bias.data

    def backward(self, grad_out):
        x = self._x
        self._x = None
        self.weight.grad += grad_out.T @ x
        self.bias.grad += grad_out.sum(axis=0)
        return grad_out @ self.weight.data

    def parameters(self):
        return [self.weight, self.bias]


class ReLU(Layer):
    def __init__(self):
        self._mask = None

    def forward(self, x, training=False, rng=None):
        self._mask = x > 0
        return np.where(self._mask, x, 0.0)

    def backward(self, grad_out):
        mask = self._mask
        self._mask = None
        return np.where(mask, grad_out, 0.0)


class Sigmoid(Layer):
    def __init__(self):
        self._y = None

    def forward(self, x, training=False, rng=None):
        self._y = sigmoid(x)
        return self._y

    def backward(self, grad_out):
        y = self._y
        self._y = None
        return grad_out * y * (1.0 - y)


class Dropout(Layer):
    def __init__(self, rate: float):
        if not (0.0 <= rate < 1.0):
            raise ValueError("dropout rate must be in [0, 1)")
        self.rate = rate
        self._mask = None

    def forward(self, x, training=False, rng=None):
        if not training or self.rate == 0.0:
            self._mask = None
            return x
        if rng is None:
            raise ValueError("dropout in training mode needs an rng")
        self._mask = (rng.random(x.shape) >= self.rate) / (1.0 - self.rate)
        return x * self._mask

    def backward(self, grad_out):
        if self._mask is None:
            return grad_out
        mask = self._mask
        self._mask = None
        return grad_out * mask


class BatchNorm2d(Layer):
    """Batch statistics while training, running averages in eval (momentum 0.1)."""

    def __init__(self, name, channels, momentum=0.1, eps=1e-5):
        self.gamma = Parameter(f"{name}.gamma", np.ones(channels))
        self.beta = Parameter(f"{name}.beta", np.zeros(channels))
        self.running_mean = np.zeros(channels)
        self.running_var = np.ones(channels)
        self.momentum = momentum
        self.eps = eps
        self._cache = None

    def forward(self, x, training=False, rng=None):
        if training:
            mean = x.mean(axis=(0, 2, 3))
            var = x.var(axis=(0, 2, 3))
            self.running_mean = (1 - self.momentum) * self.running_mean + self.momentum * mean
            self.running_var = (1 - self.momentum) * self.running_var + self.momentum * var
        else:
            mean, var = self.running_mean, self.running_var
        inv_std = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mean[:, None, None]) * inv_std[:, None, None]
        if training:
            self._cache = (xhat, inv_std)
        else:
            self._cache = None
        return self.gamma.data[:, None, None] * xhat + self.beta.data[:, None, None]

    def backward(self, grad_out):
        if self._cache is None:
            # eval mode: affine transform with fixed statistics
            inv_std = 1.0 / np.sqrt(self.running_var + self.eps)
            return grad_out * (self.gamma.data * inv_std)[:, None, None]
        xhat, inv_std = self._cache
        self._cache = None
        m = grad_out.shape[0] * grad_out.shape[2] * grad_out.shape[3]
        dgamma = (grad_out * xhat).sum(axis=(0, 2, 3))
        dbeta = grad_out.sum(axis=(0, 2, 3))
        self.gamma.grad += dgamma
        self.beta.grad += dbeta
        g = self.gamma.data[:, None, None] * inv_std[:, None, None]
        return g * (
            grad_out
            - (dbeta / m)[:, None, None]
            - xhat * (dgamma / m)[:, None, None]
        )

    def parameters(self):
        return [self.gamma, self.beta]


class AdaptiveAvgPool2d(Layer):
    """Average pool onto a fixed (oh, ow) grid of near-equal bins."""

    def __init__(self, out_hw=(1, 1)):
        self.oh, self.ow = out_hw
        self._cache = None

    @staticmethod
    def _bins(n, m):
        return [((i * n) // m, ((i + 1) * n + m - 1) // m) for i in range(m)]

    def forward(self, x, training=False, rng=None):
        n, c, h, w = x.shape
        rows = self._bins(h, self.oh)
        cols = self._bins(w, self.ow)
        out = np.empty((n, c, self.oh, self.ow))
        for i, (r0, r1) in enumerate(rows):
            for j, (c0, c1) in enumerate(cols):
                out[:, :, i, j] = x[:, :, r0:r1, c0:c1].mean(axis=(2, 3))
        self._cache = (x.shape, rows, cols)
        return out

    def backward(self, grad_out):
        shape, rows, cols = self._cache
        self._cache = None
        dx = np.zeros(shape)
        for i, (r0, r1) in enumerate(rows):
            for j, (c0, c1) in enumerate(cols):
                area = (r1 - r0) * (c1 - c0)
                dx[:, :, r0:r1, c0:c1] += grad_out[:, :, i : i + 1, j : j + 1] / area
        return dx


class LSTM(Layer):
    """Single-layer LSTM over (B, T, F); returns the full hidden sequence."""

    def __init__(self, name, input_size, hidden_size, rng=None):
        if input_size < 1 or hidden_size < 1:
            raise ValueError("sizes must be positive")
        rng = rng or np.random.default_rng(0)
        self.input_size = input_size
        self.hidden = hidden_size
        bound = 1.0 / np.sqrt(hidden_size)
        self.w_x = Parameter(f"{name}.w_x",
                             rng.uniform(-bound, bound, (4 * hidden_size, input_size)))
        self.w_h = Parameter(f"{name}.w_h",
                             rng.uniform(-bound, bound, (4 * hidden_size, hidden_size)))
        bias = np.zeros(4 * hidden_size)
        bias[hidden_size : 2 * hidden_size] = 1.0  # forget gate bias
        self.b = Parameter(f"{name}.b", bias)
        self._cache = None

    def forward(self, x, training=False, rng=None):
        if x.ndim != 3:
            raise ShapeError(f"LSTM expects (B, T, F), got {x.shape}")
        if x.shape[1] < 1:
            raise ArityError("LSTM needs at least one time step")
        if x.shape[2] != self.input_size:
            raise ShapeError(f"LSTM expects {self.input_size} features, got {x.shape[2]}")
        b, t, _ = x.shape
        hsz = self.hidden
        h = np.zeros((b, hsz))
        c = np.zeros((b, hsz))
        steps = []
        hs = np.empty((b, t, hsz))
        for step in range(t):
            z = x[:, step] @ self.w_x.data.T + h @ self.w_h.data.T + self.b.data
            i = sigmoid(z[:, :hsz])
            f = sigmoid(z[:, hsz : 2 * hsz])
            g = np.tanh(z[:, 2 * hsz : 3 * hsz])
            o = sigmoid(z[:, 3 * hsz :])
            c_new = f * c + i * g
            tanh_c = np.tanh(c_new)
            h_new = o * tanh_c
            steps.append((x[:, step], h, c, i, f, g, o, c_new, tanh_c))
            h, c = h_new, c_new
            hs[:, step] = h
        self._cache = steps
        return hs

    def backward(self, grad_hs):
        steps = self._cache
        self._cache = None
        b, t, hsz = grad_hs.shape
        dx = np.empty((b, t, self.input_size))
        dh_next = np.zeros((b, hsz))
        dc_next = np.zeros((b, hsz))
        for step in range(t - 1, -1, -1):
            x_t, h_prev, c_prev, i, f, g, o, c_new, tanh_c = steps[step]
            dh = grad_hs[:, step] + dh_next
            do = dh * tanh_c
            dc = dh * o * (1.0 - tanh_c ** 2) + dc_next
            di = dc * g
            df = dc * c_prev
            dg = dc * i
            dz = np.concatenate(
                [
                    di * i * (1 - i),
                    df * f * (1 - f),
                    dg * (1 - g ** 2),
                    do * o * (1 - o),
                ],
                axis=1,
            )
            self.w_x.grad += dz.T @ x_t
            self.w_h.grad += dz.T @ h_prev
            self.b.grad += dz.sum(axis=0)
            dx[:, step] = dz @ self.w_x.data
            dh_next = dz @ self.w_h.data
            dc_next = dc * f
        return dx

    def parameters(self):
        return [self.w_x, self.w_h, self.b]


class ResidualBlock(Layer):
    """conv-bn-relu-conv-bn with identity (or projected) skip, then relu."""

    def __init__(self, name, in_ch, out_ch, stride=1, rng=None):
        self.conv1 = Conv2d(f"{name}.conv1", in_ch, out_ch, 3, stride, rng=rng)
        self.bn1 = BatchNorm2d(f"{name}.bn1", out_ch)
        self.relu1 = ReLU()
        self.conv2 = Conv2d(f"{name}.conv2", out_ch, out_ch, 3, 1, rng=rng)
        self.bn2 = BatchNorm2d(f"{name}.bn2", out_ch)
        self.project = None
        if stride != 1 or in_ch != out_ch:
            self.conv_skip = Conv2d(f"{name}.skip", in_ch, out_ch, 1, stride,
                                    padding=0, rng=rng)
            self.bn_skip = BatchNorm2d(f"{name}.skipbn", out_ch)
            self.project = True
        self._relu_mask = None

    def forward(self, x, training=False, rng=None):
        out = self.conv1.forward(x, training, rng)
        out = self.bn1.forward(out, training, rng)
        out = self.relu1.forward(out, training, rng)
        out = self.conv2.forward(out, training, rng)
        out = self.bn2.forward(out, training, rng)
        if self.project:
            skip = self.bn_skip.forward(
                self.conv_skip.forward(x, training, rng), training, rng
            )
        else:
            skip = x
        out = out + skip
        self._relu_mask = out > 0
        return np.where(self._relu_mask, out, 0.0)

    def backward(self, grad_out):
        grad = np.where(self._relu_mask, grad_out, 0.0)
        self._relu_mask = None
        if self.project:
            dskip = self.conv_skip.backward(self.bn_skip.backward(grad))
        else:
            dskip = grad
        d = self.bn2.backward(grad)
        d = self.conv2.backward(d)
        d = self.relu1.backward(d)
        d = self.bn1.backward(d)
        d = self.conv1.backward(d)
        return d + dskip

    def parameters(self):
        out = self.conv1.parameters() + self.bn1.parameters()
        out += self.conv2.parameters() + self.bn2.parameters()
        if self.project:
            out += self.conv_skip.parameters() + self.bn_skip.parameters()
        return out


class Sequential(Layer):
    def __init__(self, layers):
        self.layers = list(layers)

    def forward(self, x, training=False, rng=None):
        for layer in self.layers:
            x = layer.forward(x, training, rng)
        return x

    def backward(self, grad_out):
        for layer in reversed(self.layers):
            grad_out = layer.backward(grad_out)
        return grad_out

    def parameters(self):
        out = []
        for layer in self.layers:
            out += layer.parameters()
        return out


def build_layer(kind: str, rng=None, **hyper) -> Layer:
    """Factory covering the supported layer inventory."""
    kinds = {
        "conv2d": lambda: Conv2d(rng=rng, **hyper),
        "residual_block": lambda: ResidualBlock(rng=rng, **hyper),
        "linear": lambda: Linear(rng=rng, **hyper),
        "lstm": lambda: LSTM(rng=rng, **hyper),
        "relu": lambda: ReLU(**hyper),
        "sigmoid": lambda: Sigmoid(**hyper),
        "dropout": lambda: Dropout(**hyper),
        "adaptive_avg_pool": lambda: AdaptiveAvgPool2d(**hyper),
        "batch_norm": lambda: BatchNorm2d(**hyper),
    }
    if kind not in kinds:
        raise ValueError(f"unknown layer kind {kind!r}")
    return kinds[kind]()
