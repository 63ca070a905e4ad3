"""Forward and backward passes for the five layer types in the network.

Conventions shared by every op here:

* A single sample is rank-2 ``[T, features]`` (rank-1 ``[features]`` for the
  dense layer). Each op also accepts the same input with a leading batch
  axis; outputs and input-gradients then carry the batch axis too, while
  parameter gradients are *summed* over the batch (the model averages).
* ``forward`` returns ``(output, cache)``; the cache holds exactly the
  intermediates the matching ``backward`` needs and is consumed by it.
* Backward passes are exact analytic gradients of the forward map.

LSTM cell, gate order i, f, o, g:

    i,f,o = sigmoid(W x_t + U h_{t-1} + b)      g = tanh(W x_t + U h_{t-1} + b)
    c_t = f * c_{t-1} + i * g                   h_t = o * tanh(c_t)

with h_0 = c_0 = 0.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ShapeError, SequenceTooShortError
from .tensor import sigmoid

GATES = ("i", "f", "o", "g")


@dataclass
class Conv1dParams:
    kernels: np.ndarray  # [K_out, W, F_in]
    bias: np.ndarray  # [K_out]

    def __post_init__(self):
        if self.kernels.ndim != 3:
            raise ShapeError(f"conv kernels must be [K,W,F], got {self.kernels.shape}")
        if self.bias.shape != (self.kernels.shape[0],):
            raise ShapeError(
                f"conv bias shape {self.bias.shape} does not match {self.kernels.shape[0]} kernels"
            )


@dataclass
class LstmParams:
    """Per-gate input weights [H,F], recurrent weights [H,H] and biases [H]."""

    w: dict  # gate -> [H, F_in]
    u: dict  # gate -> [H, H]
    b: dict  # gate -> [H]

    def __post_init__(self):
        h, f = self.w["i"].shape
        for g in GATES:
            if self.w[g].shape != (h, f) or self.u[g].shape != (h, h) or self.b[g].shape != (h,):
                raise ShapeError(f"LSTM gate '{g}' weights disagree on hidden/input size")

    @property
    def hidden_size(self) -> int:
        return self.w["i"].shape[0]

    @property
    def input_size(self) -> int:
        return self.w["i"].shape[1]


@dataclass
class DenseParams:
    weight: np.ndarray  # [out, in]
    bias: np.ndarray  # [out]

    def __post_init__(self):
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[0],):
            raise ShapeError(
                f"dense weight {self.weight.shape} and bias {self.bias.shape} disagree"
            )


@dataclass
class LayerCache:
    kind: str
    data: dict = field(default_factory=dict)
    batched: bool = True  # False when forward saw a single unbatched sample


def _as_batch3(x: np.ndarray, what: str):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 2:
        return x[None, :, :], False
    if x.ndim == 3:
        return x, True
    raise ShapeError(f"{what} expects [T,F] or [B,T,F], got shape {x.shape}")


def _windows(x3: np.ndarray, width: int) -> np.ndarray:
    # view [B, T-W+1, F, W]; zero-copy
    return np.lib.stride_tricks.sliding_window_view(x3, width, axis=1)


# --- Conv1D (valid padding, stride 1) ---


def conv1d_forward(x: np.ndarray, p: Conv1dParams):
    """y[t,k] = b[k] + sum_{w,f} kernels[k,w,f] * x[t+w,f]; output length T-W+1."""
    x3, batched = _as_batch3(x, "conv1d_forward")
    k_out, width, f_in = p.kernels.shape
    if x3.shape[2] != f_in:
        raise ShapeError(
            f"conv1d input has {x3.shape[2]} features but kernels expect {f_in}"
        )
    t = x3.shape[1]
    if t < width:
        raise SequenceTooShortError(
            f"conv1d needs at least {width} time steps, got {t}"
        )
    win = _windows(x3, width)  # [B, T', F, W]
    y = np.tensordot(win, p.kernels, axes=([3, 2], [1, 2])) + p.bias  # [B, T', K]
    cache = LayerCache("conv1d", {"x": x3, "params": p}, batched)
    return (y if batched else y[0]), cache


def conv1d_backward(grad_y: np.ndarray, cache: LayerCache):
    """Gradients of conv1d_forward: returns (grad_x, grad_kernels, grad_bias)."""
    if cache.kind != "conv1d":
        raise ShapeError(f"conv1d_backward got a {cache.kind!r} cache")
    x3 = cache.data["x"]
    p: Conv1dParams = cache.data["params"]
    k_out, width, f_in = p.kernels.shape
    t_out = x3.shape[1] - width + 1
    g = np.asarray(grad_y, dtype=np.float64)
    if not cache.batched:
        g = g[None]
    if g.shape != (x3.shape[0], t_out, k_out):
        raise ShapeError(
            f"conv1d_backward: gradient shape {grad_y.shape} does not match "
            f"cached forward output {(x3.shape[0], t_out, k_out)}"
        )
    win = _windows(x3, width)  # [B, T', F, W]
    grad_bias = g.sum(axis=(0, 1))
    # [K, F, W] -> [K, W, F]
    grad_kernels = np.tensordot(g, win, axes=([0, 1], [0, 1])).transpose(0, 2, 1)
    grad_x = np.zeros_like(x3)
    for w in range(width):
        grad_x[:, w : w + t_out, :] += g @ p.kernels[:, w, :]
    if not cache.batched:
        grad_x = grad_x[0]
    return grad_x, np.ascontiguousarray(grad_kernels), grad_bias


# --- MaxPooling1D (non-overlapping windows, remainder dropped) ---


def maxpool1d_forward(x: np.ndarray, window: int):
    """Max over consecutive windows; output length floor(T/window), ties -> earliest."""
    if window < 1:
        raise ConfigError(f"pool window must be >= 1, got {window}")
    x3, batched = _as_batch3(x, "maxpool1d_forward")
    b, t, k = x3.shape
    if t < window:
        raise SequenceTooShortError(
            f"maxpool1d needs at least {window} time steps, got {t}"
        )
    t_out = t // window
    blocks = x3[:, : t_out * window, :].reshape(b, t_out, window, k)
    idx = blocks.argmax(axis=2)  # first occurrence wins ties
    y = np.take_along_axis(blocks, idx[:, :, None, :], axis=2)[:, :, 0, :]
    cache = LayerCache(
        "maxpool1d", {"idx": idx, "in_shape": x3.shape, "window": window}, batched
    )
    return (y if batched else y[0]), cache


def maxpool1d_backward(grad_y: np.ndarray, cache: LayerCache):
    """Route each output gradient to its argmax input position."""
    if cache.kind != "maxpool1d":
        raise ShapeError(f"maxpool1d_backward got a {cache.kind!r} cache")
    idx = cache.data["idx"]
    b, t, k = cache.data["in_shape"]
    window = cache.data["window"]
    t_out = t // window
    g = np.asarray(grad_y, dtype=np.float64)
    if not cache.batched:
        g = g[None]
    if g.shape != (b, t_out, k):
        raise ShapeError(
            f"maxpool1d_backward: gradient shape {grad_y.shape} does not match "
            f"cached forward output {(b, t_out, k)}"
        )
    # fresh buffer first: a reshape of a slice of the final array may copy
    blocks = np.zeros((b, t_out, window, k))
    np.put_along_axis(blocks, idx[:, :, None, :], g[:, :, None, :], axis=2)
    grad_x = np.zeros((b, t, k))
    grad_x[:, : t_out * window, :] = blocks.reshape(b, t_out * window, k)
    return grad_x if cache.batched else grad_x[0]


# --- LSTM ---


def lstm_forward(x: np.ndarray, p: LstmParams, return_sequence: bool):
    """Run the gated recurrence over T steps from h_0 = c_0 = 0.

    Returns the full hidden sequence ``[T,H]`` when ``return_sequence`` else
    the final state ``[H]`` (batched variants carry the leading axis).
    """
    x3, batched = _as_batch3(x, "lstm_forward")
    b, t, f = x3.shape
    if f != p.input_size:
        raise ShapeError(
            f"lstm input has {f} features but params expect {p.input_size}"
        )
    h_size = p.hidden_size
    gates = {g: np.empty((b, t, h_size)) for g in GATES}
    cs = np.empty((b, t, h_size))
    tcs = np.empty((b, t, h_size))
    hs = np.empty((b, t, h_size))
    h = np.zeros((b, h_size))
    c = np.zeros((b, h_size))
    for step in range(t):
        x_t = x3[:, step, :]
        pre = {g: x_t @ p.w[g].T + h @ p.u[g].T + p.b[g] for g in GATES}
        i_t = sigmoid(pre["i"])
        f_t = sigmoid(pre["f"])
        o_t = sigmoid(pre["o"])
        g_t = np.tanh(pre["g"])
        c = f_t * c + i_t * g_t
        tc = np.tanh(c)
        h = o_t * tc
        gates["i"][:, step] = i_t
        gates["f"][:, step] = f_t
        gates["o"][:, step] = o_t
        gates["g"][:, step] = g_t
        cs[:, step] = c
        tcs[:, step] = tc
        hs[:, step] = h
    cache = LayerCache(
        "lstm",
        {
            "x": x3,
            "params": p,
            "gates": gates,
            "c": cs,
            "tanh_c": tcs,
            "h": hs,
            "return_sequence": return_sequence,
        },
        batched,
    )
    if return_sequence:
        out = hs
    else:
        out = hs[:, -1, :]
    return (out if batched else out[0]), cache


def lstm_backward(grad_out: np.ndarray, cache: LayerCache):
    """Backpropagation through time over all steps.

    Returns ``(grad_x, grad_params)`` where grad_params mirrors LstmParams.
    """
    if cache.kind != "lstm":
        raise ShapeError(f"lstm_backward got a {cache.kind!r} cache")
    x3 = cache.data["x"]
    p: LstmParams = cache.data["params"]
    gates = cache.data["gates"]
    cs = cache.data["c"]
    tcs = cache.data["tanh_c"]
    hs = cache.data["h"]
    return_sequence = cache.data["return_sequence"]
    b, t, _ = x3.shape
    h_size = p.hidden_size

    g_out = np.asarray(grad_out, dtype=np.float64)
    if not cache.batched:
        g_out = g_out[None]
    expected = (b, t, h_size) if return_sequence else (b, h_size)
    if g_out.shape != expected:
        raise ShapeError(
            f"lstm_backward: gradient shape {grad_out.shape} does not match "
            f"cached forward output {expected}"
        )

    dw = {g: np.zeros_like(p.w[g]) for g in GATES}
    du = {g: np.zeros_like(p.u[g]) for g in GATES}
    db = {g: np.zeros_like(p.b[g]) for g in GATES}
    grad_x = np.empty_like(x3)
    dh_next = np.zeros((b, h_size))
    dc_next = np.zeros((b, h_size))
    for step in reversed(range(t)):
        dh = dh_next.copy()
        if return_sequence:
            dh += g_out[:, step, :]
        elif step == t - 1:
            dh += g_out
        i_t = gates["i"][:, step]
        f_t = gates["f"][:, step]
        o_t = gates["o"][:, step]
        g_t = gates["g"][:, step]
        tc = tcs[:, step]
        c_prev = cs[:, step - 1] if step > 0 else np.zeros((b, h_size))
        h_prev = hs[:, step - 1] if step > 0 else np.zeros((b, h_size))

        do = dh * tc
        dc = dc_next + dh * o_t * (1.0 - tc * tc)
        di = dc * g_t
        df = dc * c_prev
        dg = dc * i_t
        dc_next = dc * f_t

        dpre = {
            "i": di * i_t * (1.0 - i_t),
            "f": df * f_t * (1.0 - f_t),
            "o": do * o_t * (1.0 - o_t),
            "g": dg * (1.0 - g_t * g_t),
        }
        x_t = x3[:, step, :]
        dx = np.zeros_like(x_t)
        dh_next = np.zeros((b, h_size))
        for g in GATES:
            dw[g] += dpre[g].T @ x_t
            du[g] += dpre[g].T @ h_prev
            db[g] += dpre[g].sum(axis=0)
            dx += dpre[g] @ p.w[g]
            dh_next += dpre[g] @ p.u[g]
        grad_x[:, step, :] = dx
    if not cache.batched:
        grad_x = grad_x[0]
    return grad_x, LstmParams(w=dw, u=du, b=db)


# --- Dropout (inverted: survivors scaled at train time) ---


def dropout(x: np.ndarray, rate: float, training: bool, rng=None):
    """Zero each element with probability ``rate`` and rescale survivors.

    Inference mode is the identity. ``rng`` is required only when a mask is
    actually drawn (training with rate > 0).
    """
    if not 0.0 <= rate < 1.0:
        raise ConfigError(f"dropout rate must be in [0,1), got {rate}")
    x = np.asarray(x, dtype=np.float64)
    if not training or rate == 0.0:
        cache = LayerCache("dropout", {"mask": None, "rate": rate, "shape": x.shape})
        return x.copy(), cache
    if rng is None:
        raise ConfigError("dropout in training mode needs an rng")
    mask = rng.random(x.shape) >= rate
    y = x * mask / (1.0 - rate)
    cache = LayerCache("dropout", {"mask": mask, "rate": rate, "shape": x.shape})
    return y, cache


def dropout_backward(grad_y: np.ndarray, cache: LayerCache):
    if cache.kind != "dropout":
        raise ShapeError(f"dropout_backward got a {cache.kind!r} cache")
    g = np.asarray(grad_y, dtype=np.float64)
    if g.shape != cache.data["shape"]:
        raise ShapeError(
            f"dropout_backward: gradient shape {g.shape} does not match "
            f"cached input shape {cache.data['shape']}"
        )
    mask = cache.data["mask"]
    if mask is None:
        return g.copy()
    return g * mask / (1.0 - cache.data["rate"])


# --- Dense (linear, no activation) ---


def dense_forward(x: np.ndarray, p: DenseParams):
    """y = W x + b for a single sample [in] or a batch [B, in]."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x2, batched = x[None, :], False
    elif x.ndim == 2:
        x2, batched = x, True
    else:
        raise ShapeError(f"dense_forward expects [in] or [B,in], got {x.shape}")
    if x2.shape[1] != p.weight.shape[1]:
        raise ShapeError(
            f"dense input has {x2.shape[1]} features but weight expects {p.weight.shape[1]}"
        )
    y = x2 @ p.weight.T + p.bias
    cache = LayerCache("dense", {"x": x2, "params": p}, batched)
    return (y if batched else y[0]), cache


def dense_backward(grad_y: np.ndarray, cache: LayerCache):
    if cache.kind != "dense":
        raise ShapeError(f"dense_backward got a {cache.kind!r} cache")
    x2 = cache.data["x"]
    p: DenseParams = cache.data["params"]
    g = np.asarray(grad_y, dtype=np.float64)
    if not cache.batched:
        g = g[None]
    if g.shape != (x2.shape[0], p.weight.shape[0]):
        raise ShapeError(
            f"dense_backward: gradient shape {grad_y.shape} does not match "
            f"cached forward output {(x2.shape[0], p.weight.shape[0])}"
        )
    grad_w = g.T @ x2
    grad_b = g.sum(axis=0)
    grad_x = g @ p.weight
    if not cache.batched:
        grad_x = grad_x[0]
    return grad_x, grad_w, grad_b
