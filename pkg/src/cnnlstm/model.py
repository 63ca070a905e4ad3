"""The full network: three conv/pool/LSTM stages feeding a linear unit.

Layer order is fixed:

    Input -> Conv1D -> MaxPool1D -> LSTM(seq) -> Dropout
          -> Conv1D -> MaxPool1D -> LSTM(seq) -> Dropout
          -> Conv1D -> MaxPool1D -> LSTM(last) -> Dense(1)

Conv outputs pass through tanh (the dense head stays linear, the regression
target is a single scaled price). Each conv shortens the sequence by W-1 and
each pool divides it by the pool window; the config validates that the
sequence survives all three stages.
"""

from dataclasses import dataclass, field

import numpy as np

from . import layers
from .errors import (
    CheckpointFormatError,
    CheckpointShapeError,
    CheckpointVersionError,
    ConfigError,
    ShapeError,
)
from .layers import GATES, Conv1dParams, DenseParams, LstmParams
from .optim import mse
from .pipeline import PreprocessState, preprocess_lines, read_preprocess_block
from .textio import LineReader, array_lines, parse_kv

CKPT_MAGIC = "CNNLSTM-CKPT"
CKPT_VERSION = "v1"


@dataclass
class ModelConfig:
    features: int
    lookback: int = 64
    conv_filters: tuple = (32, 64, 64)
    kernel_width: int = 3
    pool_window: int = 2
    lstm_units: tuple = (64, 64, 64)
    dropout_rate: float = 0.2
    seed: int = 0

    def validate(self):
        if len(self.conv_filters) != 3 or len(self.lstm_units) != 3:
            raise ConfigError("conv_filters and lstm_units must each list 3 stages")
        extents = (self.features, self.lookback, self.kernel_width, self.pool_window,
                   *self.conv_filters, *self.lstm_units)
        if any(int(e) != e or e < 1 for e in extents):
            raise ConfigError(f"all extents must be positive integers: {extents}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError(f"dropout_rate must be in [0,1), got {self.dropout_rate}")
        self.stage_lengths()
        return self

    def stage_lengths(self):
        """Sequence length after (conv, pool) of each stage; errors if it dies."""
        t = self.lookback
        out = []
        for stage in range(3):
            after_conv = t - self.kernel_width + 1
            if after_conv < 1:
                raise ConfigError(
                    f"stage {stage + 1}: conv reduces sequence length {t} below 1 "
                    f"(kernel width {self.kernel_width})"
                )
            after_pool = after_conv // self.pool_window
            if after_pool < 1:
                raise ConfigError(
                    f"stage {stage + 1}: pool window {self.pool_window} reduces "
                    f"length {after_conv} below 1"
                )
            out.append((after_conv, after_pool))
            t = after_pool
        return out


def parameter_shapes(config: ModelConfig):
    """Name -> shape for every parameter, in serialization order."""
    shapes = {}
    f_in = config.features
    for stage in range(3):
        k = config.conv_filters[stage]
        h = config.lstm_units[stage]
        shapes[f"conv{stage + 1}.kernels"] = (k, config.kernel_width, f_in)
        shapes[f"conv{stage + 1}.bias"] = (k,)
        for g in GATES:
            shapes[f"lstm{stage + 1}.w_{g}"] = (h, k)
            shapes[f"lstm{stage + 1}.u_{g}"] = (h, h)
            shapes[f"lstm{stage + 1}.b_{g}"] = (h,)
        f_in = h
    shapes["dense.weight"] = (1, config.lstm_units[2])
    shapes["dense.bias"] = (1,)
    return shapes


@dataclass
class Model:
    config: ModelConfig
    params: dict = field(default_factory=dict)  # name -> float64 array

    def conv(self, stage: int) -> Conv1dParams:
        return Conv1dParams(
            kernels=self.params[f"conv{stage}.kernels"],
            bias=self.params[f"conv{stage}.bias"],
        )

    def lstm(self, stage: int) -> LstmParams:
        return LstmParams(
            w={g: self.params[f"lstm{stage}.w_{g}"] for g in GATES},
            u={g: self.params[f"lstm{stage}.u_{g}"] for g in GATES},
            b={g: self.params[f"lstm{stage}.b_{g}"] for g in GATES},
        )

    def dense(self) -> DenseParams:
        return DenseParams(weight=self.params["dense.weight"], bias=self.params["dense.bias"])


def _glorot(rng, shape, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def build(config: ModelConfig) -> Model:
    """Initialize all parameters deterministically from the config seed.

    Glorot-uniform weights; biases zero except the LSTM forget gate at 1.0.
    """
    config.validate()
    rng = np.random.default_rng(config.seed)
    params = {}
    for name, shape in parameter_shapes(config).items():
        leaf = name.rsplit(".", 1)[-1]
        if leaf == "kernels":
            k, w, f = shape
            params[name] = _glorot(rng, shape, w * f, w * k)
        elif leaf == "weight":
            out, f_in = shape
            params[name] = _glorot(rng, shape, f_in, out)
        elif leaf.startswith("w_") or leaf.startswith("u_"):
            h, f_in = shape
            params[name] = _glorot(rng, shape, f_in, h)
        elif leaf == "b_f":
            params[name] = np.ones(shape)
        else:
            params[name] = np.zeros(shape)
    return Model(config=config, params=params)


@dataclass
class ForwardCaches:
    """Per-layer caches from one training-mode forward; consumed once."""

    stages: list
    consumed: bool = False


def forward(model: Model, batch: np.ndarray, training: bool, rng=None):
    """Predict one scalar per sample; returns ``(predictions, caches)``.

    Caches are only retained in training mode (inference returns None).
    """
    x = np.asarray(batch, dtype=np.float64)
    cfg = model.config
    if x.ndim != 3 or x.shape[1] != cfg.lookback or x.shape[2] != cfg.features:
        raise ShapeError(
            f"batch shape {x.shape} does not match config "
            f"[B, {cfg.lookback}, {cfg.features}]"
        )
    lengths = cfg.stage_lengths()
    stages = []
    for stage in (1, 2, 3):
        last = stage == 3
        y, conv_cache = layers.conv1d_forward(x, model.conv(stage))
        a = np.tanh(y)
        p, pool_cache = layers.maxpool1d_forward(a, cfg.pool_window)
        expect_conv, expect_pool = lengths[stage - 1]
        if y.shape[1] != expect_conv or p.shape[1] != expect_pool:
            raise ShapeError(
                f"stage {stage} length drifted: conv gave {y.shape[1]} "
                f"(expected {expect_conv}), pool gave {p.shape[1]} "
                f"(expected {expect_pool})"
            )
        h, lstm_cache = layers.lstm_forward(p, model.lstm(stage), return_sequence=not last)
        if last:
            x = h
            stages.append((conv_cache, a, pool_cache, lstm_cache, None))
        else:
            x, drop_cache = layers.dropout(h, cfg.dropout_rate, training, rng)
            stages.append((conv_cache, a, pool_cache, lstm_cache, drop_cache))
    out, dense_cache = layers.dense_forward(x, model.dense())
    preds = out[:, 0]
    if not training:
        return preds, None
    return preds, ForwardCaches(stages=stages + [dense_cache])


def backward(model: Model, caches: ForwardCaches, grad_predictions: np.ndarray) -> dict:
    """Mean over the batch of per-sample parameter gradients.

    ``grad_predictions[i]`` is the upstream derivative for sample i's scalar
    prediction; layer backwards accumulate batch sums, divided by B here.
    """
    if caches is None or caches.consumed:
        raise ShapeError("backward needs unconsumed caches from a training-mode forward")
    caches.consumed = True
    g = np.asarray(grad_predictions, dtype=np.float64)
    if g.ndim != 1:
        raise ShapeError(f"grad_predictions must be rank-1, got shape {g.shape}")
    b = g.shape[0]
    grads = {}
    dense_cache = caches.stages[3]
    dx, grad_w, grad_b = layers.dense_backward(g[:, None], dense_cache)
    grads["dense.weight"] = grad_w
    grads["dense.bias"] = grad_b
    for stage in (3, 2, 1):
        conv_cache, a, pool_cache, lstm_cache, drop_cache = caches.stages[stage - 1]
        if drop_cache is not None:
            dx = layers.dropout_backward(dx, drop_cache)
        dx, lstm_grads = layers.lstm_backward(dx, lstm_cache)
        for gate in GATES:
            grads[f"lstm{stage}.w_{gate}"] = lstm_grads.w[gate]
            grads[f"lstm{stage}.u_{gate}"] = lstm_grads.u[gate]
            grads[f"lstm{stage}.b_{gate}"] = lstm_grads.b[gate]
        dx = layers.maxpool1d_backward(dx, pool_cache)
        dx = dx * (1.0 - a * a)  # tanh after conv
        dx, grad_k, grad_cb = layers.conv1d_backward(dx, conv_cache)
        grads[f"conv{stage}.kernels"] = grad_k
        grads[f"conv{stage}.bias"] = grad_cb
    return {k: v / b for k, v in grads.items()}


def loss_gradients(model: Model, batch, targets, rng_seed: int):
    """MSE loss and its exact parameter gradients for one training batch.

    The upstream fed to ``backward`` is each sample's squared-error
    derivative 2*(pred - target); backward's batch mean then yields exactly
    d(MSE)/d(param).
    """
    preds, caches = forward(
        model, batch, training=True, rng=np.random.default_rng(rng_seed)
    )
    loss = mse(preds, targets)
    grads = backward(model, caches, 2.0 * (preds - np.asarray(targets)))
    return loss, grads


def _numeric_gradients(model: Model, batch, targets, eps: float, rng_seed: int) -> dict:
    """Central finite differences of the MSE loss for every parameter."""

    def loss_at():
        preds, _ = forward(
            model, batch, training=True, rng=np.random.default_rng(rng_seed)
        )
        return mse(preds, targets)

    out = {}
    for name, param in model.params.items():
        numeric = np.zeros_like(param)
        flat = param.reshape(-1)  # view: perturbs the live parameter, then restores
        for i in range(flat.size):
            saved = flat[i]
            flat[i] = saved + eps
            up = loss_at()
            flat[i] = saved - eps
            down = loss_at()
            flat[i] = saved
            numeric.reshape(-1)[i] = (up - down) / (2.0 * eps)
        out[name] = numeric
    return out


def _compare_gradients(analytic: dict, numeric: dict):
    report = {}
    for name, a in analytic.items():
        n = numeric[name]
        scale = max(np.abs(a).max(), np.abs(n).max(), 1e-12)
        report[name] = float(np.abs(a - n).max() / scale)
    return max(report.values()), report


def grad_check(model: Model, batch, targets=None, eps: float = 1e-6, rng_seed: int = 0):
    """Worst relative deviation of analytic vs central finite-difference grads.

    Every forward uses a fresh rng with the same seed, so dropout masks are
    identical across the two-sided evaluations. The deviation for each
    parameter tensor is max|a-n| / max(max|a|, max|n|, 1e-12); returns
    ``(worst, per_parameter)``.
    """
    batch = np.asarray(batch, dtype=np.float64)
    if targets is None:
        targets = np.random.default_rng(rng_seed + 1).random(batch.shape[0])
    _, analytic = loss_gradients(model, batch, targets, rng_seed)
    numeric = _numeric_gradients(model, batch, targets, eps, rng_seed)
    return _compare_gradients(analytic, numeric)


# --- checkpoint serialization ---


def save(model: Model, preprocess: PreprocessState, path):
    """Write config echo, preprocessing state, and all parameters as text."""
    cfg = model.config
    lines = [f"{CKPT_MAGIC} {CKPT_VERSION}"]
    lines.append(f"features={cfg.features}")
    lines.append(f"lookback={cfg.lookback}")
    lines.append(f"conv_filters={','.join(str(v) for v in cfg.conv_filters)}")
    lines.append(f"kernel_width={cfg.kernel_width}")
    lines.append(f"pool_window={cfg.pool_window}")
    lines.append(f"lstm_units={','.join(str(v) for v in cfg.lstm_units)}")
    lines.append(f"dropout_rate={cfg.dropout_rate:.17g}")
    lines.append(f"seed={cfg.seed}")
    lines.extend(preprocess_lines(preprocess))
    for name, shape in parameter_shapes(cfg).items():
        lines.append(f"param {name} {','.join(str(d) for d in shape)}")
        lines.extend(array_lines(model.params[name]))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def load(path):
    """Read a checkpoint; returns ``(Model, PreprocessState)``.

    Version, structural, and shape problems raise distinct errors.
    """
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise CheckpointFormatError(f"cannot read checkpoint {path}: {exc}") from None
    reader = LineReader(text, str(path))
    head = reader.next().split()
    if not head or head[0] != CKPT_MAGIC:
        raise CheckpointFormatError(f"{path}: not a checkpoint file")
    if head[1:] != [CKPT_VERSION]:
        raise CheckpointVersionError(
            f"{path}: unsupported checkpoint version {' '.join(head[1:])!r}"
        )

    def kv(key):
        got, value = parse_kv(reader.next(), reader)
        if got != key:
            raise reader.error(f"expected key {key!r}, got {got!r}")
        return value

    config = ModelConfig(
        features=int(kv("features")),
        lookback=int(kv("lookback")),
        conv_filters=tuple(int(v) for v in kv("conv_filters").split(",")),
        kernel_width=int(kv("kernel_width")),
        pool_window=int(kv("pool_window")),
        lstm_units=tuple(int(v) for v in kv("lstm_units").split(",")),
        dropout_rate=float(kv("dropout_rate")),
        seed=int(kv("seed")),
    ).validate()
    preprocess = read_preprocess_block(reader)
    params = {}
    for name, shape in parameter_shapes(config).items():
        header = reader.next().split()
        if len(header) != 3 or header[0] != "param":
            raise reader.error(f"expected 'param {name} ...', got {' '.join(header)!r}")
        if header[1] != name:
            raise reader.error(f"expected parameter {name!r}, got {header[1]!r}")
        stored = tuple(int(d) for d in header[2].split(","))
        if stored != shape:
            raise CheckpointShapeError(
                f"{path}: parameter {name} has shape {stored}, config implies {shape}"
            )
        count = 1
        for d in shape:
            count *= d
        params[name] = reader.read_floats(count).reshape(shape)
    return Model(config=config, params=params), preprocess


# --- seeded verification instances (used by the gradcheck command) ---


def verification_config(features: int = 3, lookback: int = 16, seed: int = 0) -> ModelConfig:
    return ModelConfig(
        features=features,
        lookback=lookback,
        conv_filters=(4, 4, 4),
        kernel_width=2,
        pool_window=2,
        lstm_units=(4, 4, 4),
        dropout_rate=0.1,
        seed=seed,
    )


def run_gradient_checks(seed: int = 0, eps: float = 1e-6, corrupt: bool = False):
    """Per-layer and full-stack finite-difference checks on small instances.

    Returns an ordered list of ``(name, worst_relative_error)``. ``corrupt``
    deliberately perturbs one analytic gradient (negative-control hook).
    """
    rng = np.random.default_rng(seed)
    results = []

    def rel(analytic, numeric):
        scale = max(np.abs(analytic).max(), np.abs(numeric).max(), 1e-12)
        return float(np.abs(analytic - numeric).max() / scale)

    def fd(loss, arr):
        out = np.zeros_like(arr)
        flat = arr.reshape(-1)
        for i in range(flat.size):
            saved = flat[i]
            flat[i] = saved + eps
            up = loss()
            flat[i] = saved - eps
            down = loss()
            flat[i] = saved
            out.reshape(-1)[i] = (up - down) / (2.0 * eps)
        return out

    # conv1d: weight the outputs with a fixed random sheet so the loss is scalar
    x = rng.standard_normal((8, 3))
    p = Conv1dParams(kernels=rng.standard_normal((2, 3, 3)), bias=rng.standard_normal(2))
    w_out = rng.standard_normal((6, 2))
    y, cache = layers.conv1d_forward(x, p)
    gx, gk, gb = layers.conv1d_backward(w_out, cache)
    worst = rel(gx, fd(lambda: float((layers.conv1d_forward(x, p)[0] * w_out).sum()), x))
    worst = max(worst, rel(gk, fd(lambda: float((layers.conv1d_forward(x, p)[0] * w_out).sum()), p.kernels)))
    worst = max(worst, rel(gb, fd(lambda: float((layers.conv1d_forward(x, p)[0] * w_out).sum()), p.bias)))
    results.append(("conv1d", worst))

    # maxpool1d: continuous random input, ties have probability zero
    x = rng.standard_normal((9, 2))
    w_out = rng.standard_normal((4, 2))
    _, cache = layers.maxpool1d_forward(x, 2)
    gx = layers.maxpool1d_backward(w_out, cache)
    results.append(
        ("maxpool1d", rel(gx, fd(lambda: float((layers.maxpool1d_forward(x, 2)[0] * w_out).sum()), x)))
    )

    # lstm: T=8, H=4, all params and input
    x = rng.standard_normal((8, 3))
    p = LstmParams(
        w={g: 0.5 * rng.standard_normal((4, 3)) for g in GATES},
        u={g: 0.5 * rng.standard_normal((4, 4)) for g in GATES},
        b={g: 0.1 * rng.standard_normal(4) for g in GATES},
    )
    w_out = rng.standard_normal((8, 4))

    def lstm_loss():
        return float((layers.lstm_forward(x, p, return_sequence=True)[0] * w_out).sum())

    _, cache = layers.lstm_forward(x, p, return_sequence=True)
    gx, gp = layers.lstm_backward(w_out, cache)
    worst = rel(gx, fd(lstm_loss, x))
    for gate in GATES:
        worst = max(worst, rel(gp.w[gate], fd(lstm_loss, p.w[gate])))
        worst = max(worst, rel(gp.u[gate], fd(lstm_loss, p.u[gate])))
        worst = max(worst, rel(gp.b[gate], fd(lstm_loss, p.b[gate])))
    results.append(("lstm", worst))

    # dense
    x = rng.standard_normal(5)
    p = DenseParams(weight=rng.standard_normal((2, 5)), bias=rng.standard_normal(2))
    w_out = rng.standard_normal(2)

    def dense_loss():
        return float((layers.dense_forward(x, p)[0] * w_out).sum())

    _, cache = layers.dense_forward(x, p)
    gx, gw, gb = layers.dense_backward(w_out, cache)
    worst = rel(gx, fd(dense_loss, x))
    worst = max(worst, rel(gw, fd(dense_loss, p.weight)))
    worst = max(worst, rel(gb, fd(dense_loss, p.bias)))
    results.append(("dense", worst))

    # dropout: identical seed reproduces the mask inside the loss closure
    x = rng.standard_normal((6, 3))
    w_out = rng.standard_normal((6, 3))

    def drop_loss():
        y, _ = layers.dropout(x, 0.4, training=True, rng=np.random.default_rng(seed + 7))
        return float((y * w_out).sum())

    _, cache = layers.dropout(x, 0.4, training=True, rng=np.random.default_rng(seed + 7))
    gx = layers.dropout_backward(w_out, cache)
    results.append(("dropout", rel(gx, fd(drop_loss, x))))

    # full stack; the corrupt hook falsifies one analytic gradient so the
    # comparison must fail (negative control for the verification command)
    config = verification_config(seed=seed)
    net = build(config)
    batch = rng.standard_normal((2, config.lookback, config.features))
    targets = rng.random(2)
    _, analytic = loss_gradients(net, batch, targets, seed)
    if corrupt:
        analytic["conv2.kernels"] = analytic["conv2.kernels"] + 0.05
    numeric = _numeric_gradients(net, batch, targets, eps, seed)
    worst_stack, _ = _compare_gradients(analytic, numeric)
    results.append(("full_stack", worst_stack))
    return results
