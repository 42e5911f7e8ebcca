"""Fully connected decoder trained with SGD, implemented on bare numpy.

Architecture: per-feature input normalization, K hidden layers of
``n_voxels`` units with ReLU, and a linear output layer of ``n_voxels``
units.  Training minimizes the mean squared block reconstruction error
(1/n) * sum_i ||f(y_i) - x_i||^2 with momentum SGD, global gradient-norm
clipping, a step learning-rate schedule, and L2 decay on weight matrices
only.  The returned weights are the best-validation checkpoint.
"""

import struct
from dataclasses import dataclass

import numpy as np

from .errors import FormatError, TrainingDivergedError
from .geometry import unflatten_patch

MLP_MAGIC = b"SCSN"
MLP_VERSION = 1
_HEADER = struct.Struct("<4sHHII32s")

STD_FLOOR = 1e-6


@dataclass(eq=False)
class MlpParams:
    """Weight matrices and bias vectors, first hidden layer to output.

    weights[k] has shape (fan_out, fan_in); biases[k] has shape (fan_out,).
    """

    weights: list
    biases: list

    @property
    def hidden_layers(self):
        return len(self.weights) - 1

    @property
    def n_voxels(self):
        return self.weights[-1].shape[0]

    @property
    def n_measurements(self):
        return self.weights[0].shape[1]

    @property
    def dtype(self):
        return self.weights[0].dtype

    def copy(self):
        return MlpParams([w.copy() for w in self.weights],
                         [b.copy() for b in self.biases])


@dataclass(frozen=True, eq=False)
class NormStats:
    """Per-measurement normalization: z = (y - mean) / std."""

    mean: np.ndarray  # (n_measurements,) float64
    std: np.ndarray   # (n_measurements,) float64, floored at STD_FLOOR


def compute_norm_stats(measurements):
    """Mean and (population) standard deviation per measurement row."""
    y = np.asarray(measurements, dtype=np.float64)
    mean = y.mean(axis=1)
    std = np.maximum(y.std(axis=1), STD_FLOOR)
    return NormStats(mean, std)


def normalize(stats, measurements):
    y = np.asarray(measurements, dtype=np.float64)
    if y.ndim == 1:
        return (y - stats.mean) / stats.std
    return (y - stats.mean[:, None]) / stats.std[:, None]


def init_mlp(hidden_layers, n_voxels, n_measurements, seed, dtype=np.float32):
    """Uniform fan-in initialization W ~ U(-1/sqrt(s), 1/sqrt(s)), zero biases.

    Values are drawn in float64 and cast, so the draw is identical across
    dtypes for a given seed.
    """
    if hidden_layers < 1:
        raise ValueError("the network needs at least one hidden layer")
    rng = np.random.default_rng(seed)
    fan_ins = [n_measurements] + [n_voxels] * hidden_layers
    weights, biases = [], []
    for fan_in in fan_ins:
        bound = 1.0 / np.sqrt(fan_in)
        w = rng.uniform(-bound, bound, size=(n_voxels, fan_in))
        weights.append(w.astype(dtype))
        biases.append(np.zeros(n_voxels, dtype=dtype))
    return MlpParams(weights, biases)


def _forward_cached(params, z0):
    """Forward pass on a pre-normalized (n_measurements, n) batch.

    Returns (output, hidden_inputs, pre_activations): hidden_inputs[k] is
    the input that weights[k] multiplied, pre_activations[k] the affine
    result before ReLU (hidden layers only).
    """
    h = z0
    hidden_inputs = [h]
    pre_activations = []
    for w, b in zip(params.weights[:-1], params.biases[:-1]):
        a = w @ h + b[:, None]
        pre_activations.append(a)
        h = np.maximum(a, 0)
        hidden_inputs.append(h)
    out = params.weights[-1] @ h + params.biases[-1][:, None]
    return out, hidden_inputs, pre_activations


def forward(params, stats, measurements):
    """Decode measurements: (n_measurements,) or (n_measurements, n) in,
    matching block estimate out, computed in the params dtype."""
    y = np.asarray(measurements)
    squeeze = y.ndim == 1
    z0 = normalize(stats, y if not squeeze else y[:, None]).astype(params.dtype)
    out, _, _ = _forward_cached(params, z0)
    return out[:, 0] if squeeze else out


def _loss_and_grad_normalized(params, z0, targets, weight_decay=0.0):
    n = z0.shape[1]
    out, hidden_inputs, pre_activations = _forward_cached(params, z0)
    residual = out - targets
    loss = float(np.vdot(residual, residual)) / n
    if not np.isfinite(loss):
        raise TrainingDivergedError(f"training loss became non-finite ({loss})")

    n_layers = len(params.weights)
    grad_w = [None] * n_layers
    grad_b = [None] * n_layers
    delta = residual * (2.0 / n)
    grad_w[-1] = delta @ hidden_inputs[-1].T
    grad_b[-1] = delta.sum(axis=1)
    back = params.weights[-1].T @ delta
    for k in range(n_layers - 2, -1, -1):
        delta = back * (pre_activations[k] > 0)
        grad_w[k] = delta @ hidden_inputs[k].T
        grad_b[k] = delta.sum(axis=1)
        if k:
            back = params.weights[k].T @ delta
    if weight_decay:
        for k in range(n_layers):
            grad_w[k] += (2.0 * weight_decay) * params.weights[k]
    return loss, grad_w, grad_b


def loss_and_grad(params, stats, measurements, targets, weight_decay=0.0):
    """Mean squared error over the batch and its parameter gradients.

    measurements : (n_measurements, n) raw (un-normalized) inputs
    targets      : (n_voxels, n) blocks in [0, 1]

    The reported loss is the data term only; ``weight_decay`` adds
    2 * wd * W to each weight gradient (biases are not decayed).  A
    non-finite loss raises TrainingDivergedError.
    """
    y = np.asarray(measurements)
    x = np.asarray(targets, dtype=params.dtype)
    if y.ndim != 2 or x.ndim != 2 or y.shape[1] != x.shape[1]:
        raise ValueError("measurements and targets must be matching sample columns")
    if y.shape[1] == 0:
        raise ValueError("empty batch")
    z0 = normalize(stats, y).astype(params.dtype)
    return _loss_and_grad_normalized(params, z0, x, weight_decay)


@dataclass(eq=False)
class OptimizerState:
    """Momentum-SGD state with global-norm clipping and a step schedule.

    The learning rate for step i (0-based) is ``learning_rate`` divided by
    ``lr_drop_factor`` once for every entry of ``lr_drop_iterations`` that
    is <= i.
    """

    learning_rate: float
    momentum: float = 0.9
    clip_threshold: float = 10.0
    lr_drop_factor: float = 10.0
    lr_drop_iterations: tuple = ()
    velocity_w: list = None
    velocity_b: list = None
    iteration: int = 0

    def current_lr(self):
        lr = self.learning_rate
        for drop in self.lr_drop_iterations:
            if self.iteration >= drop:
                lr /= self.lr_drop_factor
        return lr


def init_optimizer(params, learning_rate, momentum=0.9, clip_threshold=10.0,
                   lr_drop_factor=10.0, lr_drop_iterations=()):
    return OptimizerState(
        learning_rate=float(learning_rate), momentum=float(momentum),
        clip_threshold=None if clip_threshold is None else float(clip_threshold),
        lr_drop_factor=float(lr_drop_factor),
        lr_drop_iterations=tuple(int(d) for d in lr_drop_iterations),
        velocity_w=[np.zeros_like(w) for w in params.weights],
        velocity_b=[np.zeros_like(b) for b in params.biases])


def global_grad_norm(grad_w, grad_b):
    total = 0.0
    for g in list(grad_w) + list(grad_b):
        total += float(np.vdot(g, g))
    return float(np.sqrt(total))


def sgd_step(params, state, grad_w, grad_b):
    """One in-place update: v = m*v - lr*g_clipped; theta += v.

    When the global gradient norm exceeds the clip threshold all gradients
    are scaled by threshold/norm (direction preserved); below it they pass
    through untouched.  Returns the clipped global norm's source value so
    callers can log it.
    """
    norm = global_grad_norm(grad_w, grad_b)
    scale = 1.0
    if state.clip_threshold is not None and norm > state.clip_threshold:
        scale = state.clip_threshold / norm
    lr = state.current_lr()
    step_scale = lr * scale
    for w, v, g in zip(params.weights, state.velocity_w, grad_w):
        v *= state.momentum
        v -= step_scale * g
        w += v
    for b, v, g in zip(params.biases, state.velocity_b, grad_b):
        v *= state.momentum
        v -= step_scale * g
        b += v
    state.iteration += 1
    return norm


@dataclass
class TrainConfig:
    hidden_layers: int
    iterations: int
    batch_size: int = 200
    learning_rate: float = 0.01
    momentum: float = 0.9
    clip_threshold: float = 10.0
    weight_decay: float = 1e-5
    lr_drop_factor: float = 10.0
    lr_drop_iterations: tuple = None  # None -> one drop at 75% of the budget
    val_fraction: float = 0.01
    seed: int = 0
    dtype: object = np.float32
    log_every: int = 100
    target_train_mse: float = None  # stop once the batch loss falls below

    def resolved_drops(self):
        if self.lr_drop_iterations is None:
            return (int(round(0.75 * self.iterations)),)
        return tuple(int(d) for d in self.lr_drop_iterations)


@dataclass(eq=False)
class TrainResult:
    params: MlpParams
    stats: NormStats
    log: list                 # dict rows: iteration, lr, train_mse, val_mse
    loss_history: list        # per-iteration batch loss
    best_val_mse: float
    best_iteration: int
    iterations_run: int
    config: TrainConfig


def train(blocks, measurements, config):
    """Fit an MLP decoder to (blocks, measurements) sample columns.

    blocks       : (n_voxels, N) uint8 (0..255 scale) or float in [0, 1]
    measurements : (n_measurements, N) float

    A ``val_fraction`` holdout (at least one sample when N >= 2) is scored
    every ``log_every`` iterations and at the end; the returned params are
    the checkpoint with the lowest validation MSE.  Raises
    TrainingDivergedError (carrying that checkpoint) if the loss leaves
    the finite range.
    """
    x_all = np.asarray(blocks)
    y_all = np.asarray(measurements)
    if x_all.ndim != 2 or y_all.ndim != 2 or x_all.shape[1] != y_all.shape[1]:
        raise ValueError("blocks and measurements must be matching sample columns")
    n_total = x_all.shape[1]
    if n_total == 0:
        raise ValueError("empty training set")
    if not np.isfinite(y_all).all():
        raise ValueError("measurements contain non-finite values")
    if x_all.dtype != np.uint8 and not np.isfinite(x_all).all():
        raise ValueError("blocks contain non-finite values")
    if config.iterations < 1:
        raise ValueError("iterations must be positive")

    seed_split, seed_init, seed_batch = np.random.SeedSequence(config.seed).spawn(3)

    n_val = 0
    if config.val_fraction > 0 and n_total >= 2:
        n_val = int(np.clip(round(config.val_fraction * n_total), 1, n_total - 1))
    perm = np.random.default_rng(seed_split).permutation(n_total)
    val_idx, train_idx = perm[:n_val], perm[n_val:]
    n_train = train_idx.size

    stats = compute_norm_stats(y_all[:, train_idx])
    z_all = normalize(stats, y_all).astype(config.dtype)

    def target_batch(idx):
        xb = x_all[:, idx]
        if xb.dtype == np.uint8:
            return (xb / 255.0).astype(config.dtype)
        return xb.astype(config.dtype)

    params = init_mlp(config.hidden_layers, x_all.shape[0], y_all.shape[0],
                      seed_init, config.dtype)
    state = init_optimizer(params, config.learning_rate, config.momentum,
                           config.clip_threshold, config.lr_drop_factor,
                           config.resolved_drops())

    def val_mse():
        if n_val == 0:
            return None
        total = 0.0
        for start in range(0, n_val, 4096):
            idx = val_idx[start:start + 4096]
            out, _, _ = _forward_cached(params, z_all[:, idx])
            r = out - target_batch(idx)
            total += float(np.vdot(r, r))
        return total / n_val

    batch_rng = np.random.default_rng(seed_batch)
    batch_size = min(config.batch_size, n_train)
    order = batch_rng.permutation(n_train)
    cursor = 0

    loss_history = []
    log = []
    best = params.copy()
    best_val = np.inf
    best_iter = 0
    it = 0

    def checkpoint_and_log(loss):
        nonlocal best, best_val, best_iter
        score = val_mse()
        track = loss if score is None else score
        if track < best_val:
            best_val = track
            best_iter = it + 1
            best = params.copy()
        log.append({"iteration": it + 1, "lr": state.current_lr(),
                    "train_mse": loss, "val_mse": score})

    try:
        for it in range(config.iterations):
            if cursor + batch_size > n_train:
                order = batch_rng.permutation(n_train)
                cursor = 0
            idx = train_idx[order[cursor:cursor + batch_size]]
            cursor += batch_size
            loss, grad_w, grad_b = _loss_and_grad_normalized(
                params, z_all[:, idx], target_batch(idx), config.weight_decay)
            sgd_step(params, state, grad_w, grad_b)
            loss_history.append(loss)
            stop = (config.target_train_mse is not None
                    and loss < config.target_train_mse)
            if stop or (it + 1) % config.log_every == 0 or it + 1 == config.iterations:
                checkpoint_and_log(loss)
            if stop:
                break
    except TrainingDivergedError as exc:
        partial = TrainResult(best, stats, log, loss_history,
                              float(best_val), best_iter, it, config)
        raise TrainingDivergedError(
            f"{exc} at iteration {it + 1}", checkpoint=partial) from None

    result_params = best if np.isfinite(best_val) else params.copy()
    return TrainResult(result_params, stats, log, loss_history,
                       float(best_val), best_iter, len(loss_history), config)


@dataclass(frozen=True, eq=False)
class MlpModel:
    """Trained MLP decoder plus its input normalization."""

    params: MlpParams
    stats: NormStats
    mask_sha256: bytes = None

    @property
    def n_voxels(self):
        return self.params.n_voxels

    @property
    def n_measurements(self):
        return self.params.n_measurements

    @property
    def hidden_layers(self):
        return self.params.hidden_layers

    def decode_measurements(self, measurements, clamp=True):
        """Decode (n_measurements, n) columns to (n_voxels, n) float64."""
        out = forward(self.params, self.stats, measurements).astype(np.float64)
        if clamp:
            np.clip(out, 0.0, 1.0, out=out)
        return out

    def decode_patch(self, measurement, geometry, offset=(0, 0, 0), clamp=True):
        y = np.asarray(measurement, dtype=np.float64)
        if y.shape != (self.n_measurements,):
            raise ValueError(f"expected a ({self.n_measurements},) measurement, got {y.shape}")
        x = self.decode_measurements(y[:, None], clamp=clamp)[:, 0]
        return unflatten_patch(x, geometry.temporal_len, geometry.patch_h,
                               geometry.patch_w, offset)


def save_mlp_model(path, model):
    params, stats = model.params, model.stats
    digest = model.mask_sha256 if model.mask_sha256 is not None else bytes(32)
    if len(digest) != 32:
        raise ValueError("mask digest must be 32 raw bytes")
    header = _HEADER.pack(MLP_MAGIC, MLP_VERSION, params.hidden_layers,
                          params.n_voxels, params.n_measurements, digest)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(stats.mean.astype("<f4").tobytes())
        fh.write(stats.std.astype("<f4").tobytes())
        for w, b in zip(params.weights, params.biases):
            fh.write(np.ascontiguousarray(w, dtype="<f4").tobytes())
            fh.write(np.ascontiguousarray(b, dtype="<f4").tobytes())


def load_mlp_model(path):
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < _HEADER.size:
        raise FormatError("MLP model file is truncated")
    magic, version, hidden, n_voxels, n_meas, digest = _HEADER.unpack_from(data)
    if magic != MLP_MAGIC:
        raise FormatError(f"bad MLP model magic {magic!r}")
    if version != MLP_VERSION:
        raise FormatError(f"unsupported MLP model version {version}")
    offset = _HEADER.size

    def take(count):
        nonlocal offset
        nbytes = count * 4
        if offset + nbytes > len(data):
            raise FormatError("MLP model file is truncated")
        arr = np.frombuffer(data, dtype="<f4", count=count, offset=offset)
        offset += nbytes
        return arr

    mean = take(n_meas).astype(np.float64)
    std = take(n_meas).astype(np.float64)
    fan_ins = [n_meas] + [n_voxels] * hidden
    weights, biases = [], []
    for fan_in in fan_ins:
        weights.append(take(n_voxels * fan_in).reshape(n_voxels, fan_in).copy())
        biases.append(take(n_voxels).copy())
    if offset != len(data):
        raise FormatError(f"MLP model file has {len(data) - offset} trailing bytes")
    params = MlpParams(weights, biases)
    mask_digest = None if digest == bytes(32) else digest
    return MlpModel(params, NormStats(mean, std), mask_digest)
