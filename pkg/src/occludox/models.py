"""Small CNN builders and inference.

The default desk-scale network mirrors a three-conv-plus-dense traffic-sign
classifier at 32x32: conv 16/32/64 with 3x3 kernels, stride 1, padding 1,
2x2 max-pool after each conv, then a single dense layer to 16 classes.
Weights initialize uniform in +-sqrt(6/fan_in) from the deterministic stream;
biases start at zero.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autograd as ag
from .errors import ContractError, ShapeError
from .rng import SplitMix64

# Evaluation batches are internally split into chunks of this many images so
# memory stays bounded; the chunk size is fixed for run-to-run determinism.
EVAL_CHUNK = 256


@dataclass(frozen=True)
class ConvLayerSpec:
    out_channels: int
    kernel: int = 3
    stride: int = 1
    padding: int = 1
    pool: bool = True


@dataclass(frozen=True)
class ConvNetSpec:
    input_shape: tuple  # (C, H, W)
    conv: tuple = ()
    dense: tuple = ()  # hidden widths; the final classifier layer is implied
    classes: int = 16

    def __post_init__(self):
        if self.classes < 2:
            raise ShapeError(f"need at least 2 classes, got {self.classes}")
        if self.flatten_size() <= 0:
            raise ShapeError("derived flatten size is not positive")

    def feature_shape(self) -> tuple:
        c, h, w = self.input_shape
        for layer in self.conv:
            h = ag.conv_output_size(h, layer.kernel, layer.stride, layer.padding)
            w = ag.conv_output_size(w, layer.kernel, layer.stride, layer.padding)
            if h <= 0 or w <= 0:
                raise ShapeError(f"conv stack collapses spatial dims to {h}x{w}")
            c = layer.out_channels
            if layer.pool:
                if h % 2 or w % 2:
                    raise ShapeError(f"pool needs even dims, got {h}x{w}")
                h, w = h // 2, w // 2
        return c, h, w

    def flatten_size(self) -> int:
        c, h, w = self.feature_shape()
        return c * h * w

    def layer_names(self) -> list[str]:
        names = [f"conv{i}" for i in range(len(self.conv))]
        names += [f"fc{i}" for i in range(len(self.dense) + 1)]
        return names


def desk_spec(classes: int = 16, side: int = 32) -> ConvNetSpec:
    """Default desk-scale CNN over (3, side, side) inputs."""
    return ConvNetSpec(
        input_shape=(3, side, side),
        conv=(ConvLayerSpec(16), ConvLayerSpec(32), ConvLayerSpec(64)),
        dense=(),
        classes=classes,
    )


@dataclass
class ModelParams:
    spec: ConvNetSpec
    tensors: dict = field(default_factory=dict)  # insertion-ordered name -> float64 array

    def copy(self) -> "ModelParams":
        return ModelParams(self.spec, {k: v.copy() for k, v in self.tensors.items()})

    def validate(self):
        expect = expected_shapes(self.spec)
        if list(self.tensors) != list(expect):
            raise ShapeError(f"parameter names {list(self.tensors)} != expected {list(expect)}")
        for name, shape in expect.items():
            if self.tensors[name].shape != shape:
                raise ShapeError(f"{name}: shape {self.tensors[name].shape} != expected {shape}")


def expected_shapes(spec: ConvNetSpec) -> dict:
    shapes = {}
    in_ch = spec.input_shape[0]
    for i, layer in enumerate(spec.conv):
        shapes[f"conv{i}.weight"] = (layer.out_channels, in_ch, layer.kernel, layer.kernel)
        shapes[f"conv{i}.bias"] = (layer.out_channels,)
        in_ch = layer.out_channels
    width = spec.flatten_size()
    dims = list(spec.dense) + [spec.classes]
    for i, out in enumerate(dims):
        shapes[f"fc{i}.weight"] = (out, width)
        shapes[f"fc{i}.bias"] = (out,)
        width = out
    return shapes


def parameter_count(spec: ConvNetSpec) -> int:
    return sum(int(np.prod(s)) for s in expected_shapes(spec).values())


def build_cnn(spec: ConvNetSpec, seed: int) -> ModelParams:
    """Deterministic fan-in-scaled uniform init; same seed gives identical bits."""
    rng = SplitMix64(seed).derive("model-init")
    tensors = {}
    for name, shape in expected_shapes(spec).items():
        if name.endswith(".bias"):
            tensors[name] = np.zeros(shape, dtype=np.float64)
            continue
        fan_in = int(np.prod(shape[1:]))
        bound = np.sqrt(6.0 / fan_in)
        u = rng.derive(name).uniform(shape)
        tensors[name] = (2.0 * u - 1.0) * bound
    params = ModelParams(spec, tensors)
    params.validate()
    return params


def _check_batch(spec: ConvNetSpec, batch: np.ndarray) -> np.ndarray:
    x = np.asarray(batch, dtype=np.float64)
    if x.ndim == 3:
        x = x[None]
    if x.ndim != 4 or x.shape[1:] != tuple(spec.input_shape):
        raise ShapeError(f"batch shape {np.shape(batch)} incompatible with input {spec.input_shape}")
    return x


def _forward_fast(params: ModelParams, x: np.ndarray) -> np.ndarray:
    spec = params.spec
    t = params.tensors
    h = x
    for i, layer in enumerate(spec.conv):
        h, _ = ag.conv2d_forward(h, t[f"conv{i}.weight"], t[f"conv{i}.bias"],
                                 layer.stride, layer.padding, want_ctx=False)
        np.maximum(h, 0.0, out=h)
        if layer.pool:
            h, _ = ag.maxpool2_forward(h, want_ctx=False)
    h = h.reshape(h.shape[0], -1)
    n_fc = len(spec.dense) + 1
    for i in range(n_fc):
        h = ag.dense_forward(h, t[f"fc{i}.weight"], t[f"fc{i}.bias"])
        if i < n_fc - 1:
            np.maximum(h, 0.0, out=h)
    return h


def predict_logits(params: ModelParams, batch: np.ndarray) -> np.ndarray:
    """Logits (B, classes) for a (B,C,H,W) or (C,H,W) batch; pure function."""
    x = _check_batch(params.spec, batch)
    if x.shape[0] <= EVAL_CHUNK:
        return _forward_fast(params, x)
    outs = [_forward_fast(params, x[i:i + EVAL_CHUNK]) for i in range(0, x.shape[0], EVAL_CHUNK)]
    return np.concatenate(outs, axis=0)


def forward_tape(params: ModelParams, batch: np.ndarray, *,
                 want_param_grads: bool, want_input_grad: bool):
    """Record the network on a tape; returns (tape, input var, logits var, param vars)."""
    x = _check_batch(params.spec, batch)
    tape = ag.Tape()
    xv = tape.leaf(x, needs_grad=want_input_grad)
    pv = {name: tape.leaf(t, needs_grad=want_param_grads)
          for name, t in params.tensors.items()}
    h = xv
    for i, layer in enumerate(params.spec.conv):
        h = tape.conv2d(h, pv[f"conv{i}.weight"], pv[f"conv{i}.bias"],
                        layer.stride, layer.padding)
        h = tape.relu(h)
        if layer.pool:
            h = tape.maxpool2(h)
    h = tape.flatten(h)
    n_fc = len(params.spec.dense) + 1
    for i in range(n_fc):
        h = tape.dense(h, pv[f"fc{i}.weight"], pv[f"fc{i}.bias"])
        if i < n_fc - 1:
            h = tape.relu(h)
    return tape, xv, h, pv


def batch_losses(params: ModelParams, batch: np.ndarray, labels) -> np.ndarray:
    """Per-example cross-entropy, no gradients, chunked like predict_logits."""
    logits = predict_logits(params, batch)
    return ag.cross_entropy_forward(logits, labels)


def loss_and_param_grads(params: ModelParams, batch: np.ndarray, labels):
    """(mean loss, {name: gradient}) over a minibatch."""
    tape, _, logits, pv = forward_tape(params, batch,
                                       want_param_grads=True, want_input_grad=False)
    ce = tape.cross_entropy(logits, labels, reduction="mean")
    grads = tape.backward(ce)
    return float(ce.value), {name: grads[v.id] for name, v in pv.items()}


def losses_and_input_grad(params: ModelParams, batch: np.ndarray, labels):
    """(per-example losses, d(sum loss)/d(input)) for attack steps."""
    tape, xv, logits, _ = forward_tape(params, batch,
                                       want_param_grads=False, want_input_grad=True)
    ce = tape.cross_entropy(logits, labels, reduction="sum")
    grads = tape.backward(ce)
    return tape.per_example_losses(ce), grads[xv.id]


def accuracy(params: ModelParams, dataset) -> float:
    """Fraction of argmax-correct predictions; ties go to the lowest class index.

    ``dataset`` is anything with ``.images`` and ``.labels``, or an
    (images, labels) pair.
    """
    if hasattr(dataset, "images"):
        images, labels = dataset.images, dataset.labels
    else:
        images, labels = dataset
    images = np.asarray(images)
    labels = np.asarray(labels, dtype=np.int64)
    if images.shape[0] == 0:
        raise ContractError("accuracy over an empty dataset is undefined")
    preds = predict_logits(params, images).argmax(axis=1)
    return float(np.mean(preds == labels))
