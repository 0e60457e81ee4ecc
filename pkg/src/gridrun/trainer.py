"""Built-in numeric core: synthetic regression data, input transforms,
funnel/brick MLPs with exact backprop, Adam, and the epoch loop.

Everything is numpy float64 and deterministic in the seeds handed in, so a
run can be reproduced bit-for-bit and resumed from a checkpoint without any
drift.  Model width is expressed as a multiplier of the input dimension;
a funnel tapers linearly from width*d_in down to the output dimension,
a brick keeps every hidden layer at width*d_in.
"""

from __future__ import annotations

import base64
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import GridrunError
from .indicators import LossCurve
from .util import atomic_write


class TrainerError(GridrunError):
    pass


class InvalidParam(TrainerError):
    pass


class UnknownStyle(TrainerError):
    pass


class InvalidShape(TrainerError):
    pass


class ShapeMismatch(TrainerError):
    pass


class DivergedError(TrainerError):
    pass


class CheckpointError(TrainerError):
    pass


# ---------------------------------------------------------------------------
# Dataset


@dataclass
class Dataset:
    X: np.ndarray  # (N, d_in)
    Y: np.ndarray  # (N, d_out)
    n_train: int
    batch_size: int
    stats: dict = field(default_factory=dict)
    info: dict = field(default_factory=dict)

    @property
    def train_X(self) -> np.ndarray:
        return self.X[: self.n_train]

    @property
    def train_Y(self) -> np.ndarray:
        return self.Y[: self.n_train]

    @property
    def test_X(self) -> np.ndarray:
        return self.X[self.n_train :]

    @property
    def test_Y(self) -> np.ndarray:
        return self.Y[self.n_train :]


def target_function(X: np.ndarray) -> np.ndarray:
    """Synthetic regression target: feature-mean of sin(pi * x)."""
    return np.mean(np.sin(np.pi * X), axis=1, keepdims=True)


def _train_stats(train_X: np.ndarray) -> dict:
    return {
        "min": train_X.min(axis=0),
        "max": train_X.max(axis=0),
        "mean": train_X.mean(axis=0),
        "std": train_X.std(axis=0),
    }


def gen_dataset(params: dict, seed: int) -> Dataset:
    """Generate the synthetic regression dataset.

    params: batch_size, data_size, train_prop, d_in, noise_sigma (all
    optional except none; defaults 64 / 10000 / 0.9 / 8 / 0.1).
    """
    batch_size = int(params.get("batch_size", 64))
    data_size = int(params.get("data_size", 10000))
    train_prop = float(params.get("train_prop", 0.9))
    d_in = int(params.get("d_in", 8))
    noise_sigma = params.get("noise_sigma", 0.1)

    if data_size < 2:
        raise InvalidParam(f"data_size must be >= 2, got {data_size}")
    if not 0.0 < train_prop < 1.0:
        raise InvalidParam(f"train_prop must be in (0, 1), got {train_prop}")
    if d_in < 1:
        raise InvalidParam(f"d_in must be >= 1, got {d_in}")
    if batch_size < 1:
        raise InvalidParam(f"batch_size must be >= 1, got {batch_size}")
    if not (isinstance(noise_sigma, (int, float)) and math.isfinite(noise_sigma)) or noise_sigma < 0:
        raise InvalidParam(f"noise_sigma must be a finite value >= 0, got {noise_sigma!r}")

    rng = np.random.default_rng(seed)
    X = rng.uniform(-1.0, 1.0, size=(data_size, d_in))
    Y = target_function(X) + rng.normal(0.0, float(noise_sigma), size=(data_size, 1))
    n_train = int(math.floor(train_prop * data_size))
    if n_train < 1 or n_train >= data_size:
        raise InvalidParam(
            f"split leaves an empty side: {n_train} train of {data_size}"
        )
    ds = Dataset(X=X, Y=Y, n_train=n_train, batch_size=batch_size)
    ds.stats = _train_stats(ds.train_X)
    ds.info = {
        "input_shape": d_in,
        "output_shape": 1,
        "data_size": data_size,
        "batch_size": batch_size,
        "train_prop": train_prop,
        "noise_sigma": float(noise_sigma),
        "data_hash": dataset_hash(X, Y),
    }
    return ds


def dataset_hash(X: np.ndarray, Y: np.ndarray) -> str:
    import hashlib

    h = hashlib.sha256()
    h.update(X.astype("<f8").tobytes())
    h.update(Y.astype("<f8").tobytes())
    return h.hexdigest()[:16]


TRANSFORM_STYLES = ("normalisation", "standardisation")


def transform(ds: Dataset, style: str) -> Dataset:
    """Rescale features using train-split statistics.

    normalisation: per-feature min-max to [0, 1]; standardisation:
    per-feature (x - mean) / std.  Constant features map to 0 in both.
    """
    if style not in TRANSFORM_STYLES:
        raise UnknownStyle(f"style must be one of {TRANSFORM_STYLES}, got {style!r}")
    stats = _train_stats(ds.train_X)
    if style == "normalisation":
        span = stats["max"] - stats["min"]
        safe = np.where(span == 0.0, 1.0, span)
        newX = (ds.X - stats["min"]) / safe
        newX[:, span == 0.0] = 0.0
    else:
        std = stats["std"]
        safe = np.where(std == 0.0, 1.0, std)
        newX = (ds.X - stats["mean"]) / safe
        newX[:, std == 0.0] = 0.0
    out = Dataset(
        X=newX,
        Y=ds.Y,
        n_train=ds.n_train,
        batch_size=ds.batch_size,
        info=dict(ds.info),
    )
    out.stats = _train_stats(out.train_X)
    out.info["style"] = style
    return out


# ---------------------------------------------------------------------------
# Model


@dataclass
class MlpModel:
    # layers[i] = [W (fan_in, fan_out), b (fan_out,)]
    layers: list[list[np.ndarray]]
    kind: str = "brick"
    length: int = 1
    width: int = 1

    @property
    def d_in(self) -> int:
        return self.layers[0][0].shape[0]

    @property
    def d_out(self) -> int:
        return self.layers[-1][0].shape[1]


MLP_KINDS = ("funnel", "brick")


def hidden_widths(kind: str, length: int, width: int, d_in: int, d_out: int) -> list[int]:
    """Hidden layer sizes for a funnel or brick shape.

    brick: `length` layers of width*d_in.  funnel: layer i interpolates
    linearly from width*d_in at i=1 toward d_out at the (virtual) layer
    length+1, so a 1-layer funnel equals a 1-layer brick.
    """
    if kind not in MLP_KINDS:
        raise InvalidShape(f"kind must be one of {MLP_KINDS}, got {kind!r}")
    if length < 1 or width < 1 or d_in < 1 or d_out < 1:
        raise InvalidShape(
            f"invalid shape: length={length} width={width} d_in={d_in} d_out={d_out}"
        )
    start = width * d_in
    if kind == "brick":
        return [start] * length
    return [
        max(1, round(start + (d_out - start) * (i - 1) / length))
        for i in range(1, length + 1)
    ]


def build_mlp(
    kind: str, length: int, width: int, d_in: int, d_out: int, seed: int
) -> MlpModel:
    """He-uniform weights (limit sqrt(6/fan_in)), zero biases."""
    widths = hidden_widths(kind, length, width, d_in, d_out)
    rng = np.random.default_rng(seed)
    dims = [d_in] + widths + [d_out]
    layers = []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        limit = math.sqrt(6.0 / fan_in)
        W = rng.uniform(-limit, limit, size=(fan_in, fan_out))
        b = np.zeros(fan_out)
        layers.append([W, b])
    return MlpModel(layers=layers, kind=kind, length=length, width=width)


def count_params(model: MlpModel) -> int:
    return sum(W.size + b.size for W, b in model.layers)


def forward(model: MlpModel, X: np.ndarray) -> np.ndarray:
    """Affine+ReLU chain with an identity output layer."""
    if X.ndim != 2 or X.shape[1] != model.d_in:
        raise ShapeMismatch(
            f"input has shape {X.shape}, model expects (*, {model.d_in})"
        )
    a = X
    last = len(model.layers) - 1
    for i, (W, b) in enumerate(model.layers):
        z = a @ W + b
        a = z if i == last else np.maximum(z, 0.0)
    return a


def mse(pred: np.ndarray, target: np.ndarray) -> float:
    return float(np.mean((pred - target) ** 2))


def grad(model: MlpModel, X: np.ndarray, Y: np.ndarray) -> list[list[np.ndarray]]:
    """Exact reverse-mode gradients of the batch MSE w.r.t. every parameter."""
    if X.shape[0] == 0:
        raise ShapeMismatch("empty batch")
    # forward pass keeping pre-activations
    activations = [X]
    zs = []
    a = X
    last = len(model.layers) - 1
    for i, (W, b) in enumerate(model.layers):
        z = a @ W + b
        zs.append(z)
        a = z if i == last else np.maximum(z, 0.0)
        activations.append(a)

    n_elems = Y.shape[0] * Y.shape[1]
    delta = 2.0 * (activations[-1] - Y) / n_elems
    grads: list[list[np.ndarray]] = [None] * len(model.layers)  # type: ignore[list-item]
    for i in range(last, -1, -1):
        if i != last:
            delta = delta * (zs[i] > 0.0)
        grads[i] = [activations[i].T @ delta, delta.sum(axis=0)]
        if i > 0:
            delta = delta @ model.layers[i][0].T
    return grads


# ---------------------------------------------------------------------------
# Adam


@dataclass
class AdamState:
    m: list[list[np.ndarray]]
    v: list[list[np.ndarray]]
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_model(
        cls, model: MlpModel, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8
    ) -> "AdamState":
        zeros = lambda: [
            [np.zeros_like(W), np.zeros_like(b)] for W, b in model.layers
        ]
        return cls(m=zeros(), v=zeros(), t=0, beta1=beta1, beta2=beta2, eps=eps)


def adam_step(
    state: AdamState, model: MlpModel, grads: list[list[np.ndarray]], lr: float
) -> None:
    """One bias-corrected Adam update, in place."""
    state.t += 1
    correction1 = 1.0 - state.beta1**state.t
    correction2 = 1.0 - state.beta2**state.t
    for (params, g_pair, m_pair, v_pair) in zip(
        model.layers, grads, state.m, state.v
    ):
        for j in range(2):
            g = g_pair[j]
            m_pair[j] *= state.beta1
            m_pair[j] += (1.0 - state.beta1) * g
            v_pair[j] *= state.beta2
            v_pair[j] += (1.0 - state.beta2) * g * g
            m_hat = m_pair[j] / correction1
            v_hat = v_pair[j] / correction2
            params[j] -= lr * m_hat / (np.sqrt(v_hat) + state.eps)


# ---------------------------------------------------------------------------
# Training loop


def train_epochs(
    model: MlpModel,
    adam: AdamState,
    ds: Dataset,
    rng: np.random.Generator,
    epochs: int,
    lr: float,
    start_epoch: int = 0,
    on_epoch=None,
) -> LossCurve | None:
    """Run `epochs` epochs: shuffle, minibatch Adam steps, then a full
    test-split evaluation.  Train loss per epoch is the plain mean of the
    minibatch losses.  Raises DivergedError on any non-finite loss.

    Returns the curve of the newly run epochs, or None when epochs == 0.
    """
    train_losses: list[float] = []
    test_losses: list[float] = []
    n_train = ds.n_train
    for e in range(start_epoch + 1, start_epoch + epochs + 1):
        perm = rng.permutation(n_train)
        # Size-weighted mean of the minibatch losses: equals the mean loss
        # over every train sample as seen during the pass, so it is
        # partition-invariant (an lr=0 run yields a constant curve).
        sse = 0.0
        n_elems = 0
        for lo in range(0, n_train, ds.batch_size):
            idx = perm[lo : lo + ds.batch_size]
            bx, by = ds.train_X[idx], ds.train_Y[idx]
            pred = forward(model, bx)
            sse += float(np.sum((pred - by) ** 2))
            n_elems += by.size
            adam_step(adam, model, grad(model, bx, by), lr)
        train_loss = sse / n_elems
        test_loss = mse(forward(model, ds.test_X), ds.test_Y)
        if not (math.isfinite(train_loss) and math.isfinite(test_loss)):
            raise DivergedError(f"non-finite loss at epoch {e}")
        train_losses.append(train_loss)
        test_losses.append(test_loss)
        if on_epoch is not None:
            on_epoch(e, train_loss, test_loss)
    if not train_losses:
        return None
    return LossCurve(train=train_losses, test=test_losses)


# ---------------------------------------------------------------------------
# Checkpoints (base64 little-endian float64 tensors + RNG state)


def _encode_array(arr: np.ndarray) -> dict:
    return {
        "shape": list(arr.shape),
        "data": base64.b64encode(np.ascontiguousarray(arr, dtype="<f8").tobytes()).decode(
            "ascii"
        ),
    }


def _decode_array(obj: dict) -> np.ndarray:
    raw = base64.b64decode(obj["data"])
    return np.frombuffer(raw, dtype="<f8").reshape(obj["shape"]).copy()


def make_checkpoint(
    model: MlpModel,
    adam: AdamState,
    rng: np.random.Generator,
    epoch: int,
    curve_path: str,
    extra: dict | None = None,
) -> dict:
    ckpt = {
        "format": "gridrun-checkpoint-v1",
        "epoch": epoch,
        "curve_path": curve_path,
        "model": {
            "kind": model.kind,
            "length": model.length,
            "width": model.width,
            "layers": [
                {"w": _encode_array(W), "b": _encode_array(b)} for W, b in model.layers
            ],
        },
        "optimizer": {
            "t": adam.t,
            "beta1": adam.beta1,
            "beta2": adam.beta2,
            "eps": adam.eps,
            "m": [[_encode_array(a) for a in pair] for pair in adam.m],
            "v": [[_encode_array(a) for a in pair] for pair in adam.v],
        },
        "rng": rng.bit_generator.state,
    }
    if extra:
        ckpt["extra"] = extra
    return ckpt


def save_checkpoint(path: str | Path, ckpt: dict) -> None:
    atomic_write(path, json.dumps(ckpt, sort_keys=True))


def load_checkpoint(path: str | Path) -> tuple[MlpModel, AdamState, np.random.Generator, dict]:
    """Restore model, optimizer and RNG bit-exactly from a checkpoint file."""
    try:
        ckpt = json.loads(Path(path).read_text())
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"corrupt checkpoint {path}: {exc}") from exc
    if ckpt.get("format") != "gridrun-checkpoint-v1":
        raise CheckpointError(f"unsupported checkpoint format in {path}")
    mdl = ckpt["model"]
    model = MlpModel(
        layers=[[_decode_array(l["w"]), _decode_array(l["b"])] for l in mdl["layers"]],
        kind=mdl["kind"],
        length=mdl["length"],
        width=mdl["width"],
    )
    opt = ckpt["optimizer"]
    adam = AdamState(
        m=[[_decode_array(a) for a in pair] for pair in opt["m"]],
        v=[[_decode_array(a) for a in pair] for pair in opt["v"]],
        t=opt["t"],
        beta1=opt["beta1"],
        beta2=opt["beta2"],
        eps=opt["eps"],
    )
    rng = np.random.default_rng()
    rng.bit_generator.state = ckpt["rng"]
    return model, adam, rng, ckpt
