"""Reconstruction-based detectors (MLPAE, GCNAE, DOMINANT) and the eigenvector-augmented pipeline.

Encoders map features to an embedding Z, an attribute decoder reconstructs the
input features, and DOMINANT also reconstructs the adjacency as Z Z^T. The
structure term is evaluated in factored form,

    ||A - Z Z^T||_F^2 = ||A||_F^2 - 2 <Z, A Z> + ||Z^T Z||_F^2,

so the n x n reconstruction is never materialised during training.
"""
from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field, replace
from typing import Dict, List, NamedTuple, Optional, Union

import numpy as np
import scipy.sparse as sp

from . import seeding
from .graph import AttributedGraph, normalized_adjacency
from .metrics import EvalReport, evaluate
from .nn import (
    AdamState,
    adam_step,
    gcn_layer,
    gcn_layer_backward,
    init_weight,
    mlp_layer,
    mlp_layer_backward,
    spmm,
)
from .spectral import DEFAULT_TOL, augment_features, top_eigenpairs

KINDS = ("mlpae", "gcnae", "dominant")
UNIT_RMS = "unit_rms"
PARAMS_FORMAT_VERSION = 1


class DivergenceError(FloatingPointError):
    def __init__(self, epoch: int, loss: float):
        super().__init__(f"training diverged at epoch {epoch} (loss={loss})")
        self.epoch = epoch
        self.loss = loss


@dataclass
class Layer:
    weight: np.ndarray
    bias: Optional[np.ndarray]
    activation: str


@dataclass
class ModelParams:
    kind: str
    encoder: List[Layer]
    decoder: List[Layer]

    @property
    def widths(self) -> List[int]:
        layers = self.encoder + self.decoder
        return [layers[0].weight.shape[0]] + [l.weight.shape[1] for l in layers]

    @property
    def in_dim(self) -> int:
        return self.encoder[0].weight.shape[0]

    def validate(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}")
        layers = self.encoder + self.decoder
        for a, b in zip(layers, layers[1:]):
            if a.weight.shape[1] != b.weight.shape[0]:
                raise ValueError(f"layer widths do not chain: {a.weight.shape} -> {b.weight.shape}")
        if layers[-1].weight.shape[1] != self.in_dim:
            raise ValueError("decoder output width must equal encoder input width")
        uses_bias = self.kind == "mlpae"
        for layer in layers:
            if (layer.bias is not None) != uses_bias:
                raise ValueError(f"{self.kind} layers {'need' if uses_bias else 'take no'} bias")

    def named(self) -> Dict[str, np.ndarray]:
        out = {}
        for part, layers in (("encoder", self.encoder), ("decoder", self.decoder)):
            for i, layer in enumerate(layers):
                out[f"{part}.{i}.weight"] = layer.weight
                if layer.bias is not None:
                    out[f"{part}.{i}.bias"] = layer.bias
        return out

    def with_values(self, values: Dict[str, np.ndarray]) -> "ModelParams":
        def rebuild(part, layers):
            return [
                Layer(
                    values[f"{part}.{i}.weight"],
                    values[f"{part}.{i}.bias"] if layer.bias is not None else None,
                    layer.activation,
                )
                for i, layer in enumerate(layers)
            ]

        return ModelParams(self.kind, rebuild("encoder", self.encoder), rebuild("decoder", self.decoder))

    def to_json(self) -> str:
        def dump(layers):
            return [
                {
                    "weight": l.weight.tolist(),
                    "bias": None if l.bias is None else l.bias.tolist(),
                    "activation": l.activation,
                }
                for l in layers
            ]

        doc = {
            "format_version": PARAMS_FORMAT_VERSION,
            "kind": self.kind,
            "encoder": dump(self.encoder),
            "decoder": dump(self.decoder),
        }
        return json.dumps(doc)

    @classmethod
    def from_json(cls, text: str) -> "ModelParams":
        doc = json.loads(text)
        if doc.get("format_version") != PARAMS_FORMAT_VERSION:
            raise ValueError(f"unsupported params format version {doc.get('format_version')!r}")

        def load(layers):
            return [
                Layer(
                    np.array(l["weight"], dtype=np.float64),
                    None if l["bias"] is None else np.array(l["bias"], dtype=np.float64),
                    l["activation"],
                )
                for l in layers
            ]

        params = cls(doc["kind"], load(doc["encoder"]), load(doc["decoder"]))
        params.validate()
        return params


def init_params(kind: str, in_dim: int, hidden: int = 64, embed: int = 32, rng=None) -> ModelParams:
    """Two-layer encoder in -> hidden -> embed (relu), one-layer decoder embed -> in (identity)."""
    if kind not in KINDS:
        raise ValueError(f"unknown model kind {kind!r}")
    rng = np.random.default_rng(0) if rng is None else rng
    shapes = [(in_dim, hidden, "relu"), (hidden, embed, "relu"), (embed, in_dim, "identity")]
    layers = []
    for fan_in, fan_out, act in shapes:
        w = init_weight(rng, fan_in, fan_out)
        b = np.zeros(fan_out) if kind == "mlpae" else None
        layers.append(Layer(w, b, act))
    return ModelParams(kind, layers[:2], layers[2:])


# ---------------------------------------------------------------- forward / backward


class _Pass(NamedTuple):
    z: np.ndarray
    x_rec: np.ndarray
    caches: list


def _run_layers(kind, op, h, layers, caches, first_propagated=None):
    for i, layer in enumerate(layers):
        if kind == "mlpae":
            h, cache = mlp_layer(h, layer.weight, layer.bias, layer.activation)
        else:
            prop = first_propagated if i == 0 else None
            h, cache = gcn_layer(op, h, layer.weight, layer.activation, propagated=prop)
        caches.append(cache)
    return h


def _forward(params: ModelParams, op, x, x_prop=None) -> _Pass:
    if x.shape[1] != params.in_dim:
        raise ValueError(f"input width {x.shape[1]} does not match model input width {params.in_dim}")
    caches = []
    z = _run_layers(params.kind, op, x, params.encoder, caches, x_prop)
    x_rec = _run_layers(params.kind, op, z, params.decoder, caches)
    return _Pass(z, x_rec, caches)


def model_forward(kind: str, op, x: np.ndarray, params: ModelParams):
    """Return (Z, A', X'). A' = Z Z^T for DOMINANT and ``None`` for the plain autoencoders."""
    if params.kind != kind:
        raise ValueError(f"params are for {params.kind!r}, not {kind!r}")
    out = _forward(params, op, np.asarray(x, dtype=np.float64))
    a_rec = out.z @ out.z.T if kind == "dominant" else None
    return out.z, a_rec, out.x_rec


def effective_alpha(kind: str, alpha: float) -> float:
    return alpha if kind == "dominant" else 1.0


def reconstruction_loss(a_target, a_rec, x, x_rec, alpha: float) -> float:
    """(1 - alpha) ||A - A'||_F^2 + alpha ||X - X'||_F^2; with no A' the loss is ||X - X'||_F^2."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must be in [0, 1], got {alpha}")
    x, x_rec = np.asarray(x, float), np.asarray(x_rec, float)
    if x.shape != x_rec.shape:
        raise ValueError(f"attribute shapes differ: {x.shape} vs {x_rec.shape}")
    attr = float(np.sum((x - x_rec) ** 2))
    if a_rec is None:
        return attr
    a_target = a_target.toarray() if sp.issparse(a_target) else np.asarray(a_target, float)
    if a_target.shape != np.shape(a_rec):
        raise ValueError(f"structure shapes differ: {a_target.shape} vs {np.shape(a_rec)}")
    struct = float(np.sum((a_target - a_rec) ** 2))
    return (1.0 - alpha) * struct + alpha * attr


@dataclass
class AnomalyScores:
    scores: np.ndarray
    alpha: float
    kind: str
    train_seconds: float = 0.0
    eigen_seconds: Optional[float] = None


def node_scores(a_target, a_rec, x, x_rec, alpha: float, kind: str = "dominant") -> AnomalyScores:
    """Per-node (1 - alpha) ||A_i - A'_i|| + alpha ||X_i - X'_i|| from dense reconstructions."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must be in [0, 1], got {alpha}")
    x, x_rec = np.asarray(x, float), np.asarray(x_rec, float)
    if x.shape != x_rec.shape:
        raise ValueError(f"attribute shapes differ: {x.shape} vs {x_rec.shape}")
    attr = np.sqrt(np.sum((x - x_rec) ** 2, axis=1))
    if a_rec is None:
        return AnomalyScores(attr, 1.0, kind)
    a_target = a_target.toarray() if sp.issparse(a_target) else np.asarray(a_target, float)
    if a_target.shape != np.shape(a_rec) or a_target.shape[0] != x.shape[0]:
        raise ValueError("structure shapes do not match")
    struct = np.sqrt(np.sum((a_target - a_rec) ** 2, axis=1))
    return AnomalyScores((1.0 - alpha) * struct + alpha * attr, alpha, kind)


def structure_row_errors(adj, z: np.ndarray) -> np.ndarray:
    """Squared row norms of A - Z Z^T for binary symmetric ``adj``, without forming Z Z^T."""
    az = adj @ z
    gram = z.T @ z
    deg = np.asarray(adj.sum(axis=1)).ravel()
    rows = deg - 2.0 * np.einsum("ij,ij->i", z, az) + np.einsum("ij,jk,ik->i", z, gram, z)
    return np.maximum(rows, 0.0)


def loss_and_grads(params: ModelParams, op, adj, x, alpha: float, op_t=None, x_prop=None):
    """Full training loss and its gradient with respect to every named parameter.

    ``op_t`` is the transpose of ``op``; the normalized adjacency is symmetric, so
    callers usually pass ``op`` itself. ``x_prop = op @ x`` may be passed to reuse
    the input propagation across epochs.
    """
    kind = params.kind
    alpha = effective_alpha(kind, alpha)
    fwd = _forward(params, op, x, x_prop)
    diff = fwd.x_rec - x
    loss = alpha * float(np.sum(diff * diff))
    grad = 2.0 * alpha * diff
    grad_z_struct = None
    if kind == "dominant":
        az = adj @ fwd.z
        gram = fwd.z.T @ fwd.z
        struct = float(adj.nnz) - 2.0 * float(np.sum(fwd.z * az)) + float(np.sum(gram * gram))
        loss += (1.0 - alpha) * struct
        grad_z_struct = (1.0 - alpha) * (4.0 * (fwd.z @ gram) - 4.0 * az)

    grads: Dict[str, np.ndarray] = {}
    layers = [("encoder", i, l) for i, l in enumerate(params.encoder)]
    layers += [("decoder", i, l) for i, l in enumerate(params.decoder)]
    n_enc = len(params.encoder)
    for pos in range(len(layers) - 1, -1, -1):
        part, i, layer = layers[pos]
        cache = fwd.caches[pos]
        if kind == "mlpae":
            lg = mlp_layer_backward(layer.weight, cache, grad, need_inputs=pos > 0)
            grads[f"{part}.{i}.bias"] = lg.bias
        else:
            lg = gcn_layer_backward(op, layer.weight, cache, grad, op_t, need_inputs=pos > 0)
        grads[f"{part}.{i}.weight"] = lg.weight
        grad = lg.inputs
        if pos == n_enc and grad_z_struct is not None:
            grad = grad + grad_z_struct
    return loss, grads, fwd


# ---------------------------------------------------------------- training


@dataclass
class TrainConfig:
    model: str = "dominant"
    alpha: float = 0.8
    lr: float = 0.005
    epochs: int = 100
    hidden: int = 64
    embed: int = 32
    t: int = 0
    eigen_scale: Union[float, str] = 1.0
    eigen_tol: float = DEFAULT_TOL
    seed: int = 0

    def validate(self) -> None:
        if self.model not in KINDS:
            raise ValueError(f"model: unknown kind {self.model!r}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha: must be in [0, 1], got {self.alpha}")
        if self.epochs < 1:
            raise ValueError(f"epochs: must be >= 1, got {self.epochs}")
        if self.t < 0:
            raise ValueError(f"t: must be >= 0, got {self.t}")
        if self.lr <= 0:
            raise ValueError(f"lr: must be positive, got {self.lr}")
        if self.hidden < 1 or self.embed < 1:
            raise ValueError("hidden/embed: widths must be >= 1")
        if isinstance(self.eigen_scale, str):
            if self.eigen_scale != UNIT_RMS:
                raise ValueError(f"eigen_scale: expected a positive number or {UNIT_RMS!r}")
        elif not self.eigen_scale > 0:
            raise ValueError(f"eigen_scale: must be positive, got {self.eigen_scale}")

    def resolved_scale(self, n: int) -> float:
        """``unit_rms`` scales unit eigenvectors by sqrt(n), giving each column unit RMS."""
        return float(np.sqrt(n)) if self.eigen_scale == UNIT_RMS else float(self.eigen_scale)


class TrainResult(NamedTuple):
    params: ModelParams
    history: List[float]
    scores: AnomalyScores


def prepare_input(dataset: AttributedGraph, config: TrainConfig):
    """Return (model input matrix, eigen seconds or None)."""
    x = dataset.features
    if config.t == 0:
        return x.values, None
    start = time.perf_counter()
    pairs = top_eigenpairs(
        dataset.graph, config.t, config.eigen_tol, seed=config.seed, max_t=max(10, config.t)
    )
    augmented = augment_features(x, pairs, config.resolved_scale(dataset.n))
    return augmented.values, time.perf_counter() - start


def train(dataset: AttributedGraph, config: TrainConfig) -> TrainResult:
    config.validate()
    if dataset.n == 0:
        raise ValueError("dataset graph is empty")
    x, eigen_seconds = prepare_input(dataset, config)
    start = time.perf_counter()
    op = normalized_adjacency(dataset.graph)
    adj = dataset.graph.adjacency()
    # inputs are fixed during training, so their propagation is computed once
    x_prop = None if config.model == "mlpae" else spmm(op, x)
    params = init_params(config.model, x.shape[1], config.hidden, config.embed, seeding.stream(config.seed, seeding.INIT))
    state = AdamState(lr=config.lr)
    values = params.named()
    history = []
    for epoch in range(config.epochs):
        loss, grads, _ = loss_and_grads(params, op, adj, x, config.alpha, op_t=op, x_prop=x_prop)
        if not np.isfinite(loss):
            raise DivergenceError(epoch, loss)
        history.append(loss)
        try:
            values, state = adam_step(values, grads, state)
        except FloatingPointError:
            raise DivergenceError(epoch, loss) from None
        params = params.with_values(values)

    fwd = _forward(params, op, x, x_prop)
    alpha = effective_alpha(config.model, config.alpha)
    attr = np.sqrt(np.sum((x - fwd.x_rec) ** 2, axis=1))
    if config.model == "dominant":
        scores = (1.0 - alpha) * np.sqrt(structure_row_errors(adj, fwd.z)) + alpha * attr
    else:
        scores = attr
    if not np.all(np.isfinite(scores)):
        raise DivergenceError(config.epochs, float("nan"))
    elapsed = time.perf_counter() - start
    return TrainResult(params, history, AnomalyScores(scores, alpha, config.model, elapsed, eigen_seconds))


# ---------------------------------------------------------------- comparison


@dataclass
class Comparison:
    vanilla: EvalReport
    neigad: EvalReport

    @property
    def delta(self) -> float:
        return self.neigad.roc_auc - self.vanilla.roc_auc

    def to_dict(self) -> dict:
        return {"vanilla": self.vanilla.to_dict(), "neigad": self.neigad.to_dict(), "delta": self.delta}


def run_comparison(dataset: AttributedGraph, config_vanilla: TrainConfig, config_neigad: TrainConfig, name: str = "") -> Comparison:
    """Train the vanilla and augmented variants on the same labelled graph and compare ROC-AUC."""
    if dataset.labels is None:
        raise ValueError("comparison needs anomaly labels")
    strip = dict(t=0, eigen_scale=1.0)
    if replace(config_vanilla, **strip) != replace(config_neigad, **strip):
        raise ValueError("vanilla and augmented configs may differ only in t and eigen_scale")
    reports = []
    for cfg in (config_vanilla, config_neigad):
        result = train(dataset, cfg)
        reports.append(
            evaluate(
                result.scores.scores,
                dataset.labels,
                train_seconds=result.scores.train_seconds,
                eigen_seconds=result.scores.eigen_seconds,
                seed=cfg.seed,
                t=cfg.t,
                method=cfg.model if cfg.t == 0 else f"{cfg.model}+neigad",
                dataset=name,
            )
        )
    return Comparison(*reports)
