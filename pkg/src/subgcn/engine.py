"""GCN model, exact gradients, Adam, and the sampled-minibatch
training loop.

One layer computes relu(A_hat @ X @ W) where A_hat is the row-normalized
adjacency divided per-arc by the aggregator normalization (restricted to
the minibatch subgraph during training, alpha == 1 on the full graph at
inference). The final layer is linear; the head (softmax cross-entropy
for single-label, per-class sigmoid binary cross-entropy for
multi-label) lives in the loss. The minibatch loss is the sum of
per-node losses over sampled training nodes, each divided by its loss
normalization.

Everything runs in double precision by default; gradients are exact
reverse-mode through the cached forward and are validated against
finite differences in the test suite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.special import expit

from .graph import Graph, Subgraph
from .normalization import NormCoeffs, estimate_coeffs, normalized_arc_values
from .samplers import SamplerConfig, SubgraphProducer, make_rng

__all__ = [
    "Model",
    "Batch",
    "TrainConfig",
    "AdamState",
    "Checkpoint",
    "TrainResult",
    "NumericError",
    "EmptyBatchError",
    "init_model",
    "graph_adjacency",
    "batch_adjacency",
    "build_batch",
    "forward_subgraph",
    "forward_full",
    "layer_inputs_full",
    "loss_and_grad",
    "adam_step",
    "f1_micro",
    "train",
    "evaluate",
]

TRAIN, VAL, TEST = 0, 1, 2

HEADS = ("softmax", "sigmoid")


class NumericError(RuntimeError):
    """Training produced a non-finite quantity."""


class EmptyBatchError(Exception):
    """Skip signal: the batch contains no loss-contributing nodes."""


@dataclass
class Model:
    """Stacked GCN weights with a task head.

    weights[l] has shape (f_l, f_{l+1}); hidden layers use ReLU, the
    last layer is linear. head is "softmax" (single-label) or "sigmoid"
    (multi-label).
    """

    weights: list[np.ndarray]
    head: str

    def __post_init__(self) -> None:
        if self.head not in HEADS:
            raise ValueError(f"head must be one of {HEADS}")
        for a, b in zip(self.weights, self.weights[1:]):
            if a.shape[1] != b.shape[0]:
                raise ValueError("consecutive layer dimensions do not match")

    @property
    def dims(self) -> tuple[int, ...]:
        return (self.weights[0].shape[0],) + tuple(w.shape[1] for w in self.weights)

    @property
    def num_layers(self) -> int:
        return len(self.weights)


def init_model(
    dims: tuple[int, ...] | list[int],
    head: str,
    rng: np.random.Generator,
    dtype=np.float64,
) -> Model:
    """Glorot-uniform initialization of the layer weights."""
    if len(dims) < 2:
        raise ValueError("need at least input and output dimensions")
    weights = []
    for fi, fo in zip(dims, dims[1:]):
        limit = math.sqrt(6.0 / (fi + fo))
        weights.append(rng.uniform(-limit, limit, size=(fi, fo)).astype(dtype))
    return Model(weights=weights, head=head)


@dataclass
class Batch:
    """One minibatch: a subgraph, its gathered rows, and normalization.

    ``lam`` holds the loss normalization per local node (0 excludes the
    node from the loss); ``adjacency`` is the local sparse matrix with
    entries norm_value / alpha.
    """

    subgraph: Subgraph
    features: np.ndarray
    labels: np.ndarray
    lam: np.ndarray
    train_mask: np.ndarray
    adjacency: sp.csr_matrix


def graph_adjacency(g: Graph) -> sp.csr_matrix:
    """Full-graph row-normalized adjacency as a scipy CSR matrix."""
    return sp.csr_matrix(
        (g.norm_values, g.col_indices, g.row_offsets), shape=(g.num_nodes, g.num_nodes)
    )


def batch_adjacency(g: Graph, sub: Subgraph, coeffs: NormCoeffs | None) -> sp.csr_matrix:
    """Local normalized adjacency of a subgraph (entries / alpha)."""
    vals = normalized_arc_values(g, coeffs, sub.arc_origin)
    k = sub.num_nodes
    return sp.csr_matrix((vals, sub.col_indices, sub.row_offsets), shape=(k, k))


def build_batch(
    g: Graph,
    sub: Subgraph,
    features: np.ndarray,
    labels: np.ndarray,
    split: np.ndarray,
    coeffs: NormCoeffs | None,
) -> Batch:
    lam = coeffs.lam[sub.nodes] if coeffs is not None else np.ones(sub.num_nodes)
    return Batch(
        subgraph=sub,
        features=features[sub.nodes],
        labels=labels[sub.nodes],
        lam=lam,
        train_mask=split[sub.nodes] == TRAIN,
        adjacency=batch_adjacency(g, sub, coeffs),
    )


def _forward(
    adjacency: sp.csr_matrix,
    features: np.ndarray,
    model: Model,
    dropout: float = 0.0,
    rng: np.random.Generator | None = None,
    keep_cache: bool = False,
):
    """Shared propagation loop; returns (scores, caches, layer_inputs)."""
    x = features.astype(model.weights[0].dtype, copy=False)
    caches = []
    inputs = []
    last = model.num_layers - 1
    for l, w in enumerate(model.weights):
        if x.shape[1] != w.shape[0]:
            raise ValueError(
                f"layer {l}: input dimension {x.shape[1]} does not match weight rows {w.shape[0]}"
            )
        inputs.append(x)
        if dropout > 0.0:
            if rng is None:
                raise ValueError("dropout requires an RNG")
            mask = (rng.random(x.shape) >= dropout) / (1.0 - dropout)
            xd = x * mask
        else:
            mask = None
            xd = x
        agg = adjacency @ xd
        z = agg @ w
        out = np.maximum(z, 0.0) if l < last else z
        if keep_cache:
            caches.append((mask, agg, z))
        x = out
    return x, caches, inputs


def forward_subgraph(
    model: Model,
    batch: Batch,
    dropout: float = 0.0,
    rng: np.random.Generator | None = None,
):
    """Normalized propagation over the batch subgraph.

    Returns per-node class scores and the cached activations required
    by :func:`loss_and_grad`. Dropout (training only) is applied to the
    input of every layer.
    """
    scores, caches, _ = _forward(
        batch.adjacency, batch.features, model, dropout=dropout, rng=rng, keep_cache=True
    )
    return scores, caches


def forward_full(model: Model, g: Graph, features: np.ndarray) -> np.ndarray:
    """Full-graph inference scores (alpha == 1, no dropout)."""
    scores, _, _ = _forward(graph_adjacency(g), features, model)
    return scores


def layer_inputs_full(model: Model, g: Graph, features: np.ndarray) -> list[np.ndarray]:
    """Per-layer input activations of a full-graph forward pass.

    Element l is the input of layer l (element 0 is the raw feature
    matrix); used by the variance analysis to form per-edge aggregates.
    """
    _, _, inputs = _forward(graph_adjacency(g), features, model)
    return inputs


def _head_loss_and_grad(scores, labels, weights, head):
    """Per-node losses and d(loss)/d(scores), already weight-scaled."""
    if head == "softmax":
        shift = scores - scores.max(axis=1, keepdims=True)
        log_z = np.log(np.exp(shift).sum(axis=1))
        losses = log_z - shift[np.arange(scores.shape[0]), labels]
        probs = np.exp(shift - log_z[:, None])
        dscores = probs
        dscores[np.arange(scores.shape[0]), labels] -= 1.0
    else:
        y = labels.astype(scores.dtype)
        losses = (np.maximum(scores, 0.0) - scores * y + np.log1p(np.exp(-np.abs(scores)))).sum(axis=1)
        dscores = expit(scores) - y
    return losses, dscores * weights[:, None]


def loss_and_grad(
    model: Model,
    batch: Batch,
    scores: np.ndarray,
    caches: list,
    mean_loss: bool = False,
) -> tuple[float, list[np.ndarray]]:
    """Normalized minibatch loss and exact weight gradients.

    The loss is sum over sampled training nodes of L_v / lambda_v;
    with ``mean_loss`` it is additionally divided by the number of
    contributing nodes. Raises :class:`EmptyBatchError` when no node
    contributes.
    """
    contributing = batch.train_mask & (batch.lam > 0.0)
    count = int(contributing.sum())
    if count == 0:
        raise EmptyBatchError
    node_w = np.zeros(scores.shape[0], dtype=scores.dtype)
    node_w[contributing] = 1.0 / batch.lam[contributing]
    if mean_loss:
        node_w /= count

    losses, dscores = _head_loss_and_grad(scores, batch.labels, node_w, model.head)
    loss = float((losses * node_w).sum())

    grads: list[np.ndarray] = [None] * model.num_layers
    dout = dscores
    last = model.num_layers - 1
    for l in range(last, -1, -1):
        mask, agg, z = caches[l]
        dz = dout if l == last else dout * (z > 0.0)
        grads[l] = agg.T @ dz
        if l > 0:
            dxd = batch.adjacency.T @ (dz @ model.weights[l].T)
            dout = dxd * mask if mask is not None else dxd
    return loss, grads


@dataclass
class AdamState:
    """First/second moment accumulators and the step counter."""

    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0

    @classmethod
    def zeros_like(cls, model: Model) -> "AdamState":
        return cls(
            m=[np.zeros_like(w) for w in model.weights],
            v=[np.zeros_like(w) for w in model.weights],
        )


def adam_step(
    model: Model,
    grads: list[np.ndarray],
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> tuple[Model, AdamState]:
    """One bias-corrected Adam update, in place."""
    state.t += 1
    c1 = 1.0 - beta1**state.t
    c2 = 1.0 - beta2**state.t
    for w, g_, m_, v_ in zip(model.weights, grads, state.m, state.v):
        m_ *= beta1
        m_ += (1.0 - beta1) * g_
        v_ *= beta2
        v_ += (1.0 - beta2) * g_**2
        w -= lr * (m_ / c1) / (np.sqrt(v_ / c2) + eps)
    return model, state


def f1_micro(scores: np.ndarray, labels: np.ndarray, mode: str) -> float:
    """Micro-averaged F1 pooled over all (node, class) decisions.

    ``scores`` are raw model outputs: single-label mode predicts the
    argmax (micro-F1 then equals accuracy), multi-label mode thresholds
    the sigmoid at 0.5 (score > 0).
    """
    if scores.shape[0] == 0:
        raise ValueError("empty evaluation set")
    if mode == "single":
        pred = scores.argmax(axis=1)
        return float(np.mean(pred == labels))
    if mode != "multi":
        raise ValueError("mode must be 'single' or 'multi'")
    pred = scores > 0.0
    truth = labels.astype(bool)
    tp = int((pred & truth).sum())
    fp = int((pred & ~truth).sum())
    fn = int((~pred & truth).sum())
    denom = 2 * tp + fp + fn
    # All-negative prediction matching all-negative truth is perfect.
    return 1.0 if denom == 0 else 2.0 * tp / denom


@dataclass(frozen=True)
class TrainConfig:
    """Training hyperparameters (architecture, optimizer, schedule)."""

    hidden_dims: tuple[int, ...] = (128,)
    lr: float = 0.01
    dropout: float = 0.0
    epochs: int = 30
    batches_per_epoch: int = 1
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    eval_every: int = 1
    seed: int = 0
    mean_loss: bool = False
    single_precision: bool = False
    workers: int = 0
    queue_capacity: int = 8
    num_norm_subgraphs: int | None = None

    def __post_init__(self) -> None:
        if self.lr <= 0:
            raise ValueError("learning rate must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")
        if self.epochs < 1 or self.batches_per_epoch < 1 or self.eval_every < 1:
            raise ValueError("epochs, batches_per_epoch and eval_every must be positive")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0 and self.eps > 0.0):
            raise ValueError("invalid Adam hyperparameters")


@dataclass
class Checkpoint:
    """Resumable training state at an epoch boundary.

    RNG streams are derived from (seed, iteration), so the iteration
    counter is the complete RNG state.
    """

    head: str
    weights: list[np.ndarray]
    adam_m: list[np.ndarray]
    adam_v: list[np.ndarray]
    adam_t: int
    epochs_done: int
    iteration: int
    best_weights: list[np.ndarray]
    best_val_f1: float


@dataclass
class TrainResult:
    model: Model
    final_model: Model
    log: list[str]
    best_val_f1: float
    test_f1: float
    coeffs: NormCoeffs
    checkpoint: Checkpoint
    skipped_batches: int = 0


def _label_mode(labels: np.ndarray) -> str:
    return "single" if labels.ndim == 1 else "multi"


def _fmt(x: float) -> str:
    return repr(float(x))


def train(
    g: Graph,
    features: np.ndarray,
    labels: np.ndarray,
    split: np.ndarray,
    sampler_cfg: SamplerConfig,
    train_cfg: TrainConfig,
    num_classes: int | None = None,
    resume: Checkpoint | None = None,
    stop_after_epoch: int | None = None,
) -> TrainResult:
    """Sampled-minibatch training with full-graph validation.

    Pre-processing estimates the normalization coefficients and caches
    the drawn subgraphs, which are reused as the first minibatches.
    Each iteration builds a batch from the next subgraph (only sampled
    training nodes contribute to the loss), runs the normalized forward
    pass, backpropagates, and applies Adam. After every ``eval_every``
    epochs the full-graph validation F1-micro is logged and the best
    model retained; the test score of the best model is appended when
    training completes.

    ``resume`` continues from a checkpoint; ``stop_after_epoch`` ends
    the run early at an epoch boundary (the returned checkpoint resumes
    it). Fixed seeds make the metric log reproducible bit for bit.
    """
    if not np.any(split == TRAIN):
        raise ValueError("split has no training nodes")
    mode = _label_mode(labels)
    head = "softmax" if mode == "single" else "sigmoid"
    if num_classes is None:
        num_classes = int(labels.max()) + 1 if mode == "single" else labels.shape[1]
    dtype = np.float32 if train_cfg.single_precision else np.float64
    features = features.astype(dtype, copy=False)

    coeffs, cached = estimate_coeffs(
        g,
        sampler_cfg,
        num_subgraphs=train_cfg.num_norm_subgraphs,
        workers=train_cfg.workers,
        capacity=train_cfg.queue_capacity,
    )

    dims = (features.shape[1],) + tuple(train_cfg.hidden_dims) + (num_classes,)
    if resume is None:
        model = init_model(dims, head, make_rng(train_cfg.seed, 0), dtype=dtype)
        state = AdamState.zeros_like(model)
        iteration = 0
        start_epoch = 0
        best_weights = [w.copy() for w in model.weights]
        best_val = -1.0
    else:
        if resume.head != head:
            raise ValueError("checkpoint head does not match the dataset")
        # checkpoints hold 64-bit floats; the cast back to float32 is lossless
        model = Model(weights=[w.astype(dtype) for w in resume.weights], head=head)
        state = AdamState(
            m=[a.astype(dtype) for a in resume.adam_m],
            v=[a.astype(dtype) for a in resume.adam_v],
            t=resume.adam_t,
        )
        iteration = resume.iteration
        start_epoch = resume.epochs_done
        best_weights = [w.astype(dtype) for w in resume.best_weights]
        best_val = resume.best_val_f1

    val_idx = np.flatnonzero(split == VAL)
    test_idx = np.flatnonzero(split == TEST)
    log: list[str] = []
    skipped = 0
    last_epoch = min(train_cfg.epochs, stop_after_epoch or train_cfg.epochs)

    producer: SubgraphProducer | None = None

    def subgraph_for(index: int) -> Subgraph:
        nonlocal producer
        if index < len(cached):
            return cached[index]
        if producer is None:
            producer = SubgraphProducer(
                g,
                sampler_cfg,
                workers=train_cfg.workers,
                capacity=train_cfg.queue_capacity,
                start=index,
            )
        return producer.take()

    try:
        for epoch in range(start_epoch + 1, last_epoch + 1):
            epoch_losses = []
            for _ in range(train_cfg.batches_per_epoch):
                iteration += 1
                sub = subgraph_for(iteration - 1)
                if sub.num_nodes == 0:
                    skipped += 1
                    continue
                batch = build_batch(g, sub, features, labels, split, coeffs)
                rng = (
                    make_rng(train_cfg.seed, 2, iteration) if train_cfg.dropout > 0.0 else None
                )
                scores, caches = forward_subgraph(
                    model, batch, dropout=train_cfg.dropout, rng=rng
                )
                try:
                    loss, grads = loss_and_grad(
                        model, batch, scores, caches, mean_loss=train_cfg.mean_loss
                    )
                except EmptyBatchError:
                    skipped += 1
                    continue
                if not math.isfinite(loss):
                    raise NumericError(
                        f"non-finite loss {loss} at iteration {iteration} "
                        f"(epoch {epoch}); check learning rate and normalization"
                    )
                adam_step(
                    model,
                    grads,
                    state,
                    train_cfg.lr,
                    beta1=train_cfg.beta1,
                    beta2=train_cfg.beta2,
                    eps=train_cfg.eps,
                )
                epoch_losses.append(loss)

            if (epoch % train_cfg.eval_every == 0 or epoch == last_epoch) and val_idx.size:
                scores = forward_full(model, g, features)
                val_f1 = f1_micro(scores[val_idx], labels[val_idx], mode)
                mean = float(np.mean(epoch_losses)) if epoch_losses else float("nan")
                log.append(f"iter {iteration} loss {_fmt(mean)} val_f1 {_fmt(val_f1)}")
                if val_f1 > best_val:
                    best_val = val_f1
                    best_weights = [w.copy() for w in model.weights]
    finally:
        if producer is not None:
            producer.close()

    if best_val < 0.0:  # no validation set: fall back to the final weights
        best_weights = [w.copy() for w in model.weights]
    best_model = Model(weights=[w.copy() for w in best_weights], head=head)

    test_f1 = float("nan")
    if last_epoch == train_cfg.epochs:
        if test_idx.size:
            scores = forward_full(best_model, g, features)
            test_f1 = f1_micro(scores[test_idx], labels[test_idx], mode)
            log.append(f"test_f1 {_fmt(test_f1)}")

    checkpoint = Checkpoint(
        head=head,
        weights=[w.copy() for w in model.weights],
        adam_m=[a.copy() for a in state.m],
        adam_v=[a.copy() for a in state.v],
        adam_t=state.t,
        epochs_done=last_epoch,
        iteration=iteration,
        best_weights=[w.copy() for w in best_weights],
        best_val_f1=best_val,
    )
    return TrainResult(
        model=best_model,
        final_model=model,
        log=log,
        best_val_f1=best_val,
        test_f1=test_f1,
        coeffs=coeffs,
        checkpoint=checkpoint,
        skipped_batches=skipped,
    )


def evaluate(
    model: Model,
    g: Graph,
    features: np.ndarray,
    labels: np.ndarray,
    split: np.ndarray,
    which: int = TEST,
) -> float:
    """F1-micro of full-graph predictions on one split."""
    idx = np.flatnonzero(split == which)
    scores = forward_full(model, g, features)
    return f1_micro(scores[idx], labels[idx], _label_mode(labels))
