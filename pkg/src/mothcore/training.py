"""Gradient training of state-model networks against the spike-count cost.

The cost is C = (1/N) * sum_i (sum_m a_i(m) - n_i)^2 over the output layer:
only how often each output fires matters, not when.  Training runs in
surrogate mode, where the logistic activation replaces the Heaviside both
as the propagated output and inside the branch selectors of the potential
update, so the whole T-step recurrence is differentiable.  Gradients are
computed by unrolling it backwards (reverse time, reverse layer order),
which handles feedforward delay-0 paths, conduction delays and recurrent
bundles uniformly.

Plain SGD; the logistic sharpness can be annealed from a shallow start to
its configured value, which keeps early gradients alive when potentials
start far below threshold.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .encodings import EncoderSpec, encode_batch
from .network import (
    INPUT,
    Bundle,
    ForwardPass,
    Layer,
    NetworkTopology,
    RunTrace,
    forward_batch,
    spike_counts,
)
from .neuron import NeuronParams


@dataclass
class TargetSpec:
    """Desired spike count per output neuron for one sample."""

    n: np.ndarray

    def __post_init__(self):
        self.n = np.asarray(self.n, dtype=np.float64)
        if np.any(self.n < 0):
            raise ValueError("target counts must be non-negative")


@dataclass
class TrainConfig:
    learning_rate: float = 0.01
    batch_size: int = 10
    total_samples: int = 180_000
    beta: float = 25.0            # logistic sharpness at the end of training
    beta_start: float | None = None   # None: constant beta
    tau_m: float = 2.0
    model: str = "full"
    target_high: float | None = None  # spike target for the label neuron; None -> T
    target_low: float = 0.0
    train_thresholds: bool = True
    train_bias: bool = True
    seed: int = 0
    eval_every: int = 30_000      # draws between accuracy snapshots
    eval_samples: int = 2000      # test subset used for snapshots

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")
        if self.batch_size < 1:
            raise ValueError("batch size must be >= 1")

    def beta_at(self, draws_done: int) -> float:
        if self.beta_start is None:
            return self.beta
        frac = min(1.0, draws_done / max(1, self.total_samples))
        return self.beta_start + (self.beta - self.beta_start) * frac


@dataclass
class Gradients:
    """Gradient set mirroring a topology's parameters."""

    weights: dict = field(default_factory=dict)   # bundle index -> (P, Q)
    v0: dict = field(default_factory=dict)        # layer index -> (N,)
    bias: dict = field(default_factory=dict)      # layer index -> (N,)


def make_targets(labels: np.ndarray, n_out: int, high: float, low: float = 0.0) -> np.ndarray:
    """One row per label: ``high`` for the label neuron, ``low`` elsewhere."""
    labels = np.asarray(labels)
    t = np.full((labels.size, n_out), float(low))
    t[np.arange(labels.size), labels] = float(high)
    return t


def loss_from_counts(counts: np.ndarray, targets: np.ndarray) -> float:
    """Spike-count cost, averaged over the batch dimension if present."""
    counts = np.atleast_2d(np.asarray(counts, dtype=np.float64))
    targets = np.atleast_2d(np.asarray(targets, dtype=np.float64))
    n_out = counts.shape[1]
    per_sample = ((counts - targets) ** 2).sum(axis=1) / n_out
    return float(per_sample.mean())


def spike_count_loss(trace: RunTrace, target: TargetSpec) -> float:
    """Cost of one run against one target (output layer = last layer)."""
    counts = spike_counts(trace, len(trace.rasters) - 1)
    if counts.shape != target.n.shape:
        raise ValueError(
            f"output layer size {counts.shape} != target length {target.n.shape}"
        )
    return loss_from_counts(counts, target.n)


def _forward_backward(net: NetworkTopology, input_act: np.ndarray,
                      targets: np.ndarray) -> tuple:
    """Surrogate forward plus reverse-time unroll; returns (loss, Gradients)."""
    steps, batch, _ = input_act.shape
    out = len(net.layers) - 1
    fwd = forward_batch(net, input_act, "surrogate", keep_xi=True)
    counts = fwd.act[out].sum(axis=0)
    n_out = net.layers[out].size
    loss = loss_from_counts(counts, targets)

    grads = Gradients(
        weights={i: np.zeros_like(b.weights) for i, b in enumerate(net.bundles)},
        v0={i: np.zeros(l.size) for i, l in enumerate(net.layers)},
        bias={i: np.zeros(l.size) for i, l in enumerate(net.layers)},
    )
    # dL/da accumulators; the count cost touches the output at every step.
    ga = [np.zeros((steps, batch, l.size)) for l in net.layers]
    gv = [np.zeros((steps, batch, l.size)) for l in net.layers]
    ga[out] += (2.0 / (n_out * batch)) * (counts - targets)

    bundles_by_dst = [
        [(bi, net.bundles[bi]) for bi in range(len(net.bundles))
         if net.bundles[bi].dst == li]
        for li in range(len(net.layers))
    ]
    rev_order = list(reversed(net.eval_order))
    for n in range(steps - 1, -1, -1):
        for li in rev_order:
            layer = net.layers[li]
            p = layer.params
            a_n = fwd.act[li][n]
            psi = p.beta * a_n * (1.0 - a_n)
            ga_n = ga[li][n]
            gv_n = gv[li][n] + ga_n * psi
            grads.v0[li] -= (ga_n * psi).sum(axis=0)
            if layer.model == "full" and n > 0:
                prev_a = fwd.act[li][n - 1]
                phi = (1.0 - prev_a) * p.charge + prev_a * p.refractory_charge
            else:
                phi = p.charge
            gxi = gv_n * phi
            grads.bias[li] += gxi.sum(axis=0)
            for bi, b in bundles_by_dst[li]:
                src_act = input_act if b.src == INPUT else fwd.act[b.src]
                for d, mask in b.delay_groups():
                    m = n - d
                    if m < 0:
                        continue
                    gw = src_act[m].reshape(batch, -1).T @ gxi
                    grads.weights[bi] += gw if mask is None else gw * mask
                    if b.src != INPUT:
                        w = b.weights if mask is None else b.weights * mask
                        ga[b.src][m] += gxi @ w.T
            if n > 0:
                prev_a = fwd.act[li][n - 1]
                prev_v = fwd.v[li][n - 1]
                gv[li][n - 1] += gv_n * (1.0 - prev_a) * p.decay
                if layer.model == "full":
                    xi_n = fwd.xi[li][n]
                    ga[li][n - 1] += gv_n * (
                        (p.refractory_charge - p.charge) * xi_n - p.decay * prev_v
                    )
                else:
                    ga[li][n - 1] += gv_n * (-p.decay * prev_v)
    return loss, grads


def backward(net: NetworkTopology, batch) -> Gradients:
    """Gradients of the mean spike-count cost of a batch of (stimulus, TargetSpec).

    Stimuli may be SpikeRasters or (T, N_in) arrays sharing one window length.
    Gradients cover every bundle's weights plus per-neuron thresholds and
    bias drives; weights of non-plastic bundles still receive gradients here
    (the optimizer is what respects plasticity flags).
    """
    inputs, targets = [], []
    for stim, tgt in batch:
        arr = stim.as_float() if hasattr(stim, "as_float") else np.asarray(stim, float)
        inputs.append(arr)
        targets.append(tgt.n if isinstance(tgt, TargetSpec) else np.asarray(tgt))
    input_act = np.stack(inputs, axis=1)
    _, grads = _forward_backward(net, input_act, np.stack(targets))
    return grads


def sgd_step(net: NetworkTopology, grads: Gradients, config: TrainConfig) -> NetworkTopology:
    """Plain gradient descent: p <- p - lr * g on every plastic parameter."""
    lr = config.learning_rate
    for bi, b in enumerate(net.bundles):
        if b.plastic and bi in grads.weights:
            b.weights -= lr * grads.weights[bi]
    for li, layer in enumerate(net.layers):
        if config.train_thresholds and li in grads.v0:
            layer.v0 -= lr * grads.v0[li]
        if config.train_bias and li in grads.bias:
            layer.bias -= lr * grads.bias[li]
    return net


def build_shallow(input_dim: int, n_out: int, config: TrainConfig,
                  rng: np.random.Generator) -> NetworkTopology:
    """Input -> output network with no hidden layers, delay-0 feedforward."""
    params = NeuronParams(config.tau_m, 1.0, config.beta)
    bound = 1.0 / np.sqrt(input_dim)
    w = rng.uniform(-bound, bound, size=(input_dim, n_out))
    layer = Layer(n_out, params, config.model)
    return NetworkTopology(input_dim, [layer], [Bundle(INPUT, 0, w)])


def _apply_beta(net: NetworkTopology, beta: float):
    """Anneal the logistic sharpness on layers fed by plastic bundles."""
    trained = {b.dst for b in net.bundles if b.plastic}
    for li in trained:
        net.layers[li].params.beta = beta


def train_network(net: NetworkTopology, sampler, n_pool: int, config: TrainConfig,
                  eval_fn=None) -> list:
    """Generic SGD loop: draw indices with replacement, step, snapshot.

    ``sampler(indices, rng)`` returns the encoded (T, B, N_in) batch and its
    (B, n_out) target matrix.  Returns the metrics history as a list of
    (draws_done, mean_loss_since_last, accuracy_or_nan) rows.
    """
    rng = np.random.default_rng(config.seed)
    draws = rng.integers(0, n_pool, size=config.total_samples)
    history = []
    loss_acc, loss_n = 0.0, 0
    next_eval = config.eval_every
    for start in range(0, config.total_samples, config.batch_size):
        idx = draws[start:start + config.batch_size]
        if config.beta_start is not None:
            _apply_beta(net, config.beta_at(start))
        batch_x, batch_t = sampler(idx, rng)
        loss, grads = _forward_backward(net, batch_x, batch_t)
        sgd_step(net, grads, config)
        loss_acc += loss
        loss_n += 1
        done = start + len(idx)
        if done >= next_eval or done >= config.total_samples:
            acc = float("nan") if eval_fn is None else eval_fn(net)
            history.append((done, loss_acc / max(1, loss_n), acc))
            loss_acc, loss_n = 0.0, 0
            next_eval = done + config.eval_every
    _apply_beta(net, config.beta)
    return history


def _iter_batches(n: int, size: int):
    for start in range(0, n, size):
        yield np.arange(start, min(start + size, n))


def _encoded_eval_counts(net, images, encoder: EncoderSpec, mode: str,
                         batch: int = 500) -> np.ndarray:
    rng = encoder.make_rng()
    out = len(net.layers) - 1
    rows = []
    for idx in _iter_batches(images.shape[0], batch):
        x = encode_batch(images[idx], encoder, rng)
        fwd = forward_batch(net, x, mode)
        rows.append(fwd.act[out].sum(axis=0))
    return np.concatenate(rows, axis=0)


def eval_sigmoidal(net: NetworkTopology, dataset, encoder: EncoderSpec,
                   limit: int | None = None) -> float:
    """Fraction of samples whose summed surrogate activations argmax to the
    label; ties go to the lowest index (np.argmax), counting as correct only
    if that index is the label."""
    images, labels = _dataset_arrays(dataset, limit)
    if images.shape[0] == 0:
        raise ValueError("empty dataset")
    counts = _encoded_eval_counts(net, images, encoder, "surrogate")
    return float((counts.argmax(axis=1) == labels).mean())


def eval_binary(net: NetworkTopology, dataset, encoder: EncoderSpec,
                limit: int | None = None) -> tuple:
    """Binary-output accuracies (non_exclusive, exclusive).

    Non-exclusive: the label's spike count equals the maximum (shared maxima
    allowed, including the all-zero case).  Exclusive: the label is the
    unique maximum.
    """
    images, labels = _dataset_arrays(dataset, limit)
    if images.shape[0] == 0:
        raise ValueError("empty dataset")
    counts = _encoded_eval_counts(net, images, encoder, "binary")
    top = counts.max(axis=1)
    label_counts = counts[np.arange(labels.size), labels]
    at_max = label_counts == top
    unique = (counts == top[:, None]).sum(axis=1) == 1
    return float(at_max.mean()), float((at_max & unique).mean())


def _dataset_arrays(dataset, limit=None):
    """Accept a Dataset or an (images, labels) pair; images normalized to [0,1]."""
    if hasattr(dataset, "as_float"):
        images, labels = dataset.as_float(), dataset.labels
    else:
        images, labels = dataset
        images = np.asarray(images, dtype=np.float64)
    labels = np.asarray(labels)
    if limit is not None and images.shape[0] > limit:
        images, labels = images[:limit], labels[:limit]
    return images.reshape(images.shape[0], -1), labels


def train_shallow(encoder: EncoderSpec, dataset, config: TrainConfig,
                  test_dataset=None) -> tuple:
    """Train the shallow (no hidden layer) benchmark network.

    Draws ``total_samples`` images with replacement, optimizes the spike-count
    cost through the surrogate recurrence, and returns (net, history).  The
    label target is T spikes (fire every step), other classes 0, unless
    overridden in the config.
    """
    images, labels = _dataset_arrays(dataset)
    n_out = int(labels.max()) + 1
    high = config.target_high if config.target_high is not None else float(encoder.steps)
    rng = np.random.default_rng(config.seed)
    net = build_shallow(images.shape[1], n_out, config, rng)
    enc_rng = np.random.default_rng(encoder.seed)

    def sampler(idx, _rng):
        x = encode_batch(images[idx], encoder, enc_rng)
        return x, make_targets(labels[idx], n_out, high, config.target_low)

    eval_fn = None
    if test_dataset is not None:
        def eval_fn(current):
            return eval_sigmoidal(current, test_dataset, encoder,
                                  limit=config.eval_samples)

    history = train_network(net, sampler, images.shape[0], config, eval_fn)
    return net, history
