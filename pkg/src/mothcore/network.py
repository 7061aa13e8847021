"""Layered networks of state-model neurons run over a time window.

A topology is a list of layers (each with its own neuron constants, per-
neuron thresholds and constant bias drive) plus synapse bundles between
them.  Bundles from the input carry the encoded stimulus; bundles with
delay 0 deliver same-step activity, so layers are evaluated in topological
order of the delay-0 edges within each step.  Recurrent bundles must have
all delays >= 1, which is what makes a single forward sweep per step
sufficient.

Two propagation modes: ``binary`` uses the Heaviside spike flags downstream,
``surrogate`` replaces them everywhere (output and branch selection) by the
logistic activation, making the whole unrolled recurrence differentiable.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .neuron import NeuronParams, SpikeRaster

INPUT = -1  # bundle source tag for the encoded stimulus

MODES = ("binary", "surrogate")
MODELS = ("full", "simplified")


class TopologyError(ValueError):
    """Raised when a network description is structurally inconsistent."""


@dataclass
class Layer:
    """One population: shared constants plus per-neuron threshold and bias."""

    size: int
    params: NeuronParams
    model: str = "full"
    v0: np.ndarray = None
    bias: np.ndarray = None

    def __post_init__(self):
        if self.model not in MODELS:
            raise TopologyError(f"unknown neuron model {self.model!r}")
        if self.v0 is None:
            self.v0 = np.full(self.size, self.params.v0)
        self.v0 = np.asarray(self.v0, dtype=np.float64)
        if self.bias is None:
            self.bias = np.zeros(self.size)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.v0.shape != (self.size,) or self.bias.shape != (self.size,):
            raise TopologyError("v0/bias must have one entry per neuron")


@dataclass
class Bundle:
    """Connection block between two layers (or from the input stimulus)."""

    src: int
    dst: int
    weights: np.ndarray
    delays: np.ndarray = None
    plastic: bool = True
    _groups: list = field(default=None, repr=False)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.delays is None:
            self.delays = np.zeros(self.weights.shape, dtype=np.int64)
        self.delays = np.asarray(self.delays, dtype=np.int64)
        if self.delays.shape != self.weights.shape:
            raise TopologyError("weights and delays must have equal shape")
        if np.any(self.delays < 0):
            raise TopologyError("delays must be non-negative")

    def delay_groups(self):
        """(delay, mask) pairs; mask is None when the whole bundle shares one
        delay, which is the common case and skips a multiply."""
        if self._groups is None:
            uniq = np.unique(self.delays)
            if uniq.size == 1:
                self._groups = [(int(uniq[0]), None)]
            else:
                self._groups = [
                    (int(d), (self.delays == d)) for d in uniq
                ]
        return self._groups

    def max_delay(self) -> int:
        return int(self.delays.max()) if self.delays.size else 0


@dataclass
class NetworkTopology:
    """Validated network: layer list, bundles, input width, evaluation order."""

    input_dim: int
    layers: list
    bundles: list
    eval_order: list = field(default=None)

    def __post_init__(self):
        for b in self.bundles:
            src_size = self.input_dim if b.src == INPUT else self._layer_size(b.src)
            dst_size = self._layer_size(b.dst)
            if b.weights.shape != (src_size, dst_size):
                raise TopologyError(
                    f"bundle {b.src}->{b.dst}: weights {b.weights.shape} do not "
                    f"match layer sizes ({src_size}, {dst_size})"
                )
            if b.src == b.dst and np.any(b.delays < 1):
                raise TopologyError(
                    f"recurrent bundle on layer {b.dst} must have all delays >= 1"
                )
        self.eval_order = self._topological_order()

    def _layer_size(self, idx: int) -> int:
        if not 0 <= idx < len(self.layers):
            raise TopologyError(f"bundle references missing layer {idx}")
        return self.layers[idx].size

    def _topological_order(self):
        """Order layers so every delay-0 edge goes from earlier to later."""
        n = len(self.layers)
        succ = [set() for _ in range(n)]
        indeg = [0] * n
        for b in self.bundles:
            if b.src == INPUT or b.src == b.dst:
                continue
            if any(d == 0 for d, _ in b.delay_groups()):
                if b.dst not in succ[b.src]:
                    succ[b.src].add(b.dst)
                    indeg[b.dst] += 1
        order = [i for i in range(n) if indeg[i] == 0]
        head = 0
        while head < len(order):
            for j in sorted(succ[order[head]]):
                indeg[j] -= 1
                if indeg[j] == 0:
                    order.append(j)
            head += 1
        if len(order) != n:
            raise TopologyError("delay-0 connections form a cycle")
        return order

    def bundles_into(self, layer_idx: int):
        return [b for b in self.bundles if b.dst == layer_idx]

    def bundles_from(self, layer_idx: int):
        return [b for b in self.bundles if b.src == layer_idx]

    def copy(self) -> "NetworkTopology":
        layers = [
            Layer(l.size, l.params, l.model, l.v0.copy(), l.bias.copy())
            for l in self.layers
        ]
        bundles = [
            Bundle(b.src, b.dst, b.weights.copy(), b.delays.copy(), b.plastic)
            for b in self.bundles
        ]
        return NetworkTopology(self.input_dim, layers, bundles)


@dataclass
class ForwardPass:
    """Batched forward record: per-layer (T, B, N) arrays, time-major."""

    mode: str
    act: list   # propagated activity (spikes or surrogate activations)
    v: list     # membrane potentials
    xi: list    # synaptic drives (needed by the backward pass)


def forward_batch(
    net: NetworkTopology, input_act: np.ndarray, mode: str, keep_xi: bool = False
) -> ForwardPass:
    """Run a (T, B, N_in) input through the network.

    Activity propagates as binary spikes or surrogate activations depending
    on ``mode``.  Initial potentials and activities are zero, and steps
    before the window contribute nothing.
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    steps, batch, n_in = input_act.shape
    if n_in != net.input_dim:
        raise TopologyError(f"input width {n_in} != network input {net.input_dim}")
    act = [np.zeros((steps, batch, l.size)) for l in net.layers]
    v = [np.zeros((steps, batch, l.size)) for l in net.layers]
    xi = [np.zeros((steps, batch, l.size)) if keep_xi else None for l in net.layers]
    for n in range(steps):
        for li in net.eval_order:
            layer = net.layers[li]
            p = layer.params
            drive = np.broadcast_to(layer.bias, (batch, layer.size)).copy()
            for b in net.bundles_into(li):
                src = input_act if b.src == INPUT else act[b.src]
                for d, mask in b.delay_groups():
                    m = n - d
                    if m < 0:
                        continue
                    w = b.weights if mask is None else b.weights * mask
                    drive += src[m] @ w
            if n > 0:
                prev_a = act[li][n - 1]
                prev_v = v[li][n - 1]
                if layer.model == "full":
                    vn = (1.0 - prev_a) * (p.charge * drive + p.decay * prev_v) \
                        + prev_a * (p.refractory_charge * drive)
                else:
                    vn = p.charge * drive + (1.0 - prev_a) * p.decay * prev_v
            else:
                # zero initial state: both branches reduce to charge * drive
                vn = p.charge * drive
            v[li][n] = vn
            if mode == "surrogate":
                act[li][n] = expit(p.beta * (vn - layer.v0))
            else:
                act[li][n] = (vn >= layer.v0).astype(np.float64)
            if keep_xi:
                xi[li][n] = drive
    return ForwardPass(mode, act, v, xi)


@dataclass
class RunTrace:
    """Single-sample run record with per-layer histories."""

    mode: str
    rasters: list       # SpikeRaster per layer: H(v - v0) at every step
    potentials: list    # (T, N) membrane histories
    activations: list   # (T, N) surrogate activation histories

    def output_counts(self) -> np.ndarray:
        return spike_counts(self, len(self.rasters) - 1)


def run(net: NetworkTopology, stimulus, steps: int, mode: str = "binary") -> RunTrace:
    """Execute the network for ``steps`` on one stimulus.

    The stimulus may be a SpikeRaster, a (T, N_in) activity array (T >= steps)
    or an (N_in,) constant drive repeated every step.
    """
    if isinstance(stimulus, SpikeRaster):
        arr = stimulus.as_float()
    else:
        arr = np.asarray(stimulus, dtype=np.float64)
        if arr.ndim == 1:
            arr = np.broadcast_to(arr, (steps, arr.size)).copy()
    if arr.shape[0] < steps:
        raise ValueError(f"stimulus covers {arr.shape[0]} steps, need {steps}")
    fwd = forward_batch(net, arr[:steps, None, :], mode)
    rasters, pots, acts = [], [], []
    for li, layer in enumerate(net.layers):
        vh = fwd.v[li][:, 0, :]
        pots.append(vh)
        rasters.append(SpikeRaster((vh >= layer.v0).astype(np.uint8)))
        acts.append(expit(layer.params.beta * (vh - layer.v0)))
    return RunTrace(mode, rasters, pots, acts)


def spike_counts(trace: RunTrace, layer_idx: int) -> np.ndarray:
    """Per-neuron activity totals: integer spike counts in binary mode,
    summed surrogate activations in surrogate mode."""
    if not 0 <= layer_idx < len(trace.rasters):
        raise ValueError(f"no layer {layer_idx} in trace")
    if trace.mode == "binary":
        return trace.rasters[layer_idx].counts()
    return trace.activations[layer_idx].sum(axis=0)


def _fmt_vec(arr) -> str:
    return " ".join(repr(float(x)) for x in arr)


def save_network(net: NetworkTopology, path):
    """Write a field-for-field text checkpoint (floats via repr: exact round-trip)."""
    lines = ["mothcore-network 1", f"input_dim {net.input_dim}",
             f"nlayers {len(net.layers)}", f"nbundles {len(net.bundles)}"]
    for i, l in enumerate(net.layers):
        lines += [
            f"layer {i}",
            f"size {l.size}",
            f"model {l.model}",
            f"tau_m {l.params.tau_m!r}",
            f"beta {l.params.beta!r}",
            f"params_v0 {l.params.v0!r}",
            "v0 " + _fmt_vec(l.v0),
            "bias " + _fmt_vec(l.bias),
        ]
    for b in net.bundles:
        lines += [
            "bundle",
            f"src {b.src}",
            f"dst {b.dst}",
            f"plastic {int(b.plastic)}",
            f"shape {b.weights.shape[0]} {b.weights.shape[1]}",
        ]
        uniq = np.unique(b.delays)
        if uniq.size == 1:
            lines.append(f"delays uniform {int(uniq[0])}")
        else:
            lines.append("delays rows")
            lines += [" ".join(str(int(x)) for x in row) for row in b.delays]
        lines.append("weights")
        lines += [_fmt_vec(row) for row in b.weights]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_network(path) -> NetworkTopology:
    with open(path) as fh:
        tokens = fh.read().split("\n")
    it = iter(tokens)

    def expect(prefix):
        line = next(it)
        if not line.startswith(prefix):
            raise ValueError(f"corrupt checkpoint: expected {prefix!r}, got {line!r}")
        return line[len(prefix):].strip()

    if next(it) != "mothcore-network 1":
        raise ValueError("not a mothcore network checkpoint")
    input_dim = int(expect("input_dim"))
    nlayers = int(expect("nlayers"))
    nbundles = int(expect("nbundles"))
    layers = []
    for i in range(nlayers):
        expect("layer")
        size = int(expect("size"))
        model = expect("model")
        tau_m = float(expect("tau_m"))
        beta = float(expect("beta"))
        p_v0 = float(expect("params_v0"))
        v0 = np.array([float(x) for x in expect("v0").split()])
        bias = np.array([float(x) for x in expect("bias").split()])
        layers.append(Layer(size, NeuronParams(tau_m, p_v0, beta), model, v0, bias))
    bundles = []
    for _ in range(nbundles):
        expect("bundle")
        src = int(expect("src"))
        dst = int(expect("dst"))
        plastic = bool(int(expect("plastic")))
        rows, cols = (int(x) for x in expect("shape").split())
        dline = expect("delays")
        if dline.startswith("uniform"):
            delays = np.full((rows, cols), int(dline.split()[1]), dtype=np.int64)
        else:
            delays = np.array(
                [[int(x) for x in next(it).split()] for _ in range(rows)],
                dtype=np.int64,
            )
        expect("weights")
        weights = np.array([[float(x) for x in next(it).split()] for _ in range(rows)])
        bundles.append(Bundle(src, dst, weights, delays, plastic))
    return NetworkTopology(input_dim, layers, bundles)
