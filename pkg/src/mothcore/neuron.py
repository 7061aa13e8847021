"""Synchronous state-model spiking neurons.

The continuous leaky integrate-and-fire dynamics

    tau_m dv/dt = -v + sum_j w_ji * delta(t - t_j) + v_ext

with an absolute refractory period tau_r are binned into steps of width
tau_r.  Each neuron then carries a membrane potential v and a binary spike
flag s per step, updated by a two-branch recurrence: the branch taken
depends on whether the neuron spiked in the previous bin (a spiking neuron
is silent for part of the next bin, so the same drive charges it less).

Time is measured in units of tau_r throughout; ``tau_m`` is the membrane
constant in those units.  Spikes are normalized so the firing potential is
1, and the step width equals tau_r exactly, which makes the synaptic drive
divisor w/tau_r collapse to w.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

# The refractory period sets the time bin; everything is normalized to it.
TAU_R = 1.0


@dataclass
class NeuronParams:
    """Per-layer neuron constants.

    tau_m : membrane time constant in units of the refractory period
    v0    : firing threshold of the state model (spikes are normalized to 1)
    beta  : sharpness of the surrogate (logistic) activation
    decay : cached e^(-1/tau_m), the per-step potential retention
    """

    tau_m: float
    v0: float = 1.0
    beta: float = 25.0
    decay: float = field(init=False)

    def __post_init__(self):
        if self.tau_m <= 0:
            raise ValueError(f"tau_m must be positive, got {self.tau_m}")
        if self.beta <= 0:
            raise ValueError(f"beta must be positive, got {self.beta}")
        if not 0.0 < self.v0 <= 1.0:
            raise ValueError(f"v0 must lie in (0, 1], got {self.v0}")
        self.decay = math.exp(-1.0 / self.tau_m)

    @property
    def charge(self) -> float:
        """Fraction of a constant drive absorbed in one step: 1 - e^(-1/tau_m)."""
        return 1.0 - self.decay

    @property
    def refractory_charge(self) -> float:
        """Post-spike charge factor 1 - tau_m*(1 - e^(-1/tau_m)).

        A neuron that spiked in the previous bin integrates input only for
        the fraction of the current bin left after its refractory period;
        averaging the spike time over the bin gives this factor.  It lies
        in (0, 1) for every tau_m > 0.
        """
        return 1.0 - self.tau_m * (1.0 - self.decay)


@dataclass
class LayerState:
    """Membrane potentials and spike flags of one layer at one step."""

    v: np.ndarray
    s: np.ndarray

    def __post_init__(self):
        self.v = np.asarray(self.v, dtype=np.float64)
        self.s = np.asarray(self.s, dtype=np.float64)
        if self.v.shape != self.s.shape:
            raise ValueError(
                f"v and s must have equal shape, got {self.v.shape} vs {self.s.shape}"
            )
        if not np.all((self.s == 0.0) | (self.s == 1.0)):
            raise ValueError("spike flags must be 0 or 1")

    @classmethod
    def zeros(cls, n: int) -> "LayerState":
        return cls(np.zeros(n), np.zeros(n))


@dataclass
class SynapseBundle:
    """Weights, integer conduction delays and constant drive for one projection.

    ``weights[j, i]`` connects pre-neuron j to post-neuron i; ``delays[j, i]``
    is the conduction delay in whole steps.  ``v_ext`` is a constant external
    drive added to every post-neuron at every step.
    """

    weights: np.ndarray
    delays: np.ndarray
    v_ext: np.ndarray | None = None

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.delays = np.asarray(self.delays, dtype=np.int64)
        if self.weights.shape != self.delays.shape:
            raise ValueError(
                f"weights {self.weights.shape} and delays {self.delays.shape} differ"
            )
        if np.any(self.delays < 0):
            raise ValueError("delays must be non-negative")
        n_post = self.weights.shape[1]
        if self.v_ext is None:
            self.v_ext = np.zeros(n_post)
        self.v_ext = np.asarray(self.v_ext, dtype=np.float64)
        if self.v_ext.shape != (n_post,):
            raise ValueError(f"v_ext must have shape ({n_post},)")

    @property
    def n_pre(self) -> int:
        return self.weights.shape[0]

    @property
    def n_post(self) -> int:
        return self.weights.shape[1]

    def check_recurrent(self):
        """A bundle projecting a layer onto itself needs delays >= 1."""
        if self.n_pre != self.n_post:
            raise ValueError("recurrent bundle must be square")
        if np.any((self.delays < 1) & (self.weights != 0.0)):
            raise ValueError("recurrent connections must have delay >= 1")


@dataclass
class SpikeRaster:
    """Binary activity matrix, time-major: data[n, i] = 1 if neuron i spiked in bin n."""

    data: np.ndarray
    dt: float = TAU_R

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.ndim != 2:
            raise ValueError(f"raster must be 2-D (steps x neurons), got {arr.ndim}-D")
        if not np.all((arr == 0) | (arr == 1)):
            raise ValueError("raster entries must be 0 or 1")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        self.data = arr.astype(np.uint8)

    @property
    def steps(self) -> int:
        return self.data.shape[0]

    @property
    def n_neurons(self) -> int:
        return self.data.shape[1]

    def as_float(self) -> np.ndarray:
        return self.data.astype(np.float64)

    def counts(self) -> np.ndarray:
        """Total spikes per neuron over the window."""
        return self.data.sum(axis=0, dtype=np.int64)


@dataclass
class SpikeEventList:
    """Time-sorted (neuron, firing time) events of an asynchronous run."""

    events: list
    tau_r: float = TAU_R

    def __post_init__(self):
        self.events = [(int(i), float(t)) for i, t in self.events]
        times = [t for _, t in self.events]
        if any(b < a for a, b in zip(times, times[1:])):
            raise ValueError("events must be sorted by time")
        last: dict = {}
        for i, t in self.events:
            if i in last and t - last[i] < self.tau_r - 1e-12:
                raise ValueError(
                    f"neuron {i} fires twice within the refractory period "
                    f"({last[i]} -> {t})"
                )
            last[i] = t

    def __len__(self) -> int:
        return len(self.events)

    def times_of(self, neuron: int) -> list:
        return [t for i, t in self.events if i == neuron]


def step_full(state: LayerState, drive: np.ndarray, params: NeuronParams) -> LayerState:
    """One step of the refractory-aware state model.

    Quiet neurons (s=0) integrate drive*(1-decay) on top of decay*v; neurons
    that spiked (s=1) restart from zero and absorb only the post-refractory
    fraction of the drive.  The new spike flag is H(v' - v0), with H(0) = 1.
    """
    v, s = state.v, state.s
    drive = np.asarray(drive, dtype=np.float64)
    if drive.shape != v.shape:
        raise ValueError(f"drive shape {drive.shape} != state shape {v.shape}")
    quiet = params.charge * drive + params.decay * v
    post_spike = params.refractory_charge * drive
    v_new = (1.0 - s) * quiet + s * post_spike
    s_new = (v_new >= params.v0).astype(np.float64)
    return LayerState(v_new, s_new)


def step_simplified(state: LayerState, drive: np.ndarray, params: NeuronParams) -> LayerState:
    """One step of the simplified recurrence (refractory correction dropped).

    v' = (1-decay)*drive + (1-s)*decay*v.  With the memory term removed this
    is the classic McCulloch-Pitts unit; with it, a leaky recurrent one.
    """
    v, s = state.v, state.s
    drive = np.asarray(drive, dtype=np.float64)
    if drive.shape != v.shape:
        raise ValueError(f"drive shape {drive.shape} != state shape {v.shape}")
    v_new = params.charge * drive + (1.0 - s) * params.decay * v
    s_new = (v_new >= params.v0).astype(np.float64)
    return LayerState(v_new, s_new)


def gather_drive(history: SpikeRaster, synapses: SynapseBundle, n: int) -> np.ndarray:
    """Synaptic drive at step n: v_ext + sum_j w_ji * s_j(n - n_ji).

    Steps before the start of the history contribute nothing (silent
    pre-history).  With the bin width pinned to tau_r, the w/tau_r divisor
    is unity and weights enter the drive directly.
    """
    if history.n_neurons != synapses.n_pre:
        raise ValueError(
            f"history has {history.n_neurons} neurons, bundle expects {synapses.n_pre}"
        )
    drive = synapses.v_ext.copy()
    for d in np.unique(synapses.delays):
        m = n - int(d)
        if m < 0:
            continue
        masked = np.where(synapses.delays == d, synapses.weights, 0.0)
        drive += history.as_float()[m] @ masked
    return drive


def surrogate_activation(v: np.ndarray, params: NeuronParams) -> np.ndarray:
    """Differentiable stand-in for the Heaviside: sigma(beta * (v - v0))."""
    return expit(params.beta * (np.asarray(v, dtype=np.float64) - params.v0))


def bin_events(
    events: SpikeEventList, dt: float, steps: int, n_neurons: int
) -> SpikeRaster:
    """Bin an event list into a raster: bin n covers [n*dt, (n+1)*dt).

    Requires dt <= tau_r so the refractory period guarantees at most one
    spike per neuron per bin.  Events at or beyond steps*dt are dropped.
    """
    if dt > events.tau_r + 1e-12:
        raise ValueError(
            f"dt={dt} exceeds the refractory period {events.tau_r}; "
            "a bin could hold two spikes"
        )
    data = np.zeros((steps, n_neurons), dtype=np.uint8)
    for i, t in events.events:
        n = int(math.floor(t / dt))
        if 0 <= n < steps:
            data[n, i] = 1
    return SpikeRaster(data, dt=dt)


def raster_correlation(a: SpikeRaster, b: SpikeRaster) -> float:
    """Pearson correlation of per-neuron total spike counts.

    Returns NaN when either count vector is constant (correlation is
    undefined there, e.g. for an all-silent raster).
    """
    if a.n_neurons != b.n_neurons:
        raise ValueError(
            f"rasters cover different neuron counts: {a.n_neurons} vs {b.n_neurons}"
        )
    ca = a.counts().astype(np.float64)
    cb = b.counts().astype(np.float64)
    if np.ptp(ca) == 0.0 or np.ptp(cb) == 0.0:
        return float("nan")
    ca -= ca.mean()
    cb -= cb.mean()
    return float(np.dot(ca, cb) / math.sqrt(np.dot(ca, ca) * np.dot(cb, cb)))
