"""Event-driven exact integrator for the continuous LIF dynamics.

This is the asynchronous reference the synchronous state model is checked
against.  Between events the membrane potential follows the closed form

    v(t) = v_ext + (v(t0) - v_ext) * exp(-(t - t0)/tau_m)

and each arriving presynaptic spike adds w/tau_m instantaneously (the delta
drive in tau_m dv/dt = -v + w*delta + v_ext integrates to that jump).  A
neuron fires when v reaches 1, resets to 0 and is clamped there for one
refractory period, during which arriving input is discarded.  Supra-
threshold constant drive (v_ext > 1) fires through the analytic charging
curve, so a neuron with no synaptic input at all still spikes periodically.
"""

from __future__ import annotations

import heapq
import math

import numpy as np

from .neuron import TAU_R, NeuronParams, SpikeEventList, SynapseBundle

# Threshold of the reference model; spikes are normalized to v = 1.
FIRING_POTENTIAL = 1.0

_DELIVERY = 0
_CROSSING = 1


def reference_lif_run(
    synapses: SynapseBundle,
    external_events: SpikeEventList | None,
    params: NeuronParams,
    horizon: float,
    *,
    input_synapses: SynapseBundle | None = None,
) -> SpikeEventList:
    """Integrate a recurrently connected LIF population exactly.

    ``synapses`` is the square recurrent bundle of the population (delays in
    units of tau_r, >= 1 wherever a weight is nonzero).  External input
    spikes index the pre-side of ``input_synapses``, which routes them onto
    the population with weights and delays of its own.  Constant drive is
    the sum of both bundles' v_ext.  Returns all spikes emitted strictly
    before ``horizon``, time-sorted, ties broken by ascending neuron index.
    """
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    synapses.check_recurrent()
    n = synapses.n_post
    tau = params.tau_m
    v_ext = synapses.v_ext.copy()

    heap: list = []
    seq = 0

    def push(t, neuron, kind, payload):
        nonlocal seq
        heapq.heappush(heap, (t, neuron, kind, seq, payload))
        seq += 1

    if external_events is not None and len(external_events) > 0:
        if input_synapses is None:
            raise ValueError("external events given without an input bundle")
        v_ext += input_synapses.v_ext
        w_in = input_synapses.weights
        d_in = input_synapses.delays
        for ch, t in external_events.events:
            if t < 0:
                raise ValueError("event times must be non-negative")
            for i in np.flatnonzero(w_in[ch]):
                push(t + d_in[ch, i] * TAU_R, int(i), _DELIVERY, w_in[ch, i])
    elif input_synapses is not None:
        v_ext += input_synapses.v_ext

    v = np.zeros(n)
    t_last = np.zeros(n)
    refractory_until = np.zeros(n)
    serial = np.zeros(n, dtype=np.int64)
    fired: list = []

    def crossing_time(now, i):
        """Time at which v_ext charges neuron i from v[i] to threshold, or None."""
        if v_ext[i] <= FIRING_POTENTIAL:
            return None
        return now + tau * math.log(
            (v_ext[i] - v[i]) / (v_ext[i] - FIRING_POTENTIAL)
        )

    def advance(i, t):
        """Decay neuron i's potential from its last update time to t."""
        if t_last[i] < refractory_until[i]:
            v[i] = 0.0
            t_last[i] = refractory_until[i]
        if t > t_last[i]:
            v[i] = v_ext[i] + (v[i] - v_ext[i]) * math.exp(-(t - t_last[i]) / tau)
            t_last[i] = t

    def fire(i, t):
        fired.append((i, t))
        for j in np.flatnonzero(synapses.weights[i]):
            push(t + synapses.delays[i, j] * TAU_R, int(j), _DELIVERY,
                 synapses.weights[i, j])
        refractory_until[i] = t + TAU_R
        v[i] = 0.0
        t_last[i] = refractory_until[i]
        serial[i] += 1
        tc = crossing_time(refractory_until[i], i)
        if tc is not None:
            push(tc, i, _CROSSING, serial[i])

    # Neurons may charge to threshold before any event arrives.
    for i in range(n):
        tc = crossing_time(0.0, i)
        if tc is not None:
            push(tc, i, _CROSSING, serial[i])

    while heap:
        t, i, kind, _, payload = heapq.heappop(heap)
        if t >= horizon:
            break
        if kind == _CROSSING:
            if payload != serial[i]:
                continue  # invalidated by a later delivery or spike
            advance(i, t)
            v[i] = FIRING_POTENTIAL
            fire(i, t)
        else:
            if t < refractory_until[i]:
                continue  # input during the refractory period is discarded
            advance(i, t)
            v[i] += payload / tau
            if v[i] >= FIRING_POTENTIAL:
                fire(i, t)
            else:
                serial[i] += 1
                tc = crossing_time(t, i)
                if tc is not None:
                    push(tc, i, _CROSSING, serial[i])

    fired.sort(key=lambda e: (e[1], e[0]))
    return SpikeEventList(fired)
