"""Input encodings: four ways to turn an intensity vector into network drive.

All encoders take a vector x in [0, 1]^N (images are normalized by 255
upstream).  Three of them emit spike rasters over a T-step window; the
fourth passes scaled intensities through as constant analog drive.

  single-delay        one spike per active input, earlier for brighter pixels
  train-delay         the single spike followed by a periodic train with the
                      same delay as its period
  probabilistic-rate  each bin spikes independently with probability x_i
  constant            analog drive x_i * gain fed to the network every step

The delay mapping is d = floor((1 - x) * (T - 1)): intensity 1 fires at the
common epoch, intensity -> 0 drifts to the end of the window, exactly 0
never fires.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .neuron import SpikeRaster

VARIANTS = ("single-delay", "train-delay", "probabilistic-rate", "constant")


@dataclass
class EncoderSpec:
    variant: str
    steps: int = 8
    seed: int = 0
    gain: float = 1.0  # used by the constant encoder only

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown encoder variant {self.variant!r}")
        if self.steps < 1:
            raise ValueError("window length must be >= 1")

    def make_rng(self) -> np.random.Generator:
        return np.random.default_rng(self.seed)


def preset(name: str, **overrides) -> EncoderSpec:
    """Named encoder presets; 'train8'/'train24' match the benchmark legends."""
    table = {
        "single8": EncoderSpec("single-delay", 8),
        "single24": EncoderSpec("single-delay", 24),
        "train8": EncoderSpec("train-delay", 8),
        "train24": EncoderSpec("train-delay", 24),
        "prob8": EncoderSpec("probabilistic-rate", 8),
        "prob24": EncoderSpec("probabilistic-rate", 24),
        "const": EncoderSpec("constant", 8),
    }
    if name not in table:
        raise ValueError(f"unknown preset {name!r} (have {sorted(table)})")
    spec = table[name]
    for k, v in overrides.items():
        setattr(spec, k, v)
    return spec


def _check_unit_interval(x: np.ndarray):
    if x.size and (x.min() < 0.0 or x.max() > 1.0):
        raise ValueError("inputs must lie in [0, 1]")


def _delays(x: np.ndarray, steps: int) -> np.ndarray:
    return np.floor((1.0 - x) * (steps - 1)).astype(np.int64)


def encode_single_delay(x: np.ndarray, spec: EncoderSpec) -> SpikeRaster:
    """One spike per nonzero input at step floor((1-x)*(T-1))."""
    x = np.asarray(x, dtype=np.float64)
    _check_unit_interval(x)
    data = np.zeros((spec.steps, x.size), dtype=np.uint8)
    active = np.flatnonzero(x > 0.0)
    data[_delays(x[active], spec.steps), active] = 1
    return SpikeRaster(data)


def encode_train_delay(x: np.ndarray, spec: EncoderSpec) -> SpikeRaster:
    """Periodic train at multiples of the delay, clamped to period >= 1."""
    x = np.asarray(x, dtype=np.float64)
    _check_unit_interval(x)
    data = np.zeros((spec.steps, x.size), dtype=np.uint8)
    active = np.flatnonzero(x > 0.0)
    d = np.maximum(1, _delays(x[active], spec.steps))
    for k in range(1, spec.steps + 1):
        step = k * d
        inside = step < spec.steps
        data[step[inside], active[inside]] = 1
        if not inside.any():
            break
    return SpikeRaster(data)


def encode_prob_rate(
    x: np.ndarray, spec: EncoderSpec, rng: np.random.Generator
) -> SpikeRaster:
    """Independent Bernoulli(x_i) spike per bin; deterministic under a fixed rng."""
    x = np.asarray(x, dtype=np.float64)
    _check_unit_interval(x)
    data = (rng.random((spec.steps, x.size)) < x).astype(np.uint8)
    return SpikeRaster(data)


def encode_constant(x: np.ndarray, spec: EncoderSpec) -> np.ndarray:
    """Constant analog drive: the intensities scaled by the configured gain."""
    x = np.asarray(x, dtype=np.float64)
    _check_unit_interval(x)
    return spec.gain * x


def encode(x: np.ndarray, spec: EncoderSpec, rng: np.random.Generator | None = None):
    """Dispatch on the spec's variant; rasters for spiking variants, a drive
    vector for the constant one."""
    if spec.variant == "single-delay":
        return encode_single_delay(x, spec)
    if spec.variant == "train-delay":
        return encode_train_delay(x, spec)
    if spec.variant == "probabilistic-rate":
        if rng is None:
            raise ValueError("probabilistic-rate encoding needs an rng")
        return encode_prob_rate(x, spec, rng)
    return encode_constant(x, spec)


def encode_batch(
    xs: np.ndarray, spec: EncoderSpec, rng: np.random.Generator | None = None
) -> np.ndarray:
    """Encode a (B, N) batch into a (T, B, N) float array of network input.

    Spiking variants produce binary activity; the constant variant tiles the
    scaled intensities across all T steps.  This is the layout the batched
    network runner consumes.
    """
    xs = np.asarray(xs, dtype=np.float64)
    _check_unit_interval(xs)
    b, n = xs.shape
    t = spec.steps
    if spec.variant == "probabilistic-rate":
        return (rng.random((t, b, n)) < xs[None, :, :]).astype(np.float64)
    if spec.variant == "constant":
        return np.broadcast_to(spec.gain * xs, (t, b, n)).copy()
    out = np.zeros((t, b, n), dtype=np.float64)
    rows, cols = np.nonzero(xs > 0.0)
    d = _delays(xs[rows, cols], t)
    if spec.variant == "single-delay":
        out[d, rows, cols] = 1.0
        return out
    d = np.maximum(1, d)
    for k in range(1, t + 1):
        step = k * d
        inside = step < t
        if not inside.any():
            break
        out[step[inside], rows[inside], cols[inside]] = 1.0
    return out
