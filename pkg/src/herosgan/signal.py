"""Acceleration signals: representation, CSV I/O, synthesis, degradation, framing.

All values are in g (1 g = 9.8 m/s^2).  Random draws go through
``numpy.random.Generator(PCG64(seed))`` so results are reproducible across
platforms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

G = 9.8


class SignalError(ValueError):
    """Invalid signal, spec, or noise model."""


class ParseError(ValueError):
    """Malformed signal CSV.  ``line`` is 1-based, or None for whole-file problems."""

    def __init__(self, path, line: int | None, msg: str):
        self.path = str(path)
        self.line = line
        where = f"{path}:{line}" if line is not None else str(path)
        super().__init__(f"{where}: {msg}")


def rng_for(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


@dataclass(frozen=True)
class Signal:
    """Uniformly sampled multi-axis acceleration, shape ``(axes, n)``."""

    samples: np.ndarray
    dt: float
    label: str = ""

    def __post_init__(self):
        arr = np.array(self.samples, dtype=np.float64)
        if arr.ndim == 1:
            arr = arr[None, :]
        if arr.ndim != 2 or not 1 <= arr.shape[0] <= 3:
            raise SignalError(f"samples must have 1-3 axes, got shape {arr.shape}")
        if arr.shape[1] < 2:
            raise SignalError("signal needs at least 2 samples per axis")
        if not np.all(np.isfinite(arr)):
            raise SignalError("signal contains non-finite samples")
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise SignalError(f"dt must be positive, got {self.dt}")
        arr.setflags(write=False)
        object.__setattr__(self, "samples", arr)
        object.__setattr__(self, "dt", float(self.dt))

    @property
    def axes(self) -> int:
        return self.samples.shape[0]

    def __len__(self) -> int:
        return self.samples.shape[1]

    @property
    def duration(self) -> float:
        return (len(self) - 1) * self.dt

    def with_samples(self, samples, label: str | None = None) -> "Signal":
        return Signal(samples, self.dt, self.label if label is None else label)


@dataclass(frozen=True)
class NoiseModel:
    white_sigma: float = 0.0
    bias_rw_sigma: float = 0.0
    quant_step: float = 0.0
    clip_level: float = math.inf

    def __post_init__(self):
        for name in ("white_sigma", "bias_rw_sigma", "quant_step"):
            v = getattr(self, name)
            if not (v >= 0 and math.isfinite(v)):
                raise SignalError(f"{name} must be finite and >= 0, got {v}")
        if not self.clip_level > 0:
            raise SignalError(f"clip_level must be > 0, got {self.clip_level}")


@dataclass(frozen=True)
class MotionSpec:
    rest_s: float = 1.0
    shake_s: float = 2.0
    peak_g: float = 12.0
    n_bursts: int = 3
    seed: int = 0

    def __post_init__(self):
        if not self.rest_s >= 1.0:
            raise SignalError(f"rest_s must be >= 1.0, got {self.rest_s}")
        if not self.shake_s > 0:
            raise SignalError(f"shake_s must be > 0, got {self.shake_s}")
        if not self.peak_g > 0:
            raise SignalError(f"peak_g must be > 0, got {self.peak_g}")
        if int(self.n_bursts) != self.n_bursts or self.n_bursts < 1:
            raise SignalError(f"n_bursts must be an integer >= 1, got {self.n_bursts}")


def _burst(n: int, dt: float, rng: np.random.Generator) -> np.ndarray:
    """One Hann-windowed sinusoid with its discrete mean removed.

    The Hann taper is zero at both ends, so subtracting a multiple of it keeps
    the burst continuous while forcing its sample sum (and hence its
    trapezoid integral) to zero.
    """
    t = np.arange(n) * dt
    freq = rng.uniform(2.0, 6.0)
    phase = rng.uniform(0.0, 2.0 * math.pi)
    taper = np.hanning(n)
    b = taper * np.sin(2.0 * math.pi * freq * t + phase)
    b -= taper * (b.sum() / taper.sum())
    return b


def synth_motion(spec: MotionSpec, axes: int = 3, dt: float = 0.005) -> Signal:
    """Rest, shake, rest episode whose integral over the full duration is zero."""
    if not isinstance(spec, MotionSpec):
        raise SignalError("spec must be a MotionSpec")
    if not dt > 0:
        raise SignalError(f"dt must be > 0, got {dt}")
    if not 1 <= axes <= 3:
        raise SignalError(f"axes must be 1-3, got {axes}")
    rng = rng_for(spec.seed)
    n_rest = int(round(spec.rest_s / dt))
    n_shake = int(round(spec.shake_s / dt))
    if n_shake < 3 * spec.n_bursts:
        raise SignalError("shake_s too short for the requested number of bursts")
    bounds = np.linspace(0, n_shake, spec.n_bursts + 1).round().astype(int)
    out = np.zeros((axes, 2 * n_rest + n_shake))
    for a in range(axes):
        shake = np.zeros(n_shake)
        for lo, hi in zip(bounds[:-1], bounds[1:]):
            shake[lo:hi] += rng.uniform(0.5, 1.0) * _burst(hi - lo, dt, rng)
        shake *= spec.peak_g / np.abs(shake).max()
        shake -= shake.mean()  # removes last-ulp drift from the rescale
        out[a, n_rest : n_rest + n_shake] = shake
    return Signal(out, dt, label=f"synth seed={spec.seed}")


def clip(s: Signal, tau: float) -> Signal:
    if not tau > 0:
        raise SignalError(f"clip level must be > 0, got {tau}")
    return s.with_samples(np.clip(s.samples, -tau, tau))


def quantize(x: np.ndarray, step: float) -> np.ndarray:
    """Round to the nearest multiple of ``step``, ties away from zero."""
    if step <= 0:
        return x
    q = x / step
    return np.sign(q) * np.floor(np.abs(q) + 0.5) * step


def degrade(s: Signal, nm: NoiseModel, seed: int = 0) -> Signal:
    """Simulate a low-cost sensor reading of ``s``."""
    rng = rng_for(seed)
    x = s.samples
    shape = x.shape
    if nm.white_sigma > 0:
        x = x + rng.normal(0.0, nm.white_sigma, shape)
    if nm.bias_rw_sigma > 0:
        x = x + np.cumsum(rng.normal(0.0, nm.bias_rw_sigma, shape), axis=1)
    if math.isfinite(nm.clip_level):
        x = np.clip(x, -nm.clip_level, nm.clip_level)
    x = quantize(x, nm.quant_step)
    return s.with_samples(x, label=f"{s.label} degraded".strip())


def save_csv(s: Signal, path) -> None:
    path = Path(path)
    lines = [f"# dt={s.dt!r}", f"# axes={s.axes}"]
    if s.label:
        lines.append(f"# label={s.label}")
    lines.extend(",".join(repr(float(v)) for v in row) for row in s.samples.T)
    path.write_text("\n".join(lines) + "\n")


def load_csv(path) -> Signal:
    path = Path(path)
    header: dict[str, str] = {}
    rows: list[list[float]] = []
    with path.open() as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                key, sep, value = line[1:].strip().partition("=")
                if not sep:
                    raise ParseError(path, lineno, f"malformed header line {line!r}")
                header[key.strip()] = value.strip()
                continue
            try:
                vals = [float(v) for v in line.split(",")]
            except ValueError:
                raise ParseError(path, lineno, f"non-numeric value in {line!r}") from None
            if not all(math.isfinite(v) for v in vals):
                raise ParseError(path, lineno, "non-finite sample")
            if rows and len(vals) != len(rows[0]):
                raise ParseError(path, lineno, f"expected {len(rows[0])} columns, got {len(vals)}")
            rows.append(vals)
    for key in ("dt", "axes"):
        if key not in header:
            raise ParseError(path, None, f"missing '{key}' header")
    try:
        dt = float(header["dt"])
        axes = int(header["axes"])
    except ValueError:
        raise ParseError(path, None, "unparseable dt/axes header") from None
    if not rows:
        raise ParseError(path, None, "no samples")
    if len(rows[0]) != axes:
        raise ParseError(path, None, f"header says {axes} axes, rows have {len(rows[0])}")
    try:
        return Signal(np.array(rows).T, dt, header.get("label", path.stem))
    except SignalError as exc:
        raise ParseError(path, None, str(exc)) from None


def frame_starts(n: int, length: int, stride: int) -> np.ndarray:
    if not 0 < length <= n:
        raise SignalError(f"window length must be in (0, {n}], got {length}")
    if stride < 1:
        raise SignalError(f"stride must be >= 1, got {stride}")
    return np.arange((n - length) // stride + 1) * stride


def window(x, length: int, stride: int) -> np.ndarray:
    """Contiguous frames of a 1-D array (or of each axis of a Signal).

    Returns shape ``(n_frames, length)`` for 1-D input and
    ``(axes, n_frames, length)`` for a Signal.
    """
    data = x.samples if isinstance(x, Signal) else np.asarray(x, dtype=np.float64)
    starts = frame_starts(data.shape[-1], length, stride)
    idx = starts[:, None] + np.arange(length)[None, :]
    return data[..., idx]


def overlap_add(frames: np.ndarray, starts, n: int, weights=None) -> np.ndarray:
    """Weighted-average overlap-add of 1-D frames back onto ``n`` samples.

    Samples not covered by any frame are returned as 0.
    """
    frames = np.asarray(frames, dtype=np.float64)
    length = frames.shape[-1]
    w = np.ones(length) if weights is None else np.asarray(weights, dtype=np.float64)
    acc = np.zeros(n)
    wsum = np.zeros(n)
    for start, fr in zip(starts, frames):
        acc[start : start + length] += w * fr
        wsum[start : start + length] += w
    out = np.zeros(n)
    covered = wsum > 0
    out[covered] = acc[covered] / wsum[covered]
    return out


__all__ = [
    "G",
    "MotionSpec",
    "NoiseModel",
    "ParseError",
    "Signal",
    "SignalError",
    "clip",
    "degrade",
    "frame_starts",
    "load_csv",
    "overlap_add",
    "quantize",
    "rng_for",
    "save_csv",
    "synth_motion",
    "window",
]
