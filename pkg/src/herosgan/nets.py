"""1-D convolutional generators and discriminators over a single flat parameter store.

Four networks share one :class:`ModelParams`:

``gen_l``   low-cost -> high-cost generator (enhancement)
``gen_h``   high-cost -> low-cost generator
``disc_h``  scores frames as real high-cost signals
``disc_l``  scores frames as real low-cost signals

A generator is a strided conv encoder, a two-layer bottleneck whose
activations are the feature matrix (``channels`` vectors of length
``window // 4`` per frame), and a transposed-conv decoder added onto the input.
The last decoder layer starts at zero, so an untrained generator is the
identity.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .autodiff import Node, concat, conv1d, conv_transpose1d, leaky_relu
from .signal import rng_for

GENERATORS = ("gen_l", "gen_h")
DISCRIMINATORS = ("disc_h", "disc_l")
NETS = GENERATORS + DISCRIMINATORS

_MAGIC = b"HEROSCKP"


@dataclass(frozen=True)
class ArchConfig:
    window: int = 256
    channels: int = 16
    mid_kernel: int = 5
    disc_channels: int = 16

    def __post_init__(self):
        if self.window < 16 or self.window % 8:
            raise ValueError(f"window must be a multiple of 8 and >= 16, got {self.window}")
        if self.channels < 1 or self.disc_channels < 1:
            raise ValueError("channel counts must be >= 1")
        if self.mid_kernel < 1 or self.mid_kernel % 2 == 0:
            raise ValueError(f"mid_kernel must be odd, got {self.mid_kernel}")

    @property
    def feature_shape(self) -> tuple[int, int]:
        """(N, d) of the feature matrix produced for one frame."""
        return self.channels, self.window // 4


def _generator_layout(a: ArchConfig) -> list[tuple[str, tuple[int, ...]]]:
    c, k = a.channels, a.mid_kernel
    return [
        ("enc1.w", (c, 1, 4)), ("enc1.b", (c,)),
        ("enc2.w", (c, c, 4)), ("enc2.b", (c,)),
        ("mid1.w", (c, c, k)), ("mid1.b", (c,)),
        ("mid2.w", (c, c, k)), ("mid2.b", (c,)),
        ("dec1.w", (2 * c, c, 4)), ("dec1.b", (c,)),
        ("dec2.w", (2 * c, 1, 4)), ("dec2.b", (1,)),
    ]  # fmt: skip


def _discriminator_layout(a: ArchConfig) -> list[tuple[str, tuple[int, ...]]]:
    c = a.disc_channels
    return [
        ("conv1.w", (c, 1, 4)), ("conv1.b", (c,)),
        ("conv2.w", (2 * c, c, 4)), ("conv2.b", (2 * c,)),
        ("conv3.w", (2 * c, 2 * c, 4)), ("conv3.b", (2 * c,)),
        ("head.w", (2 * c, 1)), ("head.b", (1,)),
    ]  # fmt: skip


def layout(arch: ArchConfig) -> dict[str, tuple[int, tuple[int, ...]]]:
    """Name -> (offset, shape) for every tensor, nets laid out in NETS order."""
    views: dict[str, tuple[int, tuple[int, ...]]] = {}
    offset = 0
    for net in NETS:
        parts = _generator_layout(arch) if net.startswith("gen") else _discriminator_layout(arch)
        for name, shape in parts:
            views[f"{net}.{name}"] = (offset, shape)
            offset += int(np.prod(shape))
    return views


@dataclass
class ModelParams:
    flat: np.ndarray
    arch: ArchConfig
    seed: int
    views: dict[str, tuple[int, tuple[int, ...]]]

    def view(self, name: str) -> np.ndarray:
        off, shape = self.views[name]
        return self.flat[off : off + int(np.prod(shape))].reshape(shape)

    def net_range(self, net: str) -> tuple[int, int]:
        spans = [
            (off, off + int(np.prod(shape)))
            for name, (off, shape) in self.views.items()
            if name.startswith(net + ".")
        ]
        return min(s for s, _ in spans), max(e for _, e in spans)

    def bind(self, net: str, requires_grad: bool = True) -> "NetWeights":
        lo, hi = self.net_range(net)
        return NetWeights(net, Node(self.flat[lo:hi], requires_grad=requires_grad), lo, self.views)

    def copy(self) -> "ModelParams":
        return ModelParams(self.flat.copy(), self.arch, self.seed, dict(self.views))


class NetWeights:
    """Differentiable handle on one network's slice of the parameter store."""

    def __init__(self, net: str, node: Node, base: int, views):
        self.net = net
        self.node = node
        self._slices = {}
        for name, (off, shape) in views.items():
            if name.startswith(net + "."):
                lo = off - base
                self._slices[name[len(net) + 1 :]] = (lo, lo + int(np.prod(shape)), shape)

    def __getitem__(self, name: str) -> Node:
        lo, hi, shape = self._slices[name]
        return self.node[lo:hi].reshape(shape)


def init_params(arch: ArchConfig | None = None, seed: int = 0) -> ModelParams:
    """Scaled-normal weights, zero biases, zero final generator layer."""
    arch = arch or ArchConfig()
    views = layout(arch)
    total = sum(int(np.prod(s)) for _, s in views.values())
    flat = np.zeros(total)
    rng = rng_for(seed)
    for name, (off, shape) in views.items():
        size = int(np.prod(shape))
        if name.endswith(".b") or name.endswith("dec2.w"):
            continue
        if name.endswith("head.w"):
            fan_in = shape[0]
        elif "dec" in name:
            fan_in = shape[0] * shape[2] // 2  # stride 2 halves the taps seen per output
        else:
            fan_in = shape[1] * shape[2]
        flat[off : off + size] = rng.normal(0.0, 1.0 / np.sqrt(fan_in), size)
    return ModelParams(flat, arch, seed, views)


def _as_batch(frame, window: int) -> np.ndarray:
    x = np.asarray(getattr(frame, "data", frame), dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != window:
        raise ValueError(f"expected frames of length {window}, got shape {x.shape}")
    return x


def generator_graph(w: NetWeights, x: Node) -> tuple[Node, Node]:
    """x: (B, L) -> (output (B, L), features (B, N, d))."""
    B, L = x.shape
    h0 = x.reshape(B, 1, L)

    def bias(name):
        b = w[name]
        return b.reshape(1, b.shape[0], 1)

    e1 = leaky_relu(conv1d(h0, w["enc1.w"], stride=2, pad=1) + bias("enc1.b"))
    e2 = leaky_relu(conv1d(e1, w["enc2.w"], stride=2, pad=1) + bias("enc2.b"))
    k = w._slices["mid1.w"][2][2]
    m1 = leaky_relu(conv1d(e2, w["mid1.w"], pad=k // 2) + bias("mid1.b"))
    feats = leaky_relu(conv1d(m1, w["mid2.w"], pad=k // 2) + bias("mid2.b"))
    d1 = leaky_relu(
        conv_transpose1d(concat([feats, e2], axis=1), w["dec1.w"], stride=2, pad=1)
        + bias("dec1.b")
    )
    d2 = conv_transpose1d(concat([d1, e1], axis=1), w["dec2.w"], stride=2, pad=1) + bias("dec2.b")
    return x + d2.reshape(B, L), feats


def discriminator_graph(w: NetWeights, x: Node) -> Node:
    """x: (B, L) -> logits (B,)."""
    B, L = x.shape
    h = x.reshape(B, 1, L)
    for i in (1, 2, 3):
        b = w[f"conv{i}.b"]
        h = leaky_relu(conv1d(h, w[f"conv{i}.w"], stride=2, pad=1) + b.reshape(1, b.shape[0], 1))
    pooled = h.mean(axis=2)
    return (pooled @ w["head.w"]).reshape(B) + w["head.b"]


@dataclass
class GenOutput:
    output: np.ndarray
    features: np.ndarray  # (B, N, d), or (N, d) for a single frame


def generator_forward(p: ModelParams, frame, net: str = "gen_l") -> GenOutput:
    if net not in GENERATORS:
        raise ValueError(f"unknown generator {net!r}")
    x = _as_batch(frame, p.arch.window)
    out, feats = generator_graph(p.bind(net, requires_grad=False), Node(x, requires_grad=False))
    if np.ndim(frame) == 1:
        return GenOutput(out.data[0], feats.data[0])
    return GenOutput(out.data, feats.data)


def discriminator_forward(p: ModelParams, frame, net: str = "disc_h"):
    if net not in DISCRIMINATORS:
        raise ValueError(f"unknown discriminator {net!r}")
    x = _as_batch(frame, p.arch.window)
    score = discriminator_graph(p.bind(net, requires_grad=False), Node(x, requires_grad=False)).data
    return float(score[0]) if np.ndim(frame) == 1 else score


def save_checkpoint(path, p: ModelParams, step: int = 0, extra: dict | None = None) -> None:
    """Write ``HEROSCKP`` + u64 header length + JSON header + little-endian float64 block."""
    header = {
        "format": 1,
        "arch": asdict(p.arch),
        "seed": p.seed,
        "step": step,
        "n_params": int(p.flat.size),
        "extra": extra or {},
    }
    blob = json.dumps(header, sort_keys=True).encode()
    with Path(path).open("wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        fh.write(p.flat.astype("<f8").tobytes())


def load_checkpoint(path) -> tuple[ModelParams, dict]:
    raw = Path(path).read_bytes()
    if raw[:8] != _MAGIC:
        raise ValueError(f"{path}: not a checkpoint file")
    (hlen,) = struct.unpack("<Q", raw[8:16])
    header = json.loads(raw[16 : 16 + hlen].decode())
    flat = np.frombuffer(raw[16 + hlen :], dtype="<f8").astype(np.float64)
    arch = ArchConfig(**header["arch"])
    views = layout(arch)
    if flat.size != header["n_params"] or flat.size != sum(int(np.prod(s)) for _, s in views.values()):
        raise ValueError(f"{path}: parameter block size does not match architecture")
    return ModelParams(flat, arch, header["seed"], views), header
