"""CycleGAN training with optimal-transport supervision and Laplace-energy regularization.

One iteration = generator step followed by discriminator step, both Adam.
Losses are least-squares GAN, L1 cycle and identity terms, plus the two
feature-layer terms that the ``ots_on`` / ``mle_on`` switches control.
"""

from __future__ import annotations

import json
import logging
import math
import warnings
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .autodiff import Node, absolute, backward, concat
from .mle import laplace_energy, mle_loss, row_kappas
from .nets import (
    ArchConfig,
    ModelParams,
    discriminator_graph,
    generator_graph,
    init_params,
    load_checkpoint,
    save_checkpoint,
)
from .ot import SinkhornWarning, TransportPlan, cost_matrix, ots_loss, sinkhorn
from .signal import Signal, SignalError, frame_starts, load_csv, rng_for

log = logging.getLogger(__name__)


class ConfigError(ValueError):
    pass


class DataError(RuntimeError):
    pass


class NumericFailure(RuntimeError):
    pass


@dataclass
class TrainConfig:
    window: int = 256
    batch: int = 8
    steps: int = 2500
    lr_g: float = 1e-3
    lr_d: float = 5e-4
    beta1: float = 0.5
    beta2: float = 0.999
    decay_start: float = 0.5
    lambda_adv: float = 1.0
    lambda_cyc: float = 10.0
    lambda_id: float = 5.0
    lambda_ots: float = 1.0
    lambda_mle: float = 0.1
    ots_on: bool = True
    mle_on: bool = True
    l1_substitute_on: bool = False
    seed: int = 0
    ot_eps: float = 0.05
    ot_tol: float = 1e-6
    ot_max_iter: int = 500
    mle_energy_prescale: list[float] | None = None
    channels: int = 16
    mid_kernel: int = 5
    disc_channels: int = 16
    low_dir: str = "data/low"
    high_dir: str = "data/high"
    checkpoint: str = "run/model.ckpt"
    report: str | None = None
    checkpoint_every: int = 500

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        for name in ("lambda_adv", "lambda_cyc", "lambda_id", "lambda_ots", "lambda_mle"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        if self.ots_on and self.l1_substitute_on:
            raise ConfigError("ots_on and l1_substitute_on are mutually exclusive")
        if self.batch < 1 or self.steps < 0 or self.checkpoint_every < 1:
            raise ConfigError("batch >= 1, steps >= 0 and checkpoint_every >= 1 required")
        if not (self.lr_g > 0 and self.lr_d > 0):
            raise ConfigError("learning rates must be > 0")
        if not 0.0 <= self.decay_start <= 1.0:
            raise ConfigError("decay_start must lie in [0, 1]")
        if self.mle_energy_prescale is not None and len(self.mle_energy_prescale) != 2:
            raise ConfigError("mle_energy_prescale must be [scale, shift]")
        try:
            self.arch
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    @property
    def arch(self) -> ArchConfig:
        return ArchConfig(self.window, self.channels, self.mid_kernel, self.disc_channels)

    @property
    def prescale(self):
        return None if self.mle_energy_prescale is None else tuple(self.mle_energy_prescale)


@dataclass
class StepReport:
    step: int
    losses: dict[str, float]
    d_real: float
    d_fake: float
    sinkhorn_residual: float
    laplace_energy: float

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


@dataclass
class Frozen:
    """Per-step constants (transport plan, kurtosis weights) reused across evaluations.

    The loss treats both as constants; freezing them lets finite differences
    probe exactly the function that backward differentiates.
    """

    plan: TransportPlan | None = None
    kappas: np.ndarray | None = None
    targets: tuple[np.ndarray, np.ndarray] | None = None


def _flat_rows(feats: Node) -> Node:
    B, N, d = feats.shape
    return feats.reshape(B * N, d)


def _plan_rows(F: np.ndarray) -> np.ndarray:
    """Copy of ``F`` whose all-zero rows point along the diagonal instead.

    A frame of exact rest can silence a whole feature row; the cost kernel
    is undefined for it, so it is given a fixed direction for the solve.
    """
    norms = np.linalg.norm(F, axis=1)
    silent = norms < 1e-12
    if not silent.any():
        return F
    F = F.copy()
    F[silent] = 1.0
    return F


def _l1(a: Node, b) -> Node:
    return absolute(a - b).mean()


def _sq(a: Node, b=1.0) -> Node:
    diff = a - b
    return (diff * diff).mean()


def total_generator_loss(
    batch_l: np.ndarray,
    batch_h: np.ndarray,
    params: ModelParams,
    cfg: TrainConfig,
    weights: dict | None = None,
    frozen: Frozen | None = None,
) -> tuple[Node, dict]:
    """Weighted generator objective and its per-term breakdown.

    ``weights`` maps generator names to bound :class:`NetWeights`; pass it to
    get gradients on those nodes.  Discriminators are evaluated as constants.
    """
    if batch_l.shape != batch_h.shape:
        raise ValueError(f"batches differ in shape: {batch_l.shape} vs {batch_h.shape}")
    weights = weights or {n: params.bind(n) for n in ("gen_l", "gen_h")}
    g_l, g_h = weights["gen_l"], weights["gen_h"]
    d_h = params.bind("disc_h", requires_grad=False)
    d_l = params.bind("disc_l", requires_grad=False)
    x_l = Node(batch_l, requires_grad=False)
    x_h = Node(batch_h, requires_grad=False)

    fake_h, f_gl = generator_graph(g_l, x_l)
    fake_l, f_gh = generator_graph(g_h, x_h)
    rec_l, _ = generator_graph(g_h, fake_h)
    rec_h, _ = generator_graph(g_l, fake_l)
    id_h, _ = generator_graph(g_l, x_h)
    id_l, _ = generator_graph(g_h, x_l)

    terms: dict[str, Node] = {}
    terms["adv"] = _sq(discriminator_graph(d_h, fake_h)) + _sq(discriminator_graph(d_l, fake_l))
    terms["cyc"] = _l1(rec_l, x_l) + _l1(rec_h, x_h)
    terms["idt"] = _l1(id_h, x_h) + _l1(id_l, x_l)

    rows_gl, rows_gh = _flat_rows(f_gl), _flat_rows(f_gh)
    # supervision targets are this step's features, held constant
    if frozen is not None and frozen.targets is not None:
        t_l, t_h = frozen.targets
    else:
        t_l, t_h = rows_gl.data.copy(), rows_gh.data.copy()
        if frozen is not None:
            frozen.targets = (t_l, t_h)
    residual = 0.0
    if cfg.ots_on:
        plan = frozen.plan if frozen is not None else None
        if plan is None:
            plan = sinkhorn(
                cost_matrix(_plan_rows(t_l), _plan_rows(t_h)),
                eps=cfg.ot_eps, max_iter=cfg.ot_max_iter, tol=cfg.ot_tol,
            )  # fmt: skip
        terms["ots"], plan = ots_loss(rows_gl, rows_gh, t_l, t_h, plan=plan)
        residual = plan.residual
        if frozen is not None:
            frozen.plan = plan
    elif cfg.l1_substitute_on:
        # plain row-for-row alignment, no transport plan
        dl = rows_gl - t_h
        terms["ots"] = (dl * dl).sum(axis=1).mean()

    all_rows = concat([rows_gl, rows_gh], axis=0)
    if cfg.mle_on:
        kappas = frozen.kappas if frozen is not None and frozen.kappas is not None else None
        if kappas is None:
            kappas = row_kappas(all_rows.data)
            if frozen is not None:
                frozen.kappas = kappas
        terms["mle"] = mle_loss(all_rows, kappa=kappas, prescale=cfg.prescale)

    lam = {
        "adv": cfg.lambda_adv,
        "cyc": cfg.lambda_cyc,
        "idt": cfg.lambda_id,
        "ots": cfg.lambda_ots,
        "mle": cfg.lambda_mle,
    }
    total = None
    for name, node in terms.items():
        part = node * lam[name]
        total = part if total is None else total + part
    info = {
        "terms": {k: float(v.data) for k, v in terms.items()},
        "fake_h": fake_h.data,
        "fake_l": fake_l.data,
        "sinkhorn_residual": residual,
        "laplace_energy": float(np.mean(laplace_energy(all_rows.data))),
    }
    for name in ("ots", "mle"):
        info["terms"].setdefault(name, 0.0)
    info["terms"]["total"] = float(total.data)
    return total, info


def discriminator_loss(
    batch_l: np.ndarray,
    batch_h: np.ndarray,
    params: ModelParams,
    fake_l: np.ndarray,
    fake_h: np.ndarray,
    weights: dict | None = None,
) -> tuple[Node, dict]:
    """Least-squares discriminator objective summed over both domains.

    Each domain contributes ``0.5 * mean[(D(real) - 1)^2 + D(fake)^2]``; the
    fakes are plain arrays, so nothing flows back into the generators.
    """
    weights = weights or {n: params.bind(n) for n in ("disc_h", "disc_l")}
    total = None
    reals, fakes = [], []
    for net, real, fake in (("disc_h", batch_h, fake_h), ("disc_l", batch_l, fake_l)):
        s_real = discriminator_graph(weights[net], Node(real, requires_grad=False))
        s_fake = discriminator_graph(weights[net], Node(fake, requires_grad=False))
        part = (_sq(s_real, 1.0) + _sq(s_fake, 0.0)) * 0.5
        total = part if total is None else total + part
        reals.append(s_real.data.mean())
        fakes.append(s_fake.data.mean())
    return total, {"d_real": float(np.mean(reals)), "d_fake": float(np.mean(fakes))}


class Adam:
    """Adam over one contiguous slice of the flat parameter vector."""

    def __init__(self, lo: int, hi: int, lr: float, beta1: float, beta2: float, eps: float = 1e-8):
        self.lo, self.hi = lo, hi
        self.lr, self.b1, self.b2, self.eps = lr, beta1, beta2, eps
        self.m = np.zeros(hi - lo)
        self.v = np.zeros(hi - lo)
        self.t = 0

    def step(self, flat: np.ndarray, grad: np.ndarray, lr_scale: float = 1.0) -> None:
        self.t += 1
        self.m = self.b1 * self.m + (1 - self.b1) * grad
        self.v = self.b2 * self.v + (1 - self.b2) * grad * grad
        m_hat = self.m / (1 - self.b1**self.t)
        v_hat = self.v / (1 - self.b2**self.t)
        flat[self.lo : self.hi] -= lr_scale * self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def _load_dir(path) -> list[Signal]:
    path = Path(path)
    if not path.is_dir():
        raise DataError(f"data directory not found: {path}")
    files = sorted(path.glob("*.csv"))
    if not files:
        raise DataError(f"no .csv signals in {path}")
    return [load_csv(f) for f in files]


class WindowSampler:
    """Draws random fixed-length frames from a pool of per-axis sequences."""

    def __init__(self, signals: list[Signal], window: int, scale: float):
        self.seqs = [
            row / scale for s in signals for row in s.samples if row.size >= window
        ]
        if not self.seqs:
            raise DataError(f"no signal axis is at least {window} samples long")
        self.window = window

    def draw(self, rng: np.random.Generator, n: int) -> np.ndarray:
        out = np.empty((n, self.window))
        for i in range(n):
            seq = self.seqs[rng.integers(len(self.seqs))]
            start = rng.integers(seq.size - self.window + 1)
            out[i] = seq[start : start + self.window]
        return out


def lr_factor(step: int, steps: int, decay_start: float) -> float:
    """Constant learning rate, then linear decay towards zero over the remaining steps."""
    n0 = int(round(decay_start * steps))
    if step <= n0:
        return 1.0
    return (steps - step + 1) / (steps - n0 + 1)


_IO_FIELDS = ("low_dir", "high_dir", "checkpoint", "report")


def _config_record(cfg: TrainConfig) -> dict:
    # hyperparameters only: a rerun into another directory writes identical bytes
    return {k: v for k, v in asdict(cfg).items() if k not in _IO_FIELDS}


def train(cfg: TrainConfig, report_stream=None) -> tuple[ModelParams, list[StepReport]]:
    """Run ``cfg.steps`` iterations and write the checkpoint; returns final params and reports.

    ``report_stream`` (a text file object) receives one JSON line per step;
    when omitted and ``cfg.report`` is set, that path is used.
    """
    cfg.validate()
    low = _load_dir(cfg.low_dir)
    high = _load_dir(cfg.high_dir)
    scale = float(max(np.abs(s.samples).max() for s in high))
    if not scale > 0:
        raise DataError("high-cost signals are identically zero")
    sampler_l = WindowSampler(low, cfg.window, scale)
    sampler_h = WindowSampler(high, cfg.window, scale)

    params = init_params(cfg.arch, cfg.seed)
    rng = rng_for(cfg.seed + 1)
    optim = {
        net: Adam(*params.net_range(net), lr, cfg.beta1, cfg.beta2)
        for net, lr in (
            ("gen_l", cfg.lr_g), ("gen_h", cfg.lr_g), ("disc_h", cfg.lr_d), ("disc_l", cfg.lr_d),
        )
    }  # fmt: skip
    ckpt = Path(cfg.checkpoint)
    ckpt.parent.mkdir(parents=True, exist_ok=True)
    extra = {"scale": scale, "train_config": _config_record(cfg)}

    own_stream = None
    if report_stream is None and cfg.report:
        Path(cfg.report).parent.mkdir(parents=True, exist_ok=True)
        own_stream = report_stream = open(cfg.report, "w")
    reports: list[StepReport] = []
    try:
        for step in range(1, cfg.steps + 1):
            x_l = sampler_l.draw(rng, cfg.batch)
            x_h = sampler_h.draw(rng, cfg.batch)

            g_weights = {n: params.bind(n) for n in ("gen_l", "gen_h")}
            with warnings.catch_warnings():
                # the residual is logged per step; an unconverged batch is not fatal
                warnings.simplefilter("ignore", SinkhornWarning)
                g_loss, info = total_generator_loss(x_l, x_h, params, cfg, weights=g_weights)
            backward(g_loss)

            d_weights = {n: params.bind(n) for n in ("disc_h", "disc_l")}
            d_loss, d_info = discriminator_loss(
                x_l, x_h, params, info["fake_l"], info["fake_h"], weights=d_weights
            )
            backward(d_loss)

            losses = dict(info["terms"])
            losses["disc"] = float(d_loss.data)
            if not all(math.isfinite(v) for v in losses.values()):
                bad = ckpt.with_suffix(".diverged.ckpt")
                save_checkpoint(bad, params, step - 1, extra)
                raise NumericFailure(f"non-finite loss at step {step}: {losses}; state saved to {bad}")

            f = lr_factor(step, cfg.steps, cfg.decay_start)
            for net, w in {**g_weights, **d_weights}.items():
                optim[net].step(params.flat, w.node.grad, f)

            rep = StepReport(
                step=step,
                losses=losses,
                d_real=d_info["d_real"],
                d_fake=d_info["d_fake"],
                sinkhorn_residual=info["sinkhorn_residual"],
                laplace_energy=info["laplace_energy"],
            )
            reports.append(rep)
            if report_stream is not None:
                report_stream.write(rep.to_json() + "\n")
            if step % cfg.checkpoint_every == 0 and step != cfg.steps:
                save_checkpoint(ckpt, params, step, extra)
            if step % 100 == 0:
                log.info("step %d %s", step, {k: round(v, 4) for k, v in losses.items()})
    finally:
        if own_stream is not None:
            own_stream.close()
    save_checkpoint(ckpt, params, cfg.steps, extra)
    return params, reports


def _hann(n: int) -> np.ndarray:
    # interior of an (n + 2)-point Hann window: strictly positive everywhere
    return np.hanning(n + 2)[1:-1]


def enhance(checkpoint, s: Signal, batch: int = 64) -> Signal:
    """Run the low-to-high generator over ``s`` with 50%-overlap Hann overlap-add."""
    if isinstance(checkpoint, ModelParams):
        params, scale = checkpoint, 1.0
    elif isinstance(checkpoint, tuple):
        params, scale = checkpoint
    else:
        params, header = load_checkpoint(checkpoint)
        scale = float(header.get("extra", {}).get("scale", 1.0))
    L = params.arch.window
    n = len(s)
    if n < L:
        raise SignalError(f"signal has {n} samples, fewer than the window length {L}")
    hop = L // 2
    starts = list(frame_starts(n, L, hop))
    tail = starts[-1] + L < n
    if tail:
        starts.append(starts[-1] + hop)
    weights = params.bind("gen_l", requires_grad=False)
    out = np.empty_like(s.samples)
    for a, row in enumerate(s.samples):
        x = row / scale
        frames = np.empty((len(starts), L))
        for i, st in enumerate(starts):
            seg = x[st : st + L]
            frames[i] = np.pad(seg, (0, L - seg.size), mode="edge") if seg.size < L else seg
        enhanced = np.concatenate(
            [
                generator_graph(weights, Node(frames[i : i + batch], requires_grad=False))[0].data
                for i in range(0, len(frames), batch)
            ]
        )
        acc = np.zeros(n)
        wsum = np.zeros(n)
        w = _hann(L)
        for st, fr in zip(starts, enhanced):
            m = min(L, n - st)
            acc[st : st + m] += w[:m] * fr[:m]
            wsum[st : st + m] += w[:m]
        out[a] = acc / wsum * scale
    return s.with_samples(out, label=f"{s.label} enhanced".strip())


__all__ = [
    "Adam",
    "ConfigError",
    "DataError",
    "Frozen",
    "NumericFailure",
    "StepReport",
    "TrainConfig",
    "WindowSampler",
    "discriminator_loss",
    "enhance",
    "total_generator_loss",
    "train",
]
