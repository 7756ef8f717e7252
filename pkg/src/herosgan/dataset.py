"""Synthetic paired datasets: clean ``high/`` episodes and degraded ``low/`` copies."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, replace
from pathlib import Path

from .signal import MotionSpec, NoiseModel, degrade, load_csv, save_csv, synth_motion


@dataclass
class GenerateConfig:
    n_episodes: int = 40
    seed: int = 1
    axes: int = 3
    dt: float = 0.005

    def __post_init__(self):
        if self.n_episodes < 1:
            raise ValueError("n_episodes must be >= 1")


def episode_name(i: int) -> str:
    return f"ep{i:04d}.csv"


def generate_dataset(
    out_dir,
    gen: GenerateConfig,
    motion: MotionSpec,
    noise: NoiseModel,
    provenance: dict | None = None,
) -> dict:
    """Write ``high/``, ``low/`` and ``manifest.json`` under ``out_dir``; return the manifest.

    Episode ``i`` uses motion seed ``gen.seed * 100003 + i`` and the next odd
    seed for its noise, so any single episode can be regenerated alone.
    """
    out = Path(out_dir)
    (out / "high").mkdir(parents=True, exist_ok=True)
    (out / "low").mkdir(parents=True, exist_ok=True)
    entries = []
    for i in range(gen.n_episodes):
        mseed = gen.seed * 100003 + i
        nseed = 2 * mseed + 1
        spec = replace(motion, seed=mseed)
        clean = synth_motion(spec, axes=gen.axes, dt=gen.dt)
        noisy = degrade(clean, noise, seed=nseed)
        name = episode_name(i)
        save_csv(clean, out / "high" / name)
        save_csv(noisy, out / "low" / name)
        entries.append({"file": name, "motion": asdict(spec), "noise_seed": nseed})
    manifest = {
        "generate": asdict(gen),
        "noise": {k: (v if v != float("inf") else "inf") for k, v in asdict(noise).items()},
        "episodes": entries,
    }
    if provenance is not None:
        manifest["provenance"] = provenance
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def load_pairs(ref_dir, recon_dir):
    """Matched (name, ref, recon) triples; raises ValueError listing unmatched files."""
    ref_dir, recon_dir = Path(ref_dir), Path(recon_dir)
    a = {p.name for p in ref_dir.glob("*.csv")}
    b = {p.name for p in recon_dir.glob("*.csv")}
    if a != b:
        missing = sorted(a ^ b)
        raise ValueError(f"unmatched files between {ref_dir} and {recon_dir}: {', '.join(missing)}")
    if not a:
        raise ValueError(f"no .csv files in {ref_dir}")
    return [(n, load_csv(ref_dir / n), load_csv(recon_dir / n)) for n in sorted(a)]
