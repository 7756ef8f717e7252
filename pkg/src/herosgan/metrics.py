"""Reconstruction, physical-plausibility, and noise metrics for acceleration signals.

* CSRE: RMS error between a reference and a reconstruction, in g.
* ZVRE: per-axis |integral of acceleration| over a rest-motion-rest episode, in m/s.
* Allan deviation with quantization-noise, velocity-random-walk, and
  bias-instability read-offs (IEEE-style conventions: QN at tau = sqrt(3) s,
  VRW at tau = 1 s, BI = min(adev) / 0.664).
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .signal import G, Signal, SignalError

BI_FACTOR = 0.664
SLOPE_TOL = 0.15
_FIT_POINTS = 5


def csre(ref: Signal, recon: Signal) -> float:
    if ref.samples.shape != recon.samples.shape:
        raise SignalError(f"shape mismatch: {ref.samples.shape} vs {recon.samples.shape}")
    if ref.dt != recon.dt:
        raise SignalError(f"dt mismatch: {ref.dt} vs {recon.dt}")
    diff = ref.samples - recon.samples
    return float(np.sqrt(np.mean(diff * diff)))


def zvre(s: Signal) -> np.ndarray:
    """Per-axis |trapezoid integral of a * 9.8| in m/s."""
    return np.abs(np.trapezoid(s.samples * G, dx=s.dt, axis=1))


@dataclass
class AllanReport:
    taus: np.ndarray
    adev: np.ndarray
    qn: float = 0.0
    vrw: float = 0.0
    bi: float = 0.0
    flags: dict[str, str] = field(default_factory=dict)
    fits: dict[str, dict] = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["taus"] = self.taus.tolist()
        d["adev"] = self.adev.tolist()
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def curve_csv(self) -> str:
        lines = ["tau,adev"]
        lines += [f"{t!r},{a!r}" for t, a in zip(self.taus.tolist(), self.adev.tolist())]
        return "\n".join(lines) + "\n"


def cluster_sizes(n: int, points: int = 30) -> np.ndarray:
    hi = max(n // 5, 1)
    return np.unique(np.logspace(0, math.log10(hi), points).astype(int))


def overlapping_avar(y: np.ndarray, m: int) -> float:
    """Overlapping Allan variance at cluster size ``m`` (in samples)."""
    n = y.size
    csum = np.concatenate(([0.0], np.cumsum(y)))
    means = (csum[m:] - csum[:-m]) / m  # all n - m + 1 overlapping cluster means
    d = means[m : m + n - 2 * m] - means[: n - 2 * m]
    return float(np.sum(d * d) / (2.0 * (n - 2 * m)))


def allan_deviation(s: Signal, axis: int = 0, points: int = 30) -> AllanReport:
    """Overlapping Allan deviation curve of one axis (coefficients left at zero)."""
    if len(s) < 2000:
        raise SignalError(f"allan analysis needs >= 2000 samples, got {len(s)}")
    y = s.samples[axis] - s.samples[axis].mean()
    ms = cluster_sizes(y.size, points)
    avar = np.array([overlapping_avar(y, int(m)) for m in ms])
    return AllanReport(taus=ms * s.dt, adev=np.sqrt(np.maximum(avar, 0.0)))


def loglog_slope(taus: np.ndarray, adev: np.ndarray) -> float:
    return float(np.polyfit(np.log10(taus), np.log10(adev), 1)[0])


def _best_segment(lt: np.ndarray, la: np.ndarray, nominal: float):
    """Window of consecutive points best described by a line of slope ``nominal``.

    Among windows whose free-fit slope is within tolerance, the one with the
    smallest fixed-slope residual wins; long-tau windows, where the estimate
    is noisy, lose to the well-averaged short-tau ones.  Returns
    ``(slice, slope)`` or None when no window qualifies.
    """
    best, best_rms = None, math.inf
    for i in range(lt.size - _FIT_POINTS + 1):
        sl = slice(i, i + _FIT_POINTS)
        slope = float(np.polyfit(lt[sl], la[sl], 1)[0])
        if abs(slope - nominal) > SLOPE_TOL:
            continue
        r = la[sl] - nominal * lt[sl]
        rms = float(np.sqrt(np.mean((r - r.mean()) ** 2)))
        if rms < best_rms:
            best, best_rms = (sl, slope), rms
    return best


def fit_noise_params(report: AllanReport) -> AllanReport:
    """Fill ``qn``, ``vrw``, ``bi`` from the curve; absent terms stay 0 and get a flag."""
    taus, adev = np.asarray(report.taus), np.asarray(report.adev)
    if taus.size < 10:
        raise SignalError(f"need >= 10 curve points, got {taus.size}")
    out = AllanReport(taus, adev)
    if not np.any(adev > 0):
        for name in ("qn", "vrw", "bi"):
            out.flags[name] = "zero curve"
        return out
    keep = adev > 0
    lt, la = np.log10(taus[keep]), np.log10(adev[keep])
    # (name, nominal slope, read-off tau)
    for name, nominal, tau_read in (("qn", -1.0, math.sqrt(3.0)), ("vrw", -0.5, 1.0)):
        seg = _best_segment(lt, la, nominal)
        if seg is None:
            out.flags[name] = "no segment within slope tolerance"
            continue
        sl, slope = seg
        # fixed-slope least squares: intercept is the mean offset
        intercept = float(np.mean(la[sl] - nominal * lt[sl]))
        setattr(out, name, 10 ** (intercept + nominal * math.log10(tau_read)))
        out.fits[name] = {
            "slope": slope,
            "tau_range": [float(10 ** lt[sl][0]), float(10 ** lt[sl][-1])],
            "residual_rms": float(np.sqrt(np.mean((la[sl] - intercept - nominal * lt[sl]) ** 2))),
        }
    seg = _best_segment(lt, la, 0.0)
    if seg is None:
        out.flags["bi"] = "no flat segment; read from curve minimum"
    else:
        out.fits["bi"] = {"slope": seg[1], "tau_range": [float(10 ** lt[seg[0]][0]), float(10 ** lt[seg[0]][-1])]}
    imin = int(np.argmin(adev[keep]))
    out.bi = float(adev[keep][imin] / BI_FACTOR)
    out.fits.setdefault("bi", {})["tau_min"] = float(taus[keep][imin])
    return out


def allan_analysis(s: Signal, axis: int = 0, points: int = 30) -> AllanReport:
    return fit_noise_params(allan_deviation(s, axis, points))
