"""Descriptive summaries, Wilson score intervals and Gaussian KDE curves."""

from __future__ import annotations

import math
from dataclasses import dataclass
from statistics import NormalDist

import numpy as np


@dataclass(frozen=True)
class Summary:
    mean: float
    sd: float
    median: float
    n: int
    n_censored: int

    def to_dict(self) -> dict:
        return {k: _clean(v) for k, v in self.__dict__.items()}


def _clean(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None
    return v


def descriptive_summary(values) -> Summary:
    """Mean, sample SD (n-1), median; ``None``/NaN entries count as censored."""
    values = list(values)
    observed = [float(v) for v in values if v is not None and not math.isnan(v)]
    censored = len(values) - len(observed)
    n = len(observed)
    if n == 0:
        return Summary(math.nan, math.nan, math.nan, 0, censored)
    arr = np.asarray(observed)
    sd = float(arr.std(ddof=1)) if n > 1 else math.nan
    return Summary(float(arr.mean()), sd, float(np.median(arr)), n, censored)


@dataclass(frozen=True)
class IntervalEstimate:
    k: int
    n: int
    level: float
    lo: float
    hi: float

    @property
    def proportion(self) -> float:
        return self.k / self.n

    def to_dict(self) -> dict:
        return {"k": self.k, "n": self.n, "level": self.level, "proportion": self.proportion,
                "lo": self.lo, "hi": self.hi}


def wilson_interval(k: int, n: int, level: float = 0.95) -> IntervalEstimate:
    if n < 1:
        raise ValueError("Wilson interval needs n >= 1")
    if not 0 <= k <= n:
        raise ValueError(f"k={k} outside 0..{n}")
    if not 0 < level < 1:
        raise ValueError("level must be in (0, 1)")
    z = NormalDist().inv_cdf(0.5 + level / 2)
    p = k / n
    z2n = z * z / n
    center = (p + z2n / 2) / (1 + z2n)
    half = z / (1 + z2n) * math.sqrt(p * (1 - p) / n + z2n / (4 * n))
    lo = 0.0 if k == 0 else max(0.0, min(p, center - half))
    hi = 1.0 if k == n else min(1.0, max(p, center + half))
    return IntervalEstimate(k, n, level, lo, hi)


def silverman_bandwidth(values) -> float:
    x = np.asarray(values, dtype=float)
    n = x.size
    sd = x.std(ddof=1)
    q75, q25 = np.percentile(x, [75, 25])
    spread = min(sd, (q75 - q25) / 1.34) if q75 > q25 else sd
    return float(0.9 * spread * n ** (-0.2))


def kde_curve(values, bandwidth: float | None = None, points: int = 256) -> list[tuple[float, float]]:
    """Gaussian KDE evaluated on ``points`` points spanning the data +- 3 bandwidths."""
    x = np.asarray([v for v in values if v is not None], dtype=float)
    x = x[np.isfinite(x)]
    if x.size < 2:
        raise ValueError("KDE needs at least two finite values")
    h = silverman_bandwidth(x) if bandwidth is None else float(bandwidth)
    if not h > 0:
        raise ValueError("bandwidth is zero; pass an explicit bandwidth for constant data")
    grid = np.linspace(x.min() - 3 * h, x.max() + 3 * h, points)
    u = (grid[:, None] - x[None, :]) / h
    dens = np.exp(-0.5 * u * u).sum(axis=1) / (x.size * h * math.sqrt(2 * math.pi))
    return list(zip(grid.tolist(), dens.tolist()))
