"""Grid densities, mode/antimode detection and the lambda polarization index.

The index compares the average density at the modes of a univariate
density with the average density at its antimodes::

    lambda = log( mean_m f(mode_m) / mean_m f(antimode_m) )   if M > 1
    lambda = 0                                                otherwise

Densities are carried in log space as well as linear space.  Mixture
components that sit far apart drive the antimode densities below the
smallest representable double; the log representation keeps the index
finite and the extrema search free of artificial zero plateaus.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

__all__ = [
    "GridSpec",
    "GridDensity",
    "ExtremaReport",
    "LambdaPosterior",
    "mixture_density_on_grid",
    "find_extrema",
    "lambda_index",
    "posterior_grid_mean",
    "hpd_interval",
    "density_hpd_region",
    "summarize_lambda",
]

_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class GridSpec:
    lo: float = -12.0
    hi: float = 12.0
    step: float = 0.05

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError(f"grid needs lo < hi, got {self.lo}, {self.hi}")
        if not self.step > 0:
            raise ValueError(f"grid step must be positive, got {self.step}")

    @property
    def points(self) -> int:
        return int(round((self.hi - self.lo) / self.step)) + 1

    @property
    def x(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.points)

    @classmethod
    def parse(cls, text: str) -> "GridSpec":
        """Parse ``"lo:hi:step"``."""
        try:
            lo, hi, step = (float(t) for t in text.split(":"))
        except ValueError:
            raise ValueError(f"grid must look like lo:hi:step, got {text!r}") from None
        return cls(lo, hi, step)

    def __str__(self) -> str:
        return f"{self.lo:g}:{self.hi:g}:{self.step:g}"


@dataclass
class GridDensity:
    grid: GridSpec
    log_values: np.ndarray

    def __post_init__(self):
        self.log_values = np.asarray(self.log_values, dtype=float)
        if self.log_values.shape != (self.grid.points,):
            raise ValueError(f"expected {self.grid.points} grid values, got {self.log_values.shape}")
        if np.any(np.isnan(self.log_values)) or np.any(self.log_values == np.inf):
            raise ValueError("density values must be finite and non-negative")

    @property
    def values(self) -> np.ndarray:
        return np.exp(self.log_values)

    @classmethod
    def from_values(cls, grid: GridSpec, values) -> "GridDensity":
        values = np.asarray(values, dtype=float)
        if np.any(values < 0) or not np.all(np.isfinite(values)):
            raise ValueError("density values must be finite and non-negative")
        with np.errstate(divide="ignore"):
            return cls(grid, np.log(values))


def mixture_log_density(x, weights, mu, var) -> np.ndarray:
    """``log sum_r w_r N(x; mu_r, var_r)`` evaluated at each point of ``x``."""
    x = np.asarray(x, dtype=float)
    w = np.asarray(weights, dtype=float)
    mu = np.asarray(mu, dtype=float).reshape(-1)
    var = np.asarray(var, dtype=float).reshape(-1)
    keep = w > 0
    w, mu, var = w[keep], mu[keep], var[keep]
    d = x[:, None] - mu[None, :]
    comp = np.log(w) - 0.5 * (_LOG_2PI + np.log(var)) - 0.5 * d * d / var
    return logsumexp(comp, axis=1)


def mixture_density_on_grid(weights, mu, var, grid: GridSpec | None = None) -> GridDensity:
    """Evaluate a univariate normal mixture on the monitoring grid."""
    grid = grid or GridSpec()
    w = np.asarray(weights, dtype=float).reshape(-1)
    mu = np.asarray(mu, dtype=float).reshape(-1)
    var = np.asarray(var, dtype=float).reshape(-1)
    if not (w.shape == mu.shape == var.shape):
        raise ValueError("weights, mu and var must have the same length (univariate mixture)")
    if np.any(w < 0) or not np.all(np.isfinite(w)) or abs(w.sum() - 1.0) > 1e-9:
        raise ValueError("mixture weights must form a simplex")
    if np.any(var <= 0):
        raise ValueError("component variances must be positive")
    return GridDensity(grid, mixture_log_density(grid.x, w, mu, var))


@dataclass
class ExtremaReport:
    grid_x: np.ndarray = field(repr=False)
    mode_idx: np.ndarray
    antimode_idx: np.ndarray
    mode_log_density: np.ndarray
    antimode_log_density: np.ndarray

    @property
    def M(self) -> int:
        return int(self.mode_idx.size)

    @property
    def modes(self) -> list[tuple[float, float]]:
        return [(float(self.grid_x[i]), float(math.exp(v)))
                for i, v in zip(self.mode_idx, self.mode_log_density)]

    @property
    def antimodes(self) -> list[tuple[float, float]]:
        return [(float(self.grid_x[i]), float(math.exp(v)))
                for i, v in zip(self.antimode_idx, self.antimode_log_density)]


def _runs(f: np.ndarray):
    """Start/end (inclusive) indices of maximal runs of equal values."""
    change = np.nonzero(f[1:] != f[:-1])[0]
    starts = np.concatenate(([0], change + 1))
    ends = np.concatenate((change, [f.size - 1]))
    return starts, ends


def _antimode_between(f: np.ndarray, a: int, b: int) -> int:
    seg = f[a:b + 1]
    at_min = np.nonzero(seg == seg.min())[0]
    # first run of minimal values, reported at its centre
    stop = at_min[0]
    while stop + 1 < seg.size and seg[stop + 1] == seg[at_min[0]]:
        stop += 1
    return a + (at_min[0] + stop) // 2


def find_extrema(density: GridDensity, prominence: float = 1.0) -> ExtremaReport:
    """Interior modes and the antimodes between consecutive modes.

    A maximal run of equal values flanked on both sides by strictly smaller
    values is one mode located at the run's centre; runs touching either end
    of the grid never count.  With ``prominence > 1`` a mode whose density is
    not at least ``prominence`` times its higher neighbouring antimode is
    merged away, weakest first.
    """
    if not prominence >= 1.0:
        raise ValueError("prominence factor must be >= 1")
    f = density.log_values
    x = density.grid.x
    if f.size < 3:
        raise ValueError("need at least 3 grid points")
    starts, ends = _runs(f)
    vals = f[starts]
    modes = []
    for k in range(1, starts.size - 1):
        if vals[k - 1] < vals[k] > vals[k + 1]:
            modes.append((starts[k] + ends[k]) // 2)
    modes = list(modes)
    antis = [_antimode_between(f, modes[k], modes[k + 1]) for k in range(len(modes) - 1)]

    if prominence > 1.0:
        log_p = math.log(prominence)
        while len(modes) > 1:
            gaps = []
            for k, m in enumerate(modes):
                neigh = [f[antis[j]] for j in (k - 1, k) if 0 <= j < len(antis)]
                gaps.append(f[m] - max(neigh))
            k = int(np.argmin(gaps))
            if gaps[k] >= log_p:
                break
            del modes[k]
            antis = [_antimode_between(f, modes[j], modes[j + 1]) for j in range(len(modes) - 1)]

    mode_idx = np.asarray(modes, dtype=np.int64)
    anti_idx = np.asarray(antis, dtype=np.int64)
    return ExtremaReport(x, mode_idx, anti_idx, f[mode_idx], f[anti_idx])


def lambda_index(extrema: ExtremaReport) -> float:
    """Log ratio of mean mode density to mean antimode density; 0 if M <= 1.

    Returns ``inf`` when every antimode density is exactly zero.
    """
    M = extrema.M
    if M <= 1:
        return 0.0
    num = logsumexp(extrema.mode_log_density) - math.log(M)
    den = logsumexp(extrema.antimode_log_density) - math.log(M - 1)
    if den == -np.inf:
        return math.inf
    return float(num - den)


def density_lambda(density: GridDensity, prominence: float = 1.0) -> float:
    return lambda_index(find_extrema(density, prominence))


def posterior_grid_mean(per_iteration) -> GridDensity:
    """Pointwise mean of a sequence of grid densities on a common grid."""
    items = list(per_iteration)
    if not items:
        raise ValueError("need at least one density")
    grid = items[0].grid
    for d in items[1:]:
        if d.grid != grid:
            raise ValueError("grid mismatch between densities")
    logs = np.stack([d.log_values for d in items])
    return GridDensity(grid, logsumexp(logs, axis=0) - math.log(len(items)))


def hpd_interval(samples, mass: float = 0.95) -> tuple[float, float]:
    """Shortest interval holding ``ceil(mass * n)`` of the sorted samples."""
    if not 0.0 < mass < 1.0:
        raise ValueError("mass must lie in (0, 1)")
    s = np.sort(np.asarray(samples, dtype=float).reshape(-1))
    n = s.size
    if n < 20:
        raise ValueError(f"need at least 20 samples for an HPD interval, got {n}")
    k = max(1, math.ceil(mass * n - 1e-9))
    widths = s[k - 1:] - s[:n - k + 1]
    i = int(np.argmin(widths))
    return float(s[i]), float(s[i + k - 1])


def density_hpd_region(density: GridDensity, mass: float = 0.95) -> list[tuple[float, float, float]]:
    """Highest-density region of a grid density as disjoint intervals.

    Grid points are admitted from the highest density down until they hold
    ``mass`` of the total grid mass (Riemann sum).  Each contiguous run of
    admitted points becomes ``(lo, hi, peak)``, where ``peak`` is the grid
    location of the run's largest value.
    """
    if not 0.0 < mass < 1.0:
        raise ValueError("mass must lie in (0, 1)")
    f = density.log_values
    order = np.argsort(-f, kind="stable")
    w = np.exp(f[order] - f[order[0]])
    cum = np.cumsum(w) / w.sum()
    k = int(np.searchsorted(cum, mass - 1e-12)) + 1
    keep = np.zeros(f.size, dtype=bool)
    keep[order[:k]] = True
    x = density.grid.x
    edges = np.diff(np.concatenate(([0], keep.astype(np.int8), [0])))
    starts = np.nonzero(edges == 1)[0]
    ends = np.nonzero(edges == -1)[0] - 1
    out = []
    for a, b in zip(starts, ends):
        peak = a + int(np.argmax(f[a:b + 1]))
        out.append((float(x[a]), float(x[b]), float(x[peak])))
    return out


@dataclass
class LambdaPosterior:
    values: np.ndarray
    mean: float
    hpd: tuple[float, float] | None
    n_infinite: int
    mass: float = 0.95


def summarize_lambda(values, mass: float = 0.95) -> LambdaPosterior:
    """Posterior mean and HPD of per-iteration lambda values.

    Infinite values (antimode density underflow) are counted and left out of
    the summaries.
    """
    values = np.asarray(values, dtype=float)
    finite = values[np.isfinite(values)]
    mean = float(finite.mean()) if finite.size else math.nan
    hpd = hpd_interval(finite, mass) if finite.size >= 20 else None
    return LambdaPosterior(values, mean, hpd, int(values.size - finite.size), mass)
