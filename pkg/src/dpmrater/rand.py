"""Seeded random variates used by the samplers.

Every draw goes through a :class:`numpy.random.Generator` backed by PCG64.
Functions accept scalars or broadcastable arrays and validate parameter
domains before touching the generator, so a bad call never advances the
stream.

Parametrisations: ``normal`` takes a *variance*, ``gamma`` a *rate*,
``inverse_gamma(a, b)`` has density proportional to ``x**(-a-1) exp(-b/x)``.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "make_rng",
    "spawn_rngs",
    "normal",
    "gamma",
    "log_gamma",
    "inverse_gamma",
    "beta",
    "exponential",
    "uniform",
    "draw_scalar",
    "draw_mvn_diag",
    "draw_categorical",
    "draw_categorical_rows",
]


def make_rng(seed: int) -> np.random.Generator:
    """Return a PCG64 generator for a 64-bit seed."""
    seed = int(seed)
    if seed < 0 or seed >= 2**64:
        raise ValueError(f"seed must be in [0, 2**64), got {seed}")
    return np.random.Generator(np.random.PCG64(seed))


def spawn_rngs(seed, n: int) -> list[np.random.Generator]:
    """Independent generators for ``n`` parallel chains derived from one seed.

    ``seed`` may be an int or a sequence of ints (e.g. ``[seed, scenario]``).
    """
    entropy = [int(s) for s in seed] if np.ndim(seed) else int(seed)
    children = np.random.SeedSequence(entropy).spawn(n)
    return [np.random.Generator(np.random.PCG64(s)) for s in children]


def _check(cond, msg: str, *args) -> None:
    # message formatted only on failure; arrays are slow to render
    if not np.all(cond):
        raise ValueError(msg.format(*args))


def _out(x):
    return float(x) if np.ndim(x) == 0 else x


def normal(rng, mean, var, size=None):
    """Normal draw with the given variance; ``var == 0`` is a point mass."""
    var = np.asarray(var, dtype=float)
    _check(np.isfinite(var) & (var >= 0), "normal variance must be >= 0, got {}", var)
    return _out(rng.normal(mean, np.sqrt(var), size=size))


def gamma(rng, shape, rate, size=None):
    shape = np.asarray(shape, dtype=float)
    rate = np.asarray(rate, dtype=float)
    _check(shape > 0, "gamma shape must be > 0, got {}", shape)
    _check(rate > 0, "gamma rate must be > 0, got {}", rate)
    return _out(rng.gamma(shape, 1.0 / rate, size=size))


def log_gamma(rng, shape, size=None):
    """Log of a unit-rate Gamma(shape) variate, accurate for tiny shapes.

    Uses ``G(a) = G(a + 1) * U**(1/a)`` so shapes like 0.001 do not underflow
    to an exact zero.
    """
    shape = np.asarray(shape, dtype=float)
    _check(shape > 0, "gamma shape must be > 0, got {}", shape)
    g = rng.standard_gamma(shape + 1.0, size=size)
    u = rng.random(size=np.shape(g))
    with np.errstate(divide="ignore"):
        return np.log(g) + np.log(u) / shape


def inverse_gamma(rng, shape, rate, size=None):
    """Inverse-gamma draw; may return ``inf`` for extremely small shapes."""
    shape = np.asarray(shape, dtype=float)
    rate = np.asarray(rate, dtype=float)
    _check(shape > 0, "inverse-gamma shape must be > 0, got {}", shape)
    _check(rate > 0, "inverse-gamma rate must be > 0, got {}", rate)
    lg = log_gamma(rng, shape, size=size)
    with np.errstate(over="ignore"):
        return _out(np.exp(np.log(rate) - lg))


def beta(rng, a, b, size=None):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    _check((a > 0) & (b > 0), "beta parameters must be > 0, got ({}, {})", a, b)
    return _out(rng.beta(a, b, size=size))


def exponential(rng, rate, size=None):
    rate = np.asarray(rate, dtype=float)
    _check(rate > 0, "exponential rate must be > 0, got {}", rate)
    return _out(rng.exponential(1.0 / rate, size=size))


def uniform(rng, lo, hi, size=None):
    _check(np.asarray(lo) < np.asarray(hi), "uniform needs lo < hi, got ({}, {})", lo, hi)
    return _out(rng.uniform(lo, hi, size=size))


_FAMILIES = {
    "normal": normal,
    "gamma": gamma,
    "inverse_gamma": inverse_gamma,
    "beta": beta,
    "exponential": exponential,
    "uniform": uniform,
}


def draw_scalar(rng, family: str, *params) -> float:
    """One draw from a named family, e.g. ``draw_scalar(rng, "beta", 1, 2)``."""
    try:
        fn = _FAMILIES[family]
    except KeyError:
        raise ValueError(f"unknown distribution {family!r}; expected one of {sorted(_FAMILIES)}") from None
    return float(fn(rng, *params))


def draw_mvn_diag(rng, mean, var_diag) -> np.ndarray:
    """Independent coordinate-wise normal draws."""
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    var_diag = np.atleast_1d(np.asarray(var_diag, dtype=float))
    if mean.shape != var_diag.shape:
        raise ValueError("mean and var_diag must have the same length")
    _check(np.isfinite(var_diag) & (var_diag >= 0), "variances must be >= 0")
    return mean + np.sqrt(var_diag) * rng.standard_normal(mean.shape)


def _normalised_cdf(weights: np.ndarray) -> np.ndarray:
    if not np.all(np.isfinite(weights)) or np.any(weights < 0):
        raise ValueError("categorical weights must be finite and non-negative")
    total = weights.sum(axis=-1, keepdims=True)
    if np.any(total <= 0):
        raise ValueError("categorical weights sum to zero")
    cdf = np.cumsum(weights / total, axis=-1)
    cdf[..., -1] = 1.0
    return cdf


def draw_categorical(rng, weights) -> int:
    """Inverse-CDF categorical draw; returns a 0-based index.

    The first index whose cumulative normalised weight exceeds the uniform
    draw wins, so zero-weight categories are never selected.
    """
    cdf = _normalised_cdf(np.asarray(weights, dtype=float))
    u = rng.random()
    return int(np.searchsorted(cdf, u, side="right"))


def draw_categorical_rows(rng, weights: np.ndarray) -> np.ndarray:
    """Row-wise :func:`draw_categorical` for an ``(n, k)`` weight matrix."""
    weights = np.asarray(weights, dtype=float)
    cdf = _normalised_cdf(weights)
    u = rng.random(weights.shape[0])
    return (cdf <= u[:, None]).sum(axis=1)
