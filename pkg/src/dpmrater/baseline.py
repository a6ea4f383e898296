"""Normal varying-intercept model and the intraclass correlation.

    y_ij = x_ij' beta + u_i + eps_ij,   u_i ~ N(0, sigma_u2),   eps_ij ~ N(0, sigma_eps2)

Priors are conjugate (beta_m ~ N(0, beta_var), both variances inverse-gamma)
so the whole posterior is sampled with a plain Gibbs sweep.
"""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import rand
from .data import DesignBundle
from .gibbs import ChainConfig, ChainError, _draw_gaussian_precision, _ig
from .polarization import hpd_interval

__all__ = ["NormalHlmPriors", "BaselinePosterior", "icc", "fit_normal_hlm"]

PRIOR_NOTE = (
    "conjugate inverse-gamma priors on sigma_u2 and sigma_eps2 sampled by Gibbs, "
    "in place of exponential priors on the standard deviations sampled by HMC"
)


def icc(sigma_u2, sigma_eps2):
    """Share of the outcome variance due to raters: sigma_u2 / (sigma_u2 + sigma_eps2)."""
    su = np.asarray(sigma_u2, dtype=float)
    se = np.asarray(sigma_eps2, dtype=float)
    if np.any(su < 0) or np.any(se < 0):
        raise ValueError("variances must be non-negative")
    total = su + se
    if np.any(total == 0):
        raise ValueError("ICC undefined when both variances are zero")
    out = su / total
    return float(out) if out.ndim == 0 else out


@dataclass
class NormalHlmPriors:
    beta_var: float = 25.0
    a_u: float = 2.0
    b_u: float = 2.0
    a_eps: float = 2.0
    b_eps: float = 2.0

    def __post_init__(self):
        for k, v in asdict(self).items():
            if not (np.isfinite(v) and v > 0):
                raise ValueError(f"prior parameter {k} must be strictly positive, got {v}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "NormalHlmPriors":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown prior parameter(s): {', '.join(sorted(unknown))}")
        return cls(**d)


@dataclass
class BaselinePosterior:
    iteration: np.ndarray
    beta: np.ndarray  # (n, p)
    sigma_u2: np.ndarray
    sigma_eps2: np.ndarray
    u: np.ndarray  # (n, I)
    meta: dict = field(default_factory=dict)

    @property
    def icc(self) -> np.ndarray:
        return icc(self.sigma_u2, self.sigma_eps2)

    @property
    def n_retained(self) -> int:
        return int(self.iteration.shape[0])

    def scalars(self) -> dict[str, np.ndarray]:
        out = {f"beta_{m + 1}": self.beta[:, m] for m in range(self.beta.shape[1])}
        out["sigma_u2"] = self.sigma_u2
        out["sigma_eps2"] = self.sigma_eps2
        out["icc"] = self.icc
        return out

    def hpd(self, name: str, mass: float = 0.95) -> tuple[float, float]:
        return hpd_interval(self.scalars()[name], mass)


def fit_normal_hlm(
    design: DesignBundle,
    priors: NormalHlmPriors | None = None,
    config: ChainConfig | None = None,
    rng=None,
) -> BaselinePosterior:
    """Gibbs sampler for the normal varying-intercept model (q must be 1)."""
    if design.q != 1:
        raise ValueError("the normal baseline needs a varying-intercept design (q == 1)")
    priors = priors or NormalHlmPriors()
    config = config or ChainConfig()
    rng = rng if rng is not None else rand.make_rng(config.seed)
    p, I, N = design.p, design.n_raters, design.n_obs
    n_i = design.counts().astype(float)
    XtX = design.XtX
    prior_prec = np.eye(p) / priors.beta_var

    beta = np.zeros(p)
    u = np.zeros(I)
    su2, se2 = 1.0, 1.0

    n_keep = config.n_retained
    iters = np.zeros(n_keep, dtype=np.int64)
    out_beta = np.zeros((n_keep, p))
    out_su2 = np.zeros(n_keep)
    out_se2 = np.zeros(n_keep)
    out_u = np.zeros((n_keep, I))
    t0 = time.perf_counter()
    k = 0
    for t in range(1, config.iterations + 1):
        if p:
            rhs = design.X.T @ (design.y - u[design.rater]) / se2
            beta = _draw_gaussian_precision(rng, prior_prec + XtX / se2, rhs)
        r = design.y - design.X @ beta
        s_i = np.bincount(design.rater, weights=r, minlength=I)
        prec = n_i / se2 + 1.0 / su2
        u = (s_i / se2) / prec + rng.standard_normal(I) / np.sqrt(prec)
        su2 = float(_ig(rng, priors.a_u + 0.5 * I, priors.b_u + 0.5 * float(u @ u)))
        e = r - u[design.rater]
        se2 = float(_ig(rng, priors.a_eps + 0.5 * N, priors.b_eps + 0.5 * float(e @ e)))
        if not (np.all(np.isfinite(beta)) and np.all(np.isfinite(u))):
            raise ChainError(f"non-finite baseline state at iteration {t}")
        if t <= config.burn_in or (t - config.burn_in) % config.thin or k >= n_keep:
            continue
        iters[k] = t
        out_beta[k], out_su2[k], out_se2[k], out_u[k] = beta, su2, se2, u
        k += 1
    return BaselinePosterior(
        iteration=iters,
        beta=out_beta,
        sigma_u2=out_su2,
        sigma_eps2=out_se2,
        u=out_u,
        meta={"seed": config.seed, "seconds": time.perf_counter() - t0,
              "priors": priors.to_dict(), "prior_note": PRIOR_NOTE},
    )
