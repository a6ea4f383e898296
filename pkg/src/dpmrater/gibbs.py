"""Blocked Gibbs sampler for the hierarchical linear model with a truncated
Dirichlet-process-mixture prior on the rater effects.

Model (rater ``i``, item ``j``)::

    y_ij = x_ij' beta + z_ij' u_i [+ delta_j] + eps_ij,   eps_ij ~ N(0, sigma_eps2)
    u_i ~ sum_r pi_r N_q(mu_r, diag(Q_r)),   pi = stick_break(v),  v_r ~ Be(1, alpha)
    (mu_r, Q_r) ~ N_q(mu0, diag(D0)) x IG(a_Q0, b_Q0)^q
    beta ~ N_p(b_beta, diag(B_beta)),  b_beta ~ N_p(b0, diag(S0)),  B_beta_m ~ IG(a_beta0, b_beta0)
    mu0 ~ N_q(m0, diag(W0)),  D0_d ~ IG(a_D0, b_D0),  alpha ~ Ga(a_alpha, b_alpha)
    sigma_eps2 ~ IG(a_eps, b_eps),  delta_j ~ N(0, sigma_delta2),  sigma_delta2 ~ IG(a_delta, b_delta)

Each ``update_*`` function draws one block from its full conditional and
returns the new value(s); the state passed in is not modified.
"""

from __future__ import annotations

import copy
import math
import time
from dataclasses import asdict, dataclass, field, fields

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular

from . import rand
from .data import DesignBundle
from .dpm import stick_break
from .polarization import GridSpec, GridDensity, lambda_index, find_extrema, mixture_log_density, summarize_lambda

__all__ = [
    "DpmHyperparams",
    "ChainConfig",
    "ChainState",
    "PosteriorDraws",
    "ChainError",
    "init_state",
    "update_beta",
    "update_b_beta",
    "update_sigma_beta",
    "update_beta_hyper",
    "update_u",
    "update_component_locations",
    "update_component_variances",
    "update_components",
    "allocation_weights",
    "update_allocations",
    "update_sticks",
    "update_alpha",
    "update_mu0",
    "update_D0",
    "update_base_measure",
    "update_item_effects",
    "update_sigma_eps",
    "run_chain",
]

VAR_FLOOR = 1e-12
VAR_CEIL = 1e100
V_MAX = 1.0 - 1e-12
BASE_MEASURE_SOURCES = ("raters", "occupied", "components")


class ChainError(RuntimeError):
    """The chain produced a non-finite state."""


@dataclass
class DpmHyperparams:
    """Fixed hyperparameters; vector-valued entries may be given as scalars."""

    b0: float | list = 0.0
    S0_diag: float | list = 1000.0
    a_beta0: float = 0.005
    b_beta0: float = 0.005
    m0: float | list = 0.0
    W0_diag: float | list = 100.0
    a_D0: float = 0.5
    b_D0: float = 0.5
    a_Q0: float = 0.001
    b_Q0: float = 0.001
    a_alpha: float = 2.0
    b_alpha: float = 2.0
    a_eps: float = 0.005
    b_eps: float = 0.005
    R: int = 50
    with_item_effects: bool = False
    a_delta: float = 1.0
    b_delta: float = 1.0
    base_measure_over: str = "components"

    def __post_init__(self):
        for f in fields(self):
            if f.name in ("b0", "m0", "R", "with_item_effects", "base_measure_over"):
                continue
            val = np.asarray(getattr(self, f.name), dtype=float)
            if not np.all(np.isfinite(val)) or np.any(val <= 0):
                raise ValueError(f"hyperparameter {f.name} must be strictly positive, got {val}")
        if int(self.R) != self.R or self.R < 1:
            raise ValueError(f"truncation level R must be an integer >= 1, got {self.R}")
        self.R = int(self.R)
        if self.base_measure_over not in BASE_MEASURE_SOURCES:
            raise ValueError(f"base_measure_over must be one of {BASE_MEASURE_SOURCES}")

    def vec(self, name: str, n: int) -> np.ndarray:
        val = np.asarray(getattr(self, name), dtype=float).reshape(-1)
        if val.size == 1:
            return np.full(n, float(val[0]))
        if val.size != n:
            raise ValueError(f"{name} has length {val.size}, expected {n}")
        return val.copy()

    def to_dict(self) -> dict:
        out = {}
        for k, v in asdict(self).items():
            out[k] = np.asarray(v).tolist() if isinstance(v, (list, tuple, np.ndarray)) else v
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "DpmHyperparams":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown hyperparameter(s): {', '.join(sorted(unknown))}")
        return cls(**d)


@dataclass
class ChainConfig:
    iterations: int = 55_000
    burn_in: int = 5_000
    thin: int = 50
    seed: int = 0
    grid: GridSpec = field(default_factory=GridSpec)

    def __post_init__(self):
        if self.thin < 1:
            raise ValueError("thin must be >= 1")
        if not 0 <= self.burn_in < self.iterations:
            raise ValueError("need 0 <= burn_in < iterations")

    @property
    def n_retained(self) -> int:
        return (self.iterations - self.burn_in) // self.thin

    @classmethod
    def desk(cls, seed: int = 0, grid: GridSpec | None = None) -> "ChainConfig":
        return cls(6_000, 1_000, 5, seed, grid or GridSpec())

    def to_dict(self) -> dict:
        return {"iterations": self.iterations, "burn_in": self.burn_in, "thin": self.thin,
                "seed": self.seed, "grid": str(self.grid)}


@dataclass
class ChainState:
    beta: np.ndarray  # (p,)
    b_beta: np.ndarray  # (p,)
    B_beta: np.ndarray  # (p,) diagonal variances
    u: np.ndarray  # (I, q)
    mu: np.ndarray  # (R, q)
    Q: np.ndarray  # (R, q) diagonal variances
    v: np.ndarray  # (R,)
    pi: np.ndarray  # (R,)
    c: np.ndarray  # (I,) 0-based component index
    alpha: float
    mu0: np.ndarray  # (q,)
    D0: np.ndarray  # (q,) diagonal variances
    sigma_eps2: float
    delta: np.ndarray | None = None  # (J,)
    sigma_delta2: float | None = None

    def copy(self) -> "ChainState":
        return copy.deepcopy(self)

    def counts(self) -> np.ndarray:
        return np.bincount(self.c, minlength=self.mu.shape[0])

    def check(self) -> None:
        """Raise AssertionError if a structural invariant is broken."""
        R = self.mu.shape[0]
        assert self.v.shape == (R,) and self.v[-1] == 1.0
        assert np.all((self.v >= 0) & (self.v <= 1))
        assert np.all(self.pi >= 0) and math.fsum(self.pi) == 1.0
        assert np.all((self.c >= 0) & (self.c < R))
        assert np.all(self.Q > 0) and np.all(self.D0 > 0) and np.all(self.B_beta > 0)
        assert self.sigma_eps2 > 0 and self.alpha > 0

    def is_finite(self) -> bool:
        arrays = [self.beta, self.b_beta, self.B_beta, self.u, self.mu, self.Q, self.v,
                  self.pi, self.mu0, self.D0, [self.alpha, self.sigma_eps2]]
        if self.delta is not None:
            arrays += [self.delta, [self.sigma_delta2]]
        return all(np.all(np.isfinite(a)) for a in arrays)


def _clamp_var(x):
    return np.clip(x, VAR_FLOOR, VAR_CEIL)


def _ig(rng, shape, rate):
    return _clamp_var(rand.inverse_gamma(rng, shape, rate))


def init_state(design: DesignBundle, hyper: DpmHyperparams, rng) -> ChainState:
    """Deterministic-given-seed starting point.

    beta = 0, b_beta = b0, B_beta = S0, u = 0, c uniform on the R components,
    alpha = a_alpha / b_alpha, v from its prior given alpha, mu0 = m0, D0 = W0,
    components drawn from the base measure, sigma_eps2 = 1.
    """
    p, q, I, R = design.p, design.q, design.n_raters, hyper.R
    alpha = hyper.a_alpha / hyper.b_alpha
    v = np.ones(R)
    if R > 1:
        v[:-1] = rand.beta(rng, 1.0, alpha, size=R - 1)
    mu0 = hyper.vec("m0", q)
    D0 = hyper.vec("W0_diag", q)
    mu = mu0 + np.sqrt(D0) * rng.standard_normal((R, q))
    Q = _ig(rng, hyper.a_Q0, np.full((R, q), hyper.b_Q0))
    state = ChainState(
        beta=np.zeros(p),
        b_beta=hyper.vec("b0", p),
        B_beta=hyper.vec("S0_diag", p),
        u=np.zeros((I, q)),
        mu=mu,
        Q=Q,
        v=v,
        pi=stick_break(v),
        c=rng.integers(0, R, size=I),
        alpha=float(alpha),
        mu0=mu0,
        D0=D0,
        sigma_eps2=1.0,
    )
    if hyper.with_item_effects:
        state.delta = np.zeros(design.n_items)
        state.sigma_delta2 = 1.0
    return state


# -- residual helpers -------------------------------------------------------

def _zu(state: ChainState, design: DesignBundle) -> np.ndarray:
    return np.einsum("nq,nq->n", design.Z, state.u[design.rater])


def _item_term(state: ChainState, design: DesignBundle):
    if state.delta is None:
        return 0.0
    return state.delta[design.item]


def residuals(state: ChainState, design: DesignBundle) -> np.ndarray:
    return design.y - design.X @ state.beta - _zu(state, design) - _item_term(state, design)


def _draw_gaussian_precision(rng, precision: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Draw from N(P^{-1} rhs, P^{-1}) for one symmetric positive-definite P."""
    try:
        factor = cho_factor(precision, lower=True)
    except np.linalg.LinAlgError as exc:
        raise ChainError(f"singular posterior precision: {exc}") from None
    mean = cho_solve(factor, rhs)
    z = rng.standard_normal(rhs.shape[0])
    return mean + solve_triangular(factor[0], z, lower=True, trans="T")


# -- fixed effects ----------------------------------------------------------

def update_beta(state: ChainState, design: DesignBundle, hyper: DpmHyperparams, rng) -> np.ndarray:
    """beta | rest ~ N_p(b*, B*), B* = (B^-1 + X'X/s2)^-1, b* = B*(B^-1 b + X'(y - Zu)/s2)."""
    p = design.p
    if p == 0:
        return np.zeros(0)
    s2 = state.sigma_eps2
    target = design.y - _zu(state, design) - _item_term(state, design)
    prec = np.diag(1.0 / state.B_beta) + design.XtX / s2
    rhs = state.b_beta / state.B_beta + design.X.T @ target / s2
    return _draw_gaussian_precision(rng, prec, rhs)


def update_b_beta(state: ChainState, hyper: DpmHyperparams, rng) -> np.ndarray:
    p = state.beta.shape[0]
    S0 = hyper.vec("S0_diag", p)
    b0 = hyper.vec("b0", p)
    prec = 1.0 / state.B_beta + 1.0 / S0
    mean = (state.beta / state.B_beta + b0 / S0) / prec
    return rand.normal(rng, mean, 1.0 / prec, size=p)


def update_sigma_beta(state: ChainState, hyper: DpmHyperparams, rng) -> np.ndarray:
    p = state.beta.shape[0]
    rate = hyper.b_beta0 + 0.5 * (state.beta - state.b_beta) ** 2
    return _ig(rng, hyper.a_beta0 + 0.5, rate) if p else np.zeros(0)


def update_beta_hyper(state: ChainState, hyper: DpmHyperparams, rng) -> tuple[np.ndarray, np.ndarray]:
    """b_beta given (beta, B_beta), then B_beta given (beta, new b_beta)."""
    b_beta = update_b_beta(state, hyper, rng)
    tmp = copy.copy(state)
    tmp.b_beta = b_beta
    return b_beta, update_sigma_beta(tmp, hyper, rng)


# -- rater effects ----------------------------------------------------------

def update_u(state: ChainState, design: DesignBundle, rng) -> np.ndarray:
    """u_i ~ N_q(m_i, P_i^-1) with P_i = diag(1/Q_{c_i}) + Z_i'Z_i / s2."""
    s2 = state.sigma_eps2
    Qc = state.Q[state.c]  # (I, q)
    muc = state.mu[state.c]
    target = design.y - design.X @ state.beta - _item_term(state, design)
    zty = design.per_rater_sum(design.Z * target[:, None])  # (I, q)
    I, q = Qc.shape
    if q == 1:
        prec = 1.0 / Qc[:, 0] + design.ZtZ[:, 0, 0] / s2
        mean = (muc[:, 0] / Qc[:, 0] + zty[:, 0] / s2) / prec
        return (mean + rng.standard_normal(I) / np.sqrt(prec))[:, None]
    prec = design.ZtZ / s2 + np.einsum("iq,qk->iqk", 1.0 / Qc, np.eye(q))
    rhs = muc / Qc + zty / s2
    L = np.linalg.cholesky(prec)
    mean = np.linalg.solve(prec, rhs[..., None])[..., 0]
    z = rng.standard_normal((I, q))
    return mean + np.linalg.solve(np.swapaxes(L, 1, 2), z[..., None])[..., 0]


def _component_sums(state: ChainState):
    R, q = state.mu.shape
    counts = state.counts()
    sums = np.zeros((R, q))
    np.add.at(sums, state.c, state.u)
    return counts, sums


def update_component_locations(state: ChainState, hyper: DpmHyperparams, rng) -> np.ndarray:
    """mu_r | rest: conjugate normal; empty components fall back to N(mu0, D0)."""
    counts, sums = _component_sums(state)
    prec = counts[:, None] / state.Q + 1.0 / state.D0[None, :]
    mean = (sums / state.Q + state.mu0[None, :] / state.D0[None, :]) / prec
    return mean + rng.standard_normal(mean.shape) / np.sqrt(prec)


def update_component_variances(state: ChainState, hyper: DpmHyperparams, rng) -> np.ndarray:
    """Q_dr ~ IG(a_Q0 + n_r/2, b_Q0 + sum_{i in r} (u_id - mu_dr)^2 / 2)."""
    R, q = state.mu.shape
    counts = state.counts()
    ss = np.zeros((R, q))
    np.add.at(ss, state.c, (state.u - state.mu[state.c]) ** 2)
    return _ig(rng, hyper.a_Q0 + 0.5 * counts[:, None], hyper.b_Q0 + 0.5 * ss)


def update_components(state: ChainState, hyper: DpmHyperparams, rng) -> tuple[np.ndarray, np.ndarray]:
    """Locations first, then variances given the new locations."""
    mu = update_component_locations(state, hyper, rng)
    tmp = copy.copy(state)
    tmp.mu = mu
    return mu, update_component_variances(tmp, hyper, rng)


def allocation_weights(u, pi, mu, Q) -> np.ndarray:
    """Normalised responsibilities pi_r N_q(u_i | mu_r, Q_r), computed in log space."""
    u = np.atleast_2d(u)
    with np.errstate(divide="ignore"):
        logw = np.log(pi)[None, :] - 0.5 * (
            np.log(2.0 * np.pi * Q).sum(axis=1)[None, :]
            + (((u[:, None, :] - mu[None, :, :]) ** 2) / Q[None, :, :]).sum(axis=2)
        )
    logw -= logw.max(axis=1, keepdims=True)
    w = np.exp(logw)
    return w / w.sum(axis=1, keepdims=True)


def update_allocations(state: ChainState, rng) -> np.ndarray:
    if state.u.shape[0] == 0:
        return np.zeros(0, dtype=np.int64)
    w = allocation_weights(state.u, state.pi, state.mu, state.Q)
    return rand.draw_categorical_rows(rng, w)


def update_sticks(state: ChainState, hyper: DpmHyperparams, rng) -> tuple[np.ndarray, np.ndarray]:
    """v_r ~ Be(1 + n_r, alpha + sum_{l>r} n_l) for r < R, v_R = 1."""
    R = state.mu.shape[0]
    counts = state.counts()
    tail = np.concatenate((np.cumsum(counts[::-1])[::-1][1:], [0]))
    v = np.ones(R)
    if R > 1:
        v[:-1] = rand.beta(rng, 1.0 + counts[:-1], state.alpha + tail[:-1])
    return v, stick_break(v)


def update_alpha(state: ChainState, hyper: DpmHyperparams, rng) -> float:
    """alpha ~ Ga(R - 1 + a_alpha, b_alpha - sum_{r<R} log(1 - v_r))."""
    R = state.v.shape[0]
    v = np.minimum(state.v[:-1], V_MAX)
    rate = hyper.b_alpha - np.log1p(-v).sum()
    if not np.isfinite(rate):
        raise ChainError("non-finite rate in the alpha update")
    return max(float(rand.gamma(rng, R - 1 + hyper.a_alpha, rate)), VAR_FLOOR)


def base_measure_locations(state: ChainState, source: str = "raters") -> np.ndarray:
    """Locations that inform (mu0, D0).

    ``raters``: mu_{c_i} for every rater (clusters weighted by size);
    ``occupied``: each occupied component once;
    ``components``: all R components.
    """
    if source == "raters":
        return state.mu[state.c]
    if source == "occupied":
        return state.mu[np.unique(state.c)]
    if source == "components":
        return state.mu
    raise ValueError(f"unknown base-measure source {source!r}")


def update_mu0(state: ChainState, hyper: DpmHyperparams, rng) -> np.ndarray:
    """mu0_d | D0, locations: conjugate normal with prior N(m0, W0)."""
    q = state.mu.shape[1]
    locs = base_measure_locations(state, hyper.base_measure_over)
    n = locs.shape[0]
    m0, W0 = hyper.vec("m0", q), hyper.vec("W0_diag", q)
    total = locs.sum(axis=0)
    prec = n / state.D0 + 1.0 / W0
    mean = (total / state.D0 + m0 / W0) / prec
    return mean + rng.standard_normal(q) / np.sqrt(prec)


def update_D0(state: ChainState, hyper: DpmHyperparams, rng) -> np.ndarray:
    """D0_d ~ IG(a_D0 + n/2, b_D0 + sum (loc_d - mu0_d)^2 / 2) over the same locations."""
    locs = base_measure_locations(state, hyper.base_measure_over)
    ss = ((locs - state.mu0[None, :]) ** 2).sum(axis=0)
    return _ig(rng, hyper.a_D0 + 0.5 * locs.shape[0], hyper.b_D0 + 0.5 * ss)


def update_base_measure(state: ChainState, hyper: DpmHyperparams, rng) -> tuple[np.ndarray, np.ndarray]:
    mu0 = update_mu0(state, hyper, rng)
    tmp = copy.copy(state)
    tmp.mu0 = mu0
    return mu0, update_D0(tmp, hyper, rng)


def update_item_effects(state: ChainState, design: DesignBundle, hyper: DpmHyperparams, rng):
    """Item intercepts delta_j and their variance (multiple-rating designs only)."""
    if not design.multiple_ratings:
        raise ValueError("item effects are not identifiable when every item has a single rater")
    J = design.n_items
    s2 = state.sigma_eps2
    sd2 = state.sigma_delta2
    target = design.y - design.X @ state.beta - _zu(state, design)
    n_j = np.bincount(design.item, minlength=J)
    s_j = np.bincount(design.item, weights=target, minlength=J)
    prec = n_j / s2 + 1.0 / sd2
    delta = (s_j / s2) / prec + rng.standard_normal(J) / np.sqrt(prec)
    sigma_delta2 = float(_ig(rng, hyper.a_delta + 0.5 * J, hyper.b_delta + 0.5 * np.sum(delta ** 2)))
    return delta, sigma_delta2


def update_sigma_eps(state: ChainState, design: DesignBundle, hyper: DpmHyperparams, rng) -> float:
    """sigma_eps2 ~ IG(a_eps + N/2, b_eps + RSS/2), N the number of ratings."""
    r = residuals(state, design)
    return float(_ig(rng, hyper.a_eps + 0.5 * design.n_obs, hyper.b_eps + 0.5 * float(r @ r)))


def gibbs_cycle(state: ChainState, design: DesignBundle, hyper: DpmHyperparams, rng) -> ChainState:
    """One full sweep, updating ``state`` in place."""
    state.beta = update_beta(state, design, hyper, rng)
    state.b_beta, state.B_beta = update_beta_hyper(state, hyper, rng)
    state.u = update_u(state, design, rng)
    state.mu, state.Q = update_components(state, hyper, rng)
    state.c = update_allocations(state, rng)
    state.v, state.pi = update_sticks(state, hyper, rng)
    state.alpha = update_alpha(state, hyper, rng)
    state.mu0, state.D0 = update_base_measure(state, hyper, rng)
    if hyper.with_item_effects:
        state.delta, state.sigma_delta2 = update_item_effects(state, design, hyper, rng)
    state.sigma_eps2 = update_sigma_eps(state, design, hyper, rng)
    return state


@dataclass
class PosteriorDraws:
    """Thinned output of one or more chains."""

    iteration: np.ndarray
    scalars: dict[str, np.ndarray]
    u: np.ndarray  # (n, I, q)
    grid: GridSpec
    grid_log_density: np.ndarray | None  # (n, points), only for q == 1
    lambdas: np.ndarray | None
    n_modes: np.ndarray | None
    meta: dict = field(default_factory=dict)

    @property
    def n_retained(self) -> int:
        return int(self.iteration.shape[0])

    def grid_densities(self) -> list[GridDensity]:
        return [GridDensity(self.grid, row) for row in self.grid_log_density]

    def grid_mean(self) -> GridDensity:
        from .polarization import posterior_grid_mean
        return posterior_grid_mean(self.grid_densities())

    def lambda_posterior(self, mass: float = 0.95):
        return summarize_lambda(self.lambdas, mass)

    @classmethod
    def merge(cls, parts: list["PosteriorDraws"]) -> "PosteriorDraws":
        """Concatenate draws from chains that share a design and grid."""
        first = parts[0]
        for p in parts[1:]:
            if p.grid != first.grid or p.scalars.keys() != first.scalars.keys():
                raise ValueError("cannot merge draws with different grids or parameters")

        def cat(attr):
            vals = [getattr(p, attr) for p in parts]
            return None if vals[0] is None else np.concatenate(vals)

        return cls(
            iteration=cat("iteration"),
            scalars={k: np.concatenate([p.scalars[k] for p in parts]) for k in first.scalars},
            u=cat("u"),
            grid=first.grid,
            grid_log_density=cat("grid_log_density"),
            lambdas=cat("lambdas"),
            n_modes=cat("n_modes"),
            meta={"chains": [p.meta for p in parts]},
        )


def _scalar_record(state: ChainState) -> dict[str, float]:
    rec = {}
    for m, val in enumerate(state.beta):
        rec[f"beta_{m + 1}"] = val
        rec[f"b_beta_{m + 1}"] = state.b_beta[m]
        rec[f"sigma_beta2_{m + 1}"] = state.B_beta[m]
    for d in range(state.mu0.shape[0]):
        rec[f"mu0_{d + 1}"] = state.mu0[d]
        rec[f"D0_{d + 1}"] = state.D0[d]
    rec["alpha"] = state.alpha
    rec["sigma_eps2"] = state.sigma_eps2
    rec["n_occupied"] = float(np.unique(state.c).size)
    if state.sigma_delta2 is not None:
        rec["sigma_delta2"] = state.sigma_delta2
    return rec


def run_chain(
    design: DesignBundle,
    hyper: DpmHyperparams,
    config: ChainConfig,
    rng=None,
    state: ChainState | None = None,
    prominence: float = 1.0,
    progress=None,
) -> PosteriorDraws:
    """Run the blocked Gibbs sampler and keep every ``thin``-th post-burn-in sweep.

    For a varying intercept (q == 1) each retained sweep also records the
    mixture density of the rater effects on ``config.grid`` and its lambda.
    """
    if hyper.with_item_effects and not design.multiple_ratings:
        raise ValueError("item effects are not identifiable when every item has a single rater")
    rng = rng if rng is not None else rand.make_rng(config.seed)
    state = state.copy() if state is not None else init_state(design, hyper, rng)
    n_keep = config.n_retained
    track_grid = design.q == 1
    gx = config.grid.x
    iters = np.zeros(n_keep, dtype=np.int64)
    records: list[dict] = []
    us = np.zeros((n_keep, design.n_raters, design.q))
    grid_log = np.zeros((n_keep, gx.size)) if track_grid else None
    lambdas = np.zeros(n_keep) if track_grid else None
    n_modes = np.zeros(n_keep, dtype=np.int64) if track_grid else None
    t0 = time.perf_counter()
    k = 0
    with np.errstate(under="ignore"):
        for t in range(1, config.iterations + 1):
            try:
                gibbs_cycle(state, design, hyper, rng)
            except (ValueError, ChainError) as exc:
                raise ChainError(f"iteration {t}: {exc}") from exc
            if not state.is_finite():
                raise ChainError(f"non-finite chain state at iteration {t}")
            if t <= config.burn_in or (t - config.burn_in) % config.thin:
                continue
            if k >= n_keep:
                break
            iters[k] = t
            records.append(_scalar_record(state))
            us[k] = state.u
            if track_grid:
                grid_log[k] = mixture_log_density(gx, state.pi, state.mu[:, 0], state.Q[:, 0])
                ext = find_extrema(GridDensity(config.grid, grid_log[k]), prominence)
                lambdas[k] = lambda_index(ext)
                n_modes[k] = ext.M
            k += 1
            if progress is not None:
                progress(k, n_keep)
    scalars = {name: np.array([r[name] for r in records], dtype=float) for name in (records[0] if records else {})}
    return PosteriorDraws(
        iteration=iters,
        scalars=scalars,
        u=us,
        grid=config.grid,
        grid_log_density=grid_log,
        lambdas=lambdas,
        n_modes=n_modes,
        meta={"seed": config.seed, "seconds": time.perf_counter() - t0, "final_state": state},
    )
