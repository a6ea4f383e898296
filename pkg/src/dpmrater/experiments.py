"""Simulation studies.

Sim1 draws truncated DPM realisations over a grid of (alpha, Q) settings
and records the lambda of each realised mixture density.  Sim2 generates
rater data whose intercepts follow a two-component normal mixture, fits the
DPM model and the normal baseline, and tabulates what each recovers.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import rand
from .baseline import BaselinePosterior, NormalHlmPriors, fit_normal_hlm
from .data import RatingsTable, build_design, load_ratings, write_ratings
from .dpm import sample_truncated_dpm, uniform_base
from .gibbs import ChainConfig, DpmHyperparams, PosteriorDraws, run_chain
from .outputs import (config_hash, density_from_file, read_csv, read_lambda, write_baseline_outputs,
                      write_csv, write_dpm_outputs)
from .polarization import (GridSpec, density_hpd_region, find_extrema, hpd_interval, lambda_index,
                           mixture_density_on_grid, summarize_lambda)

__all__ = [
    "Sim1Spec",
    "Sim1Result",
    "run_sim1",
    "Sim2Spec",
    "ScenarioResult",
    "simulate_sim2",
    "run_sim2",
    "write_sim1",
    "write_sim2",
    "summarize",
]


# -- Simulation 1 -----------------------------------------------------------

@dataclass
class Sim1Spec:
    alphas: tuple = (0.1, 1.0, 5.0, 20.0)
    q_vars: tuple = (0.1, 1.5)
    n: int = 500
    R: int = 50
    g0: tuple = (-6.0, 6.0)
    seeds: tuple = tuple(range(20))
    grid: GridSpec = field(default_factory=GridSpec)

    def __post_init__(self):
        self.alphas = tuple(float(a) for a in self.alphas)
        self.q_vars = tuple(float(q) for q in self.q_vars)
        self.g0 = tuple(float(b) for b in self.g0)
        self.seeds = tuple(int(s) for s in self.seeds)
        if isinstance(self.grid, str):
            self.grid = GridSpec.parse(self.grid)
        if not self.alphas or any(a <= 0 for a in self.alphas):
            raise ValueError("alphas must be positive")
        if not self.q_vars or any(q <= 0 for q in self.q_vars):
            raise ValueError("component variances must be positive")
        if self.n < 1 or self.R < 1 or not self.seeds:
            raise ValueError("need n >= 1, R >= 1 and at least one seed")
        if len(self.g0) != 2 or not self.g0[0] < self.g0[1]:
            raise ValueError("g0 must be (lo, hi) with lo < hi")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["grid"] = str(self.grid)
        for k in ("alphas", "q_vars", "g0", "seeds"):
            d[k] = list(d[k])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Sim1Spec":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown sim1 key(s): {', '.join(sorted(unknown))}")
        return cls(**d)


@dataclass
class Sim1Result:
    spec: Sim1Spec
    rows: list[tuple]  # (alpha, q_var, seed, lambda, n_modes, n_occupied)

    def medians(self) -> dict[tuple[float, float], float]:
        out = {}
        for a in self.spec.alphas:
            for q in self.spec.q_vars:
                vals = [r[3] for r in self.rows if r[0] == a and r[1] == q]
                out[(a, q)] = float(np.median(vals))
        return out


def run_sim1(spec: Sim1Spec | None = None) -> Sim1Result:
    """lambda of the realised truncated-mixture density for every cell and seed.

    Each seed drives its own generator, re-created for every (alpha, Q) cell,
    so cells are compared on common random numbers.
    """
    spec = spec or Sim1Spec()
    base = uniform_base(*spec.g0)
    rows = []
    for a in spec.alphas:
        for q in spec.q_vars:
            for s in spec.seeds:
                draw = sample_truncated_dpm(rand.make_rng(s), a, base, spec.R, spec.n, q)
                dens = mixture_density_on_grid(draw.weights, draw.components.mu[:, 0],
                                               draw.components.q_var[:, 0], spec.grid)
                ext = find_extrema(dens)
                rows.append((a, q, s, lambda_index(ext), ext.M, draw.n_occupied))
    return Sim1Result(spec, rows)


# -- Simulation 2 -----------------------------------------------------------

@dataclass
class Sim2Spec:
    component_vars: tuple = (1.0, 0.5, 0.1)
    locations: tuple = (-3.0, 3.0)
    mix: float = 0.5
    I: int = 100
    items_per_rater: int = 20
    beta_true: float = 2.0
    sigma_eps: float = 0.5
    seed: int = 0

    def __post_init__(self):
        self.component_vars = tuple(float(v) for v in self.component_vars)
        self.locations = tuple(float(v) for v in self.locations)
        if any(v <= 0 for v in self.component_vars):
            raise ValueError("component variances must be positive")
        if len(self.locations) != 2:
            raise ValueError("locations must be a pair")
        if not 0.0 < self.mix < 1.0:
            raise ValueError("mix must lie in (0, 1)")
        if self.I < 1 or self.items_per_rater < 1:
            raise ValueError("need I >= 1 and items_per_rater >= 1")
        if not self.sigma_eps > 0:
            raise ValueError("sigma_eps must be positive")

    @classmethod
    def desk(cls, seed: int = 0) -> "Sim2Spec":
        return cls(I=50, items_per_rater=20, seed=seed)

    @property
    def scenarios(self) -> tuple[int, ...]:
        return tuple(range(1, len(self.component_vars) + 1))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["component_vars"] = list(self.component_vars)
        d["locations"] = list(self.locations)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Sim2Spec":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown sim2 key(s): {', '.join(sorted(unknown))}")
        return cls(**d)


def _scenario_rngs(seed: int, scenario: int):
    """Independent streams for (data, DPM chain, baseline chain) of one scenario."""
    return rand.spawn_rngs([int(seed), int(scenario)], 3)


def simulate_sim2(spec: Sim2Spec, scenario: int, rng=None) -> tuple[RatingsTable, np.ndarray]:
    """Ratings for one scenario and the true rater intercepts.

    Raters rate disjoint item sets; ``x ~ N(0, 1)``.
    """
    if scenario not in spec.scenarios:
        raise ValueError(f"scenario must be one of {spec.scenarios}, got {scenario}")
    rng = rng if rng is not None else _scenario_rngs(spec.seed, scenario)[0]
    q = spec.component_vars[scenario - 1]
    I, J = spec.I, spec.items_per_rater
    first = rng.random(I) < spec.mix
    u = np.where(first, spec.locations[0], spec.locations[1]) + math.sqrt(q) * rng.standard_normal(I)
    rater = np.repeat(np.arange(I), J)
    x = rng.standard_normal(I * J)
    y = spec.beta_true * x + u[rater] + spec.sigma_eps * rng.standard_normal(I * J)
    table = RatingsTable.from_arrays(rater + 1, np.arange(1, I * J + 1), y, x[:, None])
    return table, u


@dataclass
class ScenarioResult:
    scenario: int
    q_var: float
    table: RatingsTable
    u_true: np.ndarray
    dpm: PosteriorDraws
    baseline: BaselinePosterior

    def summary(self, mass: float = 0.95) -> dict:
        return scenario_summary(self.dpm.scalars, self.dpm.lambdas, self.dpm.grid_mean(),
                                self.baseline.scalars(), mass)


def scenario_summary(dpm_scalars: dict, lambdas, grid_mean, base_scalars: dict, mass: float = 0.95) -> dict:
    """Table-shaped summaries for one scenario (all intervals are HPD)."""
    lam = summarize_lambda(lambdas, mass)
    ext = find_extrema(grid_mean)
    dpm_rows = {}
    for k in sorted(dpm_scalars):
        if k.startswith("beta_") or k.startswith("b_beta_") or k.startswith("mu0_") or k == "alpha":
            dpm_rows[k] = hpd_interval(dpm_scalars[k], mass)
        elif k.startswith("sigma_beta2_") or k.startswith("D0_") or k == "sigma_eps2":
            sd_name = {"sigma_eps2": "sigma_eps"}.get(k, "sd_" + k)
            dpm_rows[sd_name] = hpd_interval(np.sqrt(dpm_scalars[k]), mass)
    base_rows = {k: hpd_interval(v, mass) for k, v in base_scalars.items() if k.startswith("beta_")}
    base_rows["sigma_eps"] = hpd_interval(np.sqrt(base_scalars["sigma_eps2"]), mass)
    return {
        "sigma_u": hpd_interval(np.sqrt(base_scalars["sigma_u2"]), mass),
        "grid_region": density_hpd_region(grid_mean, mass),
        "icc": hpd_interval(base_scalars["icc"], mass),
        "lambda_hpd": lam.hpd,
        "lambda_mean": lam.mean,
        "lambda_infinite": lam.n_infinite,
        "grid_modes": ext.modes,
        "dpm": dpm_rows,
        "baseline": base_rows,
    }


def run_sim2(
    spec: Sim2Spec,
    hyper: DpmHyperparams | None = None,
    config: ChainConfig | None = None,
    priors: NormalHlmPriors | None = None,
    scenarios=None,
    prominence: float = 1.0,
) -> list[ScenarioResult]:
    """Generate, fit both models and collect results for each scenario.

    Streams come from ``spec.seed`` and the scenario number; ``config.seed``
    is not used.
    """
    hyper = hyper or DpmHyperparams()
    config = config or ChainConfig.desk()
    results = []
    for s in scenarios or spec.scenarios:
        data_rng, dpm_rng, base_rng = _scenario_rngs(spec.seed, s)
        table, u = simulate_sim2(spec, s, data_rng)
        design = build_design(table)
        draws = run_chain(design, hyper, config, rng=dpm_rng, prominence=prominence)
        base = fit_normal_hlm(design, priors, config, rng=base_rng)
        results.append(ScenarioResult(s, spec.component_vars[s - 1], table, u, draws, base))
    return results


# -- run directories and reports --------------------------------------------

def write_sim1(result: Sim1Result, out_dir) -> dict[str, Path]:
    out = Path(out_dir)
    cells = write_csv(out / "sim1_cells.csv",
                      ["alpha", "q_var", "seed", "lambda", "n_modes", "n_occupied"], result.rows)
    med = result.medians()
    medians = write_csv(out / "sim1_medians.csv", ["alpha", "q_var", "median_lambda"],
                        ([a, q, v] for (a, q), v in med.items()))
    (out / "sim1_spec.json").write_text(_json(result.spec.to_dict()))
    return {"cells": cells, "medians": medians, "spec": out / "sim1_spec.json"}


def write_sim2(results: list[ScenarioResult], spec: Sim2Spec, config: ChainConfig,
               hyper: DpmHyperparams, out_dir, plot: bool = False) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {}
    settings = {"sim2": spec.to_dict(), "scenarios": [r.scenario for r in results],
                "chain": config.to_dict(), "hyper": hyper.to_dict()}
    (out / "sim2_spec.json").write_text(_json(settings))
    paths["spec"] = out / "sim2_spec.json"
    for r in results:
        sdir = out / f"scenario_{r.scenario}"
        write_ratings(r.table, sdir / "data.csv")
        write_csv(sdir / "u_true.csv", ["rater_id", "u"], zip(r.table.rater_ids, r.u_true))
        write_dpm_outputs(r.dpm, sdir / "dpm", r.table.rater_ids, plot=plot)
        write_baseline_outputs(r.baseline, sdir / "baseline", r.table.rater_ids)
        paths[f"scenario_{r.scenario}"] = sdir
    return paths


def _json(obj) -> str:
    import json
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _fmt_iv(iv) -> str:
    return "n/a" if iv is None else f"({iv[0]:.2f}, {iv[1]:.2f})"


def _table(header: list[str], rows: list[list[str]]) -> list[str]:
    lines = ["| " + " | ".join(header) + " |", "|" + "|".join("---" for _ in header) + "|"]
    lines += ["| " + " | ".join(r) + " |" for r in rows]
    return lines


def _baseline_scalars(path: Path) -> dict[str, np.ndarray]:
    header, rows = read_csv(path)
    cols = np.array([[float(v) for v in r] for r in rows]).reshape(len(rows), len(header))
    return {h: cols[:, j] for j, h in enumerate(header) if h != "iteration"}


def _dpm_scalars(path: Path) -> dict[str, np.ndarray]:
    sc = _baseline_scalars(path)
    sc.pop("n_modes", None)
    sc.pop("n_occupied", None)
    return sc


def summarize(run_dir, mass: float = 0.95) -> str:
    """Build the report for a run directory written by the simulate command.

    The text depends only on the files in ``run_dir`` (no timings), so the
    same seed gives a byte-identical report.
    """
    run_dir = Path(run_dir)
    lines: list[str] = ["# Simulation report", ""]
    found = False
    if (run_dir / "sim1_cells.csv").exists():
        found = True
        lines += _sim1_section(run_dir)
    if (run_dir / "sim2_spec.json").exists():
        found = True
        lines += _sim2_section(run_dir, mass)
    if not found:
        raise FileNotFoundError(f"{run_dir}: no simulation outputs (sim1_cells.csv or sim2_spec.json)")
    return "\n".join(lines).rstrip() + "\n"


def _sim1_section(run_dir: Path) -> list[str]:
    import json
    spec = json.loads((run_dir / "sim1_spec.json").read_text())
    header, rows = read_csv(run_dir / "sim1_cells.csv")
    cells: dict[tuple[float, float], list[float]] = {}
    for r in rows:
        cells.setdefault((float(r[0]), float(r[1])), []).append(float(r[3]))
    lines = ["## Simulation 1: realised DPM densities", "",
             f"n = {spec['n']}, R = {spec['R']}, G0 = U({spec['g0'][0]:g}, {spec['g0'][1]:g}), "
             f"grid {spec['grid']}, seeds {spec['seeds'][0]}..{spec['seeds'][-1]} ({len(spec['seeds'])}), "
             f"spec hash {config_hash(spec)}", ""]
    table_rows = []
    for (a, q), vals in cells.items():
        v = np.asarray(vals)
        table_rows.append([f"{a:g}", f"{q:g}", f"{np.median(v):.3f}", f"{np.mean(v > 0):.2f}"])
    lines += _table(["alpha", "Q", "median lambda", "share multimodal"], table_rows) + [""]
    lines += ["Files: sim1_cells.csv (per seed), sim1_medians.csv", ""]
    return lines


def _sim2_section(run_dir: Path, mass: float) -> list[str]:
    import json
    settings = json.loads((run_dir / "sim2_spec.json").read_text())
    spec = settings["sim2"]
    lines = ["## Simulation 2: DPM and normal baseline", "",
             f"I = {spec['I']}, items per rater = {spec['items_per_rater']}, beta = {spec['beta_true']:g}, "
             f"sigma_eps = {spec['sigma_eps']:g}, locations = {spec['locations']}, seed = {spec['seed']}",
             f"chain {settings['chain']['iterations']}/{settings['chain']['burn_in']}/{settings['chain']['thin']} "
             f"(iterations/burn-in/thin), config hash {config_hash(settings)}", ""]
    summaries = {}
    for s in settings.get("scenarios", range(1, len(spec["component_vars"]) + 1)):
        sdir = run_dir / f"scenario_{s}"
        needed = {"lambda": sdir / "dpm" / "lambda.csv", "grid density": sdir / "dpm" / "grid_density.csv",
                  "DPM draws": sdir / "dpm" / "draws.csv", "baseline draws": sdir / "baseline" / "draws.csv"}
        for what, p in needed.items():
            if not p.exists():
                raise FileNotFoundError(f"scenario {s}: missing {what} file {p}")
        summaries[s] = scenario_summary(_dpm_scalars(needed["DPM draws"]), read_lambda(needed["lambda"]),
                                        density_from_file(needed["grid density"]),
                                        _baseline_scalars(needed["baseline draws"]), mass)
    pct = f"{mass * 100:g}%"

    def region(rs):
        return " U ".join(f"({a:.2f}, {b:.2f})" for a, b, _ in rs)

    lines += [f"### sigma_u (baseline) and grid density region (DPM), {pct} HPD", ""]
    lines += _table(["scenario", "Q", "sigma_u", "grid density"],
                    [[str(s), f"{spec['component_vars'][s - 1]:g}", _fmt_iv(v["sigma_u"]), region(v["grid_region"])]
                     for s, v in summaries.items()]) + [""]
    lines += [f"### ICC (baseline) and lambda (DPM), {pct} HPD", ""]
    lines += _table(["scenario", "ICC", "lambda", "lambda mean", "lambda = inf"],
                    [[str(s), _fmt_iv(v["icc"]), _fmt_iv(v["lambda_hpd"]), f"{v['lambda_mean']:.3f}",
                      str(v["lambda_infinite"])] for s, v in summaries.items()]) + [""]
    keys = list(next(iter(summaries.values()))["dpm"])
    lines += [f"### DPM parameters, {pct} HPD", ""]
    lines += _table(["parameter"] + [f"scenario {s}" for s in summaries],
                    [[k] + [_fmt_iv(v["dpm"][k]) for v in summaries.values()] for k in keys]) + [""]
    keys = list(next(iter(summaries.values()))["baseline"])
    lines += [f"### Baseline parameters, {pct} HPD", ""]
    lines += _table(["parameter"] + [f"scenario {s}" for s in summaries],
                    [[k] + [_fmt_iv(v["baseline"][k]) for v in summaries.values()] for k in keys]) + [""]
    lines += ["### Posterior mean grid density: region peaks", ""]
    for s, v in summaries.items():
        peaks = ", ".join(f"{p:.2f}" for _, _, p in v["grid_region"])
        lines.append(f"- scenario {s}: peaks at {peaks}; {len(v['grid_modes'])} local modes on the grid")
    lines += ["", "Files per scenario: data.csv, u_true.csv, dpm/{draws,effects,lambda,grid_density}.csv, "
              "dpm/traces/, baseline/{draws,effects}.csv", ""]
    return lines


def load_scenario_table(run_dir, scenario: int) -> RatingsTable:
    return load_ratings(Path(run_dir) / f"scenario_{scenario}" / "data.csv")
