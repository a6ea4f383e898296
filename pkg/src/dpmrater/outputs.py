"""On-disk formats: draw tables, grid-density matrices, traces, configs and
run manifests.

Floats are written with ``repr`` so files round-trip exactly and two runs
with the same seed produce byte-identical output.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
import platform
import tempfile
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .gibbs import ChainConfig, DpmHyperparams, PosteriorDraws
from .polarization import GridDensity, GridSpec

__all__ = [
    "EffectiveConfig",
    "load_config",
    "config_hash",
    "write_csv",
    "read_csv",
    "write_dpm_outputs",
    "write_baseline_outputs",
    "read_lambda",
    "read_grid_density",
    "RunManifest",
    "file_sha256",
]


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    if isinstance(v, str):
        return v
    return repr(float(v))


def write_csv(path, header: list[str], rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    path = Path(path)
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty file")
    return rows[0], rows[1:]


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


# -- configuration ----------------------------------------------------------

_CHAIN_KEYS = {"iterations", "burn_in", "thin", "seed", "grid"}


@dataclass
class EffectiveConfig:
    """Sampler settings after merging defaults, a config file and CLI flags."""

    hyper: DpmHyperparams = field(default_factory=DpmHyperparams)
    chain: ChainConfig = field(default_factory=ChainConfig)
    baseline: dict = field(default_factory=dict)
    prominence: float = 1.0

    def to_dict(self) -> dict:
        return {"hyper": self.hyper.to_dict(), "chain": self.chain.to_dict(),
                "baseline": dict(self.baseline), "prominence": self.prominence}


def load_config(path=None, overrides: dict | None = None, base: dict | None = None) -> EffectiveConfig:
    """Merge ``base`` defaults < JSON file < ``overrides`` into an EffectiveConfig.

    The file is a flat JSON object whose keys are hyperparameter names,
    chain settings (``iterations``, ``burn_in``, ``thin``, ``seed``,
    ``grid`` as ``"lo:hi:step"``), ``prominence``, or a ``baseline`` object
    of normal-model priors.  Unknown keys are rejected.
    """
    merged: dict = dict(base or {})
    if path is not None:
        try:
            data = json.loads(Path(path).read_text())
        except FileNotFoundError:
            raise ValueError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}: invalid JSON config: {exc}") from None
        if not isinstance(data, dict):
            raise ValueError(f"{path}: config must be a JSON object")
        merged.update(data)
    merged.update({k: v for k, v in (overrides or {}).items() if v is not None})

    hyper_keys = {f.name for f in fields(DpmHyperparams)}
    unknown = set(merged) - hyper_keys - _CHAIN_KEYS - {"baseline", "prominence"}
    if unknown:
        raise ValueError(f"unknown config key(s): {', '.join(sorted(unknown))}")
    hyper = DpmHyperparams(**{k: v for k, v in merged.items() if k in hyper_keys})
    chain_kw = {k: merged[k] for k in _CHAIN_KEYS if k in merged}
    if isinstance(chain_kw.get("grid"), str):
        chain_kw["grid"] = GridSpec.parse(chain_kw["grid"])
    for k in ("iterations", "burn_in", "thin", "seed"):
        if k in chain_kw:
            chain_kw[k] = int(chain_kw[k])
    chain = ChainConfig(**chain_kw)
    prominence = float(merged.get("prominence", 1.0))
    if prominence < 1.0:
        raise ValueError("prominence must be >= 1")
    return EffectiveConfig(hyper, chain, dict(merged.get("baseline", {})), prominence)


def config_hash(cfg: dict) -> str:
    text = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()[:16]


# -- fitted-model outputs ---------------------------------------------------

def write_dpm_outputs(draws: PosteriorDraws, out_dir, rater_ids=None, plot: bool = False) -> dict[str, Path]:
    """Write draws.csv, effects.csv, lambda.csv, grid_density.csv and traces/."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    names = list(draws.scalars)
    cols = [draws.iteration] + [draws.scalars[k] for k in names]
    header = ["iteration"] + names
    if draws.n_modes is not None:
        header.append("n_modes")
        cols.append(draws.n_modes)
    paths = {"draws": write_csv(out / "draws.csv", header, zip(*cols))}

    n, I, q = draws.u.shape
    ids = list(rater_ids) if rater_ids is not None else list(range(1, I + 1))
    eff_header = ["iteration"] + [f"u_{ids[i]}" if q == 1 else f"u_{ids[i]}_{d + 1}"
                                  for i in range(I) for d in range(q)]
    paths["effects"] = write_csv(out / "effects.csv", eff_header,
                                 ([t] + list(row) for t, row in zip(draws.iteration, draws.u.reshape(n, I * q))))

    traces = out / "traces"
    for k in names:
        write_csv(traces / f"{k}.csv", ["iteration", k], zip(draws.iteration, draws.scalars[k]))
    paths["traces"] = traces

    if draws.lambdas is not None:
        paths["lambda"] = write_csv(out / "lambda.csv", ["lambda"], ([v] for v in draws.lambdas))
        write_csv(traces / "lambda.csv", ["iteration", "lambda"], zip(draws.iteration, draws.lambdas))
        dens = np.exp(draws.grid_log_density)
        mean = draws.grid_mean().values
        gx = draws.grid.x
        rows = [[int(t)] + list(r) for t, r in zip(draws.iteration, dens)]
        rows.append(["mean"] + list(mean))
        paths["grid_density"] = write_csv(out / "grid_density.csv",
                                          ["iteration"] + [repr(float(x)) for x in gx], rows)
        if plot:
            paths.update(_plot_dpm(draws, out))
    return paths


def write_baseline_outputs(post, out_dir, rater_ids=None) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    sc = post.scalars()
    names = list(sc)
    paths = {"draws": write_csv(out / "draws.csv", ["iteration"] + names,
                                zip(post.iteration, *[sc[k] for k in names]))}
    I = post.u.shape[1]
    ids = list(rater_ids) if rater_ids is not None else list(range(1, I + 1))
    paths["effects"] = write_csv(out / "effects.csv", ["iteration"] + [f"u_{i}" for i in ids],
                                 ([t] + list(r) for t, r in zip(post.iteration, post.u)))
    for k in names:
        write_csv(out / "traces" / f"{k}.csv", ["iteration", k], zip(post.iteration, sc[k]))
    paths["traces"] = out / "traces"
    return paths


def read_lambda(path) -> np.ndarray:
    header, rows = read_csv(path)
    if header != ["lambda"]:
        raise ValueError(f"{path}: expected a single 'lambda' column")
    return np.array([float(r[0]) for r in rows])


def read_grid_density(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return (grid x, per-iteration densities, mean row) from grid_density.csv."""
    header, rows = read_csv(path)
    x = np.array([float(h) for h in header[1:]])
    body = [r for r in rows if r[0] != "mean"]
    mean = [r for r in rows if r[0] == "mean"]
    dens = np.array([[float(v) for v in r[1:]] for r in body]).reshape(len(body), x.size)
    mean_row = np.array([float(v) for v in mean[0][1:]]) if mean else dens.mean(axis=0)
    return x, dens, mean_row


def grid_from_points(x: np.ndarray) -> GridSpec:
    step = float(np.round((x[-1] - x[0]) / (x.size - 1), 12))
    return GridSpec(float(x[0]), float(x[-1]), step)


def density_from_file(path, row: str | int = "mean") -> GridDensity:
    x, dens, mean = read_grid_density(path)
    values = mean if row == "mean" else dens[int(row)]
    return GridDensity.from_values(grid_from_points(x), values)


def _plot_dpm(draws: PosteriorDraws, out: Path) -> dict[str, Path]:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "dpmrater"
    meta = {"Date": None}
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.plot(draws.grid.x, draws.grid_mean().values, lw=1.2)
    ax.set_xlabel("rater effect")
    ax.set_ylabel("posterior mean density")
    fig.tight_layout()
    dens_path = out / "grid_density.svg"
    fig.savefig(dens_path, metadata=meta)
    plt.close(fig)

    keys = [k for k in ("alpha", "sigma_eps2", "n_occupied") if k in draws.scalars]
    fig, axes = plt.subplots(len(keys) + 1, 1, figsize=(6, 1.6 * (len(keys) + 1)), sharex=True)
    for ax, k in zip(axes, keys):
        ax.plot(draws.iteration, draws.scalars[k], lw=0.6)
        ax.set_ylabel(k)
    axes[-1].plot(draws.iteration, draws.lambdas, lw=0.6)
    axes[-1].set_ylabel("lambda")
    axes[-1].set_xlabel("iteration")
    fig.tight_layout()
    trace_path = out / "traces.svg"
    fig.savefig(trace_path, metadata=meta)
    plt.close(fig)
    return {"plot_density": dens_path, "plot_traces": trace_path}


# -- manifest ---------------------------------------------------------------

@dataclass
class RunManifest:
    """Everything needed to replay a run: argv, effective config, seed, hashes."""

    command: str
    argv: list[str]
    config: dict
    seed: int | None
    inputs: dict[str, str] = field(default_factory=dict)
    outputs: dict[str, str] = field(default_factory=dict)
    seconds: float = 0.0

    def add_outputs(self, root, paths) -> None:
        root = Path(root)
        for p in sorted(Path(p) for p in paths):
            files = sorted(f for f in p.rglob("*") if f.is_file()) if p.is_dir() else [p]
            for f in files:
                if f.name == "manifest.json":
                    continue
                self.outputs[str(f.relative_to(root))] = file_sha256(f)

    def to_dict(self) -> dict:
        import numpy
        import scipy
        return {
            "command": self.command,
            "argv": self.argv,
            "config": self.config,
            "config_hash": config_hash(self.config),
            "seed": self.seed,
            "inputs": self.inputs,
            "outputs": dict(sorted(self.outputs.items())),
            "seconds": round(self.seconds, 3),
            "versions": {"python": platform.python_version(), "numpy": numpy.__version__,
                         "scipy": scipy.__version__, "dpmrater": _own_version()},
        }

    def write(self, path) -> Path:
        """Atomic write: a temp file in the same directory, then rename."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".manifest-", suffix=".json")
        with os.fdopen(fd, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=False)
            fh.write("\n")
        os.replace(tmp, path)
        return path

    @staticmethod
    def read(path) -> dict:
        return json.loads(Path(path).read_text())


def _own_version() -> str:
    from . import __version__
    return __version__


