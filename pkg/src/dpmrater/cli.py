"""Command-line interface: ``dpmrater <command> [options]``.

Commands
    simulate sim1|sim2   simulation studies (sim2 data only unless --fit)
    fit-dpm              DPM rater-effect model on a ratings CSV
    fit-normal           normal varying-intercept baseline and ICC
    lambda               lambda of a mixture, a grid-density file or lambda draws
    polya-urn            Polya-urn cluster counts against the closed form
    report               report for a simulate run directory
    replay               re-run a manifest and compare output hashes
"""

from __future__ import annotations

import argparse
import math
import re
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import rand
from .baseline import NormalHlmPriors, fit_normal_hlm
from .data import RatingsError, build_design, load_ratings
from .dpm import polya_urn_expected_clusters
from .experiments import Sim1Spec, Sim2Spec, run_sim1, run_sim2, simulate_sim2, summarize, write_sim1, write_sim2
from .gibbs import ChainConfig, ChainError, PosteriorDraws, run_chain
from .outputs import (RunManifest, density_from_file, file_sha256, load_config, read_lambda,
                      write_baseline_outputs, write_dpm_outputs)
from .polarization import GridSpec, find_extrema, lambda_index, mixture_density_on_grid, summarize_lambda

DESK = {"iterations": 6_000, "burn_in": 1_000, "thin": 5}
FULL = {"iterations": 55_000, "burn_in": 5_000, "thin": 50}

_COMPONENT = re.compile(r"^\s*([^:]+)\s*:\s*N\(\s*([^,()]+)\s*,\s*([^,()]+)\s*\)\s*$")


def parse_mixture(text: str) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Parse ``"w1:N(mean1,var1),w2:N(mean2,var2),..."`` (second argument is a variance)."""
    parts = re.findall(r"[^,]+:N\([^)]*\)", text.replace(" ", ""))
    if not parts or ",".join(parts) != text.replace(" ", ""):
        raise ValueError(f"cannot parse mixture {text!r}; expected e.g. '0.5:N(-3,1),0.5:N(3,1)'")
    w, mu, var = [], [], []
    for p in parts:
        m = _COMPONENT.match(p)
        if m is None:
            raise ValueError(f"cannot parse mixture component {p!r}")
        w.append(float(m.group(1)))
        mu.append(float(m.group(2)))
        var.append(float(m.group(3)))
    return np.array(w), np.array(mu), np.array(var)


def _grid(text: str) -> GridSpec:
    try:
        return GridSpec.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _chain_flags(p: argparse.ArgumentParser, scale_default: str) -> None:
    p.add_argument("--config", help="JSON config (hyperparameters and chain settings)")
    p.add_argument("--seed", type=int)
    p.add_argument("--iterations", type=int)
    p.add_argument("--burn-in", type=int, dest="burn_in")
    p.add_argument("--thin", type=int)
    p.add_argument("--truncation", type=int, dest="R", help="truncation level R")
    p.add_argument("--grid", type=_grid, help="density grid lo:hi:step")
    p.add_argument("--prominence", type=float, help="mode prominence factor (>= 1; 1 = off)")
    scale = p.add_mutually_exclusive_group()
    scale.add_argument("--desk", dest="scale", action="store_const", const="desk",
                       help="6000 iterations, 1000 burn-in, thin 5")
    scale.add_argument("--paper-scale", dest="scale", action="store_const", const="full",
                       help="55000 iterations, 5000 burn-in, thin 50")
    p.set_defaults(scale=scale_default)


def _effective(args):
    base = dict(DESK if args.scale == "desk" else FULL)
    overrides = {
        "seed": args.seed, "iterations": args.iterations, "burn_in": args.burn_in, "thin": args.thin,
        "R": args.R, "grid": str(args.grid) if args.grid else None, "prominence": args.prominence,
    }
    if getattr(args, "with_item_effects", False):
        overrides["with_item_effects"] = True
    return load_config(args.config, overrides, base)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dpmrater", description=__doc__.split("\n\n")[0])
    sub = ap.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="simulation studies")
    simsub = sim.add_subparsers(dest="study", required=True)
    s1 = simsub.add_parser("sim1", help="lambda of realised truncated DPM densities")
    s1.add_argument("--config", help="JSON Sim1 settings")
    s1.add_argument("--seed", type=int, default=0, help="first seed")
    s1.add_argument("--seeds", type=int, help="number of seeds (default 20)")
    s1.add_argument("--grid", type=_grid)
    s1.add_argument("--truncation", type=int, dest="R")
    s1.add_argument("--out", required=True)
    s2 = simsub.add_parser("sim2", help="bimodal rater-effect scenarios")
    _chain_flags(s2, "desk")
    s2.add_argument("--scenario", type=int, action="append", help="scenario number (repeatable; default all)")
    s2.add_argument("--raters", type=int, help="number of raters (desk 50, full scale 100)")
    s2.add_argument("--items-per-rater", type=int)
    s2.add_argument("--sim-config", help="JSON Sim2 settings")
    s2.add_argument("--fit", action="store_true", help="fit both models and write the report")
    s2.add_argument("--plot", action="store_true", help="also write SVG plots (needs matplotlib)")
    s2.add_argument("--out", required=True)

    fd = sub.add_parser("fit-dpm", help="fit the DPM rater-effect model")
    fd.add_argument("--data", required=True)
    _chain_flags(fd, "full")
    fd.add_argument("--chains", type=int, default=1)
    fd.add_argument("--with-item-effects", action="store_true")
    fd.add_argument("--multiple-ratings", action="store_true", help="items may be rated by several raters")
    fd.add_argument("--random-slopes", action="store_true", help="use the z columns instead of an intercept")
    fd.add_argument("--plot", action="store_true")
    fd.add_argument("--out", required=True)

    fn = sub.add_parser("fit-normal", help="fit the normal varying-intercept baseline")
    fn.add_argument("--data", required=True)
    _chain_flags(fn, "full")
    fn.add_argument("--multiple-ratings", action="store_true")
    fn.add_argument("--out", required=True)

    lam = sub.add_parser("lambda", help="lambda of a density")
    src = lam.add_mutually_exclusive_group(required=True)
    src.add_argument("--mixture", help="e.g. '0.5:N(-3,1),0.5:N(3,1)' (mean, variance)")
    src.add_argument("--density", help="grid_density.csv")
    src.add_argument("--draws", help="lambda.csv of per-iteration values")
    lam.add_argument("--row", default="mean", help="row of the density file: 'mean' or a 0-based index")
    lam.add_argument("--grid", type=_grid, default=GridSpec())
    lam.add_argument("--prominence", type=float, default=1.0)
    lam.add_argument("--verbose", action="store_true", help="also print modes and antimodes")

    pu = sub.add_parser("polya-urn", help="Polya-urn cluster counts")
    pu.add_argument("--alpha", type=float, default=1.0)
    pu.add_argument("--n", type=int, default=500)
    pu.add_argument("--reps", type=int, default=5_000)
    pu.add_argument("--seed", type=int, default=0)

    rp = sub.add_parser("report", help="report for a simulate run directory")
    rp.add_argument("run_dir")
    rp.add_argument("--out", help="write here instead of RUN_DIR/report.md")

    rl = sub.add_parser("replay", help="re-run a manifest into a new directory and compare hashes")
    rl.add_argument("manifest")
    rl.add_argument("--out", required=True)
    return ap


def _join_negative_values(argv: list[str]) -> list[str]:
    # "--grid -12:12:0.05" would be read as two options
    out, i = [], 0
    while i < len(argv):
        if argv[i] == "--grid" and i + 1 < len(argv) and argv[i + 1].startswith("-"):
            out.append(f"--grid={argv[i + 1]}")
            i += 2
        else:
            out.append(argv[i])
            i += 1
    return out


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(_join_negative_values(argv))
    try:
        return _dispatch(args, argv)
    except (RatingsError, ValueError, FileNotFoundError, ChainError) as exc:
        print(f"dpmrater: error: {exc}", file=sys.stderr)
        return 1


def _dispatch(args, argv) -> int:
    if args.command == "lambda":
        return _cmd_lambda(args)
    if args.command == "polya-urn":
        return _cmd_polya(args)
    if args.command == "report":
        return _cmd_report(args)
    if args.command == "replay":
        return _cmd_replay(args)
    t0 = time.perf_counter()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.command == "simulate":
        manifest = _cmd_sim1(args, argv, out) if args.study == "sim1" else _cmd_sim2(args, argv, out)
    elif args.command == "fit-dpm":
        manifest = _cmd_fit_dpm(args, argv, out)
    else:
        manifest = _cmd_fit_normal(args, argv, out)
    manifest.seconds = time.perf_counter() - t0
    manifest.add_outputs(out, [out])
    manifest.write(out / "manifest.json")
    print(f"wrote {len(manifest.outputs)} files to {out}")
    return 0


def _cmd_sim1(args, argv, out: Path) -> RunManifest:
    import json
    d = json.loads(Path(args.config).read_text()) if args.config else {}
    if args.seeds is not None or "seeds" not in d:
        d["seeds"] = list(range(args.seed, args.seed + (args.seeds or 20)))
    if args.grid:
        d["grid"] = str(args.grid)
    if args.R:
        d["R"] = args.R
    spec = Sim1Spec.from_dict(d)
    result = run_sim1(spec)
    write_sim1(result, out)
    (out / "report.md").write_text(summarize(out))
    for (a, q), v in result.medians().items():
        print(f"alpha={a:g} Q={q:g} median lambda={v:.3f}")
    return RunManifest("simulate sim1", argv, spec.to_dict(), spec.seeds[0])


def _cmd_sim2(args, argv, out: Path) -> RunManifest:
    import json
    cfg = _effective(args)
    d = json.loads(Path(args.sim_config).read_text()) if args.sim_config else {}
    d.setdefault("I", 50 if args.scale == "desk" else 100)
    if args.raters:
        d["I"] = args.raters
    if args.items_per_rater:
        d["items_per_rater"] = args.items_per_rater
    d["seed"] = cfg.chain.seed
    spec = Sim2Spec.from_dict(d)
    scenarios = tuple(args.scenario or spec.scenarios)
    for s in scenarios:
        if s not in spec.scenarios:
            raise ValueError(f"scenario must be one of {spec.scenarios}, got {s}")
    config = {"sim2": spec.to_dict(), "scenarios": list(scenarios), **cfg.to_dict()}
    if not args.fit:
        from .data import write_ratings
        from .outputs import write_csv
        for s in scenarios:
            table, u = simulate_sim2(spec, s)
            write_ratings(table, out / f"scenario_{s}" / "data.csv")
            write_csv(out / f"scenario_{s}" / "u_true.csv", ["rater_id", "u"], zip(table.rater_ids, u))
        return RunManifest("simulate sim2", argv, config, spec.seed)
    priors = NormalHlmPriors.from_dict(cfg.baseline)
    results = run_sim2(spec, cfg.hyper, cfg.chain, priors, scenarios, cfg.prominence)
    write_sim2(results, spec, cfg.chain, cfg.hyper, out, plot=args.plot)
    (out / "report.md").write_text(summarize(out))
    for r in results:
        lp = r.dpm.lambda_posterior()
        print(f"scenario {r.scenario}: lambda mean {lp.mean:.3f}, ICC mean {float(np.mean(r.baseline.icc)):.3f}")
    return RunManifest("simulate sim2", argv, config, spec.seed)


def _run_one_chain(job):
    design, hyper, chain, rng, prominence = job
    return run_chain(design, hyper, chain, rng=rng, prominence=prominence)


def _cmd_fit_dpm(args, argv, out: Path) -> RunManifest:
    cfg = _effective(args)
    table = load_ratings(args.data, multiple_ratings=args.multiple_ratings)
    design = build_design(table, intercept_only=not args.random_slopes)
    k = args.chains
    if k < 1:
        raise ValueError("--chains must be >= 1")
    rngs = [rand.make_rng(cfg.chain.seed)] if k == 1 else rand.spawn_rngs(cfg.chain.seed, k)
    jobs = [(design, cfg.hyper, cfg.chain, r, cfg.prominence) for r in rngs]
    if k == 1:
        parts = [_run_one_chain(jobs[0])]
    else:
        import os
        with ProcessPoolExecutor(max_workers=min(k, os.cpu_count() or 1)) as pool:
            parts = list(pool.map(_run_one_chain, jobs))
        for c, part in enumerate(parts, start=1):
            write_dpm_outputs(part, out / f"chain_{c}", table.rater_ids)
    draws = parts[0] if k == 1 else PosteriorDraws.merge(parts)
    write_dpm_outputs(draws, out, table.rater_ids, plot=args.plot)
    if draws.lambdas is not None:
        lp = draws.lambda_posterior()
        hpd = "n/a" if lp.hpd is None else f"({lp.hpd[0]:.3f}, {lp.hpd[1]:.3f})"
        print(f"lambda posterior mean {lp.mean:.3f}, 95% HPD {hpd}, infinite {lp.n_infinite}")
    config = {**cfg.to_dict(), "chains": k, "multiple_ratings": args.multiple_ratings,
              "random_slopes": args.random_slopes}
    return RunManifest("fit-dpm", argv, config, cfg.chain.seed, inputs={args.data: file_sha256(args.data)})


def _cmd_fit_normal(args, argv, out: Path) -> RunManifest:
    cfg = _effective(args)
    table = load_ratings(args.data, multiple_ratings=args.multiple_ratings)
    design = build_design(table)
    priors = NormalHlmPriors.from_dict(cfg.baseline)
    post = fit_normal_hlm(design, priors, cfg.chain, rng=rand.make_rng(cfg.chain.seed))
    write_baseline_outputs(post, out, table.rater_ids)
    lo, hi = post.hpd("icc")
    print(f"ICC posterior mean {float(np.mean(post.icc)):.3f}, 95% HPD ({lo:.3f}, {hi:.3f})")
    config = {"chain": cfg.chain.to_dict(), "baseline": priors.to_dict(), "note": post.meta["prior_note"]}
    return RunManifest("fit-normal", argv, config, cfg.chain.seed, inputs={args.data: file_sha256(args.data)})


def _cmd_lambda(args) -> int:
    if args.draws:
        lp = summarize_lambda(read_lambda(args.draws))
        hpd = "n/a" if lp.hpd is None else f"({lp.hpd[0]:.3f}, {lp.hpd[1]:.3f})"
        print(f"mean {lp.mean:.3f}  95% HPD {hpd}  draws {lp.values.size}  infinite {lp.n_infinite}")
        return 0
    if args.mixture:
        w, mu, var = parse_mixture(args.mixture)
        density = mixture_density_on_grid(w, mu, var, args.grid)
    else:
        density = density_from_file(args.density, args.row)
    ext = find_extrema(density, args.prominence)
    lam = lambda_index(ext)
    print("inf" if math.isinf(lam) else f"{lam:.3f}")
    if args.verbose:
        for x, f in ext.modes:
            print(f"mode {x:g} density {f:.6g}")
        for x, f in ext.antimodes:
            print(f"antimode {x:g} density {f:.6g}")
    return 0


def _cmd_polya(args) -> int:
    from scipy.special import digamma
    mc, approx = polya_urn_expected_clusters(args.alpha, args.n, args.reps, rand.make_rng(args.seed))
    exact = args.alpha * (digamma(args.alpha + args.n) - digamma(args.alpha))
    print(f"monte carlo mean clusters {mc:.4f}")
    print(f"alpha*ln((n+alpha)/alpha) {approx:.4f} (relative difference {(mc - approx) / approx:+.2%})")
    print(f"exact expectation {exact:.4f} (relative difference {(mc - exact) / exact:+.2%})")
    return 0


def _cmd_report(args) -> int:
    text = summarize(args.run_dir)
    path = Path(args.out) if args.out else Path(args.run_dir) / "report.md"
    path.write_text(text)
    print(f"wrote {path}")
    return 0


def _cmd_replay(args) -> int:
    old = RunManifest.read(args.manifest)
    argv = list(old["argv"])
    if "--out" not in argv:
        raise ValueError("manifest argv has no --out")
    argv[argv.index("--out") + 1] = args.out
    code = main(argv)
    if code:
        return code
    new = RunManifest.read(Path(args.out) / "manifest.json")
    diff = sorted(k for k in set(old["outputs"]) | set(new["outputs"])
                  if old["outputs"].get(k) != new["outputs"].get(k))
    if diff:
        print(f"replay differs in {len(diff)} file(s): {', '.join(diff[:10])}", file=sys.stderr)
        return 1
    print(f"replay identical: {len(new['outputs'])} files")
    return 0


if __name__ == "__main__":
    sys.exit(main())
