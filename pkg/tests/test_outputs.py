from __future__ import annotations

import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from dpmrater.baseline import fit_normal_hlm
from dpmrater.data import build_design
from dpmrater.gibbs import ChainConfig, DpmHyperparams, run_chain
from dpmrater.outputs import (RunManifest, config_hash, density_from_file, file_sha256, load_config, read_csv,
                              read_grid_density, read_lambda, write_baseline_outputs, write_csv, write_dpm_outputs)
from dpmrater.polarization import density_lambda

from conftest import two_cluster_table


def test_config_precedence(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"iterations": 500, "thin": 5, "a_alpha": 3.0, "grid": "-5:5:0.5"}))
    cfg = load_config(p, overrides={"thin": 2, "seed": None}, base={"iterations": 100, "burn_in": 50, "seed": 7})
    assert cfg.chain.iterations == 500  # file beats base
    assert cfg.chain.thin == 2  # override beats file
    assert cfg.chain.burn_in == 50 and cfg.chain.seed == 7  # None overrides are ignored
    assert cfg.hyper.a_alpha == 3.0 and cfg.chain.grid.points == 21


@pytest.mark.parametrize("text, message", [('{"alpha0": 1}', "unknown config key"), ("[1, 2]", "JSON object"),
                                           ("{bad", "invalid JSON"), ('{"prominence": 0.5}', "prominence")])
def test_config_errors(tmp_path, text, message):
    p = tmp_path / "c.json"
    p.write_text(text)
    with pytest.raises(ValueError, match=message):
        load_config(p)


def test_missing_config_file(tmp_path):
    with pytest.raises(ValueError, match="not found"):
        load_config(tmp_path / "nope.json")


def test_config_hash_ignores_key_order():
    assert config_hash({"a": 1, "b": [1, 2]}) == config_hash({"b": [1, 2], "a": 1})
    assert config_hash({"a": 1}) != config_hash({"a": 2})
    assert len(config_hash({})) == 16


@given(st.lists(st.tuples(st.integers(-10**6, 10**6), st.floats(allow_nan=False)), max_size=20))
def test_csv_round_trip_is_exact(tmp_path_factory, rows):
    p = write_csv(tmp_path_factory.mktemp("csv") / "sub" / "t.csv", ["k", "v"], rows)
    header, back = read_csv(p)
    assert header == ["k", "v"]
    assert [(int(a), float(b)) for a, b in back] == [(a, float(b)) for a, b in rows]


@pytest.fixture(scope="module")
def fitted():
    table, _ = two_cluster_table(n_raters=12, per_rater=6)
    d = build_design(table)
    draws = run_chain(d, DpmHyperparams(), ChainConfig(150, 50, 4, seed=3))
    base = fit_normal_hlm(d, config=ChainConfig(150, 50, 4, seed=3))
    return table, draws, base


def test_dpm_outputs_round_trip(tmp_path, fitted):
    table, draws, _ = fitted
    paths = write_dpm_outputs(draws, tmp_path, table.rater_ids)
    assert np.array_equal(read_lambda(tmp_path / "lambda.csv"), draws.lambdas)
    x, dens, mean_row = read_grid_density(tmp_path / "grid_density.csv")
    assert dens.shape == (draws.n_retained, 481) and mean_row.shape == (481,)
    assert np.array_equal(x, draws.grid.x)
    assert np.allclose(dens, np.exp(draws.grid_log_density), rtol=1e-15, atol=0)
    mean = density_from_file(tmp_path / "grid_density.csv")
    assert np.allclose(mean.values, draws.grid_mean().values, rtol=1e-12)
    assert density_lambda(mean) == pytest.approx(density_lambda(draws.grid_mean()))
    header, rows = read_csv(tmp_path / "effects.csv")
    assert header[1:] == [f"u_{i}" for i in table.rater_ids]
    assert len(rows) == draws.n_retained
    assert (tmp_path / "traces" / "alpha.csv").exists()
    assert all(p.exists() for p in paths.values())


def test_baseline_outputs(tmp_path, fitted):
    table, _, base = fitted
    write_baseline_outputs(base, tmp_path, table.rater_ids)
    header, rows = read_csv(tmp_path / "draws.csv")
    assert header == ["iteration", "beta_1", "sigma_u2", "sigma_eps2", "icc"]
    assert len(rows) == base.n_retained


def test_outputs_are_byte_identical_for_same_draws(tmp_path, fitted):
    table, draws, _ = fitted
    write_dpm_outputs(draws, tmp_path / "a", table.rater_ids)
    write_dpm_outputs(draws, tmp_path / "b", table.rater_ids)
    for f in sorted((tmp_path / "a").rglob("*.csv")):
        assert file_sha256(f) == file_sha256(tmp_path / "b" / f.relative_to(tmp_path / "a"))


def test_manifest_round_trip(tmp_path):
    (tmp_path / "x.csv").write_text("a\n1\n")
    (tmp_path / "sub").mkdir()
    (tmp_path / "sub" / "y.csv").write_text("b\n2\n")
    m = RunManifest("fit-dpm", ["fit-dpm", "--seed", "1"], {"seed": 1}, 1)
    m.write(tmp_path / "manifest.json")
    m.add_outputs(tmp_path, [tmp_path])
    assert set(m.outputs) == {"x.csv", "sub/y.csv"}  # the manifest never hashes itself
    m.write(tmp_path / "manifest.json")
    back = RunManifest.read(tmp_path / "manifest.json")
    assert back["argv"] == ["fit-dpm", "--seed", "1"]
    assert back["config_hash"] == config_hash({"seed": 1})
    assert back["outputs"]["x.csv"] == file_sha256(tmp_path / "x.csv")
    assert {"python", "numpy", "scipy", "dpmrater"} <= set(back["versions"])
    assert not list(tmp_path.glob(".manifest-*"))
