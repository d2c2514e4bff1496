import json
import subprocess
import sys
import numpy as np
import pytest

from nishimc.config import ExperimentConfig, load_config
from nishimc.errors import ConfigError
from nishimc.harness import run, run_theory
from nishimc.plots import emit_plots, qq_max_deviation


def cli(*args):
    return subprocess.run([sys.executable, "-m", "nishimc.cli", *args],
                          capture_output=True, text=True)


# -- config ------------------------------------------------------------------


def test_load_config_defaults_and_overrides(tmp_path):
    path = tmp_path / "c.yaml"
    path.write_text("mode: theory\nlambda: 1.3\nchain:\n  burnin: 55\n")
    cfg = load_config(path, {"h": 0.2})
    assert cfg.mode == "theory" and cfg.lam == 1.3 and cfg.h == 0.2
    assert cfg.chain.burnin == 55
    cfg2 = load_config(path, {"lam": 2.0})
    assert cfg2.lam == 2.0  # flags win


def test_config_custom_prior_arrays(tmp_path):
    path = tmp_path / "c.yaml"
    path.write_text(
        "mode: theory\n"
        "prior:\n  atoms: [-1.0, 0.0, 1.0]\n  weights: [0.25, 0.5, 0.25]\n"
        "  label: spin1\n")
    p = load_config(path).resolve_prior()
    assert p.label == "spin1" and p.n_atoms == 3


def test_config_rejects_unknown_key(tmp_path):
    path = tmp_path / "c.yaml"
    path.write_text("mode: theory\nwavelength: 3\n")
    with pytest.raises(ConfigError):
        load_config(path)


def test_config_validation_errors():
    with pytest.raises(ConfigError):
        load_config(None, {"mode": "train"})
    with pytest.raises(ConfigError):
        load_config(None, {"mode": "theory", "lam": -1.0})
    with pytest.raises(ConfigError):
        load_config(None, {"mode": "simulate", "instances": 0})
    with pytest.raises(ConfigError):
        load_config(None, {"mode": "theory", "prior": "cosine"})


def test_config_hash_ignores_output_settings():
    a = ExperimentConfig(out="runs/a", workers=1, plots=False)
    b = ExperimentConfig(out="runs/b", workers=4, plots=True)
    assert a.config_hash() == b.config_hash()
    c = ExperimentConfig(seed=999)
    assert a.config_hash() != c.config_hash()


def test_instance_seed_derivation_is_stable():
    cfg = ExperimentConfig(instances=3, seed=7)
    assert cfg.instance_seeds() == cfg.instance_seeds()
    other = ExperimentConfig(instances=3, seed=8)
    assert cfg.instance_seeds() != other.instance_seeds()


# -- theory mode ---------------------------------------------------------------


def test_theory_json_spot_values(tmp_path):
    cfg = load_config(None, {"mode": "theory", "prior": "rademacher",
                             "lam": 0.5, "out": str(tmp_path)})
    doc = run_theory(cfg, tmp_path, echo=False)
    assert doc["qbar"] == pytest.approx(0.0, abs=1e-10)
    assert doc["A"] == pytest.approx(2.0, abs=1e-10)
    assert doc["B"] == pytest.approx(0.0, abs=1e-10)
    assert doc["C"] == pytest.approx(0.0, abs=1e-10)
    on_disk = json.loads((tmp_path / "theory.json").read_text())
    assert on_disk["config_hash"] == cfg.config_hash()
    assert on_disk["version"]


def test_theory_cli_with_n_check(tmp_path):
    r = cli("theory", "--prior", "rademacher", "--lambda", "1.5",
            "--n-check", "4", "--out", str(tmp_path))
    assert r.returncode == 0
    doc = json.loads(r.stdout)
    assert doc["n_check"]["agrees"] is True


# -- pipeline ------------------------------------------------------------------


PIPE_ARGS = ["--prior", "rademacher", "--lambda", "0.5", "--N", "40",
             "--instances", "45", "--replicas", "3", "--sweeps-burnin", "60",
             "--spacing", "8", "--samples", "3", "--seed", "11"]


def test_pipeline_end_to_end(tmp_path):
    r = cli("pipeline", *PIPE_ARGS, "--out", str(tmp_path / "run"))
    assert r.returncode == 0, r.stdout + r.stderr
    for name in ("theory.json", "run_meta.json", "report.json", "summary.json"):
        assert (tmp_path / "run" / name).exists()
    report = json.loads((tmp_path / "run" / "report.json").read_text())
    assert report["n_instances"] == 45
    assert abs(report["var_xi"] - 2.0) < 5 * report["var_xi_se"]
    summary = json.loads((tmp_path / "run" / "summary.json").read_text())
    assert {c["name"] for c in summary["checks"]} >= {"var_xi vs A", "nishimori gap ~ 0"}
    csvs = sorted((tmp_path / "run" / "samples" / "N40").glob("*.csv"))
    assert len(csvs) == 45
    head = csvs[0].read_text().splitlines()
    assert head[0].startswith("# nishimc")
    assert any(line.startswith("# config_hash:") for line in head)


def test_pipeline_byte_identical(tmp_path):
    for sub in ("a", "b"):
        r = cli("pipeline", *PIPE_ARGS, "--out", str(tmp_path / sub))
        assert r.returncode == 0
    a, b = tmp_path / "a", tmp_path / "b"
    files_a = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file())
    files_b = sorted(p.relative_to(b) for p in b.rglob("*") if p.is_file())
    assert files_a == files_b
    for rel in files_a:
        assert (a / rel).read_bytes() == (b / rel).read_bytes(), rel


def test_pipeline_worker_count_does_not_change_outputs(tmp_path):
    args = ["--prior", "rademacher", "--lambda", "0.5", "--N", "24",
            "--instances", "8", "--replicas", "2", "--sweeps-burnin", "20",
            "--spacing", "4", "--samples", "2", "--seed", "3"]
    r1 = cli("simulate", *args, "--workers", "1", "--out", str(tmp_path / "w1"))
    r2 = cli("simulate", *args, "--workers", "2", "--out", str(tmp_path / "w2"))
    assert r1.returncode == 0 and r2.returncode == 0
    for rel in sorted(p.relative_to(tmp_path / "w1")
                      for p in (tmp_path / "w1").rglob("*.csv")):
        assert (tmp_path / "w1" / rel).read_bytes() == (tmp_path / "w2" / rel).read_bytes()


def test_pipeline_zero_instances_is_config_error(tmp_path):
    r = cli("pipeline", "--prior", "rademacher", "--lambda", "0.5",
            "--instances", "0", "--out", str(tmp_path / "x"))
    assert r.returncode == 2


def test_analyze_missing_dir_is_io_error(tmp_path):
    r = cli("analyze", "--in", str(tmp_path / "nope"), "--out", str(tmp_path / "y"))
    assert r.returncode == 3


def test_analyze_standalone(tmp_path):
    out = tmp_path / "sim"
    r = cli("simulate", *PIPE_ARGS[:-2], "--seed", "12", "--out", str(out))
    assert r.returncode == 0
    r2 = cli("analyze", "--in", str(out), "--replicas", "3", "--out", str(out))
    assert r2.returncode == 0
    assert (out / "report.json").exists()


def test_oracle_mode(tmp_path):
    r = cli("oracle", "--prior", "rademacher", "--lambda", "1.5", "--N", "8",
            "--instances", "12", "--seed", "5", "--out", str(tmp_path))
    assert r.returncode == 0
    doc = json.loads((tmp_path / "oracle.json").read_text())
    assert len(doc["per_instance"]) == 12
    assert -1 <= doc["mean_q1star"] <= 1


def test_oracle_too_large_is_config_error(tmp_path):
    r = cli("oracle", "--prior", "rademacher", "--lambda", "1.0", "--N", "40",
            "--instances", "1", "--out", str(tmp_path))
    assert r.returncode == 2


def test_cavity_check_cli(tmp_path):
    r = cli("cavity-check", "--prior", "rademacher", "--lambda", "1.0",
            "--N", "5", "--instances", "150", "--t0", "0.5", "--eps", "1e-3",
            "--f", "q12", "--q-cav", "0.3", "--seed", "4", "--out", str(tmp_path))
    assert r.returncode == 0, r.stdout + r.stderr
    assert "PASS" in r.stdout
    doc = json.loads((tmp_path / "cavity_check.json").read_text())
    assert doc["passed"] is True


# -- plots ---------------------------------------------------------------------


def test_emit_plots_synthetic(tmp_path, rng):
    xi = rng.normal(0, np.sqrt(2.0), size=20_000)
    report = {"ks_sigma2": 2.0,
              "concentration": {"Ns": [250, 500, 1000], "mean_sq": [4e-3, 2e-3, 1e-3],
                                "slope2": -1.0, "slope4": -2.0}}
    written = emit_plots(report, xi, tmp_path / "plots")
    names = {p.name for p in written}
    assert names == {"histogram.svg", "qq.svg", "concentration.svg"}
    # automated QQ band: deviation bounded via the KS 1% critical value
    # transported through the minimum density over the central quantile range
    d_crit = 1.628 / np.sqrt(xi.size)
    from scipy import stats as sps
    lo, hi = sps.norm.ppf([0.005, 0.995], 0, np.sqrt(2.0))
    min_density = sps.norm.pdf(hi, 0, np.sqrt(2.0))
    inner = (np.sort(xi) > lo) & (np.sort(xi) < hi)
    dev = np.abs(np.sort(xi) - sps.norm.ppf((np.arange(1, xi.size + 1) - 0.5) / xi.size,
                                            0, np.sqrt(2.0)))
    assert dev[inner].max() <= d_crit / min_density
    assert qq_max_deviation(xi, 2.0) < 1.0
    assert "slope -1.00" in (tmp_path / "plots" / "concentration.svg").read_text()


def test_emit_plots_empty_warns(tmp_path):
    with pytest.warns(UserWarning):
        written = emit_plots({}, [], tmp_path / "plots")
    assert written == []
    assert not (tmp_path / "plots").exists()


def test_plots_deterministic(tmp_path, rng):
    xi = rng.normal(0, 1, size=500)
    a = emit_plots({"ks_sigma2": 1.0}, xi, tmp_path / "p1")
    b = emit_plots({"ks_sigma2": 1.0}, xi, tmp_path / "p2")
    for pa, pb in zip(a, b):
        assert pa.read_bytes() == pb.read_bytes()


def test_run_dispatch_returns_config_error_code():
    cfg = ExperimentConfig(mode="simulate", instances=0)
    assert run(cfg) == 2
