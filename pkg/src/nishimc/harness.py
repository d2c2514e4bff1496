"""Experiment orchestration: simulate, analyze, oracle, pipeline.

Artifact layout under the output directory:

    theory.json            solved fixed point + covariance at (lambda, h)
    run_meta.json          resolved config, hash, versions, per-instance seeds
    samples/N{N}/{k}.csv   one CSV per instance (schema: docs/csv_schema.md)
    report.json            pooled statistics (written by analyze)
    summary.json           pass/fail table (written by pipeline)
    plots/*.svg            optional figures

Every artifact embeds the config hash, the global seed and the package
version.  Simulation work is scheduled per instance; results are merged in
instance order, so outputs are byte-identical for any worker count.
"""

from __future__ import annotations

import csv
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .config import ExperimentConfig
from .covariance import covariance_closed_form, build_cavity_system, solve_covariance_general_n
from .errors import ConfigError, CriticalPoint, InsufficientData, IoError, NishimcError, TooLarge
from .model import energy, effective_fields, sample_instance
from .observables import (
    CavityCheckResult,
    cavity_derivative_check,
    empirical_covariance,
    lag1_autocorr,
    nishimori_check,
    normality_test,
    overlaps_of,
    replica_pairs,
    rescale,
)
from .sampler import ChainSpec, enumerate_gibbs, run_chain
from .scalar import QuadratureSpec, solve_fixed_point

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG = 2
EXIT_IO = 3

UNDER_SPACED_RHO1 = 0.05


# ---------------------------------------------------------------------------
# small IO helpers
# ---------------------------------------------------------------------------


def _write_json(path: Path, obj: dict) -> None:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w") as f:
            json.dump(obj, f, indent=2, sort_keys=True)
            f.write("\n")
    except OSError as e:
        raise IoError(f"cannot write {path}: {e}") from e


def _read_json(path: Path) -> dict:
    try:
        with open(path) as f:
            return json.load(f)
    except OSError as e:
        raise IoError(f"cannot read {path}: {e}") from e


def _stamp(cfg: ExperimentConfig) -> dict:
    return {"version": __version__, "config_hash": cfg.config_hash(), "seed": cfg.seed}


def _fmt(v: float) -> str:
    return repr(float(v))


# ---------------------------------------------------------------------------
# theory
# ---------------------------------------------------------------------------


def run_theory(cfg: ExperimentConfig, out_dir: Path | None = None, echo: bool = True) -> dict:
    p = cfg.resolve_prior()
    quad = QuadratureSpec(cfg.nodes)
    th = solve_fixed_point(p, cfg.lam, cfg.h, quad, cfg.tol)
    doc = dict(_stamp(cfg))
    doc.update(th.as_dict())
    doc["prior"] = p.label
    try:
        cov = covariance_closed_form(th.a1, th.a2, th.a3, cfg.lam)
        doc.update({"A": cov.A, "B": cov.B, "C": cov.C, "invertible": cov.invertible})
    except CriticalPoint:
        doc.update({"A": None, "B": None, "C": None, "invertible": False})
    if cfg.n_check >= 2 and doc["A"] is not None:
        sysn = build_cavity_system(cfg.n_check, th.a1, th.a2, th.a3)
        gn = solve_covariance_general_n(sysn, cfg.lam)
        agree = max(abs(gn.A - doc["A"]), abs(gn.B - doc["B"]), abs(gn.C - doc["C"]))
        doc["n_check"] = {"n": cfg.n_check, "max_deviation": agree, "agrees": bool(agree < 1e-8)}
    if out_dir is not None:
        _write_json(out_dir / "theory.json", doc)
    if echo:
        print(json.dumps(doc, indent=2, sort_keys=True))
    return doc


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------


def _simulate_task(args: tuple) -> list[tuple]:
    """Rows (sweep_index, q values..., energy) of one instance's chain."""
    (prior_atoms, prior_weights, label, N, lam, h, t, q_cav,
     inst_seed, chain_seed, replicas, burnin, spacing, samples, init) = args
    from .prior import make_prior

    p = make_prior(prior_atoms, prior_weights, label=label)
    inst = sample_instance(p, N, lam, h=h, t=t, q_cav=q_cav, seed=inst_seed)
    spec = ChainSpec(n_replicas=replicas, sweeps_burnin=burnin,
                     sweeps_between_samples=spacing, n_samples=samples,
                     seed=chain_seed, init=init)
    fields = effective_fields(inst)
    pairs = replica_pairs(replicas)
    rows = []
    for s in run_chain(inst, p, spec):
        q = overlaps_of(s, inst.xstar)
        rows.append((s.sweep_index, [q[pp] for pp in pairs],
                     energy(inst, s.configs[0], fields)))
    return rows


def _csv_path(out_dir: Path, N: int, k: int) -> Path:
    return out_dir / "samples" / f"N{N}" / f"{k:05d}.csv"


def _write_instance_csv(path: Path, cfg: ExperimentConfig, N: int, k: int,
                        inst_seed: int, chain_seed: int, rows: list[tuple]) -> None:
    pairs = replica_pairs(cfg.replicas)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        f.write(f"# nishimc {__version__}\n")
        f.write(f"# config_hash: {cfg.config_hash()}\n")
        f.write(f"# seed: {cfg.seed}\n")
        f.write(f"# N: {N}\n")
        f.write(f"# instance: {k}\n")
        f.write(f"# instance_seed: {inst_seed}\n")
        f.write(f"# chain_seed: {chain_seed}\n")
        names = ["sweep_index"] + [f"q_{a}{b}" for a, b in pairs] + ["energy"]
        w = csv.writer(f, lineterminator="\n")
        w.writerow(names)
        for sweep_index, qvals, en in rows:
            w.writerow([sweep_index] + [_fmt(v) for v in qvals] + [_fmt(en)])


def run_simulate(cfg: ExperimentConfig, out_dir: Path) -> dict:
    p = cfg.resolve_prior()
    theory = run_theory(cfg, out_dir, echo=False)
    q_cav = theory["qbar"] if cfg.t < 1.0 else 0.0

    n_values = cfg.n_list()
    seeds = cfg.instance_seeds()
    tasks = []
    for ni, N in enumerate(n_values):
        for k in range(cfg.instances):
            inst_seed, chain_seed = seeds[ni * cfg.instances + k]
            tasks.append((tuple(p.atoms), tuple(p.weights), p.label, N, cfg.lam,
                          cfg.h, cfg.t, q_cav, inst_seed, chain_seed,
                          cfg.replicas, cfg.chain.burnin, cfg.chain.spacing,
                          cfg.chain.samples, cfg.chain.init))

    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(_simulate_task, tasks, chunksize=1))
    else:
        results = [_simulate_task(t) for t in tasks]

    idx = 0
    for ni, N in enumerate(n_values):
        for k in range(cfg.instances):
            inst_seed, chain_seed = seeds[ni * cfg.instances + k]
            _write_instance_csv(_csv_path(out_dir, N, k), cfg, N, k,
                                inst_seed, chain_seed, results[idx])
            idx += 1

    meta = dict(_stamp(cfg))
    meta["config"] = cfg.hashed_dict()  # path/worker/plot settings stay out of artifacts
    meta["qbar"] = theory["qbar"]
    meta["q_cav"] = q_cav
    meta["instance_seeds"] = [[int(a), int(b)] for a, b in seeds]
    meta["numpy_version"] = np.__version__
    meta["rng"] = "numpy Philox (counter-based), SeedSequence spawn keys"
    _write_json(out_dir / "run_meta.json", meta)
    return meta


# ---------------------------------------------------------------------------
# analyze
# ---------------------------------------------------------------------------


def _read_instance_csv(path: Path):
    header: dict[str, str] = {}
    try:
        with open(path) as f:
            rows = []
            names = None
            for line in f:
                if line.startswith("#"):
                    key, _, val = line[1:].partition(":")
                    header[key.strip()] = val.strip()
                    continue
                if names is None:
                    names = line.strip().split(",")
                    continue
                rows.append(line.strip().split(","))
    except OSError as e:
        raise IoError(f"cannot read {path}: {e}") from e
    if names is None:
        raise IoError(f"{path} has no header row")
    data = {n: np.array([float(r[i]) for r in rows]) for i, n in enumerate(names)}
    return header, data


def _collect_samples(sample_dir: Path, qbar: float, n_replicas: int):
    """OverlapSamples + instance ids + per-instance q_{0,1} series from CSVs."""
    files = sorted(sample_dir.glob("*.csv"))
    if not files:
        raise IoError(f"no sample CSVs under {sample_dir}")
    pairs = replica_pairs(n_replicas)
    samples, ids, series = [], [], []
    for path in files:
        header, data = _read_instance_csv(path)
        k = int(header.get("instance", len(ids)))
        n_sites = int(header["N"])
        n_rows = data["sweep_index"].size
        for r in range(n_rows):
            q = {pp: float(data[f"q_{pp[0]}{pp[1]}"][r]) for pp in pairs}
            samples.append(rescale(q, qbar, n_sites))
            ids.append(k)
        series.append(data["q_01"])
    return samples, np.array(ids), series


def analyze_directory(cfg: ExperimentConfig, in_dir: Path, out_dir: Path,
                      theory: dict | None = None) -> dict:
    if theory is None:
        theory = _read_json(Path(cfg.theory_path) if cfg.theory_path
                            else in_dir / "theory.json")
    qbar = theory["qbar"]
    sample_root = in_dir / "samples"
    n_dirs = sorted((d for d in sample_root.iterdir() if d.name.startswith("N")),
                    key=lambda d: int(d.name[1:])) if sample_root.exists() else []
    if not n_dirs:
        raise IoError(f"no samples under {sample_root}")

    per_n = {}
    xi_primary = None
    conc_ns, conc_m2, conc_m4 = [], [], []
    for d in n_dirs:
        N = int(d.name[1:])
        samples, ids, series = _collect_samples(d, qbar, cfg.replicas)
        block: dict = {"n_instances": int(np.unique(ids).size),
                       "n_samples": len(samples)}
        if cfg.replicas >= 2:
            est = empirical_covariance(samples, cfg.replicas, instance_ids=ids)
            block.update({
                "mean_xi": est.mean_xi, "mean_xi_se": est.mean_xi_se,
                "var_xi": est.var, "var_xi_se": est.var_se,
                "cov_share": est.cov_share, "cov_share_se": est.cov_share_se,
                "cov_disjoint": est.cov_disjoint, "cov_disjoint_se": est.cov_disjoint_se,
            })
            nish = nishimori_check(samples, instance_ids=ids, include_squares=True)
            block.update({
                "nishimori_gap": nish.gap, "nishimori_gap_se": nish.se,
                "nishimori_gap_sq": nish.gap_sq, "nishimori_gap_sq_se": nish.se_sq,
            })
        rho1 = lag1_autocorr(series)
        block["lag1_autocorr_q1star"] = None if np.isnan(rho1) else rho1
        block["under_spaced"] = bool(rho1 > UNDER_SPACED_RHO1) if np.isfinite(rho1) else False

        # one xi_12 draw per instance keeps the KS samples independent
        if cfg.replicas >= 2:
            first = {}
            for s, k in zip(samples, ids):
                first.setdefault(k, s.xi[(1, 2)])
            xi = np.array(list(first.values()))
            xi_primary = xi
            if xi.size >= 100:
                sigma2 = theory.get("A") or (est.var if est.var > 0 else 1.0)
                rep = normality_test(xi, sigma2)
                block.update({
                    "ks_stat": rep.ks_stat, "ks_p": rep.ks_p, "ks_sigma2": sigma2,
                    "skew": rep.skew, "skew_se": rep.skew_se,
                    "exkurt": rep.exkurt, "exkurt_se": rep.exkurt_se,
                })
        dq = np.concatenate([np.asarray(s) - qbar for s in series])
        block["mean_sq_q1star"] = float(np.mean(dq**2))
        block["mean_quartic_q1star"] = float(np.mean(dq**4))
        conc_ns.append(N)
        conc_m2.append(block["mean_sq_q1star"])
        conc_m4.append(block["mean_quartic_q1star"])
        per_n[str(N)] = block

    report = dict(_stamp(cfg))
    report["qbar"] = qbar
    report["theory"] = {k: theory.get(k) for k in ("A", "B", "C", "mu1", "mu2", "qbar")}
    report["per_N"] = per_n
    report.update(per_n[str(conc_ns[-1])])  # headline stats: largest N
    report["N"] = conc_ns[-1]
    if len(conc_ns) >= 3:
        slope2, slope4 = concentration_slopes(conc_ns, conc_m2, conc_m4)
        report["concentration"] = {
            "Ns": conc_ns, "mean_sq": conc_m2, "mean_quartic": conc_m4,
            "slope2": slope2, "slope4": slope4,
        }
    else:
        report["concentration"] = None
    _write_json(out_dir / "report.json", report)

    if cfg.plots:
        from .plots import emit_plots

        emit_plots(report, xi_primary, out_dir / "plots")
    return report


def concentration_slopes(ns, m2, m4):
    from .observables import concentration_fit

    try:
        return concentration_fit(ns, m2, m4)
    except InsufficientData:
        return None, None


# ---------------------------------------------------------------------------
# oracle + cavity check
# ---------------------------------------------------------------------------


def run_oracle(cfg: ExperimentConfig, out_dir: Path) -> dict:
    p = cfg.resolve_prior()
    N = cfg.n_list()[0]
    theory = run_theory(cfg, None, echo=False)
    q_cav = theory["qbar"] if cfg.t < 1.0 else 0.0
    seeds = cfg.instance_seeds()
    per = []
    for k in range(cfg.instances):
        inst_seed, _ = seeds[k]
        inst = sample_instance(p, N, cfg.lam, h=cfg.h, t=cfg.t, q_cav=q_cav,
                               seed=inst_seed)
        g = enumerate_gibbs(inst, p)
        per.append({"instance": k, "q1star": g.q1star(inst.xstar),
                    "q12": g.q12(), "logZ": g.logZ})
    doc = dict(_stamp(cfg))
    for key in ("q1star", "q12", "logZ"):
        vals = np.array([r[key] for r in per])
        doc[f"mean_{key}"] = float(vals.mean())
        doc[f"se_{key}"] = float(vals.std(ddof=1) / np.sqrt(vals.size)) if vals.size > 1 else None
    doc["per_instance"] = per
    _write_json(out_dir / "oracle.json", doc)
    return doc


def run_cavity_check(cfg: ExperimentConfig, out_dir: Path | None) -> tuple[CavityCheckResult, bool]:
    p = cfg.resolve_prior()
    q_cav = cfg.cavity.q_cav
    if q_cav is None:
        q_cav = solve_fixed_point(p, cfg.lam, cfg.h, QuadratureSpec(cfg.nodes), cfg.tol).qbar
    res = cavity_derivative_check(
        p, cfg.n_list()[0], cfg.lam, q_cav, cfg.cavity.t0, cfg.cavity.eps,
        cfg.instances, f_spec=cfg.cavity.f, h=cfg.h, seed=cfg.seed,
    )
    passed = abs(res.diff) <= 3.0 * res.se
    doc = dict(_stamp(cfg))
    doc.update({"fd": res.fd, "rhs": res.rhs, "se": res.se, "diff": res.diff,
                "q_cav": q_cav, "f": res.f_spec, "n_instances": res.n_instances,
                "passed": passed})
    if out_dir is not None:
        _write_json(out_dir / "cavity_check.json", doc)
    print(f"fd={res.fd:.6g} rhs={res.rhs:.6g} paired_se={res.se:.3g} "
          f"diff={res.diff:.3g} -> {'PASS' if passed else 'FAIL'}")
    return res, passed


# ---------------------------------------------------------------------------
# pipeline
# ---------------------------------------------------------------------------


def _check(name: str, ok: bool, detail: str) -> dict:
    return {"name": name, "passed": bool(ok), "detail": detail}


def pipeline_checks(report: dict, theory: dict) -> list[dict]:
    checks = []
    A, B, C = theory.get("A"), theory.get("B"), theory.get("C")
    if A is not None and "var_xi" in report:
        checks.append(_check(
            "var_xi vs A",
            abs(report["var_xi"] - A) <= 3 * report["var_xi_se"],
            f"{report['var_xi']:.4f} vs {A:.4f} (3se={3 * report['var_xi_se']:.4f})"))
        checks.append(_check(
            "cov_share vs B",
            abs(report["cov_share"] - B) <= 3 * report["cov_share_se"],
            f"{report['cov_share']:.4f} vs {B:.4f} (3se={3 * report['cov_share_se']:.4f})"))
        if report.get("cov_disjoint") is not None:
            checks.append(_check(
                "cov_disjoint vs C",
                abs(report["cov_disjoint"] - C) <= 3 * report["cov_disjoint_se"],
                f"{report['cov_disjoint']:.4f} vs {C:.4f}"))
    if "nishimori_gap" in report:
        checks.append(_check(
            "nishimori gap ~ 0",
            abs(report["nishimori_gap"]) <= 3 * report["nishimori_gap_se"],
            f"gap={report['nishimori_gap']:.5f} (3se={3 * report['nishimori_gap_se']:.5f})"))
    if "ks_p" in report:
        checks.append(_check("KS not rejected at 1%", report["ks_p"] >= 0.01,
                             f"p={report['ks_p']:.4f}"))
        checks.append(_check("skew ~ 0", abs(report["skew"]) <= 3 * report["skew_se"],
                             f"{report['skew']:.4f} (3se={3 * report['skew_se']:.4f})"))
        checks.append(_check("exkurt ~ 0", abs(report["exkurt"]) <= 3 * report["exkurt_se"],
                             f"{report['exkurt']:.4f} (3se={3 * report['exkurt_se']:.4f})"))
    conc = report.get("concentration")
    if conc and conc.get("slope2") is not None:
        checks.append(_check("concentration slope2 in [-1.2, -0.8]",
                             -1.2 <= conc["slope2"] <= -0.8,
                             f"slope2={conc['slope2']:.3f}"))
    return checks


def run_pipeline(cfg: ExperimentConfig, out_dir: Path) -> int:
    run_simulate(cfg, out_dir)
    theory = _read_json(out_dir / "theory.json")
    report = analyze_directory(cfg, out_dir, out_dir, theory)
    checks = pipeline_checks(report, theory)
    summary = dict(_stamp(cfg))
    summary["checks"] = checks
    summary["all_passed"] = all(c["passed"] for c in checks)
    _write_json(out_dir / "summary.json", summary)
    for c in checks:
        print(f"[{'PASS' if c['passed'] else 'FAIL'}] {c['name']}: {c['detail']}")
    return EXIT_OK if summary["all_passed"] else EXIT_CHECK_FAILED


# ---------------------------------------------------------------------------
# entry
# ---------------------------------------------------------------------------


def run(cfg: ExperimentConfig) -> int:
    """Dispatch one experiment; returns the process exit code."""
    try:
        cfg.validate()
        out_dir = Path(cfg.out)
        if cfg.mode == "theory":
            run_theory(cfg, out_dir if cfg.out else None)
            return EXIT_OK
        if cfg.mode == "simulate":
            run_simulate(cfg, out_dir)
            return EXIT_OK
        if cfg.mode == "analyze":
            in_dir = Path(cfg.analyze_in) if cfg.analyze_in else out_dir
            analyze_directory(cfg, in_dir, out_dir)
            return EXIT_OK
        if cfg.mode == "oracle":
            run_oracle(cfg, out_dir)
            return EXIT_OK
        if cfg.mode == "cavity-check":
            _, passed = run_cavity_check(cfg, out_dir)
            return EXIT_OK if passed else EXIT_CHECK_FAILED
        return run_pipeline(cfg, out_dir)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except TooLarge as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except IoError as e:
        print(f"io error: {e}", file=sys.stderr)
        return EXIT_IO
    except NishimcError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CHECK_FAILED
