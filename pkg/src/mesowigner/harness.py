"""Run configured experiments and persist their outputs.

Each run writes into ``output_dir``:

* ``summary.json``  {experiment, config, results, errors_bars, provenance};
  a pure function of the configuration (no timestamps, no worker count), so
  reruns are byte-identical.
* ``results.csv``   the main table of the experiment.
* ``samples.jsonl`` per-sample observables (``persist_samples``) and
  ``spectra.jsonl`` eigenvalues (``persist_spectra``).
* ``manifest.json`` hashes, timestamps and per-file checksums.

Everything is computed before anything is written, and every file goes
through a temporary name and ``os.replace``, so a failed run leaves no
partial outputs.
"""
from __future__ import annotations

import csv
import datetime as _dt
import hashlib
import io
import json
import math
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import ndtr

from . import __version__
from .config import Experiment, ExperimentConfig
from .ensemble import sample_matrix
from .errors import ConfigurationError, NumericalError
from .gp_sampler import GPConfig, choose_truncation, gram_matrix, jsonl_rows, sample_Y, sample_Z
from .hs_calculus import ExtensionVariant, hs_trace
from .spectral import eigenvalues, linear_statistic
from .stats import (bias_rate_fit, collect_observables, cumulant_expansion_check, ks_normality_test,
                    local_law_check, mixed_moment_table, run_linstat_experiment, run_resolvent_experiment)
from .stats.accumulator import MCAccumulator
from .stats.cumulants import sample_cumulants
from .theory import (get_test_function, h_half_covariance, resolvent_covariance, semicircle_density,
                     stieltjes_m)

HISTOGRAM_BINS = 60
HISTOGRAM_HALF_WIDTH = 6.0  # in units of the target standard deviation


# -- JSON helpers ---------------------------------------------------------------

def to_jsonable(v):
    """Complex -> [re, im]; arrays -> lists; non-finite floats -> None."""
    if isinstance(v, dict):
        return {str(k): to_jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [to_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return to_jsonable(v.tolist())
    if isinstance(v, (complex, np.complexfloating)):
        return [to_jsonable(float(v.real)), to_jsonable(float(v.imag))]
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else None
    return v


def dumps(obj) -> str:
    return json.dumps(to_jsonable(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(header)
    for r in rows:
        w.writerow(["" if x is None else (repr(float(x)) if isinstance(x, (float, np.floating)) else x)
                    for x in r])
    return buf.getvalue()


def _write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# -- histogram blocks -----------------------------------------------------------

def histogram_block(samples, target_sd: float, bins: int = HISTOGRAM_BINS) -> dict:
    """Counts on a fixed grid of +-6 target standard deviations."""
    x = np.asarray(samples, dtype=np.float64)
    edges = np.linspace(-HISTOGRAM_HALF_WIDTH * target_sd, HISTOGRAM_HALF_WIDTH * target_sd, bins + 1)
    counts, _ = np.histogram(x, edges)
    return {"edges": edges, "counts": counts, "target_sd": float(target_sd), "n": int(x.size)}


def _ks_block(samples, target_sd):
    if len(samples) < 200:
        return None
    d, p = ks_normality_test(samples, target_sd)
    return {"statistic": d, "p_value": p, "target_sd": target_sd}


# -- experiments ---------------------------------------------------------------

@dataclass
class Outcome:
    results: dict
    error_bars: dict
    provenance: dict
    csv_header: list
    csv_rows: list
    samples: list | None = None
    spectra: list | None = None


def _sample_counts(cfg):
    ns = cfg.num_samples
    return [int(n) for n in ns] if isinstance(ns, (list, tuple)) else int(ns)


def _spectra_lines(obs):
    if obs.spectra is None:
        return None
    return [json.dumps({"sample_index": i, "eigenvalues": [float(v) for v in ev]})
            for i, ev in sorted(obs.spectra.items())]


def _resolvent_clt(cfg: ExperimentConfig) -> Outcome:
    spec, scale, n = cfg.spec(), cfg.scale, _sample_counts(cfg)
    obs = collect_observables(spec, scale, n, cfg.b_points, cfg.test_functions, num_workers=cfg.workers,
                              keep_spectra=cfg.persist_spectra)
    r = run_resolvent_experiment(spec, scale, cfg.b_points, n, observables=obs)
    sd = math.sqrt(r.cov_theory[0, 0].real / 2.0)
    results = {
        "b_points": r.b_points, "dimension": r.dimension, "eta": r.eta,
        "mean": r.mean, "cov_empirical": r.cov, "cov_theory": r.cov_theory,
        "pseudo_cov_empirical": r.pseudo_cov, "pseudo_cov_theory": np.zeros_like(r.cov),
        "mixed_moments": [{"b_index": j, "n": a, "m": b, "value": v[0]} for (j, a, b), v in r.mixed_moments.items()],
        "ks_real": _ks_block(r.samples[:, 0].real, sd), "ks_imag": _ks_block(r.samples[:, 0].imag, sd),
        "histogram": histogram_block(r.samples[:, 0].real, sd),
    }
    errors = {"mean": r.mean_se, "cov_empirical": r.cov_se, "pseudo_cov_empirical": r.pseudo_cov_se,
              "mixed_moments": [{"b_index": j, "n": a, "m": b, "se": v[1]} for (j, a, b), v in r.mixed_moments.items()]}
    if cfg.test_functions:
        ls = run_linstat_experiment(spec, scale, cfg.test_functions, n, observables=obs)
        results["linstat"] = {"labels": ls.labels, "variance": ls.variance, "cov": ls.cov}
        errors["linstat"] = {"variance": ls.variance_se, "cov": ls.cov_se}
    rows = []
    for j, b1 in enumerate(r.b_points):
        for k, b2 in enumerate(r.b_points):
            c, s, t, p = r.cov[j, k], r.cov_se[j, k], r.cov_theory[j, k], r.pseudo_cov[j, k]
            rows.append([b1.real, b1.imag, b2.real, b2.imag, c.real, c.imag, s.real, s.imag,
                         t.real, t.imag, p.real, p.imag])
    header = ["b1_re", "b1_im", "b2_re", "b2_im", "cov_re", "cov_im", "cov_se_re", "cov_se_im",
              "theory_re", "theory_im", "pseudo_re", "pseudo_im"]
    samples = list(jsonl_rows(r.samples)) if cfg.persist_samples else None
    return Outcome(results, errors, {"aborted": obs.aborted}, header, rows, samples, _spectra_lines(obs))


def _linstat_clt(cfg: ExperimentConfig) -> Outcome:
    spec, scale, n = cfg.spec(), cfg.scale, _sample_counts(cfg)
    obs = collect_observables(spec, scale, n, (), cfg.test_functions, num_workers=cfg.workers,
                              keep_spectra=cfg.persist_spectra)
    r = run_linstat_experiment(spec, scale, cfg.test_functions, n, observables=obs)
    fs = [get_test_function(f) for f in cfg.test_functions]
    theory = gram_matrix(fs, cfg.quad_tol)
    results = {"labels": r.labels, "dimension": r.dimension, "eta": r.eta, "mean": r.mean,
               "variance": r.variance, "variance_theory": np.diag(theory), "cov_empirical": r.cov,
               "cov_theory": theory, "cumulant3": r.cumulant3, "cumulant4": r.cumulant4,
               "ks": _ks_block(r.samples[:, 0], math.sqrt(theory[0, 0])),
               "histogram": histogram_block(r.samples[:, 0], math.sqrt(theory[0, 0]))}
    errors = {"mean": r.mean_se, "variance": r.variance_se, "cov_empirical": r.cov_se,
              "cumulant3": r.cumulant3_se, "cumulant4": r.cumulant4_se}
    rows = [[lbl, r.mean[k], r.mean_se[k], r.variance[k], r.variance_se[k], theory[k, k], r.cumulant3[k],
             r.cumulant3_se[k], r.cumulant4[k], r.cumulant4_se[k]] for k, lbl in enumerate(r.labels)]
    header = ["label", "mean", "mean_se", "variance", "variance_se", "variance_theory", "cumulant3",
              "cumulant3_se", "cumulant4", "cumulant4_se"]
    samples = list(jsonl_rows(r.samples)) if cfg.persist_samples else None
    return Outcome(results, errors, {"aborted": obs.aborted}, header, rows, samples, _spectra_lines(obs))


def _local_law(cfg: ExperimentConfig) -> Outcome:
    r = local_law_check(cfg.spec(), cfg.z_grid, _sample_counts(cfg), cfg.epsilon, num_workers=cfg.workers)
    table = [{"z": row.z, "averaged_bound": row.averaged_bound, "entrywise_bound": row.entrywise_bound,
              "averaged_violation_fraction": row.averaged_violation_fraction,
              "entrywise_violation_fraction": row.entrywise_violation_fraction,
              "max_averaged_error": row.max_averaged_error, "max_entrywise_error": row.max_entrywise_error,
              "passed": row.passed} for row in r.rows]
    rows = [[t["z"].real, t["z"].imag, t["averaged_bound"], t["averaged_violation_fraction"],
             t["entrywise_bound"], t["entrywise_violation_fraction"], int(t["passed"])] for t in table]
    header = ["z_re", "z_im", "averaged_bound", "averaged_violation_fraction", "entrywise_bound",
              "entrywise_violation_fraction", "passed"]
    return Outcome({"dimension": r.dimension, "epsilon": r.epsilon, "rows": table, "passed": r.passed}, {},
                   {"aborted": r.aborted}, header, rows)


def _bias_rate(cfg: ExperimentConfig) -> Outcome:
    r = bias_rate_fit(cfg.ensemble, cfg.alpha, cfg.energy, cfg.N_list, _sample_counts(cfg),
                      num_workers=cfg.workers)
    results = {"N_list": r.N_list, "bias": r.bias, "bias_abs": r.bias_abs, "coarse_bound": r.coarse_bound,
               "coarse_bound_ok": r.coarse_bound_ok, "slope": r.slope, "slope_ci": r.slope_ci,
               "intercept": r.intercept, "noise_dominated": r.noise_dominated,
               "slope_threshold": cfg.alpha - 1.0 - (min(cfg.alpha, 1 - cfg.alpha) / 3.0) / 2.0}
    rows = [[N, b.real, b.imag, a, s, bd] for N, b, a, s, bd in
            zip(r.N_list, r.bias, r.bias_abs, r.bias_se, r.coarse_bound)]
    header = ["N", "bias_re", "bias_im", "bias_abs", "bias_abs_se", "coarse_bound"]
    return Outcome(results, {"bias_abs": r.bias_se, "slope": r.slope_se}, {}, header, rows)


def _gp_sample(cfg: ExperimentConfig) -> Outcome:
    n, seed = _sample_counts(cfg), cfg.ensemble.master_seed
    results, errors, rows, samples = {}, {}, [], []
    header = ["kind", "i", "j", "empirical_re", "empirical_im", "se_re", "se_im", "theory_re", "theory_im"]
    if cfg.b_points:
        gp = GPConfig(cfg.truncation_K, seed, cfg.target_tail_variance)
        K = gp.truncation_K or choose_truncation(cfg.b_points, gp.target_tail_variance)
        Y = sample_Y(cfg.b_points, gp, n)
        acc = MCAccumulator.from_samples(Y)
        cov, cov_se = acc.covariance(centred=False)
        pcov, pcov_se = acc.pseudo_covariance(centred=False)
        theory = np.array([[resolvent_covariance(a, b)[0] for b in cfg.b_points] for a in cfg.b_points])
        results.update({"truncation_K": K, "cov_empirical": cov, "cov_theory": theory,
                        "pseudo_cov_empirical": pcov,
                        "histogram": histogram_block(Y[:, 0].real, math.sqrt(theory[0, 0].real / 2))})
        errors.update({"cov_empirical": cov_se, "pseudo_cov_empirical": pcov_se})
        for j in range(len(cfg.b_points)):
            for k in range(len(cfg.b_points)):
                rows.append(["Y", j, k, cov[j, k].real, cov[j, k].imag, cov_se[j, k].real, cov_se[j, k].imag,
                             theory[j, k].real, theory[j, k].imag])
        if cfg.persist_samples:
            samples.extend(jsonl_rows(Y))
    if cfg.test_functions:
        fs = [get_test_function(f) for f in cfg.test_functions]
        G = gram_matrix(fs, cfg.quad_tol)
        Z = sample_Z(fs, n, seed, gram=G)
        acc = MCAccumulator.from_samples(Z)
        cov, cov_se = acc.covariance(centred=False)
        results.update({"labels": cfg.test_functions, "gram": G, "z_cov_empirical": cov.real})
        errors["z_cov_empirical"] = cov_se.real
        if "histogram" not in results:
            results["histogram"] = histogram_block(Z[:, 0], math.sqrt(G[0, 0]))
        for j in range(len(fs)):
            for k in range(len(fs)):
                rows.append(["Z", j, k, cov[j, k].real, 0.0, cov_se[j, k].real, 0.0, G[j, k], 0.0])
        if cfg.persist_samples and not cfg.b_points:
            samples.extend(jsonl_rows(Z))
    return Outcome(results, errors, {}, header, rows, samples if cfg.persist_samples else None)


def _hs_check(cfg: ExperimentConfig) -> Outcome:
    spec, scale = cfg.spec(), cfg.scale
    eta = scale.eta(spec.dimension)
    rows, worst = [], 0.0
    for i in range(_sample_counts(cfg)):
        sp = eigenvalues(sample_matrix(spec, i))
        for label in cfg.test_functions:
            f = get_test_function(label)
            direct = linear_statistic(sp, f, scale.energy, eta)
            variants = [ExtensionVariant.FIRST_ORDER] + ([ExtensionVariant.DERIVATIVE_FORM] if f.is_c2 else [])
            for v in variants:
                val = hs_trace(sp, f, scale.energy, eta, cfg.sigma, cfg.quad_tol, v)
                worst = max(worst, abs(val - direct))
                rows.append([i, label, v.value, val, direct, val - direct])
    header = ["sample_index", "label", "variant", "hs_trace", "eigen_sum", "difference"]
    return Outcome({"max_abs_difference": worst, "quad_tol": cfg.quad_tol, "passed": worst <= cfg.quad_tol,
                    "eta": eta, "sigma": cfg.sigma if cfg.sigma is not None else eta / 4}, {}, {}, header, rows)


def _mixed_moments(cfg: ExperimentConfig) -> Outcome:
    spec, scale, n = cfg.spec(), cfg.scale, _sample_counts(cfg)
    cells = mixed_moment_table(spec, scale, cfg.max_degree, n, num_workers=cfg.workers)
    table = [{"n": c.n, "m": c.m, "empirical": c.empirical, "predicted": c.predicted, "ratio": c.ratio,
              "consistent_with_zero": c.consistent_with_zero} for c in cells]
    errors = [{"n": c.n, "m": c.m, "empirical": c.se, "ratio": c.ratio_se} for c in cells]
    rows = [[c.n, c.m, c.empirical.real, c.empirical.imag, c.se.real, c.se.imag, c.predicted, c.ratio, c.ratio_se]
            for c in cells]
    header = ["n", "m", "empirical_re", "empirical_im", "se_re", "se_im", "predicted", "ratio", "ratio_se"]
    return Outcome({"dimension": spec.dimension, "cells": table}, {"cells": errors}, {}, header, rows)


SCALAR_FUNCTIONS = {
    "sin": [np.sin, np.cos, lambda x: -np.sin(x), lambda x: -np.cos(x)] * 2,
    "cos": [np.cos, lambda x: -np.sin(x), lambda x: -np.cos(x), np.sin] * 2,
    "linear": [lambda x: x, np.ones_like] + [np.zeros_like] * 6,
    "cube": [lambda x: x**3, lambda x: 3 * x**2, lambda x: 6 * x, lambda x: 6 + 0 * x] + [np.zeros_like] * 4,
    "exp_half": [lambda x, k=k: 0.5**k * np.exp(0.5 * x) for k in range(8)],
}


def _cumulant_check(cfg: ExperimentConfig) -> Outcome:
    if cfg.function not in SCALAR_FUNCTIONS:
        raise ConfigurationError(f"function: choose from {sorted(SCALAR_FUNCTIONS)}")
    r = cumulant_expansion_check(cfg.h_law, SCALAR_FUNCTIONS[cfg.function], cfg.order, cfg.num_quadrature_nodes,
                                 variance=cfg.h_variance, rate=cfg.poisson_rate)
    return Outcome({"lhs": r.lhs, "rhs": r.rhs, "residual": r.residual}, {}, {},
                   ["h_law", "function", "order", "lhs", "rhs", "residual"],
                   [[cfg.h_law, cfg.function, cfg.order, r.lhs, r.rhs, r.residual]])


def theory_grid(grid_points: int):
    """Rows (x, rho, E, eta, re_m, im_m); the (E, eta) grid pairs each E with eta in {1e-1, 1e-2, 1e-3}."""
    x = np.linspace(-2.5, 2.5, grid_points)
    E = np.linspace(-1.9, 1.9, grid_points)
    etas = np.array([1e-1, 1e-2, 1e-3])
    Eg = np.repeat(E, etas.size)
    eg = np.tile(etas, E.size)
    m = stieltjes_m(Eg + 1j * eg)
    rho = semicircle_density(x)
    rows = []
    for k in range(Eg.size):
        xi, ri = (x[k], rho[k]) if k < x.size else (None, None)
        rows.append([xi, ri, Eg[k], eg[k], m[k].real, m[k].imag])
    return rows


def _theory_dump(cfg: ExperimentConfig) -> Outcome:
    rows = theory_grid(cfg.grid_points)
    return Outcome({"rows": len(rows), "grid_points": cfg.grid_points}, {}, {},
                   ["x", "rho", "E", "eta", "re_m", "im_m"], rows)


DISPATCH = {
    Experiment.RESOLVENT_CLT: _resolvent_clt,
    Experiment.LINSTAT_CLT: _linstat_clt,
    Experiment.LOCAL_LAW: _local_law,
    Experiment.BIAS_RATE: _bias_rate,
    Experiment.GP_SAMPLE: _gp_sample,
    Experiment.HS_CHECK: _hs_check,
    Experiment.MIXED_MOMENTS: _mixed_moments,
    Experiment.CUMULANT_CHECK: _cumulant_check,
    Experiment.THEORY_DUMP: _theory_dump,
}


# -- run -------------------------------------------------------------------------

def summary_dict(cfg: ExperimentConfig, out: Outcome) -> dict:
    prov = {"master_seed": cfg.ensemble.master_seed, "config_hash": cfg.digest(), "library_version": __version__,
            "num_samples": cfg.num_samples}
    prov.update(out.provenance)
    return {"experiment": cfg.experiment.value, "config": cfg.to_dict(), "results": out.results,
            "errors_bars": out.error_bars, "provenance": prov}


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat()


def run(cfg: ExperimentConfig) -> dict:
    """Execute ``cfg`` and write its outputs; returns the manifest."""
    started = _now()
    out = DISPATCH[cfg.experiment](cfg)
    files = {"summary.json": dumps(summary_dict(cfg, out)),
             "results.csv": csv_text(out.csv_header, out.csv_rows)}
    if out.samples is not None:
        files["samples.jsonl"] = "".join(line + "\n" for line in out.samples)
    if out.spectra is not None:
        files["spectra.jsonl"] = "".join(line + "\n" for line in out.spectra)
    checksums = {name: hashlib.sha256(text.encode()).hexdigest() for name, text in files.items()}
    manifest = {
        "config_hash": cfg.digest(),
        "input_hash": hashlib.sha256((cfg.digest() + __version__).encode()).hexdigest(),
        "started": started, "finished": _now(), "seed": cfg.ensemble.master_seed,
        "library_version": __version__, "num_workers": cfg.workers, "files": checksums,
    }
    files["manifest.json"] = dumps(manifest)
    out_dir = Path(cfg.output_dir)
    for name, text in files.items():
        _write_atomic(out_dir / name, text)
    return manifest


# -- plot data -------------------------------------------------------------------

PLOT_KINDS = ("histogram_vs_gaussian", "covariance_heatmap", "rate_loglog")


def plot_rows(summary: dict, kind: str):
    """(header, rows) for the requested plot from a loaded summary."""
    res = summary.get("results", {})
    if kind == "histogram_vs_gaussian":
        h = res.get("histogram")
        if h is None:
            raise ConfigurationError(f"summary of {summary.get('experiment')!r} has no histogram")
        edges, counts, sd = np.asarray(h["edges"], float), h["counts"], h["target_sd"]
        width = np.diff(edges)
        # bin-averaged density of N(0, sd^2)
        dens = (ndtr(edges[1:] / sd) - ndtr(edges[:-1] / sd)) / width
        return ["bin_left", "bin_right", "count", "gaussian_density"], \
            [[edges[k], edges[k + 1], int(counts[k]), dens[k]] for k in range(len(counts))]
    if kind == "covariance_heatmap":
        if "cov_empirical" not in res or "b_points" not in res:
            raise ConfigurationError(f"summary of {summary.get('experiment')!r} has no resolvent covariance")
        b = res["b_points"]
        rows = []
        for j in range(len(b)):
            for k in range(len(b)):
                e, t = res["cov_empirical"][j][k], res["cov_theory"][j][k]
                rows.append([j, k, b[j][0], b[j][1], b[k][0], b[k][1], e[0], e[1], t[0], t[1]])
        return ["i", "j", "b1_re", "b1_im", "b2_re", "b2_im", "empirical_re", "empirical_im",
                "theory_re", "theory_im"], rows
    if kind == "rate_loglog":
        if "N_list" not in res or "slope" not in res:
            raise ConfigurationError(f"summary of {summary.get('experiment')!r} has no bias fit")
        return ["N", "log_bias", "fit_value"], [
            [int(N), math.log(a), res["intercept"] + res["slope"] * math.log(N)]
            for N, a in zip(res["N_list"], res["bias_abs"])]
    raise ConfigurationError(f"kind must be one of {PLOT_KINDS}")


def emit_plot_data(summary, kind: str, output_dir=None) -> Path:
    """Write ``plot_<kind>.csv`` next to the summary (or into ``output_dir``)."""
    if isinstance(summary, (str, Path)):
        path = Path(summary)
        summary = json.loads(path.read_text())
        output_dir = output_dir or path.parent
    if output_dir is None:
        raise ConfigurationError("output_dir is required when passing a summary dict")
    header, rows = plot_rows(summary, kind)
    target = Path(output_dir) / f"plot_{kind}.csv"
    _write_atomic(target, csv_text(header, rows))
    return target
