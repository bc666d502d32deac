"""Stage driver: runs the analysis stages of a job and emits CSV/JSON artifacts.

Artifacts are collected in memory and written only once every requested
stage has succeeded, so a refusal or error never leaves partial curves
behind.
"""
from __future__ import annotations

import io
import json
import os
import time
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import __version__
from .config import JobConfig
from .errors import EpsilonMismatch, ExpansionViolation, NotMixing, TwistopError, ZeroVariance
from .ldp import VARIANCE_TOL, check_derivatives, clt_characteristic_check, lambda_curve, rate_function
from .maps import center_observable, complexity_Y, eta0
from .montecarlo import (_tail_from_sums, empirical_clt, exact_markov_tail, simulate_birkhoff,
                         write_bsum)
from .spectral import green_kubo_variance, invariant_density, spectral_gap
from .ulam import build_ulam

STAGES = ("check", "density", "spectrum", "variance", "ldp", "clt", "simulate", "compare")
REQUIRES = {
    "check": (),
    "density": (),
    "spectrum": ("density",),
    "variance": ("density",),
    "ldp": ("variance",),
    "clt": ("variance",),
    "simulate": ("density",),
    "compare": ("ldp", "simulate"),
}

COMPARE_COLUMNS = ("n", "eps", "c_spectral", "empirical_rate", "p_hat", "ci_lo", "ci_hi",
                   "oracle_tail", "verdict")


def resolve_stages(stages: Iterable[str] | None) -> list[str]:
    """Requested stages plus their prerequisites, in execution order."""
    wanted = set(STAGES if stages is None else stages)
    unknown = wanted - set(STAGES)
    if unknown:
        raise ValueError(f"unknown stages {sorted(unknown)}; choose from {', '.join(STAGES)}")
    todo = list(wanted)
    while todo:
        for dep in REQUIRES[todo.pop()]:
            if dep not in wanted:
                wanted.add(dep)
                todo.append(dep)
    return [s for s in STAGES if s in wanted]


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return "%.17g" % float(x)
    return str(x)


def csv_text(columns: Sequence[str], rows) -> str:
    buf = io.StringIO()
    buf.write(",".join(columns) + "\n")
    for row in rows:
        buf.write(",".join(_fmt(v) for v in row) + "\n")
    return buf.getvalue()


def json_text(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n"


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, complex):
        return [o.real, o.imag]
    raise TypeError(f"not serialisable: {type(o)}")


# ---------------------------------------------------------------- comparison

def compare_report(rate, tails, oracle: dict | None = None) -> list[dict]:
    """One row per tail estimate with the spectral rate and a verdict.

    ``oracle`` maps ``(n, eps)`` to an exact tail probability. The verdict
    is "agree" when the exact tail lies in the Wilson interval, "disagree"
    otherwise, "insufficient samples" when no sample exceeded the
    threshold and "unverified" without an oracle value.
    """
    rows = []
    for t in tails:
        if rate is not None and not rate.eps_minus < t.eps < rate.eps_plus:
            raise EpsilonMismatch(f"eps = {t.eps} lies outside the rate window "
                                  f"({rate.eps_minus:.6g}, {rate.eps_plus:.6g})")
        c = None if rate is None else float(rate(t.eps))
        exact = None if oracle is None else oracle.get((t.n, t.eps))
        if t.hits == 0:
            verdict = "insufficient samples"
        elif exact is None:
            verdict = "unverified"
        else:
            verdict = "agree" if t.ci95[0] <= exact <= t.ci95[1] else "disagree"
        rows.append({"n": t.n, "eps": t.eps, "c_spectral": c, "empirical_rate": t.empirical_rate,
                     "p_hat": t.p_hat, "ci_lo": t.ci95[0], "ci_hi": t.ci95[1],
                     "oracle_tail": exact, "verdict": verdict})
    return rows


# ---------------------------------------------------------------- driver

@dataclass
class RunSummary:
    config_hash: str
    version: str
    stages: list[str]
    results: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)
    artifacts: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"config_hash": self.config_hash, "version": self.version, "stages": self.stages,
                "results": self.results, "timings": self.timings,
                "artifacts": sorted(self.artifacts)}


class _Job:
    def __init__(self, config: JobConfig):
        self.cfg = config
        self.T = config.build_map()
        self.partition = config.partition(self.T)
        self.K = None
        self.sd = None
        self.phi = None
        self.variance = None
        self.curve = None
        self.rate = None
        self.tails = None

    def ensure_matrix(self):
        if self.K is None:
            self.K = build_ulam(self.T, self.partition, self.cfg["method"],
                                self.cfg["samples_per_cell"], self.cfg["seed"])
        return self.K


def _stage_check(job, out, res):
    T = job.T
    try:
        rep = eta0(T).to_dict()
    except ExpansionViolation as exc:
        rep = {"s": max(br.inverse_norm() for br in T.branches), "Y": complexity_Y(T),
               "eta0": None, "passes": False, "violation": str(exc)}
    rep.update({"map": T.name, "dim": T.dim, "n_branches": len(T.branches)})
    out["regularity.json"] = json_text(rep)
    res["regularity"] = {"artifact": "regularity.json", "eta0": rep["eta0"], "passes": rep["passes"]}


def _stage_density(job, out, res):
    K = job.ensure_matrix()
    job.sd = invariant_density(K)
    raw = job.cfg.observable(job.partition, job.T)
    job.phi = center_observable(raw, job.sd.right)
    out["density.csv"] = csv_text(("cell", "v"), enumerate(job.sd.right))
    res["density"] = {"artifact": "density.csv"}


def _stage_spectrum(job, out, res):
    gap = spectral_gap(job.K, job.sd, threshold=job.cfg["gap_threshold"])
    doc = {"spectral": job.sd.to_dict(), "gap": gap.to_dict()}
    if not gap.mixing_flag:
        raise NotMixing(f"|lambda_2| = {gap.lambda2_modulus:.6g}: no spectral gap above "
                        f"{gap.threshold:g}")
    out["spectrum.json"] = json_text(doc)
    res["spectrum"] = {"artifact": "spectrum.json", "lambda": job.sd.eigenvalue,
                       "lambda2_modulus": gap.lambda2_modulus}


def _stage_variance(job, out, res):
    job.variance = green_kubo_variance(job.K, job.sd, job.phi, job.cfg["tail_tol"])
    corr = job.variance.correlations
    out["correlations.csv"] = csv_text(("n", "C_n"), enumerate(corr))
    doc = job.variance.to_dict()
    doc.pop("correlations")
    out["variance.json"] = json_text(doc)
    res["variance"] = {"artifact": "variance.json", "sigma2": job.variance.sigma2}


def _stage_ldp(job, out, res):
    s2 = job.variance.sigma2
    if s2 <= VARIANCE_TOL:
        raise ZeroVariance(f"asymptotic variance {s2:.3g} vanishes: the observable is a "
                           "coboundary and the rate function is degenerate")
    cfg = job.cfg
    job.curve = lambda_curve(job.K, job.phi, cfg["theta_max"], cfg["n_theta"],
                             threshold=cfg["gap_threshold"])
    deriv = check_derivatives(job.curve, s2)
    job.rate = rate_function(job.curve, cfg["n_eps"], s2)
    out["lambda_curve.csv"] = csv_text(("theta", "lambda", "Lambda", "gap"), job.curve.to_rows())
    out["rate.csv"] = csv_text(("eps", "c", "argmax_theta"), job.rate.to_rows())
    doc = {"valid_window": list(job.curve.valid_window), "derivatives": deriv.to_dict(),
           **job.rate.to_dict()}
    out["ldp.json"] = json_text(doc)
    res["ldp"] = {"artifact": "ldp.json", "window_eps": [job.rate.eps_minus, job.rate.eps_plus],
                  "rate_table": "rate.csv", "Lambda_second_0": deriv.d2}


def _stage_clt(job, out, res):
    checks = clt_characteristic_check(job.K, job.phi, job.variance.sigma2,
                                      job.cfg["t_grid"], job.cfg["n_schedule"])
    rows = [r for c in checks for r in c.to_rows()]
    out["clt.csv"] = csv_text(("t", "n", "re_lhs", "im_lhs", "rhs", "abs_error"), rows)
    errs = {str(c.n): c.max_abs_error for c in checks}
    out["clt.json"] = json_text({"max_abs_error": errs})
    res["clt"] = {"artifact": "clt.json", "max_abs_error": errs}


def _stage_simulate(job, out, res):
    cfg = job.cfg
    law = cfg.law(job.partition)
    seed = cfg["seed"]
    sched = sorted(set(cfg["mc_n"]))
    sums = simulate_birkhoff(job.T, job.phi, law, sched, cfg["mc_samples"], seed)
    job.tails = [_tail_from_sums(S, n, eps, seed) for n, S in zip(sched, sums)
                 for eps in cfg["mc_eps"]]
    if cfg["bsum"]:
        for n, S in zip(sched, sums):
            out[f"sums_n{n}.bsum"] = (n, S, seed)
    doc = {"tails": [t.to_dict() for t in job.tails]}
    sigma2 = job.variance.sigma2 if job.variance is not None else None
    if sigma2 is not None and sigma2 > VARIANCE_TOL:
        clt = empirical_clt(job.T, job.phi, law, cfg["clt_n"], cfg["clt_samples"], seed, sigma2)
        doc["clt"] = clt.to_dict()
    out["simulate.json"] = json_text(doc)
    res["simulate"] = {"artifact": "simulate.json"}


def _stage_compare(job, out, res):
    oracle = None
    if job.cfg["oracle"] == "markov":
        masses = job.cfg.law(job.partition).cell_masses(job.partition)
        oracle = {(t.n, t.eps): exact_markov_tail(job.K, job.phi.values, masses, t.n, t.eps)
                  for t in job.tails}
    rows = compare_report(job.rate, job.tails, oracle)
    out["compare.csv"] = csv_text(COMPARE_COLUMNS, ([r[c] for c in COMPARE_COLUMNS] for r in rows))
    verdicts = sorted({r["verdict"] for r in rows})
    res["compare"] = {"artifact": "compare.csv", "verdicts": verdicts}


_RUNNERS = {"check": _stage_check, "density": _stage_density, "spectrum": _stage_spectrum,
            "variance": _stage_variance, "ldp": _stage_ldp, "clt": _stage_clt,
            "simulate": _stage_simulate, "compare": _stage_compare}


def run_pipeline(config: JobConfig, stages: Iterable[str] | None = None,
                 out_dir: str | os.PathLike | None = None, write=True):
    """Run the requested stages (plus prerequisites) and write their artifacts.

    Returns ``(summary, artifacts)``. A stage failure propagates with the
    stage name stored in ``exc.stage``; nothing is written in that case.
    """
    order = resolve_stages(stages)
    job = _Job(config)
    summary = RunSummary(config.hash, __version__, order)
    artifacts: dict = {}
    for name in order:
        t0 = time.perf_counter()
        try:
            _RUNNERS[name](job, artifacts, summary.results)
        except TwistopError as exc:
            exc.stage = name
            raise
        summary.timings[name] = time.perf_counter() - t0
    summary.artifacts = dict.fromkeys(artifacts)
    artifacts["summary.json"] = json_text(summary.to_dict())
    if write:
        write_artifacts(artifacts, out_dir or config["output"])
    return summary, artifacts


def write_artifacts(artifacts: dict, out_dir) -> None:
    os.makedirs(out_dir, exist_ok=True)
    for name, content in artifacts.items():
        path = os.path.join(out_dir, name)
        if name.endswith(".bsum"):
            n, S, seed = content
            write_bsum(path, S, n, seed)
        else:
            with open(path, "w", newline="") as fh:
                fh.write(content)
