"""Batch experiments over reference states, encodings and pools.

Sweeps enumerate every spin string of a chain, run one AVQITE simulation per
(encoding, pool, basis, reference), and summarize the final CNOT counts with
box-plot statistics.  Excluded runs (low fidelity, vanishing initial
gradient, divergence) are listed with their reason rather than dropped.
"""

from __future__ import annotations

import csv
import hashlib
import itertools
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .avqite import SUCCESS_FIDELITY, AvqiteConfig, Reference, RunResult, StepRecord, cnot_count, run
from .encoding import Encoding
from .exactdiag import ground_state
from .model import PRESETS, ModelSpec, build_qubit_hamiltonian

__all__ = [
    "cnot_count", "all_spin_strings", "sweep", "summarize", "rank_references",
    "fit_scaling", "box_stats", "report", "load_results", "scaling_study",
]

log = logging.getLogger(__name__)

POOL_ORDER = {"maximal": 0, "minimal": 1}
LEAKAGE_BINS = np.arange(-16.0, 0.5, 1.0)
LEAKAGE_THRESHOLD = 1.0 - SUCCESS_FIDELITY  # <P> = 0.999 marker


def all_spin_strings(L: int) -> list[str]:
    return ["".join(s) for s in itertools.product("012", repeat=L)]


# ---------------------------------------------------------------------------
# running
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Job:
    spec: ModelSpec
    encoding: str
    pool: str
    basis: str
    spins: str


def _run_job(job: Job, config: AvqiteConfig, cache: dict) -> RunResult:
    key = (job.spec, job.encoding)
    if key not in cache:
        cache[key] = build_qubit_hamiltonian(job.spec, job.encoding)
    if job.spec not in cache:
        cache[job.spec] = ground_state(job.spec)
    try:
        return run(job.spec, job.encoding, job.pool, Reference(job.spins, job.basis),
                   config, ed=cache[job.spec], H=cache[key])
    except Exception as exc:  # recorded, never fatal for the sweep
        log.exception("run failed: %s", job)
        return RunResult(
            config={"model": asdict(job.spec), "encoding": job.encoding, "pool": job.pool,
                    "reference": {"spins": job.spins, "basis": job.basis},
                    "avqite": config.to_dict(), "integrator": "forward_euler"},
            trajectory=[],
            final={"fidelity": 0.0, "halted_reason": "error", "diagnostic": repr(exc),
                   "n_cx_final": 0, "n_cx_cumulative": 0, "steps": 0,
                   "projector": float("nan"), "energy": float("nan"),
                   "initial_max_grad": float("nan")},
        )


_WORKER_CACHE: dict = {}


def _worker(args: tuple[Job, AvqiteConfig]) -> RunResult:
    job, config = args
    return _run_job(job, config, _WORKER_CACHE)


def run_jobs(jobs: Sequence[Job], config: AvqiteConfig, workers: int = 1,
             progress: bool = False) -> list[RunResult]:
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_worker, [(j, config) for j in jobs], chunksize=1))
    else:
        cache: dict = {}
        results = []
        for i, job in enumerate(jobs):
            results.append(_run_job(job, config, cache))
            if progress:
                f = results[-1].final
                log.info("[%d/%d] %s %s %s %s F=%.5f NCX=%s %s", i + 1, len(jobs),
                         job.encoding, job.pool, job.basis, job.spins, f["fidelity"],
                         f["n_cx_final"], f["halted_reason"])
    return sorted(results, key=_sort_key)


def _sort_key(r: RunResult) -> tuple:
    c = r.config
    return (c["model"]["L"], c["encoding"], c["pool"], c["reference"]["basis"],
            c["reference"]["spins"])


def sweep(spec: ModelSpec, encodings: Iterable[str], pools: Iterable[str],
          bases: Iterable[str], config: AvqiteConfig | None = None,
          references: Sequence[str] | None = None, workers: int = 1,
          progress: bool = False) -> tuple[list[RunResult], dict]:
    """Run every reference spin string for each (encoding, pool, basis) cell."""
    config = config or AvqiteConfig()
    refs = list(references) if references is not None else all_spin_strings(spec.L)
    jobs = [
        Job(spec, Encoding.parse(e).value, p, b, s)
        for e in encodings for p in pools for b in bases for s in refs
    ]
    results = run_jobs(jobs, config, workers, progress)
    return results, summarize(results)


# ---------------------------------------------------------------------------
# statistics
# ---------------------------------------------------------------------------


def is_success(r: RunResult) -> bool:
    # recomputed from the stored fidelity on every call
    return r.final.get("fidelity", 0.0) >= SUCCESS_FIDELITY


def exclusion_reason(r: RunResult) -> str | None:
    f = r.final
    grad_cutoff = r.config["avqite"]["grad_cutoff"]
    if f["halted_reason"] in ("diverged", "error"):
        return f["halted_reason"]
    g0 = f.get("initial_max_grad", 0.0)
    if f["halted_reason"] == "vanishing_gradient" or not (g0 >= grad_cutoff):
        return "vanishing_initial_gradient"
    if not is_success(r):
        return "low_fidelity"
    return None


def quantile(x: Sequence[float], q: float) -> float:
    """Linear interpolation between order statistics (position q*(n-1))."""
    s = sorted(float(v) for v in x)
    if not s:
        raise ValueError("quantile of empty sample")
    pos = q * (len(s) - 1)
    lo = int(np.floor(pos))
    hi = min(lo + 1, len(s) - 1)
    return s[lo] + (pos - lo) * (s[hi] - s[lo])


def box_stats(values: Sequence[float]) -> dict:
    """Quartiles, 1.5 IQR whiskers clipped to the data, and outliers."""
    vals = [float(v) for v in values]
    if not vals:
        return {"n": 0, "q1": None, "median": None, "q3": None, "iqr": None,
                "whisker_low": None, "whisker_high": None, "outliers": []}
    q1, med, q3 = (quantile(vals, q) for q in (0.25, 0.5, 0.75))
    iqr = q3 - q1
    lo_lim, hi_lim = q1 - 1.5 * iqr, q3 + 1.5 * iqr
    inside = [v for v in vals if lo_lim <= v <= hi_lim]
    return {
        "n": len(vals), "q1": q1, "median": med, "q3": q3, "iqr": iqr,
        "whisker_low": min(inside), "whisker_high": max(inside),
        "outliers": sorted(v for v in vals if v < lo_lim or v > hi_lim),
    }


def leakage_histogram(results: Sequence[RunResult]) -> dict:
    """Histogram of log10(1 - <P>) at the final step."""
    logs = []
    for r in results:
        p = r.final.get("projector")
        if p is None or not np.isfinite(p):
            continue
        logs.append(float(np.log10(max(1.0 - p, 1e-16))))
    counts, edges = np.histogram(logs, bins=LEAKAGE_BINS)
    return {
        "edges": edges.tolist(),
        "counts": counts.tolist(),
        "threshold_log10": float(np.log10(LEAKAGE_THRESHOLD)),
        "n_above_threshold": int(sum(v > np.log10(LEAKAGE_THRESHOLD) for v in logs)),
    }


def _cell(r: RunResult) -> str:
    c = r.config
    return f"{c['encoding']}/{c['pool']}/{c['reference']['basis']}"


def _run_key(r: RunResult) -> str:
    return f"{_cell(r)}/{r.config['reference']['spins']}@L{r.config['model']['L']}"


def _group_summary(results: Sequence[RunResult]) -> dict:
    excluded = {}
    included = []
    for r in results:
        why = exclusion_reason(r)
        if why is None:
            included.append(r)
        else:
            excluded[_run_key(r)] = why
    with_grad = [r for r in results if exclusion_reason(r) != "vanishing_initial_gradient"]
    n_success = sum(is_success(r) for r in results)
    return {
        "total": len(results),
        "included": len(included),
        "excluded": len(excluded),
        "exclusions": excluded,
        "successes": n_success,
        "success_rate": n_success / len(results) if results else None,
        "success_rate_nonzero_gradient": (
            sum(is_success(r) for r in with_grad) / len(with_grad) if with_grad else None
        ),
        "n_cx_final": box_stats([r.final["n_cx_final"] for r in included]),
        "n_cx_cumulative": box_stats([r.final["n_cx_cumulative"] for r in included]),
        "leakage": leakage_histogram(results),
    }


def summarize(results: Sequence[RunResult]) -> dict:
    cells: dict[str, list[RunResult]] = {}
    for r in results:
        cells.setdefault(_cell(r), []).append(r)
    return {
        "cells": {k: _group_summary(v) for k, v in sorted(cells.items())},
        "overall": _group_summary(results),
        "notes": {
            "quantiles": "linear interpolation between order statistics",
            "success": f"fidelity >= {SUCCESS_FIDELITY}",
            "pool_rank_order": "maximal before minimal",
        },
    }


# ---------------------------------------------------------------------------
# ranking and scaling
# ---------------------------------------------------------------------------


def config_hash(r: RunResult) -> str:
    return hashlib.sha1(json.dumps(r.config, sort_keys=True).encode()).hexdigest()


def rank_key(r: RunResult) -> tuple:
    f = r.final
    return (f["n_cx_final"], f["n_cx_cumulative"], f["steps"],
            POOL_ORDER.get(r.config["pool"], 99), config_hash(r))


def rank_references(results: Sequence[RunResult], top: int | None = None,
                    successful_only: bool = True) -> list[RunResult]:
    """Order by final CNOTs, cumulative CNOTs, step count, then pool."""
    pool = [r for r in results if not successful_only or exclusion_reason(r) is None]
    if not pool:
        raise ValueError("no results to rank")
    ranked = sorted(pool, key=rank_key)
    return ranked[:top] if top is not None else ranked


@dataclass
class ScalingFit:
    exponent: float
    prefactor: float
    residual: float
    fixed: dict = field(default_factory=dict)


def fit_scaling(points: Sequence[tuple[float, float]]) -> ScalingFit:
    """Power-law fit ``N = a L^p`` in log-log space, plus ``a`` for p = 3, 4."""
    pts = [(float(L), float(n)) for L, n in points]
    if len(pts) < 3:
        raise ValueError("need at least three sizes for a scaling fit")
    if any(n <= 0 or L <= 0 for L, n in pts):
        raise ValueError("scaling fit needs positive sizes and counts")
    x = np.log([L for L, _ in pts])
    y = np.log([n for _, n in pts])
    (p, loga), res, *_ = np.polyfit(x, y, 1, full=True)
    resid = float(np.sqrt(res[0] / len(pts))) if len(res) else 0.0
    Ls = np.array([L for L, _ in pts])
    Ns = np.array([n for _, n in pts])
    fixed = {}
    for k in (3, 4):
        basis = Ls**k
        fixed[k] = float(basis @ Ns / (basis @ basis))
    return ScalingFit(exponent=float(p), prefactor=float(np.exp(loga)), residual=resid,
                      fixed=fixed)


def extend_reference(spins: str, L: int) -> str:
    """Repeat a spin pattern cyclically to length ``L``."""
    return (spins * (L // len(spins) + 1))[:L]


SCALING_ENCODINGS = ("standard", "gray", "multiplet")  # unary left out


def scaling_study(preset: str, sizes: Sequence[int],
                  encodings: Sequence[str] = SCALING_ENCODINGS,
                  pools: Sequence[str] = ("minimal", "maximal"),
                  bases: Sequence[str] = ("z", "x"), top_k: int = 16,
                  config: AvqiteConfig | None = None, workers: int = 1,
                  model_kwargs: dict | None = None) -> dict:
    """Rank all references at the smallest size, carry the best ``top_k`` per
    (encoding, pool, basis) cell to larger sizes, and fit mean final CNOTs."""
    config = config or AvqiteConfig()
    make = PRESETS[preset]
    sizes = sorted(sizes)
    kwargs = model_kwargs or {}
    base_results, _ = sweep(make(sizes[0], **kwargs), encodings, pools, bases, config,
                            workers=workers)
    chosen: dict[tuple[str, str, str], list[str]] = {}
    for e in encodings:
        enc = Encoding.parse(e).value
        for p in pools:
            for b in bases:
                cell = [r for r in base_results
                        if r.config["encoding"] == enc and r.config["pool"] == p
                        and r.config["reference"]["basis"] == b]
                try:
                    best = rank_references(cell, top=top_k)
                except ValueError:
                    best = []
                chosen[(enc, p, b)] = [r.config["reference"]["spins"] for r in best]
    means: dict[str, dict[int, float]] = {}
    all_results = list(base_results)
    for L in sizes:
        for (enc, p, b), refs in chosen.items():
            if not refs:
                continue
            if L == sizes[0]:
                cell = [r for r in base_results if r.config["encoding"] == enc
                        and r.config["pool"] == p and r.config["reference"]["basis"] == b
                        and r.config["reference"]["spins"] in refs]
            else:
                ext = sorted({extend_reference(s, L) for s in refs})
                jobs = [Job(make(L, **kwargs), enc, p, b, s) for s in ext]
                cell = run_jobs(jobs, config, workers)
                all_results.extend(cell)
            ok = [r.final["n_cx_final"] for r in cell if exclusion_reason(r) is None]
            if ok:
                means.setdefault(enc, {}).setdefault(L, [])
                means[enc][L].extend(ok)
    averaged = {enc: {L: float(np.mean(v)) for L, v in byL.items()} for enc, byL in means.items()}
    fits = {}
    for enc, byL in averaged.items():
        pts = sorted(byL.items())
        if len(pts) >= 3:
            fits[enc] = asdict(fit_scaling(pts))
    return {"preset": preset, "sizes": sizes, "selected": {"/".join(k): v for k, v in chosen.items()},
            "mean_n_cx_final": averaged, "fits": fits, "results": all_results}


# ---------------------------------------------------------------------------
# files
# ---------------------------------------------------------------------------

RUN_COLUMNS = [
    "model", "L", "J", "delta", "D", "hx", "boundary", "encoding", "pool", "basis", "spins",
    "energy", "exact_energy", "fidelity", "success", "projector", "n_cx_final",
    "n_cx_cumulative", "steps", "tau_final", "n_params", "halted_reason",
    "initial_variance", "initial_max_grad", "excluded",
]
TRAJ_COLUMNS = ["encoding", "pool", "basis", "spins", "L"] + [
    f for f in StepRecord.__dataclass_fields__ if f != "added"
] + ["added"]


def _run_row(r: RunResult) -> dict:
    m = r.config["model"]
    f = r.final
    kind = "bc" if m["J"] == 0 else "xxz" if m["hx"] == 0 else "general"
    return {
        "model": kind, "L": m["L"], "J": m["J"], "delta": m["delta"], "D": m["D"],
        "hx": m["hx"], "boundary": m["boundary"], "encoding": r.config["encoding"],
        "pool": r.config["pool"], "basis": r.config["reference"]["basis"],
        "spins": r.config["reference"]["spins"],
        **{k: f.get(k) for k in ("energy", "exact_energy", "fidelity")},
        "success": is_success(r),
        **{k: f.get(k) for k in ("projector", "n_cx_final", "n_cx_cumulative", "steps",
                                 "tau_final", "n_params", "halted_reason",
                                 "initial_variance", "initial_max_grad")},
        "excluded": exclusion_reason(r) or "",
    }


def save_results(results: Sequence[RunResult], path: Path) -> None:
    with open(path, "w") as fh:
        for r in results:
            fh.write(json.dumps(r.to_dict()) + "\n")


def load_results(path: Path) -> list[RunResult]:
    with open(path) as fh:
        return [RunResult.from_dict(json.loads(line)) for line in fh if line.strip()]


def _text_table(summary: dict) -> str:
    head = f"{'cell':32s} {'runs':>5s} {'incl':>5s} {'succ%':>6s} {'Q1':>7s} {'med':>7s} {'Q3':>7s}"
    lines = [head, "-" * len(head)]
    rows = list(summary["cells"].items()) + [("overall", summary["overall"])]
    for name, s in rows:
        b = s["n_cx_final"]
        rate = "" if s["success_rate"] is None else f"{100 * s['success_rate']:.1f}"

        def fmt(v):
            return "-" if v is None else f"{v:.1f}"

        lines.append(f"{name:32s} {s['total']:5d} {s['included']:5d} {rate:>6s} "
                     f"{fmt(b['q1']):>7s} {fmt(b['median']):>7s} {fmt(b['q3']):>7s}")
    return "\n".join(lines) + "\n"


def report(results: Sequence[RunResult], outdir: Path | str, trajectories: bool = False) -> dict:
    """Write runs.csv, summary.json, summary.txt and optionally trajectories.csv."""
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    summary = summarize(results)
    with open(out / "runs.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=RUN_COLUMNS)
        w.writeheader()
        for r in results:
            w.writerow(_run_row(r))
    if trajectories:
        with open(out / "trajectories.csv", "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=TRAJ_COLUMNS)
            w.writeheader()
            for r in results:
                key = {"encoding": r.config["encoding"], "pool": r.config["pool"],
                       "basis": r.config["reference"]["basis"],
                       "spins": r.config["reference"]["spins"], "L": r.config["model"]["L"]}
                for rec in r.trajectory:
                    row = asdict(rec)
                    row["added"] = ";".join(row["added"])
                    w.writerow({**key, **row})
    with open(out / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2)
    (out / "summary.txt").write_text(_text_table(summary))
    return summary


def write_trajectory_csv(result: RunResult, path: Path) -> None:
    fields = [f for f in StepRecord.__dataclass_fields__]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields)
        w.writeheader()
        for rec in result.trajectory:
            row = asdict(rec)
            row["added"] = ";".join(row["added"])
            w.writerow(row)
