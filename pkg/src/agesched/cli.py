"""Command-line driver: config parsing, feasibility / solve / simulate /
sweep / validate subcommands, replication fan-out, and CSV + figure output.

Exit codes: 0 success, 1 usage or config error, 2 infeasible target vector,
3 validation outside tolerance.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .capacity import check_feasibility, pick_probabilities
from .core import (
    ConfigError,
    ConfigIssue,
    DelayKind,
    DelaySpec,
    SourceParams,
    SystemConfig,
    make_stream,
    validate_config,
)
from .engine import SimResult, run, simulate_pick_process
from .policies import (
    RandomizedPolicy,
    ThresholdWaitPolicy,
    grid_search_threshold,
    policy_from_name,
    randomized_from_targets,
)
from .solver import solve_relaxation

__all__ = [
    "load_config",
    "main",
    "replicated",
    "summarize",
    "sweep_single_source",
    "sweep_sources",
    "sweep_targets",
    "sweep_weighted",
    "validate_epsilon_moment",
    "validate_wald",
    "write_rows",
]

DEFAULT_HORIZON = 1e6
DEFAULT_REPLICATIONS = 5


# ---------------------------------------------------------------- config I/O

def _issue(field: str, code: str, message: str) -> ConfigIssue:
    return ConfigIssue(field, code, message)


def load_config(path: str) -> SystemConfig:
    """Parse a JSON scenario file. Sources carry mu, gamma, delay{kind, mean},
    optional alpha and weight; gamma and delay.mean are redundant and must
    agree when both appear."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError([_issue("config", "unreadable", str(exc))])
    except json.JSONDecodeError as exc:
        raise ConfigError([_issue("config", "bad_json", str(exc))])

    issues: List[ConfigIssue] = []
    if not isinstance(raw, dict):
        raise ConfigError([_issue("config", "bad_json", "top level must be an object")])
    entries = raw.get("sources")
    if not isinstance(entries, list):
        raise ConfigError([_issue("sources", "empty_sources", "sources must be a list")])

    sources: List[SourceParams] = []
    for i, entry in enumerate(entries):
        prefix = f"sources[{i}]"
        if not isinstance(entry, dict):
            issues.append(_issue(prefix, "bad_source", "each source must be an object"))
            continue
        mu = entry.get("mu")
        if not isinstance(mu, (int, float)):
            issues.append(_issue(f"{prefix}.mu", "negative_intergen",
                                 "mu (mean inter-generation time) is required"))
            mu = 1.0
        delay = entry.get("delay", {})
        if not isinstance(delay, dict):
            issues.append(_issue(f"{prefix}.delay", "unknown_delay_kind",
                                 "delay must be an object with kind and mean"))
            delay = {}
        kind_name = delay.get("kind", "exponential")
        try:
            kind = DelayKind(kind_name)
        except ValueError:
            issues.append(_issue(f"{prefix}.delay.kind", "unknown_delay_kind",
                                 f"unknown delay kind {kind_name!r}"))
            kind = DelayKind.EXPONENTIAL
        gamma = entry.get("gamma")
        mean = delay.get("mean", gamma)
        if mean is None:
            issues.append(_issue(f"{prefix}.delay.mean", "non_positive_mean",
                                 "give delay.mean or gamma"))
            mean = 1.0
        elif (gamma is not None and isinstance(gamma, (int, float))
                and isinstance(mean, (int, float))
                and abs(float(gamma) - float(mean)) > 1e-9 * max(1.0, abs(float(gamma)))):
            issues.append(_issue(f"{prefix}.gamma", "delay_mean_mismatch",
                                 f"gamma={gamma} disagrees with delay.mean={mean}"))
        if not isinstance(mean, (int, float)):
            issues.append(_issue(f"{prefix}.delay.mean", "non_positive_mean",
                                 "delay mean must be a number"))
            mean = 1.0
        sources.append(SourceParams(
            mean_intergen=float(mu),
            delay=DelaySpec(kind, float(mean)),
            age_target=(float(entry["alpha"]) if isinstance(entry.get("alpha"),
                                                            (int, float)) else None),
            weight=(float(entry["weight"]) if isinstance(entry.get("weight"),
                                                         (int, float)) else 1.0),
        ))

    cfg = SystemConfig(
        sources=tuple(sources),
        horizon=float(raw.get("horizon", DEFAULT_HORIZON)),
        seed=int(raw.get("seed", 0)),
        replications=int(raw.get("replications", DEFAULT_REPLICATIONS)),
    )
    if issues:
        raise ConfigError(issues)
    return validate_config(cfg)


def _override(cfg: SystemConfig, args: argparse.Namespace) -> SystemConfig:
    return SystemConfig(
        sources=cfg.sources,
        horizon=args.horizon if args.horizon is not None else cfg.horizon,
        seed=args.seed if args.seed is not None else cfg.seed,
        replications=(args.replications if args.replications is not None
                      else cfg.replications),
    )


# ---------------------------------------------------------------- CSV output

def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return f"{value:.9g}"
    return str(value)


def write_rows(rows: Sequence[Dict], fieldnames: Sequence[str],
               out: Optional[str]) -> None:
    """Render rows as CSV with 9-significant-digit floats, to a file or
    stdout; byte-deterministic for identical inputs."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(fieldnames)
    for row in rows:
        writer.writerow([_fmt(row[name]) for name in fieldnames])
    text = buf.getvalue()
    if out:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


# ------------------------------------------------------- replication fan-out

def _sim_worker(job: Tuple[int, SystemConfig, object, int]) -> Tuple[int, SimResult]:
    key, cfg, policy, rep = job
    return key, run(cfg, policy, replication=rep)


def replicated(jobs: Sequence[Tuple[SystemConfig, object, int]],
               max_workers: Optional[int] = None) -> List[SimResult]:
    """Run (config, policy, replication) jobs, in a process pool when more
    than one worker is available; results come back in job order either way."""
    tagged = [(i, cfg, pol, rep) for i, (cfg, pol, rep) in enumerate(jobs)]
    workers = max_workers if max_workers is not None else (os.cpu_count() or 1)
    if workers <= 1 or len(tagged) <= 1:
        return [_sim_worker(j)[1] for j in tagged]
    out: List[Optional[SimResult]] = [None] * len(tagged)
    with ProcessPoolExecutor(max_workers=workers) as ex:
        for key, res in ex.map(_sim_worker, tagged, chunksize=1):
            out[key] = res
    return out  # type: ignore[return-value]


def summarize(results: Sequence[SimResult], stat: str, source: int) -> Tuple[float, float]:
    """Mean and standard error (across replications) of one per-source
    statistic."""
    vals = np.asarray([getattr(r, stat)[source] for r in results], dtype=float)
    mean = float(vals.mean())
    se = float(vals.std(ddof=1) / math.sqrt(vals.size)) if vals.size > 1 else math.nan
    return mean, se


def _rep_jobs(cfg: SystemConfig, policy) -> List[Tuple[SystemConfig, object, int]]:
    return [(cfg, policy, rep) for rep in range(cfg.replications)]


# ------------------------------------------------------------------- sweeps

FIVE_SOURCE_MUS = (2.0, 4.0, 4.0, 8.0, 10.0)
FIVE_SOURCE_GAMMAS = (3.0, 3.0, 6.0, 2.0, 4.0)
FIVE_SOURCE_ALPHAS = (10.0, 10.0, 15.0, 20.0, 20.0)
FIVE_SOURCE_WEIGHTS = (0.8, 0.8, 0.2, 0.2, 0.4)


def sweep_sources(horizon: float = DEFAULT_HORIZON,
                  replications: int = DEFAULT_REPLICATIONS, seed: int = 0,
                  max_workers: Optional[int] = None,
                  n_values: Sequence[int] = tuple(range(1, 21)),
                  ) -> Tuple[List[Dict], List[str]]:
    """Identical sources (age target 40, mean inter-generation 4): AAoI of the
    first source versus the number of sources, for two delay means and two
    delay families."""
    rows = []
    for kind in (DelayKind.EXPONENTIAL, DelayKind.UNIFORM):
        for gamma in (2.0, 8.0):
            jobs, metas = [], []
            for n in n_values:
                sources = tuple(SourceParams(4.0, DelaySpec(kind, gamma), age_target=40.0)
                                for _ in range(n))
                cfg = SystemConfig(sources, horizon=horizon, seed=seed,
                                   replications=replications)
                policy = randomized_from_targets(sources)
                rep = check_feasibility(sources)
                metas.append((n, rep.feasible, rep.load))
                jobs.extend(_rep_jobs(cfg, policy))
            results = replicated(jobs, max_workers)
            for j, (n, feasible, load) in enumerate(metas):
                chunk = results[j * replications:(j + 1) * replications]
                mean, se = summarize(chunk, "aaoi", 0)
                rows.append({
                    "delay_kind": kind.value, "gamma": gamma, "n_sources": n,
                    "aaoi_mean": mean, "aaoi_se": se, "bound_3alpha": 120.0,
                    "feasible": feasible, "load": load,
                    "horizon": horizon, "replications": replications, "seed": seed,
                })
    fields = ["delay_kind", "gamma", "n_sources", "aaoi_mean", "aaoi_se",
              "bound_3alpha", "feasible", "load", "horizon", "replications", "seed"]
    return rows, fields


def _five_source_config(alpha1: float, horizon: float, seed: int,
                        replications: int) -> SystemConfig:
    alphas = (alpha1,) + FIVE_SOURCE_ALPHAS[1:]
    sources = tuple(SourceParams(m, DelaySpec(DelayKind.EXPONENTIAL, g), age_target=a)
                    for m, g, a in zip(FIVE_SOURCE_MUS, FIVE_SOURCE_GAMMAS, alphas))
    return SystemConfig(sources, horizon=horizon, seed=seed, replications=replications)


def sweep_targets(horizon: float = DEFAULT_HORIZON,
                  replications: int = DEFAULT_REPLICATIONS, seed: int = 0,
                  max_workers: Optional[int] = None, n_points: int = 12,
                  ) -> Tuple[List[Dict], List[str]]:
    """Five-source reference scenario: sweep the first source's age target
    and record every source's AAoI with its 3x-target bound."""
    alpha1_values = np.linspace(9.2, 20.0, n_points)
    jobs, metas = [], []
    for a1 in alpha1_values:
        cfg = _five_source_config(float(a1), horizon, seed, replications)
        policy = randomized_from_targets(cfg.sources)
        metas.append((float(a1), cfg, check_feasibility(cfg.sources).load))
        jobs.extend(_rep_jobs(cfg, policy))
    results = replicated(jobs, max_workers)
    rows = []
    for j, (a1, cfg, load) in enumerate(metas):
        chunk = results[j * replications:(j + 1) * replications]
        row: Dict = {"alpha1": a1, "load": load, "horizon": horizon,
                     "replications": replications, "seed": seed}
        for i, src in enumerate(cfg.sources):
            mean, se = summarize(chunk, "aaoi", i)
            row[f"aaoi_s{i + 1}_mean"] = mean
            row[f"aaoi_s{i + 1}_se"] = se
            row[f"bound_s{i + 1}"] = 3.0 * src.age_target
        rows.append(row)
    fields = ["alpha1"]
    for i in range(5):
        fields += [f"aaoi_s{i + 1}_mean", f"aaoi_s{i + 1}_se", f"bound_s{i + 1}"]
    fields += ["load", "horizon", "replications", "seed"]
    return rows, fields


def sweep_weighted(horizon: float = DEFAULT_HORIZON,
                   replications: int = DEFAULT_REPLICATIONS, seed: int = 0,
                   max_workers: Optional[int] = None,
                   scales: Sequence[float] = (0.5, 1.0, 2.0),
                   ) -> Tuple[List[Dict], List[str]]:
    """Weighted five-source scenario across (inter-generation, delay) scale
    factors and both stochastic delay families: simulated weighted AAoI of the
    randomized policy driven by the relaxation solution, against 3x the
    relaxation objective."""
    rows = []
    for kind in (DelayKind.EXPONENTIAL, DelayKind.UNIFORM):
        jobs, metas = [], []
        for mu_scale in scales:
            for gamma_scale in scales:
                sources = tuple(
                    SourceParams(m * mu_scale, DelaySpec(kind, g * gamma_scale), weight=w)
                    for m, g, w in zip(FIVE_SOURCE_MUS, FIVE_SOURCE_GAMMAS, FIVE_SOURCE_WEIGHTS))
                sol = solve_relaxation(sources)
                cfg = SystemConfig(sources, horizon=horizon, seed=seed,
                                   replications=replications)
                policy = RandomizedPolicy(sol.pick_probs, sol.spacings)
                metas.append((mu_scale, gamma_scale, sources, sol))
                jobs.extend(_rep_jobs(cfg, policy))
        results = replicated(jobs, max_workers)
        for j, (mu_scale, gamma_scale, sources, sol) in enumerate(metas):
            chunk = results[j * replications:(j + 1) * replications]
            weights = [s.weight for s in sources]
            per_rep = [sum(w * a for w, a in zip(weights, r.aaoi)) for r in chunk]
            arr = np.asarray(per_rep)
            se = float(arr.std(ddof=1) / math.sqrt(arr.size)) if arr.size > 1 else math.nan
            rows.append({
                "delay_kind": kind.value, "mu_scale": mu_scale,
                "gamma_scale": gamma_scale,
                "wsaaoi_mean": float(arr.mean()), "wsaaoi_se": se,
                "relaxation_objective": sol.objective,
                "bound_3x": 3.0 * sol.objective, "load": sol.load,
                "horizon": horizon, "replications": replications, "seed": seed,
            })
    fields = ["delay_kind", "mu_scale", "gamma_scale", "wsaaoi_mean", "wsaaoi_se",
              "relaxation_objective", "bound_3x", "load", "horizon",
              "replications", "seed"]
    return rows, fields


def sweep_single_source(horizon: float = DEFAULT_HORIZON,
                        replications: int = DEFAULT_REPLICATIONS, seed: int = 0,
                        max_workers: Optional[int] = None,
                        search_horizon: float = 1e5, search_replications: int = 2,
                        search_points: int = 31,
                        ) -> Tuple[List[Dict], List[str]]:
    """One generate-at-will source: spacing-by-the-delay-mean policy versus a
    grid-searched spacing threshold and the zero-wait baseline, per delay
    family and delay mean."""
    rows = []
    for kind in (DelayKind.EXPONENTIAL, DelayKind.UNIFORM):
        for gamma in (1.0, 2.0, 4.0):
            delay = DelaySpec(kind, gamma)
            search = grid_search_threshold(
                delay, thresholds=np.linspace(0.0, 3.0 * gamma, search_points),
                horizon=search_horizon, replications=search_replications, seed=seed)
            src = (SourceParams(0.0, delay),)
            cfg = SystemConfig(src, horizon=horizon, seed=seed,
                               replications=replications)
            jobs = []
            for theta in (gamma, search.best_threshold, 0.0):
                jobs.extend(_rep_jobs(cfg, ThresholdWaitPolicy(theta)))
            results = replicated(jobs, max_workers)
            chunks = [results[k * replications:(k + 1) * replications]
                      for k in range(3)]
            stats = [summarize(c, "aaoi", 0) for c in chunks]
            rows.append({
                "delay_kind": kind.value, "gamma": gamma,
                "aaoi_spacing_gamma_mean": stats[0][0], "aaoi_spacing_gamma_se": stats[0][1],
                "best_threshold": search.best_threshold,
                "aaoi_best_mean": stats[1][0], "aaoi_best_se": stats[1][1],
                "aaoi_zero_wait_mean": stats[2][0], "aaoi_zero_wait_se": stats[2][1],
                "horizon": horizon, "replications": replications, "seed": seed,
            })
    fields = ["delay_kind", "gamma", "aaoi_spacing_gamma_mean", "aaoi_spacing_gamma_se",
              "best_threshold", "aaoi_best_mean", "aaoi_best_se",
              "aaoi_zero_wait_mean", "aaoi_zero_wait_se",
              "horizon", "replications", "seed"]
    return rows, fields


SWEEPS = {
    "sources": sweep_sources,
    "targets": sweep_targets,
    "weighted": sweep_weighted,
    "single-source": sweep_single_source,
}


# ------------------------------------------------------------------ figures

def _render_figure(name: str, rows: Sequence[Dict], path: str) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    if name == "sources":
        for kind in sorted({r["delay_kind"] for r in rows}):
            for gamma in sorted({r["gamma"] for r in rows}):
                pts = [r for r in rows if r["delay_kind"] == kind and r["gamma"] == gamma]
                ax.plot([r["n_sources"] for r in pts], [r["aaoi_mean"] for r in pts],
                        marker="o", label=f"{kind}, delay mean {gamma:g}")
        ax.set_xlabel("number of sources")
        ax.set_ylabel("AAoI of source 1 (time units)")
    elif name == "targets":
        x = [r["alpha1"] for r in rows]
        for s in (1, 3):
            ax.plot(x, [r[f"aaoi_s{s}_mean"] for r in rows], marker="o",
                    label=f"source {s} AAoI")
            ax.plot(x, [r[f"bound_s{s}"] for r in rows], linestyle="--",
                    label=f"source {s} 3x target")
        ax.set_xlabel("age target of source 1 (time units)")
        ax.set_ylabel("AAoI (time units)")
    elif name == "weighted":
        for kind in sorted({r["delay_kind"] for r in rows}):
            for gs in sorted({r["gamma_scale"] for r in rows}):
                pts = sorted((r for r in rows
                              if r["delay_kind"] == kind and r["gamma_scale"] == gs),
                             key=lambda r: r["mu_scale"])
                ax.plot([r["mu_scale"] for r in pts], [r["wsaaoi_mean"] for r in pts],
                        marker="o", label=f"{kind}, delay scale {gs:g}")
                ax.plot([r["mu_scale"] for r in pts], [r["bound_3x"] for r in pts],
                        linestyle="--", alpha=0.5)
        ax.set_xlabel("inter-generation scale factor")
        ax.set_ylabel("weighted AAoI (time units)")
    elif name == "single-source":
        for kind in sorted({r["delay_kind"] for r in rows}):
            pts = sorted((r for r in rows if r["delay_kind"] == kind),
                         key=lambda r: r["gamma"])
            x = [r["gamma"] for r in pts]
            ax.plot(x, [r["aaoi_spacing_gamma_mean"] for r in pts], marker="o",
                    label=f"{kind}: spacing = delay mean")
            ax.plot(x, [r["aaoi_best_mean"] for r in pts], marker="s",
                    label=f"{kind}: searched threshold")
        ax.set_xlabel("delay mean (time units)")
        ax.set_ylabel("AAoI (time units)")
    else:  # simulate: per-source bars with bound markers
        idx = [r["source"] for r in rows]
        ax.bar(idx, [r["aaoi_mean"] for r in rows], label="simulated AAoI")
        bounds = [(r["source"], r["bound_3alpha"]) for r in rows
                  if not math.isnan(r["bound_3alpha"])]
        if bounds:
            ax.plot([b[0] for b in bounds], [b[1] for b in bounds], "r_",
                    markersize=20, label="3x age target")
        ax.set_xlabel("source")
        ax.set_ylabel("AAoI (time units)")
    ax.legend(fontsize=8)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


# ------------------------------------------------------------- validate ops

def validate_epsilon_moment(mean_intergen: float, samples: int, seed: int = 0,
                            tail_at: Optional[float] = None) -> Dict:
    """Monte Carlo check of the in-between-generations distance: drop points
    uniformly on a long memoryless generation path and measure the distance
    to the nearest generation on either side. The squared distance has mean
    mean_intergen^2 / 2 and the distance tail is exp(-2 x / mean_intergen)."""
    if mean_intergen <= 0.0 or samples < 1:
        raise ValueError("need mean_intergen > 0 and samples >= 1")
    at = mean_intergen / 2.0 if tail_at is None else float(tail_at)
    stream = make_stream(seed, "epsilon", 0, 0)
    # path long enough that interior points never see the path edges
    n_gaps = max(1000, 4 * samples)
    gens = np.cumsum(stream.exponential_array(mean_intergen, n_gaps))
    lo, hi = gens[0], gens[-1]
    points = lo + (hi - lo) * stream.random_array(samples)
    idx = np.searchsorted(gens, points, side="right")
    eps = np.minimum(points - gens[idx - 1], gens[idx] - points)
    mean_sq = float(np.mean(eps * eps))
    expected_sq = mean_intergen * mean_intergen / 2.0
    tail_emp = float(np.mean(eps > at))
    tail_expected = math.exp(-2.0 * at / mean_intergen)
    return {
        "mu": mean_intergen, "samples": samples, "seed": seed,
        "mean_sq": mean_sq, "expected_mean_sq": expected_sq,
        "mean_sq_rel_err": abs(mean_sq - expected_sq) / expected_sq,
        "tail_at": at, "tail_empirical": tail_emp, "tail_expected": tail_expected,
        "tail_rel_err": abs(tail_emp - tail_expected) / tail_expected,
    }


def validate_wald(sources: Sequence[SourceParams],
                  pick_probs: Optional[Sequence[float]] = None,
                  horizon: float = DEFAULT_HORIZON, seed: int = 0) -> List[Dict]:
    """Simulate only the pick process of the randomized policy and compare
    each source's mean inter-pick time with the renewal identity
    sum_n (p_n / p_l) * delay_mean_n."""
    if pick_probs is None:
        probs = pick_probabilities(check_feasibility(sources).max_spacing)
    else:
        probs = np.asarray(pick_probs, dtype=float)
    report = simulate_pick_process(sources, probs, horizon, seed)
    cycle = sum(p * s.mean_delay for p, s in zip(probs, sources))
    rows = []
    for i, src in enumerate(sources):
        expected = cycle / probs[i]
        measured = report.mean_inter_pick[i]
        rows.append({
            "source": i + 1, "pick_prob": float(probs[i]),
            "picks": report.pick_count[i],
            "mean_inter_pick": measured, "expected_inter_pick": float(expected),
            "rel_err": abs(measured - expected) / expected,
            "horizon": horizon, "seed": seed,
        })
    return rows


# -------------------------------------------------------------- subcommands

class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems exit 1, not argparse's 2
        raise _UsageError(message)


def _cmd_feasibility(args) -> int:
    cfg = _override(load_config(args.config), args)
    report = check_feasibility(cfg.sources)
    probs = (pick_probabilities(report.max_spacing) if report.feasible
             else [math.nan] * cfg.n_sources)
    rows = [{
        "source": i + 1,
        "mu": s.mean_intergen, "gamma": s.mean_delay,
        "alpha": s.age_target if s.age_target is not None else math.nan,
        "margin": report.margins[i], "max_spacing": report.max_spacing[i],
        "pick_prob": float(probs[i]),
        "load": report.load, "feasible": report.feasible,
    } for i, s in enumerate(cfg.sources)]
    write_rows(rows, ["source", "mu", "gamma", "alpha", "margin", "max_spacing",
                      "pick_prob", "load", "feasible"], args.out)
    return 0 if report.feasible else 2


def _cmd_solve(args) -> int:
    cfg = _override(load_config(args.config), args)
    sol = solve_relaxation(cfg.sources)
    rows = [{
        "source": i + 1,
        "mu": s.mean_intergen, "gamma": s.mean_delay, "weight": s.weight,
        "spacing": sol.spacings[i], "age_value": sol.age_values[i],
        "pick_prob": sol.pick_probs[i],
        "multiplier": sol.multiplier, "objective": sol.objective, "load": sol.load,
    } for i, s in enumerate(cfg.sources)]
    write_rows(rows, ["source", "mu", "gamma", "weight", "spacing", "age_value",
                      "pick_prob", "multiplier", "objective", "load"], args.out)
    return 0


def _cmd_simulate(args) -> int:
    cfg = _override(load_config(args.config), args)
    policy = policy_from_name(args.policy, cfg.sources)
    results = replicated(_rep_jobs(cfg, policy), args.workers)
    rows = []
    for i, src in enumerate(cfg.sources):
        aaoi_mean, aaoi_se = summarize(results, "aaoi", i)
        rows.append({
            "policy": args.policy, "source": i + 1,
            "aaoi_mean": aaoi_mean, "aaoi_se": aaoi_se,
            "bound_3alpha": (3.0 * src.age_target if src.age_target is not None
                             else math.nan),
            "mean_spacing": summarize(results, "mean_spacing", i)[0],
            "spacing_variance": summarize(results, "spacing_variance", i)[0],
            "mean_wait": summarize(results, "mean_wait", i)[0],
            "mean_system_time": summarize(results, "mean_system_time", i)[0],
            "delivered_mean": summarize(results, "delivered", i)[0],
            "busy_fraction": float(np.mean([r.busy_fraction for r in results])),
            "horizon": cfg.horizon, "replications": cfg.replications,
            "seed": cfg.seed,
        })
    write_rows(rows, ["policy", "source", "aaoi_mean", "aaoi_se", "bound_3alpha",
                      "mean_spacing", "spacing_variance", "mean_wait",
                      "mean_system_time", "delivered_mean", "busy_fraction",
                      "horizon", "replications", "seed"], args.out)
    if args.figure:
        _render_figure("simulate", rows, args.figure)
    return 0


def _cmd_sweep(args) -> int:
    fn = SWEEPS[args.sweep]
    rows, fields = fn(
        horizon=args.horizon if args.horizon is not None else DEFAULT_HORIZON,
        replications=(args.replications if args.replications is not None
                      else DEFAULT_REPLICATIONS),
        seed=args.seed if args.seed is not None else 0,
        max_workers=args.workers,
    )
    write_rows(rows, fields, args.out)
    if args.figure:
        _render_figure(args.sweep, rows, args.figure)
    return 0


def _cmd_validate_gap(args) -> int:
    row = validate_epsilon_moment(args.mu, args.samples, seed=args.seed or 0,
                                  tail_at=args.tail_at)
    passed = (row["mean_sq_rel_err"] <= args.tolerance
              and row["tail_rel_err"] <= args.tail_tolerance)
    row["passed"] = passed
    write_rows([row], ["mu", "samples", "seed", "mean_sq", "expected_mean_sq",
                       "mean_sq_rel_err", "tail_at", "tail_empirical",
                       "tail_expected", "tail_rel_err", "passed"], args.out)
    return 0 if passed else 3


def _cmd_validate_wald(args) -> int:
    cfg = _override(load_config(args.config), args)
    rows = validate_wald(cfg.sources, horizon=cfg.horizon, seed=cfg.seed)
    passed = all(r["rel_err"] <= args.tolerance for r in rows)
    for r in rows:
        r["passed"] = passed
    write_rows(rows, ["source", "pick_prob", "picks", "mean_inter_pick",
                      "expected_inter_pick", "rel_err", "horizon", "seed",
                      "passed"], args.out)
    return 0 if passed else 3


def build_parser() -> _Parser:
    parser = _Parser(prog="agesched",
                     description="Age-of-information scheduling toolkit: "
                                 "feasibility checks, target relaxation solver, "
                                 "event simulation, sweeps, and Monte Carlo "
                                 "validation.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        p.add_argument("--config", required=config_required,
                       help="JSON scenario file")
        p.add_argument("--horizon", type=float, default=None)
        p.add_argument("--replications", type=int, default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default=None, help="CSV output path (default stdout)")
        p.add_argument("--workers", type=int, default=None,
                       help="process pool size (default: CPU count)")

    p = sub.add_parser("feasibility", help="check the age-target vector")
    common(p)
    p.set_defaults(fn=_cmd_feasibility)

    p = sub.add_parser("solve", help="optimal spacings for the weighted objective")
    common(p)
    p.set_defaults(fn=_cmd_solve)

    p = sub.add_parser("simulate", help="replicated simulation of one policy")
    common(p)
    p.add_argument("--policy", required=True,
                   help="randomized | marked | round-robin | zero-wait | "
                        "threshold-wait:<spacing>")
    p.add_argument("--figure", default=None, help="also render a PNG summary")
    p.set_defaults(fn=_cmd_simulate)

    p = sub.add_parser("sweep", help="run a named parameter sweep")
    common(p, config_required=False)
    p.add_argument("--sweep", required=True, choices=sorted(SWEEPS),
                   help="which sweep to run")
    p.add_argument("--figure", default=None, help="also render a PNG of the sweep")
    p.set_defaults(fn=_cmd_sweep)

    p = sub.add_parser("validate-gap",
                       help="Monte Carlo check of the distance-to-generation moment")
    p.add_argument("--mu", type=float, required=True)
    p.add_argument("--samples", type=int, default=1_000_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tail-at", type=float, default=None)
    p.add_argument("--tolerance", type=float, default=0.02)
    p.add_argument("--tail-tolerance", type=float, default=0.01)
    p.add_argument("--out", default=None)
    p.set_defaults(fn=_cmd_validate_gap)

    p = sub.add_parser("validate-wald",
                       help="check the inter-pick renewal identity by simulation")
    common(p)
    p.add_argument("--tolerance", type=float, default=0.02)
    p.set_defaults(fn=_cmd_validate_wald)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.fn(args)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ConfigError as exc:
        for issue in exc.issues:
            print(f"config error: {issue.field}: {issue.message}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
