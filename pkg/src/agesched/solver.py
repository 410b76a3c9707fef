"""Weighted-sum AAoI relaxation: separable objective with one channel-load
constraint, solved by closed-form per-source spacing plus bisection on the
Lagrange multiplier. A solver-independent grid oracle validates it."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .capacity import LOAD_TOLERANCE, aaoi_lower_bound
from .core import SourceParams

__all__ = [
    "GridOracleResult",
    "GridTooCoarse",
    "RelaxationSolution",
    "grid_oracle",
    "kkt_residuals",
    "solve_relaxation",
    "stationary_spacing",
]

# Bisection stops on either: bracket doubling guarantees the interval exists,
# and the load is continuous and strictly decreasing in the multiplier.
BISECT_INTERVAL = 1e-12
LOAD_RESIDUAL = 1e-10


class GridTooCoarse(ValueError):
    """Grid oracle called with fewer than 50 points per axis."""


@dataclass(frozen=True, slots=True)
class RelaxationSolution:
    """Per-source optimal spacings, the age values they induce, the pick
    probabilities proportional to 1/spacing, and the constraint multiplier."""

    spacings: List[float]
    age_values: List[float]
    pick_probs: List[float]
    multiplier: float
    objective: float
    load: float


def stationary_spacing(multiplier: float, mean_intergen: float, mean_delay: float,
                       weight: float) -> float:
    """Per-source stationary point of the relaxed objective at a given
    multiplier: sqrt(m^2/2 + 2*multiplier*g/w). Strictly increasing in the
    multiplier. Clamped away from 0 so generate-at-will sources (m = 0) stay
    usable when the constraint is slack."""
    if weight <= 0.0:
        raise ValueError("weight must be > 0")
    t = math.sqrt(mean_intergen * mean_intergen / 2.0
                  + 2.0 * multiplier * mean_delay / weight)
    return max(t, mean_delay * 1e-9)


def _spacing_vector(multiplier: float, mus: Sequence[float], gammas: Sequence[float],
                    ws: Sequence[float]) -> List[float]:
    return [stationary_spacing(multiplier, m, g, w) for m, g, w in zip(mus, gammas, ws)]


def _load_of(spacings: Sequence[float], gammas: Sequence[float]) -> float:
    return sum(g / t for g, t in zip(gammas, spacings))


def _resolve_weights(sources: Sequence[SourceParams],
                     weights: Optional[Sequence[float]]) -> List[float]:
    ws = [s.weight for s in sources] if weights is None else list(weights)
    if len(ws) != len(sources):
        raise ValueError("weights length must match sources")
    if any(not (w > 0 and math.isfinite(w)) for w in ws):
        raise ValueError("weights must be positive and finite")
    return ws


def solve_relaxation(sources: Sequence[SourceParams],
                     weights: Optional[Sequence[float]] = None) -> RelaxationSolution:
    """Minimize sum_l w_l * (m_l^2/2/T_l + T_l + 2 g_l)/2 subject to
    sum_l g_l/T_l <= 1. Always feasible: large spacings drive the load to 0."""
    if len(sources) == 0:
        raise ValueError("at least one source required")
    ws = _resolve_weights(sources, weights)
    mus = [s.mean_intergen for s in sources]
    gammas = [s.mean_delay for s in sources]

    def load_at(lam: float) -> float:
        return _load_of(_spacing_vector(lam, mus, gammas, ws), gammas)

    if load_at(0.0) <= 1.0 + LOAD_TOLERANCE:
        multiplier = 0.0
    else:
        lo, hi = 0.0, 1.0
        while load_at(hi) > 1.0:
            lo, hi = hi, hi * 2.0
        multiplier = None
        while hi - lo >= BISECT_INTERVAL:
            mid = 0.5 * (lo + hi)
            residual = load_at(mid) - 1.0
            if abs(residual) <= LOAD_RESIDUAL:
                multiplier = mid
                break
            if residual > 0.0:
                lo = mid
            else:
                hi = mid
        if multiplier is None:
            multiplier = hi  # the feasible side of the final bracket

    spacings = _spacing_vector(multiplier, mus, gammas, ws)
    ages = [aaoi_lower_bound(t, m, g) for t, m, g in zip(spacings, mus, gammas)]
    inv = np.array([1.0 / t for t in spacings])
    probs = (inv / inv.sum()).tolist()
    objective = sum(w * a for w, a in zip(ws, ages))
    return RelaxationSolution(
        spacings=spacings,
        age_values=ages,
        pick_probs=probs,
        multiplier=multiplier,
        objective=objective,
        load=_load_of(spacings, gammas),
    )


def kkt_residuals(solution: RelaxationSolution, sources: Sequence[SourceParams],
                  weights: Optional[Sequence[float]] = None) -> List[float]:
    """Per-source stationarity residual at the returned point; 0 at the
    exact optimum."""
    ws = _resolve_weights(sources, weights)
    out = []
    for src, w, t in zip(sources, ws, solution.spacings):
        m, g = src.mean_intergen, src.mean_delay
        out.append(0.5 * w * (1.0 - m * m / (2.0 * t * t))
                   - solution.multiplier * g / (t * t))
    return out


@dataclass(frozen=True, slots=True)
class GridOracleResult:
    spacings: List[float]
    objective: float
    load: float


def grid_oracle(sources: Sequence[SourceParams],
                weights: Optional[Sequence[float]] = None,
                grid_resolution: int = 50,
                refine_rounds: int = 3) -> GridOracleResult:
    """Brute-force search over per-source spacing grids, independent of
    solve_relaxation. Candidates are the feasible grid points plus every grid
    point rescaled onto the constraint surface (multiplying the whole spacing
    vector by its own load lands the load exactly on 1). refine_rounds re-grids
    around the incumbent to tighten the answer; 0 reproduces a single
    exhaustive pass."""
    n = len(sources)
    if n == 0:
        raise ValueError("at least one source required")
    if n > 4:
        raise ValueError("grid oracle is exponential in the source count; max 4")
    if grid_resolution < 50:
        raise GridTooCoarse("need at least 50 grid points per axis")

    ws = np.array(_resolve_weights(sources, weights))
    mus = np.array([s.mean_intergen for s in sources])
    gammas = np.array([s.mean_delay for s in sources])
    const_term = float(np.sum(ws * gammas))

    his = 50.0 * np.maximum(n * gammas, mus)
    los = np.where(mus > 0.0, 0.5 * mus / math.sqrt(2.0), his * 1e-6)

    best_obj = math.inf
    best_t: Optional[np.ndarray] = None

    axes = [np.geomspace(los[k], his[k], grid_resolution) for k in range(n)]
    for _ in range(refine_rounds + 1):
        obj, tvec = _grid_pass(axes, mus, gammas, ws, const_term)
        if obj < best_obj:
            best_obj, best_t = obj, tvec
        # re-grid a few cells around the incumbent (log-space window)
        ratios = [(ax[-1] / ax[0]) ** (1.0 / (len(ax) - 1)) for ax in axes]
        axes = [
            np.geomspace(best_t[k] / ratios[k] ** 3, best_t[k] * ratios[k] ** 3,
                         grid_resolution)
            for k in range(n)
        ]

    assert best_t is not None
    return GridOracleResult(
        spacings=[float(x) for x in best_t],
        objective=float(best_obj),
        load=float(np.sum(gammas / best_t)),
    )


def _axis_terms(tvals: np.ndarray, mu: float, gamma: float, w: float):
    inv = gamma / tvals
    obj = 0.5 * w * (mu * mu / 2.0 / tvals + tvals + 2.0 * gamma)
    proj_a = w * (mu * mu / 4.0) / tvals
    proj_b = 0.5 * w * tvals
    return inv, obj, proj_a, proj_b


def _rest_sum(parts: List[np.ndarray]) -> np.ndarray:
    # broadcast per-axis vectors into one (R,)*k array of their sums
    shape = tuple(len(p) for p in parts)
    total = np.zeros(shape)
    for k, arr in enumerate(parts):
        sh = [1] * len(parts)
        sh[k] = -1
        total = total + arr.reshape(sh)
    return total


def _grid_pass(axes: List[np.ndarray], mus: np.ndarray, gammas: np.ndarray,
               ws: np.ndarray, const_term: float) -> Tuple[float, np.ndarray]:
    n = len(axes)
    terms = [_axis_terms(axes[k], mus[k], gammas[k], ws[k]) for k in range(n)]
    rest = [_rest_sum([terms[k][q] for k in range(1, n)]) for q in range(4)]
    shape_rest = rest[0].shape

    best_obj = math.inf
    best_t = np.array([ax[0] for ax in axes])
    inv0, obj0, a0, b0 = terms[0]
    for i in range(len(axes[0])):
        load = rest[0] + inv0[i]
        obj = rest[1] + obj0[i]
        direct = np.where(load <= 1.0 + LOAD_TOLERANCE, obj, np.inf)
        j = int(np.argmin(direct))
        v = float(direct.flat[j])
        if v < best_obj:
            best_obj = v
            idx = np.unravel_index(j, shape_rest) if shape_rest else ()
            best_t = np.array([axes[0][i]] + [axes[k + 1][idx[k]] for k in range(n - 1)])
        # rescaling every point onto the constraint surface keeps boundary
        # optima reachable even when no raw grid point is feasible nearby
        proj_obj = (rest[2] + a0[i]) / load + (rest[3] + b0[i]) * load + const_term
        j = int(np.argmin(proj_obj))
        v = float(proj_obj.flat[j])
        if v < best_obj:
            idx = np.unravel_index(j, shape_rest) if shape_rest else ()
            raw = np.array([axes[0][i]] + [axes[k + 1][idx[k]] for k in range(n - 1)])
            s = float(load.flat[j])
            best_obj = v
            best_t = s * raw
    return best_obj, best_t
