"""Worst-case regret search over binary-signal environments.

Stage 1 runs many Nelder-Mead maximisations at once (one simplex per random
start, advanced together with numpy).  Stage 2 takes the best few local
optima and polishes each by coordinate-wise grid search at a fine step until
a full pass over the coordinates finds no improvement.  The reported value
is always the exactly re-evaluated regret of a concrete environment, so the
search can under-report the supremum but never over-report it.
"""

from __future__ import annotations

import enum
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .aggregators import AggregatorSpec, GeneralizedLogOdds, LogOdds, spec_to_dict
from .env import PARAM_NAMES, BinaryCIEnvironment, BlackwellEnvironment
from .regret import (
    blackwell_regret,
    blackwell_regret_batch,
    ci_regret_batch,
    expected_regret,
)

log = logging.getLogger(__name__)

START_MARGIN = 1e-9
TOP_K = 5
MAX_REFINE_PASSES = 500


class InfeasibleDomain(ValueError):
    """The aggregator needs information the search domain does not expose."""


class Mode(str, enum.Enum):
    UNKNOWN_STATE = "unknown"
    KNOWN_ZERO_ONE = "known01"
    KNOWN_MARGINAL_MEAN = "known_marginal"


@dataclass(frozen=True)
class SearchDomain:
    """Which environment parameters are free.

    ``fixed`` pins individual parameters (by name) on top of what the mode
    already fixes.
    """

    mode: Mode = Mode.UNKNOWN_STATE
    fixed: tuple[tuple[str, float], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode(self.mode))
        fixed = dict(self.fixed)
        if self.mode is Mode.KNOWN_ZERO_ONE:
            fixed = {"theta1": 0.0, "theta2": 1.0, **fixed}
        bad = set(fixed) - set(PARAM_NAMES)
        if bad:
            raise ValueError(f"unknown parameter(s) {sorted(bad)}")
        object.__setattr__(self, "fixed", tuple(sorted(fixed.items())))

    @property
    def exposes_mean(self) -> bool:
        return self.mode is Mode.KNOWN_MARGINAL_MEAN

    @property
    def free(self) -> tuple[str, ...]:
        pinned = dict(self.fixed)
        return tuple(n for n in PARAM_NAMES if n not in pinned)

    def expand(self, u: np.ndarray) -> np.ndarray:
        """Free coordinates ``(n, d)`` -> sorted environment parameters ``(n, 7)``."""
        full = np.empty((u.shape[0], 7))
        pinned = dict(self.fixed)
        j = 0
        for i, name in enumerate(PARAM_NAMES):
            if name in pinned:
                full[:, i] = pinned[name]
            else:
                full[:, i] = u[:, j]
                j += 1
        return canonical_order(full)


def canonical_order(full: np.ndarray) -> np.ndarray:
    """Relabel states so ``theta1 <= theta2``; the world is unchanged."""
    swap = full[:, 0] > full[:, 1]
    if not swap.any():
        return full
    out = full.copy()
    s = full[swap]
    out[swap] = np.column_stack([s[:, 1], s[:, 0], 1.0 - s[:, 2], s[:, 5], s[:, 6], s[:, 3], s[:, 4]])
    return out


def canonical_blackwell(x: np.ndarray) -> np.ndarray:
    """Same relabelling for :class:`BlackwellEnvironment` parameter rows."""
    swap = x[:, 0] > x[:, 1]
    if not swap.any():
        return x
    out = x.copy()
    s = x[swap]
    out[swap] = np.column_stack([s[:, 1], s[:, 0], 1.0 - s[:, 2], s[:, 4], s[:, 3], s[:, 5], s[:, 6]])
    return out


@dataclass(frozen=True)
class SearchConfig:
    n_starts: int = 256
    local_iters: int = 2000
    refine_step: float = 1e-5
    refine_radius: float = 1e-3
    rng_seed: int = 0
    n_workers: int = 1
    top_k: int = TOP_K

    def __post_init__(self):
        if self.n_starts < 1:
            raise ValueError("n_starts must be >= 1")
        if not 0 < self.refine_step <= self.refine_radius:
            raise ValueError("need 0 < refine_step <= refine_radius")
        if self.n_workers < 1:
            raise ValueError("n_workers must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "SearchConfig":
        return cls(**data)


@dataclass
class SearchResult:
    value: float
    argmax_env: object
    stage1_candidates: list = field(default_factory=list)
    refine_trace: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "argmax_env": self.argmax_env.to_dict(),
            "stage1_candidates": [list(map(float, c)) for c in self.stage1_candidates],
            "refine_trace": [[int(s), float(v)] for s, v in self.refine_trace],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


# --- stage 1: batched Nelder-Mead ---------------------------------------------

def nelder_mead_batch(objective: Callable[[np.ndarray], np.ndarray], starts: np.ndarray,
                      iters: int, scale: float = 0.1, xtol: float = 1e-13) -> tuple[np.ndarray, np.ndarray]:
    """Minimise ``objective`` over ``[0, 1]^d`` from each row of ``starts``.

    All simplices advance in lockstep; points leaving the box are projected
    back onto it.  Returns the best vertex and value per start.
    """
    n, d = starts.shape
    rho, chi, gam, sig = 1.0, 2.0, 0.5, 0.5
    steps = np.where(starts + scale <= 1.0, scale, -scale)
    simplex = np.repeat(starts[:, None, :], d + 1, axis=1)
    for k in range(d):
        simplex[:, k + 1, k] += steps[:, k]
    simplex = np.clip(simplex, 0.0, 1.0)
    values = objective(simplex.reshape(-1, d)).reshape(n, d + 1)
    rows = np.arange(n)
    active = np.ones(n, dtype=bool)

    for _ in range(iters):
        order = np.argsort(values, axis=1, kind="stable")
        simplex = np.take_along_axis(simplex, order[:, :, None], axis=1)
        values = np.take_along_axis(values, order, axis=1)
        spread = np.max(np.abs(simplex[:, 1:] - simplex[:, :1]), axis=(1, 2))
        active &= spread > xtol
        if not active.any():
            break
        idx = rows[active]
        S, V = simplex[idx], values[idx]
        best, worst = V[:, 0], V[:, -1]
        second = V[:, -2]
        centroid = S[:, :-1].mean(axis=1)
        xw = S[:, -1]
        xr = np.clip(centroid + rho * (centroid - xw), 0.0, 1.0)
        xe = np.clip(centroid + chi * (centroid - xw), 0.0, 1.0)
        xoc = np.clip(centroid + gam * (xr - centroid), 0.0, 1.0)
        xic = np.clip(centroid + gam * (xw - centroid), 0.0, 1.0)
        m = len(idx)
        fr, fe, foc, fic = np.split(objective(np.concatenate([xr, xe, xoc, xic])), 4)

        new_x = np.empty_like(xr)
        new_f = np.empty(m)
        shrink = np.zeros(m, dtype=bool)

        expand = fr < best
        use_e = expand & (fe < fr)
        new_x[expand] = np.where(use_e[expand, None], xe[expand], xr[expand])
        new_f[expand] = np.where(use_e[expand], fe[expand], fr[expand])

        reflect = ~expand & (fr < second)
        new_x[reflect], new_f[reflect] = xr[reflect], fr[reflect]

        outside = ~expand & ~reflect & (fr < worst)
        ok = outside & (foc <= fr)
        new_x[ok], new_f[ok] = xoc[ok], foc[ok]
        shrink |= outside & ~ok

        inside = ~expand & ~reflect & ~outside
        ok = inside & (fic < worst)
        new_x[ok], new_f[ok] = xic[ok], fic[ok]
        shrink |= inside & ~ok

        keep = ~shrink
        S[keep, -1] = new_x[keep]
        V[keep, -1] = new_f[keep]
        if shrink.any():
            Ss = S[shrink]
            Ss[:, 1:] = Ss[:, :1] + sig * (Ss[:, 1:] - Ss[:, :1])
            Ss = np.clip(Ss, 0.0, 1.0)
            Vs = V[shrink]
            Vs[:, 1:] = objective(Ss[:, 1:].reshape(-1, d)).reshape(-1, d)
            S[shrink], V[shrink] = Ss, Vs
        simplex[idx], values[idx] = S, V

    best = np.argmin(values, axis=1)
    return simplex[rows, best], values[rows, best]


# --- stage 2: coordinate grid refinement --------------------------------------

def refine_coordinates(objective: Callable[[np.ndarray], np.ndarray], x0: np.ndarray,
                       step: float, radius: float, max_passes: int = MAX_REFINE_PASSES):
    """Coordinate-wise grid ascent on ``[0, 1]^d``.

    For each coordinate, evaluate a grid of spacing ``step`` within ``radius``
    of the current point (clipped to the box) and move to the best grid point
    if it strictly improves.  Stops after a pass with no improvement.
    Returns ``(x, value, trace)`` with ``trace`` the value after each pass.
    """
    x = np.array(x0, dtype=float)
    best = float(objective(x[None, :])[0])
    half = int(round(radius / step))
    offsets = step * np.arange(-half, half + 1)
    trace = [(0, best)]
    for n_pass in range(1, max_passes + 1):
        improved = False
        for j in range(x.size):
            cand = np.repeat(x[None, :], offsets.size, axis=0)
            cand[:, j] = np.clip(x[j] + offsets, 0.0, 1.0)
            vals = objective(cand)
            k = int(np.argmax(vals))
            if vals[k] > best:
                best = float(vals[k])
                x = cand[k]
                improved = True
        trace.append((n_pass, best))
        if not improved:
            break
    return x, best, trace


# --- drivers -----------------------------------------------------------------

def _check_feasible(spec: AggregatorSpec, domain: SearchDomain) -> None:
    if getattr(spec, "uses_env_mean", False) and not domain.exposes_mean:
        raise InfeasibleDomain(
            f"{spec!r} uses the environment prior mean but domain {domain.mode.value} hides it"
        )


def _stage1_chunk(args):
    kind, spec, domain, starts, iters = args
    objective = _objective(kind, spec, domain)
    x, v = nelder_mead_batch(lambda u: -objective(u), starts, iters)
    return x, -v


def _objective(kind: str, spec, domain) -> Callable[[np.ndarray], np.ndarray]:
    if kind == "ci":
        return lambda u: ci_regret_batch(spec, domain.expand(u), expose_mean=domain.exposes_mean)
    return lambda u: blackwell_regret_batch(spec, canonical_blackwell(u))


def _two_stage(kind: str, spec, domain, dim: int, config: SearchConfig):
    rng = np.random.default_rng(config.rng_seed)
    starts = START_MARGIN + (1 - 2 * START_MARGIN) * rng.random((config.n_starts, dim))
    chunks = np.array_split(starts, min(config.n_workers, config.n_starts))
    tasks = [(kind, spec, domain, c, config.local_iters) for c in chunks if len(c)]
    if config.n_workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=config.n_workers) as pool:
            parts = list(pool.map(_stage1_chunk, tasks))
    else:
        parts = [_stage1_chunk(t) for t in tasks]
    xs = np.concatenate([p[0] for p in parts])
    vs = np.concatenate([p[1] for p in parts])

    order = np.argsort(-vs, kind="stable")
    picked: list[int] = []
    for i in order:
        if all(np.max(np.abs(xs[i] - xs[j])) > config.refine_radius for j in picked):
            picked.append(int(i))
        if len(picked) == config.top_k:
            break

    objective = _objective(kind, spec, domain)
    best_x, best_v, best_trace = None, -math.inf, []
    for i in picked:
        x, v, trace = refine_coordinates(objective, xs[i], config.refine_step, config.refine_radius)
        log.debug("candidate %d: stage1 %.9g refined %.9g", i, vs[i], v)
        if v > best_v:
            best_x, best_v, best_trace = x, v, trace
    return best_x, [xs[i] for i in picked], best_trace


def worst_case_regret(spec: AggregatorSpec, domain: SearchDomain = SearchDomain(),
                      config: SearchConfig = SearchConfig()) -> SearchResult:
    """Largest regret of ``spec`` found over the domain's environments."""
    _check_feasible(spec, domain)
    dim = len(domain.free)
    if dim == 0:
        env = BinaryCIEnvironment.from_array(domain.expand(np.zeros((1, 0)))[0])
        return SearchResult(expected_regret(spec, env).total, env)
    x, candidates, trace = _two_stage("ci", spec, domain, dim, config)
    full = domain.expand(x[None, :])[0]
    env = BinaryCIEnvironment.from_array(full)
    value = expected_regret(spec, env).total
    cands = [domain.expand(c[None, :])[0] for c in candidates]
    return SearchResult(value, env, cands, trace)


def blackwell_worst_case(spec: AggregatorSpec, config: SearchConfig = SearchConfig()) -> SearchResult:
    """Worst case of ``E[(f - x_informed)^2]`` over garbled binary-signal pairs."""
    dim = len(BlackwellEnvironment.FIELDS)
    x, candidates, trace = _two_stage("blackwell", spec, None, dim, config)
    env = BlackwellEnvironment.from_array(canonical_blackwell(x[None, :])[0])
    value = blackwell_regret(spec, env)
    cands = [canonical_blackwell(c[None, :])[0] for c in candidates]
    return SearchResult(value, env, cands, trace)


def sweep_alpha(domain: SearchDomain, alphas: Sequence[float],
                config: SearchConfig = SearchConfig(),
                family: Callable[[float], AggregatorSpec] = LogOdds) -> list[tuple[float, SearchResult]]:
    """Worst case of ``family(alpha)`` at each grid point, in grid order."""
    alphas = [float(a) for a in alphas]
    if not alphas:
        raise ValueError("alpha grid is empty")
    if any(not 0.0 <= a <= 1.0 for a in alphas):
        raise ValueError("alpha values must lie in [0, 1]")
    specs = [family(a) for a in alphas]
    results = _map_searches(specs, domain, config)
    return list(zip(alphas, results))


def _search_task(args):
    spec, domain, config = args
    return worst_case_regret(spec, domain, config)


def _map_searches(specs, domain, config) -> list[SearchResult]:
    if config.n_workers > 1 and len(specs) > 1:
        inner = SearchConfig(**{**config.to_dict(), "n_workers": 1})
        with ProcessPoolExecutor(max_workers=config.n_workers) as pool:
            return list(pool.map(_search_task, [(s, domain, inner) for s in specs]))
    return [worst_case_regret(s, domain, config) for s in specs]


def frange(start: float, stop: float, step: float) -> list[float]:
    """Inclusive grid ``start, start+step, ..., stop`` rounded to the step's precision."""
    if step <= 0:
        raise ValueError("grid step must be positive")
    n = int(math.floor((stop - start) / step + 1e-9))
    digits = max(0, -int(math.floor(math.log10(step))) + 3)
    return [round(start + i * step, digits) for i in range(n + 1)]


def optimize_aggregator(family: str, domain: SearchDomain, outer_grid: float,
                        config: SearchConfig = SearchConfig(),
                        gamma_grid: Optional[float] = None):
    """Grid-minimise worst-case regret over the family's parameters.

    ``family`` is ``"log_odds"`` (grid over alpha) or ``"gen_log_odds"`` (grid
    over alpha and gamma, with ``gamma_grid`` defaulting to ``outer_grid``).
    Returns ``(params, value)``; ties go to the smaller alpha, then gamma.
    """
    if outer_grid <= 0:
        raise ValueError("outer_grid must be positive")
    alphas = frange(0.0, 1.0, outer_grid)
    if family == "log_odds":
        grid = [(a,) for a in alphas]
        specs = [LogOdds(a) for a in alphas]
    elif family == "gen_log_odds":
        gammas = frange(-1.0, 1.0, gamma_grid or outer_grid)
        grid = [(a, g) for a in alphas for g in gammas]
        specs = [GeneralizedLogOdds(a, g) for a, g in grid]
    else:
        raise ValueError(f"unknown family {family!r}")
    results = _map_searches(specs, domain, config)
    best = min(range(len(grid)), key=lambda i: (results[i].value, grid[i]))
    names = ("alpha",) if family == "log_odds" else ("alpha", "gamma")
    return dict(zip(names, grid[best])), results[best].value


def default_jobs() -> int:
    try:
        return max(1, int(os.environ.get("ROBUSTAGG_JOBS", "1")))
    except ValueError:
        return 1


def result_row(alpha: float, result: SearchResult) -> list:
    env = result.argmax_env
    return [alpha, result.value] + [getattr(env, n) for n in PARAM_NAMES]


SWEEP_HEADER = ("alpha", "worst_case_regret") + PARAM_NAMES


def describe(spec: AggregatorSpec) -> dict:
    return spec_to_dict(spec)
