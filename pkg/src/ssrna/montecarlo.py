"""Ensemble simulation and empirical estimators of stochastic stability.

The two stability notions being probed are asymptotic (expectations as
t -> infinity, suprema over all t >= 0).  The estimators here are finite-
horizon surrogates: the mean squared deviation from the anchor on the
recorded grid, and the fraction of replicates whose deviation ever exceeded
a radius epsilon1 at any integration step up to the horizon.  Replicates
whose state becomes non-finite are excluded from both statistics and
reported, since silently dropping them would bias the estimates.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from itertools import product
from typing import Optional, Sequence

import numpy as np

from .errors import EnsembleError, ParameterError
from .linearization import linearize
from .model_core import (
    Equilibrium,
    EquilibriumKind,
    ModelParams,
    State,
    basic_reproduction_number,
    origin_equilibrium,
    positive_equilibrium,
    validate_params,
)
from .serialize import fmt
from .simulator import SimConfig, brownian_increments, check_anchor, recorded_steps, step_count
from .stability import NoiseSpec, check_mean_square_stability

__all__ = [
    "EnsembleConfig",
    "EnsembleStats",
    "SweepRow",
    "run_ensemble",
    "estimate_stability_in_probability",
    "wilson_interval",
    "sweep",
    "displaced_initial",
    "anchor_scale",
    "write_ensemble_csv",
    "write_sweep_csv",
    "worker_count",
]

_MAX_SEED = 2**64


@dataclass(frozen=True)
class EnsembleConfig:
    """Replicated-SDE run: how many paths, from where, and what counts as an excursion."""

    replicates: int
    sim: SimConfig
    noise: NoiseSpec
    anchor: Equilibrium
    epsilon1: float
    master_seed: int

    def __post_init__(self):
        if not (isinstance(self.replicates, int) and self.replicates >= 1):
            raise ParameterError(f"replicates must be an integer >= 1, got {self.replicates!r}")
        if not (math.isfinite(self.epsilon1) and self.epsilon1 > 0.0):
            raise ParameterError(f"epsilon1 must be positive, got {self.epsilon1!r}")
        if not (isinstance(self.master_seed, int) and 0 <= self.master_seed < _MAX_SEED):
            raise ParameterError(f"master_seed must be a 64-bit unsigned integer, got {self.master_seed!r}")


@dataclass(frozen=True)
class EnsembleStats:
    """Reduced statistics over the included (finite) replicates."""

    times: np.ndarray
    mean_sq_dev: np.ndarray          # E|x(t)|^2 on the recorded grid
    exceed_fraction_cum: np.ndarray  # fraction whose sup-deviation exceeded epsilon1 by each time
    exceed_fraction: float
    n_replicates: int
    n_included: int
    n_exceed: int
    n_negative: int
    n_nonfinite: int


def worker_count() -> int:
    """Worker cap from SSRNA_THREADS (default 1); never changes output bytes."""
    raw = os.environ.get("SSRNA_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ParameterError(f"SSRNA_THREADS must be an integer, got {raw!r}") from None
    return max(1, n)


def _simulate_block(
    first: int,
    count: int,
    params: ModelParams,
    cfg: EnsembleConfig,
    n_steps: int,
    rec: Sequence[int],
):
    """Integrate replicates [first, first+count) as one vectorized block.

    Per-element arithmetic matches simulator.integrate_sde bit for bit, so
    results do not depend on how replicates are grouped into blocks.
    """
    rep = linearize(params, cfg.anchor)
    a11, a12, a21, a22 = rep.a11, rep.a12, rep.a21, rep.a22
    br = params.b * params.r
    abr = params.alpha * br
    w1, w2 = cfg.noise.omega1, cfg.noise.omega2
    ps, ms = cfg.anchor.p_star, cfg.anchor.m_star
    dt = cfg.sim.dt
    eps_sq = cfg.epsilon1 * cfg.epsilon1

    dW1 = np.empty((count, n_steps))
    dW2 = np.empty((count, n_steps))
    for j in range(count):
        dW1[j] = brownian_increments(cfg.master_seed, first + j, 0, n_steps, dt)
        dW2[j] = brownian_increments(cfg.master_seed, first + j, 1, n_steps, dt)

    x1 = np.full(count, float(cfg.sim.initial[0]) - ps)
    x2 = np.full(count, float(cfg.sim.initial[1]) - ms)
    alive = np.ones(count, dtype=bool)
    negative = np.zeros(count, dtype=bool)
    first_exceed = np.full(count, -1, dtype=np.int64)
    sq_rows = np.empty((count, len(rec)))

    rec_iter = iter(rec)
    next_rec = next(rec_iter)
    col = 0

    def observe(step: int, dsq: np.ndarray) -> None:
        nonlocal next_rec, col
        hit = alive & (first_exceed < 0) & (dsq > eps_sq)
        first_exceed[hit] = step
        negative[:] |= alive & ((ps + x1 < 0.0) | (ms + x2 < 0.0))
        if next_rec == step:
            sq_rows[:, col] = dsq
            col += 1
            next_rec = next(rec_iter, None)

    # diverging replicates overflow to inf/nan before being frozen; that is
    # the detection mechanism, not an error
    with np.errstate(over="ignore", invalid="ignore"):
        observe(0, x1 * x1 + x2 * x2)
        for i in range(n_steps):
            g1 = a11 * x1 + a12 * x2 - br * (x1 + x2) * x2
            g2 = a21 * x1 + a22 * x2 - abr * (x1 + x2) * x1
            x1 = x1 + g1 * dt + w1 * x1 * dW1[:, i]
            x2 = x2 + g2 * dt + w2 * x2 * dW2[:, i]
            finite = np.isfinite(x1) & np.isfinite(x2)
            if not finite.all():
                died = alive & ~finite
                alive &= finite
                x1[died] = 0.0  # freeze: keeps NaNs out of later vector ops
                x2[died] = 0.0
            observe(i + 1, x1 * x1 + x2 * x2)

    return sq_rows, first_exceed, negative, ~alive


def run_ensemble(cfg: EnsembleConfig, params: ModelParams) -> EnsembleStats:
    """Integrate cfg.replicates independent noise-perturbed paths and reduce.

    Statistics are deterministic given (cfg, master_seed): replicate k's
    Wiener increments come from the stream keyed (master_seed, k, coordinate)
    regardless of worker count, and the reduction sums replicates in index
    order after collection.
    """
    check_anchor(params, cfg.anchor)
    n_steps = step_count(cfg.sim)
    rec = recorded_steps(n_steps, cfg.sim.record_stride)
    n = cfg.replicates

    workers = min(worker_count(), n)
    blocks = []
    if workers == 1:
        blocks.append((0, n))
    else:
        size = (n + workers - 1) // workers
        start = 0
        while start < n:
            blocks.append((start, min(size, n - start)))
            start += size

    if len(blocks) == 1:
        results = [_simulate_block(blocks[0][0], blocks[0][1], params, cfg, n_steps, rec)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(
                pool.map(lambda blk: _simulate_block(blk[0], blk[1], params, cfg, n_steps, rec), blocks)
            )

    sq_rows = np.concatenate([res[0] for res in results], axis=0)
    first_exceed = np.concatenate([res[1] for res in results])
    negative = np.concatenate([res[2] for res in results])
    nonfinite = np.concatenate([res[3] for res in results])

    included = ~nonfinite
    n_included = int(included.sum())
    if n_included == 0:
        raise EnsembleError("all replicates became non-finite; no statistics available")

    # replicate-index-order accumulation keeps the reduction bitwise stable
    msd = np.zeros(len(rec))
    for k in range(n):
        if included[k]:
            msd += sq_rows[k]
    msd /= n_included

    rec_arr = np.asarray(rec, dtype=np.int64)
    fe = first_exceed[included]
    exceeded = fe >= 0
    cum = np.empty(len(rec))
    for j, step in enumerate(rec_arr):
        cum[j] = np.count_nonzero(exceeded & (fe <= step)) / n_included

    times = rec_arr * cfg.sim.dt
    n_exceed = int(np.count_nonzero(exceeded))
    return EnsembleStats(
        times=times,
        mean_sq_dev=msd,
        exceed_fraction_cum=cum,
        exceed_fraction=n_exceed / n_included,
        n_replicates=n,
        n_included=n_included,
        n_exceed=n_exceed,
        n_negative=int(np.count_nonzero(negative & included)),
        n_nonfinite=int(np.count_nonzero(nonfinite)),
    )


def wilson_interval(successes: int, n: int, z: float = 1.96) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if n <= 0:
        raise ParameterError("Wilson interval needs at least one trial")
    p_hat = successes / n
    z2 = z * z
    denom = 1.0 + z2 / n
    centre = (p_hat + z2 / (2.0 * n)) / denom
    half = (z / denom) * math.sqrt(p_hat * (1.0 - p_hat) / n + z2 / (4.0 * n * n))
    return max(0.0, centre - half), min(1.0, centre + half)


def estimate_stability_in_probability(stats: EnsembleStats) -> tuple[float, tuple[float, float]]:
    """Point estimate and Wilson 95% interval for P{sup |x(t)| > epsilon1}.

    Requires at least 30 included replicates; below that the interval is
    too unreliable to report.
    """
    if stats.n_included < 30:
        raise ParameterError(
            f"need at least 30 included replicates for an interval estimate, have {stats.n_included}"
        )
    return stats.exceed_fraction, wilson_interval(stats.n_exceed, stats.n_included)


def anchor_scale(anchor: Equilibrium, K: float) -> float:
    """Magnitude used for relative displacements and radii at an anchor."""
    scale = math.hypot(anchor.p_star, anchor.m_star)
    return scale if scale > 0.0 else K


def displaced_initial(anchor: Equilibrium, fraction: float, K: float) -> State:
    """Initial state at distance fraction*scale from the anchor.

    Nonzero anchors are displaced radially (each coordinate scaled by
    1 + fraction); from the origin the offset goes up the diagonal.
    """
    if anchor.p_star == 0.0 and anchor.m_star == 0.0:
        d = fraction * K / math.sqrt(2.0)
        return State(d, d)
    return State((1.0 + fraction) * anchor.p_star, (1.0 + fraction) * anchor.m_star)


@dataclass(frozen=True)
class SweepRow:
    """One (parameter, noise) cell of a sweep."""

    r: float
    alpha: float
    delta: float
    sigma: float
    K: float
    omega1: float
    omega2: float
    r0: float
    verdict: str                     # "true" | "false" | "nonexistent" | "error"
    exceed_fraction: float
    final_msd: float
    n_negative: int
    n_nonfinite: int
    error: Optional[str] = None


_MODEL_FIELDS = ("r", "alpha", "delta", "sigma", "K")
_NOISE_FIELDS = ("omega1", "omega2")


def _resolve_anchor(params: ModelParams, kind: EquilibriumKind) -> Equilibrium:
    if kind is EquilibriumKind.ORIGIN:
        return origin_equilibrium()
    if kind is EquilibriumKind.POSITIVE:
        eq = positive_equilibrium(params)
        if not eq.exists:
            raise ParameterError("coexistence anchor does not exist for these parameters (R0 <= 1)")
        return eq
    raise ParameterError(f"unsupported anchor kind {kind!r}")


def sweep(
    base_params: ModelParams,
    model_grid: dict[str, Sequence[float]],
    noise_grid: dict[str, Sequence[float]],
    template: EnsembleConfig,
    anchor_kind: EquilibriumKind = EquilibriumKind.POSITIVE,
    displace_fraction: Optional[float] = None,
    epsilon1_fraction: Optional[float] = None,
) -> list[SweepRow]:
    """One ensemble per (model, noise) grid cell, plus the analytic verdict.

    Grids map field names to value lists; absent fields keep their base
    values and the cartesian product is taken in field order.  Every cell
    reuses the template's master_seed, dt and horizon, so compared cells see
    identical Wiener increments (common random numbers).  When given,
    displace_fraction and epsilon1_fraction re-derive each cell's initial
    state and exceedance radius from that cell's anchor; otherwise the
    template's absolute values apply everywhere.  A failed cell produces a
    row with verdict "error" (or "nonexistent") and NaN statistics instead
    of aborting the sweep.
    """
    for grid, fields in ((model_grid, _MODEL_FIELDS), (noise_grid, _NOISE_FIELDS)):
        for key in grid:
            if key not in fields:
                raise ParameterError(f"unknown grid field {key!r} (expected one of {fields})")

    model_axes = [(name, list(model_grid[name])) for name in _MODEL_FIELDS if name in model_grid]
    noise_axes = [(name, list(noise_grid[name])) for name in _NOISE_FIELDS if name in noise_grid]
    model_combos = list(product(*(vals for _, vals in model_axes))) if model_axes else [()]
    noise_combos = list(product(*(vals for _, vals in noise_axes))) if noise_axes else [()]

    rows: list[SweepRow] = []
    for mvals in model_combos:
        model_kwargs = {
            "r": base_params.r,
            "alpha": base_params.alpha,
            "delta": base_params.delta,
            "sigma": base_params.sigma,
            "K": base_params.K,
        }
        model_kwargs.update({name: v for (name, _), v in zip(model_axes, mvals)})
        for nvals in noise_combos:
            noise_kwargs = {"omega1": template.noise.omega1, "omega2": template.noise.omega2}
            noise_kwargs.update({name: v for (name, _), v in zip(noise_axes, nvals)})
            rows.append(
                _sweep_cell(
                    model_kwargs,
                    noise_kwargs,
                    template,
                    anchor_kind,
                    displace_fraction,
                    epsilon1_fraction,
                )
            )
    return rows


def _sweep_cell(
    model_kwargs: dict[str, float],
    noise_kwargs: dict[str, float],
    template: EnsembleConfig,
    anchor_kind: EquilibriumKind,
    displace_fraction: Optional[float],
    epsilon1_fraction: Optional[float],
) -> SweepRow:
    nan = math.nan
    base = dict(model_kwargs, **noise_kwargs, r0=nan, verdict="error",
                exceed_fraction=nan, final_msd=nan, n_negative=0, n_nonfinite=0)
    try:
        params = validate_params(**model_kwargs)
        noise = NoiseSpec(**noise_kwargs)
        base["r0"] = basic_reproduction_number(params)
    except Exception as exc:  # invalid cell: recorded, not raised
        return SweepRow(**base, error=str(exc))
    try:
        anchor = _resolve_anchor(params, anchor_kind)
    except ParameterError as exc:
        base["verdict"] = "nonexistent"
        return SweepRow(**base, error=str(exc))
    try:
        verdict = check_mean_square_stability(linearize(params, anchor), noise)
        base["verdict"] = "true" if verdict.conditions_met else "false"
        scale = anchor_scale(anchor, params.K)
        sim = template.sim
        if displace_fraction is not None:
            sim = SimConfig(
                dt=sim.dt,
                t_end=sim.t_end,
                initial=displaced_initial(anchor, displace_fraction, params.K),
                seed=sim.seed,
                record_stride=sim.record_stride,
            )
        epsilon1 = template.epsilon1 if epsilon1_fraction is None else epsilon1_fraction * scale
        cfg = EnsembleConfig(
            replicates=template.replicates,
            sim=sim,
            noise=noise,
            anchor=anchor,
            epsilon1=epsilon1,
            master_seed=template.master_seed,
        )
        stats = run_ensemble(cfg, params)
        base["exceed_fraction"] = stats.exceed_fraction
        base["final_msd"] = float(stats.mean_sq_dev[-1])
        base["n_negative"] = stats.n_negative
        base["n_nonfinite"] = stats.n_nonfinite
        return SweepRow(**base)
    except Exception as exc:
        base["verdict"] = "error"
        return SweepRow(**base, error=str(exc))


def write_ensemble_csv(stats: EnsembleStats, path) -> None:
    """Write `t,mean_sq_dev,exceed_fraction_cum` rows at 17 significant digits."""
    with open(path, "w", newline="") as fh:
        fh.write("t,mean_sq_dev,exceed_fraction_cum\n")
        for t, msd, cum in zip(stats.times, stats.mean_sq_dev, stats.exceed_fraction_cum):
            fh.write(f"{fmt(float(t))},{fmt(float(msd))},{fmt(float(cum))}\n")


SWEEP_COLUMNS = (
    "r", "alpha", "delta", "sigma", "K", "omega1", "omega2", "R0",
    "verdict", "exceed_fraction", "final_msd", "n_negative", "n_nonfinite",
)


def write_sweep_csv(rows: Sequence[SweepRow], path) -> None:
    """Write one named-column row per sweep cell at 17 significant digits."""
    with open(path, "w", newline="") as fh:
        fh.write(",".join(SWEEP_COLUMNS) + "\n")
        for row in rows:
            fh.write(
                ",".join(
                    [
                        fmt(row.r), fmt(row.alpha), fmt(row.delta), fmt(row.sigma), fmt(row.K),
                        fmt(row.omega1), fmt(row.omega2), fmt(row.r0),
                        row.verdict,
                        fmt(row.exceed_fraction), fmt(row.final_msd),
                        str(row.n_negative), str(row.n_nonfinite),
                    ]
                )
                + "\n"
            )
