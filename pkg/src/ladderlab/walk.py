"""Exact simulation of the reinforced walk and of fixed-weight walks.

The reinforced walk starts every edge at weight ``a``; crossing an edge
raises its weight by one, and steps go to a neighbor with probability
proportional to the current weight of the connecting edge.  The
fixed-weight walk uses the same kernel with frozen weights.

A "return" is any arrival at the left rung pair (either of the two level-0
vertices) at a positive time; consecutive arrivals while bouncing on the
left rung all count.  Return-based experiments stop a replica as soon as
its return target is reached, so they stay cheap even on long ladders.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from ladderlab.ladder import EdgeWeights, LadderError, LadderGraph, build
from ladderlab.rng import RngSpec
from ladderlab.stats import linear_fit, wilson_interval

__all__ = [
    "WalkTrace",
    "errw_run",
    "rwre_run",
    "path_probability_errw",
    "local_time_profile",
    "return_statistics",
    "returns_before_far_end",
    "escape_frequency",
    "profile_experiment",
    "ProfileResult",
    "ReturnStatistics",
]

_BLOCK = 1 << 15


@dataclass(frozen=True)
class WalkTrace:
    """Outcome of one walk run."""

    start: int
    steps: int
    local_times: np.ndarray  # crossings per edge; sums to steps
    position: int
    returns: int  # arrivals at the left rung pair at positive times
    a: float | None  # reinforcement offset, None for fixed-weight runs
    history: np.ndarray | None = field(default=None, repr=False)

    def alpha(self) -> np.ndarray:
        """Normalized local times k_t / t."""
        if self.steps == 0:
            raise LadderError("no steps taken")
        return self.local_times / self.steps

    def weights(self) -> np.ndarray:
        """Edge weights after the run (reinforced runs only)."""
        if self.a is None:
            raise LadderError("fixed-weight runs do not evolve weights")
        return self.a + self.local_times


def _run_loop(graph: LadderGraph, w: list[float], steps: int, start: int,
              gen: np.random.Generator, reinforce: bool, stride: int):
    incident = graph.incident
    k = [0] * graph.num_edges
    pos = start
    returns = 0
    hist = [] if stride > 0 else None
    buf: list[float] = []
    ptr = 0
    for t in range(steps):
        if ptr == len(buf):
            buf = gen.random(_BLOCK).tolist()
            ptr = 0
        u = buf[ptr]
        ptr += 1
        opts = incident[pos]
        tot = 0.0
        for e, _ in opts:
            tot += w[e]
        r = u * tot
        for e, nxt in opts:
            r -= w[e]
            if r < 0.0:
                break
        k[e] += 1
        if reinforce:
            w[e] += 1.0
        pos = nxt
        if pos <= 1:
            returns += 1
        if hist is not None and (t + 1) % stride == 0:
            hist.append(pos)
    history = None if hist is None else np.array(hist, dtype=np.int32)
    return np.array(k, dtype=np.int64), pos, returns, history


def errw_run(graph: LadderGraph, a: float, steps: int, start: int, rng: RngSpec,
             history_stride: int = 0) -> WalkTrace:
    """Run the reinforced walk for ``steps`` steps."""
    if not a > 0:
        raise LadderError(f"initial weight must be positive, got a={a}")
    if not 0 <= start < graph.num_vertices:
        raise LadderError(f"start vertex {start} outside the graph")
    k, pos, returns, history = _run_loop(graph, [float(a)] * graph.num_edges, steps, start,
                                         rng.generator(), True, history_stride)
    return WalkTrace(start=start, steps=steps, local_times=k, position=pos,
                     returns=returns, a=float(a), history=history)


def rwre_run(graph: LadderGraph, x: EdgeWeights, steps: int, start: int, rng: RngSpec,
             history_stride: int = 0) -> WalkTrace:
    """Run the fixed-weight (reversible) walk for ``steps`` steps."""
    if x.n != graph.n:
        raise LadderError(f"weights are for n={x.n}, graph has n={graph.n}")
    if not 0 <= start < graph.num_vertices:
        raise LadderError(f"start vertex {start} outside the graph")
    k, pos, returns, history = _run_loop(graph, x.values.tolist(), steps, start,
                                         rng.generator(), False, history_stride)
    return WalkTrace(start=start, steps=steps, local_times=k, position=pos,
                     returns=returns, a=None, history=history)


def path_probability_errw(graph: LadderGraph, path: Sequence, a) -> Fraction | float:
    """Exact probability that the reinforced walk follows the given vertex
    path; rational arithmetic when ``a`` is rational and the path is short."""
    verts = [v if isinstance(v, (int, np.integer)) else graph.vertex(*v) for v in path]
    if len(verts) < 2:
        return Fraction(1) if isinstance(a, (int, Fraction)) else 1.0
    exact = isinstance(a, (int, Fraction)) and len(verts) <= 33
    one = Fraction(1) if exact else 1.0
    base = Fraction(a) if exact else float(a)
    extra: dict[int, object] = {}
    prob = one
    for u, v in zip(verts[:-1], verts[1:]):
        e_uv = graph.edge_between(u, v)  # raises on non-adjacent steps
        tot = base * 0
        for e, _ in graph.incident[u]:
            tot += base + extra.get(e, 0)
        prob *= (base + extra.get(e_uv, 0)) / tot
        extra[e_uv] = extra.get(e_uv, 0) + 1
    return prob


def local_time_profile(trace: WalkTrace, graph: LadderGraph,
                       representative: str = "rung") -> list[tuple[int, float]]:
    """Per level, the local time of one representative edge relative to the
    left rung.  Levels run 1..n; the left rung itself has ratio 1 at level 0."""
    pick = {
        "rung": graph.rung_index,
        "lower": graph.lower_index,
        "upper": graph.upper_index,
    }.get(representative)
    if pick is None:
        raise LadderError(f"unknown representative edge kind {representative!r}")
    k0 = int(trace.local_times[graph.rung_index(0)])
    if k0 == 0:
        raise LadderError("left rung was never crossed; run longer")
    out = []
    for i in range(1, graph.n + 1):
        out.append((i, float(trace.local_times[pick(i)]) / k0))
    return out


# ---------------------------------------------------------------------------
# return counting before reaching the far end


def _returns_episode(graph: LadderGraph, a: float, levels: list[int], k_cap: int,
                     gen: np.random.Generator, start: int, step_cap: int) -> tuple[list[int], bool]:
    """One reinforced replica on the largest requested ladder.

    Returns, for each requested level, the number of returns seen strictly
    before the walk first reaches that level (capped at ``k_cap``), plus a
    flag marking a replica that exhausted the step cap while still
    undecided (reinforcement can trap the walk mid-ladder for a very long
    stretch); its pending levels keep the returns seen so far, the
    conservative resolution.
    """
    incident = graph.incident
    w = [float(a)] * graph.num_edges
    pos = start
    returns = 0
    pending = sorted(levels)
    counts: dict[int, int] = {}
    buf: list[float] = []
    ptr = 0
    decided = True
    for _ in range(step_cap):
        if returns >= k_cap:
            break
        if ptr == len(buf):
            buf = gen.random(_BLOCK).tolist()
            ptr = 0
        u = buf[ptr]
        ptr += 1
        opts = incident[pos]
        tot = 0.0
        for e, _ in opts:
            tot += w[e]
        r = u * tot
        for e, nxt in opts:
            r -= w[e]
            if r < 0.0:
                break
        w[e] += 1.0
        pos = nxt
        if pos <= 1:
            returns += 1
        level = pos >> 1
        while pending and level >= pending[0]:
            counts[pending[0]] = returns
            pending.pop(0)
        if not pending:
            break
    else:
        decided = False
    for lev in pending:
        counts[lev] = returns
    return [counts[lev] for lev in levels], decided


def returns_before_far_end(levels: Sequence[int], a: float, k_cap: int,
                           rng: RngSpec, replicas: int,
                           step_cap: int = 10_000_000) -> np.ndarray:
    """Return counts before first reaching each level, coupled across levels.

    One trajectory per replica decides every level at once (common random
    numbers), so the empirical fractions are pathwise monotone in the level.
    Shape: (replicas, len(levels)); counts are capped at ``k_cap``.  Use
    :func:`returns_before_far_end_detailed` to also learn how many replicas
    hit the step cap undecided.
    """
    counts, _ = returns_before_far_end_detailed(levels, a, k_cap, rng, replicas, step_cap)
    return counts


def returns_before_far_end_detailed(levels: Sequence[int], a: float, k_cap: int,
                                    rng: RngSpec, replicas: int,
                                    step_cap: int = 10_000_000) -> tuple[np.ndarray, int]:
    """As :func:`returns_before_far_end`, also reporting how many replicas
    hit the step cap undecided."""
    levels = [int(v) for v in levels]
    if min(levels) < 1 or k_cap < 1:
        raise LadderError("levels must be >= 1 and k_cap >= 1")
    graph = build(max(levels))
    start = graph.vertex(0, 2)
    out = np.empty((replicas, len(levels)), dtype=np.int64)
    undecided = 0
    for r in range(replicas):
        gen = RngSpec(rng.seed, rng.stream + r).generator()
        out[r], ok = _returns_episode(graph, a, levels, k_cap, gen, start, step_cap)
        undecided += not ok
    return out, undecided


@dataclass(frozen=True)
class ReturnStatistics:
    n: int
    k: int
    replicas: int
    fraction: float
    ci_low: float
    ci_high: float

    def to_json(self) -> dict:
        return {
            "n": self.n, "k": self.k, "replicas": self.replicas,
            "fraction": self.fraction, "ci": [self.ci_low, self.ci_high],
        }


def return_statistics(graph: LadderGraph, a: float, k: int, rng: RngSpec,
                      replicas: int) -> ReturnStatistics:
    """Fraction of replicas with at least ``k`` returns before the far end."""
    if k == 0:
        return ReturnStatistics(graph.n, 0, replicas, 1.0, 1.0, 1.0)
    counts = returns_before_far_end([graph.n], a, k, rng, replicas)[:, 0]
    hits = int(np.sum(counts >= k))
    lo, hi = wilson_interval(hits, replicas)
    return ReturnStatistics(graph.n, k, replicas, hits / replicas, lo, hi)


def escape_frequency(graph: LadderGraph, x: EdgeWeights, rng: RngSpec, replicas: int,
                     step_cap: int = 10_000_000) -> float:
    """Monte Carlo frequency of reaching the far end before returning to the
    start vertex, for the fixed-weight walk started at the top-left corner."""
    incident = graph.incident
    w = x.values.tolist()
    start = graph.vertex(0, 2)
    far_level = graph.n
    escapes = 0
    for r in range(replicas):
        gen = RngSpec(rng.seed, rng.stream + r).generator()
        buf: list[float] = []
        ptr = 0
        pos = start
        for _ in range(step_cap):
            if ptr == len(buf):
                buf = gen.random(_BLOCK).tolist()
                ptr = 0
            u = buf[ptr]
            ptr += 1
            opts = incident[pos]
            tot = 0.0
            for e, _ in opts:
                tot += w[e]
            rr = u * tot
            for e, nxt in opts:
                rr -= w[e]
                if rr < 0.0:
                    break
            pos = nxt
            if pos == start:
                break
            if (pos >> 1) == far_level:
                escapes += 1
                break
        else:
            raise LadderError(f"episode undecided after {step_cap} steps")
    return escapes / replicas


# ---------------------------------------------------------------------------
# the local-time decay experiment


@dataclass(frozen=True)
class ProfileResult:
    """Level-by-level local-time decay statistics over replicas.

    The envelope rate is an origin-anchored fit through an upper quantile
    of the early-level log ratios; the per-level envelope fraction then
    reads how the share of replicas below that exponential envelope evolves
    along the ladder (it should approach one).
    """

    n: int
    a: float
    steps: int
    replicas: int
    representative: str
    log_ratios: np.ndarray  # (replicas, n); +-inf mark untouched edges
    median_log_ratio: np.ndarray
    slope: float
    intercept: float
    r2: float
    fit_levels: tuple[int, int]
    envelope_rate: float
    envelope_quantile: float
    envelope_fraction: np.ndarray  # per level, fraction with ratio <= exp(-rate*i)

    def to_json(self) -> dict:
        return {
            "n": self.n, "a": self.a, "steps": self.steps, "replicas": self.replicas,
            "representative": self.representative,
            "median_log_ratio": self.median_log_ratio.tolist(),
            "slope": self.slope, "intercept": self.intercept, "r2": self.r2,
            "fit_levels": list(self.fit_levels),
            "envelope_rate": self.envelope_rate,
            "envelope_quantile": self.envelope_quantile,
            "envelope_fraction": self.envelope_fraction.tolist(),
        }


def _profile_replica(args) -> np.ndarray:
    n, a, steps, seed, stream, representative = args
    graph = build(n)
    trace = errw_run(graph, a, steps, graph.vertex(0, 2), RngSpec(seed, stream))
    pick = {"rung": graph.rung_index, "lower": graph.lower_index,
            "upper": graph.upper_index}[representative]
    k0 = int(trace.local_times[graph.rung_index(0)])
    counts = np.array([trace.local_times[pick(i)] for i in range(1, n + 1)], dtype=float)
    if k0 == 0:
        # the replica never crossed the left rung: its ratios are infinite,
        # which is the conservative direction for every decay statistic
        return np.full(n, np.inf)
    return counts / k0


def profile_experiment(n: int, a: float, steps: int, replicas: int, rng: RngSpec,
                       workers: int = 1, representative: str = "rung",
                       fit_levels: tuple[int, int] = (2, 12),
                       envelope_levels: tuple[int, int] = (1, 4),
                       envelope_quantile: float = 0.8) -> ProfileResult:
    """Replicated local-time decay profile of the reinforced walk.

    Fits a line to the per-level median log ratio on ``fit_levels``, and an
    origin-anchored envelope rate through the ``envelope_quantile`` of the
    log ratios on ``envelope_levels``; reports per level the fraction of
    replicas whose ratio sits below the envelope.  Replicas that never
    cross the left rung enter with infinite ratios.
    """
    if representative not in ("rung", "lower", "upper"):
        raise LadderError(f"unknown representative edge kind {representative!r}")
    jobs = [(n, a, steps, rng.seed, rng.stream + r, representative) for r in range(replicas)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_profile_replica, jobs, chunksize=4))
    else:
        rows = [_profile_replica(j) for j in jobs]
    ratios = np.vstack(rows)
    with np.errstate(divide="ignore"):
        log_ratios = np.log(ratios)
    median = np.median(log_ratios, axis=0)
    lo, hi = fit_levels
    hi = min(hi, n)
    levels = np.arange(lo, hi + 1)
    med_fit = median[lo - 1:hi]
    if not np.all(np.isfinite(med_fit)):
        raise LadderError("median log ratio not finite on the fit range; run longer")
    slope, intercept, r2 = linear_fit(levels, med_fit)
    elo, ehi = envelope_levels
    env_levels = np.arange(elo, min(ehi, n) + 1)
    with np.errstate(invalid="ignore"):  # quantile interpolation near inf entries
        env_q = np.quantile(log_ratios[:, env_levels - 1], envelope_quantile, axis=0)
    if not np.all(np.isfinite(env_q)):
        raise LadderError("envelope quantile not finite on the calibration range")
    rate = -float(np.sum(env_levels * env_q) / np.sum(env_levels * env_levels))
    thresholds = -rate * np.arange(1, n + 1)
    fraction = np.mean(log_ratios <= thresholds[None, :] + 1e-12, axis=0)
    return ProfileResult(
        n=n, a=a, steps=steps, replicas=replicas, representative=representative,
        log_ratios=log_ratios, median_log_ratio=median,
        slope=slope, intercept=intercept, r2=r2, fit_levels=(lo, hi),
        envelope_rate=rate, envelope_quantile=envelope_quantile,
        envelope_fraction=fraction,
    )
