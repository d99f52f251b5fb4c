"""Metropolis sampler for the spin-chain measure and its deformations.

Single-site sweeps: random-walk proposals on every continuous field, plain
sign flips, and tree-state redraws restricted to the locally admissible
letters (so a forbidden adjacent ``AB`` is never proposed).  Local energy
pieces are cached and updated on acceptance, which keeps a sweep at O(n)
energy evaluations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ladderlab.environment import (
    INF,
    INT_TO_T,
    SpinConfig,
    T_TO_INT,
    left_energy,
    middle_energy,
    psi_forward,
    right_energy,
)
from ladderlab.ladder import EdgeWeights, LadderError
from ladderlab.rng import RngSpec
from ladderlab.stats import batch_means_error, effective_sample_size, linear_fit

__all__ = [
    "McmcConfig",
    "SampleBatch",
    "TailCurve",
    "sample_chain",
    "tail_estimate",
    "sign_disagreement_rate",
    "environment_from_spin",
    "observable",
    "OBSERVABLES",
]

_CLASSES = ("z0", "x", "z", "gamma", "zn", "sigma", "tree")


@dataclass(frozen=True)
class McmcConfig:
    """Sampler configuration targeting the chain with ``deform_j`` relaxed
    couplings (0 keeps the physical quarter coupling everywhere)."""

    n: int
    a: float
    deform_j: int = 0
    scales: dict = field(default_factory=lambda: {"z0": 1.0, "x": 1.0, "z": 1.0, "gamma": 1.0, "zn": 1.0})
    burn_in: int = 2000
    thinning: int = 2
    samples: int = 10_000
    rng: RngSpec = RngSpec(0)
    tune: bool = True
    init: SpinConfig | None = None
    debug_log_moves: int = 0

    def __post_init__(self):
        if self.n < 1:
            raise LadderError("need n >= 1")
        if not 0 <= self.deform_j <= self.n - 1:
            raise LadderError(f"deform_j={self.deform_j} outside 0..{self.n - 1}")
        if self.burn_in < 0 or self.thinning < 1 or self.samples < 1:
            raise LadderError("burn_in >= 0, thinning >= 1, samples >= 1 required")
        if any(s <= 0 for s in self.scales.values()):
            raise LadderError("proposal scales must be positive")
        if not self.a > 0:
            raise LadderError("initial weight a must be positive")


@dataclass
class SampleBatch:
    """Retained samples in column form plus sampler diagnostics."""

    config: McmcConfig
    z0: np.ndarray
    xlo: np.ndarray
    xhi: np.ndarray
    sigma: np.ndarray
    t: np.ndarray  # int8 letters, 0..3 for A..D
    z: np.ndarray
    gamma: np.ndarray
    zn: np.ndarray
    acceptance: dict
    ess: dict
    tuned_scales: dict
    warnings: list = field(default_factory=list)
    proposal_log: list = field(default_factory=list)

    @property
    def size(self) -> int:
        return self.z0.size

    def spin(self, k: int) -> SpinConfig:
        return SpinConfig(
            z0=float(self.z0[k]),
            xlo=self.xlo[k].copy(),
            xhi=self.xhi[k].copy(),
            sigma=self.sigma[k].copy(),
            t="".join(INT_TO_T[v] for v in self.t[k]),
            z=self.z[k].copy(),
            gamma=self.gamma[k].copy(),
            zn=float(self.zn[k]),
        )

    def admissible(self) -> bool:
        if self.config.n == 1:
            return True
        bad = (self.t[:, :-1] == 0) & (self.t[:, 1:] == 1)
        return not bool(bad.any())


class _Chain:
    """Mutable sampler state with cached local energies."""

    def __init__(self, cfg: McmcConfig):
        self.cfg = cfg
        n = cfg.n
        if cfg.init is not None:
            om = cfg.init
            if om.n != n or not om.admissible():
                raise LadderError("init configuration incompatible with the sampler")
            self.z0 = float(om.z0)
            self.xlo = [float(v) for v in om.xlo]
            self.xhi = [float(v) for v in om.xhi]
            self.sig = [int(v) for v in om.sigma]
            self.t = [T_TO_INT[c] for c in om.t]
            self.z = [float(v) for v in om.z]
            self.ga = [float(v) for v in om.gamma]
            self.zn = float(om.zn)
        else:
            self.z0 = 0.0
            self.xlo = [0.0] * n
            self.xhi = [0.0] * n
            self.sig = [1] * n
            self.t = [2] * n  # all C
            self.z = [0.0] * (n - 1)
            self.ga = [0.0] * (n - 1)
            self.zn = 0.0
        self.eta = [0.0 if i < cfg.deform_j else 0.25 for i in range(n - 1)]
        self.e_left = left_energy(self.z0, self.xlo[0], self.xhi[0], self.t[0], cfg.a)
        self.e_mid = [self._mid(i) for i in range(n - 1)]
        self.e_right = right_energy(self.xlo[n - 1], self.xhi[n - 1], self.t[n - 1], self.zn, cfg.a)

    def _mid(self, i: int) -> float:
        return middle_energy(
            self.xlo[i], self.xhi[i], self.sig[i], self.t[i],
            self.z[i], self.ga[i],
            self.xlo[i + 1], self.xhi[i + 1], self.sig[i + 1], self.t[i + 1],
            self.cfg.a, self.eta[i],
        )

    def total_energy(self) -> float:
        return self.e_left + sum(self.e_mid) + self.e_right

    def spin(self) -> SpinConfig:
        return SpinConfig(
            z0=self.z0, xlo=np.array(self.xlo), xhi=np.array(self.xhi),
            sigma=np.array(self.sig), t="".join(INT_TO_T[v] for v in self.t),
            z=np.array(self.z), gamma=np.array(self.ga), zn=self.zn,
        )

    def cell_pieces(self, i: int) -> list[int]:
        """Indices of the couplings touched by cell i (0-based): i-1 and i."""
        out = []
        if i > 0:
            out.append(i - 1)
        if i < self.cfg.n - 1:
            out.append(i)
        return out


def _admissible_letters(chain: _Chain, i: int) -> list[int]:
    n = chain.cfg.n
    letters = [0, 1, 2, 3]
    if i + 1 < n and chain.t[i + 1] == 1:
        letters.remove(0)  # A before B is forbidden
    if i > 0 and chain.t[i - 1] == 0:
        letters.remove(1)  # B after A is forbidden
    return letters


def sample_chain(cfg: McmcConfig) -> SampleBatch:
    """Run the sampler and return the retained samples."""
    n = cfg.n
    a = cfg.a
    gen = cfg.rng.generator()
    chain = _Chain(cfg)
    scales = dict(cfg.scales)
    accept = {c: 0 for c in _CLASSES}
    propose = {c: 0 for c in _CLASSES}
    log_budget = [cfg.debug_log_moves]
    proposal_log: list[dict] = []

    m = cfg.samples
    out_z0 = np.empty(m)
    out_zn = np.empty(m)
    out_xlo = np.empty((m, n))
    out_xhi = np.empty((m, n))
    out_sig = np.empty((m, n), dtype=np.int8)
    out_t = np.empty((m, n), dtype=np.int8)
    out_z = np.empty((m, n - 1))
    out_ga = np.empty((m, n - 1))

    def decide(kind: str, delta: float, u: float, before, proposed) -> bool:
        propose[kind] += 1
        ok = delta <= 0.0 or (delta < INF and u < math.exp(-delta))
        if ok:
            accept[kind] += 1
        if before is not None:
            log_budget[0] -= 1
            proposal_log.append({
                "kind": kind, "delta_h": delta, "accepted": ok,
                "before": before, "proposed": proposed,
            })
        return ok

    def sweep(dbg: bool = False):
        normals = gen.standard_normal(4 * n).tolist()
        unis = gen.random(7 * n).tolist()
        ni = ui = 0

        def next_n():
            nonlocal ni
            v = normals[ni]
            ni += 1
            return v

        def next_u():
            nonlocal ui
            v = unis[ui]
            ui += 1
            return v

        def snap():
            return chain.spin() if dbg and log_budget[0] > 0 else None

        # left boundary field
        before = snap()
        old = chain.z0
        chain.z0 = old + scales["z0"] * next_n()
        e_new = left_energy(chain.z0, chain.xlo[0], chain.xhi[0], chain.t[0], a)
        if decide("z0", e_new - chain.e_left, next_u(), before, snap()):
            chain.e_left = e_new
        else:
            chain.z0 = old

        for i in range(n):
            pieces = chain.cell_pieces(i)

            def cell_move(kind: str, before, revert):
                """Accept or revert the already-applied modification of cell i."""
                e_l = (left_energy(chain.z0, chain.xlo[0], chain.xhi[0], chain.t[0], a)
                       if i == 0 else None)
                e_r = (right_energy(chain.xlo[n - 1], chain.xhi[n - 1], chain.t[n - 1], chain.zn, a)
                       if i == n - 1 else None)
                e_m = [chain._mid(p) for p in pieces]
                delta = sum(e_m) - sum(chain.e_mid[p] for p in pieces)
                if e_l is not None:
                    delta += e_l - chain.e_left
                if e_r is not None:
                    delta += e_r - chain.e_right
                if decide(kind, delta, next_u(), before, snap()):
                    for p, e in zip(pieces, e_m):
                        chain.e_mid[p] = e
                    if e_l is not None:
                        chain.e_left = e_l
                    if e_r is not None:
                        chain.e_right = e_r
                else:
                    revert()

            for attr in (chain.xlo, chain.xhi):
                before = snap()
                old = attr[i]
                attr[i] = old + scales["x"] * next_n()
                cell_move("x", before, lambda attr=attr, i=i, old=old: attr.__setitem__(i, old))

            # sign flip: only the adjacent couplings move; for a single cell
            # the measure is symmetric in the sign, so flip a fair coin
            if n > 1:
                before = snap()
                chain.sig[i] = -chain.sig[i]
                cell_move("sigma", before, lambda i=i: chain.sig.__setitem__(i, -chain.sig[i]))
            else:
                propose["sigma"] += 1
                accept["sigma"] += 1
                if next_u() < 0.5:
                    chain.sig[i] = -chain.sig[i]

            # tree letter: uniform over the locally admissible states; the
            # admissible set does not depend on the current letter, so the
            # proposal is symmetric
            letters = _admissible_letters(chain, i)
            old_t = chain.t[i]
            new_t = letters[int(next_u() * len(letters)) % len(letters)]
            if new_t != old_t:
                before = snap()
                chain.t[i] = new_t
                cell_move("tree", before, lambda i=i, old_t=old_t: chain.t.__setitem__(i, old_t))
            else:
                propose["tree"] += 1
                accept["tree"] += 1
                next_u()

        # inner rung fields
        for i in range(n - 1):
            for attr, kind in ((chain.z, "z"), (chain.ga, "gamma")):
                before = snap()
                old = attr[i]
                attr[i] = old + scales[kind] * next_n()
                e_new = chain._mid(i)
                if decide(kind, e_new - chain.e_mid[i], next_u(), before, snap()):
                    chain.e_mid[i] = e_new
                else:
                    attr[i] = old

        # right boundary field
        before = snap()
        old = chain.zn
        chain.zn = old + scales["zn"] * next_n()
        e_new = right_energy(chain.xlo[n - 1], chain.xhi[n - 1], chain.t[n - 1], chain.zn, a)
        if decide("zn", e_new - chain.e_right, next_u(), before, snap()):
            chain.e_right = e_new
        else:
            chain.zn = old

    # burn-in with optional scale tuning toward 0.4 acceptance
    window = 50
    for b in range(cfg.burn_in):
        sweep()
        if cfg.tune and (b + 1) % window == 0:
            for c in ("z0", "x", "z", "gamma", "zn"):
                if propose[c]:
                    rate = accept[c] / propose[c]
                    scales[c] = float(np.clip(scales[c] * math.exp(0.6 * (rate - 0.4)), 0.02, 50.0))
                accept[c] = propose[c] = 0
    for c in _CLASSES:
        accept[c] = propose[c] = 0

    for k in range(m):
        for _ in range(cfg.thinning):
            sweep(dbg=log_budget[0] > 0)
        out_z0[k] = chain.z0
        out_zn[k] = chain.zn
        out_xlo[k] = chain.xlo
        out_xhi[k] = chain.xhi
        out_sig[k] = chain.sig
        out_t[k] = chain.t
        out_z[k] = chain.z
        out_ga[k] = chain.ga

    rates = {c: (accept[c] / propose[c] if propose[c] else math.nan) for c in _CLASSES}
    warnings = [
        f"acceptance rate {rates[c]:.3f} for {c} outside [0.1, 0.9]"
        for c in _CLASSES
        if not math.isnan(rates[c]) and not 0.1 <= rates[c] <= 0.9
    ]
    ess = {
        "Z0": effective_sample_size(out_z0),
        "Xlo_1": effective_sample_size(out_xlo[:, 0]),
    }
    if n > 1:
        ess["Gamma_1"] = effective_sample_size(out_ga[:, 0])
    batch = SampleBatch(
        config=cfg,
        z0=out_z0, xlo=out_xlo, xhi=out_xhi, sigma=out_sig, t=out_t,
        z=out_z, gamma=out_ga, zn=out_zn,
        acceptance=rates,
        ess=ess,
        tuned_scales=scales,
        warnings=warnings,
        proposal_log=proposal_log,
    )
    if not batch.admissible():
        raise LadderError("sampler produced a forbidden configuration")  # pragma: no cover
    return batch


# ---------------------------------------------------------------------------
# observables and estimators


OBSERVABLES = ("Z0", "Zn", "Xlo", "Xhi", "Z", "Gamma", "log_y_ratio", "log_z_over_y2")


def observable(batch: SampleBatch, name: str, i: int | None = None) -> np.ndarray:
    """Column of a named observable; ``i`` is the 1-based cell or rung index.

    ``log_y_ratio`` is the log modulus ratio of consecutive auxiliary
    variables; ``log_z_over_y2`` the log of a rung weight relative to the
    squared auxiliary variable at its left cell.  Both are linear in the
    stored fields.
    """
    if name == "Z0":
        return batch.z0
    if name == "Zn":
        return batch.zn
    if name in ("Xlo", "Xhi"):
        arr = batch.xlo if name == "Xlo" else batch.xhi
        return arr[:, i - 1]
    if name in ("Z", "Gamma"):
        arr = batch.z if name == "Z" else batch.gamma
        return arr[:, i - 1]
    u = 0.5 * (batch.xlo + batch.xhi)
    w_i = batch.gamma[:, i - 1] + u[:, i] - u[:, i - 1]
    if name == "log_y_ratio":
        return -0.5 * w_i
    if name == "log_z_over_y2":
        return batch.z[:, i - 1] - 0.5 * w_i
    raise LadderError(f"unknown observable {name!r}")


@dataclass(frozen=True)
class TailCurve:
    """Empirical tail of |observable| on a threshold grid."""

    thresholds: np.ndarray
    counts: np.ndarray
    log_freq: np.ndarray  # nan where censored
    err: np.ndarray  # binomial standard error of the log frequency
    slope: float | None
    intercept: float | None
    censored: list
    degenerate: bool

    def to_json(self) -> dict:
        return {
            "thresholds": self.thresholds.tolist(),
            "counts": self.counts.tolist(),
            "log_freq": self.log_freq.tolist(),
            "err": self.err.tolist(),
            "slope": self.slope,
            "intercept": self.intercept,
            "censored": self.censored,
            "degenerate": self.degenerate,
        }


def tail_estimate(batch: SampleBatch, name: str, thresholds: Sequence[float],
                  i: int | None = None) -> TailCurve:
    """Tail curve of |observable| with a least-squares slope over the
    uncensored buckets.  Empty buckets are reported censored, not zero."""
    if batch.size == 0:
        raise LadderError("empty batch")
    vals = np.abs(observable(batch, name, i))
    thresholds = np.asarray(sorted(thresholds), dtype=float)
    m = batch.size
    counts = np.array([(vals >= t).sum() for t in thresholds], dtype=np.int64)
    freq = counts / m
    log_freq = np.where(counts > 0, np.log(np.maximum(freq, 1e-300)), np.nan)
    err = np.where(counts > 0, np.sqrt(np.maximum(1 - freq, 0.0) / np.maximum(counts, 1)), np.nan)
    censored = [float(t) for t, c in zip(thresholds, counts) if c == 0]
    degenerate = bool(np.ptp(vals) == 0.0)
    keep = counts > 0
    slope = intercept = None
    if not degenerate and keep.sum() >= 2 and np.ptp(thresholds[keep]) > 0:
        slope, intercept, _ = linear_fit(thresholds[keep], log_freq[keep])
    return TailCurve(
        thresholds=thresholds, counts=counts, log_freq=log_freq, err=err,
        slope=slope, intercept=intercept, censored=censored, degenerate=degenerate,
    )


def sign_disagreement_rate(batch: SampleBatch, i: int) -> dict:
    """Sign disagreement rate across rung ``i`` plus the residual of the
    exact flip identity: the rate equals the mean of a double-exponential
    weight on sign agreement."""
    n = batch.config.n
    if not 1 <= i <= n - 1:
        raise LadderError(f"rung index {i} outside 1..{n - 1}")
    dis = (batch.sigma[:, i - 1] != batch.sigma[:, i]).astype(float)
    agree = 1.0 - dis
    weight = np.exp(-2.0 * np.exp(-batch.z[:, i - 1]))
    resid_obs = dis - weight * agree
    return {
        "rate": float(dis.mean()),
        "identity_residual": float(resid_obs.mean()),
        "residual_err": batch_means_error(resid_obs),
        "rate_err": batch_means_error(dis),
    }


def environment_from_spin(omega: SpinConfig) -> EdgeWeights:
    """Edge weights induced by one spin configuration (left rung pinned 1)."""
    return psi_forward(omega).x
