"""Regenerative loss-probability estimation.

The original-measure chain is cut into cycles at its returns to the
recurrent set.  At every return one importance-sampling cycle is launched
from the same state and discarded after recording ``N_A * L``; the chain
itself supplies the cycle lengths, so

    P(loss) = E[N_A] / (lam s E[tau_A]).

Cycles are grouped into batches by splitting the chain's simulated
timeline into equal segments, and each batch yields one ratio estimate.
"""
from __future__ import annotations

import math
import time
from bisect import insort
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import stats

from .dist import sample_interarrival
from .ldcalc import RateContext, TiltTable, build_tilt_table
from .queue import Band, SystemState, initial_state
from .rng import Stream
from .sampler import (
    DEFAULT_EPS_TRUNC,
    DEFAULT_EVENT_BUDGET,
    DEFAULT_K_CAP,
    Model,
    run_chain_cycle,
    run_is_cycle,
)

__all__ = [
    "BandSettings",
    "RunConfig",
    "LossEstimate",
    "batch_stats",
    "make_band",
    "make_table",
    "run_regenerative_is",
    "run_crude",
]


@dataclass(frozen=True)
class BandSettings:
    variant: str = "truncated"
    c_star: Optional[float] = None
    c1: float = 1.1
    eta: Optional[float] = None
    gamma: float = 1.0


@dataclass
class RunConfig:
    model: Model
    band: BandSettings = field(default_factory=BandSettings)
    delta: Optional[float] = None
    c: float = 1.0
    T: Optional[float] = None
    batches: int = 20
    cpu_seconds: Optional[float] = None
    sim_time: Optional[float] = None
    cycles: Optional[int] = None
    seed: int = 0
    event_budget: int = DEFAULT_EVENT_BUDGET
    eps_trunc: float = DEFAULT_EPS_TRUNC
    k_cap: int = DEFAULT_K_CAP

    def __post_init__(self):
        if self.batches < 2:
            raise ValueError("at least two batches are needed")
        rules = [r for r in (self.cpu_seconds, self.sim_time, self.cycles) if r is not None]
        if len(rules) != 1:
            raise ValueError("set exactly one of cpu_seconds, sim_time, cycles")
        if rules[0] <= 0:
            raise ValueError("the stopping budget must be positive")
        if self.delta is not None and self.delta <= 0:
            raise ValueError("delta must be positive")

    @property
    def check_step(self) -> float:
        """Spacing of the return-time grid; one fifth of the mean service time by default."""
        return self.model.service.mean / 5.0 if self.delta is None else self.delta


@dataclass
class LossEstimate:
    method: str
    s: int
    estimate: float
    re: Optional[float]
    ci: Optional[tuple[float, float]]
    batch_values: list[float]
    cycles: int
    losses: int
    arrivals: int
    cpu_seconds: float
    sim_time: float
    extra: dict = field(default_factory=dict)

    @property
    def ci_low(self) -> Optional[float]:
        return None if self.ci is None else self.ci[0]

    @property
    def ci_high(self) -> Optional[float]:
        return None if self.ci is None else self.ci[1]


def batch_stats(values, B: Optional[int] = None) -> tuple[float, Optional[float], Optional[tuple[float, float]]]:
    """Batch-means mean, relative spread ``sd/mean`` and 95% Student-t interval."""
    x = np.asarray(values, dtype=float)
    if B is not None and x.size != B:
        raise ValueError(f"expected {B} batch values, got {x.size}")
    if x.size < 2:
        raise ValueError("batch statistics need at least two batches")
    mean = float(x.mean())
    sd = float(x.std(ddof=1))
    if mean == 0.0:
        return mean, None, None
    half = float(stats.t.ppf(0.975, x.size - 1)) * sd / math.sqrt(x.size)
    return mean, sd / mean, (mean - half, mean + half)


def make_band(cfg: RunConfig) -> Band:
    b = cfg.band
    m = cfg.model
    return Band(m.arrival, m.service, m.s, b.variant, c_star=b.c_star, c1=b.c1, eta=b.eta, gamma=b.gamma)


def make_table(cfg: RunConfig) -> TiltTable:
    ctx = RateContext(cfg.model.arrival, cfg.model.service)
    return build_tilt_table(ctx, cfg.model.s, c=cfg.c, T=cfg.T)


class _Stopper:
    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.t0 = time.process_time()

    def elapsed(self) -> float:
        return time.process_time() - self.t0

    def done(self, cycles: int, sim: float) -> bool:
        c = self.cfg
        if c.cycles is not None:
            return cycles >= c.cycles
        if c.sim_time is not None:
            return sim >= c.sim_time
        return self.elapsed() >= c.cpu_seconds


def _batch_index(starts: np.ndarray, total: float, B: int) -> np.ndarray:
    return np.minimum((starts / (total / B)).astype(int), B - 1)


def run_regenerative_is(
    cfg: RunConfig,
    table: Optional[TiltTable] = None,
    band: Optional[Band] = None,
) -> LossEstimate:
    """Regenerative importance-sampling estimate of the loss probability."""
    model = cfg.model
    band = make_band(cfg) if band is None else band
    table = make_table(cfg) if table is None else table
    delta = cfg.check_step
    chain_rng = Stream(cfg.seed, "chain")
    is_rng = Stream(cfg.seed, "is-cycles")
    kw = dict(budget=cfg.event_budget)
    stop = _Stopper(cfg)

    state = run_chain_cycle(initial_state(band), model, band, delta, chain_rng, **kw).end
    starts, taus, values, chain_losses, arrivals = [], [], [], [], []
    overflow = 0
    L_max = 0.0
    clock = 0.0
    while True:
        sample, _path = run_is_cycle(
            state, model, table, band, delta, is_rng, eps_trunc=cfg.eps_trunc, k_cap=cfg.k_cap, **kw
        )
        cyc = run_chain_cycle(state, model, band, delta, chain_rng, **kw)
        if cfg.sim_time is not None and clock + cyc.tau_A > cfg.sim_time:
            break
        starts.append(clock)
        taus.append(cyc.tau_A)
        values.append(sample.value)
        chain_losses.append(cyc.losses)
        arrivals.append(cyc.arrivals)
        if sample.overflow:
            overflow += 1
            L_max = max(L_max, sample.L)
        clock += cyc.tau_A
        state = cyc.end
        if stop.done(len(taus), clock):
            break

    B = cfg.batches
    n = len(taus)
    if n == 0:
        raise RuntimeError("no cycle completed within the budget")
    starts_a = np.asarray(starts)
    idx = _batch_index(starts_a, clock, B)
    tau_b = np.bincount(idx, weights=taus, minlength=B)
    cnt_b = np.bincount(idx, minlength=B)
    if np.any(cnt_b == 0):
        raise RuntimeError(
            f"{int(np.sum(cnt_b == 0))} of {B} batches hold no complete cycle; lengthen the run or shorten delta"
        )
    norm = model.lam * model.s
    is_b = np.bincount(idx, weights=values, minlength=B) / (norm * tau_b)
    cmc_b = np.bincount(idx, weights=chain_losses, minlength=B) / (norm * tau_b)
    mean, re, ci = batch_stats(is_b, B)
    cmc_mean, cmc_re, cmc_ci = batch_stats(cmc_b, B)
    return LossEstimate(
        method="is",
        s=model.s,
        estimate=mean,
        re=re,
        ci=ci,
        batch_values=is_b.tolist(),
        cycles=n,
        losses=int(sum(chain_losses)),
        arrivals=int(sum(arrivals)),
        cpu_seconds=stop.elapsed(),
        sim_time=clock,
        extra={
            "overflow_cycles": overflow,
            "max_L": L_max,
            "mean_tau_A": clock / n,
            "mean_N_A_is": float(np.mean(values)),
            "chain_kac_estimate": cmc_mean,
            "chain_kac_re": cmc_re,
            "T": table.T,
            "theta_inf": table.theta_inf,
            "I_star": table.I_star,
            "delta_lattice": table.delta,
            "check_step": delta,
        },
    )


def _crude_segment(state: SystemState, model: Model, a: float, until: float, rng) -> tuple[float, int, int]:
    """Advance ``state`` through arrivals before ``until``; returns the next arrival epoch and counts."""
    s = model.s
    dep = state.departures
    sample_v = model.service.source(rng)
    sample_u = model.arrival.base_source(rng)
    inv_s = 1.0 / s
    n = lost = 0
    while a < until:
        if dep and dep[0] <= a:
            state.advance_to(a)
        n += 1
        if len(dep) >= s:
            lost += 1
        else:
            insort(dep, a + sample_v())
        a += sample_u() * inv_s
    state.advance_to(until)
    return a, n, lost


def run_crude(cfg: RunConfig, chunk_arrivals: int = 2000) -> LossEstimate:
    """Crude Monte Carlo: one long original-measure run, losses over arrivals per batch.

    The timeline is simulated in short chunks so the CPU budget can be
    checked; at the end the chunks are grouped into ``B`` equal-length
    batches and any leftover chunks are dropped.
    """
    if cfg.cycles is not None:
        raise ValueError("crude runs stop on simulated time or CPU seconds, not cycles")
    model = cfg.model
    rng = Stream(cfg.seed, "crude")
    stop = _Stopper(cfg)
    B = cfg.batches
    h = chunk_arrivals / (model.lam * model.s)
    if cfg.sim_time is not None:
        n_chunks = max(B, B * math.ceil(cfg.sim_time / (h * B)))
        h = cfg.sim_time / n_chunks
    # the fluid start needs a stable model; overloaded sanity runs start empty
    state = initial_state(make_band(cfg)) if model.rho < 1.0 else SystemState(model.s)
    a = sample_interarrival(model.arrival, model.s, state.age, rng)
    arr, lost = [], []
    clock = 0.0
    while True:
        end = (len(arr) + 1) * h
        a, n, l = _crude_segment(state, model, a, end, rng)
        arr.append(n)
        lost.append(l)
        clock = end
        if cfg.sim_time is not None:
            if len(arr) >= n_chunks:
                break
        elif stop.done(0, clock):
            break
    per = len(arr) // B
    if per == 0:
        raise RuntimeError("run too short to fill every batch")
    arr_b = np.asarray(arr[: per * B]).reshape(B, per).sum(axis=1)
    lost_b = np.asarray(lost[: per * B]).reshape(B, per).sum(axis=1)
    vals = lost_b / arr_b
    mean, re, ci = batch_stats(vals, B)
    return LossEstimate(
        method="cmc",
        s=model.s,
        estimate=mean,
        re=re,
        ci=ci,
        batch_values=vals.tolist(),
        cycles=0,
        losses=int(lost_b.sum()),
        arrivals=int(arr_b.sum()),
        cpu_seconds=stop.elapsed(),
        sim_time=per * B * h,
        extra={"chunk_length": h},
    )
