"""Cycle drivers: the original-measure chain and the importance sampler.

A cycle starts at a state inside the recurrent set (clock 0) and ends at
the first positive multiple of ``delta`` at which the state is back in the
set.  The importance-sampling cycle draws a random horizon ``t = T + k
delta``, tilts arrivals and services towards an overflow at ``t`` while
``A_i < t`` and no loss has happened, then continues under the original
law.  Its output is ``N_A * L`` where ``L`` is the likelihood ratio of the
original law against the mixture of tilted laws over all horizons.
"""
from __future__ import annotations

import math
from bisect import insort
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import logsumexp

from .dist import ArrivalSpec, ServiceSpec, sample_interarrival
from .ldcalc import TiltTable
from .queue import Band, SystemState, in_A

__all__ = [
    "Model",
    "PathRecord",
    "CycleSample",
    "ChainCycle",
    "BudgetExceeded",
    "horizon_pmf",
    "sample_horizon",
    "run_chain_cycle",
    "run_is_cycle",
    "run_original",
    "log_L_t",
    "mixture_L",
    "q_grid",
]

DEFAULT_EVENT_BUDGET = 100_000_000
DEFAULT_K_CAP = 1_000_000
DEFAULT_EPS_TRUNC = 1e-12


class BudgetExceeded(RuntimeError):
    """A cycle used more events (or horizon terms) than allowed."""


@dataclass(frozen=True)
class Model:
    arrival: ArrivalSpec
    service: ServiceSpec
    s: int

    @property
    def lam(self) -> float:
        return self.arrival.rate

    @property
    def rho(self) -> float:
        return self.arrival.rate * self.service.mean


@dataclass
class PathRecord:
    """Arrivals of one cycle.

    ``A[i]`` is the epoch of arrival ``i + 1`` (the first arrival after the
    start), ``U[i]`` the interarrival time that follows it, ``V[i]`` its
    service time (nan when lost) and ``log_w[i]`` the log likelihood-ratio
    contribution of its tilted draws.  ``n_pre`` arrivals precede the first
    loss.
    """

    start: np.ndarray
    u0: float
    A: np.ndarray
    U: np.ndarray
    V: np.ndarray
    log_w: np.ndarray
    n_pre: int
    tau_s: Optional[float]
    tau_A: float
    N_A: int
    horizon: float
    k: int
    theta: float

    @property
    def overflow(self) -> bool:
        return self.tau_s is not None and self.tau_s < self.tau_A

    @property
    def lost(self) -> np.ndarray:
        return np.isnan(self.V)


@dataclass
class CycleSample:
    value: float
    L: float
    N_A: int
    overflow: bool
    tau_A: float
    arrivals: int
    K_used: int = 0
    tail_bound: float = 0.0
    diagnostics: dict = field(default_factory=dict)


@dataclass
class ChainCycle:
    tau_A: float
    losses: int
    arrivals: int
    end: SystemState


# ---------------------------------------------------------------------------
# horizon law
# ---------------------------------------------------------------------------


def horizon_pmf(k):
    """``P(kappa = k) = 1/(k+1)^2 - 1/(k+2)^2``."""
    k = np.asarray(k, dtype=float)
    return 1.0 / (k + 1.0) ** 2 - 1.0 / (k + 2.0) ** 2


def horizon_tail(K):
    """``P(kappa > K) = 1/(K+2)^2``."""
    return 1.0 / (np.asarray(K, dtype=float) + 2.0) ** 2


def sample_horizon(T: float, delta: float, rng) -> tuple[float, int]:
    """Draw ``(T + k delta, k)`` by inverting ``P(kappa <= k) = 1 - 1/(k+2)^2``."""
    if T <= 0 or delta <= 0:
        raise ValueError("need T > 0 and delta > 0")
    u = rng.random()
    k = max(math.ceil(1.0 / math.sqrt(1.0 - u)) - 2, 0)
    return T + k * delta, k


def _source(service: ServiceSpec, rng):
    src = getattr(service, "source", None)
    return src(rng) if src is not None else (lambda: service.sample(rng))


def _base_source(arrival: ArrivalSpec, rng):
    src = getattr(arrival, "base_source", None)
    return src(rng) if src is not None else (lambda: arrival.sample_base(rng))


# ---------------------------------------------------------------------------
# original-measure dynamics
# ---------------------------------------------------------------------------


def run_original(state: SystemState, model: Model, until: float, rng, trace: bool = False):
    """Simulate ``state`` in place up to time ``until`` under the original law.

    Returns the list of ``(epoch, admitted, service)`` triples when
    ``trace`` is set, else ``None``.  The admission rule follows the
    state's capacity, so the same stream drives both the loss system and
    its infinite-server twin.
    """
    arrival, service, s = model.arrival, model.service, model.s
    out = [] if trace else None
    a = state.clock + sample_interarrival(arrival, s, state.age, rng)
    while a <= until:
        state.advance_to(a)
        v = service.sample(rng)
        ok = state.apply_arrival(v)
        if trace:
            out.append((a, ok, v))
        a += arrival.sample_base(rng) / s
    state.advance_to(until)
    return out


def run_chain_cycle(
    start: SystemState,
    model: Model,
    band: Band,
    delta: float,
    rng,
    budget: int = DEFAULT_EVENT_BUDGET,
) -> ChainCycle:
    """One original-measure cycle from ``start`` (clock 0) until the next return."""
    arrival, service, s = model.arrival, model.service, model.s
    state = start.copy()
    dep = state.departures
    sample_v = _source(service, rng)
    sample_u = _base_source(arrival, rng)
    inv_s = 1.0 / s
    a = sample_interarrival(arrival, s, state.age, rng)
    gi = 1
    grid = delta
    losses = arrivals = 0
    while True:
        while grid <= a:
            state.advance_to(grid)
            if in_A(state, band):
                state.arrivals, state.losses = arrivals, losses
                return ChainCycle(grid, losses, arrivals, state.rebased())
            gi += 1
            grid = gi * delta
        if dep and dep[0] <= a:
            state.advance_to(a)
        else:
            state.clock = a
        arrivals += 1
        state.last_arrival = a
        if len(dep) >= s:
            losses += 1
        else:
            insort(dep, a + sample_v())
        a += sample_u() * inv_s
        if arrivals > budget:
            raise BudgetExceeded(f"chain cycle exceeded {budget} events (clock {a:g})")


# ---------------------------------------------------------------------------
# importance-sampling cycle
# ---------------------------------------------------------------------------


def run_is_cycle(
    start: SystemState,
    model: Model,
    table: TiltTable,
    band: Band,
    delta: float,
    rng,
    budget: int = DEFAULT_EVENT_BUDGET,
    eps_trunc: float = DEFAULT_EPS_TRUNC,
    k_cap: int = DEFAULT_K_CAP,
) -> tuple[CycleSample, PathRecord]:
    arrival, service, s = model.arrival, model.service, model.s
    t_h, k = sample_horizon(table.T, table.delta, rng)
    theta = table.theta_at(k)
    em1 = math.expm1(theta)
    state = start.copy()
    dep = state.departures
    start_res = np.asarray(dep, dtype=float)

    sf, isf, ppf = service.sf, service.isf, service.ppf
    upper = service.upper
    sample_v = _source(service, rng)
    sample_u = _base_source(arrival, rng)
    tilted_u = arrival.sample_tilted_base
    psi_e = arrival.psi_of_excess
    unif = rng.random
    ounif = rng.open_random
    inv_s = 1.0 / s

    A: list[float] = []
    U: list[float] = []
    V: list[float] = []
    W: list[float] = []
    n_pre = -1
    tau_s = None
    N = 0
    tilting = theta > 0.0

    u0 = sample_interarrival(arrival, s, state.age, rng)
    a = u0
    gi = 1
    grid = delta
    while True:
        while grid <= a:
            state.advance_to(grid)
            if in_A(state, band):
                return _finish(model, table, start_res, u0, A, U, V, W, n_pre, tau_s, grid, N, t_h, k, theta, eps_trunc, k_cap)
            gi += 1
            grid = gi * delta
        if dep and dep[0] <= a:
            state.advance_to(a)
        else:
            state.clock = a
        state.last_arrival = a
        A.append(a)
        if len(dep) >= s:
            N += 1
            if tau_s is None:
                tau_s = a
                n_pre = len(A) - 1
                tilting = False
            u = sample_u() * inv_s
            V.append(math.nan)
            W.append(0.0)
        elif tilting and a < t_h:
            rem = t_h - a
            if rem < upper:
                tail = sf(rem)
                e = em1 * tail
                z = 1.0 + e
                if unif() * z < tail + e:
                    v = isf(ounif() * tail)
                    lw = math.log1p(e) - theta
                else:
                    v = ppf(ounif() * (1.0 - tail))
                    lw = math.log1p(e)
                p = psi_e(e)
                u0_ = tilted_u(rng, p)
                u = u0_ * inv_s
                lw += p * u0_ - math.log1p(e)
            else:
                v = sample_v()
                u = sample_u() * inv_s
                lw = 0.0
            insort(dep, a + v)
            V.append(v)
            W.append(lw)
        else:
            tilting = False
            v = sample_v()
            insort(dep, a + v)
            u = sample_u() * inv_s
            V.append(v)
            W.append(0.0)
        U.append(u)
        a += u
        if len(A) > budget:
            raise BudgetExceeded(f"IS cycle exceeded {budget} events (clock {a:g})")


def _finish(model, table, start_res, u0, A, U, V, W, n_pre, tau_s, tau_A, N, t_h, k, theta, eps_trunc, k_cap):
    n = len(A)
    path = PathRecord(
        start=start_res,
        u0=u0,
        A=np.asarray(A, dtype=float),
        U=np.asarray(U, dtype=float),
        V=np.asarray(V, dtype=float),
        log_w=np.asarray(W, dtype=float),
        n_pre=n if n_pre < 0 else n_pre,
        tau_s=tau_s,
        tau_A=tau_A,
        N_A=N,
        horizon=t_h,
        k=k,
        theta=theta,
    )
    if not path.overflow:
        return CycleSample(0.0, 1.0, N, False, tau_A, n), path
    L, K, tail_bound = mixture_L(path, table, model, eps_trunc=eps_trunc, k_cap=k_cap)
    sample = CycleSample(N * L, L, N, True, tau_A, n, K_used=K, tail_bound=tail_bound)
    return sample, path


# ---------------------------------------------------------------------------
# likelihood ratios
# ---------------------------------------------------------------------------


def _log_L_lattice(path: PathRecord, table: TiltTable, model: Model, ks: np.ndarray) -> np.ndarray:
    """``log L_{T + k delta}`` for an array of lattice indices ``k >= 1``."""
    m = path.n_pre
    if m == 0:
        return np.zeros(ks.size)
    A = path.A[:m]
    U = path.U[:m]
    V = path.V[:m]
    t = table.T + ks * table.delta
    theta = table.theta_lattice(ks)
    rem = t[:, None] - A[None, :]
    active = rem > 0.0
    tail = model.service.sf_array(np.where(active, rem, 0.0))
    e = np.expm1(theta)[:, None] * tail
    psi = model.arrival.psi_of_excess_array(e)
    over = V[None, :] > rem
    terms = model.s * psi * U[None, :] - theta[:, None] * over
    return np.where(active, terms, 0.0).sum(axis=1)


def log_L_t(path: PathRecord, t: float, theta: float, model: Model) -> float:
    """``log dP/dP_t`` of the pre-loss part of ``path`` for a tilt towards ``t``.

    Only arrivals with ``A_i < min(t, tau_s)`` contribute; the interarrival
    ``U_0`` from the start state is never tilted.
    """
    if theta == 0.0:
        return 0.0
    m = path.n_pre
    A = path.A[:m]
    act = A < t
    if not act.any():
        return 0.0
    A, U, V = A[act], path.U[:m][act], path.V[:m][act]
    rem = t - A
    tail = model.service.sf_array(rem)
    e = math.expm1(theta) * tail
    psi = model.arrival.psi_of_excess_array(e)
    return float(np.sum(model.s * psi * U - theta * (V > rem)))


def mixture_L(
    path: PathRecord,
    table: TiltTable,
    model: Model,
    eps_trunc: float = DEFAULT_EPS_TRUNC,
    k_cap: int = DEFAULT_K_CAP,
    return_terms: bool = False,
):
    """Likelihood ratio against the horizon mixture.

    Returns ``(L, K, tail_bound)``: ``K`` is the last lattice index summed
    explicitly and the mass ``P(kappa > K)`` is added assuming
    ``L_{T + k delta} = 1`` beyond it.  For bounded service that is exact
    once the horizon passes every pre-loss ``A_i + M``; otherwise the sum
    stops after three consecutive ``|log L| < eps_trunc`` past ``tau_s`` and
    ``tail_bound`` bounds the resulting error in the denominator.
    """
    if path.tau_s is None:
        raise ValueError("the mixture ratio is only defined on overflow paths")
    T, d = table.T, table.delta
    m = path.n_pre
    service = model.service
    if service.bounded:
        end = max(path.tau_s, float(path.A[:m].max()) + service.upper if m else 0.0)
        K = max(0, math.ceil((end - T) / d))
        if K > k_cap:
            raise BudgetExceeded(f"horizon sum needs {K} terms (cap {k_cap})")
        ks = np.arange(1, K + 1)
        logL = _log_L_lattice(path, table, model, ks)
        tail_bound = 0.0
    else:
        chunk = 512
        parts = []
        quiet = 0
        K = 0
        done = False
        while not done:
            ks = np.arange(K + 1, K + chunk + 1)
            part = _log_L_lattice(path, table, model, ks)
            t = T + ks * d
            for j in range(ks.size):
                if abs(part[j]) < eps_trunc and t[j] >= path.tau_s:
                    quiet += 1
                    if quiet == 3:
                        part = part[: j + 1]
                        done = True
                        break
                else:
                    quiet = 0
            parts.append(part)
            K += part.size
            if K > k_cap:
                raise BudgetExceeded(f"horizon sum exceeded the cap of {k_cap} terms")
            chunk *= 2
        logL = np.concatenate(parts)
        ks = np.arange(1, K + 1)
        tail_bound = float(horizon_tail(K)) * math.expm1(eps_trunc)
    tail = float(horizon_tail(K))
    log_terms = np.concatenate(([math.log(0.75)], np.log(horizon_pmf(ks)) - logL, [math.log(tail)]))
    L = math.exp(-logsumexp(log_terms))
    if return_terms:
        return L, K, tail_bound, logL
    return L, K, tail_bound


# ---------------------------------------------------------------------------
# path inspection
# ---------------------------------------------------------------------------


def q_grid(path: PathRecord, ts: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """``Q(t, y)`` on a grid for a recorded cycle; rows are ``t``, columns ``y``."""
    adm = ~np.isnan(path.V)
    arr = path.A[adm]
    dep = np.concatenate((path.start, arr + path.V[adm]))
    born = np.concatenate((np.full(path.start.size, -np.inf), arr))
    ts = np.asarray(ts, dtype=float)[:, None, None]
    ys = np.asarray(ys, dtype=float)[None, :, None]
    present = (born[None, None, :] <= ts) & (dep[None, None, :] > ts + ys)
    return present.sum(axis=2)
