"""Large-deviations quantities of the coupled infinite-server system.

For a horizon ``t`` the scaled log-MGF of the number of post-zero arrivals
still present at ``t`` is

    psi_t(theta) = int_0^t psi_N(log(e^theta sf(u) + cdf(u))) du,

and the overflow rate at ``t`` is the Legendre transform ``I_t`` evaluated
at the fraction of servers that must be filled by new arrivals,
``a_t = 1 - lam int_t^inf sf(u) du``.  The tilt ``theta_t`` solves
``psi_t'(theta) = a_t``.  ``I*`` is the infinite-horizon limit and ``T`` is
the smallest horizon the importance sampler will ever tilt towards.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .dist import ArrivalSpec, ConvergenceError, ServiceSpec

__all__ = [
    "RateContext",
    "TiltTable",
    "a_t",
    "psi_t",
    "psi_t_derivs",
    "solve_theta_t",
    "rate_I",
    "rate_I_star",
    "tilde_I",
    "solve_T",
    "build_tilt_table",
]


@dataclass(frozen=True)
class RateContext:
    arrival: ArrivalSpec
    service: ServiceSpec
    quad_tol: float = 1e-9
    root_tol: float = 1e-10
    eps_tail: float = 1e-12
    y_cut: float = field(init=False)

    def __post_init__(self):
        rho = self.arrival.rate * self.service.mean
        if not rho < 1.0:
            raise ValueError(f"traffic intensity lam*EV = {rho:.6g} must be below 1")
        cut = self.service.upper if self.service.bounded else self.service.isf(self.eps_tail)
        object.__setattr__(self, "y_cut", float(cut))

    @property
    def lam(self) -> float:
        return self.arrival.rate

    @property
    def rho(self) -> float:
        return self.arrival.rate * self.service.mean


def _quad(ctx: RateContext, f, a: float, b: float) -> float:
    if b <= a:
        return 0.0
    val, _err = integrate.quad(f, a, b, epsabs=1e-15, epsrel=ctx.quad_tol, limit=500)
    return val


def _tail_integral(ctx: RateContext, t: float) -> float:
    g = ctx.service.tail_integral(t)
    if g is not None:
        return float(g)
    return _quad(ctx, ctx.service.sf, t, ctx.y_cut)


def a_t(ctx: RateContext, t: float) -> float:
    if t < 0:
        raise ValueError("t must be non-negative")
    return 1.0 - ctx.lam * _tail_integral(ctx, t)


def psi_t(ctx: RateContext, t: float, theta: float) -> float:
    if t <= 0:
        raise ValueError("t must be positive")
    if theta == 0.0:
        return 0.0
    em1 = math.expm1(theta)
    sf = ctx.service.sf
    psi_e = ctx.arrival.psi_of_excess
    return _quad(ctx, lambda u: psi_e(em1 * sf(u)), 0.0, min(t, ctx.y_cut))


def psi_t_derivs(ctx: RateContext, t: float, theta: float) -> tuple[float, float]:
    """First and second ``theta``-derivatives of ``psi_t``."""
    if t <= 0:
        raise ValueError("t must be positive")
    em1 = math.expm1(theta)
    eth = em1 + 1.0
    sf = ctx.service.sf
    derivs = ctx.arrival.psi_derivs

    def first(u):
        tail = sf(u)
        e = em1 * tail
        w = eth * tail / (1.0 + e)
        return derivs(math.log1p(e))[0] * w

    def second(u):
        tail = sf(u)
        e = em1 * tail
        w = eth * tail / (1.0 + e)
        d1, d2 = derivs(math.log1p(e))
        return d2 * w * w + d1 * w * (1.0 - w)

    hi = min(t, ctx.y_cut)
    return _quad(ctx, first, 0.0, hi), _quad(ctx, second, 0.0, hi)


def solve_theta_t(ctx: RateContext, t: float, guess: float | None = None, target: float | None = None) -> float:
    """Positive root of ``psi_t'(theta) = a_t`` (or ``= target``).

    Newton on the analytic second derivative, safeguarded by bisection on a
    bracket that starts at ``[0, inf)`` and tightens with every evaluation.
    """
    a = a_t(ctx, t) if target is None else target
    tol = ctx.root_tol * a
    lo, hi = 0.0, math.inf
    theta = 1.0 if guess is None or guess <= 0 else float(guess)
    g = d1 = math.nan
    for _ in range(200):
        d1, d2 = psi_t_derivs(ctx, t, theta)
        g = d1 - a
        if abs(g) <= tol:
            return theta
        if g < 0:
            lo = theta
        else:
            hi = theta
        nxt = theta - g / d2 if d2 > 0 else math.nan
        if math.isinf(hi):
            if not (nxt > lo) or nxt > 4.0 * theta + 1.0:
                nxt = 2.0 * theta + 1.0
        elif not (lo < nxt < hi):
            nxt = 0.5 * (lo + hi)
        if math.isfinite(hi) and hi - lo <= 1e-15 * max(1.0, hi):
            return nxt
        theta = nxt
    raise ConvergenceError(f"theta_t solve failed at t={t}: bracket=({lo}, {hi}), residual={g}")


def rate_I(ctx: RateContext, t: float, theta: float | None = None) -> float:
    if theta is None:
        theta = solve_theta_t(ctx, t)
    return theta * a_t(ctx, t) - psi_t(ctx, t, theta)


def rate_I_star(ctx: RateContext) -> tuple[float, float]:
    """``(theta_inf, I*)`` evaluated at the truncated infinite horizon."""
    theta = solve_theta_t(ctx, ctx.y_cut, target=1.0)
    return theta, theta - psi_t(ctx, ctx.y_cut, theta)


def _solve_psi_prime(arrival: ArrivalSpec, level: float, tol: float = 1e-13) -> float:
    """Solve ``psi_N'(theta) = level`` (strictly increasing in theta)."""
    d0 = arrival.psi_derivs(0.0)[0]
    if level > d0:
        lo, hi = 0.0, 1.0
        while arrival.psi_derivs(hi)[0] < level:
            lo, hi = hi, 2.0 * hi
    else:
        lo, hi = -1.0, 0.0
        while arrival.psi_derivs(lo)[0] > level:
            lo, hi = 2.0 * lo, lo
    theta = 0.5 * (lo + hi)
    for _ in range(200):
        d1, d2 = arrival.psi_derivs(theta)
        g = d1 - level
        if abs(g) <= tol * level:
            return theta
        if g < 0:
            lo = theta
        else:
            hi = theta
        nxt = theta - g / d2
        if not lo < nxt < hi:
            nxt = 0.5 * (lo + hi)
        if hi - lo <= 1e-15 * max(1.0, abs(hi)):
            return nxt
        theta = nxt
    raise ConvergenceError(f"psi_N' = {level} not solved; bracket=({lo}, {hi})")


def tilde_I(ctx: RateContext, t: float) -> float:
    """Rate function of the arrival count over ``[0, t]`` at level ``1 - rho``."""
    if t <= 0:
        raise ValueError("t must be positive")
    level = 1.0 - ctx.rho
    theta = _solve_psi_prime(ctx.arrival, level / t)
    return theta * level - ctx.arrival.psi(theta) * t


def solve_T(ctx: RateContext, margin: float = 0.05, I_star: float | None = None, step: float | None = None) -> float:
    """Largest grid horizon with ``tilde_I(T) >= 2 I* (1 + margin)``.

    ``tilde_I`` is non-increasing on ``(0, (1 - rho)/lam]`` so the crossing
    is located by bisection over grid indices.
    """
    if I_star is None:
        I_star = rate_I_star(ctx)[1]
    step = 1e-3 * ctx.service.mean if step is None else step
    need = 2.0 * I_star * (1.0 + margin)
    hi_idx = max(1, int(((1.0 - ctx.rho) / ctx.lam) / step))
    ok = lambda j: tilde_I(ctx, j * step) >= need
    if not ok(1):
        raise ValueError(
            f"no horizon on the grid satisfies tilde_I >= {need:.6g}; model mis-specified?"
        )
    if ok(hi_idx):
        lo = hi_idx
    else:
        lo, hi = 1, hi_idx
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if ok(mid):
                lo = mid
            else:
                hi = mid
    T = lo * step
    if not tilde_I(ctx, T) > 2.0 * I_star:
        raise ValueError("selected horizon fails tilde_I(T) > 2 I*")
    return T


@dataclass(frozen=True)
class TiltTable:
    """Tilting parameters on the horizon lattice ``T + k delta``.

    Entry ``k = 0`` holds the root at ``T`` for completeness; the sampler
    never tilts when the horizon is ``T`` and :meth:`theta_at` returns 0
    there.  Beyond ``K_max`` the lattice has passed the truncation horizon
    and the last root is reused.
    """

    T: float
    delta: float
    s: int
    K_max: int
    t: np.ndarray
    theta: np.ndarray
    rate: np.ndarray
    theta_inf: float
    I_star: float

    def theta_at(self, k: int) -> float:
        if k == 0:
            return 0.0
        return float(self.theta[min(k, self.K_max)])

    def theta_lattice(self, k: np.ndarray) -> np.ndarray:
        out = self.theta[np.minimum(k, self.K_max)]
        return np.where(k == 0, 0.0, out)

    def horizon(self, k: int) -> float:
        return self.T + k * self.delta


def build_tilt_table(
    ctx: RateContext,
    s: int,
    c: float = 1.0,
    T: float | None = None,
    margin: float = 0.05,
) -> TiltTable:
    if s < 1 or c <= 0:
        raise ValueError("need s >= 1 and c > 0")
    theta_inf, I_star = rate_I_star(ctx)
    if T is None:
        T = solve_T(ctx, margin=margin, I_star=I_star)
    delta = c / s
    K_max = max(1, math.ceil((ctx.y_cut - T) / delta))
    ts = T + delta * np.arange(K_max + 1)
    thetas = np.empty(K_max + 1)
    rates = np.empty(K_max + 1)
    guess = None
    for k, t in enumerate(ts):
        th = solve_theta_t(ctx, float(t), guess=guess)
        thetas[k] = th
        rates[k] = rate_I(ctx, float(t), th)
        guess = th
    return TiltTable(
        T=float(T),
        delta=delta,
        s=s,
        K_max=K_max,
        t=ts,
        theta=thetas,
        rate=rates,
        theta_inf=theta_inf,
        I_star=I_star,
    )
