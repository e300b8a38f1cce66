"""Independent reference values for validating the simulator."""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numpy as np
from scipy import integrate, optimize

from .queue import Band, SystemState

__all__ = [
    "OracleResult",
    "erlang_b",
    "erlang_b_oracle",
    "i_star_poisson",
    "mm_ss_steady_state",
    "exact_band",
    "dense_band_check",
    "dense_band_margin",
]


@dataclass(frozen=True)
class OracleResult:
    value: float
    method: str
    error_bound: Optional[float] = None

    def __post_init__(self):
        if self.error_bound is not None and self.error_bound < 0:
            raise ValueError("error bound must be non-negative")


def erlang_b(s: int, a: float) -> float:
    """Blocking probability of an ``s``-server loss system with offered load ``a``."""
    if s < 1 or a <= 0:
        raise ValueError("need s >= 1 and a > 0")
    b = 1.0
    for n in range(1, s + 1):
        b = a * b / (n + a * b)
    return b


def erlang_b_oracle(s: int, a: float) -> OracleResult:
    # the recursion is forward-stable; a few ulps per step
    return OracleResult(erlang_b(s, a), "erlang-b recursion", 4.0 * s * np.finfo(float).eps)


def i_star_poisson(rho: float) -> float:
    """Decay rate of the loss probability for Poisson arrivals, ``rho - 1 - log rho``."""
    if not 0.0 < rho < 1.0:
        raise ValueError("rho must lie in (0, 1)")
    return rho - 1.0 - math.log(rho)


def mm_ss_steady_state(s: int, lam_total: float, mu: float) -> np.ndarray:
    """Stationary occupancy law of M/M/s/s: Poisson(``lam_total/mu``) truncated to ``0..s``."""
    if s > 1000:
        raise ValueError("s above 1000 is outside the supported range")
    a = lam_total / mu
    j = np.arange(s + 1)
    logw = j * math.log(a) - np.array([math.lgamma(k + 1.0) for k in j])
    w = np.exp(logw - logw.max())
    return w / w.sum()


# ---------------------------------------------------------------------------
# brute-force band membership
# ---------------------------------------------------------------------------


def exact_band(band: Band, y: float) -> tuple[float, float]:
    """Band edges at ``y`` from scalar adaptive quadrature, bypassing the band's tables."""
    srv, lam, s = band.service, band.lam, band.s
    hi = band.y_hi
    quad = lambda f, a: integrate.quad(f, a, hi, epsabs=1e-14, epsrel=1e-12, limit=400)[0] if a < hi else 0.0
    g_closed = srv.tail_integral(y)
    G = lambda u: float(srv.tail_integral(u)) if g_closed is not None else quad(srv.sf, u)
    center = lam * s * G(y)
    if band.variant == "truncated":
        ca2 = band.arrival.cv2
        var = quad(lambda u: lam * ca2 * srv.sf(u) ** 2 + lam * srv.cdf(u) * srv.sf(u), y)
        xi = max(math.sqrt(max(var, 0.0)), band.c1)
    else:
        p = 1.0 / (2.0 + band.eta)
        nu = lambda u: (lam * max(G(u), 0.0)) ** p
        xi = nu(y) + band.gamma * quad(nu, y)
    half = math.sqrt(s) * band.c_star * xi
    return center - half, center + half


@lru_cache(maxsize=16)
def _band_scan(band: Band, step: float) -> tuple[np.ndarray, np.ndarray, np.ndarray, float]:
    n = int(math.floor(band.y_hi / step))
    ys = step * np.arange(n + 1)
    if band.service.bounded:
        ys = ys[ys < band.y_hi]
    edges = np.array([exact_band(band, float(y)) for y in ys])
    lower, upper = edges[:, 0], edges[:, 1]
    # last y where the lower edge is still non-negative, refined between scan points
    nonneg = np.flatnonzero(lower >= 0.0)
    if nonneg.size == 0:
        cross = 0.0
    else:
        j = int(nonneg[-1])
        if j + 1 < ys.size:
            f = lambda y: exact_band(band, y)[0]
            cross = optimize.brentq(f, ys[j], ys[j + 1], xtol=1e-13)
        else:
            cross = band.y_hi
    return ys, lower, upper, float(cross)


def dense_band_margin(state: SystemState, band: Band, step: float = 1e-3) -> tuple[bool, float]:
    """Grid-scan band membership plus the smallest distance to a band edge seen.

    The scan covers ``{0, step, 2 step, ...}`` up to one time unit past the
    last residual, plus the left limit of every jump of ``Q`` (where a
    step function comes closest to the non-increasing upper edge).  Beyond
    the last residual ``Q = 0`` and membership needs the lower edge to have
    turned negative, which is checked against the crossing point located
    by root finding.
    """
    ys, lower, upper, cross = _band_scan(band, float(step))
    res = np.sort(state.residuals())
    last = float(res[-1]) if res.size else 0.0
    sel = ys <= last + 1.0
    y, lo, up = ys[sel], lower[sel], upper[sel]
    jumps = res - 1e-9 * np.maximum(1.0, res)
    jumps = jumps[(jumps > 0.0) & (jumps < band.y_hi)]
    if jumps.size:
        edges = np.array([exact_band(band, float(v)) for v in jumps])
        y = np.concatenate((y, jumps))
        lo = np.concatenate((lo, edges[:, 0]))
        up = np.concatenate((up, edges[:, 1]))
    q = res.size - np.searchsorted(res, y, side="right")
    ok = bool(np.all((q > lo) & (q < up)))
    margin = float(np.min(np.minimum(q - lo, up - q))) if y.size else math.inf
    tail_ok = last >= cross if res.size else cross <= 0.0
    margin = min(margin, abs(last - cross) * band.lam * band.s)
    return ok and tail_ok, margin


def dense_band_check(state: SystemState, band: Band, step: float = 1e-3) -> bool:
    return dense_band_margin(state, band, step)[0]
