"""Measure-valued loss-queue state and the recurrent set built around it.

The state of a GI/G/s loss system at time ``t`` is the function
``y -> Q(t, y)``, the number of customers in service whose residual service
time exceeds ``y``, together with the age of the current interarrival
period.  :class:`SystemState` stores it as a sorted list of absolute
departure epochs.

The recurrent set is a band around the infinite-server fluid profile
``center(y) = lam s int_y^inf sf(u) du`` of half-width ``sqrt(s) C* xi(y)``.
A state belongs to the set when ``Q(t, y)`` lies strictly inside the band
for every ``y``.
"""
from __future__ import annotations

import math
from bisect import bisect_right, insort
from typing import Callable, Optional, Union

import numpy as np
from scipy import integrate, optimize

from .dist import ArrivalSpec, ServiceSpec

__all__ = [
    "SystemState",
    "Band",
    "initial_state",
    "in_A",
    "band_profile",
    "tau_A_check",
    "OffGridError",
]

_GL_X, _GL_W = np.polynomial.legendre.leggauss(8)
_GRID_TOL = 1e-12


class OffGridError(ValueError):
    """A return-time check was requested away from the check grid."""


class SystemState:
    """Customers in service as sorted absolute departure epochs.

    ``capacity=None`` disables the admission check, which turns the same
    object into the infinite-server system used for coupling arguments.
    """

    __slots__ = ("capacity", "departures", "clock", "last_arrival", "arrivals", "losses")

    def __init__(
        self,
        capacity: Optional[int],
        departures=(),
        clock: float = 0.0,
        age: float = 0.0,
    ):
        if capacity is not None and capacity < 1:
            raise ValueError("capacity must be a positive integer or None")
        self.capacity = capacity
        self.departures = sorted(float(d) for d in departures)
        self.clock = float(clock)
        self.last_arrival = self.clock - float(age)
        self.arrivals = 0
        self.losses = 0
        if self.departures and self.departures[0] <= self.clock:
            raise ValueError("departure epochs must lie after the clock")
        if capacity is not None and len(self.departures) > capacity:
            raise ValueError("more customers than servers")

    def __repr__(self) -> str:
        return (
            f"SystemState(capacity={self.capacity}, busy={len(self.departures)}, "
            f"clock={self.clock:g}, age={self.age:g})"
        )

    @property
    def age(self) -> float:
        return self.clock - self.last_arrival

    @property
    def busy(self) -> int:
        return len(self.departures)

    def q(self, y: float) -> int:
        """``Q(clock, y)``: customers whose residual service exceeds ``y``."""
        return len(self.departures) - bisect_right(self.departures, self.clock + y)

    def residuals(self) -> np.ndarray:
        return np.asarray(self.departures, dtype=float) - self.clock

    def advance_to(self, t: float) -> "SystemState":
        if t < self.clock:
            raise ValueError(f"cannot move the clock back from {self.clock} to {t}")
        dep = self.departures
        if dep and dep[0] <= t:
            del dep[: bisect_right(dep, t)]
        self.clock = t
        return self

    def apply_arrival(self, v: Union[float, Callable[[], float], None] = None) -> bool:
        """Offer an arrival at the current clock.

        ``v`` is the service time, or a callable producing it; the callable is
        only invoked for admitted customers so a lost arrival never consumes
        a service draw.
        """
        self.arrivals += 1
        self.last_arrival = self.clock
        if self.capacity is not None and len(self.departures) >= self.capacity:
            self.losses += 1
            return False
        if v is None:
            raise ValueError("an admitted arrival needs a service time")
        if callable(v):
            v = v()
        insort(self.departures, self.clock + v)
        return True

    def copy(self) -> "SystemState":
        out = SystemState.__new__(SystemState)
        out.capacity = self.capacity
        out.departures = list(self.departures)
        out.clock = self.clock
        out.last_arrival = self.last_arrival
        out.arrivals = self.arrivals
        out.losses = self.losses
        return out

    def rebased(self) -> "SystemState":
        """Copy with the clock moved to 0; counters reset."""
        out = SystemState.__new__(SystemState)
        c = self.clock
        out.capacity = self.capacity
        out.departures = [d - c for d in self.departures]
        out.clock = 0.0
        out.last_arrival = self.last_arrival - c
        out.arrivals = 0
        out.losses = 0
        return out


def _gl_cells(f, edges: np.ndarray) -> np.ndarray:
    """Integral of vectorised ``f`` over each cell of ``edges`` (8-point Gauss-Legendre)."""
    a, b = edges[:-1, None], edges[1:, None]
    half = 0.5 * (b - a)
    x = 0.5 * (a + b) + half * _GL_X[None, :]
    return (f(x) * _GL_W[None, :] * half).sum(axis=1)


def _reverse_cumsum(cells: np.ndarray) -> np.ndarray:
    """``out[i] = sum(cells[i:])`` with a trailing zero."""
    out = np.zeros(cells.size + 1)
    out[:-1] = np.cumsum(cells[::-1])[::-1]
    return out


class Band:
    """Confidence band around the fluid profile.

    ``variant="general"`` uses ``xi = nu + gamma int_y^inf nu`` with
    ``nu = (lam int_y^inf sf)^(1/(2+eta))``.  ``variant="truncated"`` uses
    the stationary standard deviation of the diffusion limit floored at
    ``c1``.  The half-width is tabulated on a grid and linearly
    interpolated; the center uses closed-form tail integrals when the
    service law provides them.
    """

    def __init__(
        self,
        arrival: ArrivalSpec,
        service: ServiceSpec,
        s: int,
        variant: str = "truncated",
        c_star: Optional[float] = None,
        c1: float = 1.1,
        eta: Optional[float] = None,
        gamma: float = 1.0,
        eps_tail: float = 1e-12,
        n_grid: int = 8193,
    ):
        if variant not in ("general", "truncated"):
            raise ValueError(f"unknown band variant {variant!r}")
        if s < 1:
            raise ValueError("s must be >= 1")
        lam = arrival.rate
        self.arrival, self.service, self.s, self.variant = arrival, service, int(s), variant
        self.lam = lam
        self.c_star = max(lam, 1.0) if c_star is None else float(c_star)
        self.c1 = float(c1)
        self.eta = (0.0 if service.bounded else 0.5) if eta is None else float(eta)
        self.gamma = float(gamma)
        if self.c_star <= 0 or self.c1 < 0 or self.eta < 0 or self.gamma < 0:
            raise ValueError("band constants must be non-negative (C* positive)")
        self.y_hi = float(service.upper if service.bounded else service.isf(eps_tail))

        grid = np.linspace(0.0, self.y_hi, n_grid)
        low = getattr(service, "low", 0.0)
        if 0.0 < low < self.y_hi:
            grid = np.union1d(grid, [low])
        self.grid = grid
        sf = service.sf_array

        closed = service.tail_integral(0.0) is not None
        if closed:
            self._G_grid = np.asarray(service.tail_integral(grid), dtype=float)
        else:
            self._G_grid = _reverse_cumsum(_gl_cells(sf, grid))
        self._closed_G = closed

        root_s = math.sqrt(self.s)
        if variant == "truncated":
            ca2 = arrival.cv2
            integrand = lambda u: lam * ca2 * sf(u) ** 2 + lam * (1.0 - sf(u)) * sf(u)
            var = _reverse_cumsum(_gl_cells(integrand, grid))
            self._sd_grid = np.sqrt(np.maximum(var, 0.0))
            xi = np.maximum(self._sd_grid, self.c1)
        else:
            p = 1.0 / (2.0 + self.eta)
            G = self._G_fn
            nu = lambda u: (lam * np.maximum(G(u), 0.0)) ** p
            nu_grid = nu(grid)
            xi = nu_grid + self.gamma * _reverse_cumsum(_gl_cells(nu, grid))
        self._xi_grid = xi
        self._hw_grid = root_s * self.c_star * xi
        self._center_grid = lam * self.s * self._G_grid
        self._lower_grid = self._center_grid - self._hw_grid
        self._upper_grid = self._center_grid + self._hw_grid
        self._build_range_max()
        self.y_cross = self._crossing()

    # -- profile -------------------------------------------------------------

    def _G_fn(self, y):
        if self._closed_G:
            return np.asarray(self.service.tail_integral(y), dtype=float)
        return np.interp(y, self.grid, self._G_grid)

    def center(self, y):
        return self.lam * self.s * self._G_fn(y)

    def halfwidth(self, y):
        return np.interp(y, self.grid, self._hw_grid)

    def xi(self, y):
        return np.interp(y, self.grid, self._xi_grid)

    def profile(self, y):
        c = self.center(y)
        h = self.halfwidth(y)
        return c - h, c + h

    def sd(self, y):
        """Stationary sd of the diffusion limit (truncated variant only)."""
        if self.variant != "truncated":
            raise AttributeError("sd is only tabulated for the truncated variant")
        return np.interp(y, self.grid, self._sd_grid)

    # -- range maximum of the lower edge ---------------------------------------

    def _build_range_max(self):
        lower = self._lower_grid
        self.lower_monotone = bool(np.all(np.diff(lower) <= 0.0))
        size = lower.size
        levels = [lower]
        span = 1
        while 2 * span <= size:
            prev = levels[-1]
            levels.append(np.maximum(prev[: prev.size - span], prev[span:]))
            span *= 2
        table = np.full((len(levels), size), -np.inf)
        for i, lev in enumerate(levels):
            table[i, : lev.size] = lev
        self._table = table

    def max_lower(self, a, b, la=None, lb=None) -> np.ndarray:
        """``max lower(y)`` over ``[a, b]`` for arrays of segment ends.

        Endpoint values may be passed in when the caller already has them.
        Interior maxima come from a sparse table over the tabulation grid.
        """
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        if la is None:
            la = self.profile(a)[0]
        if self.lower_monotone:
            return la
        if lb is None:
            lb = self.profile(b)[0]
        out = np.maximum(la, lb)
        ia = np.searchsorted(self.grid, a, side="right")
        ib = np.searchsorted(self.grid, b, side="left") - 1
        has = ib >= ia
        if np.any(has):
            ia, ib = ia[has], ib[has]
            k = np.floor(np.log2(ib - ia + 1)).astype(np.intp)
            best = np.maximum(self._table[k, ia], self._table[k, ib - (1 << k) + 1])
            out[has] = np.maximum(out[has], best)
        return out

    def _crossing(self) -> float:
        """Smallest ``y`` beyond which ``lower < 0`` on the rest of the grid."""
        neg = self._lower_grid < 0.0
        if self.service.bounded:
            neg[-1] = True  # y = M itself is outside the state space
        if neg.all():
            return 0.0
        last_nonneg = int(np.flatnonzero(~neg)[-1])
        if last_nonneg + 1 >= self.grid.size:
            return self.y_hi
        a, b = self.grid[last_nonneg], self.grid[last_nonneg + 1]
        f = lambda y: float(self.profile(y)[0])
        return float(optimize.brentq(f, a, b, xtol=1e-14)) if f(a) > 0 > f(b) else float(b)

    # -- feasibility ---------------------------------------------------------

    def integer_gaps(self, y: np.ndarray) -> np.ndarray:
        """Points of ``y`` where the open band holds no non-negative integer."""
        lo, hi = self.profile(np.asarray(y, dtype=float))
        first = np.maximum(np.floor(lo) + 1.0, 0.0)
        return np.asarray(y)[~(first < hi)]


def band_profile(band: Band, y):
    """``(lower, upper)`` edges of the band at ``y``."""
    if np.any(np.asarray(y) < 0):
        raise ValueError("y must be non-negative")
    return band.profile(y)


def in_A(state: SystemState, band: Band) -> bool:
    """Whether ``Q(clock, .)`` lies strictly inside the band everywhere on ``[0, y_hi)``.

    ``Q`` is a step function, so it is enough to compare each constant piece
    with the largest lower edge over the piece and the upper edge at its
    right end (the upper edge is non-increasing).
    """
    if state.capacity is not None and state.capacity != band.s:
        raise ValueError("state and band disagree on the number of servers")
    r = state.residuals()
    n = r.size
    if n == 0:
        return band.y_cross <= 0.0
    if r[-1] < band.y_cross:
        return False
    r = np.minimum(r, band.y_hi)
    c = band.center(r)
    h = np.interp(r, band.grid, band._hw_grid)
    q = n - np.arange(n, dtype=float)
    if not np.all(q < c + h):
        return False
    lo = c - h
    lefts = np.empty(n)
    lefts[0] = 0.0
    lefts[1:] = r[:-1]
    lo_left = np.empty(n)
    lo_left[0] = band._lower_grid[0]
    lo_left[1:] = lo[:-1]
    return bool(np.all(band.max_lower(lefts, r, lo_left, lo) < q))


def tau_A_check(state: SystemState, band: Band, delta: float) -> bool:
    """``in_A`` restricted to instants of the ``delta`` grid."""
    k = round(state.clock / delta)
    if abs(state.clock - k * delta) > _GRID_TOL * max(1.0, abs(state.clock)):
        raise OffGridError(f"clock {state.clock} is not a multiple of {delta}")
    return in_A(state, band)


def initial_state(band: Band, age: float = 0.0) -> SystemState:
    """Fluid-quantile state: ``round(lam s EV)`` customers with staggered residuals.

    Residual ``r_j`` solves ``center(r_j) = j - 1/2`` so that the resulting
    ``Q(0, .)`` stays within 1/2 of the fluid profile.
    """
    c0 = float(band.center(0.0))
    m = int(round(c0))
    res = []
    f_hi = band.y_hi
    for j in range(1, m + 1):
        target = j - 0.5
        if target >= c0:
            res.append(0.0)
            continue
        g = lambda y, target=target: float(band.center(y)) - target
        res.append(optimize.brentq(g, 0.0, f_hi, xtol=1e-14, rtol=1e-14))
    res = [max(r, 1e-12) for r in res]
    state = SystemState(band.s, res, clock=0.0, age=age)
    if not in_A(state, band):
        raise ValueError("the fluid-quantile start is outside the recurrent set; check the band constants")
    return state
