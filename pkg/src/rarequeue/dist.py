"""Interarrival and service-time laws.

Arrival laws describe the *base* interarrival time ``U0`` with mean
``1/lam``; a system with ``s`` servers sees interarrival times ``U0 / s``.
Everything the tilting machinery needs is exposed on the spec objects:

* ``log_mgf``: the log-moment generating function of ``U0``;
* ``psi``: ``psi(theta) = -log_mgf^{-1}(-theta)``, the scaled log-MGF limit
  of the arrival counting process;
* exact samplers under the original law, conditioned on the current age,
  and under the exponentially tilted law ``exp(-psi * x) P(U0 in dx)``.

Service laws expose pure-python scalar ``cdf/sf/pdf/ppf/isf`` (they sit in
the simulation hot loop) plus vectorised ``sf_array`` for the
likelihood-ratio and band computations.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from statistics import NormalDist
from typing import Callable, Optional

import numpy as np
from scipy import integrate, special, stats

__all__ = [
    "ArrivalSpec",
    "ExponentialArrival",
    "GammaArrival",
    "ServiceSpec",
    "ExponentialService",
    "UniformService",
    "WeibullService",
    "LognormalService",
    "UserDefinedService",
    "ConvergenceError",
    "Diagnostics",
    "validate_spec",
    "sample_interarrival",
    "sample_tilted_interarrival",
    "sample_tilted_service",
]

_ROOT_RTOL = 1e-12
_STD_NORMAL = NormalDist()


class ConvergenceError(RuntimeError):
    """A root finder or numeric inversion failed to converge."""


# ---------------------------------------------------------------------------
# arrivals
# ---------------------------------------------------------------------------


class ArrivalSpec:
    """Base interarrival law backed by a frozen scipy distribution.

    This is the generic (user-defined) path: moments, the log-MGF, ``psi``
    and the tilted sampler are all computed numerically.  Subclasses
    override whatever has a closed form.
    """

    family = "user-defined"

    def __init__(self, dist, theta_max: float = math.inf):
        lo, hi = dist.support()
        if lo < 0:
            raise ValueError("interarrival law must live on [0, inf)")
        self.dist = dist
        self.upper = float(hi)
        self.mean = float(dist.mean())
        self.rate = 1.0 / self.mean
        self.cv2 = float(dist.var()) / self.mean**2
        self.theta_max = float(theta_max)

    def __repr__(self) -> str:
        return f"{type(self).__name__}(mean={self.mean:g})"

    @property
    def cv(self) -> float:
        return math.sqrt(self.cv2)

    # -- transforms --------------------------------------------------------

    def _exp_moments(self, theta: float, order: int = 2) -> list[float]:
        """``E[U0^j exp(theta U0)]`` for j = 0..order by quadrature."""
        logpdf = self.dist.logpdf
        hi = self.upper
        # split so quad sees the mass when a large negative theta squeezes it to 0
        cut = min(hi, 40.0 / abs(theta)) if theta < 0 else min(hi, 50.0 * self.mean)
        out = []
        for j in range(order + 1):
            f = lambda x, j=j: x**j * math.exp(theta * x + logpdf(x))
            v = integrate.quad(f, 0.0, cut, epsabs=0.0, epsrel=1e-12, limit=200)[0]
            if cut < hi:
                v += integrate.quad(f, cut, hi, epsabs=0.0, epsrel=1e-12, limit=200)[0]
            out.append(v)
        return out

    def log_mgf(self, theta: float) -> float:
        if theta >= self.theta_max:
            raise ValueError(f"theta={theta} outside the MGF domain (< {self.theta_max})")
        if theta == 0.0:
            return 0.0
        cache = self.__dict__.setdefault("_log_mgf_cache", {})
        v = cache.get(theta)
        if v is None:
            if len(cache) > 4096:
                cache.clear()
            v = cache[theta] = math.log(self._exp_moments(theta, 0)[0])
        return v

    def log_mgf_derivs(self, theta: float) -> tuple[float, float]:
        if theta >= self.theta_max:
            raise ValueError(f"theta={theta} outside the MGF domain (< {self.theta_max})")
        m0, m1, m2 = self._exp_moments(theta, 2)
        k1 = m1 / m0
        return k1, m2 / m0 - k1 * k1

    def _inverse_log_mgf(self, y: float) -> float:
        """Solve ``log_mgf(x) = y``: bracket grown from [0, 1], bisect, then Newton."""
        if y == 0.0:
            return 0.0
        if y < 0:
            lo, hi = -1.0, 0.0
            while self.log_mgf(lo) > y:
                hi = lo
                lo *= 2.0
                if lo < -1e300:
                    raise ConvergenceError(f"could not bracket log_mgf(x) = {y}")
        else:
            lo, hi = 0.0, min(1.0, 0.5 * self.theta_max)
            while self.log_mgf(hi) < y:
                lo = hi
                hi = min(2.0 * hi, 0.5 * (hi + self.theta_max))
                if hi - lo < 1e-15 * max(1.0, abs(hi)):
                    raise ConvergenceError(f"could not bracket log_mgf(x) = {y}")
        for _ in range(30):
            mid = 0.5 * (lo + hi)
            if self.log_mgf(mid) < y:
                lo = mid
            else:
                hi = mid
        x = 0.5 * (lo + hi)
        for _ in range(50):
            g = self.log_mgf(x) - y
            k1, _ = self.log_mgf_derivs(x)
            step = g / k1
            x_new = x - step
            if not lo <= x_new <= hi:
                x_new = 0.5 * (lo + hi)
            if g < 0:
                lo = max(lo, x)
            else:
                hi = min(hi, x)
            if abs(x_new - x) <= _ROOT_RTOL * max(1.0, abs(x)):
                return x_new
            x = x_new
        raise ConvergenceError(f"Newton stalled solving log_mgf(x) = {y}, bracket=({lo}, {hi})")

    def psi(self, theta: float) -> float:
        if theta == 0.0:
            return 0.0
        return -self._inverse_log_mgf(-theta)

    def psi_derivs(self, theta: float) -> tuple[float, float]:
        x = self._inverse_log_mgf(-theta)
        k1, k2 = self.log_mgf_derivs(x)
        return 1.0 / k1, k2 / k1**3

    def psi_of_x(self, x: float) -> float:
        """``psi(log x)``; the tilting code works with ``x`` directly."""
        return self.psi(math.log(x))

    def psi_of_excess(self, e: float) -> float:
        """``psi(log(1 + e))`` without the cancellation of forming ``1 + e``."""
        return self.psi(math.log1p(e))

    def psi_of_excess_array(self, e):
        return np.vectorize(self.psi_of_excess, otypes=[float])(e)

    # -- densities ----------------------------------------------------------

    def pdf(self, x):
        return self.dist.pdf(x)

    def tilted_pdf(self, x, psi_value: float):
        """Density of ``U0`` under the tilt ``exp(-psi_value * x) P(dx)``."""
        norm = self.log_mgf(-psi_value)
        return np.exp(-psi_value * np.asarray(x, dtype=float) - norm) * self.pdf(x)

    # -- samplers -----------------------------------------------------------

    def sample_base(self, rng) -> float:
        return float(self.dist.isf(rng.open_random()))

    def base_source(self, rng):
        """Zero-argument sampler of fresh base interarrival times."""
        return lambda: self.sample_base(rng)

    def sample_residual_base(self, rng, b: float) -> float:
        """Draw ``U0 - b`` given ``U0 > b`` by inverting the conditional tail."""
        if b <= 0.0:
            return self.sample_base(rng)
        tail = float(self.dist.sf(b))
        if tail <= 0.0:
            raise ValueError(f"age {b} lies beyond the interarrival support")
        return max(float(self.dist.isf(rng.open_random() * tail)) - b, 0.0)

    def sample_tilted_base(self, rng, psi_value: float) -> float:
        """Draw from ``exp(-psi_value x) P(U0 in dx) / MGF(-psi_value)``.

        Numeric inversion of the tilted CDF, where the CDF itself comes
        from adaptive quadrature.
        """
        if psi_value == 0.0:
            return self.sample_base(rng)
        zeta = -psi_value
        pdf = self.dist.pdf
        dens = lambda y: math.exp(zeta * y) * pdf(y)
        total = math.exp(self.log_mgf(zeta))
        target = rng.open_random() * total
        hi = self.upper if math.isfinite(self.upper) else self.mean
        if not math.isfinite(self.upper):
            while integrate.quad(dens, 0.0, hi, epsrel=1e-10, limit=200)[0] < target:
                hi *= 2.0
        lo = 0.0
        x = 0.5 * (lo + hi)
        # the CDF is carried along and updated over the (short) Newton steps
        F = integrate.quad(dens, 0.0, x, epsrel=1e-10, epsabs=1e-300, limit=200)[0]
        for _ in range(200):
            h = F - target
            if h < 0:
                lo = x
            else:
                hi = x
            d = dens(x)
            x_new = x - h / d if d > 0 else 0.5 * (lo + hi)
            if not lo < x_new < hi:
                x_new = 0.5 * (lo + hi)
            if abs(x_new - x) <= 1e-12 * max(x, 1e-300) or hi - lo <= 1e-14 * hi:
                return x_new
            step = integrate.quad(dens, min(x, x_new), max(x, x_new), epsrel=1e-10, epsabs=1e-300, limit=200)[0]
            F = F + step if x_new > x else F - step
            x = x_new
        raise ConvergenceError(f"tilted CDF inversion failed, bracket=({lo}, {hi})")


class ExponentialArrival(ArrivalSpec):
    """Poisson arrivals: exponential base interarrival with rate ``lam``."""

    family = "exponential"

    def __init__(self, rate: float = 1.0):
        if rate <= 0:
            raise ValueError("rate must be positive")
        self.lam = float(rate)
        super().__init__(stats.expon(scale=1.0 / rate), theta_max=rate)

    def log_mgf(self, theta):
        if theta >= self.lam:
            raise ValueError(f"theta={theta} outside the MGF domain (< {self.lam})")
        return -math.log1p(-theta / self.lam)

    def log_mgf_derivs(self, theta):
        d = self.lam - theta
        return 1.0 / d, 1.0 / d**2

    def psi(self, theta):
        return self.lam * math.expm1(theta)

    def psi_derivs(self, theta):
        v = self.lam * math.exp(theta)
        return v, v

    def psi_of_x(self, x):
        return self.lam * (x - 1.0)

    def psi_of_excess(self, e):
        return self.lam * e

    def psi_of_excess_array(self, e):
        return self.lam * np.asarray(e, dtype=float)

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(x >= 0, self.lam * np.exp(-self.lam * x), 0.0)

    def sample_base(self, rng):
        return rng.standard_exponential() / self.lam

    def base_source(self, rng):
        lam = self.lam
        return rng.source(lambda g, n: g.standard_exponential(n) / lam, key=(self, "base"))

    def sample_residual_base(self, rng, b):
        return rng.standard_exponential() / self.lam

    def sample_tilted_base(self, rng, psi_value):
        return rng.standard_exponential() / (self.lam + psi_value)


class GammaArrival(ArrivalSpec):
    """Gamma(shape, rate) base interarrival; ``Gamma(1/2, 1/2)`` has mean 1."""

    family = "gamma"

    def __init__(self, shape: float, rate: float):
        if shape <= 0 or rate <= 0:
            raise ValueError("shape and rate must be positive")
        self.shape = float(shape)
        self.beta = float(rate)
        super().__init__(stats.gamma(shape, scale=1.0 / rate), theta_max=rate)

    def log_mgf(self, theta):
        if theta >= self.beta:
            raise ValueError(f"theta={theta} outside the MGF domain (< {self.beta})")
        return -self.shape * math.log1p(-theta / self.beta)

    def log_mgf_derivs(self, theta):
        d = self.beta - theta
        return self.shape / d, self.shape / d**2

    def psi(self, theta):
        return self.beta * math.expm1(theta / self.shape)

    def psi_derivs(self, theta):
        v = self.beta / self.shape * math.exp(theta / self.shape)
        return v, v / self.shape

    def psi_of_x(self, x):
        return self.beta * (x ** (1.0 / self.shape) - 1.0)

    def psi_of_excess(self, e):
        return self.beta * math.expm1(math.log1p(e) / self.shape)

    def psi_of_excess_array(self, e):
        return self.beta * np.expm1(np.log1p(np.asarray(e, dtype=float)) / self.shape)

    def sample_base(self, rng):
        return rng.standard_gamma(self.shape) / self.beta

    def base_source(self, rng):
        k, beta = self.shape, self.beta
        return rng.source(lambda g, n: g.standard_gamma(k, n) / beta, key=(self, "base"))

    def sample_residual_base(self, rng, b):
        if b <= 0.0:
            return self.sample_base(rng)
        k, beta = self.shape, self.beta
        tail = special.gammaincc(k, beta * b)
        if tail <= 0.0:
            raise ValueError(f"age {b} lies beyond the numerically representable tail")
        x = special.gammainccinv(k, rng.open_random() * tail) / beta
        return max(float(x) - b, 0.0)

    def sample_tilted_base(self, rng, psi_value):
        return rng.standard_gamma(self.shape) / (self.beta + psi_value)


# ---------------------------------------------------------------------------
# service
# ---------------------------------------------------------------------------


class ServiceSpec:
    """Service-time law.  Subclasses fill in the scalar accessors."""

    family = "user-defined"
    mean: float
    upper: float = math.inf

    def __repr__(self) -> str:
        return f"{type(self).__name__}(mean={self.mean:g})"

    @property
    def bounded(self) -> bool:
        return math.isfinite(self.upper)

    def cdf(self, y: float) -> float:
        return 1.0 - self.sf(y)

    def sf(self, y: float) -> float:
        raise NotImplementedError

    def pdf(self, y: float) -> float:
        raise NotImplementedError

    def ppf(self, p: float) -> float:
        raise NotImplementedError

    def isf(self, p: float) -> float:
        return self.ppf(1.0 - p)

    def sf_array(self, y):
        return np.vectorize(self.sf, otypes=[float])(y)

    def pdf_array(self, y):
        return np.vectorize(self.pdf, otypes=[float])(y)

    def hazard(self, y: float) -> float:
        tail = self.sf(y)
        return math.inf if tail <= 0.0 else self.pdf(y) / tail

    def tail_integral(self, y):
        """``int_y^inf sf(u) du`` in closed form, or ``None`` if unavailable."""
        return None

    def sample(self, rng) -> float:
        return self.isf(rng.open_random())

    def source(self, rng):
        """Zero-argument sampler of service times."""
        return lambda: self.sample(rng)


class ExponentialService(ServiceSpec):
    family = "exponential"

    def __init__(self, mean: float):
        if mean <= 0:
            raise ValueError("mean must be positive")
        self.mean = float(mean)
        self._rate = 1.0 / self.mean

    def sf(self, y):
        return 1.0 if y <= 0.0 else math.exp(-y * self._rate)

    def cdf(self, y):
        return 0.0 if y <= 0.0 else -math.expm1(-y * self._rate)

    def pdf(self, y):
        return 0.0 if y < 0.0 else self._rate * math.exp(-y * self._rate)

    def ppf(self, p):
        return -self.mean * math.log1p(-p)

    def isf(self, p):
        return -self.mean * math.log(p)

    def sf_array(self, y):
        y = np.asarray(y, dtype=float)
        return np.exp(-np.maximum(y, 0.0) * self._rate)

    def pdf_array(self, y):
        y = np.asarray(y, dtype=float)
        return np.where(y >= 0, self._rate * np.exp(-np.maximum(y, 0.0) * self._rate), 0.0)

    def tail_integral(self, y):
        y = np.asarray(y, dtype=float)
        return np.where(y >= 0, self.mean * np.exp(-np.maximum(y, 0.0) * self._rate), self.mean - y)

    def sample(self, rng):
        return self.mean * rng.standard_exponential()

    def source(self, rng):
        m = self.mean
        return rng.source(lambda g, n: m * g.standard_exponential(n), key=(self, "service"))


class UniformService(ServiceSpec):
    family = "uniform"

    def __init__(self, low: float = 0.0, high: float = 1.0):
        if not 0.0 <= low < high:
            raise ValueError("need 0 <= low < high")
        self.low = float(low)
        self.high = float(high)
        self.upper = self.high
        self.mean = 0.5 * (low + high)
        self._w = self.high - self.low

    def sf(self, y):
        if y <= self.low:
            return 1.0
        if y >= self.high:
            return 0.0
        return (self.high - y) / self._w

    def cdf(self, y):
        if y <= self.low:
            return 0.0
        if y >= self.high:
            return 1.0
        return (y - self.low) / self._w

    def pdf(self, y):
        return 1.0 / self._w if self.low <= y <= self.high else 0.0

    def ppf(self, p):
        return self.low + p * self._w

    def isf(self, p):
        return self.high - p * self._w

    def sf_array(self, y):
        y = np.asarray(y, dtype=float)
        return np.clip((self.high - y) / self._w, 0.0, 1.0)

    def pdf_array(self, y):
        y = np.asarray(y, dtype=float)
        return np.where((y >= self.low) & (y <= self.high), 1.0 / self._w, 0.0)

    def tail_integral(self, y):
        y = np.asarray(y, dtype=float)
        d = np.maximum(self.high - np.maximum(y, self.low), 0.0)
        out = d * d / (2.0 * self._w)
        if self.low > 0.0:
            out = out + np.maximum(self.low - y, 0.0)
        return out

    def sample(self, rng):
        return self.low + self._w * rng.random()

    def source(self, rng):
        low, w = self.low, self._w
        return rng.source(lambda g, n: low + w * g.random(n), key=(self, "service"))


class WeibullService(ServiceSpec):
    family = "weibull"

    def __init__(self, shape: float, scale: float = 1.0):
        if shape <= 0 or scale <= 0:
            raise ValueError("shape and scale must be positive")
        self.shape = float(shape)
        self.scale = float(scale)
        self.mean = self.scale * math.gamma(1.0 + 1.0 / self.shape)

    def sf(self, y):
        return 1.0 if y <= 0.0 else math.exp(-((y / self.scale) ** self.shape))

    def cdf(self, y):
        return 0.0 if y <= 0.0 else -math.expm1(-((y / self.scale) ** self.shape))

    def pdf(self, y):
        if y <= 0.0:
            return 0.0
        z = y / self.scale
        return self.shape / self.scale * z ** (self.shape - 1.0) * math.exp(-(z**self.shape))

    def ppf(self, p):
        return self.scale * (-math.log1p(-p)) ** (1.0 / self.shape)

    def isf(self, p):
        return self.scale * (-math.log(p)) ** (1.0 / self.shape)

    def sf_array(self, y):
        y = np.maximum(np.asarray(y, dtype=float), 0.0)
        return np.exp(-((y / self.scale) ** self.shape))

    def tail_integral(self, y):
        y = np.asarray(y, dtype=float)
        yp = np.maximum(y, 0.0)
        inner = self.mean * special.gammaincc(1.0 / self.shape, (yp / self.scale) ** self.shape)
        return inner + np.maximum(-y, 0.0)


class LognormalService(ServiceSpec):
    family = "lognormal"

    def __init__(self, mu: float, sigma: float):
        if sigma <= 0:
            raise ValueError("sigma must be positive")
        self.mu = float(mu)
        self.sigma = float(sigma)
        self.mean = math.exp(self.mu + 0.5 * self.sigma**2)

    def _z(self, y):
        return (math.log(y) - self.mu) / self.sigma

    def sf(self, y):
        return 1.0 if y <= 0.0 else 0.5 * math.erfc(self._z(y) / math.sqrt(2.0))

    def cdf(self, y):
        return 0.0 if y <= 0.0 else 0.5 * math.erfc(-self._z(y) / math.sqrt(2.0))

    def pdf(self, y):
        if y <= 0.0:
            return 0.0
        z = self._z(y)
        return math.exp(-0.5 * z * z) / (y * self.sigma * math.sqrt(2.0 * math.pi))

    def ppf(self, p):
        return math.exp(self.mu + self.sigma * _STD_NORMAL.inv_cdf(p))

    def isf(self, p):
        return math.exp(self.mu - self.sigma * _STD_NORMAL.inv_cdf(p))

    def sf_array(self, y):
        y = np.asarray(y, dtype=float)
        with np.errstate(divide="ignore"):
            z = (np.log(np.maximum(y, 1e-300)) - self.mu) / self.sigma
        return np.where(y > 0, special.ndtr(-z), 1.0)

    def tail_integral(self, y):
        y = np.asarray(y, dtype=float)
        with np.errstate(divide="ignore"):
            z = (np.log(np.maximum(y, 1e-300)) - self.mu) / self.sigma
        inner = self.mean * special.ndtr(self.sigma - z) - np.maximum(y, 0.0) * special.ndtr(-z)
        return np.where(y > 0, inner, self.mean - y)


class UserDefinedService(ServiceSpec):
    """Service law from user callables; ``cdf``, ``pdf`` and ``ppf`` are required."""

    def __init__(
        self,
        cdf: Callable[[float], float],
        pdf: Callable[[float], float],
        ppf: Callable[[float], float],
        upper: float = math.inf,
        mean: Optional[float] = None,
        sf: Optional[Callable[[float], float]] = None,
    ):
        self._cdf, self._pdf, self._ppf, self._sf = cdf, pdf, ppf, sf
        self.upper = float(upper)
        if mean is None:
            hi = self.upper if self.bounded else math.inf
            mean = integrate.quad(lambda u: self.sf(u), 0.0, hi, limit=200)[0]
        self.mean = float(mean)

    def sf(self, y):
        if y <= 0.0:
            return 1.0
        if y >= self.upper:
            return 0.0
        return self._sf(y) if self._sf is not None else 1.0 - self._cdf(y)

    def cdf(self, y):
        return 1.0 - self.sf(y)

    def pdf(self, y):
        return self._pdf(y) if 0.0 <= y <= self.upper else 0.0

    def ppf(self, p):
        return self._ppf(p)


# ---------------------------------------------------------------------------
# s-scaled sampling helpers
# ---------------------------------------------------------------------------


def sample_interarrival(spec: ArrivalSpec, s: int, age: float, rng) -> float:
    """Time to the next arrival of an ``s``-scaled system whose last arrival was ``age`` ago."""
    if age < 0:
        raise ValueError("age must be non-negative")
    return spec.sample_residual_base(rng, s * age) / s


def sample_tilted_interarrival(spec: ArrivalSpec, s: int, c: float, rng) -> tuple[float, float]:
    """Tilted interarrival draw for tilt level ``c >= 0``.

    Returns ``(U, log_weight)`` with ``U`` drawn from
    ``exp(-s psi(c) y + c) P(U in dy)`` and ``log_weight = s psi(c) U - c``.
    """
    if c < 0:
        raise ValueError("tilt level c must be non-negative")
    p = spec.psi(c)
    u0 = spec.sample_tilted_base(rng, p)
    return u0 / s, p * u0 - c


def sample_tilted_service(spec: ServiceSpec, theta: float, rem: float, rng) -> tuple[float, float]:
    """Service draw tilted to favour ``V > rem`` by the factor ``exp(theta)``.

    Returns ``(V, log_weight)`` with
    ``log_weight = log(e^theta sf(rem) + cdf(rem)) - theta * [V > rem]``.
    """
    if theta < 0:
        raise ValueError("theta must be non-negative")
    if theta == 0.0 or rem >= spec.upper:
        return spec.sample(rng), 0.0
    tail = spec.sf(rem)
    em1 = math.expm1(theta)
    z = 1.0 + em1 * tail
    if rng.random() * z < (em1 + 1.0) * tail:
        return spec.isf(rng.open_random() * tail), math.log(z) - theta
    return spec.ppf(rng.open_random() * (1.0 - tail)), math.log(z)


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------


@dataclass
class Check:
    passed: bool
    values: dict = field(default_factory=dict)
    message: str = ""


@dataclass
class Diagnostics:
    checks: dict[str, Check]

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks.values())

    def __getitem__(self, name: str) -> Check:
        return self.checks[name]


def validate_spec(
    arrival: ArrivalSpec,
    service: ServiceSpec,
    theta_probe: float = 50.0,
    n_theta: int = 25,
    technical_bound: float = 10.0,
    steep_bound: float = 1e6,
    hazard_tail: float = 1e-9,
    hazard_bound: float = 5.0,
    n_hazard: int = 200,
) -> Diagnostics:
    """Finite probes of the model assumptions; never raises."""
    checks: dict[str, Check] = {}

    rho = arrival.rate * service.mean
    checks["quality_driven"] = Check(rho < 1.0, {"rho": rho})

    thetas = np.geomspace(1e-2, theta_probe, n_theta)
    try:
        vals = []
        slopes = []
        for th in thetas:
            p = arrival.psi(float(th))
            d1, _ = arrival.psi_derivs(float(th))
            vals.append(th * d1 / p)
            slopes.append(d1)
        vals = np.array(vals)
        tail = vals[n_theta // 2 :]
        ok = bool(np.all(np.diff(tail) > -1e-9 * np.abs(tail[1:])) and vals[-1] >= technical_bound)
        checks["technical"] = Check(ok, {"theta": thetas.tolist(), "theta_dlogpsi": vals.tolist()})
        checks["steep"] = Check(bool(max(slopes) > steep_bound), {"psi_prime_max": float(max(slopes))})
    except (ConvergenceError, ValueError, OverflowError, ZeroDivisionError) as exc:
        checks["technical"] = Check(False, message=str(exc))
        checks["steep"] = Check(False, message=str(exc))

    y_hi = service.upper if service.bounded else service.isf(hazard_tail)
    ys = np.linspace(y_hi / n_hazard, y_hi, n_hazard)
    if service.bounded:
        ys = ys[:-1]
    yh = np.array([y * service.hazard(float(y)) for y in ys])
    tail = yh[len(yh) // 2 :]
    ok = bool(np.all(np.diff(tail) > -1e-9 * np.abs(tail[1:])) and yh[-1] >= hazard_bound)
    checks["light_tail"] = Check(ok, {"y": ys.tolist(), "y_hazard": yh.tolist()})

    return Diagnostics(checks)
