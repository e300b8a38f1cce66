"""Shared generators for the queue and acceptance tests."""
import numpy as np

from rarequeue.queue import SystemState, initial_state
from rarequeue.rng import Stream
from rarequeue.sampler import Model, run_original


def feasibility_gaps(band, n=200_001):
    """Fine y-scan plus the points where either band edge crosses an integer."""
    ys = np.linspace(0.0, band.y_hi, n)
    if band.service.bounded:
        ys = ys[:-1]
    lo, hi = band.profile(ys)
    extra = []
    for edge in (lo, hi):
        f = np.floor(edge)
        idx = np.flatnonzero(np.diff(f) != 0)
        # crossing point by linear interpolation, probed on both sides
        for i in idx:
            k = max(f[i], f[i + 1])
            w = (k - edge[i]) / (edge[i + 1] - edge[i])
            y0 = ys[i] + w * (ys[i + 1] - ys[i])
            extra += [y0 - 1e-12, y0, y0 + 1e-12]
    probe = np.clip(np.concatenate((ys, extra)), 0.0, ys[-1])
    return band.integer_gaps(probe)


def random_states(band, n, seed):
    """Perturbed fluid states, typical chain states and a few corner cases."""
    rng = np.random.default_rng(seed)
    base = initial_state(band)
    y_top = min(band.y_hi, 3.0 * band.service.mean + 1.0) * 0.999999
    model = Model(band.arrival, band.service, band.s)
    chain = base.copy()
    sim = Stream(seed, "random-states")
    out = []
    for i in range(n):
        kind = i % 4
        if kind == 0:
            r = base.residuals() * np.exp(rng.normal(0.0, 0.15, size=base.busy))
            if rng.random() < 0.5:
                r = np.r_[r, rng.random(rng.integers(0, 8)) * y_top]
        elif kind == 1:
            run_original(chain, model, chain.clock + float(rng.exponential(0.7)), sim)
            r = chain.residuals()
        elif kind == 2:
            r = base.residuals().copy()
            drop = rng.choice(r.size, size=min(r.size, int(rng.integers(0, 4))), replace=False)
            r = np.delete(r, drop)
        else:
            m = int(rng.integers(0, band.s + 1))
            r = rng.random(m) * y_top
        r = np.clip(r, 1e-9, y_top)
        out.append(SystemState(band.s, r[: band.s]))
    return out
