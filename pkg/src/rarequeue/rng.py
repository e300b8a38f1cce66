"""Named, reproducible random streams.

Every stream is a Philox generator keyed by ``(seed, name)`` through
:class:`numpy.random.SeedSequence`, so the draws of one purpose (the
regenerative chain, the importance-sampling branch, ...) never depend on
how many draws another purpose consumed.  Scalar draws are served from
pre-generated blocks because per-call numpy overhead dominates an
event-driven simulation loop.
"""
from __future__ import annotations

import zlib

import numpy as np

__all__ = ["Stream", "stream_for"]

_BLOCK = 4096


def _name_key(name: str) -> int:
    return zlib.crc32(name.encode("utf-8"))


class Stream:
    """Buffered scalar view of a counter-based generator."""

    def __init__(self, seed: int, name: str = "root", block: int = _BLOCK):
        self.seed = int(seed)
        self.name = name
        self._ss = np.random.SeedSequence(entropy=self.seed, spawn_key=(_name_key(name),))
        self.generator = np.random.Generator(np.random.Philox(self._ss))
        self._block = block
        self._u: list[float] = []
        self._e: list[float] = []
        self._n: list[float] = []
        self._g: dict[float, list[float]] = {}
        self._sources: dict = {}

    def child(self, name: str) -> "Stream":
        return Stream(self.seed, f"{self.name}/{name}", self._block)

    def random(self) -> float:
        """Uniform on [0, 1)."""
        try:
            return self._u.pop()
        except IndexError:
            self._u = self.generator.random(self._block).tolist()
            return self._u.pop()

    def open_random(self) -> float:
        """Uniform on (0, 1); safe to feed into quantile functions."""
        u = self.random()
        while u == 0.0:
            u = self.random()
        return u

    def standard_exponential(self) -> float:
        try:
            return self._e.pop()
        except IndexError:
            self._e = self.generator.standard_exponential(self._block).tolist()
            return self._e.pop()

    def standard_normal(self) -> float:
        try:
            return self._n.pop()
        except IndexError:
            self._n = self.generator.standard_normal(self._block).tolist()
            return self._n.pop()

    def source(self, fill, key=None):
        """Zero-argument sampler served from blocks ``fill(generator, n)``.

        Used for the draws made once per simulated arrival, where even a
        method lookup per call is noticeable.  Sources with a ``key`` are
        cached so that repeated requests share one buffer.
        """
        if key is not None:
            cached = self._sources.get(key)
            if cached is not None:
                return cached
        buf: list[float] = []
        gen, block = self.generator, self._block

        def draw() -> float:
            try:
                return buf.pop()
            except IndexError:
                buf.extend(fill(gen, block).tolist())
                return buf.pop()

        if key is not None:
            self._sources[key] = draw
        return draw

    def standard_gamma(self, shape: float) -> float:
        buf = self._g.get(shape)
        if not buf:
            buf = self.generator.standard_gamma(shape, self._block).tolist()
            self._g[shape] = buf
        return buf.pop()


def stream_for(seed: int, name: str) -> Stream:
    return Stream(seed, name)
