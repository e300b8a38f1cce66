"""Experiment files: a YAML document validated against a strict schema."""
from __future__ import annotations

from pathlib import Path
from typing import Annotated, Literal, Optional, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, PositiveFloat, PositiveInt, model_validator
from scipy import stats

from . import dist
from .estimate import BandSettings, RunConfig
from .sampler import Model

__all__ = ["ExperimentFile", "load_experiment"]


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class ExponentialArrivalCfg(_Strict):
    family: Literal["exponential"]
    rate: PositiveFloat = 1.0

    def build(self):
        return dist.ExponentialArrival(self.rate)


class GammaArrivalCfg(_Strict):
    family: Literal["gamma"]
    shape: PositiveFloat
    rate: PositiveFloat

    def build(self):
        return dist.GammaArrival(self.shape, self.rate)


class ScipyArrivalCfg(_Strict):
    """Any non-negative ``scipy.stats`` law, e.g. ``{name: weibull_min, args: [1.5]}``."""

    family: Literal["scipy"]
    name: str
    args: list[float] = []
    kwargs: dict[str, float] = {}

    def build(self):
        return dist.ArrivalSpec(getattr(stats, self.name)(*self.args, **self.kwargs))


class ExponentialServiceCfg(_Strict):
    family: Literal["exponential"]
    mean: PositiveFloat

    def build(self):
        return dist.ExponentialService(self.mean)


class UniformServiceCfg(_Strict):
    family: Literal["uniform"]
    low: float = Field(0.0, ge=0.0)
    high: PositiveFloat = 1.0

    @model_validator(mode="after")
    def _order(self):
        if not self.low < self.high:
            raise ValueError("uniform service needs low < high")
        return self

    def build(self):
        return dist.UniformService(self.low, self.high)


class WeibullServiceCfg(_Strict):
    family: Literal["weibull"]
    shape: PositiveFloat
    scale: PositiveFloat = 1.0

    def build(self):
        return dist.WeibullService(self.shape, self.scale)


class LognormalServiceCfg(_Strict):
    family: Literal["lognormal"]
    mu: float
    sigma: PositiveFloat

    def build(self):
        return dist.LognormalService(self.mu, self.sigma)


class ScipyServiceCfg(_Strict):
    family: Literal["scipy"]
    name: str
    args: list[float] = []
    kwargs: dict[str, float] = {}

    def build(self):
        d = getattr(stats, self.name)(*self.args, **self.kwargs)
        lo, hi = d.support()
        if lo < 0:
            raise ValueError("service law must live on [0, inf)")
        return dist.UserDefinedService(
            cdf=lambda y: float(d.cdf(y)),
            pdf=lambda y: float(d.pdf(y)),
            ppf=lambda p: float(d.ppf(p)),
            upper=float(hi),
            mean=float(d.mean()),
            sf=lambda y: float(d.sf(y)),
        )


ArrivalCfg = Annotated[
    Union[ExponentialArrivalCfg, GammaArrivalCfg, ScipyArrivalCfg], Field(discriminator="family")
]
ServiceCfg = Annotated[
    Union[
        ExponentialServiceCfg, UniformServiceCfg, WeibullServiceCfg, LognormalServiceCfg, ScipyServiceCfg
    ],
    Field(discriminator="family"),
]


class ModelCfg(_Strict):
    arrival: ArrivalCfg
    service: ServiceCfg
    s: list[PositiveInt] = Field(min_length=1)


class BandCfg(_Strict):
    variant: Literal["general", "truncated"] = "truncated"
    c_star: Optional[PositiveFloat] = None
    c1: float = Field(1.1, ge=0.0)
    eta: Optional[float] = Field(None, ge=0.0)
    gamma: float = Field(1.0, ge=0.0)


class HorizonCfg(_Strict):
    c: PositiveFloat = 1.0
    T: Optional[PositiveFloat] = None


class EstimatorCfg(_Strict):
    method: Literal["is", "cmc", "both"] = "both"
    batches: int = Field(20, ge=2)
    cpu_seconds: Optional[PositiveFloat] = None
    sim_time: Optional[PositiveFloat] = None
    cycles: Optional[PositiveInt] = None
    event_budget: PositiveInt = 100_000_000
    eps_trunc: PositiveFloat = 1e-12
    k_cap: PositiveInt = 1_000_000

    @model_validator(mode="after")
    def _one_rule(self):
        n = sum(v is not None for v in (self.cpu_seconds, self.sim_time, self.cycles))
        if n != 1:
            raise ValueError("set exactly one of cpu_seconds, sim_time, cycles")
        return self


class PathDumpCfg(_Strict):
    t_points: PositiveInt = 201
    y_points: PositiveInt = 101
    y_max: Optional[PositiveFloat] = None
    require_overflow: bool = True
    max_attempts: PositiveInt = 100_000


class OutputCfg(_Strict):
    dir: str = "results"


class ExperimentFile(_Strict):
    name: str = "experiment"
    model: ModelCfg
    band: BandCfg = BandCfg()
    delta: Optional[PositiveFloat] = None
    horizon: HorizonCfg = HorizonCfg()
    estimator: EstimatorCfg
    path_dump: PathDumpCfg = PathDumpCfg()
    output: OutputCfg = OutputCfg()
    seed: int = Field(0, ge=0, lt=2**64)

    def with_overrides(self, **kw) -> "ExperimentFile":
        """Copy with CLI overrides applied; ``None`` values are ignored."""
        data = self.model_dump()
        est = data["estimator"]
        if kw.get("seed") is not None:
            data["seed"] = kw["seed"]
        if kw.get("batches") is not None:
            est["batches"] = kw["batches"]
        if kw.get("method") is not None:
            est["method"] = kw["method"]
        rules = {k: kw.get(k) for k in ("cpu_seconds", "sim_time", "cycles")}
        if any(v is not None for v in rules.values()):
            for k, v in rules.items():
                est[k] = v
        if kw.get("out_dir") is not None:
            data["output"]["dir"] = kw["out_dir"]
        return ExperimentFile.model_validate(data)

    def arrival_spec(self) -> dist.ArrivalSpec:
        return self.model.arrival.build()

    def service_spec(self) -> dist.ServiceSpec:
        return self.model.service.build()

    def run_config(self, s: int, arrival=None, service=None) -> RunConfig:
        arrival = self.arrival_spec() if arrival is None else arrival
        service = self.service_spec() if service is None else service
        b, e = self.band, self.estimator
        return RunConfig(
            model=Model(arrival, service, int(s)),
            band=BandSettings(b.variant, b.c_star, b.c1, b.eta, b.gamma),
            delta=self.delta,
            c=self.horizon.c,
            T=self.horizon.T,
            batches=e.batches,
            cpu_seconds=e.cpu_seconds,
            sim_time=e.sim_time,
            cycles=e.cycles,
            seed=self.seed,
            event_budget=e.event_budget,
            eps_trunc=e.eps_trunc,
            k_cap=e.k_cap,
        )


def load_experiment(path: Union[str, Path]) -> ExperimentFile:
    with open(path, "r", encoding="utf-8") as fh:
        data = yaml.safe_load(fh)
    if not isinstance(data, dict):
        raise ValueError(f"{path}: expected a mapping at the top level")
    return ExperimentFile.model_validate(data)
