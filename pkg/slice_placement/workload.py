"""Slice request generation and the Poisson arrival/departure process."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import List, Sequence

import numpy as np

from .config import WorkloadConfig
from .errors import ConfigError
from .model import NsprGraph, PsnGraph

_LOGGER = logging.getLogger(__name__)


@dataclass(frozen=True)
class NsprRequest:
    nspr: NsprGraph
    arrival_time: float
    lifetime: float

    def __post_init__(self) -> None:
        if self.lifetime <= 0 or self.arrival_time < 0:
            raise ConfigError("Requests need lifetime > 0 and arrival_time >= 0")

    @property
    def departure_time(self) -> float:
        return self.arrival_time + self.lifetime


def _uniform(rng: np.random.Generator, bounds: Sequence[int], size: int) -> np.ndarray:
    return rng.integers(bounds[0], bounds[1] + 1, size=size)


def generate_nspr(rng: np.random.Generator, cfg: WorkloadConfig) -> NsprGraph:
    """Draw one chain request; every count and requirement is uniform in its range."""
    n_vnfs = int(_uniform(rng, cfg.vnf_count_range, 1)[0])
    cpu = _uniform(rng, cfg.cpu_range, n_vnfs)
    ram = _uniform(rng, cfg.ram_range, n_vnfs)
    # Resample the rare (0, 0) pair when both ranges include zero.
    for i in np.flatnonzero((cpu == 0) & (ram == 0)):
        while cpu[i] == 0 and ram[i] == 0:
            cpu[i] = _uniform(rng, cfg.cpu_range, 1)[0]
            ram[i] = _uniform(rng, cfg.ram_range, 1)[0]
    bw = _uniform(rng, cfg.bw_range, n_vnfs - 1)
    return NsprGraph.chain(
        [(int(c), int(r)) for c, r in zip(cpu, ram)],
        [int(b) for b in bw],
    )


def expected_slice_cpu(cfg: WorkloadConfig) -> float:
    mean_vnfs = (cfg.vnf_count_range[0] + cfg.vnf_count_range[1]) / 2.0
    mean_cpu = (cfg.cpu_range[0] + cfg.cpu_range[1]) / 2.0
    return mean_vnfs * mean_cpu


def arrival_rate(cfg: WorkloadConfig, total_cpu: int) -> float:
    """Poisson rate making lambda * T * E[slice cpu] / total_cpu equal the target load."""
    return cfg.target_load * total_cpu / (cfg.mean_lifetime * expected_slice_cpu(cfg))


def arrival_sequence(cfg: WorkloadConfig, psn: PsnGraph) -> List[NsprRequest]:
    cfg.validate()
    rate = arrival_rate(cfg, psn.total_cpu)
    arrivals_seq, lifetimes_seq, requests_seq = np.random.SeedSequence(cfg.seed).spawn(3)
    arrivals_rng = np.random.default_rng(arrivals_seq)
    lifetimes_rng = np.random.default_rng(lifetimes_seq)
    requests_rng = np.random.default_rng(requests_seq)

    times = np.cumsum(arrivals_rng.exponential(1.0 / rate, size=cfg.horizon))
    lifetimes = lifetimes_rng.exponential(cfg.mean_lifetime, size=cfg.horizon)
    lifetimes = np.maximum(lifetimes, np.finfo(float).tiny)
    requests = [
        NsprRequest(generate_nspr(requests_rng, cfg), float(t), float(life))
        for t, life in zip(times, lifetimes)
    ]
    _LOGGER.debug(
        "Generated %s arrivals: rate=%.4f/tick target_load=%.2f", len(requests), rate, cfg.target_load
    )
    return requests


def offered_load(requests: Sequence[NsprRequest], total_cpu: int) -> float:
    """Empirical offered CPU load of a request sequence."""
    if not requests:
        return 0.0
    span = requests[-1].arrival_time
    if span <= 0:
        return 0.0
    work = sum(r.lifetime * r.nspr.total_cpu for r in requests)
    return work / (span * total_cpu)
