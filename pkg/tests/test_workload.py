import numpy as np
import pytest

from slice_placement.config import TopologyConfig, WorkloadConfig
from slice_placement.errors import ConfigError
from slice_placement.model import build_psn
from slice_placement.workload import (
    NsprRequest,
    arrival_rate,
    arrival_sequence,
    generate_nspr,
    offered_load,
)


def test_vnf_count_within_range() -> None:
    rng = np.random.default_rng(0)
    cfg = WorkloadConfig()
    for _ in range(500):
        nspr = generate_nspr(rng, cfg)
        assert 5 <= nspr.size <= 20
        assert len(nspr.vlinks) == nspr.size - 1
        assert all(2 <= v.req_cpu <= 6 and 2 <= v.req_ram <= 6 for v in nspr.vnfs)
        assert all(1 <= vl.req_bw <= 4 for vl in nspr.vlinks)


def test_degenerate_ranges() -> None:
    rng = np.random.default_rng(0)
    cfg = WorkloadConfig(vnf_count_range=[1, 1], cpu_range=[2, 2])
    nspr = generate_nspr(rng, cfg)
    assert nspr.size == 1
    assert nspr.vnfs[0].req_cpu == 2
    assert nspr.vlinks == ()


def test_zero_pairs_are_resampled() -> None:
    rng = np.random.default_rng(5)
    cfg = WorkloadConfig(vnf_count_range=[3, 3], cpu_range=[0, 1], ram_range=[0, 1])
    for _ in range(200):
        assert all(v.req_cpu + v.req_ram > 0 for v in generate_nspr(rng, cfg).vnfs)


def test_mean_vnf_count_matches_midpoint() -> None:
    rng = np.random.default_rng(11)
    cfg = WorkloadConfig()
    sizes = [generate_nspr(rng, cfg).size for _ in range(10_000)]
    assert np.mean(sizes) == pytest.approx(12.5, rel=0.02)


def test_arrival_rate_solves_load_equation() -> None:
    cfg = WorkloadConfig(
        vnf_count_range=[5, 5], cpu_range=[10, 10], target_load=0.5, mean_lifetime=100.0
    )
    assert arrival_rate(cfg, 1000) == pytest.approx(0.1)


def test_single_arrival_horizon() -> None:
    psn = build_psn(TopologyConfig())
    requests = arrival_sequence(WorkloadConfig(horizon=1), psn)
    assert len(requests) == 1
    assert requests[0].arrival_time > 0
    assert requests[0].lifetime > 0


def test_sequences_are_reproducible_and_ordered() -> None:
    psn = build_psn(TopologyConfig())
    cfg = WorkloadConfig(horizon=200, seed=9)
    first = arrival_sequence(cfg, psn)
    assert first == arrival_sequence(cfg, psn)
    times = [r.arrival_time for r in first]
    assert times == sorted(times)
    assert first != arrival_sequence(WorkloadConfig(horizon=200, seed=10), psn)


def test_offered_load_converges_to_target() -> None:
    psn = build_psn(TopologyConfig())
    cfg = WorkloadConfig(vnf_count_range=[1, 3], horizon=20_000, target_load=0.8, seed=4)
    requests = arrival_sequence(cfg, psn)
    assert offered_load(requests, psn.total_cpu) == pytest.approx(0.8, rel=0.05)


def test_request_validation() -> None:
    rng = np.random.default_rng(0)
    nspr = generate_nspr(rng, WorkloadConfig())
    with pytest.raises(ConfigError):
        NsprRequest(nspr, 1.0, 0.0)
    with pytest.raises(ConfigError):
        NsprRequest(nspr, -1.0, 2.0)
    assert NsprRequest(nspr, 1.0, 2.5).departure_time == 3.5
