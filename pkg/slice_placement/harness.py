"""Simulation loop, training/evaluation protocol and execution-time benchmarks."""

from __future__ import annotations

import csv
import heapq
import logging
import statistics
import time
from dataclasses import dataclass, replace
from functools import partial
from pathlib import Path
from typing import IO, Callable, List, Optional, Sequence, Tuple

import numpy as np

from .agent import (
    AgentParams,
    EpisodeResult,
    RolloutPool,
    load_checkpoint,
    play_episode,
    save_checkpoint,
    update,
)
from .config import RunConfig
from .env import SlicePlacementEnv
from .errors import ConfigError, NumericalError, ReleaseError
from .fixtures import dump_requests, load_requests
from .heuristic import heu_place
from .model import NsprGraph, PsnGraph, allocate, build_psn, release
from .objective import Mapping, ObjectiveWeights, objective_value
from .oracle import exact_place
from .workload import NsprRequest, arrival_sequence, generate_nspr

_LOGGER = logging.getLogger(__name__)

METRICS_COLUMNS = (
    "phase",
    "engine",
    "beta",
    "arrivals",
    "accepted",
    "acceptance_ratio",
    "mean_return",
    "mean_objective",
    "wall_s",
)
TIMING_COLUMNS = ("engine", "vnfs", "nodes", "mean_s", "sd_s")
EVAL_PHASE = "eval"

METRICS_FILE = "metrics.csv"
EVAL_FILE = "eval.csv"
TIMING_FILE = "timing.csv"
CHECKPOINT_FILE = "checkpoint.npz"
LAST_GOOD_CHECKPOINT_FILE = "checkpoint_last_good.npz"
ARRIVALS_FILE = "arrivals.txt"


@dataclass
class PhaseMetrics:
    phase: int
    engine: str
    beta: float
    arrivals: int = 0
    accepted: int = 0
    return_sum: float = 0.0
    objective_sum: float = 0.0
    wall_s: float = 0.0
    vacuous: bool = False

    @property
    def acceptance_ratio(self) -> float:
        """Accepted over arrived; 1.0 for a phase without arrivals."""
        if self.arrivals == 0:
            return 1.0
        return self.accepted / self.arrivals

    @property
    def mean_return(self) -> float:
        return self.return_sum / self.arrivals if self.arrivals else 0.0

    @property
    def mean_objective(self) -> float:
        return self.objective_sum / self.accepted if self.accepted else 0.0

    def merge(self, other: "PhaseMetrics") -> None:
        self.arrivals += other.arrivals
        self.accepted += other.accepted
        self.return_sum += other.return_sum
        self.objective_sum += other.objective_sum
        self.wall_s += other.wall_s


@dataclass(frozen=True)
class TimingRow:
    engine: str
    vnfs: int
    nodes: int
    mean_s: float
    sd_s: float


@dataclass
class PlacementOutcome:
    mapping: Optional[Mapping]
    episode_return: float

    @property
    def accepted(self) -> bool:
        return self.mapping is not None


# -----------------------------------------------------------------------------


class PlacementEngine:
    """Places one request on the live PSN, leaving an accepted mapping allocated."""

    name = ""

    def __init__(self, cfg: RunConfig) -> None:
        self.cfg = cfg

    @property
    def beta(self) -> float:
        return 0.0

    def place(self, psn: PsnGraph, nspr: NsprGraph, arrival_idx: int) -> PlacementOutcome:
        raise NotImplementedError

    def _commit(self, psn: PsnGraph, nspr: NsprGraph, mapping: Optional[Mapping]) -> PlacementOutcome:
        reward = self.cfg.reward
        if mapping is None:
            return PlacementOutcome(None, reward.r_reject)
        weights = ObjectiveWeights(reward.r_success, reward.c2_r, reward.c3_r)
        episode_return = objective_value(psn, nspr, mapping, weights)
        allocate(psn, mapping, nspr)
        return PlacementOutcome(mapping, episode_return)


class HeuEngine(PlacementEngine):
    name = "heu"

    def place(self, psn: PsnGraph, nspr: NsprGraph, arrival_idx: int) -> PlacementOutcome:
        return self._commit(psn, nspr, heu_place(psn, nspr, self.cfg.heuristic.c2_norm))


class OracleEngine(PlacementEngine):
    name = "oracle"

    def place(self, psn: PsnGraph, nspr: NsprGraph, arrival_idx: int) -> PlacementOutcome:
        weights = ObjectiveWeights.from_config(self.cfg.objective, nspr)
        result = exact_place(psn, nspr, weights)
        if not result.certified:
            _LOGGER.warning("Arrival %s: oracle result not certified optimal", arrival_idx)
        return self._commit(psn, nspr, None if result.best is None else result.best[0])


class AgentEngine(PlacementEngine):
    """DRL or HA-DRL placement; learns on-policy when ``learn`` is set."""

    def __init__(
        self,
        cfg: RunConfig,
        name: str,
        params: AgentParams,
        *,
        learn: bool,
        pool: Optional[RolloutPool] = None,
    ) -> None:
        super().__init__(cfg)
        self.name = name
        self.params = params
        self.learn = learn
        self.pool = pool
        self.env = SlicePlacementEnv(cfg.reward)

    @property
    def beta(self) -> float:
        return self.params.hyper.beta if self.name == "hadrl" else 0.0

    def _episode(
        self,
        env: SlicePlacementEnv,
        psn: PsnGraph,
        nspr: NsprGraph,
        rng: Optional[np.random.Generator],
    ) -> Callable[[], EpisodeResult]:
        return partial(
            play_episode,
            env,
            psn,
            nspr,
            self.params,
            rng=rng,
            shaping=self.name == "hadrl",
            greedy=not self.learn,
            c2_norm=self.cfg.heuristic.c2_norm,
        )

    def place(self, psn: PsnGraph, nspr: NsprGraph, arrival_idx: int) -> PlacementOutcome:
        seed = self.params.hyper.seed
        extra = []
        if self.learn and self.pool is not None:
            for worker in range(1, self.pool.workers):
                rng = np.random.default_rng([seed, arrival_idx, worker])
                extra.append(
                    self._episode(SlicePlacementEnv(self.cfg.reward), psn.clone(), nspr, rng)
                )
        explorations = self.pool.run(extra) if extra and self.pool is not None else []

        rng = np.random.default_rng([seed, arrival_idx, 0]) if self.learn else None
        live = self._episode(self.env, psn, nspr, rng)()
        if self.learn:
            for episode in [live, *explorations]:
                if episode.trajectory.steps:
                    self.params, diagnostics = update(self.params, episode.trajectory)
                    _LOGGER.debug("Arrival %s update: %s", arrival_idx, diagnostics)
        _LOGGER.debug(
            "Arrival %s: %s return=%.3f",
            arrival_idx,
            "accepted" if live.accepted else "rejected",
            live.total_return,
        )
        return PlacementOutcome(live.mapping, live.total_return)


def make_engine(
    cfg: RunConfig,
    params: Optional[AgentParams] = None,
    *,
    learn: bool = False,
    pool: Optional[RolloutPool] = None,
) -> PlacementEngine:
    engine = cfg.run.engine
    if engine == "heu":
        return HeuEngine(cfg)
    if engine == "oracle":
        return OracleEngine(cfg)
    if params is None:
        raise ConfigError(f"Engine {engine!r} needs agent parameters")
    return AgentEngine(cfg, engine, params, learn=learn, pool=pool)


# -----------------------------------------------------------------------------


class _MetricsWriter:
    def __init__(self, path: Path) -> None:
        path.parent.mkdir(parents=True, exist_ok=True)
        self._file: IO[str] = open(path, "w", encoding="utf-8", newline="")
        self._writer = csv.writer(self._file, lineterminator="\n")
        self._writer.writerow(METRICS_COLUMNS)

    def write(self, metrics: PhaseMetrics, phase: object, record_wall_clock: bool) -> None:
        self._writer.writerow(
            [
                phase,
                metrics.engine,
                f"{metrics.beta:g}",
                metrics.arrivals,
                metrics.accepted,
                f"{metrics.acceptance_ratio:.6f}",
                f"{metrics.mean_return:.6f}",
                f"{metrics.mean_objective:.6f}",
                f"{metrics.wall_s if record_wall_clock else 0.0:.6f}",
            ]
        )
        self._file.flush()

    def close(self) -> None:
        self._file.close()


def _objective_of(psn: PsnGraph, nspr: NsprGraph, mapping: Mapping, cfg: RunConfig) -> float:
    """Objective of an allocated mapping, scored on the residuals it was placed on."""
    release(psn, mapping, nspr)
    try:
        return objective_value(psn, nspr, mapping, ObjectiveWeights.from_config(cfg.objective, nspr))
    finally:
        allocate(psn, mapping, nspr)


def simulate(
    engine: PlacementEngine,
    psn: PsnGraph,
    requests: Sequence[NsprRequest],
    arrivals_per_phase: int,
    on_phase: Optional[Callable[[PhaseMetrics], None]] = None,
) -> List[PhaseMetrics]:
    """Replay arrivals in order, releasing departures first; audits the PSN at the end."""
    departures: List[Tuple[float, int, Mapping, NsprGraph]] = []
    phases: List[PhaseMetrics] = []
    current = PhaseMetrics(1, engine.name, engine.beta)
    started = time.perf_counter()

    def _close_phase() -> None:
        nonlocal current, started
        current.wall_s = time.perf_counter() - started
        phases.append(current)
        _LOGGER.info(
            "Phase %s [%s beta=%g]: acceptance=%.3f (%s/%s) mean_return=%.3f",
            current.phase,
            current.engine,
            current.beta,
            current.acceptance_ratio,
            current.accepted,
            current.arrivals,
            current.mean_return,
        )
        if on_phase is not None:
            on_phase(current)
        current = PhaseMetrics(current.phase + 1, engine.name, engine.beta)
        started = time.perf_counter()

    for arrival_idx, request in enumerate(requests):
        while departures and departures[0][0] <= request.arrival_time:
            _, _, mapping, nspr = heapq.heappop(departures)
            release(psn, mapping, nspr)

        outcome = engine.place(psn, request.nspr, arrival_idx)
        current.arrivals += 1
        current.return_sum += outcome.episode_return
        if outcome.mapping is not None:
            current.accepted += 1
            current.objective_sum += _objective_of(psn, request.nspr, outcome.mapping, engine.cfg)
            heapq.heappush(
                departures, (request.departure_time, arrival_idx, outcome.mapping, request.nspr)
            )
        if current.arrivals == arrivals_per_phase:
            _close_phase()

    if current.arrivals:
        _close_phase()

    while departures:
        _, _, mapping, nspr = heapq.heappop(departures)
        release(psn, mapping, nspr)
    if not psn.at_maxima() or psn.allocations:
        raise ReleaseError("Resource audit failed: residuals differ from installed maxima")
    return phases


# -----------------------------------------------------------------------------


def _requests_for(cfg: RunConfig, psn: PsnGraph, count: int) -> List[NsprRequest]:
    if cfg.run.arrivals_file:
        path = Path(cfg.run.arrivals_file)
        if not path.exists():
            raise ConfigError(f"Arrivals file not found: {path}")
        return load_requests(path.read_text(encoding="utf-8"))[:count]
    if count == 0:
        return []
    return arrival_sequence(replace(cfg.workload, horizon=count), psn)


def run_training(cfg: RunConfig, output_dir: Optional[Path] = None) -> List[PhaseMetrics]:
    """Run ``phases`` blocks of arrivals with the configured engine, writing metrics.csv."""
    cfg.validate()
    out_dir = Path(cfg.run.output_dir) if output_dir is None else output_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    psn = build_psn(cfg.topology)
    requests = _requests_for(cfg, psn, cfg.run.phases * cfg.run.arrivals_per_phase)
    if cfg.run.export_arrivals:
        (out_dir / ARRIVALS_FILE).write_text(dump_requests(requests), encoding="utf-8")

    learns = cfg.run.engine in ("drl", "hadrl")
    params = AgentParams.initialize(psn.node_count, cfg.agent) if learns else None
    _LOGGER.info(
        "Training %s: nodes=%s phases=%s arrivals=%s output=%s",
        cfg.run.engine,
        psn.node_count,
        cfg.run.phases,
        len(requests),
        out_dir,
    )

    writer = _MetricsWriter(out_dir / METRICS_FILE)
    with RolloutPool(cfg.agent.workers if learns else 1) as pool:
        engine = make_engine(cfg, params, learn=learns, pool=pool)
        try:
            phases = simulate(
                engine,
                psn,
                requests,
                cfg.run.arrivals_per_phase,
                lambda m: writer.write(m, m.phase, cfg.run.record_wall_clock),
            )
        except NumericalError:
            if isinstance(engine, AgentEngine):
                save_checkpoint(engine.params, out_dir / LAST_GOOD_CHECKPOINT_FILE)
            _LOGGER.exception("Training aborted")
            raise
        finally:
            writer.close()

    if isinstance(engine, AgentEngine):
        save_checkpoint(engine.params, out_dir / CHECKPOINT_FILE)
    _LOGGER.info("Training finished: %s phases written to %s", len(phases), out_dir / METRICS_FILE)
    return phases


def run_eval(
    engine: str,
    cfg: RunConfig,
    params: Optional[AgentParams] = None,
    output_dir: Optional[Path] = None,
) -> PhaseMetrics:
    """Frozen-policy evaluation over every eval seed; agents act greedily."""
    cfg = replace(cfg, run=replace(cfg.run, engine=engine))
    cfg.validate()
    if engine in ("drl", "hadrl") and params is None:
        if not cfg.run.checkpoint:
            raise ConfigError(f"Evaluating {engine!r} needs run.checkpoint")
        params = load_checkpoint(Path(cfg.run.checkpoint))
    if params is not None:
        params = replace(params, hyper=replace(params.hyper, beta=cfg.agent.beta))

    total: Optional[PhaseMetrics] = None
    for seed in cfg.run.eval_seeds:
        seeded = replace(cfg, workload=replace(cfg.workload, seed=seed))
        psn = build_psn(seeded.topology)
        requests = _requests_for(seeded, psn, cfg.run.eval_arrivals)
        runner = make_engine(seeded, params)
        for phase in simulate(runner, psn, requests, max(1, len(requests))):
            if total is None:
                total = phase
            else:
                total.merge(phase)

    if total is None:
        beta = cfg.agent.beta if engine == "hadrl" else 0.0
        total = PhaseMetrics(1, engine, beta)
    if total.arrivals == 0:
        total.vacuous = True
        _LOGGER.warning("Evaluation of %s saw zero arrivals; acceptance reported as 1.0", engine)
    _LOGGER.info(
        "Eval %s: acceptance=%.3f (%s/%s)",
        engine,
        total.acceptance_ratio,
        total.accepted,
        total.arrivals,
    )

    if output_dir is not None:
        writer = _MetricsWriter(output_dir / EVAL_FILE)
        try:
            writer.write(total, EVAL_PHASE, cfg.run.record_wall_clock)
        finally:
            writer.close()
    return total


# -----------------------------------------------------------------------------


def _time_placement(place: Callable[[], object]) -> float:
    started = time.perf_counter()
    place()
    return time.perf_counter() - started


def bench_exec_time(
    engines: Sequence[str],
    vnf_counts: Sequence[int],
    node_counts: Sequence[int],
    repetitions: int,
    cfg: RunConfig,
) -> List[TimingRow]:
    """Mean and standard deviation of single-placement wall time per (engine, |V|, |N|)."""
    for engine in engines:
        if engine == "oracle":
            raise ConfigError("The oracle is excluded from execution-time benchmarks")
        if engine not in ("heu", "drl", "hadrl"):
            raise ConfigError(f"Unknown engine {engine!r}")
    if repetitions <= 0:
        return []

    rows: List[TimingRow] = []
    for nodes in node_counts:
        psn = build_psn(replace(cfg.topology, node_count=nodes))
        params = AgentParams.initialize(nodes, cfg.agent)
        for vnfs in vnf_counts:
            workload = replace(cfg.workload, vnf_count_range=[vnfs, vnfs])
            rng = np.random.default_rng([cfg.workload.seed, vnfs, nodes])
            requests = [generate_nspr(rng, workload) for _ in range(repetitions)]
            for engine in engines:
                samples = []
                for nspr in requests:
                    if engine == "heu":
                        samples.append(
                            _time_placement(partial(heu_place, psn, nspr, cfg.heuristic.c2_norm))
                        )
                        continue
                    env = SlicePlacementEnv(cfg.reward)
                    work = psn.clone()
                    samples.append(
                        _time_placement(
                            partial(
                                play_episode,
                                env,
                                work,
                                nspr,
                                params,
                                shaping=engine == "hadrl",
                                greedy=True,
                                c2_norm=cfg.heuristic.c2_norm,
                            )
                        )
                    )
                sd = statistics.stdev(samples) if len(samples) > 1 else 0.0
                rows.append(TimingRow(engine, vnfs, nodes, statistics.mean(samples), sd))
                _LOGGER.info(
                    "Bench %s |V|=%s |N|=%s: mean=%.6fs sd=%.6fs",
                    engine,
                    vnfs,
                    nodes,
                    rows[-1].mean_s,
                    sd,
                )
    return rows


def write_timing_csv(rows: Sequence[TimingRow], path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as timing_file:
        writer = csv.writer(timing_file, lineterminator="\n")
        writer.writerow(TIMING_COLUMNS)
        for row in rows:
            writer.writerow(
                [row.engine, row.vnfs, row.nodes, f"{row.mean_s:.9f}", f"{row.sd_s:.9f}"]
            )


def emit_report(inputs: Sequence[Path], output_dir: Path) -> List[Path]:
    from .report import emit_report as _emit

    return _emit(inputs, output_dir)
