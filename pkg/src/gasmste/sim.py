"""Closed-loop missions, static sensor grids and the Monte Carlo harness.

A mission alternates between driving the robots to their coverage
critical points and a joint stop-and-sample update of the particle filter,
until the normed uncertainty of the extracted estimate drops to the stop
threshold or the time budget runs out.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from . import belief as bf
from .drive import ControlGains, RobotState, control_batch, motion_effort, step_batch
from .extract import EstimateSet, extract_estimates, rate_scale
from .gospa import full_gospa, localization_gospa
from .plume import Domain, EnvParams, SensorModel, SourceTerm, sample_measurement
from .wcc import WccParams, build_density, coverage_update

log = logging.getLogger(__name__)

WCC, TCC = "wcc", "tcc"
TERMINAL_WINDOW = 10.0  # s
MAX_NOISE_INFLATIONS = 5

# Two-source ground-truth table used in the Monte Carlo study: (s1, s2, Q1, Q2).
SOURCE_CONFIGS = (
    ((15, 40), (40, 30), 6, 7),
    ((40, 15), (30, 45), 5, 9),
    ((5, 30), (30, 10), 7, 7),
    ((10, 25), (40, 25), 9, 4),
    ((20, 30), (40, 30), 4, 6),
)


def config_sources(index: int) -> list[SourceTerm]:
    s1, s2, q1, q2 = SOURCE_CONFIGS[index]
    return [SourceTerm(float(s1[0]), float(s1[1]), float(q1)),
            SourceTerm(float(s2[0]), float(s2[1]), float(q2))]


@dataclass(frozen=True)
class Scenario:
    domain: Domain
    env: EnvParams
    truth: tuple[SourceTerm, ...]
    robots: tuple[RobotState, ...]
    sensor: SensorModel
    kernel: bf.CardinalityKernel
    noise: bf.DiffusionNoise
    birth: bf.BirthPrior
    gains: ControlGains
    wcc: WccParams
    n_particles: int = 25000
    resample_threshold: float | None = None
    sigma_th: float = 4.0
    sample_dwell: float = 5.0
    max_time: float = 200.0
    gospa_cutoff: float = 10.0
    seed: int = 0

    def __post_init__(self):
        if len(self.robots) < self.kernel.m_max:
            raise ValueError("need at least m_max robots")
        for r in self.robots:
            if not self.domain.contains(r.position):
                raise ValueError(f"robot at {r.position} outside domain")
        for s in self.truth:
            if not self.domain.contains(s.position):
                raise ValueError(f"source at {s.position} outside domain")
            if s.rate <= 0:
                raise ValueError("source rates must be > 0")

    @property
    def m_max(self) -> int:
        return self.kernel.m_max

    @property
    def q_scale(self) -> float:
        return rate_scale(self.domain, self.birth.mean_rate)

    @property
    def filter_params(self) -> bf.FilterParams:
        return bf.FilterParams(self.n_particles, self.resample_threshold)

    def with_(self, **changes) -> "Scenario":
        return replace(self, **changes)


def corner_start(n: int, domain: Domain, spacing: float | None = None) -> tuple[RobotState, ...]:
    """Robots packed in rows of three near the lower-left corner, facing the interior.

    The default pitch is ``min(2 m, 0.08 * shorter side)``.
    """
    if spacing is None:
        spacing = min(2.0, 0.08 * min(domain.width, domain.height))
    out = []
    for i in range(n):
        row, col = divmod(i, 3)
        out.append(RobotState(domain.x_min + spacing * (col + 1),
                              domain.y_min + spacing * (row + 1), math.pi / 4))
    return tuple(out)


def illustrative_scenario(seed: int = 0, **overrides) -> Scenario:
    """Six robots, two sources at 7 and 9 g/s, 4 m/s wind toward -y, 50 m square."""
    domain = Domain(0.0, 50.0, 0.0, 50.0)
    kw = dict(
        domain=domain,
        env=EnvParams(4.0, -math.pi / 2, 1.2, 5.0),
        truth=(SourceTerm(15.0, 40.0, 7.0), SourceTerm(40.0, 30.0, 9.0)),
        robots=corner_start(6, domain),
        sensor=SensorModel(noise_std=0.1, threshold=0.5, detect_prob=0.95),
        kernel=bf.CardinalityKernel(m_max=4, birth_prob=0.08, death_prob=0.08),
        noise=bf.DiffusionNoise(),
        birth=bf.BirthPrior(domain, 2.0, 5.0),
        gains=ControlGains(),
        wcc=WccParams(alpha=-0.75, grid_resolution=0.5),
        n_particles=25000,
        sigma_th=4.0,
        sample_dwell=5.0,
        max_time=200.0,
        seed=seed,
    )
    kw.update(overrides)
    return Scenario(**kw)


def arena_scenario(seed: int = 0, **overrides) -> Scenario:
    """Three robots and two weak sources in a 5 m square, wind toward the upper left.

    Speeds follow a small differential-drive platform; plume and prior
    parameters are chosen so both plumes are detectable over most of the arena.
    """
    domain = Domain(0.0, 5.0, 0.0, 5.0)
    kw = dict(
        domain=domain,
        env=EnvParams(0.5, 3 * math.pi / 4, 0.2, 10.0),
        truth=(SourceTerm(1.5, 3.5, 1.5), SourceTerm(3.5, 2.0, 1.2)),
        robots=corner_start(3, domain),
        sensor=SensorModel(noise_std=0.1, threshold=0.1, detect_prob=0.95),
        kernel=bf.CardinalityKernel(m_max=2, birth_prob=0.08, death_prob=0.08,
                                    merge_dist=0.5, min_rate=0.05),
        noise=bf.DiffusionNoise(0.1, 0.1, 0.1),
        birth=bf.BirthPrior(domain, 2.0, 0.75),
        gains=ControlGains(v_max=0.22, omega_max=2.84),
        wcc=WccParams(alpha=-0.75, grid_resolution=0.1),
        n_particles=20000,
        sigma_th=0.2,
        sample_dwell=5.0,
        max_time=300.0,
        gospa_cutoff=1.0,
        seed=seed,
    )
    kw.update(overrides)
    return Scenario(**kw)


@dataclass
class SamplingRecord:
    k: int
    t: float
    estimates: EstimateSet
    gospa_full: float
    gospa_loc: float


@dataclass
class MissionLog:
    scenario: Scenario
    planner: str
    trajectory: list[tuple] = field(default_factory=list)
    samples: list[tuple] = field(default_factory=list)
    estimates: list[tuple] = field(default_factory=list)
    metrics: list[tuple] = field(default_factory=list)
    events: list[dict] = field(default_factory=list)
    sampling_times: list[float] = field(default_factory=list)
    termination: str = "not_started"
    end_time: float = 0.0
    final: EstimateSet | None = None
    snapshots: dict[int, bf.ParticleSet] = field(default_factory=dict, repr=False)

    @property
    def n_samples(self) -> int:
        return len(self.sampling_times)

    @property
    def final_sources(self) -> list[SourceTerm]:
        return self.final.sources if self.final is not None else []

    @property
    def final_count(self) -> int:
        return self.final.count if self.final is not None else 0

    def final_localization_gospa(self, c: float | None = None) -> float:
        c = self.scenario.gospa_cutoff if c is None else c
        return localization_gospa(self.final_sources, self.scenario.truth, c)

    def gospa_series(self, kind: str = "full") -> tuple[np.ndarray, np.ndarray]:
        """Sampling-event times and the GOSPA that holds from each one onward."""
        col = 2 if kind == "full" else 3
        seen, times, values = set(), [], []
        for row in self.metrics:
            if row[0] not in seen:
                seen.add(row[0])
                times.append(row[1])
                values.append(row[col])
        return np.array(times), np.array(values)


def _estimate_rows(k, est: EstimateSet):
    rows = []
    for j, lab in enumerate(est.labels):
        if lab.estimate is None:
            x = y = q = math.nan
        else:
            x, y, q = lab.estimate.x, lab.estimate.y, lab.estimate.rate
        rows.append((k, j, lab.existence, x, y, q, est.sigma))
    return rows


class _Filter:
    """Belief plus the bookkeeping the mission loop needs around each update."""

    def __init__(self, sc: Scenario, rng: np.random.Generator, mission: MissionLog,
                 keep_snapshots: bool):
        self.sc = sc
        self.rng = rng
        self.mission = mission
        self.keep = keep_snapshots
        self.belief = bf.initial_belief(sc.n_particles, sc.m_max, sc.birth, rng)

    def update(self, k: int, t: float, measurements) -> SamplingRecord:
        sc = self.sc
        sensor = sc.sensor
        for attempt in range(MAX_NOISE_INFLATIONS + 1):
            try:
                self.belief = bf.pf_step(self.belief, measurements, sc.kernel, sc.noise, sc.birth,
                                         sc.env, sensor, sc.filter_params, self.rng, sc.domain)
                break
            except bf.DegenerateBeliefError:
                sensor = replace(sensor, noise_std=sensor.noise_std * 2)
                self.mission.events.append({"k": k, "t": t, "event": "degenerate_belief",
                                            "retry_noise_std": sensor.noise_std})
        else:
            self.belief = bf.initial_belief(sc.n_particles, sc.m_max, sc.birth, self.rng)
            self.mission.events.append({"k": k, "t": t, "event": "belief_reset"})
        seed = int(np.random.SeedSequence([sc.seed, k]).generate_state(1)[0])
        est = extract_estimates(self.belief, sc.q_scale, seed=seed)
        if self.keep:
            self.mission.snapshots[k] = self.belief.copy()
        rec = SamplingRecord(k, t, est,
                             full_gospa(est.sources, sc.truth, sc.gospa_cutoff, sc.q_scale),
                             localization_gospa(est.sources, sc.truth, sc.gospa_cutoff))
        self.mission.estimates.extend(_estimate_rows(k, est))
        self.mission.sampling_times.append(t)
        self.mission.final = est
        log.debug("k=%d t=%.2f M=%d sigma=%.3f gospa_loc=%.3f", k, t, est.count, est.sigma,
                  rec.gospa_loc)
        return rec


def _sample_all(sc: Scenario, positions, rng, k, t, mission: MissionLog):
    zs = []
    for i, p in enumerate(positions):
        m = sample_measurement(sc.truth, sc.env, sc.sensor, p, rng, robot_id=i)
        zs.append(m)
        mission.samples.append((k, t, i, m.x, m.y, m.value, int(m.detected)))
    return zs


def _stop(sigma: float, sigma_th: float) -> bool:
    # an infinite threshold stops unconditionally, even with nothing confirmed
    return sigma < sigma_th or math.isinf(sigma_th)


def _streams(seed: int):
    truth_ss, filter_ss = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(truth_ss), np.random.default_rng(filter_ss)


def run_mission(sc: Scenario, planner: str = WCC, keep_snapshots: bool = False) -> MissionLog:
    """Drive-sample-update loop; deterministic for a given scenario seed.

    ``planner="tcc"`` runs the same loop with ``alpha = 0``.
    """
    planner = planner.lower()
    if planner not in (WCC, TCC):
        raise ValueError(f"unknown planner {planner!r}")
    alpha = sc.wcc.alpha if planner == WCC else 0.0
    psi = sc.env.wind_dir
    gains = sc.gains
    mission = MissionLog(sc, planner)
    truth_rng, filter_rng = _streams(sc.seed)
    filt = _Filter(sc, filter_rng, mission, keep_snapshots)

    pos = np.array([r.position for r in sc.robots])
    head = np.array([r.heading for r in sc.robots])
    t, k = 0.0, 1
    rec = filt.update(k, t, _sample_all(sc, pos, truth_rng, k, t, mission))
    steps_per_dwell = int(round(sc.sample_dwell / gains.dt))
    n_steps_max = int(round(sc.max_time / gains.dt))
    step_i = 0

    while True:
        field_ = build_density(filt.belief, sc.domain, sc.wcc.grid_resolution)
        still = 0
        sampled = False
        last_pos = None
        while step_i < n_steps_max:
            if last_pos is None or not np.array_equal(pos, last_pos):
                _, targets, _, h_v = coverage_update(pos, field_, alpha, psi)
                last_pos = pos
            v, w = control_batch(pos, head, targets, gains)
            still = still + 1 if motion_effort(v, w) < gains.conv_eps else 0
            if still > steps_per_dwell:
                # the row at the sampling instant is logged by the next cycle
                sampled = True
                break
            for i in range(len(pos)):
                mission.trajectory.append((t, i, pos[i, 0], pos[i, 1], head[i], v[i], w[i]))
            mission.metrics.append((rec.k, t, rec.gospa_full, rec.gospa_loc, h_v))
            pos, head = step_batch(pos, head, v, w, gains.dt, sc.domain)
            step_i += 1
            t = step_i * gains.dt
        if not sampled:
            mission.termination = "max_time"
            break
        k += 1
        rec = filt.update(k, t, _sample_all(sc, pos, truth_rng, k, t, mission))
        if _stop(rec.estimates.sigma, sc.sigma_th):
            mission.termination = "converged"
            mission.metrics.append((rec.k, t, rec.gospa_full, rec.gospa_loc, math.nan))
            break
    mission.end_time = t
    return mission


def grid_positions(domain: Domain, rows: int, cols: int) -> np.ndarray:
    """Uniform grid inset by half a pitch from each boundary."""
    if rows < 1 or cols < 1:
        raise ValueError("grid dimensions must be positive")
    xs = domain.x_min + domain.width * (np.arange(cols) + 0.5) / cols
    ys = domain.y_min + domain.height * (np.arange(rows) + 0.5) / rows
    gx, gy = np.meshgrid(xs, ys)
    return np.column_stack([gx.ravel(), gy.ravel()])


def run_static_grid(sc: Scenario, grid_dims: tuple[int, int],
                    keep_snapshots: bool = False) -> MissionLog:
    """Fixed sensors sampling jointly every ``sample_dwell`` seconds; filter only."""
    rows, cols = grid_dims
    pos = grid_positions(sc.domain, rows, cols)
    mission = MissionLog(sc, f"grid{rows}x{cols}")
    truth_rng, filter_rng = _streams(sc.seed)
    filt = _Filter(sc, filter_rng, mission, keep_snapshots)
    t, k = 0.0, 1
    interval = sc.sample_dwell
    while True:
        rec = filt.update(k, t, _sample_all(sc, pos, truth_rng, k, t, mission))
        mission.metrics.append((k, t, rec.gospa_full, rec.gospa_loc, math.nan))
        if k > 1 and _stop(rec.estimates.sigma, sc.sigma_th):
            mission.termination = "converged"
            break
        if t + interval > sc.max_time + 1e-9:
            mission.termination = "max_time"
            break
        k += 1
        t = (k - 1) * interval
    mission.end_time = t
    return mission


# --------------------------------------------------------------------------
# evaluation helpers


def gospa_curve(times, values, grid, end_time=None) -> np.ndarray:
    """Step-hold GOSPA on ``grid``; the last value is carried past ``end_time``."""
    idx = np.searchsorted(np.asarray(times), grid, side="right") - 1
    return np.asarray(values)[np.clip(idx, 0, len(values) - 1)]


def terminal_gospa(times, values, end_time, window: float = TERMINAL_WINDOW,
                   resolution: float = 0.05) -> float:
    """Time-average of the step-hold GOSPA over the final ``window`` seconds."""
    start = max(0.0, end_time - window)
    if end_time <= start:
        return float(values[-1])
    grid = np.arange(start, end_time, resolution) + 0.5 * resolution
    return float(np.mean(gospa_curve(times, values, grid)))


def success_ratio(logs: Sequence[MissionLog], threshold: float) -> float:
    """Fraction of runs whose final localisation GOSPA (cut-off = threshold) is below it.

    The comparison is strict: with the cut-off equal to the threshold, a lone
    estimate far from a lone source saturates at exactly the threshold.
    """
    if not logs:
        raise ValueError("success_ratio needs at least one log")
    ok = [lg.final_localization_gospa(threshold) < threshold for lg in logs]
    return float(np.mean(ok))


@dataclass
class RunSummary:
    config: int
    wind_dir: float
    planner: str
    seed: int
    end_time: float
    n_samples: int
    termination: str
    final_count: int
    final_gospa_loc: float
    terminal_gospa: float
    curve: np.ndarray
    error: str | None = None


@dataclass
class MonteCarloReport:
    runs: list[RunSummary]
    time_grid: np.ndarray
    gospa_kind: str

    def by_planner(self, planner: str) -> list[RunSummary]:
        return [r for r in self.runs if r.planner == planner and r.error is None]

    def mean_curve(self, planner: str) -> np.ndarray:
        return np.mean([r.curve for r in self.by_planner(planner)], axis=0)

    def mean_terminal(self, planner: str) -> float:
        return float(np.mean([r.terminal_gospa for r in self.by_planner(planner)]))


def summarize(mission: MissionLog, time_grid, config: int = -1, kind: str = "full") -> RunSummary:
    times, values = mission.gospa_series(kind)
    return RunSummary(
        config=config, wind_dir=mission.scenario.env.wind_dir, planner=mission.planner,
        seed=mission.scenario.seed, end_time=mission.end_time, n_samples=mission.n_samples,
        termination=mission.termination, final_count=mission.final_count,
        final_gospa_loc=mission.final_localization_gospa(),
        terminal_gospa=terminal_gospa(times, values, mission.end_time),
        curve=gospa_curve(times, values, time_grid),
    )


def run_seed(base: Scenario, config: int, wind: float, rep: int) -> int:
    return int(np.random.SeedSequence([base.seed, config + 1, int(round(wind * 1e6)) & 0xFFFFFFFF,
                                       rep]).generate_state(1)[0])


def monte_carlo(base: Scenario, configs: Iterable[int] | None = None,
                wind_dirs: Iterable[float] | None = None, runs_per_cell: int = 1,
                planners: Iterable[str] = (WCC, TCC), kind: str = "full",
                on_run=None, time_step: float = 0.5) -> MonteCarloReport:
    """Sweep configs x winds x seeds x planners; planners share seeds within a cell.

    ``configs`` indexes :data:`SOURCE_CONFIGS`; ``None`` keeps the base truth.
    ``on_run(mission, summary)`` is called after every run (e.g. to write logs).
    Failed runs are recorded with their error message, not raised.
    """
    configs = [None] if configs is None else list(configs)
    wind_dirs = [base.env.wind_dir] if wind_dirs is None else list(wind_dirs)
    grid = np.arange(0.0, base.max_time + 1e-9, time_step)
    runs = []
    for ci in configs:
        truth = base.truth if ci is None else tuple(config_sources(ci))
        for wind in wind_dirs:
            env = replace(base.env, wind_dir=wind)
            for rep in range(runs_per_cell):
                seed = run_seed(base, -1 if ci is None else ci, wind, rep)
                sc = base.with_(truth=truth, env=env, seed=seed)
                for planner in planners:
                    try:
                        if planner.startswith("grid"):
                            r, c = (int(v) for v in planner[4:].split("x"))
                            mission = run_static_grid(sc, (r, c))
                        else:
                            mission = run_mission(sc, planner)
                        summary = summarize(mission, grid, -1 if ci is None else ci, kind)
                        if on_run is not None:
                            on_run(mission, summary)
                    except Exception as exc:  # recorded, sweep continues
                        log.exception("run failed")
                        summary = RunSummary(-1 if ci is None else ci, wind, planner, seed,
                                             math.nan, 0, "error", 0, math.nan, math.nan,
                                             np.full(len(grid), math.nan), error=repr(exc))
                    runs.append(summary)
    return MonteCarloReport(runs, grid, kind)
