"""Discrete-event simulation of reporters, engineers and assignment
policies on a virtual clock.

The simulator drives the production BoardRuntime cycle rather than a
shortcut path, so every run doubles as an integration test of the bot:
tickets arrive Poisson on business days, engineers serve FIFO queues with
lognormal service times, and the pre-bot period is modeled as delayed
manual assignment with a Zipf-skewed engineer preference.
"""

from __future__ import annotations

import heapq
import math
import random
from dataclasses import dataclass, fields, replace
from datetime import datetime, timedelta
from pathlib import Path

from .assignment import POLICIES, POLICY_MANUAL, POLICY_ROUND_ROBIN
from .board import BoardRuntime, CycleReport, TeamConfig
from .eventlog import BoardSnapshot, EventLog
from .metrics import (
    ComparisonReport,
    DistributionReport,
    ResolutionReport,
    build_distribution_report,
    build_resolution_report,
    compare_periods,
)
from .notify import Channel, ChannelBinding, FileSink, MemorySink
from .reminders import DEFAULT_STUCK_HOURS, ThresholdPolicy
from .roster import EngineerRoster, RosterEntry
from .timeutil import UTC, SECOND, business_days
from .workflow import WorkflowState

#: Virtual epoch; a Monday, so business-day arithmetic starts cleanly.
SIM_EPOCH = datetime(2025, 1, 6, tzinfo=UTC)

ARRIVAL_WINDOW_START_H = 9
ARRIVAL_WINDOW_END_H = 18


@dataclass(frozen=True)
class SimConfig:
    seed: int = 1
    horizon_days: int = 20            # business days
    arrival_rate: float = 30.0        # mean tickets per business day
    roster_size: int = 14
    policy: str = POLICY_ROUND_ROBIN  # RoundRobin | Expertise | LeastOpen | Manual
    service_median_hours: tuple[float, float] = (2.0, 8.0)
    service_sigma: float = 0.6
    reassign_prob: float = 0.0
    gamer_fraction: float = 0.0       # fraction of engineers that game
    gamer_hold_fraction: float = 1.0  # fraction of a gamer's tickets held open
    manual_skew: float = 1.0          # Zipf exponent for the pre-bot model
    manual_delay_days: float = 3.0    # max manual-assignment delay (business days)
    cycle_period_hours: float = 6.0
    reminders_enabled: bool = False
    stuck_threshold_hours: float | None = None
    reminder_period_hours: float = 24.0
    sla_warning_fraction: float = 0.2
    team_id: str = "sim"
    board_id: str = "SIM"

    def __post_init__(self) -> None:
        if self.arrival_rate <= 0:
            raise ValueError("arrival_rate must be > 0")
        if self.horizon_days <= 0:
            raise ValueError("horizon_days must be > 0")
        if self.roster_size < 1:
            raise ValueError("roster_size must be >= 1")
        if not 0 <= self.reassign_prob <= 1:
            raise ValueError("reassign_prob must be in [0, 1]")
        if not 0 <= self.gamer_fraction <= 1:
            raise ValueError("gamer_fraction must be in [0, 1]")
        if self.manual_skew < 0:
            raise ValueError("manual_skew must be >= 0")
        if self.policy not in POLICIES:
            raise ValueError(f"unknown policy: {self.policy}")

    @classmethod
    def from_dict(cls, raw: dict) -> "SimConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ValueError(f"unknown SimConfig keys: {sorted(unknown)}")
        if "service_median_hours" in raw:
            raw = dict(raw)
            raw["service_median_hours"] = tuple(raw["service_median_hours"])
        return cls(**raw)


def _poisson(rng: random.Random, lam: float) -> int:
    """Knuth's product method; adequate for desk-scale rates."""
    limit = math.exp(-lam)
    k, p = 0, 1.0
    while p > limit:
        k += 1
        p *= rng.random()
    return k - 1


def engineer_ids(config: SimConfig) -> list[str]:
    return [f"e{i:02d}" for i in range(1, config.roster_size + 1)]


def sim_roster(config: SimConfig) -> EngineerRoster:
    return EngineerRoster(
        config.team_id,
        [RosterEntry(engineer_id=e) for e in engineer_ids(config)],
    )


def horizon_end(config: SimConfig) -> datetime:
    last = business_days(SIM_EPOCH.date(), config.horizon_days)[-1]
    return datetime(last.year, last.month, last.day, tzinfo=UTC) + timedelta(days=1)


def generate_ticket_stream(config: SimConfig) -> list[dict]:
    """Poisson arrivals per business day, uniform within 09:00-18:00 UTC,
    fully determined by the seed. Weekends get no arrivals."""
    rng = random.Random(f"{config.seed}:arrivals")
    window = (ARRIVAL_WINDOW_END_H - ARRIVAL_WINDOW_START_H) * 3600
    out: list[dict] = []
    n = 0
    for day in business_days(SIM_EPOCH.date(), config.horizon_days):
        count = _poisson(rng, config.arrival_rate)
        offsets = sorted(int(rng.random() * window) for _ in range(count))
        base = datetime(day.year, day.month, day.day,
                        ARRIVAL_WINDOW_START_H, tzinfo=UTC)
        for off in offsets:
            n += 1
            out.append({
                "ts": base + timedelta(seconds=off),
                "ticket": f"{config.board_id}-{n:05d}",
                "reporter": f"r{rng.randint(1, 200):03d}",
                "priority": rng.choices(
                    ["Low", "Medium", "High"], weights=(1, 2, 1))[0],
            })
    return out


def service_medians(config: SimConfig) -> dict[str, float]:
    """Per-engineer lognormal medians (hours), drawn once per run."""
    rng = random.Random(f"{config.seed}:service")
    lo, hi = config.service_median_hours
    return {e: rng.uniform(lo, hi) for e in engineer_ids(config)}


def gamer_engineers(config: SimConfig) -> set[str]:
    count = round(config.gamer_fraction * config.roster_size)
    return set(engineer_ids(config)[:count])


def manual_assignment_model(stream: list[dict], config: SimConfig,
                            ) -> dict[str, tuple[str, datetime]]:
    """Pre-bot behavior: a manager assigns each ticket independently with
    probability proportional to rank^(-s) over a seeded random engineer
    ranking, after a uniform delay of up to manual_delay_days business-day
    equivalents. s = 0 degenerates to a uniform pick."""
    rng = random.Random(f"{config.seed}:manual")
    ranking = engineer_ids(config)
    rng.shuffle(ranking)
    weights = [(r + 1) ** (-config.manual_skew) for r in range(len(ranking))]
    max_delay_s = config.manual_delay_days * 24 * 3600
    plan: dict[str, tuple[str, datetime]] = {}
    for item in stream:
        engineer = rng.choices(ranking, weights=weights)[0]
        delay = timedelta(seconds=int(rng.random() * max_delay_s))
        plan[item["ticket"]] = (engineer, item["ts"] + delay)
    return plan


def _sim_thresholds(config: SimConfig) -> ThresholdPolicy | None:
    if not config.reminders_enabled:
        return None
    stuck = dict(DEFAULT_STUCK_HOURS)
    if config.stuck_threshold_hours is not None:
        stuck = {s: config.stuck_threshold_hours for s in stuck}
    return ThresholdPolicy(
        team_id=config.team_id,
        stuck_hours=stuck,
        sla_warning_fraction=config.sla_warning_fraction,
        reminder_period_hours=config.reminder_period_hours,
    )


def _sim_team_config(config: SimConfig, out_dir: Path | None) -> TeamConfig:
    channel_dir = str(out_dir / "channels") if out_dir is not None else "memory"
    binding = ChannelBinding(
        team_id=config.team_id,
        endpoints={Channel.CHAT_A: channel_dir, Channel.EMAIL: channel_dir},
        review_channel=Channel.CHAT_A,
    )
    return TeamConfig(
        team_id=config.team_id,
        board_id=config.board_id,
        roster=sim_roster(config),
        binding=binding,
        policy=config.policy,
        thresholds=_sim_thresholds(config),
        cycle_period_minutes=int(config.cycle_period_hours * 60),
    )


@dataclass
class SimRun:
    config: SimConfig
    runtime: BoardRuntime
    cycle_reports: list[CycleReport]
    last_cycle_at: datetime

    @property
    def snapshot(self) -> BoardSnapshot:
        return self.runtime.snapshot

    @property
    def events(self) -> list[dict]:
        return self.runtime.log.events


def run_simulation(config: SimConfig, out_dir: str | Path | None = None) -> SimRun:
    """Run one full simulation through the production cycle machinery."""
    out_path = Path(out_dir) if out_dir is not None else None
    team_cfg = _sim_team_config(config, out_path)
    if out_path is not None:
        out_path.mkdir(parents=True, exist_ok=True)
        log = EventLog(out_path / f"{config.board_id}.events.ndjson")
        sinks = {c: FileSink(out_path / "channels")
                 for c in team_cfg.binding.endpoints}
    else:
        log = EventLog()
        shared = MemorySink()
        sinks = {c: shared for c in team_cfg.binding.endpoints}

    stream = generate_ticket_stream(config)
    manual_plan = (manual_assignment_model(stream, config)
                   if config.policy == POLICY_MANUAL else None)
    runtime = BoardRuntime(team_cfg, log=log, sinks=sinks,
                           manual_plan=manual_plan)

    medians = service_medians(config)
    gamers = gamer_engineers(config)
    proc_rng = random.Random(f"{config.seed}:proc")
    busy_until = {e: SIM_EPOCH for e in engineer_ids(config)}
    other = {e: [x for x in engineer_ids(config) if x != e]
             for e in engineer_ids(config)}

    end = horizon_end(config)
    period = timedelta(hours=config.cycle_period_hours)
    pending: list[tuple[datetime, int, str, WorkflowState, str]] = []
    tie = 0
    si = 0
    now = SIM_EPOCH
    reports: list[CycleReport] = []

    while True:
        # Replay the outside world (arrivals and engineer transitions) due
        # by this cycle, merged in timestamp order.
        batch: list[tuple[datetime, int, object]] = []
        while si < len(stream) and stream[si]["ts"] <= now:
            batch.append((stream[si]["ts"], 0, stream[si]))
            si += 1
        while pending and pending[0][0] <= now:
            item = heapq.heappop(pending)
            batch.append((item[0], 1, item))
        batch.sort(key=lambda b: (b[0], b[1]))
        for _, tag, item in batch:
            if tag == 0:
                runtime.inject_ticket(
                    ticket_id=item["ticket"], reporter=item["reporter"],
                    at=item["ts"], priority=item["priority"])
            else:
                _, _, tid, to_state, actor = item
                runtime.apply_external_transition(tid, to_state, item[0],
                                                  actor)

        report = runtime.run_cycle(now)
        reports.append(report)

        # Schedule engineer service for this cycle's assignments.
        for tid, engineer in report.assignments:
            if (config.reassign_prob > 0
                    and proc_rng.random() < config.reassign_prob
                    and len(other[engineer]) > 0):
                engineer = proc_rng.choice(other[engineer])
                runtime.reassign_ticket(tid, engineer, now)
            median = medians[engineer]
            service_h = median * math.exp(
                config.service_sigma * proc_rng.gauss(0.0, 1.0))
            service = timedelta(seconds=max(1, round(service_h * 3600)))
            created = runtime.snapshot.tickets[tid].created_at
            start = max(now + SECOND, busy_until[engineer], created + SECOND)
            tie += 1
            heapq.heappush(pending, (start, tie, tid,
                                     WorkflowState.WORK_IN_PROGRESS, engineer))
            busy_until[engineer] = start + service
            held = (engineer in gamers
                    and proc_rng.random() < config.gamer_hold_fraction)
            if not held:
                tie += 1
                heapq.heappush(pending, (start + service, tie, tid,
                                         WorkflowState.DONE, engineer))

        if now >= end:
            break
        now += period

    log.close()
    return SimRun(config=config, runtime=runtime, cycle_reports=reports,
                  last_cycle_at=now)


# ---------------------------------------------------------------------------
# Experiments
# ---------------------------------------------------------------------------

@dataclass
class ExperimentResult:
    label: str
    config: SimConfig
    run: SimRun
    distribution: DistributionReport
    resolution: ResolutionReport


def build_reports(run: SimRun, label: str) -> tuple[DistributionReport,
                                                    ResolutionReport]:
    """Metrics over a run's event log: resolved-ticket counts per final
    assignee (zeros kept for the whole roster) and resolution times."""
    tickets = list(run.snapshot.tickets.values())
    per_engineer = {e: 0 for e in engineer_ids(run.config)}
    for t in tickets:
        if t.state is WorkflowState.DONE and t.assignee is not None:
            per_engineer[t.assignee] += 1
    dist = build_distribution_report(run.config.team_id, label, per_engineer)
    res = build_resolution_report(run.config.team_id, label, tickets)
    return dist, res


def run_experiment(
    pre_config: SimConfig,
    post_config: SimConfig,
    out_dir: str | Path | None = None,
) -> tuple[ExperimentResult, ExperimentResult, ComparisonReport]:
    """Run the pre-bot and post-bot simulations and compare them."""
    out_path = Path(out_dir) if out_dir is not None else None
    pre_run = run_simulation(
        pre_config, out_path / "pre" if out_path else None)
    post_run = run_simulation(
        post_config, out_path / "post" if out_path else None)
    pre_dist, pre_res = build_reports(pre_run, "PreBot")
    post_dist, post_res = build_reports(post_run, "PostBot")
    comparison = compare_periods(pre_dist, pre_res, post_dist, post_res)
    return (
        ExperimentResult("PreBot", pre_config, pre_run, pre_dist, pre_res),
        ExperimentResult("PostBot", post_config, post_run, post_dist, post_res),
        comparison,
    )


def default_experiment_configs(seed: int) -> tuple[SimConfig, SimConfig]:
    """The stock pre/post pair: skewed delayed manual assignment versus
    round-robin, same roster, arrivals and service models."""
    pre = SimConfig(
        seed=seed,
        horizon_days=60,
        arrival_rate=30.0,
        roster_size=14,
        policy=POLICY_MANUAL,
        manual_skew=1.0,
        manual_delay_days=3.0,
    )
    post = replace(pre, policy=POLICY_ROUND_ROBIN, reassign_prob=0.05)
    return pre, post
