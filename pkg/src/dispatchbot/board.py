"""The bot core: team configuration, the board runtime and the periodic
scan-assign-remind cycle.

One BoardRuntime owns one board: its snapshot, event log, cursor, reminder
ledger and outbox. Every mutation goes through `_commit`, which appends to
the log and folds the same records into the live snapshot, so live state
and replay can never diverge.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path

from .assignment import (
    POLICIES,
    POLICY_LEAST_OPEN,
    POLICY_MANUAL,
    POLICY_ROUND_ROBIN,
    POLICY_EXPERTISE,
    AssignmentCursor,
    AssignmentDecision,
    EmptyPoolError,
    ExpertiseProfile,
    TicketAlreadyDoneError,
    UnknownEngineerError,
    expertise_assign,
    least_open_assign,
    round_robin_assign,
)
from .eventlog import (
    KIND_ASSIGNED,
    KIND_CREATED,
    KIND_MESSAGE_DELIVERED,
    KIND_REASSIGNED,
    KIND_REMINDER_SENT,
    KIND_TRANSITIONED,
    BoardSnapshot,
    EventLog,
    fold_event,
    replay,
)
from .notify import (
    DEFAULT_MAX_RETRIES,
    STATE_DELIVERED,
    STATE_FAILED,
    Channel,
    ChannelBinding,
    PayloadRejected,
    Sink,
    SinkUnreachable,
    announce_assignment,
    announce_state_change,
    route_reminder,
    sink_for_endpoint,
)
from .reminders import ThresholdPolicy, due_reminders
from .roster import EngineerRoster, RosterEntry
from .timeutil import iso, parse_date
from .workflow import ReopenMode, Ticket, WorkflowState

DEFAULT_CYCLE_PERIOD_MINUTES = 15


class ConfigError(Exception):
    """Team configuration failed validation; `errors` lists field-level
    messages."""

    def __init__(self, errors: list[str]):
        self.errors = errors
        super().__init__("; ".join(errors))


@dataclass
class TeamConfig:
    team_id: str
    board_id: str
    roster: EngineerRoster
    binding: ChannelBinding
    policy: str = POLICY_ROUND_ROBIN
    thresholds: ThresholdPolicy | None = None
    expertise: ExpertiseProfile | None = None
    cycle_period_minutes: int = DEFAULT_CYCLE_PERIOD_MINUTES
    max_retries: int = DEFAULT_MAX_RETRIES


_TOP_KEYS = {"team_id", "board_id", "roster", "channels", "review_channel",
             "policy", "thresholds", "expertise", "cycle_period_minutes",
             "max_retries"}
_ROSTER_KEYS = {"id", "joined_at", "separated_at", "leaves"}
_THRESHOLD_KEYS = {"stuck_hours", "sla_warning_fraction",
                   "reminder_period_hours"}
_EXPERTISE_KEYS = {"skills", "labels"}


def load_team_config(path: str | Path) -> TeamConfig:
    """Load and validate one team's JSON configuration file.

    Unknown keys and dangling references are rejected with field-level
    messages collected into a single ConfigError.
    """
    path = Path(path)
    if not path.exists():
        raise ConfigError([f"config file not found: {path}"])
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError([f"{path}: invalid JSON: {exc}"])
    return parse_team_config(raw)


def parse_team_config(raw: dict) -> TeamConfig:
    errors: list[str] = []
    if not isinstance(raw, dict):
        raise ConfigError(["config root must be an object"])
    for key in raw:
        if key not in _TOP_KEYS:
            errors.append(f"unknown key: {key}")
    for key in ("team_id", "board_id", "roster", "channels",
                "review_channel"):
        if key not in raw:
            errors.append(f"missing key: {key}")
    if errors:
        raise ConfigError(errors)

    entries: list[RosterEntry] = []
    for i, item in enumerate(raw["roster"]):
        for key in item:
            if key not in _ROSTER_KEYS:
                errors.append(f"roster[{i}]: unknown key {key}")
        if "id" not in item:
            errors.append(f"roster[{i}]: missing id")
            continue
        entries.append(RosterEntry(
            engineer_id=item["id"],
            joined_at=(parse_date(item["joined_at"])
                       if item.get("joined_at") else None),
            separated_at=(parse_date(item["separated_at"])
                          if item.get("separated_at") else None),
            leaves=tuple((parse_date(a), parse_date(b))
                         for a, b in item.get("leaves", [])),
        ))
    try:
        roster = EngineerRoster(raw["team_id"], entries)
    except ValueError as exc:
        errors.append(f"roster: {exc}")
        roster = EngineerRoster(raw["team_id"], [])

    endpoints: dict[Channel, str] = {}
    for name, endpoint in raw["channels"].items():
        try:
            endpoints[Channel(name)] = str(endpoint)
        except ValueError:
            errors.append(f"channels: unknown channel {name}")
    binding = None
    try:
        binding = ChannelBinding(
            team_id=raw["team_id"],
            endpoints=endpoints,
            review_channel=Channel(raw["review_channel"]),
        )
    except ValueError as exc:
        errors.append(f"channels: {exc}")

    policy = raw.get("policy", POLICY_ROUND_ROBIN)
    if policy not in POLICIES:
        errors.append(f"policy: unknown policy {policy}")

    thresholds = None
    if "thresholds" in raw and raw["thresholds"] is not None:
        t = raw["thresholds"]
        for key in t:
            if key not in _THRESHOLD_KEYS:
                errors.append(f"thresholds: unknown key {key}")
        try:
            stuck = {WorkflowState(k): float(v)
                     for k, v in t.get("stuck_hours", {}).items()}
            from .reminders import DEFAULT_STUCK_HOURS
            merged = dict(DEFAULT_STUCK_HOURS)
            merged.update(stuck)
            thresholds = ThresholdPolicy(
                team_id=raw["team_id"],
                stuck_hours=merged,
                sla_warning_fraction=float(t.get("sla_warning_fraction", 0.2)),
                reminder_period_hours=float(
                    t.get("reminder_period_hours", 24.0)),
            )
        except ValueError as exc:
            errors.append(f"thresholds: {exc}")

    expertise = None
    if "expertise" in raw and raw["expertise"] is not None:
        e = raw["expertise"]
        for key in e:
            if key not in _EXPERTISE_KEYS:
                errors.append(f"expertise: unknown key {key}")
        skills = {eng: frozenset(tags)
                  for eng, tags in e.get("skills", {}).items()}
        for eng in skills:
            if eng not in roster:
                errors.append(f"expertise: unknown engineer {eng}")
        expertise = ExpertiseProfile(
            skills=skills, label_tags=dict(e.get("labels", {})))

    if errors:
        raise ConfigError(errors)
    assert binding is not None
    return TeamConfig(
        team_id=raw["team_id"],
        board_id=raw["board_id"],
        roster=roster,
        binding=binding,
        policy=policy,
        thresholds=thresholds,
        expertise=expertise,
        cycle_period_minutes=int(
            raw.get("cycle_period_minutes", DEFAULT_CYCLE_PERIOD_MINUTES)),
        max_retries=int(raw.get("max_retries", DEFAULT_MAX_RETRIES)),
    )


@dataclass
class CycleReport:
    now: datetime
    assigned: int = 0
    unassigned_pending: int = 0
    empty_pool: bool = False
    reminders_sent: int = 0
    messages_delivered: int = 0
    messages_failed: int = 0
    assignments: list[tuple[str, str]] = field(default_factory=list)

    def render(self) -> str:
        lines = [
            f"cycle at {iso(self.now)}",
            f"  assigned:            {self.assigned}",
            f"  unassigned pending:  {self.unassigned_pending}",
            f"  reminders sent:      {self.reminders_sent}",
            f"  messages delivered:  {self.messages_delivered}",
            f"  messages failed:     {self.messages_failed}",
        ]
        if self.empty_pool:
            lines.append("  WARNING: engineer pool empty, tickets held")
        return "\n".join(lines)


def poll_new_unassigned(snapshot: BoardSnapshot) -> list[Ticket]:
    """Backlog tickets with no assignee, ordered by created_at then id."""
    tickets = [snapshot.tickets[tid] for tid in snapshot.unassigned_backlog]
    return sorted(tickets, key=lambda t: (t.created_at, t.id))


class BoardRuntime:
    """Single logical owner of one board's log, snapshot and sinks."""

    def __init__(self, config: TeamConfig, log: EventLog | None = None,
                 sinks: dict[Channel, Sink] | None = None,
                 manual_plan: dict[str, tuple[str, datetime]] | None = None):
        self.config = config
        self.log = log if log is not None else EventLog()
        self.snapshot = replay(self.log.events, config.board_id)
        if sinks is None:
            sinks = {channel: sink_for_endpoint(endpoint)
                     for channel, endpoint in config.binding.endpoints.items()}
        self.sinks = sinks
        self.manual_plan = manual_plan or {}

    # -- event plumbing ----------------------------------------------------

    def _commit(self, kind: str, ts: datetime, payload: dict) -> dict:
        event = {
            "seq": self.log.watermark + 1,
            "ts": iso(ts),
            "board": self.config.board_id,
            "kind": kind,
        }
        event.update(payload)
        self.log.append([event])
        fold_event(self.snapshot, event)
        return event

    def _make_msg_id(self):
        # Allocates ids ahead of the fold that will bump msg_counter.
        state = {"next": self.snapshot.msg_counter + 1}

        def make_id() -> str:
            msg_id = f"m{state['next']:06d}"
            state["next"] += 1
            return msg_id

        return make_id

    # -- external board writes --------------------------------------------

    def inject_ticket(self, ticket_id: str, reporter: str, at: datetime,
                      priority: str = "Medium",
                      sla_deadline: datetime | None = None,
                      labels: tuple[str, ...] = ()) -> Ticket:
        payload = {
            "ticket": ticket_id,
            "reporter": reporter,
            "priority": priority,
        }
        if sla_deadline is not None:
            payload["sla_deadline"] = iso(sla_deadline)
        if labels:
            payload["labels"] = list(labels)
        self._commit(KIND_CREATED, at, payload)
        return self.snapshot.tickets[ticket_id]

    def apply_external_transition(self, ticket_id: str, to: WorkflowState,
                                  at: datetime, actor: str,
                                  announce: bool = True) -> Ticket:
        """Record a state change made on the board (by an engineer or
        reporter), announcing it on the review channel."""
        ticket = self.snapshot.tickets[ticket_id]
        payload: dict = {"ticket": ticket_id, "from": ticket.state.value,
                         "to": to.value, "actor": actor}
        if announce:
            msg = announce_state_change(ticket_id, ticket.state, to, at,
                                        self.config.binding,
                                        self._make_msg_id())
            payload["messages"] = [msg.wire()]
        self._commit(KIND_TRANSITIONED, at, payload)
        return self.snapshot.tickets[ticket_id]

    def reopen_ticket(self, ticket_id: str, mode: ReopenMode, at: datetime,
                      actor: str = "reopen") -> Ticket:
        ticket = self.snapshot.tickets[ticket_id]
        to = (WorkflowState.BACKLOG if mode is ReopenMode.TO_BACKLOG
              else WorkflowState.WORK_IN_PROGRESS)
        msg = announce_state_change(ticket_id, ticket.state, to, at,
                                    self.config.binding, self._make_msg_id())
        self._commit(KIND_TRANSITIONED, at, {
            "ticket": ticket_id,
            "from": ticket.state.value,
            "to": to.value,
            "actor": actor,
            "reopen_mode": mode.value,
            "messages": [msg.wire()],
        })
        return self.snapshot.tickets[ticket_id]

    def reassign_ticket(self, ticket_id: str, to: str,
                        at: datetime) -> AssignmentDecision:
        ticket = self.snapshot.tickets[ticket_id]
        if ticket.state is WorkflowState.DONE:
            raise TicketAlreadyDoneError(ticket_id)
        if to not in self.config.roster:
            raise UnknownEngineerError(to)
        decision = AssignmentDecision(
            ticket_id=ticket_id, engineer_id=to, policy=POLICY_MANUAL,
            decided_at=at, cursor_after=None)
        msg = announce_assignment(decision, self.config.binding,
                                  self._make_msg_id())
        self._commit(KIND_REASSIGNED, at, {
            "ticket": ticket_id,
            "engineer": to,
            "from_engineer": ticket.assignee,
            "messages": [msg.wire()],
        })
        return decision

    # -- the periodic cycle ------------------------------------------------

    def _decide(self, ticket: Ticket, now: datetime) -> AssignmentDecision | None:
        """Pick an engineer under the configured policy; None defers the
        ticket (manual plan not due yet)."""
        cfg = self.config
        cursor = AssignmentCursor(cfg.team_id, self.snapshot.cursor_position)
        if cfg.policy == POLICY_ROUND_ROBIN:
            decision, _ = round_robin_assign(cfg.roster, cursor, ticket, now)
            return decision
        if cfg.policy == POLICY_EXPERTISE:
            profile = cfg.expertise or ExpertiseProfile({}, {})
            decision, _ = expertise_assign(profile, cfg.roster, ticket, now,
                                           self.snapshot.assign_counts,
                                           cursor)
            return decision
        if cfg.policy == POLICY_LEAST_OPEN:
            open_counts: dict[str, int] = {}
            for tid in self.snapshot.open_tickets:
                assignee = self.snapshot.tickets[tid].assignee
                if assignee is not None:
                    open_counts[assignee] = open_counts.get(assignee, 0) + 1
            return least_open_assign(open_counts, cfg.roster, ticket, now)
        if cfg.policy == POLICY_MANUAL:
            plan = self.manual_plan.get(ticket.id)
            if plan is None or plan[1] > now:
                return None
            return AssignmentDecision(
                ticket_id=ticket.id, engineer_id=plan[0],
                policy=POLICY_MANUAL, decided_at=now, cursor_after=None)
        raise ValueError(f"unknown policy: {cfg.policy}")

    def run_cycle(self, now: datetime) -> CycleReport:
        """One bot pass: assign new unassigned tickets, evaluate due
        reminders (skipping tickets assigned this very cycle), then flush
        the outbox through the sinks. Sink failures never abort the cycle.
        """
        report = CycleReport(now=now)
        assigned_now: set[str] = set()

        for ticket in poll_new_unassigned(self.snapshot):
            if report.empty_pool:
                report.unassigned_pending += 1
                continue
            try:
                decision = self._decide(ticket, now)
            except EmptyPoolError:
                report.empty_pool = True
                report.unassigned_pending += 1
                continue
            if decision is None:
                report.unassigned_pending += 1
                continue
            msg = announce_assignment(decision, self.config.binding,
                                      self._make_msg_id())
            self._commit(KIND_ASSIGNED, now, {
                "ticket": ticket.id,
                "engineer": decision.engineer_id,
                "policy": decision.policy,
                "cursor_after": decision.cursor_after,
                "messages": [msg.wire()],
            })
            report.assigned += 1
            report.assignments.append((ticket.id, decision.engineer_id))
            assigned_now.add(ticket.id)

        if self.config.thresholds is not None:
            open_now = sorted(self.snapshot.open_tickets - assigned_now)
            tickets = [self.snapshot.tickets[tid] for tid in open_now]
            for reminder in due_reminders(tickets, now,
                                          self.config.thresholds,
                                          self.snapshot.reminder_ledger):
                messages = route_reminder(reminder, self.config.binding,
                                          self._make_msg_id())
                self._commit(KIND_REMINDER_SENT, now, {
                    "ticket": reminder.ticket_id,
                    "reminder_kind": reminder.kind.value,
                    "index": reminder.escalation_index,
                    "recipients": list(reminder.recipients),
                    "messages": [m.wire() for m in messages],
                })
                report.reminders_sent += 1

        self._flush_outbox(now, report)
        return report

    def _flush_outbox(self, now: datetime, report: CycleReport) -> None:
        for msg_id in list(self.snapshot.outbox):
            msg = self.snapshot.outbox[msg_id]
            if msg.delivery_state == STATE_DELIVERED or msg.terminal:
                continue
            sink = self.sinks.get(msg.channel)
            state, retries, terminal = STATE_DELIVERED, msg.retries, False
            try:
                if sink is None:
                    raise SinkUnreachable(f"no sink for {msg.channel.value}")
                sink.deliver(msg)
            except PayloadRejected:
                state, retries, terminal = STATE_FAILED, retries + 1, True
            except SinkUnreachable:
                state, retries = STATE_FAILED, retries + 1
                terminal = retries >= self.config.max_retries
            self._commit(KIND_MESSAGE_DELIVERED, now, {
                "msg_id": msg_id,
                "state": state,
                "retries": retries,
                "terminal": terminal,
            })
            if state == STATE_DELIVERED:
                report.messages_delivered += 1
            else:
                report.messages_failed += 1
