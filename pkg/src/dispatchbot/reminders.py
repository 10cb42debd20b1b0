"""Stuck-state and SLA reminder evaluation.

Everything here is a pure function over a snapshot of tickets plus a
ledger of already-sent reminders, so the scheduler is reentrant and
replays deterministically on a virtual clock.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from enum import Enum
from typing import Iterable, Mapping

from .workflow import Priority, Ticket, WorkflowState


class ReminderKind(str, Enum):
    STUCK_STATE = "StuckState"
    SLA_IMMINENT = "SlaImminent"
    SLA_BREACHED = "SlaBreached"


class SlaStatus(str, Enum):
    OK = "Ok"
    IMMINENT = "Imminent"
    BREACHED = "Breached"


#: Fallback stuck thresholds (hours) when a team configures nothing.
#: Blocked gets a tighter leash; Done never triggers.
DEFAULT_STUCK_HOURS: dict[WorkflowState, float] = {
    WorkflowState.BACKLOG: 120.0,
    WorkflowState.READY_TO_START: 120.0,
    WorkflowState.WORK_IN_PROGRESS: 120.0,
    WorkflowState.BLOCKED: 72.0,
    WorkflowState.READY_FOR_REVIEW: 120.0,
}


@dataclass(frozen=True)
class ThresholdPolicy:
    team_id: str = ""
    stuck_hours: Mapping[WorkflowState, float] = field(
        default_factory=lambda: dict(DEFAULT_STUCK_HOURS))
    sla_warning_fraction: float = 0.2
    reminder_period_hours: float = 24.0

    def __post_init__(self) -> None:
        if not 0 < self.sla_warning_fraction <= 1:
            raise ValueError("sla_warning_fraction must be in (0, 1]")
        if self.reminder_period_hours <= 0:
            raise ValueError("reminder_period_hours must be > 0")
        for state, hours in self.stuck_hours.items():
            if state is WorkflowState.DONE:
                raise ValueError("Done has no stuck threshold")
            if hours <= 0:
                raise ValueError(f"threshold for {state.value} must be > 0")

    def stuck_threshold(self, state: WorkflowState,
                        priority: Priority) -> timedelta:
        hours = self.stuck_hours.get(state, DEFAULT_STUCK_HOURS[state])
        if priority is Priority.HIGH:
            hours /= 2.0
        return timedelta(hours=hours)

    @property
    def reminder_period(self) -> timedelta:
        return timedelta(hours=self.reminder_period_hours)


@dataclass(frozen=True)
class Reminder:
    ticket_id: str
    kind: ReminderKind
    recipients: tuple[str, ...]
    escalation_index: int
    generated_at: datetime

    def ledger_key(self) -> tuple[str, str, int]:
        return (self.ticket_id, self.kind.value, self.escalation_index)


def stuck_tickets(
    tickets: Iterable[Ticket],
    now: datetime,
    policy: ThresholdPolicy,
) -> list[tuple[Ticket, timedelta]]:
    """Tickets sitting in one non-Done state strictly longer than the
    threshold, with how long they have been stuck."""
    out = []
    for t in tickets:
        if t.state is WorkflowState.DONE:
            continue
        elapsed = now - (t.state_entered_at or t.created_at)
        if elapsed > policy.stuck_threshold(t.state, t.priority):
            out.append((t, elapsed))
    return out


def sla_status(ticket: Ticket, now: datetime,
               policy: ThresholdPolicy) -> SlaStatus:
    if now > ticket.sla_deadline:
        return SlaStatus.BREACHED
    window = ticket.sla_deadline - ticket.created_at
    remaining = ticket.sla_deadline - now
    if remaining < policy.sla_warning_fraction * window:
        return SlaStatus.IMMINENT
    return SlaStatus.OK


def _escalations_due(trigger: datetime, now: datetime,
                     period: timedelta) -> int:
    """How many escalations are due strictly after `trigger`.

    The boundary is strict on both ends: nothing fires at the trigger
    instant, and exactly n reminders are due n periods past it.
    """
    elapsed = now - trigger
    if elapsed <= timedelta(0):
        return 0
    return math.ceil(elapsed / period)


def _recipients(ticket: Ticket, team_channel: str | None = None) -> tuple[str, ...]:
    names = {ticket.reporter}
    if ticket.assignee:
        names.add(ticket.assignee)
    if team_channel:
        names.add(team_channel)
    return tuple(sorted(names))


def due_reminders(
    tickets: Iterable[Ticket],
    now: datetime,
    policy: ThresholdPolicy,
    already_sent: set[tuple[str, str, int]],
) -> list[Reminder]:
    """Reminders triggered at `now` whose (ticket, kind, index) is not in
    the persisted ledger. Idempotent: with an updated ledger, a repeat
    call at the same instant emits nothing.
    """
    period = policy.reminder_period
    out: list[Reminder] = []

    def emit(ticket: Ticket, kind: ReminderKind, count: int,
             recipients: tuple[str, ...]) -> None:
        for index in range(1, count + 1):
            key = (ticket.id, kind.value, index)
            if key not in already_sent:
                out.append(Reminder(
                    ticket_id=ticket.id,
                    kind=kind,
                    recipients=recipients,
                    escalation_index=index,
                    generated_at=now,
                ))

    for t in tickets:
        if t.state is WorkflowState.DONE:
            continue
        stuck_trigger = ((t.state_entered_at or t.created_at)
                         + policy.stuck_threshold(t.state, t.priority))
        emit(t, ReminderKind.STUCK_STATE,
             _escalations_due(stuck_trigger, now, period), _recipients(t))

        window = t.sla_deadline - t.created_at
        warn_at = t.sla_deadline - policy.sla_warning_fraction * window
        # The imminent stream is capped at the deadline, where the
        # breached stream takes over; the triggered set stays monotone.
        emit(t, ReminderKind.SLA_IMMINENT,
             _escalations_due(warn_at, min(now, t.sla_deadline), period),
             _recipients(t))
        if sla_status(t, now, policy) is SlaStatus.BREACHED:
            # Breach notifications additionally reach the team channel.
            emit(t, ReminderKind.SLA_BREACHED,
                 _escalations_due(t.sla_deadline, now, period),
                 _recipients(t, team_channel=f"team:{policy.team_id}"))
    return out
