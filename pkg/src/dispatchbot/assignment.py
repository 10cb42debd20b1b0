"""Assignment policies: round-robin over the available pool, the two
rejected baselines (expertise, least-open-count), and manual reassignment.

All policies are pure given (roster, cursor, counts) and deterministic:
ties break on stable roster order everywhere.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from datetime import datetime

from .roster import EngineerRoster, available_pool
from .workflow import Ticket, WorkflowState

POLICY_ROUND_ROBIN = "RoundRobin"
POLICY_EXPERTISE = "Expertise"
POLICY_LEAST_OPEN = "LeastOpen"
POLICY_MANUAL = "Manual"

POLICIES = (POLICY_ROUND_ROBIN, POLICY_EXPERTISE, POLICY_LEAST_OPEN,
            POLICY_MANUAL)


class EmptyPoolError(Exception):
    """No engineer is available; the ticket stays unassigned until the
    next cycle."""


class UnknownEngineerError(Exception):
    pass


class TicketAlreadyDoneError(Exception):
    pass


@dataclass
class AssignmentCursor:
    team_id: str
    position: int = 0


@dataclass(frozen=True)
class AssignmentDecision:
    ticket_id: str
    engineer_id: str
    policy: str
    decided_at: datetime
    cursor_after: int | None = None


@dataclass(frozen=True)
class ExpertiseProfile:
    #: engineer id -> skill tags held
    skills: dict[str, frozenset[str]]
    #: ticket label -> skill tag
    label_tags: dict[str, str]

    def ticket_tag(self, ticket: Ticket) -> str | None:
        for label in ticket.labels:
            if label in self.label_tags:
                return self.label_tags[label]
        return None


def round_robin_assign(
    roster: EngineerRoster,
    cursor: AssignmentCursor,
    ticket: Ticket,
    at: datetime,
) -> tuple[AssignmentDecision, AssignmentCursor]:
    """Assign to the first available engineer at or after the cursor in
    cyclic roster order.

    The returned cursor points one past the chosen engineer (not past the
    skipped unavailable ones), so returning engineers resume their fair
    share.
    """
    order = roster.order
    if not order:
        raise EmptyPoolError(f"team {roster.team_id}: empty roster")
    pool = set(available_pool(roster, at.date()))
    if not pool:
        raise EmptyPoolError(f"team {roster.team_id}: nobody available")
    n = len(order)
    start = cursor.position % n
    for k in range(n):
        i = (start + k) % n
        if order[i] in pool:
            decision = AssignmentDecision(
                ticket_id=ticket.id,
                engineer_id=order[i],
                policy=POLICY_ROUND_ROBIN,
                decided_at=at,
                cursor_after=(i + 1) % n,
            )
            return decision, AssignmentCursor(roster.team_id, (i + 1) % n)
    raise EmptyPoolError(f"team {roster.team_id}: nobody available")


def expertise_assign(
    profile: ExpertiseProfile,
    roster: EngineerRoster,
    ticket: Ticket,
    at: datetime,
    assigned_counts: dict[str, int],
    cursor: AssignmentCursor,
) -> tuple[AssignmentDecision, AssignmentCursor]:
    """Prefer an available engineer whose skills cover the ticket's tag.

    Among several experts, pick the one with the least assigned-so-far
    count (roster order on ties). With no available expert, fall back to
    plain round-robin order rather than stranding the ticket; the cursor
    advances only on the fallback path.
    """
    pool = available_pool(roster, at.date())
    if not pool:
        raise EmptyPoolError(f"team {roster.team_id}: nobody available")
    tag = profile.ticket_tag(ticket)
    if tag is not None:
        experts = [e for e in pool if tag in profile.skills.get(e, frozenset())]
        if experts:
            chosen = min(
                experts,
                key=lambda e: (assigned_counts.get(e, 0),
                               roster.order.index(e)),
            )
            decision = AssignmentDecision(
                ticket_id=ticket.id,
                engineer_id=chosen,
                policy=POLICY_EXPERTISE,
                decided_at=at,
                cursor_after=cursor.position,
            )
            return decision, cursor
    rr_decision, new_cursor = round_robin_assign(roster, cursor, ticket, at)
    decision = AssignmentDecision(
        ticket_id=ticket.id,
        engineer_id=rr_decision.engineer_id,
        policy=POLICY_EXPERTISE,
        decided_at=at,
        cursor_after=rr_decision.cursor_after,
    )
    return decision, new_cursor


def least_open_assign(
    open_counts: dict[str, int],
    roster: EngineerRoster,
    ticket: Ticket,
    at: datetime,
) -> AssignmentDecision:
    """Assign to the available engineer with the fewest open (non-Done)
    tickets; missing counts read as 0. This is the gameable policy: an
    engineer who keeps tickets open suppresses their own assignments.
    """
    pool = available_pool(roster, at.date())
    if not pool:
        raise EmptyPoolError(f"team {roster.team_id}: nobody available")
    chosen = min(
        pool,
        key=lambda e: (open_counts.get(e, 0), roster.order.index(e)),
    )
    return AssignmentDecision(
        ticket_id=ticket.id,
        engineer_id=chosen,
        policy=POLICY_LEAST_OPEN,
        decided_at=at,
        cursor_after=None,
    )


def reassign(
    ticket: Ticket,
    to: str,
    at: datetime,
    roster: EngineerRoster,
) -> tuple[Ticket, AssignmentDecision]:
    """Manual transfer between engineers; closed tickets are immutable."""
    if ticket.state is WorkflowState.DONE:
        raise TicketAlreadyDoneError(ticket.id)
    if to not in roster:
        raise UnknownEngineerError(to)
    updated = replace(ticket, assignee=to)
    decision = AssignmentDecision(
        ticket_id=ticket.id,
        engineer_id=to,
        policy=POLICY_MANUAL,
        decided_at=at,
        cursor_after=None,
    )
    return updated, decision
