"""Notification gateway: channel bindings, message templates, sinks.

Channels are abstract (ChatA / ChatB / Email); a binding maps each enabled
channel to an endpoint descriptor, either a file path (append one JSON
object per line) or an http(s) webhook URL (POST the same object).
Delivery is at-least-once with idempotent message ids; dedup is the
receiver's concern.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from datetime import datetime
from enum import Enum
from pathlib import Path
from typing import Protocol

import requests

from .assignment import AssignmentDecision
from .reminders import Reminder
from .timeutil import iso
from .workflow import WorkflowState

DEFAULT_MAX_RETRIES = 3

STATE_PENDING = "Pending"
STATE_DELIVERED = "Delivered"
STATE_FAILED = "Failed"


class Channel(str, Enum):
    CHAT_A = "ChatA"
    CHAT_B = "ChatB"
    EMAIL = "Email"


#: Stable fan-out order for reminders.
CHANNEL_ORDER = (Channel.CHAT_A, Channel.CHAT_B, Channel.EMAIL)

#: Channels eligible to carry the per-team review feed.
CHAT_CHANNELS = frozenset({Channel.CHAT_A, Channel.CHAT_B})


class BindingError(ValueError):
    pass


@dataclass(frozen=True)
class ChannelBinding:
    team_id: str
    #: enabled channel -> endpoint descriptor (file path or webhook URL)
    endpoints: dict[Channel, str]
    review_channel: Channel

    def __post_init__(self) -> None:
        if not self.endpoints:
            raise BindingError(f"team {self.team_id}: no channels enabled")
        if self.review_channel not in self.endpoints:
            raise BindingError(
                f"team {self.team_id}: review channel not enabled")
        if self.review_channel not in CHAT_CHANNELS:
            raise BindingError(
                f"team {self.team_id}: review channel must be a chat channel")

    def enabled(self) -> list[Channel]:
        return [c for c in CHANNEL_ORDER if c in self.endpoints]


@dataclass
class OutboundMessage:
    msg_id: str
    team_id: str
    channel: Channel
    kind: str
    ticket_id: str
    text: str
    created_at: datetime
    delivery_state: str = STATE_PENDING
    retries: int = 0
    terminal: bool = False

    def wire(self) -> dict:
        """The payload put on the wire (webhook body / file line)."""
        return {
            "msg_id": self.msg_id,
            "team": self.team_id,
            "channel": self.channel.value,
            "kind": self.kind,
            "ticket": self.ticket_id,
            "text": self.text,
            "ts": iso(self.created_at),
        }


# ---------------------------------------------------------------------------
# Message templates (bit-exact; covered by golden tests)
# ---------------------------------------------------------------------------

def assignment_text(decision: AssignmentDecision) -> str:
    return (f"ASSIGNED {decision.ticket_id} -> {decision.engineer_id} "
            f"[{decision.policy}] at {iso(decision.decided_at)}")


def state_change_text(ticket_id: str, from_state: WorkflowState,
                      to_state: WorkflowState, at: datetime) -> str:
    return (f"STATE {ticket_id} {from_state.value} -> {to_state.value} "
            f"at {iso(at)}")


def reminder_text(reminder: Reminder) -> str:
    return (f"REMIND {reminder.ticket_id} {reminder.kind.value} "
            f"#{reminder.escalation_index} at {iso(reminder.generated_at)}")


# ---------------------------------------------------------------------------
# Routing
# ---------------------------------------------------------------------------

def route_reminder(reminder: Reminder, binding: ChannelBinding,
                   make_id) -> list[OutboundMessage]:
    """One message per enabled channel."""
    return [
        OutboundMessage(
            msg_id=make_id(),
            team_id=binding.team_id,
            channel=channel,
            kind=reminder.kind.value,
            ticket_id=reminder.ticket_id,
            text=reminder_text(reminder),
            created_at=reminder.generated_at,
        )
        for channel in binding.enabled()
    ]


def announce_assignment(decision: AssignmentDecision, binding: ChannelBinding,
                        make_id) -> OutboundMessage:
    """Exactly one message, to the team's review channel."""
    return OutboundMessage(
        msg_id=make_id(),
        team_id=binding.team_id,
        channel=binding.review_channel,
        kind="Assignment",
        ticket_id=decision.ticket_id,
        text=assignment_text(decision),
        created_at=decision.decided_at,
    )


def announce_state_change(ticket_id: str, from_state: WorkflowState,
                          to_state: WorkflowState, at: datetime,
                          binding: ChannelBinding, make_id) -> OutboundMessage:
    return OutboundMessage(
        msg_id=make_id(),
        team_id=binding.team_id,
        channel=binding.review_channel,
        kind="StateChange",
        ticket_id=ticket_id,
        text=state_change_text(ticket_id, from_state, to_state, at),
        created_at=at,
    )


def route(item, binding: ChannelBinding, make_id) -> list[OutboundMessage]:
    """Fan a reminder out to every enabled channel, or an assignment
    announcement to the review channel only."""
    if isinstance(item, Reminder):
        return route_reminder(item, binding, make_id)
    if isinstance(item, AssignmentDecision):
        return [announce_assignment(item, binding, make_id)]
    raise TypeError(f"cannot route {type(item).__name__}")


# ---------------------------------------------------------------------------
# Sinks
# ---------------------------------------------------------------------------

class SinkUnreachable(Exception):
    """Transient delivery failure; retried on the next cycle."""


class PayloadRejected(Exception):
    """Permanent delivery failure; the message is failed terminally."""


class Sink(Protocol):
    def deliver(self, message: OutboundMessage) -> None: ...


class FileSink:
    """Appends one JSON object per line to `<dir>/<channel>.ndjson`."""

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)

    def deliver(self, message: OutboundMessage) -> None:
        self.directory.mkdir(parents=True, exist_ok=True)
        path = self.directory / f"{message.channel.value}.ndjson"
        line = json.dumps(message.wire(), sort_keys=True,
                          separators=(",", ":"))
        with path.open("a", encoding="utf-8") as fh:
            fh.write(line + "\n")


class WebhookSink:
    """POSTs the wire payload as JSON; any 2xx counts as delivered."""

    def __init__(self, url: str, timeout: float = 10.0):
        self.url = url
        self.timeout = timeout

    def deliver(self, message: OutboundMessage) -> None:
        try:
            resp = requests.post(self.url, json=message.wire(),
                                 timeout=self.timeout)
        except requests.RequestException as exc:
            raise SinkUnreachable(str(exc)) from exc
        if 200 <= resp.status_code < 300:
            return
        if 400 <= resp.status_code < 500:
            raise PayloadRejected(f"HTTP {resp.status_code}")
        raise SinkUnreachable(f"HTTP {resp.status_code}")


class MemorySink:
    """Collects wire payloads in memory; used by tests and dry runs."""

    def __init__(self):
        self.delivered: list[dict] = []

    def deliver(self, message: OutboundMessage) -> None:
        self.delivered.append(message.wire())


def sink_for_endpoint(descriptor: str) -> Sink:
    if descriptor.startswith("http://") or descriptor.startswith("https://"):
        return WebhookSink(descriptor)
    return FileSink(descriptor)


def deliver(message: OutboundMessage, sink: Sink,
            max_retries: int = DEFAULT_MAX_RETRIES) -> OutboundMessage:
    """Attempt delivery of a non-terminal message, in place.

    Transient failures increment the retry count and become terminal once
    max_retries attempts have failed; rejections are terminal immediately.
    """
    if message.delivery_state == STATE_DELIVERED or message.terminal:
        raise ValueError(f"{message.msg_id}: not pending")
    try:
        sink.deliver(message)
    except PayloadRejected:
        message.delivery_state = STATE_FAILED
        message.retries += 1
        message.terminal = True
    except SinkUnreachable:
        message.delivery_state = STATE_FAILED
        message.retries += 1
        if message.retries >= max_retries:
            message.terminal = True
    else:
        message.delivery_state = STATE_DELIVERED
    return message
