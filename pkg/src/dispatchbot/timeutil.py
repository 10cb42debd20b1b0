"""Time helpers: UTC second-precision timestamps and business-day arithmetic."""

from __future__ import annotations

from datetime import date, datetime, timedelta, timezone

UTC = timezone.utc
SECOND = timedelta(seconds=1)
HOUR = timedelta(hours=1)
DAY = timedelta(days=1)


def utc_now() -> datetime:
    return datetime.now(tz=UTC).replace(microsecond=0)


def iso(ts: datetime) -> str:
    """Render an aware timestamp as ISO-8601 UTC with a Z suffix."""
    return ts.astimezone(UTC).strftime("%Y-%m-%dT%H:%M:%SZ")


def parse_ts(raw: str) -> datetime:
    """Parse ISO-8601; naive input is taken as UTC. Truncates to seconds."""
    if raw.endswith("Z"):
        raw = raw[:-1] + "+00:00"
    ts = datetime.fromisoformat(raw)
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=UTC)
    return ts.astimezone(UTC).replace(microsecond=0)


def parse_date(raw: str) -> date:
    return date.fromisoformat(raw)


def is_business_day(d: date) -> bool:
    return d.weekday() < 5


def add_business_days(start: datetime, days: int) -> datetime:
    """Advance by whole business days, skipping Saturdays and Sundays."""
    out = start
    remaining = days
    while remaining > 0:
        out += DAY
        if is_business_day(out.date()):
            remaining -= 1
    return out


def business_days(start: date, count: int) -> list[date]:
    """The first `count` business days on or after `start`."""
    out: list[date] = []
    d = start
    while len(out) < count:
        if is_business_day(d):
            out.append(d)
        d += DAY
    return out
