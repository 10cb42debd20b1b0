"""Engineer rosters and availability filtering.

Roster order is insertion order and is never permuted; joins append at the
end so the assignment cursor's frame of reference stays stable.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import date


@dataclass(frozen=True)
class RosterEntry:
    engineer_id: str
    joined_at: date | None = None
    separated_at: date | None = None
    #: Closed [start, end] leave intervals (leaves, regional holidays).
    leaves: tuple[tuple[date, date], ...] = ()


@dataclass
class EngineerRoster:
    team_id: str
    entries: list[RosterEntry] = field(default_factory=list)

    def __post_init__(self) -> None:
        seen: set[str] = set()
        for e in self.entries:
            if e.engineer_id in seen:
                raise ValueError(f"duplicate engineer id: {e.engineer_id}")
            seen.add(e.engineer_id)
            if (e.joined_at is not None and e.separated_at is not None
                    and e.separated_at < e.joined_at):
                raise ValueError(
                    f"{e.engineer_id}: separated_at before joined_at")

    @property
    def order(self) -> list[str]:
        return [e.engineer_id for e in self.entries]

    def __contains__(self, engineer_id: str) -> bool:
        return any(e.engineer_id == engineer_id for e in self.entries)

    def __len__(self) -> int:
        return len(self.entries)

    def add_engineer(self, entry: RosterEntry) -> None:
        """Append a new engineer at the end of roster order."""
        if entry.engineer_id in self:
            raise ValueError(f"duplicate engineer id: {entry.engineer_id}")
        self.entries.append(entry)

    def is_available(self, engineer_id: str, on: date) -> bool:
        for e in self.entries:
            if e.engineer_id != engineer_id:
                continue
            if e.joined_at is not None and on < e.joined_at:
                return False
            if e.separated_at is not None and on > e.separated_at:
                return False
            return not any(start <= on <= end for start, end in e.leaves)
        return False


def available_pool(roster: EngineerRoster, on: date) -> list[str]:
    """Engineers available on a date, in roster order. May be empty."""
    return [e for e in roster.order if roster.is_available(e, on)]
