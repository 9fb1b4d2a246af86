"""Local-time arithmetic on UTC epoch seconds with a fixed UTC offset.

The study area runs on US Eastern Daylight Time (UTC-4) for the whole
window, so a fixed offset is used instead of a tz database. All helpers
work in integer seconds; local days are indexed by days-since-epoch of the
local calendar.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import date, datetime, timezone

DAY_S = 86400
HOUR_S = 3600
DEFAULT_UTC_OFFSET_HOURS = -4.0

_EPOCH_ORDINAL = date(1970, 1, 1).toordinal()


@dataclass(frozen=True)
class LocalClock:
    offset_s: int

    @classmethod
    def from_hours(cls, hours=DEFAULT_UTC_OFFSET_HOURS):
        return cls(offset_s=int(round(hours * HOUR_S)))

    def day_index(self, epoch):
        """Local days since 1970-01-01 (works on scalars and arrays)."""
        return (epoch + self.offset_s) // DAY_S

    def day_start(self, day_index):
        """UTC epoch of local midnight opening the given local day."""
        return int(day_index) * DAY_S - self.offset_s

    def day_of(self, d):
        """Local day index of a calendar date."""
        return d.toordinal() - _EPOCH_ORDINAL

    def date_of(self, day_index):
        return date.fromordinal(int(day_index) + _EPOCH_ORDINAL)

    def weekday(self, day_index):
        """0=Monday .. 6=Sunday (1970-01-01 was a Thursday)."""
        return (int(day_index) + 3) % 7

    def night_interval(self, day_index, start_hour=20, end_hour=6):
        """[start, end) of the night assigned to the given local day."""
        t0 = self.day_start(day_index) + start_hour * HOUR_S
        t1 = self.day_start(day_index + 1) + end_hour * HOUR_S
        return t0, t1

    def local_time(self, day_index, hour=0, minute=0, second=0):
        return (self.day_start(day_index)
                + hour * HOUR_S + minute * 60 + second)

    def hour_floor(self, epoch):
        local = epoch + self.offset_s
        return (local // HOUR_S) * HOUR_S - self.offset_s

    def iso_local(self, epoch):
        dt = datetime.fromtimestamp(int(epoch) + self.offset_s, tz=timezone.utc)
        return dt.strftime("%Y-%m-%dT%H:%M:%S")


def parse_date(text):
    return date.fromisoformat(text)


def parse_utc(text):
    """ISO-8601 with explicit offset (or trailing Z) to UTC epoch seconds."""
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    dt = datetime.fromisoformat(text)
    if dt.tzinfo is None:
        raise ValueError(f"timestamp {text!r} lacks a UTC offset")
    return int(dt.timestamp())
