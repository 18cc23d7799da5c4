"""Granularity-aware UTC timestamps.

A :class:`Timestamp` carries the precision it was observed at. Instants are
truncated to the start of their granularity on construction, so ``2023-06``
and ``2023-06-17`` differ as values but compare as ``CONCURRENT`` once both
are viewed at month precision.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from enum import Enum


class Granularity(str, Enum):
    YEAR = "year"
    MONTH = "month"
    DAY = "day"
    HOUR = "hour"
    MINUTE = "minute"
    UNKNOWN = "unknown"


# coarse -> fine
_ORDER = [Granularity.YEAR, Granularity.MONTH, Granularity.DAY, Granularity.HOUR, Granularity.MINUTE]
_RANK = {g: i for i, g in enumerate(_ORDER)}


class TemporalRelation(str, Enum):
    BEFORE = "before"
    AFTER = "after"
    CONCURRENT = "concurrent"
    UNKNOWN = "unknown"

    def inverse(self) -> "TemporalRelation":
        if self is TemporalRelation.BEFORE:
            return TemporalRelation.AFTER
        if self is TemporalRelation.AFTER:
            return TemporalRelation.BEFORE
        return self


def coarser(a: Granularity, b: Granularity) -> Granularity:
    if Granularity.UNKNOWN in (a, b):
        return Granularity.UNKNOWN
    return a if _RANK[a] <= _RANK[b] else b


def _truncate(dt: datetime, g: Granularity) -> datetime:
    if g is Granularity.YEAR:
        return dt.replace(month=1, day=1, hour=0, minute=0, second=0, microsecond=0)
    if g is Granularity.MONTH:
        return dt.replace(day=1, hour=0, minute=0, second=0, microsecond=0)
    if g is Granularity.DAY:
        return dt.replace(hour=0, minute=0, second=0, microsecond=0)
    if g is Granularity.HOUR:
        return dt.replace(minute=0, second=0, microsecond=0)
    return dt.replace(second=0, microsecond=0)


_ISO_RE = re.compile(
    r"""^(?P<y>\d{4})
        (?:-(?P<mo>\d{2})
          (?:-(?P<d>\d{2})
            (?:[T ](?P<h>\d{2})
              (?::(?P<mi>\d{2})(?::(?P<s>\d{2})(?:\.\d+)?)?)?
              (?P<tz>Z|[+-]\d{2}:?\d{2})?
            )?
          )?
        )?$""",
    re.VERBOSE,
)


@dataclass(frozen=True)
class Timestamp:
    instant: datetime | None
    granularity: Granularity

    def __post_init__(self) -> None:
        g = Granularity(self.granularity)
        object.__setattr__(self, "granularity", g)
        if g is Granularity.UNKNOWN:
            object.__setattr__(self, "instant", None)
            return
        if self.instant is None:
            raise ValueError("known granularity requires an instant")
        dt = self.instant
        if dt.tzinfo is None:
            dt = dt.replace(tzinfo=timezone.utc)
        dt = dt.astimezone(timezone.utc)
        object.__setattr__(self, "instant", _truncate(dt, g))

    # -- construction -----------------------------------------------------

    @classmethod
    def unknown(cls) -> "Timestamp":
        return cls(None, Granularity.UNKNOWN)

    @classmethod
    def of(cls, year: int, month: int | None = None, day: int | None = None,
           hour: int | None = None, minute: int | None = None) -> "Timestamp":
        parts = [month, day, hour, minute]
        g = Granularity.YEAR
        for value, gran in zip(parts, _ORDER[1:]):
            if value is None:
                break
            g = gran
        dt = datetime(year, month or 1, day or 1, hour or 0, minute or 0, tzinfo=timezone.utc)
        return cls(dt, g)

    @classmethod
    def parse(cls, text: str) -> "Timestamp":
        """Parse ``unknown`` or an ISO-8601 prefix (``2023``, ``2023-06``, ``2023-06-15T10:30Z``).

        Raises ``ValueError`` on anything else.
        """
        text = text.strip()
        if text.lower() == "unknown":
            return cls.unknown()
        m = _ISO_RE.match(text)
        if not m:
            raise ValueError(f"unparseable timestamp {text!r}")
        y, mo, d, h, mi, s, tz = (m.group(k) for k in ("y", "mo", "d", "h", "mi", "s", "tz"))
        if mo is None:
            g = Granularity.YEAR
        elif d is None:
            g = Granularity.MONTH
        elif h is None:
            g = Granularity.DAY
        elif mi is None:
            g = Granularity.HOUR
        else:
            g = Granularity.MINUTE
        tzinfo = timezone.utc
        if tz and tz != "Z":
            sign = 1 if tz[0] == "+" else -1
            digits = tz[1:].replace(":", "")
            tzinfo = timezone(sign * timedelta(hours=int(digits[:2]), minutes=int(digits[2:])))
        dt = datetime(int(y), int(mo or 1), int(d or 1), int(h or 0), int(mi or 0), int(s or 0),
                      tzinfo=tzinfo)
        return cls(dt, g)

    # -- views ------------------------------------------------------------

    @property
    def known(self) -> bool:
        return self.granularity is not Granularity.UNKNOWN

    def __str__(self) -> str:
        if not self.known:
            return "unknown"
        dt = self.instant
        g = self.granularity
        if g is Granularity.YEAR:
            return f"{dt.year:04d}"
        if g is Granularity.MONTH:
            return f"{dt.year:04d}-{dt.month:02d}"
        if g is Granularity.DAY:
            return f"{dt.year:04d}-{dt.month:02d}-{dt.day:02d}"
        if g is Granularity.HOUR:
            return f"{dt.year:04d}-{dt.month:02d}-{dt.day:02d}T{dt.hour:02d}Z"
        return f"{dt.year:04d}-{dt.month:02d}-{dt.day:02d}T{dt.hour:02d}:{dt.minute:02d}Z"

    def truncated(self, granularity: Granularity) -> "Timestamp":
        """View at a coarser (or equal) granularity."""
        if not self.known or granularity is Granularity.UNKNOWN:
            return Timestamp.unknown()
        if _RANK[granularity] > _RANK[self.granularity]:
            raise ValueError(f"cannot refine {self.granularity.value} to {granularity.value}")
        return Timestamp(self.instant, granularity)

    def midpoint(self) -> datetime | None:
        """Representative instant: mid-year is Jul 1, mid-month is the 15th."""
        if not self.known:
            return None
        if self.granularity is Granularity.YEAR:
            return self.instant.replace(month=7, day=1)
        if self.granularity is Granularity.MONTH:
            return self.instant.replace(day=15)
        return self.instant

    def compare(self, other: "Timestamp") -> TemporalRelation:
        g = coarser(self.granularity, other.granularity)
        if g is Granularity.UNKNOWN:
            return TemporalRelation.UNKNOWN
        a = _truncate(self.instant, g)
        b = _truncate(other.instant, g)
        if a < b:
            return TemporalRelation.BEFORE
        if a > b:
            return TemporalRelation.AFTER
        return TemporalRelation.CONCURRENT

    def sort_key(self) -> tuple:
        """Total order for indexing: known instants first (then finer after coarser), unknown last."""
        if not self.known:
            return (1, 0.0, 0)
        return (0, self.instant.timestamp(), _RANK[self.granularity])


def days_between(a: Timestamp, b: Timestamp) -> float | None:
    """Absolute distance between midpoints in days, or ``None`` when either side is unknown."""
    ma, mb = a.midpoint(), b.midpoint()
    if ma is None or mb is None:
        return None
    return abs((mb - ma).total_seconds()) / 86400.0
