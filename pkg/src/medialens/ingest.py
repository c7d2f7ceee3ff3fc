"""Parsing of newline-delimited tweet streams.

Every input line becomes either a :class:`TweetRecord` or a :class:`Skipped`
marker.  Limit notices and connection sentinels are skipped as far as the
record stream is concerned, but they carry their payload so that
:func:`estimate_sampling_rate` can consume them.
"""

from __future__ import annotations

import gzip
import json
from dataclasses import asdict, dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Iterable, Iterator, Sequence

__all__ = [
    "TweetRecord",
    "Skipped",
    "LimitNotice",
    "ConnectionStart",
    "SamplingReport",
    "NoticeOrderError",
    "parse_tweet",
    "parse_lines",
    "iter_lines",
    "estimate_sampling_rate",
]

TWITTER_TIME_FORMAT = "%a %b %d %H:%M:%S %z %Y"

# reason codes carried by Skipped
MALFORMED = "malformed"
LIMIT = "limit"
CONNECTION = "connection"
NON_TWEET = "non_tweet"


@dataclass(slots=True)
class TweetRecord:
    tweet_id: str
    author_id: str
    author_handle: str
    author_description: str
    created_at: str
    is_retweet: bool = False
    is_quote: bool = False
    reply_target: str | None = None
    reply_handle: str | None = None
    mentioned_accounts: list[str] = field(default_factory=list)
    retweeted_account: str | None = None
    quoted_account: str | None = None
    shared_urls: list[str] = field(default_factory=list)

    @property
    def is_reply(self) -> bool:
        return self.reply_target is not None or self.reply_handle is not None

    @property
    def timestamp(self) -> datetime:
        return datetime.strptime(self.created_at, TWITTER_TIME_FORMAT)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TweetRecord":
        return cls(**d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False, separators=(",", ":"))

    def to_tweet_json(self) -> str:
        """Render a minimal Twitter v1.1 object that parses back to this record."""
        obj: dict = {
            "id_str": self.tweet_id,
            "created_at": self.created_at,
            "user": {
                "id_str": self.author_id,
                "screen_name": self.author_handle,
                "location": self.author_description,
            },
            "entities": {
                "user_mentions": [{"screen_name": h} for h in self.mentioned_accounts],
                "urls": [{"expanded_url": u} for u in self.shared_urls],
                "hashtags": [],
            },
        }
        if self.reply_target is not None:
            obj["in_reply_to_user_id_str"] = self.reply_target
        if self.reply_handle is not None:
            obj["in_reply_to_screen_name"] = self.reply_handle
        if self.is_retweet:
            obj["retweeted_status"] = {"user": {"screen_name": self.retweeted_account}}
        if self.is_quote:
            obj["quoted_status"] = {"user": {"screen_name": self.quoted_account}}
        return json.dumps(obj, ensure_ascii=False, separators=(",", ":"))


@dataclass(frozen=True, slots=True)
class LimitNotice:
    """Streaming-API limit message; ``cumulative_undelivered`` counts since connection start."""

    timestamp: int
    cumulative_undelivered: int


@dataclass(frozen=True, slots=True)
class ConnectionStart:
    """Sentinel declaring that a new streaming connection begins here."""

    timestamp: int | None = None


@dataclass(frozen=True, slots=True)
class Skipped:
    reason: str
    notice: LimitNotice | ConnectionStart | None = None
    detail: str = ""


class NoticeOrderError(ValueError):
    """Cumulative undelivered counts decreased without a declared connection start."""


def _screen_name(status) -> str | None:
    if not isinstance(status, dict):
        return None
    user = status.get("user")
    if isinstance(user, dict):
        return user.get("screen_name")
    return None


def _id_str(obj: dict, key: str) -> str | None:
    value = obj.get(key + "_str")
    if value is None:
        value = obj.get(key)
    return None if value is None else str(value)


def _parse_notice(obj: dict) -> Skipped | None:
    limit = obj.get("limit")
    if isinstance(limit, dict):
        try:
            notice = LimitNotice(
                timestamp=int(limit.get("timestamp_ms", 0)),
                cumulative_undelivered=int(limit["track"]),
            )
        except (KeyError, TypeError, ValueError):
            return Skipped(MALFORMED, detail="bad limit notice")
        if notice.cumulative_undelivered < 0:
            return Skipped(MALFORMED, detail="negative undelivered count")
        return Skipped(LIMIT, notice)
    conn = obj.get("connection_start")
    if conn is not None:
        ts = conn.get("timestamp_ms") if isinstance(conn, dict) else None
        return Skipped(CONNECTION, ConnectionStart(None if ts is None else int(ts)))
    return None


def parse_tweet(json_line: str | bytes) -> TweetRecord | Skipped:
    """Parse one stream line.

    Never raises: undecodable or structurally invalid lines come back as
    ``Skipped("malformed")``, limit notices as ``Skipped("limit", notice)``.
    """
    try:
        obj = json.loads(json_line)
    except (ValueError, UnicodeDecodeError) as exc:
        return Skipped(MALFORMED, detail=str(exc)[:80])
    if not isinstance(obj, dict):
        return Skipped(MALFORMED, detail="not an object")

    user = obj.get("user")
    if not isinstance(user, dict):
        notice = _parse_notice(obj)
        if notice is not None:
            return notice
        if "delete" in obj or "scrub_geo" in obj or "warning" in obj:
            return Skipped(NON_TWEET)
        return Skipped(MALFORMED, detail="missing user")

    tweet_id = _id_str(obj, "id")
    author_id = _id_str(user, "id")
    if tweet_id is None or author_id is None:
        return Skipped(MALFORMED, detail="missing id")

    entities = obj.get("entities") or {}
    try:
        mentions = [m["screen_name"] for m in entities.get("user_mentions") or ()]
        urls = [u.get("expanded_url") or u["url"] for u in entities.get("urls") or ()]
    except (KeyError, TypeError, AttributeError):
        return Skipped(MALFORMED, detail="bad entities")

    retweeted = obj.get("retweeted_status")
    quoted = obj.get("quoted_status")
    return TweetRecord(
        tweet_id=tweet_id,
        author_id=author_id,
        author_handle=user.get("screen_name") or "",
        author_description=user.get("location") or "",
        created_at=obj.get("created_at") or "",
        is_retweet=retweeted is not None,
        is_quote=quoted is not None,
        reply_target=_id_str(obj, "in_reply_to_user_id"),
        reply_handle=obj.get("in_reply_to_screen_name"),
        mentioned_accounts=mentions,
        retweeted_account=_screen_name(retweeted),
        quoted_account=_screen_name(quoted),
        shared_urls=urls,
    )


def iter_lines(path: str | Path) -> Iterator[str]:
    """Yield stripped, non-empty lines from a plain or gzip-compressed file."""
    path = Path(path)
    with open(path, "rb") as fh:
        magic = fh.read(2)
    opener = gzip.open if magic == b"\x1f\x8b" else open
    with opener(path, "rt", encoding="utf-8", errors="replace") as fh:
        for line in fh:
            line = line.strip()
            if line:
                yield line


def parse_lines(lines: Iterable[str]) -> Iterator[TweetRecord | Skipped]:
    for line in lines:
        yield parse_tweet(line)


@dataclass
class SamplingReport:
    delivered: int
    undelivered: int
    segments: list[dict] = field(default_factory=list)

    @property
    def rate(self) -> float:
        total = self.delivered + self.undelivered
        return 1.0 if total == 0 else self.delivered / total

    def merge(self, other: "SamplingReport") -> "SamplingReport":
        return SamplingReport(
            self.delivered + other.delivered,
            self.undelivered + other.undelivered,
            self.segments + other.segments,
        )

    def to_dict(self) -> dict:
        return {
            "delivered": self.delivered,
            "undelivered": self.undelivered,
            "rate": self.rate,
            "segments": self.segments,
        }


def estimate_sampling_rate(
    delivered: int, notices: Sequence[LimitNotice | ConnectionStart]
) -> SamplingReport:
    """Estimate the fraction of matching tweets the stream actually delivered.

    ``notices`` is the time-ordered sequence of limit notices, optionally
    interleaved with :class:`ConnectionStart` sentinels.  Within a connection
    the first notice contributes its full cumulative count and every later
    notice contributes its increment over the previous one.
    """
    if delivered < 0:
        raise ValueError("delivered must be nonnegative")
    segments: list[dict] = []
    undelivered = 0
    previous = 0
    previous_ts: int | None = None
    connection = 0
    for notice in notices:
        if isinstance(notice, ConnectionStart):
            connection += 1
            previous = 0
            previous_ts = notice.timestamp
            continue
        count = notice.cumulative_undelivered
        if count < previous:
            raise NoticeOrderError(
                f"cumulative undelivered dropped from {previous} to {count} at "
                f"timestamp {notice.timestamp}; declare a connection start first"
            )
        increment = count - previous
        segments.append(
            {
                "connection": connection,
                "start": previous_ts,
                "end": notice.timestamp,
                "undelivered": increment,
            }
        )
        undelivered += increment
        previous = count
        previous_ts = notice.timestamp
    return SamplingReport(delivered, undelivered, segments)
