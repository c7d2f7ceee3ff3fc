"""
Reading a tweet stream and estimating the sampling rate
=======================================================

"""

from pathlib import Path

from medialens import LimitNotice, TweetRecord, estimate_sampling_rate, parse_lines
from medialens.ingest import ConnectionStart, Skipped

FIXTURES = Path(__file__).resolve().parent.parent / "tests" / "fixtures"

# every line becomes a record or a Skipped marker, nothing raises
lines = (FIXTURES / "tweets_12.ndjson").read_text().splitlines()
parsed = list(parse_lines(lines))
records = [p for p in parsed if isinstance(p, TweetRecord)]
print(len(records), "records,", sum(isinstance(p, Skipped) for p in parsed), "skipped")

for r in records[:4]:
    print(r.author_handle, "rt" if r.is_retweet else "", "quote" if r.is_quote else "", r.mentioned_accounts)

# limit notices carry a running count of tweets the API held back
notices = [LimitNotice(1587254400000, 40), LimitNotice(1587254460000, 100)]
report = estimate_sampling_rate(900, notices)
print("delivered", report.delivered, "undelivered", report.undelivered, "rate", report.rate)

# the count restarts with each connection; segments are summed separately
report = estimate_sampling_rate(900, [LimitNotice(1, 40), ConnectionStart(2), LimitNotice(3, 25)])
print(report.segments, report.rate)
