"""
From tweets to interaction matrices
===================================

"""

from pathlib import Path

from medialens import (
    TweetRecord,
    build_matrix,
    extract_interactions,
    info_flow,
    load_gazetteer,
    load_registry,
    parse_lines,
    parse_location,
    percentile_cutoff,
)

FIXTURES = Path(__file__).resolve().parent.parent / "tests" / "fixtures"
registry = load_registry(FIXTURES / "registry_desk.json")
gaz = load_gazetteer(FIXTURES / "gazetteer.csv", FIXTURES / "aliases.csv")
records = [r for r in parse_lines((FIXTURES / "tweets_12.ndjson").read_text().splitlines()) if isinstance(r, TweetRecord)]

# a quote of CNN that also mentions BBC Breaking and the NYT: 1/3 each
r = records[1]
for scheme in ("occurrence", "country", "weighted"):
    print(scheme, [(e.outlet_id, str(e.weight)) for e in extract_interactions(r, registry, scheme)])

events = [e for r in records for e in extract_interactions(r, registry)]
users = build_matrix(events)
print(users.to_csv())

# group rows by the user's country and columns by the outlet's country
where = {r.author_id: parse_location(r.author_description, gaz) for r in records}
user_country = {u: getattr(o, "country", None) for u, o in where.items()}
outlet_country = {o.outlet_id: o.country for o in registry}
cc = percentile_cutoff(users, 0.02).aggregate(user_country, outlet_country, "country", "country")
print(cc.to_csv())

for gpe, f in info_flow(cc).items():
    print(gpe, f)
