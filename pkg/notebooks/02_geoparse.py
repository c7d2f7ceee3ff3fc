"""
Resolving free-text profile locations
=====================================

"""

from pathlib import Path

from medialens import load_gazetteer, parse_location
from medialens.geoparse import LocationParser, corpus_stats

FIXTURES = Path(__file__).resolve().parent.parent / "tests" / "fixtures"
gaz = load_gazetteer(FIXTURES / "gazetteer.csv", FIXTURES / "aliases.csv")

for text in ["Cambridge, Massachusetts", "Cambridge", "London, Ontario", "NYC", "Ilinois", "in your heart"]:
    print(f"{text!r:30} -> {parse_location(text, gaz)}")

# users repeat their locations a lot, so the parser memoizes
parser = LocationParser(gaz)
profiles = ["Boston", "Boston", "London, UK", "Paris", "", "Boston"]
outcomes = [parser(p) for p in profiles]
print(len(parser.cache), "distinct strings parsed")

# unique strings vs. weighted by how many users wrote them
counts = {}
for p, o in zip(profiles, outcomes):
    counts[p] = (o, counts.get(p, (o, 0))[1] + 1)
print(corpus_stats(counts.values()))
