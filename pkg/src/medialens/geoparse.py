"""Offline geo-parsing of free-form profile locations.

Two phases.  Phase 1 splits a description on commas, slashes and pipes and
looks the pieces up in an exact-match gazetteer index, preferring the longest
run of adjacent pieces.  A name that exists in several countries is only
accepted when another piece narrows it down to one country.  Phase 2 runs
only when Phase 1 found nothing at all, and tolerates a single edit against
state and country names.
"""

from __future__ import annotations

import csv
import re
import unicodedata
from collections import defaultdict
from dataclasses import dataclass
from itertools import combinations
from pathlib import Path
from typing import Iterable, Mapping

__all__ = [
    "normalize",
    "Gazetteer",
    "GazetteerError",
    "Resolved",
    "Ambiguous",
    "Unknown",
    "LocationResolution",
    "LocationParser",
    "build_gazetteer",
    "load_gazetteer",
    "parse_location",
    "corpus_stats",
]

_PUNCT = re.compile(r"[^\w\s]", re.UNICODE)
_SPACE = re.compile(r"\s+")
_SPLIT = re.compile(r"[,/|]")
MAX_COMBINATION = 3
FUZZY_MIN_LENGTH = 4

Candidate = tuple[str, "str | None"]  # (country, state)


def normalize(text: str) -> str:
    """Case-fold, strip diacritics and punctuation, collapse whitespace."""
    text = unicodedata.normalize("NFKD", text)
    text = "".join(ch for ch in text if not unicodedata.combining(ch))
    text = _PUNCT.sub("", text.casefold()).replace("_", " ")
    return _SPACE.sub(" ", text).strip()


@dataclass(frozen=True, slots=True)
class Resolved:
    country: str
    state: str | None = None
    fuzzy: bool = False

    kind = "resolved"


@dataclass(frozen=True, slots=True)
class Ambiguous:
    candidates: frozenset[str]

    kind = "ambiguous"

    def __post_init__(self):
        if len(self.candidates) < 2:
            raise ValueError("Ambiguous needs at least two candidate countries")


@dataclass(frozen=True, slots=True)
class Unknown:
    kind = "unknown"


LocationResolution = Resolved | Ambiguous | Unknown


class GazetteerError(ValueError):
    pass


@dataclass(frozen=True)
class Gazetteer:
    """Immutable exact-match index plus the name lists used by fuzzy matching.

    ``index`` maps a normalized key such as ``"cambridge, massachusetts"`` to
    the set of (country, state) pairs it can denote.  ``aliases`` maps a
    normalized alias to the normalized canonical name it stands for.
    """

    index: Mapping[str, frozenset[Candidate]]
    aliases: Mapping[str, str]
    fuzzy_names: Mapping[str, frozenset[Candidate]]

    def __len__(self) -> int:
        return len(self.index)

    def lookup(self, key: str) -> frozenset[Candidate]:
        return self.index.get(key, frozenset())


def _row_keys(city: str, state: str, country: str) -> list[tuple[tuple[str, ...], Candidate]]:
    st = state or None
    named = [(n, lvl) for n, lvl in ((city, "city"), (state, "state"), (country, "country")) if n]
    out = []
    for size in range(1, len(named) + 1):
        for combo in combinations(named, size):
            levels = {lvl for _, lvl in combo}
            cand = (country, None) if levels == {"country"} else (country, st)
            out.append((tuple(n for n, _ in combo), cand))
    return out


def build_gazetteer(
    rows: Iterable[tuple[str, str, str]],
    aliases: Mapping[str, str] | Iterable[tuple[str, str]] = (),
) -> Gazetteer:
    """Index every single name and every ordered comma-combination of a row.

    For a row ``(city, state, country)`` the keys are ``city``, ``state``,
    ``country``, ``city, state``, ``city, country``, ``state, country`` and
    ``city, state, country`` (empty fields are skipped).  A bare country
    denotes ``(country, None)``; anything naming a city or state carries the
    state.  Aliases resolve to the candidates of their canonical name.
    """
    index: dict[str, set[Candidate]] = defaultdict(set)
    fuzzy: dict[str, set[Candidate]] = defaultdict(set)
    n_rows = 0
    for city, state, country in rows:
        city, state, country = (s.strip() for s in (city or "", state or "", country or ""))
        if not country:
            raise GazetteerError(f"row without country: {(city, state, country)!r}")
        n_rows += 1
        for names, cand in _row_keys(normalize(city), normalize(state), normalize(country)):
            # candidates keep the display spelling
            display = (country, state or None) if cand[1] is not None else (country, None)
            index[", ".join(names)].add(display)
        if state:
            fuzzy[normalize(state)].add((country, state))
        fuzzy[normalize(country)].add((country, None))
    if n_rows == 0:
        raise GazetteerError("gazetteer needs at least one row")

    pairs = aliases.items() if isinstance(aliases, Mapping) else aliases
    alias_map: dict[str, str] = {}
    collisions = []
    for alias, canonical in pairs:
        a, c = normalize(alias), normalize(canonical)
        if not a or a == c:
            continue
        if a in alias_map and alias_map[a] != c:
            collisions.append(f"{alias!r} -> {alias_map[a]!r} / {c!r}")
            continue
        if c not in index:
            raise GazetteerError(f"alias {alias!r} points at unknown name {canonical!r}")
        alias_map[a] = c
    if collisions:
        raise GazetteerError("conflicting aliases: " + "; ".join(collisions))
    for a, c in alias_map.items():
        index[a] |= index[c]
        if c in fuzzy:
            fuzzy[a] |= fuzzy[c]

    return Gazetteer(
        index={k: frozenset(v) for k, v in index.items()},
        aliases=alias_map,
        fuzzy_names={k: frozenset(v) for k, v in fuzzy.items()},
    )


def load_gazetteer(path: str | Path, alias_path: str | Path | None = None) -> Gazetteer:
    """Read ``city,state,country`` and optional ``alias,canonical`` CSV files."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [(r["city"], r["state"], r["country"]) for r in csv.DictReader(fh)]
    aliases: list[tuple[str, str]] = []
    if alias_path is not None:
        with open(alias_path, newline="", encoding="utf-8") as fh:
            aliases = [(r["alias"], r["canonical"]) for r in csv.DictReader(fh)]
    return build_gazetteer(rows, aliases)


def _within_one_edit(a: str, b: str) -> bool:
    la, lb = len(a), len(b)
    if abs(la - lb) > 1:
        return False
    if la > lb:
        a, b, la, lb = b, a, lb, la
    i = 0
    while i < la and a[i] == b[i]:
        i += 1
    if la == lb:
        return a[i + 1:] == b[i + 1:]
    return a[i:] == b[i + 1:]


def _fuzzy_candidates(token: str, g: Gazetteer) -> frozenset[Candidate]:
    if len(token) < FUZZY_MIN_LENGTH:
        return frozenset()
    found: set[Candidate] = set()
    for name, cands in g.fuzzy_names.items():
        if name != token and _within_one_edit(token, name):
            found |= cands
    return frozenset(found)


def _tokens(description: str, g: Gazetteer) -> list[str]:
    out = []
    for piece in _SPLIT.split(description):
        tok = normalize(piece)
        if tok:
            out.append(g.aliases.get(tok, tok))
    return out


def _match_exact(tokens: list[str], g: Gazetteer) -> list[frozenset[Candidate]]:
    used = [False] * len(tokens)
    matches = []
    for size in range(min(MAX_COMBINATION, len(tokens)), 0, -1):
        for start in range(len(tokens) - size + 1):
            if any(used[start:start + size]):
                continue
            cands = g.index.get(", ".join(tokens[start:start + size]))
            if cands:
                matches.append(cands)
                for i in range(start, start + size):
                    used[i] = True
    return matches


def _corroborate(matches: list[frozenset[Candidate]], fuzzy: bool) -> LocationResolution:
    countries = None
    every = set()
    for cands in matches:
        cs = {c for c, _ in cands}
        every |= cs
        countries = cs if countries is None else countries & cs
    if not countries:
        return Ambiguous(frozenset(every)) if len(every) >= 2 else Unknown()
    if len(countries) > 1:
        return Ambiguous(frozenset(countries))
    (country,) = countries
    states = None
    for cands in matches:
        st = {s for c, s in cands if c == country}
        if None in st and len(st) == 1:
            continue  # country-level evidence says nothing about the state
        st.discard(None)
        states = st if states is None else states & st
    state = next(iter(states)) if states is not None and len(states) == 1 else None
    return Resolved(country, state, fuzzy)


def parse_location(description: str, g: Gazetteer) -> LocationResolution:
    """Resolve a profile location string to a country and, if unambiguous, a state."""
    tokens = _tokens(description or "", g)
    if not tokens:
        return Unknown()
    matches = _match_exact(tokens, g)
    if matches:
        return _corroborate(matches, fuzzy=False)
    fuzzy = [c for c in (_fuzzy_candidates(t, g) for t in tokens) if c]
    if fuzzy:
        return _corroborate(fuzzy, fuzzy=True)
    return Unknown()


class LocationParser:
    """Memoizing wrapper; one instance per worker, caches merge with :meth:`merge`."""

    def __init__(self, gazetteer: Gazetteer):
        self.gazetteer = gazetteer
        self.cache: dict[str, LocationResolution] = {}

    def __call__(self, description: str) -> LocationResolution:
        try:
            return self.cache[description]
        except KeyError:
            res = self.cache[description] = parse_location(description, self.gazetteer)
            return res

    def merge(self, other: "LocationParser") -> None:
        self.cache.update(other.cache)


def corpus_stats(resolutions: Iterable[tuple[LocationResolution, int]]) -> dict:
    """Count outcomes by unique description and weighted by user multiplicity.

    ``resolved_with_state`` is a subset of ``resolved``; the other three
    outcome counts partition the input.
    """
    keys = ("resolved", "resolved_with_state", "ambiguous", "unknown")
    unique = dict.fromkeys(keys, 0)
    weighted = dict.fromkeys(keys, 0)
    for res, mult in resolutions:
        if mult < 0:
            raise ValueError("multiplicity must be nonnegative")
        kinds = [res.kind]
        if isinstance(res, Resolved) and res.state is not None:
            kinds.append("resolved_with_state")
        for k in kinds:
            unique[k] += 1
            weighted[k] += mult
    return {"unique": unique, "weighted": weighted}
