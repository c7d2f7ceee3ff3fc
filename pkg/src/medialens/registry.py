"""Media-outlet registry: ratings, credibility rules and handle resolution."""

from __future__ import annotations

import csv
import json
import logging
import warnings
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Mapping
from urllib.parse import urlsplit

import tldextract

__all__ = [
    "IDEOLOGIES",
    "IDEOLOGY_GROUPS",
    "FACTUALITY_LEVELS",
    "UNDETERMINED",
    "MediaOutlet",
    "Registry",
    "RegistryError",
    "RedirectCycleError",
    "MissingQueryWarning",
    "HandleResolutionFixture",
    "factuality_category",
    "classify_credibility",
    "fold_ideology",
    "registrable_domain",
    "resolve_url",
    "resolve_handles",
    "merge_handle_interactions",
    "load_registry",
]

log = logging.getLogger(__name__)

IDEOLOGIES = (
    "extreme-left",
    "left",
    "center-left",
    "center",
    "center-right",
    "right",
    "extreme-right",
)
IDEOLOGY_GROUPS = ("left", "center", "right")
_FOLD = {
    "extreme-left": "left",
    "left": "left",
    "center-left": "left",
    "center": "center",
    "center-right": "right",
    "right": "right",
    "extreme-right": "right",
}
FACTUALITY_LEVELS = ("very high", "high", "mostly factual", "mixed", "low", "very low")
UNDETERMINED = "undetermined"
MANY_FAILED_CHECKS = 3  # "few" is anything below this
MAX_SEARCH_CANDIDATES = 10

_extract = tldextract.TLDExtract(suffix_list_urls=(), cache_dir=None)


class RegistryError(ValueError):
    pass


class RedirectCycleError(ValueError):
    pass


class MissingQueryWarning(UserWarning):
    pass


def fold_ideology(ideology: str) -> str:
    """Collapse the 7-point scale into left / center / right."""
    try:
        return _FOLD[ideology]
    except KeyError:
        raise ValueError(f"unknown ideology {ideology!r}") from None


def factuality_category(score: int) -> str:
    if isinstance(score, bool) or int(score) != score or not 0 <= score <= 10:
        raise ValueError(f"factuality score must be an integer in 0..10, got {score!r}")
    if score == 0:
        return "very high"
    if score <= 2:
        return "high"
    if score <= 4:
        return "mostly factual"
    if score <= 6:
        return "mixed"
    if score <= 9:
        return "low"
    return "very low"


@dataclass
class MediaOutlet:
    outlet_id: str
    name: str
    canonical_url: str
    country: str
    ideology: str
    factuality_score: int | None = None
    credibility: str | None = None
    traffic: str | None = None
    failed_fact_checks: int | None = None
    questionable: bool | None = None
    state: str | None = None
    handles: set[str] = field(default_factory=set)

    def __post_init__(self):
        if self.ideology not in IDEOLOGIES:
            raise RegistryError(f"{self.outlet_id}: unknown ideology {self.ideology!r}")
        if self.factuality_score is not None:
            factuality_category(self.factuality_score)
        self.handles = {h.lower().lstrip("@") for h in self.handles}

    @property
    def factuality_category(self) -> str | None:
        if self.factuality_score is None:
            return None
        return factuality_category(self.factuality_score)

    @property
    def domain(self) -> str:
        return registrable_domain(self.canonical_url)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["handles"] = sorted(self.handles)
        return d


def classify_credibility(outlet: MediaOutlet, many_failed: int = MANY_FAILED_CHECKS) -> str:
    """Derive high / mixed / low credibility, or ``"undetermined"``.

    The questionable flag is checked first; the remaining rules are tried in
    order and the first one that applies wins.
    """
    if outlet.questionable:
        return "low"
    fact = outlet.factuality_category
    traffic = outlet.traffic
    if fact in ("very high", "high"):
        return "high"
    if fact in ("low", "very low"):
        return "low"
    if fact == "mostly factual":
        if traffic in ("high", "medium"):
            return "high"
        if traffic == "low" and outlet.ideology != "center":
            return "mixed"
        return UNDETERMINED
    if fact == "mixed":
        if traffic in ("high", "medium"):
            return "mixed"
        if traffic == "low" and outlet.failed_fact_checks is not None:
            return "low" if outlet.failed_fact_checks >= many_failed else "mixed"
    return UNDETERMINED


@lru_cache(maxsize=1 << 16)
def _host_domain(host: str) -> str:
    ext = _extract(host)
    if hasattr(ext, "top_domain_under_public_suffix"):
        dom = ext.top_domain_under_public_suffix
    else:  # tldextract < 5.3
        dom = ext.registered_domain
    return (dom or host).lower()


def registrable_domain(url: str) -> str:
    """``https://edition.CNN.com/x?y`` -> ``cnn.com``.  Empty string if no host."""
    url = url.strip()
    if "//" not in url:
        url = "//" + url
    host = (urlsplit(url).hostname or "").lower().rstrip(".")
    if host.startswith("www."):
        host = host[4:]
    return _host_domain(host) if host else ""


@dataclass
class HandleResolutionFixture:
    """Recorded account searches plus a short-link redirect table."""

    searches: dict[str, list[dict]]
    redirects: dict[str, str] = field(default_factory=dict)

    @classmethod
    def load(cls, path: str | Path) -> "HandleResolutionFixture":
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
        return cls(data.get("searches", {}), data.get("redirects", {}))


def resolve_url(url: str, redirects: Mapping[str, str]) -> str:
    seen = {url}
    while url in redirects:
        url = redirects[url]
        if url in seen:
            raise RedirectCycleError(f"redirect cycle through {url}")
        seen.add(url)
    return url


def resolve_handles(outlet: MediaOutlet, fixture: HandleResolutionFixture) -> set[str]:
    """Handles among the top search results whose profile URL lands on the outlet's site."""
    candidates = fixture.searches.get(outlet.name)
    if candidates is None:
        warnings.warn(f"no search results recorded for {outlet.name!r}", MissingQueryWarning, stacklevel=2)
        return set()
    target = outlet.domain
    found = set()
    for cand in candidates[:MAX_SEARCH_CANDIDATES]:
        for url in cand.get("urls", ()):
            if registrable_domain(resolve_url(url, fixture.redirects)) == target:
                found.add(cand["handle"].lower().lstrip("@"))
                break
    return found


class Registry:
    """Immutable-after-load collection of outlets with handle and domain indexes."""

    def __init__(self, outlets: Iterable[MediaOutlet]):
        self.outlets: dict[str, MediaOutlet] = {}
        for o in outlets:
            if o.outlet_id in self.outlets:
                raise RegistryError(f"duplicate outlet id {o.outlet_id!r}")
            self.outlets[o.outlet_id] = o
        self.handle_map = merge_handle_interactions(self)
        self.domain_map = self._build_domain_map()

    def _build_domain_map(self) -> dict[str, str]:
        owners: dict[str, set[str]] = {}
        for o in self.outlets.values():
            if o.canonical_url:
                owners.setdefault(o.domain, set()).add(o.outlet_id)
        out = {}
        for dom, ids in owners.items():
            if len(ids) == 1:
                out[dom] = next(iter(ids))
            else:
                log.warning("domain %s shared by %s; ignored for URL matching", dom, sorted(ids))
        return out

    def __len__(self) -> int:
        return len(self.outlets)

    def __getitem__(self, outlet_id: str) -> MediaOutlet:
        return self.outlets[outlet_id]

    def __iter__(self):
        return iter(self.outlets.values())

    def outlet_for_handle(self, handle: str) -> str | None:
        return self.handle_map.get(handle.lower())

    def outlet_for_url(self, url: str) -> str | None:
        return self.domain_map.get(registrable_domain(url))

    def with_resolved_handles(self, fixture: HandleResolutionFixture) -> "Registry":
        outlets = []
        for o in self.outlets.values():
            d = o.to_dict()
            d["handles"] = set(o.handles) | resolve_handles(o, fixture)
            outlets.append(MediaOutlet(**d))
        return Registry(outlets)

    def to_json(self) -> str:
        rows = [self.outlets[k].to_dict() for k in sorted(self.outlets)]
        return json.dumps({"outlets": rows}, indent=1, sort_keys=True, ensure_ascii=False)


def merge_handle_interactions(registry: Registry) -> dict[str, str]:
    """Map every registered handle to its outlet; a handle may belong to one outlet only."""
    mapping: dict[str, str] = {}
    for o in registry.outlets.values():
        for h in o.handles:
            if h in mapping and mapping[h] != o.outlet_id:
                raise RegistryError(
                    f"handle @{h} claimed by both {mapping[h]!r} and {o.outlet_id!r}"
                )
            mapping[h] = o.outlet_id
    return mapping


def _coerce(row: dict) -> dict:
    out = {k: (v if v != "" else None) for k, v in row.items()}
    for key in ("factuality_score", "failed_fact_checks"):
        if out.get(key) is not None:
            out[key] = int(out[key])
    q = out.get("questionable")
    if isinstance(q, str):
        out["questionable"] = q.strip().lower() in ("1", "true", "yes")
    h = out.get("handles") or ()
    if isinstance(h, str):
        h = [x for x in h.replace("|", ";").split(";") if x.strip()]
    out["handles"] = {x.strip() for x in h}
    out.setdefault("outlet_id", out.get("name"))
    if out.get("outlet_id") is None:
        out["outlet_id"] = out["name"]
    return out


def load_registry(path: str | Path) -> Registry:
    """Load a registry from JSON (``{"outlets": [...]}`` or a list) or CSV."""
    path = Path(path)
    if path.suffix.lower() == ".csv":
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
    else:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
        rows = data["outlets"] if isinstance(data, dict) else data
    try:
        return Registry(MediaOutlet(**_coerce(r)) for r in rows)
    except TypeError as exc:
        raise RegistryError(f"bad registry row: {exc}") from None
