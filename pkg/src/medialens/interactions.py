"""Interaction events and user/GPE/outlet interaction matrices."""

from __future__ import annotations

import csv
import io
import json
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Callable, Hashable, Iterable, Mapping

import numpy as np
from scipy import sparse

from .ingest import TweetRecord
from .registry import IDEOLOGIES, IDEOLOGY_GROUPS, Registry, fold_ideology

__all__ = [
    "SCHEMES",
    "InteractionEvent",
    "InteractionMatrix",
    "MatrixError",
    "media_occurrences",
    "extract_interactions",
    "build_matrix",
    "percentile_cutoff",
    "threshold_cutoff",
    "consumption_vector",
    "consumption_vectors",
    "info_flow",
]

SCHEMES = ("occurrence", "country", "weighted")
_SCHEME_ALIASES = {"1": "occurrence", "2": "country", "3": "weighted"}
# row sums closer than this are treated as tied
SUM_TOLERANCE = 1e-9


class MatrixError(ValueError):
    pass


@dataclass(frozen=True, slots=True)
class InteractionEvent:
    user_id: str
    outlet_id: str
    weight: Fraction
    tweet_id: str
    scheme: str


def _scheme(scheme: str | int) -> str:
    s = _SCHEME_ALIASES.get(str(scheme), str(scheme))
    if s not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")
    return s


def media_occurrences(record: TweetRecord, registry: Registry) -> list[str]:
    """Outlet ids touched by a tweet, one entry per occurrence.

    Retweet, quote and reply targets, every mention and every shared URL are
    looked up; hashtags are never considered.
    """
    handles = registry.handle_map
    domains = registry.domain_map
    out = []
    for h in (record.retweeted_account, record.quoted_account, record.reply_handle):
        if h:
            o = handles.get(h.lower())
            if o is not None:
                out.append(o)
    for h in record.mentioned_accounts:
        o = handles.get(h.lower())
        if o is not None:
            out.append(o)
    if domains:
        for url in record.shared_urls:
            o = registry.outlet_for_url(url)
            if o is not None:
                out.append(o)
    return out


def extract_interactions(
    record: TweetRecord, registry: Registry, scheme: str | int = "weighted"
) -> list[InteractionEvent]:
    """Turn one tweet into interaction events attributed to its author.

    ``occurrence``: weight 1 per occurrence.
    ``country``: weight 1 per distinct outlet, so every outlet of a country
    touched by the tweet gets the same single interaction.
    ``weighted``: the tweet is worth 1 in total, shared in proportion to how
    often each outlet occurs.
    """
    scheme = _scheme(scheme)
    occ = media_occurrences(record, registry)
    if not occ:
        return []
    uid, tid = record.author_id, record.tweet_id
    if scheme == "occurrence":
        one = Fraction(1)
        return [InteractionEvent(uid, o, one, tid, scheme) for o in occ]
    counts = Counter(occ)
    if scheme == "country":
        one = Fraction(1)
        return [InteractionEvent(uid, o, one, tid, scheme) for o in counts]
    total = len(occ)
    return [InteractionEvent(uid, o, Fraction(n, total), tid, scheme) for o, n in counts.items()]


@dataclass
class InteractionMatrix:
    """Sparse nonnegative matrix with string row/column keys.

    Keys are kept sorted so that serialization is deterministic.  ``provenance``
    records the quantification scheme and every cutoff applied.
    """

    data: sparse.csr_matrix
    row_keys: list[str]
    col_keys: list[str]
    row_type: str
    col_type: str
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.data = sparse.csr_matrix(self.data, dtype=np.float64)
        self.data.eliminate_zeros()
        self.data.sort_indices()
        if self.data.shape != (len(self.row_keys), len(self.col_keys)):
            raise MatrixError("shape does not match keys")
        if self.data.nnz and self.data.data.min() < 0:
            raise MatrixError("interaction values must be nonnegative")
        self._row_pos = {k: i for i, k in enumerate(self.row_keys)}
        self._col_pos = {k: i for i, k in enumerate(self.col_keys)}

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    @property
    def nnz(self) -> int:
        return self.data.nnz

    def total(self) -> float:
        return math.fsum(self.data.data)

    def row_sums(self) -> np.ndarray:
        return np.array([math.fsum(self.data.data[a:b]) for a, b in zip(self.data.indptr[:-1], self.data.indptr[1:])])

    def col_sums(self) -> np.ndarray:
        return self.data.T.tocsr().sum(axis=1).A1 if self.nnz else np.zeros(len(self.col_keys))

    def row_index(self, key: str) -> int:
        return self._row_pos[key]

    def col_index(self, key: str) -> int:
        return self._col_pos[key]

    def get(self, row: str, col: str) -> float:
        i, j = self._row_pos.get(row), self._col_pos.get(col)
        if i is None or j is None:
            return 0.0
        return float(self.data[i, j])

    def row(self, key: str) -> dict[str, float]:
        i = self._row_pos[key]
        a, b = self.data.indptr[i], self.data.indptr[i + 1]
        return {self.col_keys[j]: float(v) for j, v in zip(self.data.indices[a:b], self.data.data[a:b])}

    def to_dict(self) -> dict[tuple[str, str], float]:
        return {(r, c): v for r, c, v in self.triplets()}

    def triplets(self) -> Iterable[tuple[str, str, float]]:
        d = self.data
        for i, r in enumerate(self.row_keys):
            for p in range(d.indptr[i], d.indptr[i + 1]):
                yield r, self.col_keys[d.indices[p]], float(d.data[p])

    def select_rows(self, keys: Iterable[str], note: dict | None = None) -> "InteractionMatrix":
        keep = sorted(set(keys) & self._row_pos.keys())
        idx = [self._row_pos[k] for k in keep]
        prov = dict(self.provenance)
        if note:
            prov["cutoffs"] = list(prov.get("cutoffs", [])) + [note]
        return InteractionMatrix(self.data[idx], keep, list(self.col_keys), self.row_type, self.col_type, prov)

    def drop_columns(self, keys: Iterable[str]) -> "InteractionMatrix":
        drop = set(keys)
        keep = [k for k in self.col_keys if k not in drop]
        idx = [self._col_pos[k] for k in keep]
        return InteractionMatrix(self.data[:, idx], list(self.row_keys), keep, self.row_type, self.col_type, dict(self.provenance))

    def aggregate(
        self,
        row_map: Mapping[str, str] | None,
        col_map: Mapping[str, str] | None,
        row_type: str | None = None,
        col_type: str | None = None,
    ) -> "InteractionMatrix":
        """Group rows and/or columns by a key mapping; unmapped keys are dropped and counted."""
        rows = self._group(self.row_keys, row_map)
        cols = self._group(self.col_keys, col_map)
        r_keys, r_of = rows
        c_keys, c_of = cols
        coo = self.data.tocoo()
        ri = r_of[coo.row] if len(coo.row) else coo.row
        ci = c_of[coo.col] if len(coo.col) else coo.col
        mask = (ri >= 0) & (ci >= 0)
        dropped = int((~mask).sum())
        out = sparse.coo_matrix(
            (coo.data[mask], (ri[mask], ci[mask])), shape=(len(r_keys), len(c_keys))
        ).tocsr()
        prov = dict(self.provenance)
        prov["dropped_cells"] = prov.get("dropped_cells", 0) + dropped
        prov["aggregated_from"] = f"{self.row_type}->{self.col_type}"
        return InteractionMatrix(out, r_keys, c_keys, row_type or self.row_type, col_type or self.col_type, prov)

    @staticmethod
    def _group(keys: list[str], mapping: Mapping[str, str] | None):
        if mapping is None:
            return list(keys), np.arange(len(keys))
        targets = sorted({mapping[k] for k in keys if mapping.get(k) is not None})
        pos = {t: i for i, t in enumerate(targets)}
        idx = np.array([pos.get(mapping.get(k), -1) if mapping.get(k) is not None else -1 for k in keys], dtype=np.int64)
        return targets, idx

    # serialization -----------------------------------------------------

    def sidecar(self) -> dict:
        return {
            "row_type": self.row_type,
            "col_type": self.col_type,
            "scheme": self.provenance.get("scheme"),
            "cutoffs": self.provenance.get("cutoffs", []),
            "provenance": self.provenance,
            "row_keys": self.row_keys,
            "col_keys": self.col_keys,
        }

    def to_csv(self, transform: Callable[[float], float] | None = None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("row_key", "col_key", "value"))
        for r, c, v in self.triplets():
            w.writerow((r, c, repr(transform(v) if transform else v)))
        return buf.getvalue()

    def to_log10_csv(self) -> str:
        """Triplets with ``log10(value)`` for heatmap plotting."""
        return self.to_csv(math.log10)

    def save(self, path: str | Path) -> None:
        path = Path(path)
        path.write_text(self.to_csv(), encoding="utf-8")
        path.with_suffix(".json").write_text(json.dumps(self.sidecar(), indent=1, sort_keys=True), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "InteractionMatrix":
        path = Path(path)
        meta = json.loads(path.with_suffix(".json").read_text(encoding="utf-8"))
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        return cls.from_triplets(
            ((r["row_key"], r["col_key"], float(r["value"])) for r in rows),
            meta["row_type"],
            meta["col_type"],
            meta.get("provenance", {}),
            row_keys=meta.get("row_keys"),
            col_keys=meta.get("col_keys"),
        )

    @classmethod
    def from_triplets(
        cls,
        triplets: Iterable[tuple[str, str, float]],
        row_type: str,
        col_type: str,
        provenance: dict | None = None,
        row_keys: list[str] | None = None,
        col_keys: list[str] | None = None,
    ) -> "InteractionMatrix":
        cells: dict[tuple[str, str], float] = defaultdict(float)
        for r, c, v in triplets:
            cells[(r, c)] += v
        rk = sorted(row_keys if row_keys is not None else {r for r, _ in cells})
        ck = sorted(col_keys if col_keys is not None else {c for _, c in cells})
        rp = {k: i for i, k in enumerate(rk)}
        cp = {k: i for i, k in enumerate(ck)}
        if cells:
            ri, ci, vals = zip(*((rp[r], cp[c], v) for (r, c), v in cells.items()))
        else:
            ri, ci, vals = (), (), ()
        m = sparse.coo_matrix((np.array(vals, dtype=float), (np.array(ri, dtype=np.int64), np.array(ci, dtype=np.int64))), shape=(len(rk), len(ck)))
        return cls(m.tocsr(), rk, ck, row_type, col_type, dict(provenance or {}))


def _key_type(keys: Iterable[Hashable], what: str) -> None:
    types = {type(k) for k in keys}
    if len(types) > 1:
        raise MatrixError(f"mixed {what} key types: {sorted(t.__name__ for t in types)}")


def build_matrix(
    events: Iterable[InteractionEvent],
    row_key_fn: Callable[[InteractionEvent], str | None] = lambda e: e.user_id,
    col_key_fn: Callable[[InteractionEvent], str | None] = lambda e: e.outlet_id,
    row_type: str = "user",
    col_type: str = "outlet",
    scheme: str | None = None,
) -> InteractionMatrix:
    """Sum event weights into cells.

    Weights are added exactly and converted to float once per cell.  Events
    whose row or column key resolves to ``None`` are dropped; the count goes
    into ``provenance["dropped_events"]``.
    """
    cells: dict[tuple, Fraction] = defaultdict(Fraction)
    dropped = 0
    schemes = set()
    for e in events:
        r, c = row_key_fn(e), col_key_fn(e)
        if r is None or c is None:
            dropped += 1
            continue
        cells[(r, c)] += e.weight
        schemes.add(e.scheme)
    _key_type((r for r, _ in cells), "row")
    _key_type((c for _, c in cells), "column")
    if len(schemes) > 1:
        raise MatrixError(f"events from several schemes: {sorted(schemes)}")
    prov = {"scheme": scheme or (schemes.pop() if schemes else None), "cutoffs": [], "dropped_events": dropped}
    return InteractionMatrix.from_triplets(
        ((r, c, float(v)) for (r, c), v in cells.items() if v != 0),
        row_type,
        col_type,
        prov,
    )


def percentile_cutoff(m: InteractionMatrix, p: float) -> InteractionMatrix:
    """Drop the ``ceil(p * N)`` rows with the largest totals.

    Ties (totals within ``SUM_TOLERANCE``) are broken by removing the larger
    row key first.
    """
    if not 0 <= p < 1:
        raise ValueError("p must be in [0, 1)")
    n = len(m.row_keys)
    n_remove = math.ceil(round(p * n, 9))
    sums = m.row_sums()
    order = sorted(range(n), key=lambda i: (round(sums[i] / SUM_TOLERANCE), m.row_keys[i]), reverse=True)
    removed = {m.row_keys[i] for i in order[:n_remove]}
    note = {"kind": "percentile", "p": p, "removed": n_remove}
    return m.select_rows((k for k in m.row_keys if k not in removed), note)


def threshold_cutoff(m: InteractionMatrix, min_total: float) -> InteractionMatrix:
    """Keep rows whose total is at least ``min_total``."""
    sums = m.row_sums()
    keep = [k for k, s in zip(m.row_keys, sums) if s >= min_total - SUM_TOLERANCE]
    note = {"kind": "threshold", "min_total": min_total, "removed": len(m.row_keys) - len(keep)}
    return m.select_rows(keep, note)


def _bins(fold: str | int) -> tuple[tuple[str, ...], Callable[[str], str]]:
    f = str(fold).split("-")[0]
    if f == "7":
        return IDEOLOGIES, lambda x: x
    if f == "3":
        return IDEOLOGY_GROUPS, fold_ideology
    raise ValueError("fold must be 7 or 3")


def consumption_vectors(
    m: InteractionMatrix, ideology_of: Mapping[str, str], fold: str | int = 7
) -> np.ndarray:
    """Row-normalized ideology shares for every row of a user x outlet matrix.

    Rows with no interaction mass come back as all-zero rows.
    """
    labels, f = _bins(fold)
    pos = {lab: i for i, lab in enumerate(labels)}
    fold_matrix = sparse.csr_matrix(
        (
            np.ones(len(m.col_keys)),
            (np.arange(len(m.col_keys)), [pos[f(ideology_of[c])] for c in m.col_keys]),
        ),
        shape=(len(m.col_keys), len(labels)),
    )
    raw = np.asarray((m.data @ fold_matrix).todense())
    totals = raw.sum(axis=1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(totals > 0, raw / np.where(totals > 0, totals, 1), 0.0)
    return out


def consumption_vector(
    m: InteractionMatrix, user: str, ideology_of: Mapping[str, str], fold: str | int = 7
) -> np.ndarray:
    labels, f = _bins(fold)
    acc = np.zeros(len(labels))
    pos = {lab: i for i, lab in enumerate(labels)}
    for outlet, v in m.row(user).items():
        acc[pos[f(ideology_of[outlet])]] += v
    total = acc.sum()
    if total <= 0:
        raise ValueError(f"user {user!r} has no interactions; apply a cutoff first")
    return acc / total


@dataclass(frozen=True)
class FlowEntry:
    consumed: float
    supplied: float
    ratio: float | None


def info_flow(m: InteractionMatrix) -> dict[str, FlowEntry]:
    """Consumption vs supply per GPE with self-interactions removed.

    ``ratio = log10(consumed) - log10(supplied)``; ``None`` when either side is zero.
    """
    keys = sorted(set(m.row_keys) | set(m.col_keys))
    pos = {k: i for i, k in enumerate(keys)}
    sq = np.zeros((len(keys), len(keys)))
    for r, c, v in m.triplets():
        sq[pos[r], pos[c]] += v
    np.fill_diagonal(sq, 0.0)
    consumed, supplied = sq.sum(axis=1), sq.sum(axis=0)
    out = {}
    for k, i in pos.items():
        c, s = float(consumed[i]), float(supplied[i])
        ratio = math.log10(c) - math.log10(s) if c > 0 and s > 0 else None
        out[k] = FlowEntry(c, s, ratio)
    return out
