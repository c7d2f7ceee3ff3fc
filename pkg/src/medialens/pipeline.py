"""Sharded parse + extract over a tweet stream.

Each shard turns a block of lines into a :class:`ShardResult`; results merge
by cell-wise addition, so shards can be processed in any order or in
parallel.  Limit notices keep their position in the input (line index or
byte offset) so that the sampling estimate is computed after the merge.

Shards ship their cell sums back as a :class:`CellTable`: integer numerators
over one common denominator in numpy arrays.  That keeps the sums exact while
making the parent's unpickle-and-merge step cheap.
"""

from __future__ import annotations

import math
import multiprocessing as mp
import os
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import islice
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np
from scipy import sparse

from .ingest import LIMIT, CONNECTION, SamplingReport, Skipped, estimate_sampling_rate, iter_lines, parse_tweet
from .interactions import InteractionMatrix, _scheme, extract_interactions
from .registry import Registry

__all__ = ["CellTable", "ShardResult", "scan_lines", "scan_stream", "scan_file", "chunked", "byte_ranges"]

CHUNK_LINES = 20_000
_INT64_SAFE = 1 << 62


@dataclass
class CellTable:
    """Exact (row, col) -> ``num / den`` sums in columnar form."""

    rows: list[str]
    cols: list[str]
    ri: np.ndarray
    ci: np.ndarray
    num: np.ndarray  # int64, or object (Python ints) if int64 could overflow
    den: int = 1

    @classmethod
    def empty(cls) -> "CellTable":
        z = np.zeros(0, dtype=np.int64)
        return cls([], [], z, z, z.copy(), 1)

    @classmethod
    def from_fractions(cls, cells: dict[tuple[str, str], Fraction]) -> "CellTable":
        if not cells:
            return cls.empty()
        den = math.lcm(*{v.denominator for v in cells.values()})
        rpos: dict[str, int] = {}
        cpos: dict[str, int] = {}
        ri, ci, num = [], [], []
        for (r, c), v in cells.items():
            ri.append(rpos.setdefault(r, len(rpos)))
            ci.append(cpos.setdefault(c, len(cpos)))
            num.append(v.numerator * (den // v.denominator))
        return cls(list(rpos), list(cpos), np.array(ri, dtype=np.int64), np.array(ci, dtype=np.int64), _ints(num), den)

    @classmethod
    def concat(cls, tables: Sequence["CellTable"]) -> "CellTable":
        """Merge tables, summing cells that share a key."""
        tables = [t for t in tables if len(t.num)]
        if not tables:
            return cls.empty()
        rpos: dict[str, int] = {}
        cpos: dict[str, int] = {}
        den = math.lcm(*(t.den for t in tables))
        ri, ci, num = [], [], []
        for t in tables:
            rmap = np.array([rpos.setdefault(r, len(rpos)) for r in t.rows], dtype=np.int64)
            cmap = np.array([cpos.setdefault(c, len(cpos)) for c in t.cols], dtype=np.int64)
            ri.append(rmap[t.ri])
            ci.append(cmap[t.ci])
            scale = den // t.den
            big = t.num.dtype == object or scale * int(np.abs(t.num).max()) * len(tables) >= _INT64_SAFE
            num.append((t.num.astype(object) * scale) if big else t.num * scale)
        if any(n.dtype == object for n in num):
            num = [n.astype(object) for n in num]
        ri, ci, num = np.concatenate(ri), np.concatenate(ci), np.concatenate(num)
        code = ri * len(cpos) + ci
        order = np.argsort(code, kind="stable")
        code, num = code[order], num[order]
        starts = np.flatnonzero(np.r_[True, code[1:] != code[:-1]])
        summed = np.add.reduceat(num, starts) if len(num) else num
        keys = code[starts]
        return cls(list(rpos), list(cpos), keys // len(cpos), keys % len(cpos), summed, den)

    def __len__(self) -> int:
        return len(self.num)

    def total(self) -> Fraction:
        return Fraction(int(sum(int(v) for v in self.num)), self.den)

    def to_dict(self) -> dict[tuple[str, str], Fraction]:
        return {
            (self.rows[r], self.cols[c]): Fraction(int(v), self.den)
            for r, c, v in zip(self.ri.tolist(), self.ci.tolist(), self.num.tolist())
            if v != 0
        }

    def to_matrix(self, row_type: str = "user", col_type: str = "outlet", provenance: dict | None = None) -> InteractionMatrix:
        keep = self.num != 0
        if self.num.dtype == object or self.den >= 1 << 53:
            vals = np.array([float(Fraction(int(v), self.den)) for v in self.num[keep]], dtype=float)
        else:
            # both sides exact in float64, so the division is correctly rounded like float(Fraction)
            vals = self.num[keep].astype(float) / float(self.den)
        rk, ck = sorted(self.rows), sorted(self.cols)
        rrank = np.argsort(np.argsort(np.array(self.rows, dtype=object))) if self.rows else np.zeros(0, dtype=np.int64)
        crank = np.argsort(np.argsort(np.array(self.cols, dtype=object))) if self.cols else np.zeros(0, dtype=np.int64)
        m = sparse.coo_matrix(
            (vals, (rrank[self.ri[keep]], crank[self.ci[keep]])), shape=(len(rk), len(ck))
        ).tocsr()
        return InteractionMatrix(m, rk, ck, row_type, col_type, dict(provenance or {}))


def _ints(values: list[int]) -> np.ndarray:
    if values and max(abs(v) for v in values) >= _INT64_SAFE:
        return np.array(values, dtype=object)
    return np.array(values, dtype=np.int64)


@dataclass
class ShardResult:
    lines: int = 0
    records: int = 0
    skipped: Counter = field(default_factory=Counter)
    notices: list = field(default_factory=list)  # (position, notice)
    cells: dict = field(default_factory=lambda: defaultdict(Fraction))
    media_tweets: int = 0
    events: int = 0
    users: dict = field(default_factory=dict)  # author_id -> profile location
    table: CellTable | None = None

    def pack(self) -> "ShardResult":
        """Move the cell sums into a :class:`CellTable` (cheap to pickle)."""
        if self.cells:
            new = CellTable.from_fractions(self.cells)
            self.table = new if self.table is None else CellTable.concat([self.table, new])
            self.cells = defaultdict(Fraction)
        return self

    def cell_table(self) -> CellTable:
        if self.cells:
            self.pack()
        return self.table if self.table is not None else CellTable.empty()

    def exact_cells(self) -> dict[tuple[str, str], Fraction]:
        return self.cell_table().to_dict()

    def merge(self, other: "ShardResult") -> "ShardResult":
        self.lines += other.lines
        self.records += other.records
        self.skipped.update(other.skipped)
        self.notices.extend(other.notices)
        self.media_tweets += other.media_tweets
        self.events += other.events
        self.users.update(other.users)
        self.table = CellTable.concat([self.cell_table(), other.cell_table()])
        return self

    @classmethod
    def combine(cls, parts: Iterable["ShardResult"]) -> "ShardResult":
        """Merge many shards with a single table reduction."""
        total = cls()
        tables = []
        for p in parts:
            tables.append(p.cell_table())
            p.table = None
            total.merge(p)
        total.table = CellTable.concat(tables)
        return total

    def sampling_report(self) -> SamplingReport:
        notices = [n for _, n in sorted(self.notices, key=lambda t: t[0])]
        return estimate_sampling_rate(self.records, notices)

    def matrix(self, scheme: str) -> InteractionMatrix:
        prov = {"scheme": scheme, "cutoffs": [], "dropped_events": 0}
        return self.cell_table().to_matrix("user", "outlet", prov)


def scan_lines(lines: Iterable[str], registry: Registry, scheme: str = "weighted", offset: int = 0) -> ShardResult:
    scheme = _scheme(scheme)
    res = ShardResult()
    cells = res.cells
    users = res.users
    n = 0
    for n, line in enumerate(lines, 1):
        rec = parse_tweet(line)
        if isinstance(rec, Skipped):
            res.skipped[rec.reason] += 1
            if rec.reason in (LIMIT, CONNECTION):
                res.notices.append((offset + n, rec.notice))
            continue
        res.records += 1
        users[rec.author_id] = rec.author_description
        events = extract_interactions(rec, registry, scheme)
        if events:
            res.media_tweets += 1
            res.events += len(events)
            for e in events:
                cells[(e.user_id, e.outlet_id)] += e.weight
    res.lines = n
    return res


def chunked(lines: Iterable[str], size: int = CHUNK_LINES) -> Iterator[tuple[int, list[str]]]:
    it = iter(lines)
    offset = 0
    while True:
        block = list(islice(it, size))
        if not block:
            return
        yield offset, block
        offset += len(block)


def byte_ranges(path: str | Path, parts: int) -> list[tuple[int, int]]:
    """Split a file into ``parts`` contiguous byte ranges of similar size."""
    size = os.path.getsize(path)
    parts = max(1, min(parts, size or 1))
    bounds = [size * i // parts for i in range(parts + 1)]
    return [(a, b) for a, b in zip(bounds, bounds[1:]) if b > a]


def _range_lines(path: str | Path, start: int, end: int) -> Iterator[tuple[int, str]]:
    """Lines that *start* inside ``[start, end)``, with their byte offsets."""
    with open(path, "rb") as fh:
        pos = start
        if start > 0:
            fh.seek(start - 1)
            if fh.read(1) != b"\n":
                pos += len(fh.readline())
        else:
            fh.seek(0)
        while pos < end:
            raw = fh.readline()
            if not raw:
                return
            line_pos = pos
            pos += len(raw)
            line = raw.decode("utf-8", errors="replace").strip()
            if line:
                yield line_pos, line


def _scan_range(path: str | Path, start: int, end: int, registry: Registry, scheme: str) -> ShardResult:
    res = ShardResult()
    cells, users = res.cells, res.users
    for pos, line in _range_lines(path, start, end):
        res.lines += 1
        rec = parse_tweet(line)
        if isinstance(rec, Skipped):
            res.skipped[rec.reason] += 1
            if rec.reason in (LIMIT, CONNECTION):
                res.notices.append((pos, rec.notice))
            continue
        res.records += 1
        users[rec.author_id] = rec.author_description
        events = extract_interactions(rec, registry, scheme)
        if events:
            res.media_tweets += 1
            res.events += len(events)
            for e in events:
                cells[(e.user_id, e.outlet_id)] += e.weight
    return res.pack()


_worker_registry: Registry | None = None
_worker_scheme = "weighted"


def _init_worker(registry: Registry, scheme: str) -> None:
    global _worker_registry, _worker_scheme
    _worker_registry, _worker_scheme = registry, scheme


def _run_chunk(args: tuple[int, list[str]]) -> ShardResult:
    offset, block = args
    return scan_lines(block, _worker_registry, _worker_scheme, offset).pack()


def _run_range(args: tuple[str, int, int]) -> ShardResult:
    path, start, end = args
    return _scan_range(path, start, end, _worker_registry, _worker_scheme)


def _pool(workers: int, registry: Registry, scheme: str):
    ctx = mp.get_context("fork") if "fork" in mp.get_all_start_methods() else mp.get_context()
    return ctx.Pool(workers, initializer=_init_worker, initargs=(registry, scheme))


def scan_stream(
    lines: Iterable[str], registry: Registry, scheme: str = "weighted", workers: int = 1, chunk: int = CHUNK_LINES
) -> ShardResult:
    """Parse and extract a stream of lines, optionally across worker processes."""
    scheme = _scheme(scheme)
    if workers <= 1:
        return scan_lines(lines, registry, scheme).pack()
    with _pool(workers, registry, scheme) as pool:
        return ShardResult.combine(pool.imap(_run_chunk, chunked(lines, chunk)))


def scan_file(path: str | Path, registry: Registry, scheme: str = "weighted", workers: int = 1) -> ShardResult:
    """Parse and extract a newline-delimited file.

    Workers read their own byte ranges, so the parent never touches the raw
    lines.  Gzip input cannot be split and is streamed through
    :func:`scan_stream` instead.
    """
    scheme = _scheme(scheme)
    path = str(path)
    with open(path, "rb") as fh:
        gz = fh.read(2) == b"\x1f\x8b"
    if gz:
        return scan_stream(iter_lines(path), registry, scheme, workers)
    if workers <= 1:
        return _scan_range(path, 0, os.path.getsize(path), registry, scheme)
    # a few ranges per worker evens out uneven line costs
    ranges = [(path, a, b) for a, b in byte_ranges(path, workers * 4)]
    with _pool(workers, registry, scheme) as pool:
        return ShardResult.combine(pool.imap(_run_range, ranges))
