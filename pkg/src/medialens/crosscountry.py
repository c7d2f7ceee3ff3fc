"""Source/target user groups for a country pair and their risk ratios.

Users of country A are clustered twice: once on how they consume A's media
(source groups, SG) and once on how they consume country B's media (target
groups, TG).  The risk ratio ``r[i, j] = P(TG_j | SG_i) / P(TG_j)`` tells how
much more likely a member of SG_i is to land in TG_j than a random user.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np

from .clustering import Clustering, davies_bouldin, kmeans
from .interactions import InteractionMatrix, consumption_vectors
from .registry import IDEOLOGIES

__all__ = [
    "MIXED",
    "GroupAssignment",
    "GroupTransitionReport",
    "build_groups",
    "transition_report",
    "predominant_group",
    "ablate_outlet",
    "suggest_k",
    "robustness_runs",
]

MIXED = "mixed"
K_CAP = 8


@dataclass
class GroupAssignment:
    users: list[str]
    sg: np.ndarray
    tg: np.ndarray
    excluded: int
    sg_clustering: Clustering | None = None
    tg_clustering: Clustering | None = None


def build_groups(
    users: Sequence[str],
    local_vectors,
    foreign_vectors,
    k_sg: int,
    k_tg: int,
    seed: int | None = 0,
) -> GroupAssignment:
    """Cluster users on local-media and on foreign-media consumption separately.

    Users whose vector is all zeros on either side are left out and counted.
    """
    local = np.asarray(local_vectors, dtype=float)
    foreign = np.asarray(foreign_vectors, dtype=float)
    if not (len(users) == len(local) == len(foreign)):
        raise ValueError("users, local_vectors and foreign_vectors differ in length")
    keep = (np.abs(local).sum(axis=1) > 0) & (np.abs(foreign).sum(axis=1) > 0)
    idx = np.flatnonzero(keep)
    sg = kmeans(local[idx], k_sg, seed)
    tg = kmeans(foreign[idx], k_tg, seed)
    return GroupAssignment(
        users=[users[i] for i in idx],
        sg=sg.labels,
        tg=tg.labels,
        excluded=int(len(users) - len(idx)),
        sg_clustering=sg,
        tg_clustering=tg,
    )


@dataclass
class GroupTransitionReport:
    counts: np.ndarray  # counts[i, j] = |SG_i ∩ TG_j|
    sg_centroids: np.ndarray | None = None
    tg_centroids: np.ndarray | None = None

    @property
    def n(self) -> int:
        return int(self.counts.sum())

    @property
    def sg_sizes(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    @property
    def tg_sizes(self) -> np.ndarray:
        return self.counts.sum(axis=0)

    @property
    def prior(self) -> np.ndarray:
        """P_i, share of users in each source group."""
        return self.sg_sizes / self.n

    @property
    def transitions(self) -> np.ndarray:
        """P_{i,j}; rows of empty source groups are NaN."""
        sizes = self.sg_sizes[:, None].astype(float)
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(sizes > 0, self.counts / np.where(sizes > 0, sizes, 1), np.nan)

    @property
    def baseline(self) -> np.ndarray:
        """P_j^r, share of all users in each target group."""
        return self.tg_sizes / self.n

    @property
    def risk_ratio(self) -> np.ndarray:
        base = self.baseline
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(base > 0, self.transitions / np.where(base > 0, base, 1), np.nan)

    def exact_risk_ratio(self) -> list[list[Fraction | None]]:
        n = self.n
        out = []
        for i, row in enumerate(self.counts):
            si = int(row.sum())
            out.append(
                [
                    None if si == 0 or self.tg_sizes[j] == 0
                    else Fraction(int(c), si) / Fraction(int(self.tg_sizes[j]), n)
                    for j, c in enumerate(row)
                ]
            )
        return out

    def to_dict(self) -> dict:
        def clean(a):
            return [[None if np.isnan(v) else float(v) for v in row] for row in a]

        d = {
            "n_users": self.n,
            "sg_sizes": self.sg_sizes.tolist(),
            "tg_sizes": self.tg_sizes.tolist(),
            "counts": self.counts.tolist(),
            "prior": self.prior.tolist(),
            "baseline": self.baseline.tolist(),
            "transitions": clean(self.transitions),
            "risk_ratio": clean(self.risk_ratio),
        }
        if self.sg_centroids is not None:
            d["sg_centroids"] = np.asarray(self.sg_centroids).tolist()
        if self.tg_centroids is not None:
            d["tg_centroids"] = np.asarray(self.tg_centroids).tolist()
        return d

    def risk_ratio_csv(self) -> str:
        """Long-format heatmap data; ``side`` is red above 1 and blue below."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("sg", "tg", "count", "transition", "risk_ratio", "side"))
        p, r = self.transitions, self.risk_ratio
        for i in range(self.counts.shape[0]):
            for j in range(self.counts.shape[1]):
                if np.isnan(r[i, j]):
                    w.writerow((i, j, int(self.counts[i, j]), "", "", ""))
                    continue
                side = "red" if r[i, j] > 1 else "blue" if r[i, j] < 1 else "neutral"
                w.writerow((i, j, int(self.counts[i, j]), repr(float(p[i, j])), repr(float(r[i, j])), side))
        return buf.getvalue()


def transition_report(
    sg, tg, n_sg: int | None = None, n_tg: int | None = None, sg_centroids=None, tg_centroids=None
) -> GroupTransitionReport:
    sg = np.asarray(sg, dtype=int)
    tg = np.asarray(tg, dtype=int)
    if sg.shape != tg.shape:
        raise ValueError("SG and TG assignments must cover the same users")
    if len(sg) == 0:
        raise ValueError("no users")
    n_sg = max(int(sg.max()) + 1, n_sg or 0)
    n_tg = max(int(tg.max()) + 1, n_tg or 0)
    counts = np.zeros((n_sg, n_tg), dtype=np.int64)
    np.add.at(counts, (sg, tg), 1)
    return GroupTransitionReport(counts, sg_centroids, tg_centroids)


def predominant_group(vector, threshold: float, labels: Sequence[str] = IDEOLOGIES) -> str:
    """Leaning holding at least ``threshold`` of the consumption, else ``"mixed"``.

    A tie for the top share is reported as mixed.
    """
    v = np.asarray(vector, dtype=float)
    if len(v) != len(labels):
        raise ValueError("vector and labels differ in length")
    top = v.max()
    winners = np.flatnonzero(v == top)
    if len(winners) != 1 or top < threshold:
        return MIXED
    return labels[int(winners[0])]


def ablate_outlet(
    m: InteractionMatrix, outlet: str, ideology_of: Mapping[str, str], fold: str | int = 7
) -> tuple[list[str], np.ndarray, int]:
    """Consumption vectors recomputed without one outlet.

    Returns ``(users, vectors, dropped)`` where users whose only consumption
    was the removed outlet are dropped.
    """
    if outlet not in m.col_keys:
        raise KeyError(f"outlet {outlet!r} not in matrix")
    before = m.row_sums() > 0
    reduced = m.drop_columns([outlet])
    vecs = consumption_vectors(reduced, ideology_of, fold)
    alive = vecs.sum(axis=1) > 0
    users = [u for u, a in zip(reduced.row_keys, alive) if a]
    return users, vecs[alive], int((before & ~alive).sum())


def suggest_k(points, k_max: int = K_CAP, seed: int | None = 0) -> int:
    """Smallest-Davies-Bouldin k in ``2..k_max`` (capped by distinct points)."""
    x = np.asarray(points, dtype=float)
    upper = min(k_max, K_CAP, len(np.unique(x, axis=0)))
    if upper < 2:
        return 1
    scores = []
    for k in range(2, upper + 1):
        cl = kmeans(x, k, seed)
        try:
            scores.append((davies_bouldin(x, cl), k))
        except ValueError:
            continue
    return min(scores)[1] if scores else 1


def robustness_runs(
    users: Sequence[str], local_vectors, foreign_vectors, k_sg: int, k_tg: int, seeds: Sequence[int]
) -> list[GroupTransitionReport]:
    """One transition report per seed, for checking that conclusions survive reseeding."""
    reports = []
    for s in seeds:
        g = build_groups(users, local_vectors, foreign_vectors, k_sg, k_tg, s)
        reports.append(
            transition_report(g.sg, g.tg, k_sg, k_tg, g.sg_clustering.centroids, g.tg_clustering.centroids)
        )
    return reports
