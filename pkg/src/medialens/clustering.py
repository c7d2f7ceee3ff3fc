"""KMeans++ clustering of consumption vectors, quality metrics and profiling."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.spatial.distance import cdist

__all__ = [
    "Clustering",
    "ClusterProfile",
    "kmeans",
    "distortion",
    "silhouette_mean",
    "silhouette_samples",
    "davies_bouldin",
    "metric_curve",
    "stability",
    "profile",
]

MAX_ITER = 300


@dataclass
class Clustering:
    k: int
    centroids: np.ndarray
    labels: np.ndarray
    seed: int | None
    iterations_run: int
    history: list[float] = field(default_factory=list)  # distortion after each assignment

    @property
    def sizes(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.k)

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "seed": self.seed,
            "iterations_run": self.iterations_run,
            "centroids": self.centroids.tolist(),
            "sizes": self.sizes.tolist(),
        }


def _as_points(points) -> np.ndarray:
    x = np.asarray(points, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    return x


def _sq_dists(x: np.ndarray, c: np.ndarray) -> np.ndarray:
    # expanded form is fast but can dip below zero; clip
    d = (x * x).sum(1)[:, None] - 2 * x @ c.T + (c * c).sum(1)[None, :]
    return np.maximum(d, 0.0)


def _kmeans_pp(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = len(x)
    centers = [x[rng.integers(n)]]
    closest = _sq_dists(x, centers[0][None, :])[:, 0]
    for _ in range(1, k):
        total = closest.sum()
        if total <= 0:
            idx = rng.integers(n)
        else:
            idx = int(np.searchsorted(np.cumsum(closest), rng.random() * total, side="right"))
            idx = min(idx, n - 1)
        centers.append(x[idx])
        closest = np.minimum(closest, _sq_dists(x, x[idx][None, :])[:, 0])
    return np.array(centers)


def kmeans(points, k: int, seed: int | None = 0, max_iter: int = MAX_ITER) -> Clustering:
    """Lloyd's algorithm with KMeans++ seeding.

    Stops when assignments no longer change or after ``max_iter`` rounds.
    A centroid that loses all its points is moved onto the point farthest
    from its current centroid.
    """
    x = _as_points(points)
    if k < 1:
        raise ValueError("k must be >= 1")
    n_distinct = len(np.unique(x, axis=0))
    if k > n_distinct:
        raise ValueError(f"k={k} exceeds the number of distinct points ({n_distinct})")
    rng = np.random.default_rng(seed)
    centroids = _kmeans_pp(x, k, rng)
    labels = None
    history = []
    it = 0
    for it in range(1, max_iter + 1):
        d = _sq_dists(x, centroids)
        new = d.argmin(axis=1)
        history.append(float(d[np.arange(len(x)), new].sum()))
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        counts = np.bincount(labels, minlength=k)
        for j in np.flatnonzero(counts == 0):
            own = np.where(counts[labels] > 1, d[np.arange(len(x)), labels], -1.0)
            far = int(own.argmax())
            centroids[j] = x[far]
            labels[far] = j
            counts = np.bincount(labels, minlength=k)
        sums = np.zeros_like(centroids)
        np.add.at(sums, labels, x)
        centroids = sums / counts[:, None]
    return Clustering(k, centroids, labels, seed, it, history)


def distortion(points, clustering: Clustering | np.ndarray) -> float:
    """Sum of squared distances from each point to its closest centroid."""
    x = _as_points(points)
    c = clustering.centroids if isinstance(clustering, Clustering) else _as_points(clustering)
    return float(_sq_dists(x, c).min(axis=1).sum())


def _labels(clustering) -> np.ndarray:
    return np.asarray(clustering.labels if isinstance(clustering, Clustering) else clustering)


def silhouette_samples(points, clustering, orientation: str = "printed") -> np.ndarray:
    """Per-point silhouette values.

    With ``x`` the mean distance to the other members of the point's own
    cluster and ``y`` the mean distance to the members of the nearest other
    cluster, ``orientation="printed"`` returns ``(x - y) / max(x, y)`` and
    ``orientation="standard"`` returns ``(y - x) / max(x, y)`` (the usual
    Rousseeuw coefficient, positive for good partitions).  Points alone in
    their cluster score 0, as do points with ``max(x, y) == 0``.
    """
    if orientation not in ("printed", "standard"):
        raise ValueError("orientation must be 'printed' or 'standard'")
    x = _as_points(points)
    labels = _labels(clustering)
    present = np.unique(labels)
    if len(present) < 2:
        raise ValueError("silhouette needs at least two non-empty clusters")
    d = cdist(x, x)
    out = np.zeros(len(x))
    members = {c: labels == c for c in present}
    for i in range(len(x)):
        own = members[labels[i]]
        n_own = own.sum() - 1
        if n_own == 0:
            continue
        intra = d[i, own].sum() / n_own
        inter = min(d[i, members[c]].mean() for c in present if c != labels[i])
        m = max(intra, inter)
        if m == 0:
            continue
        out[i] = (intra - inter) / m if orientation == "printed" else (inter - intra) / m
    return out


def silhouette_mean(points, clustering, orientation: str = "printed") -> float:
    return float(silhouette_samples(points, clustering, orientation).mean())


def davies_bouldin(points, clustering) -> float:
    """Mean over clusters of the worst ``(s_i + s_j) / d_ij`` ratio.

    ``s_i`` is the mean distance of cluster members to their centroid and
    ``d_ij`` the distance between centroids (both recomputed from labels).
    """
    x = _as_points(points)
    labels = _labels(clustering)
    present = np.unique(labels)
    if len(present) < 2:
        raise ValueError("Davies-Bouldin needs at least two non-empty clusters")
    cents = np.array([x[labels == c].mean(axis=0) for c in present])
    spread = np.array([np.linalg.norm(x[labels == c] - cents[i], axis=1).mean() for i, c in enumerate(present)])
    dc = cdist(cents, cents)
    worst = []
    for i in range(len(present)):
        best = 0.0
        for j in range(len(present)):
            if i == j:
                continue
            if dc[i, j] == 0:
                raise ValueError(f"clusters {present[i]} and {present[j]} have coincident centroids")
            best = max(best, (spread[i] + spread[j]) / dc[i, j])
        worst.append(best)
    return float(np.mean(worst))


def metric_curve(points, ks: Sequence[int], seed: int | None = 0, orientation: str = "printed") -> list[dict]:
    """Distortion, mean silhouette and Davies-Bouldin for each k (elbow plotting)."""
    rows = []
    for k in ks:
        cl = kmeans(points, k, seed)
        row = {"k": k, "distortion": distortion(points, cl), "silhouette": None, "davies_bouldin": None}
        if len(np.unique(cl.labels)) >= 2:
            row["silhouette"] = silhouette_mean(points, cl, orientation)
            row["davies_bouldin"] = davies_bouldin(points, cl)
        rows.append(row)
    return rows


def _distribution(values: Sequence, support: Sequence | None = None) -> dict:
    counts = Counter(values)
    total = sum(counts.values())
    keys = support if support is not None else sorted(counts, key=str)
    return {k: (counts.get(k, 0) / total if total else 0.0) for k in keys}


def _tv(p: Mapping, q: Mapping) -> float:
    keys = set(p) | set(q)
    return 0.5 * sum(abs(p.get(k, 0.0) - q.get(k, 0.0)) for k in keys)


@dataclass
class StabilityReport:
    seeds: list[int]
    groups: list[dict]
    runs: list[Clustering]

    @property
    def robust(self) -> list[dict]:
        return [g for g in self.groups if g["robust"]]

    def to_dict(self) -> dict:
        return {"seeds": self.seeds, "groups": self.groups, "runs": [r.to_dict() for r in self.runs]}


def stability(
    points,
    k: int,
    seeds: Sequence[int],
    nationality: Sequence | None = None,
    max_distance: float = 0.2,
    size_tolerance: float = 0.2,
) -> StabilityReport:
    """Re-run kmeans under several seeds and report which clusters persist.

    Clusters of each run are greedily matched, one-to-one, to the clusters of
    the first run: by total-variation distance between member nationality
    distributions when ``nationality`` is given, else by centroid distance.
    A reference cluster is robust if a match within ``max_distance`` and with
    size within ``size_tolerance`` shows up in at least half of all runs
    (the reference run counts).
    """
    if len(seeds) < 2:
        raise ValueError("stability needs at least two seeds")
    x = _as_points(points)
    runs = [kmeans(x, k, s) for s in seeds]

    def signature(cl: Clustering, c: int):
        members = cl.labels == c
        if nationality is None:
            return cl.centroids[c]
        return _distribution([nationality[i] for i in np.flatnonzero(members)])

    def dist(a, b) -> float:
        return float(np.linalg.norm(a - b)) if nationality is None else _tv(a, b)

    ref = runs[0]
    ref_sizes = ref.sizes
    ref_sigs = [signature(ref, c) for c in range(k)]
    hits = np.ones(k, dtype=int)
    matches: list[list[int | None]] = [[c] for c in range(k)]
    for run in runs[1:]:
        sizes = run.sizes
        sigs = [signature(run, c) for c in range(k)]
        pairs = sorted((dist(ref_sigs[a], sigs[b]), a, b) for a in range(k) for b in range(k))
        used_a, used_b = set(), set()
        matched: dict[int, int] = {}
        for dv, a, b in pairs:
            if a in used_a or b in used_b:
                continue
            used_a.add(a)
            used_b.add(b)
            if dv <= max_distance and ref_sizes[a] > 0 and abs(sizes[b] - ref_sizes[a]) <= size_tolerance * ref_sizes[a]:
                matched[a] = b
        for a in range(k):
            matches[a].append(matched.get(a))
            hits[a] += a in matched
    groups = []
    for a in range(k):
        groups.append(
            {
                "reference_cluster": a,
                "size": int(ref_sizes[a]),
                "appearances": int(hits[a]),
                "matches": matches[a],
                "robust": bool(hits[a] * 2 >= len(runs)),
            }
        )
    return StabilityReport(list(seeds), groups, runs)


@dataclass
class ClusterProfile:
    cluster: int
    size: int
    mean_consumption: dict[str, float]
    nationality: dict[str, float]
    factuality: dict[str, float]
    credibility: dict[str, float]
    top_outlets: dict[str, list[tuple[str, float]]]

    def to_dict(self) -> dict:
        return {
            "cluster": self.cluster,
            "size": self.size,
            "mean_consumption": self.mean_consumption,
            "nationality": self.nationality,
            "factuality": self.factuality,
            "credibility": self.credibility,
            "top_outlets": {g: [[o, v] for o, v in lst] for g, lst in self.top_outlets.items()},
        }


def _mass_distribution(masses: Mapping[str, float]) -> dict[str, float]:
    total = sum(masses.values())
    return {k: (v / total if total else 0.0) for k, v in sorted(masses.items())}


def profile(
    clustering: Clustering,
    vectors: np.ndarray,
    users: Sequence[str],
    bins: Sequence[str],
    nationality: Mapping[str, str],
    matrix,
    outlet_attrs: Mapping[str, Mapping[str, str]],
    top_n: int = 5,
) -> list[ClusterProfile]:
    """Describe each cluster.

    ``matrix`` is the user x outlet :class:`~medialens.interactions.InteractionMatrix`
    the vectors came from; ``outlet_attrs`` gives, per outlet, its ``group``
    (ideology bin used for the top-outlet lists), ``factuality`` and
    ``credibility``.  Missing ratings are counted under ``"unknown"``.
    """
    labels = clustering.labels
    vectors = np.asarray(vectors)
    out = []
    for c in range(clustering.k):
        idx = np.flatnonzero(labels == c)
        if len(idx) == 0:
            continue
        member_users = [users[i] for i in idx]
        mean = vectors[idx].mean(axis=0)
        received: dict[str, float] = Counter()
        for u in member_users:
            for o, v in matrix.row(u).items():
                received[o] += v
        fact: dict[str, float] = Counter()
        cred: dict[str, float] = Counter()
        by_group: dict[str, list[tuple[str, float]]] = {}
        for o, v in received.items():
            attrs = outlet_attrs.get(o, {})
            fact[attrs.get("factuality") or "unknown"] += v
            cred[attrs.get("credibility") or "unknown"] += v
            by_group.setdefault(attrs.get("group") or "unknown", []).append((o, v))
        top = {
            g: sorted(lst, key=lambda t: (-t[1], t[0]))[:top_n]
            for g, lst in sorted(by_group.items())
        }
        out.append(
            ClusterProfile(
                cluster=c,
                size=len(idx),
                mean_consumption={b: float(v) for b, v in zip(bins, mean)},
                nationality=_distribution([nationality.get(u, "unknown") for u in member_users]),
                factuality=_mass_distribution(fact),
                credibility=_mass_distribution(cred),
                top_outlets=top,
            )
        )
    return out
