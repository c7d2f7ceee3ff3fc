"""Seeded synthetic data for tests, benchmarks and the demo scripts."""

from __future__ import annotations

import json
from typing import Iterator

import numpy as np

from .registry import IDEOLOGIES, MediaOutlet, Registry

__all__ = [
    "synthetic_registry",
    "synthetic_stream",
    "planted_blobs",
    "elbow_fixture",
    "nonlinear_votes",
    "planted_pair_population",
]

COUNTRIES = ("United States", "United Kingdom", "India", "Australia", "Canada")


def synthetic_registry(n_outlets: int = 60, seed: int = 0) -> Registry:
    """Outlets spread over a few countries and all seven ideologies, 1-3 handles each."""
    rng = np.random.default_rng(seed)
    outlets = []
    for i in range(n_outlets):
        n_handles = int(rng.integers(1, 4))
        outlets.append(
            MediaOutlet(
                outlet_id=f"m{i:03d}",
                name=f"Media {i}",
                canonical_url=f"https://www.media{i:03d}.com/",
                country=COUNTRIES[i % len(COUNTRIES)],
                ideology=IDEOLOGIES[int(rng.integers(len(IDEOLOGIES)))],
                factuality_score=int(rng.integers(0, 11)),
                handles={f"media{i:03d}_{h}" for h in range(n_handles)},
            )
        )
    return Registry(outlets)


def synthetic_stream(
    n: int,
    registry: Registry,
    seed: int = 0,
    n_users: int = 2_000,
    media_rate: float = 0.7,
    malformed_rate: float = 0.001,
    notice_every: int = 0,
) -> Iterator[str]:
    """Yield ``n`` JSON lines shaped like Twitter v1.1 objects.

    Roughly ``media_rate`` of tweets reference at least one registered handle
    or domain.  With ``notice_every > 0`` a limit notice with a growing
    cumulative count replaces every ``notice_every``-th line.
    """
    rng = np.random.default_rng(seed)
    handles = sorted(registry.handle_map)
    domains = sorted(registry.domain_map)
    locations = ["Cambridge, Massachusetts", "London, UK", "Mumbai, India", "", "Sydney", "somewhere"]
    undelivered = 0
    # draw in bulk; per-line rng calls dominate otherwise
    kinds = rng.random(n)
    media = rng.random(n) < media_rate
    users = rng.integers(0, n_users, n)
    picks = rng.integers(0, len(handles), (n, 3))
    dpick = rng.integers(0, len(domains), n)
    n_mentions = rng.integers(0, 3, n)
    for i in range(n):
        if notice_every and i % notice_every == notice_every - 1:
            undelivered += int(picks[i, 0] % 7)
            yield json.dumps({"limit": {"track": undelivered, "timestamp_ms": str(1587254400000 + i)}})
            continue
        if kinds[i] < malformed_rate:
            yield '{"id_str": "broken", "user": '
            continue
        u = int(users[i])
        tweet = {
            "created_at": "Sun Apr 19 00:00:00 +0000 2020",
            "id_str": str(1250000000000000000 + i),
            "text": "covid update",
            "user": {"id_str": f"u{u}", "screen_name": f"user{u}", "location": locations[u % len(locations)]},
            "entities": {"hashtags": [{"text": "covid19"}], "urls": [], "user_mentions": []},
        }
        k = kinds[i]
        if media[i]:
            h = [handles[j] for j in picks[i]]
            if k < 0.35:
                tweet["retweeted_status"] = {"user": {"screen_name": h[0]}}
            elif k < 0.5:
                tweet["quoted_status"] = {"user": {"screen_name": h[0]}}
            elif k < 0.6:
                tweet["in_reply_to_user_id_str"] = "1"
                tweet["in_reply_to_screen_name"] = h[0]
            elif k < 0.8:
                tweet["entities"]["urls"].append({"expanded_url": f"https://news.{domains[dpick[i]]}/a/{i}"})
            else:
                tweet["entities"]["user_mentions"].append({"screen_name": h[0]})
            for j in range(int(n_mentions[i])):
                tweet["entities"]["user_mentions"].append({"screen_name": h[1 + j]})
        else:
            tweet["entities"]["user_mentions"].append({"screen_name": f"user{int(picks[i, 0])}"})
        yield json.dumps(tweet, separators=(",", ":"))


def planted_blobs(n: int = 300, d: int = 7, k: int = 3, sigma: float = 0.05, seed: int = 0):
    """``n`` points in ``k`` Gaussian blobs around well-separated simplex-like centres."""
    rng = np.random.default_rng(seed)
    centres = np.zeros((k, d))
    for c in range(k):
        centres[c, c % d] = 1.0
    labels = np.repeat(np.arange(k), -(-n // k))[:n]
    points = centres[labels] + rng.normal(0, sigma, (n, d))
    return points, labels


def elbow_fixture(n_groups: int = 12, per_group: int = 40, d: int = 7, sigma: float = 0.03, seed: int = 0):
    """Consumption-like ratio vectors from many planted groups on the simplex.

    With more groups than the k values usually scanned, distortion and
    Davies-Bouldin both keep falling as k grows, the way they do on real
    consumption data.
    """
    rng = np.random.default_rng(seed)
    centres = rng.dirichlet(np.full(d, 0.5), n_groups)
    labels = np.repeat(np.arange(n_groups), per_group)
    x = np.clip(centres[labels] + rng.normal(0, sigma, (len(labels), d)), 0, None)
    return x / x.sum(axis=1, keepdims=True), labels


def nonlinear_votes(n: int = 100, n_features: int = 6, seed: int = 0, noise: float = 0.02):
    """Vote share driven by the sign interaction of two features.

    ``y = 0.5 + 0.2 * sign(x0) * sign(x1) + noise``; the product of signs is
    uncorrelated with every feature, so a linear fit explains almost nothing.
    """
    rng = np.random.default_rng(seed)
    X = rng.uniform(-1, 1, (n, n_features))
    y = 0.5 + 0.2 * np.sign(X[:, 0]) * np.sign(X[:, 1]) + rng.normal(0, noise, n)
    return X, y


def planted_pair_population(n_per_group: int = 100, stickiness: float = 0.8, seed: int = 0):
    """Users with 7-bin local and foreign consumption vectors.

    Two planted source groups (left-leaning, right-leaning local diets).  A
    user keeps the same leaning abroad with probability ``stickiness``.
    Returns ``(users, local, foreign, source_labels, target_labels)``.
    """
    rng = np.random.default_rng(seed)
    left = np.array([0.1, 0.6, 0.2, 0.1, 0, 0, 0])
    right = np.array([0, 0, 0, 0.1, 0.2, 0.6, 0.1])
    protos = np.stack([left, right])
    src = np.repeat([0, 1], n_per_group)
    stay = rng.random(len(src)) < stickiness
    tgt = np.where(stay, src, 1 - src)

    def jitter(base):
        v = np.clip(base + rng.normal(0, 0.02, base.shape), 0, None)
        return v / v.sum(axis=1, keepdims=True)

    users = [f"p{i:04d}" for i in range(len(src))]
    return users, jitter(protos[src]), jitter(protos[tgt]), src, tgt
