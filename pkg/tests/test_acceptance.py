"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line."""

import csv
import json
import math
import os
import shutil
import time
from fractions import Fraction
from itertools import product

import numpy as np
import pytest
from scipy.spatial.distance import cdist
from sklearn.metrics import adjusted_rand_score

from medialens.cli import main
from medialens.clustering import davies_bouldin, distortion, kmeans, silhouette_mean
from medialens.crosscountry import transition_report
from medialens.ingest import LimitNotice, Skipped, TweetRecord, estimate_sampling_rate, parse_lines
from medialens.interactions import build_matrix, extract_interactions, percentile_cutoff, threshold_cutoff
from medialens.pipeline import scan_file
from medialens.regression import fit_gbdt, fit_ridge, kfold_cv, MODELS
from medialens.synthetic import (
    elbow_fixture,
    nonlinear_votes,
    planted_blobs,
    synthetic_registry,
    synthetic_stream,
)


@pytest.fixture
def verdict(capsys):
    def emit(n, title, ok, detail):
        with capsys.disabled():
            print(f"\n[criterion {n:2d}] {'PASS' if ok else 'FAIL'}  {title}: {detail}")
        assert ok, detail

    return emit


def test_c01_scheme3_conservation(verdict):
    reg = synthetic_registry(seed=11)
    lines = list(synthetic_stream(10_000, reg, seed=11))
    t0 = time.perf_counter()
    media_tweets, bad, cells = 0, 0, {}
    for rec in parse_lines(lines):
        if not isinstance(rec, TweetRecord):
            continue
        events = extract_interactions(rec, reg, "weighted")
        if events:
            media_tweets += 1
            bad += sum(e.weight for e in events) != 1
            for e in events:
                cells[(e.user_id, e.outlet_id)] = cells.get((e.user_id, e.outlet_id), Fraction(0)) + e.weight
    exact_mass = sum(cells.values(), Fraction(0))
    elapsed = time.perf_counter() - t0
    m = build_matrix(
        e for rec in parse_lines(lines) if isinstance(rec, TweetRecord) for e in extract_interactions(rec, reg)
    )
    ok = bad == 0 and exact_mass == media_tweets and abs(m.total() - media_tweets) < 1e-6 and elapsed < 5
    verdict(1, "scheme-3 conservation", ok,
            f"{media_tweets} media tweets, {bad} not summing to 1, exact mass {exact_mass}, "
            f"float mass {m.total():.6f}, {elapsed:.2f}s (< 5s)")


def test_c02_golden_pipeline(verdict, tmp_path, fixtures):
    for f in fixtures.iterdir():
        shutil.copy(f, tmp_path / f.name)
    codes = [main([s, "--config", str(tmp_path / "pipeline.ini"), "--out", str(tmp_path / "run")])
             for s in ("ingest", "geoparse", "matrix")]
    out = tmp_path / "run"
    same = {
        name: (out / stage / name).read_bytes() == (fixtures / golden).read_bytes()
        for stage, name, golden in [
            ("matrix", "user_outlet.csv", "golden_user_outlet.csv"),
            ("matrix", "country_country.csv", "golden_country_country.csv"),
            ("geoparse", "locations.csv", "golden_locations.csv"),
        ]
    }
    cells = {(r["row_key"], r["col_key"]): r["value"] for r in csv.DictReader(open(out / "matrix/user_outlet.csv"))}
    third = all(cells[("u2", o)].startswith("0.333") for o in ("cnn", "nyt"))
    locs = {r["user_id"]: r for r in csv.DictReader(open(out / "geoparse/locations.csv"))}
    cambridge = (locs["u1"]["country"], locs["u1"]["state"]) == ("United States", "Massachusetts")
    ok = codes == [0, 0, 0] and all(same.values()) and third and cambridge
    verdict(2, "golden pipeline", ok, f"exit codes {codes}, byte-identical {same}, 1/3 case {third}, Cambridge MA {cambridge}")


def test_c03_sampling_rate(verdict):
    reg = synthetic_registry(seed=3)
    tweets = list(synthetic_stream(900, reg, seed=3, malformed_rate=0.0))
    lines = tweets[:400] + ['{"limit":{"track":40,"timestamp_ms":"1587254400000"}}'] + tweets[400:] + \
        ['{"limit":{"track":100,"timestamp_ms":"1587254500000"}}']
    parsed = list(parse_lines(lines))
    delivered = sum(isinstance(r, TweetRecord) for r in parsed)
    notices = [r.notice for r in parsed if isinstance(r, Skipped) and isinstance(r.notice, LimitNotice)]
    rep = estimate_sampling_rate(delivered, notices)
    ok = delivered == 900 and rep.rate == 0.9
    verdict(3, "sampling rate", ok, f"delivered {delivered}, undelivered {rep.undelivered}, rate {rep.rate!r} (want 0.9 exact)")


def test_c04_cutoffs(verdict):
    reg = synthetic_registry(seed=4)
    events = [e for rec in parse_lines(synthetic_stream(1500, reg, seed=4, n_users=100))
              if isinstance(rec, TweetRecord) for e in extract_interactions(rec, reg)]
    m = build_matrix(events)
    sums = {}
    for e in events:
        sums[e.user_id] = sums.get(e.user_id, Fraction(0)) + e.weight
    # oracle: exact sums, largest first, larger id first among ties
    order = sorted(sums, key=lambda u: (sums[u], u), reverse=True)
    want_removed = set(order[: math.ceil(0.02 * len(sums))])
    cut = percentile_cutoff(m, 0.02)
    removed = set(m.row_keys) - set(cut.row_keys)
    kept5 = set(threshold_cutoff(m, 5).row_keys)
    want5 = {u for u, s in sums.items() if s >= 5}
    ok = len(sums) == 100 and removed == want_removed and len(removed) == 2 and kept5 == want5
    verdict(4, "cutoffs", ok, f"{len(sums)} users, removed {sorted(removed)} vs oracle {sorted(want_removed)}, "
            f"threshold 5 keeps {len(kept5)} vs oracle {len(want5)}")


def test_c05_clustering(verdict):
    x, truth = planted_blobs(n=300, d=7, k=3, seed=0)
    aris, monotone = [], True
    for seed in range(10):
        cl = kmeans(x, 3, seed)
        aris.append(adjusted_rand_score(truth, cl.labels))
        monotone &= all(b <= a + 1e-12 for a, b in zip(cl.history, cl.history[1:]))
    # curves on the elbow fixture: best distortion over seeds, median DB with seed spread as noise
    e, _ = elbow_fixture(seed=0)
    dist_curve, db_med, db_sd = [], [], []
    for k in range(2, 11):
        runs = [kmeans(e, k, s) for s in range(10)]
        dist_curve.append(min(distortion(e, r) for r in runs))
        dbs = [davies_bouldin(e, r) for r in runs]
        db_med.append(float(np.median(dbs)))
        db_sd.append(float(np.std(dbs)))
    dist_ok = all(b <= a for a, b in zip(dist_curve, dist_curve[1:]))
    db_ok = all(db_med[i + 1] <= db_med[i] + 2 * max(db_sd[i], db_sd[i + 1]) for i in range(8)) and db_med[-1] < db_med[0]
    ok = min(aris) >= 0.95 and monotone and dist_ok and db_ok
    verdict(5, "clustering", ok, f"min ARI {min(aris):.4f} over 10 seeds, Lloyd monotone {monotone}, "
            f"distortion curve monotone {dist_ok}, DB declining within seed noise {db_ok} "
            f"({db_med[0]:.3f} at k=2 -> {db_med[-1]:.3f} at k=10)")


def _brute(x, labels):
    cs = sorted(set(labels))
    cent = {c: x[labels == c].mean(axis=0) for c in cs}
    dist = sum(min(float(((p - c) ** 2).sum()) for c in cent.values()) for p in x)
    d = cdist(x, x)
    sil = []
    for i in range(len(x)):
        own = [j for j in range(len(x)) if labels[j] == labels[i] and j != i]
        if not own:
            sil.append(0.0)
            continue
        a = sum(d[i, j] for j in own) / len(own)
        b = min(sum(d[i, j] for j in range(len(x)) if labels[j] == c) / sum(labels == c) for c in cs if c != labels[i])
        sil.append(0.0 if max(a, b) == 0 else (a - b) / max(a, b))
    s = {c: sum(math.dist(p, cent[c]) for p in x[labels == c]) / sum(labels == c) for c in cs}
    db = sum(max((s[i] + s[j]) / math.dist(cent[i], cent[j]) for j in cs if j != i) for i in cs) / len(cs)
    return dist, sum(sil) / len(sil), db


def test_c06_metric_oracles(verdict):
    rng = np.random.default_rng(6)
    worst = 0.0
    cases = 0
    for n in range(4, 9):
        for k in (2, 3):
            for _ in range(20):
                x = rng.random((n, 3))
                labels = np.concatenate([np.arange(k), rng.integers(0, k, n - k)])
                cent = np.array([x[labels == c].mean(axis=0) for c in range(k)])
                ours = (distortion(x, cent), silhouette_mean(x, labels), davies_bouldin(x, labels))
                worst = max(worst, *(abs(a - b) for a, b in zip(ours, _brute(x, labels))))
                cases += 1
    hand = (
        distortion(np.array([[0.0], [2.0]]), np.array([[1.0]])) == 2.0
        and abs(silhouette_mean(np.array([[0.0], [1.0], [10.0]]), np.array([0, 0, 1])) - np.mean([-0.9, (1 - 9) / 9, 0])) < 1e-12
        and abs(davies_bouldin(np.array([[0.0], [2.0], [10.0], [12.0]]), np.array([0, 0, 1, 1])) - 0.2) < 1e-12
    )
    ok = worst <= 1e-9 and hand
    verdict(6, "metric oracles", ok, f"{cases} random fixtures of 4-8 points, max abs deviation {worst:.2e}, hand examples {hand}")


def test_c07_risk_ratio(verdict):
    hand = transition_report([0, 0, 0, 1], [0, 0, 1, 1]).exact_risk_ratio()[0][0] == Fraction(4, 3)
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(200):
        n = int(rng.integers(1, 300))
        rep = transition_report(rng.integers(0, 6, n), rng.integers(0, 7, n))
        rows = rep.sg_sizes > 0
        for j in np.flatnonzero(rep.tg_sizes > 0):
            worst = max(worst, abs(float(np.sum(rep.prior[rows] * rep.risk_ratio[rows, j])) - 1.0))
    a, b = [3, 1, 2, 5], [2, 5, 1]
    sg = [i for i, j in product(range(4), range(3)) for _ in range(a[i] * b[j])]
    tg = [j for i, j in product(range(4), range(3)) for _ in range(a[i] * b[j])]
    indep = float(np.abs(transition_report(sg, tg).risk_ratio - 1).max())
    ok = hand and worst <= 1e-9 and indep <= 1e-9
    verdict(7, "risk ratio", ok, f"r11 == 4/3 exactly {hand}, max |sum_i P_i r_ij - 1| {worst:.1e}, independence max |r-1| {indep:.1e}")


def test_c08_regression(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(8)
    X = rng.normal(size=(50, 6))
    w = rng.normal(size=6)
    lin = fit_ridge(X, X @ w + 0.25, 0.0)
    coef_err = max(float(np.abs(lin.coef - w).max()), abs(lin.intercept - 0.25))
    Xn, yn = nonlinear_votes(n=100, seed=0)
    sse = fit_gbdt(Xn, yn, stages=100, depth=3, learning_rate=0.1).train_sse
    sse_ok = all(b <= a for a, b in zip(sse, sse[1:]))
    gb = kfold_cv(Xn, yn, MODELS["gbdt"], 5, 0).mean_r2
    ridge = max(kfold_cv(Xn, yn, lambda A, b, lam=lam: fit_ridge(A, b, lam), 5, 0).mean_r2 for lam in (1e-5, 1e-3, 1e-1, 1, 10))
    elapsed = time.perf_counter() - t0
    ok = coef_err <= 1e-8 and sse_ok and gb - ridge >= 0.3 and elapsed < 30
    verdict(8, "regression", ok, f"ridge coef error {coef_err:.1e}, GBDT SSE non-increasing {sse_ok}, "
            f"CV R2 GBDT {gb:.3f} vs best ridge {ridge:.3f} (gap {gb - ridge:.3f}), {elapsed:.1f}s (< 30s)")


@pytest.fixture(scope="module")
def million_lines(tmp_path_factory):
    reg = synthetic_registry(seed=9)
    path = tmp_path_factory.mktemp("stream") / "stream.ndjson"
    with open(path, "w", encoding="utf-8") as fh:
        for line in synthetic_stream(1_000_000, reg, seed=9, n_users=50_000, notice_every=10_000):
            fh.write(line + "\n")
    return reg, path


def test_c09_throughput(verdict, million_lines):
    reg, path = million_lines
    rates, results = {}, {}
    for workers in (1, 4):
        t0 = time.perf_counter()
        res = scan_file(path, reg, "weighted", workers=workers)
        rates[workers] = res.lines / (time.perf_counter() - t0)
        results[workers] = res
    same = results[1].exact_cells() == results[4].exact_cells() and results[1].sampling_report().rate == results[4].sampling_report().rate
    speedup = rates[4] / rates[1]
    ok = results[1].lines == 1_000_000 and rates[1] >= 20_000 and speedup >= 3 and same
    verdict(9, "throughput", ok, f"{rates[1]:,.0f} lines/s single worker (>= 20,000), {rates[4]:,.0f} lines/s at 4 workers, "
            f"speedup {speedup:.2f}x (>= 3x), identical merged results {same}, cpus available {os.cpu_count()}")


def test_c10_determinism(verdict, tmp_path, fixtures):
    for f in fixtures.iterdir():
        shutil.copy(f, tmp_path / f.name)
    X, y = nonlinear_votes(n=40, seed=10)
    with open(tmp_path / "features.csv", "w") as fh:
        fh.write("state," + ",".join(f"f{j}" for j in range(X.shape[1])) + "\n")
        for i, row in enumerate(X):
            fh.write(f"s{i:02d}," + ",".join(repr(float(v)) for v in row) + "\n")
    with open(tmp_path / "votes.csv", "w") as fh:
        fh.write("state,dem_share\n" + "".join(f"s{i:02d},{v!r}\n" for i, v in enumerate(y.tolist())))
    extra = ["--set", "paths.features=features.csv", "--set", "paths.votes=votes.csv", "--set", "regress.models=ridge,gbdt,forest"]
    codes = [main(["all", "--config", str(tmp_path / "pipeline.ini"), "--out", str(tmp_path / out), *extra]) for out in ("a", "b")]
    compared, differing = 0, []
    for path in sorted((tmp_path / "a").rglob("*")):
        if path.is_dir() or path.name == "manifest.json":
            continue
        rel = path.relative_to(tmp_path / "a")
        compared += 1
        if path.read_bytes() != (tmp_path / "b" / rel).read_bytes():
            differing.append(str(rel))
    # manifests carry wall-clock timings, and so do the hashes of manifests read by `report`
    def stable(manifest):
        manifest.pop("timings")
        for entry in manifest["inputs"].values():
            if entry["path"].endswith("manifest.json"):
                entry.pop("sha256")
        return manifest

    for m in (tmp_path / "a").rglob("manifest.json"):
        a = stable(json.loads(m.read_text()))
        b = stable(json.loads((tmp_path / "b" / m.relative_to(tmp_path / "a")).read_text()))
        if a != b:
            differing.append(str(m.relative_to(tmp_path / "a")))
    stages = sorted(p.name for p in (tmp_path / "a").iterdir())
    ok = codes == [0, 0] and compared > 0 and not differing and "regress" in stages
    verdict(10, "determinism", ok, f"exit codes {codes}, stages {stages}, {compared} outputs compared, differing {differing}")
