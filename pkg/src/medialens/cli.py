"""Command-line pipeline: ingest, geoparse, matrix, cluster, pair, regress, report.

Every stage reads declared inputs, writes its outputs under ``<out>/<stage>/``
through a temporary directory that is renamed into place only on success,
and records a ``manifest.json`` with content hashes of inputs and outputs.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import io
import json
import os
import shutil
import sys
import tempfile
import time
import traceback
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from . import __version__
from .clustering import kmeans, metric_curve, profile, stability
from .crosscountry import build_groups, predominant_group, robustness_runs, suggest_k, transition_report
from .geoparse import Ambiguous, LocationParser, Resolved, corpus_stats, load_gazetteer
from .ingest import CONNECTION, LIMIT, Skipped, TweetRecord, estimate_sampling_rate, iter_lines, parse_tweet
from .interactions import (
    InteractionMatrix,
    build_matrix,
    consumption_vectors,
    extract_interactions,
    info_flow,
    percentile_cutoff,
    threshold_cutoff,
)
from .pipeline import chunked
from .registry import (
    IDEOLOGIES,
    IDEOLOGY_GROUPS,
    HandleResolutionFixture,
    RegistryError,
    classify_credibility,
    fold_ideology,
    load_registry,
)
from .regression import MODELS, RegressionDataset, build_dataset, fit_ridge, kfold_cv

STAGES = ("ingest", "geoparse", "matrix", "cluster", "pair", "regress", "report")

DEFAULTS = {
    "paths": {},
    "matrix": {"scheme": "weighted", "percentile": "0.02"},
    "cluster": {"threshold": "5", "fold": "3", "k": "25", "k_range": "2-10", "seeds": "0,1,2,3,4"},
    "pair": {
        "pairs": "",
        "threshold": "5",
        "k_sg": "0",
        "k_tg": "0",
        "predominant_threshold": "0.5",
        "robustness_seeds": "",
    },
    "regress": {
        "media_sets": "20,30,50,70,100,120",
        "models": "ridge,gbdt,forest",
        "log_scale": "false",
        "folds": "5",
        "ridge_lambdas": "1e-5,1e-4,1e-3,1e-2,1e-1,1,10",
    },
    "report": {"analyses": ""},
    "run": {"seed": "0", "workers": "1"},
}


class StageError(Exception):
    exit_code = 1
    kind = "error"


class MissingInput(StageError):
    exit_code = 2
    kind = "missing_input"


class SchemaError(StageError):
    exit_code = 3
    kind = "schema_mismatch"


class InvariantError(StageError):
    exit_code = 4
    kind = "invariant_violation"


# config ----------------------------------------------------------------------


@dataclass
class PipelineConfig:
    parser: configparser.ConfigParser
    base: Path
    out: Path

    def get(self, section: str, key: str, fallback: str | None = None) -> str | None:
        return self.parser.get(section, key, fallback=fallback)

    def getint(self, section: str, key: str) -> int:
        return self.parser.getint(section, key)

    def getfloat(self, section: str, key: str) -> float:
        return self.parser.getfloat(section, key)

    def getbool(self, section: str, key: str) -> bool:
        return self.parser.getboolean(section, key)

    def ints(self, section: str, key: str) -> list[int]:
        raw = self.get(section, key, "") or ""
        if "-" in raw and "," not in raw:
            lo, hi = raw.split("-")
            return list(range(int(lo), int(hi) + 1))
        return [int(v) for v in raw.replace(" ", "").split(",") if v]

    def floats(self, section: str, key: str) -> list[float]:
        return [float(v) for v in (self.get(section, key, "") or "").replace(" ", "").split(",") if v]

    def words(self, section: str, key: str) -> list[str]:
        return [v.strip() for v in (self.get(section, key, "") or "").split(",") if v.strip()]

    def path(self, key: str, required: bool = True) -> Path | None:
        raw = self.get("paths", key)
        if not raw:
            if required:
                raise MissingInput(f"config is missing paths.{key}")
            return None
        p = Path(raw)
        p = p if p.is_absolute() else self.base / p
        if not p.exists():
            raise MissingInput(f"paths.{key} does not exist: {p}")
        return p

    def stage_dir(self, stage: str) -> Path:
        return self.out / stage

    def upstream(self, stage: str, name: str) -> Path:
        p = self.stage_dir(stage) / name
        if not p.exists():
            raise MissingInput(f"{p} not found; run `medialens {stage}` first")
        return p

    def validate(self) -> None:
        p = self.getfloat("matrix", "percentile")
        if not 0 <= p < 1:
            raise SchemaError("matrix.percentile must be in [0, 1)")
        if self.get("matrix", "scheme") not in ("occurrence", "country", "weighted", "1", "2", "3"):
            raise SchemaError("matrix.scheme must be occurrence, country or weighted")
        if self.getint("cluster", "fold") not in (3, 7):
            raise SchemaError("cluster.fold must be 3 or 7")
        if self.getint("run", "workers") < 1:
            raise SchemaError("--workers must be >= 1")


def load_config(args: argparse.Namespace) -> PipelineConfig:
    cp = configparser.ConfigParser(interpolation=None)
    cp.read_dict(DEFAULTS)
    base = Path.cwd()
    if args.config:
        cfg = Path(args.config)
        if not cfg.exists():
            raise MissingInput(f"config file not found: {cfg}")
        cp.read(cfg, encoding="utf-8")
        base = cfg.resolve().parent
    for item in args.set or ():
        key, _, value = item.partition("=")
        section, _, option = key.partition(".")
        if not option:
            raise SchemaError(f"--set expects section.key=value, got {item!r}")
        if not cp.has_section(section):
            cp.add_section(section)
        cp.set(section, option, value)
    if args.scheme:
        cp.set("matrix", "scheme", args.scheme)
    if args.seed is not None:
        cp.set("run", "seed", str(args.seed))
    if args.workers is not None:
        cp.set("run", "workers", str(args.workers))
    out = args.out or cp.get("paths", "out", fallback=None) or "run"
    out_path = Path(out)
    if not out_path.is_absolute():
        out_path = (Path.cwd() if args.out else base) / out_path
    cfg = PipelineConfig(cp, base, out_path)
    cfg.validate()
    return cfg


# stage plumbing ----------------------------------------------------------------


def sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def dumps(obj) -> str:
    def default(o):
        if isinstance(o, np.integer):
            return int(o)
        if isinstance(o, np.floating):
            return float(o)
        if isinstance(o, np.ndarray):
            return o.tolist()
        if isinstance(o, (set, frozenset)):
            return sorted(o)
        raise TypeError(f"not serializable: {type(o)}")

    return json.dumps(obj, indent=1, sort_keys=True, ensure_ascii=False, default=default) + "\n"


class StageRun:
    """Collects outputs in a temp dir and publishes them atomically."""

    def __init__(self, cfg: PipelineConfig, stage: str):
        self.cfg = cfg
        self.stage = stage
        self.dir = cfg.stage_dir(stage)
        self.inputs: dict[str, Path] = {}
        self.params: dict = {}
        self.metrics: dict = {}
        self._files: dict[str, str] = {}
        self._t0 = time.perf_counter()

    def input(self, name: str, path: Path) -> Path:
        self.inputs[name] = path
        return path

    def write(self, name: str, content: str) -> None:
        self._files[name] = content

    def _rel(self, p: Path) -> str:
        # paths inside the run directory are stored relative to it
        try:
            return Path(p).resolve().relative_to(self.cfg.out.resolve()).as_posix()
        except ValueError:
            return str(p)

    def commit(self) -> dict:
        self.dir.parent.mkdir(parents=True, exist_ok=True)
        self.dir.mkdir(exist_ok=True)
        tmp = Path(tempfile.mkdtemp(prefix=".tmp-", dir=self.dir))
        try:
            for name, content in self._files.items():
                (tmp / name).write_text(content, encoding="utf-8")
            elapsed = time.perf_counter() - self._t0
            manifest = {
                "stage": self.stage,
                "version": __version__,
                "inputs": {k: {"path": self._rel(p), "sha256": sha256_file(p)} for k, p in sorted(self.inputs.items())},
                "outputs": {n: {"path": self._rel(self.dir / n), "sha256": sha256_file(tmp / n)} for n in sorted(self._files)},
                "parameters": self.params,
                "metrics": self.metrics,
                "timings": {"seconds": round(elapsed, 6)},
            }
            if "items" in self.metrics:
                manifest["timings"]["throughput_per_s"] = self.metrics["items"] / elapsed if elapsed > 0 else None
            (tmp / "manifest.json").write_text(dumps(manifest), encoding="utf-8")
            for name in [*self._files, "manifest.json"]:
                os.replace(tmp / name, self.dir / name)
        finally:
            shutil.rmtree(tmp, ignore_errors=True)
        return manifest


def _csv(rows, header) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _read_records(path: Path) -> list[TweetRecord]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, 1):
            try:
                out.append(TweetRecord.from_dict(json.loads(line)))
            except (ValueError, TypeError) as exc:
                raise SchemaError(f"{path}:{n}: not a record ({exc})") from None
    return out


def _read_locations(path: Path) -> dict[str, dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if rows and not {"user_id", "outcome", "country", "state"} <= rows[0].keys():
        raise SchemaError(f"{path}: unexpected columns {list(rows[0])}")
    return {r["user_id"]: r for r in rows}


def _load_registry(cfg: PipelineConfig, run: StageRun):
    resolved = cfg.stage_dir("matrix") / "resolved_registry.json"
    if run.stage != "matrix" and resolved.exists():
        return load_registry(run.input("registry", resolved))
    try:
        reg = load_registry(run.input("registry", cfg.path("registry")))
        fixture = cfg.path("handle_fixture", required=False)
        if fixture is not None:
            reg = reg.with_resolved_handles(HandleResolutionFixture.load(run.input("handle_fixture", fixture)))
    except RegistryError as exc:
        raise InvariantError(str(exc)) from None
    return reg


# stages ----------------------------------------------------------------------


def _ingest_chunk(args):
    offset, block = args
    out, skipped, notices = [], Counter(), []
    for n, line in enumerate(block, 1):
        rec = parse_tweet(line)
        if isinstance(rec, Skipped):
            skipped[rec.reason] += 1
            if rec.reason in (LIMIT, CONNECTION):
                notices.append((offset + n, rec.notice))
        else:
            out.append(rec.to_json())
    return out, skipped, notices


def cmd_ingest(cfg: PipelineConfig) -> dict:
    run = StageRun(cfg, "ingest")
    src = run.input("tweets", cfg.path("tweets"))
    workers = cfg.getint("run", "workers")
    run.params = {"workers": workers}
    records, skipped, notices, n_lines = [], Counter(), [], 0
    chunks = chunked(iter_lines(src))
    if workers > 1:
        import multiprocessing as mp

        with mp.get_context().Pool(workers) as pool:
            parts = list(pool.imap(_ingest_chunk, chunks))
    else:
        parts = map(_ingest_chunk, chunks)
    for recs, sk, nt in parts:
        records.extend(recs)
        skipped.update(sk)
        notices.extend(nt)
    n_lines = len(records) + sum(skipped.values())
    try:
        report = estimate_sampling_rate(len(records), [n for _, n in sorted(notices, key=lambda t: t[0])])
    except ValueError as exc:
        raise InvariantError(str(exc)) from None
    run.write("records.ndjson", "".join(r + "\n" for r in records))
    run.write("sampling.json", dumps(report.to_dict()))
    run.metrics = {"lines": n_lines, "records": len(records), "skipped": dict(sorted(skipped.items())), "items": n_lines}
    return run.commit()


def cmd_geoparse(cfg: PipelineConfig) -> dict:
    run = StageRun(cfg, "geoparse")
    records = _read_records(run.input("records", cfg.upstream("ingest", "records.ndjson")))
    gaz = load_gazetteer(run.input("gazetteer", cfg.path("gazetteer")), cfg.path("aliases", required=False))
    if cfg.path("aliases", required=False):
        run.input("aliases", cfg.path("aliases"))
    description = {}
    for r in records:
        description[r.author_id] = r.author_description
    parser = LocationParser(gaz)
    rows = []
    for uid in sorted(description):
        res = parser(description[uid])
        country = state = candidates = ""
        if isinstance(res, Resolved):
            country, state = res.country, res.state or ""
        elif isinstance(res, Ambiguous):
            candidates = ";".join(sorted(res.candidates))
        rows.append((uid, res.kind, country, state, candidates))
    multiplicity = Counter(description.values())
    stats = corpus_stats((parser(d), m) for d, m in sorted(multiplicity.items()))
    run.write("locations.csv", _csv(rows, ("user_id", "outcome", "country", "state", "candidates")))
    run.write("stats.json", dumps(stats))
    run.metrics = {"users": len(rows), "unique_descriptions": len(multiplicity), "items": len(rows)}
    return run.commit()


def _flow_csv(flow) -> str:
    return _csv(
        ((k, repr(e.consumed), repr(e.supplied), "" if e.ratio is None else repr(e.ratio)) for k, e in sorted(flow.items())),
        ("gpe", "consumed", "supplied", "ratio"),
    )


def cmd_matrix(cfg: PipelineConfig) -> dict:
    run = StageRun(cfg, "matrix")
    records = _read_records(run.input("records", cfg.upstream("ingest", "records.ndjson")))
    locations = _read_locations(run.input("locations", cfg.upstream("geoparse", "locations.csv")))
    reg = _load_registry(cfg, run)
    scheme = cfg.get("matrix", "scheme")
    p = cfg.getfloat("matrix", "percentile")
    run.params = {"scheme": scheme, "percentile": p}

    events = [e for r in records for e in extract_interactions(r, reg, scheme)]
    user_m = build_matrix(events)
    cut = percentile_cutoff(user_m, p)

    country_of = {u: r["country"] for u, r in locations.items() if r["outcome"] == "resolved"}
    state_of = {u: r["state"] for u, r in locations.items() if r["outcome"] == "resolved" and r["state"]}
    outlet_country = {o.outlet_id: o.country for o in reg}
    outlet_state = {o.outlet_id: o.state for o in reg if o.state}
    views = {
        "country_outlet": cut.aggregate(country_of, None, "country", "outlet"),
        "country_country": cut.aggregate(country_of, outlet_country, "country", "country"),
        "state_outlet": cut.aggregate(state_of, None, "state", "outlet"),
        "state_state": cut.aggregate(state_of, outlet_state, "state", "state"),
    }
    for name, m in (("user_outlet", user_m), ("user_outlet_cut", cut), *views.items()):
        run.write(f"{name}.csv", m.to_csv())
        run.write(f"{name}.json", dumps(m.sidecar()))
    run.write("country_country_log10.csv", views["country_country"].to_log10_csv())
    run.write("state_state_log10.csv", views["state_state"].to_log10_csv())
    run.write("info_flow_country.csv", _flow_csv(info_flow(views["country_country"])))
    run.write("info_flow_state.csv", _flow_csv(info_flow(views["state_state"])))
    run.write("resolved_registry.json", reg.to_json() + "\n")
    run.metrics = {
        "records": len(records),
        "events": len(events),
        "users": len(user_m.row_keys),
        "users_after_cutoff": len(cut.row_keys),
        "total_mass": user_m.total(),
        "items": len(records),
    }
    return run.commit()


def _outlet_attrs(reg, fold: int) -> dict:
    return {
        o.outlet_id: {
            "group": o.ideology if fold == 7 else fold_ideology(o.ideology),
            "factuality": o.factuality_category,
            "credibility": classify_credibility(o),
        }
        for o in reg
    }


def cmd_cluster(cfg: PipelineConfig) -> dict:
    run = StageRun(cfg, "cluster")
    m = InteractionMatrix.load(run.input("matrix", cfg.upstream("matrix", "user_outlet_cut.csv")))
    run.input("matrix_sidecar", cfg.upstream("matrix", "user_outlet_cut.json"))
    locations = _read_locations(run.input("locations", cfg.upstream("geoparse", "locations.csv")))
    reg = _load_registry(cfg, run)
    threshold = cfg.getfloat("cluster", "threshold")
    fold = cfg.getint("cluster", "fold")
    seed = cfg.getint("run", "seed")
    seeds = cfg.ints("cluster", "seeds")
    ideology = {o.outlet_id: o.ideology for o in reg}
    active = threshold_cutoff(m, threshold)
    vectors = consumption_vectors(active, ideology, fold)
    users = active.row_keys
    bins = IDEOLOGIES if fold == 7 else IDEOLOGY_GROUPS
    n_distinct = len(np.unique(vectors, axis=0)) if len(users) else 0
    k = min(cfg.getint("cluster", "k"), n_distinct)
    ks = [kk for kk in cfg.ints("cluster", "k_range") if 2 <= kk <= n_distinct]
    run.params = {"threshold": threshold, "fold": fold, "k": k, "k_range": ks, "seed": seed, "seeds": seeds}
    report: dict = {"users": len(users), "k": k, "metrics": [], "profiles": [], "stability": None}
    curve = metric_curve(vectors, ks, seed) if ks else []
    report["metrics"] = curve
    assignments = []
    if k >= 1:
        cl = kmeans(vectors, k, seed)
        nationality = {u: (locations.get(u, {}).get("country") or "unknown") for u in users}
        profiles = profile(cl, vectors, users, bins, nationality, active, _outlet_attrs(reg, fold))
        report["profiles"] = [p.to_dict() for p in profiles]
        report["clustering"] = cl.to_dict()
        assignments = [(u, int(c)) for u, c in zip(users, cl.labels)]
        if len(seeds) >= 2:
            st = stability(vectors, k, seeds, [nationality[u] for u in users])
            report["stability"] = {"groups": st.groups, "seeds": st.seeds}
    run.write("cluster_report.json", dumps(report))
    run.write(
        "metrics.csv",
        _csv(((r["k"], repr(r["distortion"]), r["silhouette"], r["davies_bouldin"]) for r in curve), ("k", "distortion", "silhouette", "davies_bouldin")),
    )
    run.write("assignments.csv", _csv(assignments, ("user_id", "cluster")))
    run.metrics = {"users": len(users), "items": len(users)}
    return run.commit()


def _slug(s: str) -> str:
    return "".join(ch if ch.isalnum() else "_" for ch in s.lower())


def cmd_pair(cfg: PipelineConfig) -> dict:
    run = StageRun(cfg, "pair")
    m = InteractionMatrix.load(run.input("matrix", cfg.upstream("matrix", "user_outlet_cut.csv")))
    run.input("matrix_sidecar", cfg.upstream("matrix", "user_outlet_cut.json"))
    locations = _read_locations(run.input("locations", cfg.upstream("geoparse", "locations.csv")))
    reg = _load_registry(cfg, run)
    seed = cfg.getint("run", "seed")
    threshold = cfg.getfloat("pair", "threshold")
    pt = cfg.getfloat("pair", "predominant_threshold")
    rseeds = cfg.ints("pair", "robustness_seeds")
    pairs = [tuple(x.strip() for x in p.split(":")) for p in (cfg.get("pair", "pairs") or "").split(";") if p.strip()]
    run.params = {"pairs": pairs, "threshold": threshold, "seed": seed, "predominant_threshold": pt, "robustness_seeds": rseeds}
    ideology = {o.outlet_id: o.ideology for o in reg}
    country = {o.outlet_id: o.country for o in reg}
    summary = {}
    for pair in pairs:
        if len(pair) != 2:
            raise SchemaError(f"pair must look like 'A:B', got {':'.join(pair)!r}")
        a, b = pair
        residents = [u for u, r in locations.items() if r["outcome"] == "resolved" and r["country"] == a]
        sub = m.select_rows(residents)
        local = threshold_cutoff(sub.drop_columns([c for c in sub.col_keys if country.get(c) != a]), threshold)
        foreign = threshold_cutoff(sub.drop_columns([c for c in sub.col_keys if country.get(c) != b]), threshold)
        users = sorted(set(local.row_keys) & set(foreign.row_keys))
        lv = consumption_vectors(local.select_rows(users), ideology, 7)
        fv = consumption_vectors(foreign.select_rows(users), ideology, 7)
        result: dict = {"source": a, "target": b, "users": len(users)}
        if len(users) >= 1:
            k_sg = cfg.getint("pair", "k_sg") or suggest_k(lv, seed=seed)
            k_tg = cfg.getint("pair", "k_tg") or suggest_k(fv, seed=seed)
            k_sg = min(k_sg, len(np.unique(lv, axis=0)))
            k_tg = min(k_tg, len(np.unique(fv, axis=0)))
            g = build_groups(users, lv, fv, k_sg, k_tg, seed)
            rep = transition_report(g.sg, g.tg, k_sg, k_tg, g.sg_clustering.centroids, g.tg_clustering.centroids)
            result.update({"k_sg": k_sg, "k_tg": k_tg, "excluded": g.excluded, "clustering": rep.to_dict()})
            labels = list(IDEOLOGIES) + ["mixed"]
            pos = {lab: i for i, lab in enumerate(labels)}
            psg = [pos[predominant_group(v, pt)] for v in lv]
            ptg = [pos[predominant_group(v, pt)] for v in fv]
            prep = transition_report(psg, ptg, len(labels), len(labels))
            result["predominant"] = {"labels": labels, **prep.to_dict()}
            if rseeds:
                result["robustness"] = [
                    {"seed": s, "risk_ratio": r.to_dict()["risk_ratio"]}
                    for s, r in zip(rseeds, robustness_runs(users, lv, fv, k_sg, k_tg, rseeds))
                ]
            run.write(f"pair_{_slug(a)}__{_slug(b)}.csv", rep.risk_ratio_csv())
        run.write(f"pair_{_slug(a)}__{_slug(b)}.json", dumps(result))
        summary[f"{a}:{b}"] = {"users": len(users)}
    run.metrics = {"pairs": summary, "items": len(pairs)}
    return run.commit()


def _ridge_best(lambdas: list[float], k: int, seed: int) -> Callable:
    def choose(X, y):
        best = None
        for lam in lambdas:
            cv = kfold_cv(X, y, lambda A, b: fit_ridge(A, b, lam), min(k, len(y)), seed)
            if best is None or cv.mean_r2 > best[0]:
                best = (cv.mean_r2, lam)
        return fit_ridge(X, y, best[1])

    return choose


def cmd_regress(cfg: PipelineConfig) -> dict:
    run = StageRun(cfg, "regress")
    seed = cfg.getint("run", "seed")
    folds = cfg.getint("regress", "folds")
    models = cfg.words("regress", "models")
    unknown = set(models) - set(MODELS)
    if unknown:
        raise SchemaError(f"unknown models {sorted(unknown)}")
    lambdas = cfg.floats("regress", "ridge_lambdas")
    datasets: list[tuple[str, RegressionDataset]] = []
    features = cfg.path("features", required=False)
    if features is not None:
        datasets.append(("custom", RegressionDataset.from_csv(run.input("features", features), run.input("votes", cfg.path("votes")))))
    else:
        m = InteractionMatrix.load(run.input("matrix", cfg.upstream("matrix", "state_outlet.csv")))
        run.input("matrix_sidecar", cfg.upstream("matrix", "state_outlet.json"))
        with open(run.input("votes", cfg.path("votes")), newline="", encoding="utf-8") as fh:
            votes = {r["state"]: float(r["dem_share"]) for r in csv.DictReader(fh)}
        reg = _load_registry(cfg, run)
        ideology = {o.outlet_id: o.ideology for o in reg}
        log_scale = cfg.getbool("regress", "log_scale")
        for n in cfg.ints("regress", "media_sets"):
            datasets.append((f"top-{n}", build_dataset(m, votes, ideology, n, log_scale)))
    run.params = {"folds": folds, "models": models, "seed": seed, "ridge_lambdas": lambdas, "datasets": [d for d, _ in datasets]}
    results, preds = [], []
    for name, ds in datasets:
        if len(ds.y) < folds:
            raise InvariantError(f"{name}: {len(ds.y)} states is fewer than {folds} folds")
        for model in models:
            fit = _ridge_best(lambdas, folds, seed) if model == "ridge" else MODELS[model]
            cv = kfold_cv(ds.X, ds.y, fit, folds, seed)
            results.append((name, model, repr(cv.mean_r2), ";".join("" if r is None else repr(r) for r in cv.fold_r2)))
            preds.extend((name, model, s, repr(float(a)), repr(float(p))) for s, a, p in zip(ds.states, ds.y, cv.predictions))
    run.write("results.csv", _csv(results, ("media_set", "model", "mean_r2", "fold_r2")))
    run.write("predictions.csv", _csv(preds, ("media_set", "model", "state", "actual", "predicted")))
    run.metrics = {"rows": {n: len(d.y) for n, d in datasets}, "items": len(results)}
    return run.commit()


def cmd_report(cfg: PipelineConfig) -> dict:
    run = StageRun(cfg, "report")
    analyses = cfg.words("report", "analyses")
    run.params = {"analyses": analyses}
    report = {"analyses": {}}
    for stage in analyses:
        if stage not in STAGES or stage == "report":
            raise SchemaError(f"unknown analysis {stage!r}")
        mpath = run.input(stage, cfg.upstream(stage, "manifest.json"))
        manifest = json.loads(mpath.read_text(encoding="utf-8"))
        report["analyses"][stage] = {
            "outputs": manifest["outputs"],
            "parameters": manifest["parameters"],
            "metrics": manifest["metrics"],
        }
    run.write("report.json", dumps(report))
    return run.commit()


COMMANDS = {
    "ingest": cmd_ingest,
    "geoparse": cmd_geoparse,
    "matrix": cmd_matrix,
    "cluster": cmd_cluster,
    "pair": cmd_pair,
    "regress": cmd_regress,
    "report": cmd_report,
}


def _configured_stages(cfg: PipelineConfig) -> list[str]:
    """Stages ``all`` runs: the core chain plus any analysis that has its inputs configured."""
    names = ["ingest", "geoparse", "matrix", "cluster"]
    if cfg.get("pair", "pairs"):
        names.append("pair")
    if cfg.get("paths", "votes"):
        names.append("regress")
    return names + ["report"]


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="medialens", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI config file")
    common.add_argument("--out", help="run directory (default: paths.out or ./run)")
    common.add_argument("--workers", type=int, help="worker processes for parallel stages")
    common.add_argument("--seed", type=int, help="random seed")
    common.add_argument("--scheme", choices=("occurrence", "country", "weighted"), help="quantification scheme")
    common.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE", help="override any config value")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in [*COMMANDS, "all"]:
        sub.add_parser(name, parents=[common], help=f"run the {name} stage" if name != "all" else "run every stage in order")
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args)
        names = _configured_stages(cfg) if args.command == "all" else [args.command]
        for name in names:
            manifest = COMMANDS[name](cfg)
            print(f"{name}: wrote {len(manifest['outputs'])} outputs to {cfg.stage_dir(name)}", file=sys.stderr)
    except StageError as exc:
        print(dumps({"error": exc.kind, "command": args.command, "message": str(exc)}), file=sys.stderr, end="")
        return exc.exit_code
    except Exception as exc:  # noqa: BLE001 - reported as structured error
        print(
            dumps({"error": type(exc).__name__, "command": args.command, "message": str(exc), "trace": traceback.format_exc(limit=3)}),
            file=sys.stderr,
            end="",
        )
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
