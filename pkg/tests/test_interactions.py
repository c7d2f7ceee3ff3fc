import csv
import io
import math
from collections import defaultdict
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from medialens.ingest import TweetRecord, parse_lines, parse_tweet
from medialens.interactions import (
    InteractionEvent,
    InteractionMatrix,
    MatrixError,
    build_matrix,
    consumption_vector,
    consumption_vectors,
    extract_interactions,
    info_flow,
    media_occurrences,
    percentile_cutoff,
    threshold_cutoff,
)
from medialens.synthetic import synthetic_registry, synthetic_stream


def rec(**kw):
    base = dict(tweet_id="t", author_id="u", author_handle="h", author_description="", created_at="")
    base.update(kw)
    return TweetRecord(**base)


def ev(u, o, w, scheme="weighted"):
    return InteractionEvent(u, o, Fraction(w), "t", scheme)


def weights(events):
    return {e.outlet_id: e.weight for e in events}


def test_one_third_each(registry):
    r = rec(is_quote=True, quoted_account="CNN", mentioned_accounts=["BBCBreaking", "nytimes"])
    assert weights(extract_interactions(r, registry, 3)) == {"cnn": Fraction(1, 3), "bbc": Fraction(1, 3), "nyt": Fraction(1, 3)}


def test_scheme_two_one_per_outlet(registry):
    r = rec(is_quote=True, quoted_account="CNN", mentioned_accounts=["nytimes"])
    assert weights(extract_interactions(r, registry, 2)) == {"cnn": 1, "nyt": 1}


def test_repeated_outlet(registry):
    r = rec(mentioned_accounts=["CNN", "cnnbrk", "BBCWorld"])
    ws = weights(extract_interactions(r, registry, "weighted"))
    assert ws == {"cnn": Fraction(2, 3), "bbc": Fraction(1, 3)}
    assert weights(extract_interactions(r, registry, "occurrence")) == {"cnn": 1, "bbc": 1}
    assert len(extract_interactions(r, registry, "occurrence")) == 3


def test_no_media(registry):
    assert extract_interactions(rec(mentioned_accounts=["someone"]), registry) == []


def test_url_share_and_hashtags(registry):
    line = (
        '{"id_str":"1","created_at":"Sun Apr 19 12:00:01 +0000 2020","user":{"id_str":"u","screen_name":"x"},'
        '"entities":{"hashtags":[{"text":"CNN"}],"user_mentions":[],'
        '"urls":[{"expanded_url":"https://edition.cnn.com/a"}]}}'
    )
    assert media_occurrences(parse_tweet(line), registry) == ["cnn"]


def test_unknown_scheme(registry):
    with pytest.raises(ValueError):
        extract_interactions(rec(), registry, "nope")


@settings(max_examples=200)
@given(st.lists(st.sampled_from(["CNN", "cnnbrk", "nytimes", "BBCBreaking", "FoxNews", "nobody"]), max_size=8))
def test_weighted_conserves_mass(registry, mentions):
    events = extract_interactions(rec(mentioned_accounts=mentions), registry, "weighted")
    occ = [m for m in mentions if m != "nobody"]
    assert sum(e.weight for e in events) == (1 if occ else 0)
    assert all(e.weight > 0 for e in events)
    total1 = sum(e.weight for e in extract_interactions(rec(mentioned_accounts=mentions), registry, "occurrence"))
    assert total1 >= sum(e.weight for e in events)
    assert (total1 == sum(e.weight for e in events)) == (len(occ) <= 1)


def test_build_matrix_example():
    m = build_matrix([ev("u1", "A", 0.5), ev("u1", "A", 0.5), ev("u2", "B", 1)])
    assert m.to_dict() == {("u1", "A"): 1.0, ("u2", "B"): 1.0}
    assert m.provenance["scheme"] == "weighted"


def test_build_matrix_empty():
    m = build_matrix([])
    assert m.shape == (0, 0) and m.nnz == 0 and m.total() == 0


def test_build_matrix_drops_unresolved():
    m = build_matrix([ev("u1", "A", 1), ev("u2", "A", 1)], row_key_fn=lambda e: {"u1": "US"}.get(e.user_id))
    assert m.to_dict() == {("US", "A"): 1.0}
    assert m.provenance["dropped_events"] == 1


def test_build_matrix_mixed_key_types():
    with pytest.raises(MatrixError):
        build_matrix([ev("u1", "A", 1), ev("u2", "B", 1)], row_key_fn=lambda e: 1 if e.user_id == "u1" else "x")


def test_no_stored_zeros():
    m = build_matrix([ev("u1", "A", 1), ev("u1", "B", 0)])
    assert m.nnz == 1 and (m.data.data > 0).all()


def _fixture_matrix(tweet_lines, registry):
    events = []
    for r in parse_lines(tweet_lines):
        if isinstance(r, TweetRecord):
            events += extract_interactions(r, registry)
    return build_matrix(events)


def test_fixture_user_outlet_matches_golden(tweet_lines, registry, fixtures):
    m = _fixture_matrix(tweet_lines, registry)
    assert m.to_csv() == (fixtures / "golden_user_outlet.csv").read_text()


def test_aggregation_matches_double_sum_oracle(tweet_lines, registry):
    m = _fixture_matrix(tweet_lines, registry)
    user_country = {"u1": "US", "u2": "UK", "u3": "US", "u4": "UK"}  # u5 unresolved
    outlet_country = {o.outlet_id: o.country for o in registry}
    agg = m.aggregate(user_country, outlet_country, "country", "country")
    oracle = defaultdict(float)
    for (u, o), v in m.to_dict().items():
        if u in user_country:
            oracle[(user_country[u], outlet_country[o])] += v
    assert set(agg.to_dict()) == set(oracle)
    for k, v in oracle.items():
        assert agg.get(*k) == pytest.approx(v, abs=1e-12)
    dropped_mass = sum(m.row("u5").values())
    assert agg.total() + dropped_mass == pytest.approx(m.total(), abs=1e-12)


@given(st.lists(st.tuples(st.sampled_from("abcdef"), st.sampled_from("VWXYZ"), st.fractions(0, 5).filter(lambda f: f > 0)), max_size=30),
       st.dictionaries(st.sampled_from("abcdef"), st.sampled_from("PQ")), st.dictionaries(st.sampled_from("VWXYZ"), st.sampled_from("MN")))
def test_grouping_conserves_mapped_mass(cells, rmap, cmap):
    m = build_matrix(ev(u, o, w) for u, o, w in cells)
    agg = m.aggregate(rmap, cmap)
    expect = sum(float(w) for u, o, w in cells if u in rmap and o in cmap)
    assert agg.total() == pytest.approx(expect, abs=1e-9)
    assert m.aggregate(None, None).to_dict() == m.to_dict()


def _hundred_users(seed=3):
    rng = np.random.default_rng(seed)
    sums = rng.integers(1, 30, 100).astype(float)
    sums[[10, 20, 30]] = 29.0  # force a tie at the top
    events = [ev(f"u{i:03d}", "A", Fraction(int(s))) for i, s in enumerate(sums)]
    return build_matrix(events), {f"u{i:03d}": s for i, s in enumerate(sums)}


def test_percentile_cutoff_sort_oracle():
    m, sums = _hundred_users()
    cut = percentile_cutoff(m, 0.02)
    oracle = sorted(sums, key=lambda u: (-sums[u], [-ord(c) for c in u]))[:2]
    assert set(m.row_keys) - set(cut.row_keys) == set(oracle)
    assert len(cut.row_keys) == 98
    assert min(sums[u] for u in oracle) >= max(sums[u] for u in cut.row_keys)
    assert cut.provenance["cutoffs"][-1]["removed"] == 2


def test_percentile_identity():
    m, _ = _hundred_users()
    assert percentile_cutoff(m, 0).to_dict() == m.to_dict()
    with pytest.raises(ValueError):
        percentile_cutoff(m, 1.0)


@given(st.lists(st.integers(1, 50), min_size=1, max_size=60), st.floats(0, 0.99))
def test_percentile_removes_ceil(sums, p):
    m = build_matrix(ev(f"u{i}", "A", s) for i, s in enumerate(sums))
    cut = percentile_cutoff(m, p)
    removed = set(m.row_keys) - set(cut.row_keys)
    assert len(removed) == math.ceil(round(p * len(sums), 9))
    if removed and cut.row_keys:
        assert min(m.row(u)["A"] for u in removed) >= max(cut.row(u)["A"] for u in cut.row_keys)


def test_threshold_cutoff_example():
    m = build_matrix([ev("a", "A", 7), ev("b", "A", 5), ev("c", "A", Fraction(49, 10))])
    assert threshold_cutoff(m, 5).row_keys == ["a", "b"]
    assert threshold_cutoff(m, 0).to_dict() == m.to_dict()


def test_threshold_cutoff_oracle():
    m, sums = _hundred_users()
    assert set(threshold_cutoff(m, 5).row_keys) == {u for u, s in sums.items() if s >= 5}


def test_consumption_vectors():
    ideology = {"L": "left", "C": "center", "R": "right", "CL": "center-left"}
    m = build_matrix([ev("u", "L", 1), ev("u", "CL", 1), ev("u", "C", 1), ev("u", "R", 1), ev("v", "L", 3)])
    assert consumption_vector(m, "u", ideology, 3).tolist() == [0.5, 0.25, 0.25]
    assert consumption_vector(m, "v", ideology, 7).tolist() == [0, 1, 0, 0, 0, 0, 0]
    vecs = consumption_vectors(m, ideology, 3)
    assert vecs.tolist() == [[0.5, 0.25, 0.25], [1.0, 0.0, 0.0]]


def test_consumption_vector_zero_row():
    m = build_matrix([ev("u", "L", 1)]).select_rows(["u"])
    m2 = m.drop_columns(["L"])
    with pytest.raises(ValueError):
        consumption_vector(m2, "u", {"L": "left"})


def test_info_flow():
    m = InteractionMatrix.from_triplets(
        [("A", "B", 1000.0), ("B", "A", 100.0), ("A", "A", 5e6), ("C", "C", 1.0)], "country", "country"
    )
    f = info_flow(m)
    assert f["A"].ratio == pytest.approx(1.0, abs=1e-12)
    assert f["B"].ratio == pytest.approx(-1.0, abs=1e-12)
    assert f["A"].consumed == 1000.0 and f["A"].supplied == 100.0
    assert f["C"].ratio is None


def test_info_flow_symmetric():
    m = InteractionMatrix.from_triplets([("A", "B", 3.0), ("B", "A", 3.0)], "state", "state")
    assert info_flow(m)["A"].ratio == 0.0


@given(st.lists(st.tuples(st.sampled_from(["u1", "u2", "u,3", 'u"4']), st.sampled_from(["A", "B"]), st.floats(1e-6, 1e6)), max_size=20))
def test_serialization_round_trip(tmp_path_factory, cells):
    m = InteractionMatrix.from_triplets(cells, "user", "outlet", {"scheme": "weighted", "cutoffs": []})
    p = tmp_path_factory.mktemp("m") / "m.csv"
    m.save(p)
    back = InteractionMatrix.load(p)
    assert back.to_dict() == m.to_dict()
    assert back.row_keys == m.row_keys and back.provenance == m.provenance


def test_log10_csv():
    m = InteractionMatrix.from_triplets([("A", "B", 100.0)], "country", "country")
    row = list(csv.DictReader(io.StringIO(m.to_log10_csv())))[0]
    assert float(row["value"]) == 2.0


def test_scheme_one_dominates_on_stream():
    reg = synthetic_registry(seed=1)
    lines = list(synthetic_stream(2000, reg, seed=1))
    totals = {}
    for scheme in ("occurrence", "weighted"):
        events = []
        for r in parse_lines(lines):
            if isinstance(r, TweetRecord):
                events += extract_interactions(r, reg, scheme)
        totals[scheme] = build_matrix(events).total()
    assert totals["occurrence"] > totals["weighted"]
