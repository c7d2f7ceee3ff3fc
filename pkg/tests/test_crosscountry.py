from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from sklearn.metrics import adjusted_rand_score

from medialens.crosscountry import (
    MIXED,
    ablate_outlet,
    build_groups,
    predominant_group,
    robustness_runs,
    suggest_k,
    transition_report,
)
from medialens.interactions import InteractionMatrix, consumption_vectors
from medialens.registry import IDEOLOGIES
from medialens.synthetic import planted_pair_population


def test_four_user_hand_example():
    rep = transition_report([0, 0, 0, 1], [0, 0, 1, 1])
    assert rep.prior[0] == 0.75
    assert rep.baseline[0] == 0.5
    assert rep.transitions[0, 0] == pytest.approx(2 / 3)
    assert rep.exact_risk_ratio()[0][0] == Fraction(4, 3)
    assert rep.risk_ratio[0, 0] == pytest.approx(4 / 3, abs=1e-15)


def test_empty_source_group_is_missing():
    rep = transition_report([0, 0, 2], [0, 1, 1])
    assert np.isnan(rep.transitions[1]).all()
    assert rep.exact_risk_ratio()[1] == [None, None]
    assert rep.to_dict()["risk_ratio"][1] == [None, None]


def test_independence_construction():
    # every SG x TG cell gets a*b users: TG independent of SG
    a, b = [3, 1, 2], [2, 5]
    sg, tg = [], []
    for i, ai in enumerate(a):
        for j, bj in enumerate(b):
            sg += [i] * (ai * bj)
            tg += [j] * (ai * bj)
    rep = transition_report(sg, tg)
    assert np.allclose(rep.risk_ratio, 1.0, atol=1e-9, rtol=0)
    assert all(v == 1 for row in rep.exact_risk_ratio() for v in row)


@settings(max_examples=200)
@given(st.lists(st.tuples(st.integers(0, 4), st.integers(0, 5)), min_size=1, max_size=80))
def test_weighted_mean_of_risk_ratio_is_one(pairs):
    sg, tg = zip(*pairs)
    rep = transition_report(sg, tg)
    P, r = rep.prior, rep.risk_ratio
    for j in range(r.shape[1]):
        if rep.tg_sizes[j] == 0:
            continue
        rows = rep.sg_sizes > 0
        assert float(np.sum(P[rows] * r[rows, j])) == pytest.approx(1.0, abs=1e-9)
    assert rep.prior.sum() == pytest.approx(1.0)
    assert np.allclose(np.nansum(rep.transitions, axis=1)[rep.sg_sizes > 0], 1.0)
    assert (np.nan_to_num(rep.risk_ratio) >= 0).all()
    doubled = transition_report(list(sg) * 2, list(tg) * 2)
    assert np.allclose(doubled.risk_ratio, rep.risk_ratio, equal_nan=True)


def test_single_group():
    users, local, foreign, _, _ = planted_pair_population(20)
    g = build_groups(users, local, foreign, 1, 1)
    rep = transition_report(g.sg, g.tg)
    assert rep.transitions.tolist() == [[1.0]] and rep.risk_ratio.tolist() == [[1.0]]


def test_planted_groups_recovered_and_sticky():
    users, local, foreign, src, tgt = planted_pair_population(100, stickiness=0.8, seed=3)
    g = build_groups(users, local, foreign, 2, 2, seed=0)
    assert adjusted_rand_score(src, g.sg) == 1.0
    assert adjusted_rand_score(tgt, g.tg) == 1.0
    rep = transition_report(g.sg, g.tg)
    # match each SG to the TG with the same leaning via centroids
    diag = [int(np.argmin(np.linalg.norm(g.tg_clustering.centroids - c, axis=1))) for c in g.sg_clustering.centroids]
    for i, j in enumerate(diag):
        assert rep.risk_ratio[i, j] > 1.3


def test_zero_vectors_excluded():
    users, local, foreign, _, _ = planted_pair_population(10)
    foreign[0] = 0
    local[5] = 0
    g = build_groups(users, local, foreign, 2, 2)
    assert g.excluded == 2 and len(g.users) == 18 and users[0] not in g.users


def test_risk_ratio_csv_sides():
    rep = transition_report([0, 0, 0, 1], [0, 0, 1, 1])
    lines = rep.risk_ratio_csv().splitlines()
    assert lines[0] == "sg,tg,count,transition,risk_ratio,side"
    assert lines[1].endswith("red") and lines[2].endswith("blue")


@pytest.mark.parametrize(
    "vector, expected",
    [
        ([0, 0, 0.8, 0.1, 0.1, 0, 0], "center-left"),
        ([0, 0.45, 0.1, 0.05, 0.4, 0, 0], MIXED),
        ([1 / 7] * 7, MIXED),
        ([0, 0.5, 0.5, 0, 0, 0, 0], MIXED),
        ([0, 0, 0, 0.5, 0.3, 0.2, 0], "center"),
    ],
)
def test_predominant(vector, expected):
    assert predominant_group(vector, 0.5) == expected


@given(st.permutations(range(6)))
def test_predominant_relabel_invariance(perm):
    v = np.array([0.7, 0.1, 0.05, 0.05, 0.04, 0.03, 0.03])
    w = v.copy()
    w[1:] = v[1:][list(perm)]
    assert predominant_group(v, 0.5) == predominant_group(w, 0.5) == "extreme-left"


def _ablation_matrix():
    cells = []
    for i in range(20):
        side = "L" if i < 10 else "R"
        cells += [(f"u{i}", side, 1.0), (f"u{i}", "ABC", 3.0)]
    cells.append(("only_abc", "ABC", 2.0))
    ideology = {"L": "left", "R": "right", "ABC": "center"}
    return InteractionMatrix.from_triplets(cells, "user", "outlet"), ideology


def test_ablate_outlet_sharpens_and_drops():
    m, ideology = _ablation_matrix()
    users, vecs, dropped = ablate_outlet(m, "ABC", ideology, 7)
    assert dropped == 1 and "only_abc" not in users and len(users) == 20
    assert np.allclose(vecs.max(axis=1), 1.0)
    before = consumption_vectors(m, ideology, 7)
    assert before.max(axis=1).mean() < vecs.max(axis=1).mean()


def test_ablate_unknown_outlet():
    m, ideology = _ablation_matrix()
    with pytest.raises(KeyError):
        ablate_outlet(m, "nope", ideology)


def test_suggest_k_and_robustness():
    users, local, foreign, _, _ = planted_pair_population(50, seed=1)
    assert suggest_k(local) == 2
    reps = robustness_runs(users, local, foreign, 2, 2, [0, 1, 2])
    assert len(reps) == 3
    assert all(r.counts.sum() == 100 for r in reps)
    assert len(IDEOLOGIES) == local.shape[1]
