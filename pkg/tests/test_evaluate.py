import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from sucp.data import FriendshipEdgeList, chronological_split
from sucp.evaluate import (compare, evaluate, ndcg_at_n, paired_t_test, precision_at_n, recall_at_n,
                           relevant_sets, run_experiment, select_beta)
from sucp.mf import MFConfig
from sucp.model import ModelConfig
from sucp.recommend import Recommendation
from sucp.synthetic import CorpusSpec, make_corpus

from conftest import DAY, T0, make_log, split_by_part


def brute_force(ranked, relevant, n):
    """Confusion-matrix precision/recall and an explicit DCG sum."""
    top = list(ranked)[:n]
    tp = sum(1 for p in top if p in relevant)
    fp = n - tp
    fn = len(relevant) - tp
    dcg = sum(1 / math.log2(i + 2) for i, p in enumerate(top) if p in relevant)
    idcg = sum(1 / math.log2(i + 2) for i in range(min(n, len(relevant))))
    return tp / (tp + fp), tp / (tp + fn), dcg / idcg


def test_metric_examples():
    ranked = list(range(10))
    assert precision_at_n(ranked, {0, 4, 9}, 10) == 0.3
    assert precision_at_n(ranked, {50}, 10) == 0.0
    assert precision_at_n(ranked, set(ranked), 10) == 1.0
    assert recall_at_n(ranked, {0, 4, 9} | set(range(100, 109)), 10) == 0.25
    assert recall_at_n(ranked, {1, 2}, 10) == 1.0
    assert ndcg_at_n(ranked, {0}, 10) == 1.0
    assert ndcg_at_n(ranked, {1}, 10) == pytest.approx(1 / math.log2(3))
    assert ndcg_at_n(ranked, {1}, 10) == pytest.approx(0.6309, abs=1e-4)
    assert ndcg_at_n(ranked, {99}, 10) == 0.0
    with pytest.raises(ValueError):
        recall_at_n(ranked, set(), 10)


@settings(max_examples=200)
@given(st.permutations(range(20)), st.sets(st.integers(0, 25), min_size=1, max_size=12), st.integers(1, 25))
def test_metrics_match_brute_force(ranked, relevant, n):
    p, r, g = brute_force(ranked, relevant, n)
    assert precision_at_n(ranked, relevant, n) == pytest.approx(p, abs=1e-12)
    assert recall_at_n(ranked, relevant, n) == pytest.approx(r, abs=1e-12)
    assert ndcg_at_n(ranked, relevant, n) == pytest.approx(g, abs=1e-12)
    assert 0 <= g <= 1


class ListSystem:
    """Replays fixed ranked lists."""

    name = "fixed"

    def __init__(self, lists):
        self.lists = lists

    def recommend(self, users, n):
        return [Recommendation(int(u), np.array(self.lists[u][:n]), np.zeros(min(n, len(self.lists[u]))))
                for u in users]


def _toy_split(low=2, sizes=(2, 3, 4, 5, 6)):
    # 5 users, 20 POIs; train visits p0..p4 for everyone, test visits vary
    rows = []
    rng = np.random.default_rng(5)
    for u in range(5):
        for k in range(5):
            rows.append((f"u{u}", f"p{k}", T0 + k * DAY, "train"))
    for k in range(5, 20):
        rows.append(("u0", f"p{k}", T0 + 90 * DAY, "valid"))  # register every POI id
    for u in range(5):
        for p in rng.choice(np.arange(low, 20), size=sizes[u], replace=False):
            rows.append((f"u{u}", f"p{p}", T0 + (30 + u) * DAY, "test"))
    return split_by_part(rows)


def test_evaluate_matches_oracle_on_toy():
    split = _toy_split()
    rel = relevant_sets(split)
    assert all(r.isdisjoint(range(5)) for r in rel)
    rng = np.random.default_rng(0)
    lists = {u: rng.permutation(np.arange(5, 20)).tolist() for u in range(5)}
    rep = evaluate(ListSystem(lists), split, (10, 20))
    for i, u in enumerate(rep.users):
        for n in (10, 20):
            p, r, g = brute_force(lists[u], rel[u], n)
            assert rep.per_user[("precision", n)][i] == pytest.approx(p, abs=1e-15)
            assert rep.per_user[("recall", n)][i] == pytest.approx(r, abs=1e-15)
            assert rep.per_user[("ndcg", n)][i] == pytest.approx(g, abs=1e-15)


def test_perfect_oracle_scores_one():
    split = _toy_split(low=5, sizes=(2,) * 5)
    rel = relevant_sets(split)
    lists = {u: sorted(rel[u]) for u in range(5)}
    rep = evaluate(ListSystem(lists), split, (2,))
    assert all(v == 1.0 for v in rep.means.values())


def test_users_without_new_test_pois_are_skipped():
    rows = [("a", "p0", T0, "train"), ("a", "p0", T0 + 1, "test"),
            ("b", "p0", T0, "train"), ("b", "p1", T0 + 1, "test")]
    split = split_by_part(rows)
    rep = evaluate(ListSystem({1: [1]}), split, (1,))
    assert rep.users.tolist() == [1] and rep.n_skipped == 1


def test_random_recommender_near_zero():
    rng = np.random.default_rng(1)
    n_poi = 2000
    rows = [(f"u{u}", f"p{k}", T0, "train") for u in range(50) for k in range(n_poi) if k % 50 == u]
    rows += [(f"u{u}", f"p{rng.integers(n_poi)}", T0 + DAY, "test") for u in range(50) for _ in range(3)]
    split = split_by_part(rows)
    lists = {u: rng.permutation(split.n).tolist() for u in range(50)}
    rep = evaluate(ListSystem(lists), split, (10,))
    assert rep.mean("precision", 10) < 0.02


# -- t-test --------------------------------------------------------------------------

def test_t_test_identical_and_degenerate():
    a = np.arange(10) * 0.25
    assert paired_t_test(a, a) == paired_t_test(a, a.copy())
    r = paired_t_test(a, a)
    assert (r.t, r.p) == (0.0, 1.0)
    d = paired_t_test(a + 0.5, a)
    assert d.degenerate and d.p == 0.0


def test_t_test_table_value():
    # two-sided 5% critical value for df = 9 is 2.262
    e = np.array([1, -1, 2, -2, 0.5, -0.5, 1.5, -1.5, 0.3, -0.3])
    c = 2.262157 * e.std(ddof=1) / math.sqrt(10)
    r = paired_t_test(e + c, np.zeros(10))
    assert r.df == 9
    assert r.t == pytest.approx(2.262157, rel=1e-9)
    assert r.p == pytest.approx(0.05, abs=1e-3)


@settings(max_examples=50)
@given(st.lists(st.tuples(st.floats(0, 1), st.floats(0, 1)), min_size=3, max_size=40))
def test_t_test_matches_scipy(pairs):
    a, b = np.array(pairs).T
    d = a - b
    if d.std(ddof=1) < 1e-6:
        return
    ours = paired_t_test(a, b)
    ref = stats.ttest_rel(a, b)
    assert ours.t == pytest.approx(ref.statistic, rel=1e-8)
    assert ours.p == pytest.approx(ref.pvalue, rel=1e-6, abs=1e-12)


def test_t_test_rejects_bad_input():
    with pytest.raises(ValueError):
        paired_t_test([1.0], [2.0])
    with pytest.raises(ValueError):
        paired_t_test([1.0, 2.0], [1.0, 2.0, 3.0])


# -- experiment grids -------------------------------------------------------------------

FAST = ModelConfig(mf=MFConfig(k=8, epochs=10))


@pytest.fixture(scope="module")
def small():
    rows, pairs = make_corpus(CorpusSpec(n_users=60, users_per_region=60, pois_per_region=60, checkins=(20, 40)))
    log_ = make_log(rows)
    idx = log_.user_index
    edges = FriendshipEdgeList(np.array([[idx[a], idx[b]] for a, b in pairs]))
    return chronological_split(log_), edges


def test_beta_grid(small):
    split, edges = small
    g = run_experiment("beta", [0.0, 0.5, 1.0], split, edges, FAST)
    assert len(g.cells) == 3 and all(c.report is not None for c in g.cells)
    assert len(g.rows()) == 3


def test_full_fraction_cell_equals_plain_evaluate(small):
    from sucp.model import SUCP
    split, edges = small
    g = run_experiment("train_fraction", [1.0], split, edges, FAST)
    plain = evaluate(SUCP.fit(split.train, edges, FAST), split, (10, 20))
    assert g.cells[0].report.means == plain.means


def test_overlap_grid_shrinks_edges(small):
    split, edges = small
    g = run_experiment("overlap_threshold", [0.0, 0.7], split, edges, FAST)
    assert g.cells[1].n_edges < g.cells[0].n_edges


def test_grid_with_baselines(small):
    split, edges = small
    g = run_experiment("beta", [0.5], split, edges, FAST, baselines=True)
    assert set(g.cells[0].extra) == {"SUCP-NoSocial", "TopPopular", "MF-Preference"}
    r = g.cells[0].report
    assert compare(r, g.cells[0].extra["TopPopular"], "recall", 10).df == r.n_users - 1


def test_grid_validation(small):
    split, edges = small
    with pytest.raises(ValueError):
        run_experiment("beta", [0.5, 0.1], split, edges, FAST)
    with pytest.raises(ValueError):
        run_experiment("k", [1], split, edges, FAST)


def test_failed_cell_is_recorded(small):
    split, edges = small
    g = run_experiment("beta", [0.5, 2.0], split, edges, FAST)
    assert g.cells[0].error is None
    assert "beta" in g.cells[1].error


def test_select_beta(small):
    split, edges = small
    beta, grid = select_beta(split, edges, FAST, values=(0.0, 1.0))
    best = max(grid.cells, key=lambda c: (c.report.mean("recall", 20), -c.value))
    assert beta == best.value

