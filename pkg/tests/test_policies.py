import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from topcache.policies import (
    HistoryWindow,
    NSKPolicy,
    OraclePolicy,
    PartitionPolicy,
    make_policy,
    merge_window,
    nsk_select_group,
    opm_select_group,
    oracle_step,
)
from topcache.rate_core import DemandStats, total_rate
from topcache.ranker import Partitioning
from topcache.workload import Demand, attack_demand, sample_demand, zipf_catalog


def _window(*rounds, h=10):
    w = HistoryWindow(h)
    for r in rounds:
        w.push(r)
    return w


def test_merge_window_union():
    assert merge_window(_window([1, 8], [3, 6])).tolist() == [1, 3, 6, 8]
    assert merge_window(_window([1, 1], [1])).tolist() == [1]
    assert merge_window(_window()).size == 0


def test_history_window_evicts_oldest():
    w = _window([1], [2], [3], h=2)
    assert [d.tolist() for d in w] == [[2], [3]]
    with pytest.raises(ValueError):
        HistoryWindow(0)


def test_single_block_forces_everything():
    part = Partitioning.single(12)
    for method in (1, 2):
        d = opm_select_group(part, _window([0, 5]), 2, method)
        assert d.b == 1 and d.n2 == 12


def test_empty_window_caches_everything():
    part = Partitioning(np.array([0, 0, 1, 2, 2]))
    d = opm_select_group(part, _window(), 1, 2)
    assert d.n2 == 5 and d.b == 3


def test_bad_method():
    with pytest.raises(ValueError):
        opm_select_group(Partitioning.single(3), _window([0]), 1, 3)


def _brute_best_b(labels, requests, m):
    """Scan b with explicit sets and the scalar rate."""
    best_b, best = None, None
    for b in range(1, labels.max() + 2):
        popular = {i for i in range(labels.size) if labels[i] < b}
        distinct = set(requests)
        rate = total_rate(len(popular), m, DemandStats(len(distinct), len(distinct & popular)))
        if best is None or rate < best:
            best_b, best = b, rate
    return best_b


@given(st.data())
@settings(max_examples=150, deadline=None)
def test_method1_matches_exhaustive_scan(data):
    n = data.draw(st.integers(1, 30))
    blocks = data.draw(st.integers(1, min(5, n)))
    labels = np.array(data.draw(st.permutations(list(range(blocks)) + [data.draw(st.integers(0, blocks - 1)) for _ in range(n - blocks)])))
    m = data.draw(st.integers(1, 6))
    rounds = data.draw(st.lists(st.lists(st.integers(0, n - 1), min_size=1, max_size=6), min_size=1, max_size=4))
    d = opm_select_group(Partitioning(labels), _window(*rounds), m, method=1)
    merged = [x for r in rounds for x in r]
    assert d.b == _brute_best_b(labels, merged, m)
    assert d.popular_set == {i for i in range(n) if labels[i] < d.b}


@given(st.data())
@settings(max_examples=100, deadline=None)
def test_method2_majority_vote(data):
    n = data.draw(st.integers(2, 25))
    labels = np.sort(np.array(data.draw(st.lists(st.integers(0, 3), min_size=n, max_size=n))))
    labels = np.unique(labels, return_inverse=True)[1]
    m = data.draw(st.integers(1, 4))
    rounds = data.draw(st.lists(st.lists(st.integers(0, n - 1), min_size=1, max_size=5), min_size=1, max_size=6))
    votes = [_brute_best_b(labels, r, m) for r in rounds]
    counts = {b: votes.count(b) for b in votes}
    top = max(counts.values())
    expected = min(b for b, c in counts.items() if c == top)
    assert opm_select_group(Partitioning(labels), _window(*rounds), m, method=2).b == expected


def test_method2_tie_prefers_smaller_group():
    # block 0 = {0}, block 1 = {1..9}; round A is best served by b=1, round B by b=2
    labels = np.array([0] + [1] * 9)
    a, b = [0], list(range(10))
    assert _brute_best_b(labels, a, 1) == 1 and _brute_best_b(labels, b, 1) == 2
    assert opm_select_group(Partitioning(labels), _window(b, a), 1, method=2).b == 1


def test_nsk_threshold():
    counts = np.array([20, 5] + [1] * 9975)
    d = nsk_select_group(counts, 10_000, 100, 10)
    assert d.popular[0] and not d.popular[1]


def test_nsk_degenerate_caches_nothing():
    # every estimate is 0.01, below 1/(10*5)
    d = nsk_select_group(np.full(100, 2), 200, 10, 5)
    assert d.n2 == 0
    rate = NSKPolicy(100, 5, 10).charge(d, Demand(np.array([0, 1, 1, 3])))
    assert rate == 3


def test_nsk_uniform_prior():
    assert nsk_select_group(np.zeros(50), 0, 10, 5).n2 == 50
    assert nsk_select_group(np.zeros(51), 0, 10, 5).n2 == 0
    with pytest.raises(ValueError):
        nsk_select_group(np.zeros(5), 0, 0, 5)


def test_nsk_estimates_sum_to_one():
    pol = NSKPolicy(30, 2, 5)
    rng = np.random.default_rng(1)
    cat = zipf_catalog(30, 1)
    for _ in range(20):
        pol.step(sample_demand(cat, 5, rng))
        assert pol.estimates.sum() == pytest.approx(1, abs=1e-9)


def test_nsk_counts_attack_requests():
    pol = NSKPolicy(4, 1, 2)
    pol.learn(attack_demand(4))
    assert pol.counts.tolist() == [1, 1, 1, 1] and pol.total == 4


def test_oracle_step_examples():
    ranks = np.array([84, 165, 177, 310, 434])
    rate, n2 = oracle_step(ranks - 1, 1, 500)
    assert rate == pytest.approx(4.9655, abs=1e-4) and n2 == 434
    assert oracle_step([2], 5, 10) == (0.0, 3)
    assert oracle_step([1, 4, 4, 7], 0, 10)[0] == 3


def test_oracle_step_with_rank_map():
    true_rank = np.array([3, 1, 2])  # file 1 is most popular
    assert oracle_step([1], 1, 3, true_rank)[0] == 0.0


def test_partition_policy_first_round_caches_all():
    pol = PartitionPolicy(20, 3, 0.1, history=4, method=2)
    demand = Demand(np.array([1, 5, 5, 9]))
    rate, n2, parts = pol.step(demand)
    assert n2 == 20 and parts == 1
    assert rate == total_rate(20, 3, DemandStats(3, 3))


def test_decision_ignores_current_demand():
    cat = zipf_catalog(40, 1.0)
    rng = np.random.default_rng(4)
    history = [sample_demand(cat, 10, rng) for _ in range(30)]
    a, b = PartitionPolicy(40, 4, 0.3), PartitionPolicy(40, 4, 0.3)
    for d in history:
        a.step(d)
        b.step(d)
    committed = a.decide()
    wide, narrow = Demand(np.arange(40)), Demand(np.array([39]))
    rate_a, n2_a, _ = a.step(wide)
    rate_b, n2_b, _ = b.step(narrow)
    assert n2_a == n2_b == committed.n2
    assert rate_a == a.charge(committed, wide)
    assert rate_b == b.charge(committed, narrow)


def test_prefix_union_invariant():
    cat = zipf_catalog(60, 1.0)
    rng = np.random.default_rng(2)
    pol = PartitionPolicy(60, 5, 0.5, history=5, method=1)
    for _ in range(200):
        d = pol.decide()
        labels = pol.ranker.partitioning.labels
        assert set(np.flatnonzero(d.popular)) == set(np.flatnonzero(labels < d.b))
        pol.step(sample_demand(cat, 15, rng))


def test_oracle_policy_has_no_decision():
    pol = OraclePolicy(10, 2)
    with pytest.raises(TypeError):
        pol.decide()
    assert pol.step(Demand(np.array([0])))[0] == 0.0


def test_deterministic_replay():
    cat = zipf_catalog(80, 0.9)

    def rates(seed):
        rng = np.random.default_rng(seed)
        pols = [make_policy(p, 80, 5, 10, 0.2, 5) for p in ("opm1", "opm2", "nsk")]
        out = []
        for _ in range(100):
            d = sample_demand(cat, 10, rng)
            out.append([p.step(d)[0] for p in pols])
        return out

    assert rates(5) == rates(5)


def test_make_policy_unknown():
    with pytest.raises(ValueError):
        make_policy("lru", 5, 1, 1, 0.1, 1)
    assert make_policy("opm", 5, 1, 1, 0.1, 1, method=1).name == "opm1"
