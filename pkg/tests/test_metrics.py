import math

import numpy as np
import pytest

from census.metrics import (MetricsError, TrialMetrics, exploration_ratio, summarize, summarize_values,
                            transactions_for, union_coverage)


def metrics(n=10, seeded=1, cov=(), transfers=(), visited=()):
    m = TrialMetrics(n_nodes=n, seeded=seeded)
    m.coverage_timeline = [(0, seeded)] + list(cov)
    m.transfers_timeline = list(transfers)
    m.visited_set = frozenset(visited)
    return m


def test_first_transfer_ratio_is_one():
    m = metrics(cov=[(4, 2)], transfers=[(4, 1)])
    assert exploration_ratio(m, 0.2) == 1.0


def test_ratio_counts_wasted_transfers():
    m = metrics(n=4, cov=[(4, 2), (14, 3), (29, 4)], transfers=[(4, 1), (9, 2), (14, 3), (19, 4), (24, 5), (29, 6)])
    assert exploration_ratio(m, 1.0) == pytest.approx(6 / 3)
    assert exploration_ratio(m, 0.75) == pytest.approx(3 / 2)


def test_ratio_errors():
    m = metrics(cov=[(4, 2)], transfers=[(4, 1)])
    with pytest.raises(MetricsError):
        exploration_ratio(m, 1.0)
    with pytest.raises(MetricsError):
        exploration_ratio(m, 0.0)


def test_transactions_for():
    assert transactions_for(None, 5) is None
    assert transactions_for(0, 5) == 1
    assert transactions_for(9, 5) == 2


def test_union_coverage():
    assert union_coverage([metrics(visited=range(6))]) == 0.6
    assert union_coverage([metrics(visited=range(3)), metrics(visited=range(3, 6))]) == 0.6
    with pytest.raises(MetricsError):
        union_coverage([])
    with pytest.raises(MetricsError):
        union_coverage([metrics(n=10), metrics(n=11)])


def test_termination_violation_flag():
    m = metrics()
    m.cover_slots, m.termination_detect_slot = 100, 99
    assert m.termination_violation
    m.termination_detect_slot = 140
    assert not m.termination_violation
    m.cover_slots = None
    assert m.termination_violation


def test_summaries():
    s = summarize_values("x", [5.0])
    assert (s.mean, s.stderr) == (5.0, 0.0)
    assert summarize_values("x", [10, 20]).mean == 15
    v = np.random.default_rng(0).random(30)
    assert summarize_values("x", v).stderr == pytest.approx(np.std(v, ddof=1) / math.sqrt(30))
    with pytest.raises(MetricsError):
        summarize([])
    rows = summarize([{"cover_slots": 10}, {"cover_slots": 30}], fields=("cover_slots",))
    assert rows[0].mean == 20
