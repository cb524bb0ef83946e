import math

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from census import analysis as an
from census.aggregation import Count, Histogram, Max, Min, Sum, dedup_and_total, merge
from census.mobility import reflect
from census.protocol import NodeState, Token, checkpoint_token, gradient_receive, is_valid_level, tick_refresh

EDGES = (0.0, 1.0, 2.0, 3.0)
finite = st.floats(-1e6, 1e6, allow_nan=False)
# sums use integers so that float addition is exactly associative
BY_KIND = {
    "count": st.builds(Count, st.integers(0, 10 ** 6)),
    "sum": st.builds(Sum, st.integers(-10 ** 6, 10 ** 6).map(float)),
    "min": st.builds(Min, finite),
    "max": st.builds(Max, finite),
    "histogram": st.builds(lambda c: Histogram(EDGES, tuple(c)),
                           st.lists(st.integers(0, 100), min_size=3, max_size=3)),
}


@given(st.data(), st.sampled_from(sorted(BY_KIND)))
def test_merge_commutative_associative(data, kind):
    a, b, c = (data.draw(BY_KIND[kind]) for _ in range(3))
    assert merge(a, b) == merge(b, a)
    assert merge(merge(a, b), c) == merge(a, merge(b, c))


@given(st.lists(st.integers(1, 50), min_size=1, max_size=6), st.integers(0, 5))
def test_dedup_counts_each_chain_once(sizes, shared):
    rec_tok = Token(999, Count(shared), transfer_count=shared)
    base = checkpoint_token(rec_tok, 1000, Count(0))
    toks = [Token(i, Count(s), base.checkpoints) for i, s in enumerate(sizes)]
    assert dedup_and_total(toks) == Count(sum(sizes) + shared)


@given(st.floats(-50, 60), st.floats(-50, 60), st.floats(0, 2 * math.pi, exclude_max=True))
def test_reflect_lands_inside(x, y, h):
    pos, hd = reflect(np.array([[x, y]]), np.array([h]), 10.0)
    assert 0.0 <= pos[0, 0] <= 10.0 and 0.0 <= pos[0, 1] <= 10.0
    assert 0.0 <= hd[0] < 2 * math.pi


@settings(max_examples=200)
@given(st.lists(st.sampled_from([1.0, 0.5, 0.25, 2.0 ** -8, 2.0 ** -31]), max_size=4),
       st.integers(0, 40))
def test_gradient_levels_stay_dyadic(levels, ticks):
    s = NodeState(visited=True, level=0.0)
    s, _ = gradient_receive(s, levels, min_level=2.0 ** -32)
    for _ in range(ticks):
        s = tick_refresh(s)
        assert is_valid_level(s.level)
        s.check()


@given(st.floats(1, 1e5), st.floats(1, 50))
def test_series_bounds(n, d):
    g = an.gradient_cover_series(n, d)
    assert n <= g <= an.gradient_cover_bound(n, d) * (1 + 1e-12)
    assert an.local_bias_cover_series(n, d) >= min(n, n - n / d)


@given(st.floats(0.01, 0.99), st.integers(1, 20))
def test_union_theory_monotone(m, c):
    assert an.union_coverage_theory(m, c + 1) >= an.union_coverage_theory(m, c) >= m - 1e-12
