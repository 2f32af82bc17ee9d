import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ahncut.errors import InfeasibleError, NonSubmodularError, ParameterError
from ahncut.mincut import (
    FlowGraph,
    QpbProblem,
    build_graph,
    chain_energy,
    ishikawa_minimize,
    max_flow,
    minimize_chain,
    minimize_qpb,
)

from support import qpb_brute, random_submodular_qpb


def cut_value(g, x):
    x = np.asarray(x)
    v = float((g.source_cap * x).sum() + (g.sink_cap * (1 - x)).sum())
    for t, h, c, r in g.arcs:
        v += c * (1 - x[t]) * x[h] + r * (1 - x[h]) * x[t]
    return v


def random_graph(rng, n):
    g = FlowGraph(n)
    for i in range(n):
        g.add_tedge(i, float(rng.integers(0, 6)), float(rng.integers(0, 6)))
    for _ in range(int(rng.integers(0, 3 * n)) if n > 1 else 0):
        i, j = rng.choice(n, 2, replace=False)
        g.add_edge(int(i), int(j), float(rng.integers(0, 6)), float(rng.integers(0, 3)))
    return g


# -- max flow ---------------------------------------------------------------------------


def test_max_flow_equals_min_cut_by_enumeration():
    rng = np.random.default_rng(1)
    for _ in range(150):
        n = int(rng.integers(1, 9))
        g = random_graph(rng, n)
        flow, side = max_flow(g)
        best = min(cut_value(g, x) for x in itertools.product((0, 1), repeat=n))
        assert flow == pytest.approx(best, abs=1e-9)
        assert cut_value(g, side) == pytest.approx(flow, abs=1e-9)


def test_max_flow_textbook_example():
    # the classic six-node textbook network (max flow 23); s and t are the implicit terminals
    g = FlowGraph(4)
    g.add_tedge(0, 16, 0)
    g.add_tedge(1, 13, 0)
    g.add_tedge(3, 0, 4)
    g.add_tedge(2, 0, 20)
    g.add_edge(0, 2, 12)
    g.add_edge(1, 0, 4)
    g.add_edge(0, 1, 10)
    g.add_edge(2, 1, 9)
    g.add_edge(1, 3, 14)
    g.add_edge(3, 2, 7)
    flow, _ = max_flow(g)
    assert flow == 23


def test_max_flow_leaves_graph_reusable():
    g = random_graph(np.random.default_rng(4), 6)
    before = g.dump()
    assert max_flow(g)[0] == max_flow(g)[0]
    assert g.dump() == before


def test_only_source_reachable_nodes_are_source_side():
    g = FlowGraph(3)
    g.add_tedge(0, 1, 1)
    g.add_tedge(2, 2, 0)
    assert max_flow(g)[1].tolist() == [1, 1, 0]


def test_graph_rejects_negative_capacity():
    g = FlowGraph(2)
    with pytest.raises(ParameterError):
        g.add_edge(0, 1, -1)
    with pytest.raises(ParameterError):
        g.add_tedge(0, -1, 0)
    with pytest.raises(ParameterError):
        g.add_edge(0, 5, 1)


def test_large_grid_flow_is_consistent():
    rng = np.random.default_rng(0)
    n = 30
    g = FlowGraph(n * n)
    g.source_cap[:] = rng.integers(0, 5, n * n)
    g.sink_cap[:] = rng.integers(0, 5, n * n)
    idx = np.arange(n * n).reshape(n, n)
    g.add_edges(idx[:, :-1].ravel(), idx[:, 1:].ravel(), np.full(n * (n - 1), 2.0), np.full(n * (n - 1), 2.0))
    g.add_edges(idx[:-1].ravel(), idx[1:].ravel(), np.full(n * (n - 1), 2.0), np.full(n * (n - 1), 2.0))
    flow, side = max_flow(g)
    assert cut_value(g, side) == pytest.approx(flow)


# -- QPB --------------------------------------------------------------------------------


def test_qpb_matches_enumeration_with_prohibited_states():
    rng = np.random.default_rng(2)
    for _ in range(200):
        n = int(rng.integers(1, 9))
        unary, pairs, costs = random_submodular_qpb(rng, n, integer=bool(rng.integers(0, 2)))
        c = float(rng.integers(-3, 4))
        x, e = minimize_qpb(QpbProblem(n, unary, pairs, costs, c))
        ref, _ = qpb_brute(unary, pairs, costs, c)
        assert e == pytest.approx(ref, abs=1e-9)
        assert QpbProblem(n, unary, pairs, costs, c).energy(x) == e


def test_build_graph_reproduces_every_finite_energy():
    rng = np.random.default_rng(5)
    for _ in range(60):
        n = int(rng.integers(1, 6))
        prob = QpbProblem(n, *random_submodular_qpb(rng, n, allow_inf=False), constant=1.5)
        g, const = build_graph(prob)
        for x in itertools.product((0, 1), repeat=n):
            assert cut_value(g, x) + const == pytest.approx(prob.energy(x), abs=1e-9)


def test_non_submodular_pair_is_rejected():
    prob = QpbProblem(2, np.zeros((2, 2)), [[0, 1]], [[0, 1, 1, 3]])
    with pytest.raises(NonSubmodularError, match="pair term 0"):
        minimize_qpb(prob)


def test_both_mixed_states_prohibited_forces_equality():
    prob = QpbProblem(2, [[0, -1], [0, 3]], [[0, 1]], [[0, np.inf, np.inf, 0]])
    x, e = minimize_qpb(prob)
    assert x.tolist() == [0, 0] and e == 0
    prob = QpbProblem(2, [[0, -4], [0, 3]], [[0, 1]], [[0, np.inf, np.inf, 0]])
    assert minimize_qpb(prob)[0].tolist() == [1, 1]


def test_qpb_rejects_infinite_diagonal():
    with pytest.raises(ParameterError):
        QpbProblem(2, np.zeros((2, 2)), [[0, 1]], [[np.inf, 0, 0, 0]])


# -- chains and Ishikawa ----------------------------------------------------------------


def random_monge(rng, m):
    """Tables with nonpositive mixed second differences, built from convex and Potts-like parts."""
    tables = []
    for _ in range(m):
        h = np.cumsum(np.sort(rng.integers(-3, 4, 5)))  # convex in d
        s = np.arange(3)
        t = h[(s[:, None] - s[None, :]) + 2].astype(float)
        t += rng.integers(0, 4, 3)[:, None] + rng.integers(0, 4, 3)[None, :]
        tables.append(t)
    return np.array(tables).reshape(-1, 3, 3)


def chain_brute(unary, pairs, tables):
    n = unary.shape[0]
    return min(chain_energy(unary, pairs, tables, s) for s in itertools.product(range(3), repeat=n))


def test_chain_matches_enumeration():
    rng = np.random.default_rng(6)
    for _ in range(150):
        n = int(rng.integers(1, 6))
        unary = rng.integers(0, 8, (n, 3)).astype(float)
        unary[rng.random((n, 3)) < 0.15] = np.inf
        unary[:, 0] = np.where(np.isinf(unary).all(axis=1), 0.0, unary[:, 0])
        m = int(rng.integers(0, 2 * n)) if n > 1 else 0
        pairs = np.array([rng.choice(n, 2, replace=False) for _ in range(m)]).reshape(-1, 2)
        tables = random_monge(rng, m)
        states, e = minimize_chain(unary, pairs, tables)
        assert e == pytest.approx(chain_brute(unary, pairs, tables), abs=1e-9)
        assert chain_energy(unary, pairs, tables, states) == e


def test_chain_rejects_non_monge_table():
    t = np.zeros((1, 3, 3))
    t[0, 1, 1] = -5.0  # rewards agreeing in the middle only
    t[0, 0, 0] = t[0, 2, 2] = 0.0
    t[0, 0, 1] = t[0, 1, 0] = -6.0
    with pytest.raises(NonSubmodularError):
        minimize_chain(np.zeros((2, 3)), [[0, 1]], t)


def test_chain_all_forbidden_is_infeasible():
    with pytest.raises(InfeasibleError):
        minimize_chain(np.full((1, 3), np.inf), np.zeros((0, 2)), np.zeros((0, 3, 3)))


def test_dead_transitions_skip_booleans():
    # state 1 duplicates state 0 on variable 0 (e.g. chain (cur, cur, alpha))
    unary = np.array([[2.0, 2.0, 0.0], [1.0, 0.0, 3.0]])
    tables = np.array([[[0, 1, 2], [0, 1, 2], [2, 1, 0]]], dtype=float)
    live = np.array([[False, True], [True, True]])
    states, e = minimize_chain(unary, [[0, 1]], tables, live)
    assert e == pytest.approx(chain_brute(unary, np.array([[0, 1]]), tables))
    with pytest.raises(ParameterError):
        minimize_chain(np.array([[2.0, 5.0, 0.0], [0, 0, 0]]), [[0, 1]], tables, live)


def test_ishikawa_matches_enumeration_and_rejects_concave():
    rng = np.random.default_rng(7)
    s = np.arange(3)
    for _ in range(80):
        n = int(rng.integers(1, 6))
        unary = rng.integers(0, 6, (n, 3)).astype(float)
        m = int(rng.integers(0, 2 * n)) if n > 1 else 0
        pairs = np.array([rng.choice(n, 2, replace=False) for _ in range(m)]).reshape(-1, 2)
        h = np.array([np.cumsum(np.sort(rng.uniform(-2, 2, 5))) for _ in range(m)]).reshape(-1, 5)
        levels, e = ishikawa_minimize(unary, pairs, h)
        tables = h[:, (s[:, None] - s[None, :]) + 2]
        assert e == pytest.approx(chain_brute(unary, pairs, tables), abs=1e-9)
    with pytest.raises(NonSubmodularError):
        ishikawa_minimize(np.zeros((2, 3)), [[0, 1]], [[0, 0, 1, 0, 0]])


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_qpb_property(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 7))
    unary, pairs, costs = random_submodular_qpb(rng, n, integer=False)
    _, e = minimize_qpb(QpbProblem(n, unary, pairs, costs))
    assert e == pytest.approx(qpb_brute(unary, pairs, costs)[0], abs=1e-9)


# -- the closed-form three-label link encoding ---------------------------------------------


@pytest.mark.parametrize("k", [0.0, 1.0, 2.5])
def test_closed_form_link_encoding(k):
    """Closed-form boolean expression for a link over the range-expansion states.

    Parent states beta, Free, alpha are (c1, c2) = (1, 1), (1, 0), (0, 0);
    the child uses the same pattern with its current label delta in place of
    beta.  With I = [beta != delta] the link costs

        (1 - I) k c2 (1 - x2) + I k c2 + k (1 - c1) x1

    which agrees with the original link on all nine state pairs.  Subtracting
    the I k c2 term instead does not, with or without a constant offset.
    """
    F, alpha = 3, 2
    code = lambda s, base: (1, 1) if s == base else ((1, 0) if s == F else (0, 0))  # noqa: E731

    def closed(sign, I, child, parent, delta, beta):
        x1, x2 = code(child, delta)
        c1, c2 = code(parent, beta)
        return (1 - I) * k * c2 * (1 - x2) + sign * I * k * c2 + k * (1 - c1) * x1

    for delta, beta in [(0, 0), (0, 1)]:
        I = int(beta != delta)
        mismatch = {-1: False}
        for child in (delta, F, alpha):
            if child == F:
                continue  # base-level children never go Free; checked separately below
            for parent in (beta, F, alpha):
                truth = 0.0 if parent in (F, child) else k
                assert closed(+1, I, child, parent, delta, beta) == truth
                mismatch[-1] |= closed(-1, I, child, parent, delta, beta) != truth
        if k and I:
            assert mismatch[-1]
    # auxiliary children may be Free: Free child under a non-Free parent always pays k
    for parent, truth in [(0, k), (F, 0.0), (alpha, k)]:
        assert closed(+1, 0, F, parent, 0, 0) == truth
