import itertools

import numpy as np
import pytest

from ahncut.energy import Labeling, NetworkBuilder, eval_higher_order, eval_joint
from ahncut.errors import ParameterError
from ahncut.moves import (
    ALGORITHMS,
    TRACE_HEADER,
    alpha_expansion_step,
    alphabeta_swap_step,
    collapse_auxiliaries,
    format_trace,
    icm_step,
    initial_labels,
    make_state,
    range_expansion_step,
    range_swap_step,
    solve,
)
from ahncut.oracle import brute_force_map, move_space, move_space_minimum

from support import random_network


def random_state(rng, net):
    x = rng.integers(0, net.num_labels, size=net.num_vars)
    x[net.num_base:] = rng.integers(0, net.num_labels + 1, size=net.num_vars - net.num_base)
    return make_state(net, x)


def all_moves(net):
    K, F = net.num_labels, net.free
    for a in range(K):
        yield "expansion", a, None, lambda s, a=a: alpha_expansion_step(net, s, a)
        yield "range-expansion", a, None, lambda s, a=a: range_expansion_step(net, s, a)
    for a, b in itertools.combinations(range(F + 1), 2):
        yield "swap", a, b, lambda s, a=a, b=b: alphabeta_swap_step(net, s, a, b)
    for a, b in itertools.combinations(range(K), 2):
        yield "range-swap", a, b, lambda s, a=a, b=b: range_swap_step(net, s, a, b)


def test_every_step_is_optimal_over_its_move_space():
    rng = np.random.default_rng(12)
    for _ in range(40):
        net = random_network(rng, K=int(rng.integers(2, 4)), nb=4, na=2, levels=int(rng.integers(2, 4)),
                             integer=False)
        state = random_state(rng, net)
        for name, a, b, step in all_moves(net):
            new = step(state)
            _, best = move_space_minimum(net, state.labels, name, a, b)
            assert new.energy == pytest.approx(best, abs=1e-9), (name, a, b)
            assert new.energy == pytest.approx(eval_joint(net, new.labels), abs=1e-9)
            space = move_space(net, state.labels, name, a, b)
            assert all(int(x) in opts for x, opts in zip(new.labels, space))


def test_steps_do_not_mutate_input_and_keep_ties():
    net = random_network(np.random.default_rng(0), K=3, nb=5)
    state = make_state(net, initial_labels(net))
    before = state.labels.copy()
    for _, _, _, step in all_moves(net):
        new = step(state)
        assert np.array_equal(state.labels, before)
        if new.energy == state.energy:
            assert np.array_equal(new.labels, state.labels)


def test_single_variable_takes_unary_argmin():
    b = NetworkBuilder(4)
    b.add_level([[3.0, 1.0, 0.5, 2.0]])
    net = b.build()
    for alg in ALGORITHMS:
        r = solve(net, alg, init="uniform:0")
        assert r.labeling.base.tolist() == [2], alg


def test_swap_with_free_moves_auxiliaries_only():
    b = NetworkBuilder(2)
    b.add_level([[0.0, 5.0], [0.0, 5.0]])
    b.add_clique([0, 1], [0.0, 0.0], 3.0, [2.0, 2.0])
    net = b.build()
    state = make_state(net, [0, 0, 2])  # parent Free costs 3
    new = alphabeta_swap_step(net, state, 0, net.free)
    assert new.labels.tolist() == [0, 0, 0] and new.energy == 0.0
    with pytest.raises(ParameterError):
        alpha_expansion_step(net, state, net.free)


def test_range_swap_flags_auxiliary_edges():
    rng = np.random.default_rng(3)
    b = NetworkBuilder(2)
    b.add_level(rng.integers(0, 3, (3, 2)))
    b.add_clique([0, 1], [0, 0], 2, 2.0)
    b.add_clique([1, 2], [0, 0], 2, 2.0)
    b.add_edge(2, 0, 1, 1.0)
    net = b.build()
    s = range_swap_step(net, make_state(net, initial_labels(net)), 0, 1)
    assert "not guaranteed" in s.trace[-1].note
    s = range_expansion_step(net, make_state(net, initial_labels(net)), 0)
    assert s.trace[-1].note == ""


def test_icm_reaches_single_site_minimum():
    rng = np.random.default_rng(4)
    for _ in range(20):
        net = random_network(rng, K=3, nb=6, na=2)
        r = solve(net, "icm", seed=1, init="random")
        x = r.labeling.flat()
        for v in range(net.num_vars):
            for lab in net.allowed_labels(v):
                y = x.copy()
                y[v] = lab
                assert eval_joint(net, y) >= r.energy - 1e-9


def test_icm_step_never_increases_energy():
    rng = np.random.default_rng(5)
    net = random_network(rng, K=3, nb=8, na=3)
    s = random_state(rng, net)
    for _ in range(5):
        t = icm_step(net, s)
        assert t.energy <= s.energy
        s = t


def test_collapse_gives_higher_order_energy():
    rng = np.random.default_rng(6)
    for _ in range(20):
        net = random_network(rng, K=3, nb=5, na=3, levels=3)
        s = collapse_auxiliaries(net, random_state(rng, net))
        e, _ = eval_higher_order(net, s.labels[:net.num_base])
        assert s.energy == pytest.approx(e, abs=1e-9)


@pytest.mark.parametrize("alg", ALGORITHMS)
def test_solve_is_deterministic_and_converges(alg):
    net = random_network(np.random.default_rng(9), K=3, nb=7, na=3, levels=3)
    r1 = solve(net, alg, seed=4, init="random")
    r2 = solve(net, alg, seed=4, init="random")
    assert r1.labeling == r2.labeling and r1.energy == r2.energy
    assert format_trace(r1.trace, net, timing=False) == format_trace(r2.trace, net, timing=False)
    assert r1.converged and r1.higher_order_exact
    assert r1.higher_order_energy <= r1.energy
    assert r1.higher_order_energy >= brute_force_map(net)[1] - 1e-9


def test_max_iters_caps_sweeps():
    net = random_network(np.random.default_rng(2), K=3, nb=8, na=2)
    r = solve(net, "expansion", max_iters=0, init="uniform:1")
    assert r.sweeps == 0 and not r.converged and r.trace == ()
    r = solve(net, "expansion", max_iters=1, init="uniform:1")
    assert r.sweeps == 1 and len(r.trace) == net.num_labels


def test_initial_labeling_override():
    net = random_network(np.random.default_rng(2), K=2, nb=4, na=1)
    init = Labeling(([1, 1, 1, 1], [net.free]))
    r = solve(net, "range-swap", initial=init, max_iters=0)
    assert r.labeling.base.tolist() == [1, 1, 1, 1]


@pytest.mark.parametrize("kwargs", [
    {"algorithm": "annealing"},
    {"algorithm": "expansion", "init": "uniform:9"},
    {"algorithm": "expansion", "init": "zeros"},
])
def test_solve_rejects_bad_arguments(kwargs):
    net = random_network(np.random.default_rng(2), K=2, nb=3, na=1)
    with pytest.raises(ParameterError):
        solve(net, **kwargs)


def test_trace_format():
    net = random_network(np.random.default_rng(1), K=2, nb=4, na=2)
    r = solve(net, "swap")
    lines = format_trace(r.trace, net, timing=False).splitlines()
    assert lines[0] == TRACE_HEADER
    assert len(lines) == len(r.trace) + 1
    assert all(line.endswith(",0") for line in lines[1:])
    assert any(",F," in line for line in lines[1:])  # swaps against Free are recorded with F
    for rec in r.trace:
        assert rec.energy_after <= rec.energy_before
        assert rec.accepted == (rec.energy_after < rec.energy_before)
