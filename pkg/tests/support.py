"""Shared helpers for the test suite.

The reference energy and brute-force minimiser here are written with plain
loops over the level structure and share no code with the vectorised
evaluators in the package.
"""
from __future__ import annotations

import itertools

import numpy as np

from ahncut.energy import NetworkBuilder


def random_network(rng, K=3, nb=6, na=2, levels=2, edges=True, aux_edges=True, max_cost=5,
                   max_weight=3, integer=True):
    """Random AHN with link weights set directly (not through a clique object)."""
    draw = (lambda lo, hi, size=None: rng.integers(lo, hi + 1, size=size).astype(float)) if integer else \
        (lambda lo, hi, size=None: np.round(rng.uniform(lo, hi, size=size), 3))
    b = NetworkBuilder(K)
    b.add_level(draw(0, max_cost, (nb, K)))
    if edges:
        for _ in range(int(rng.integers(0, nb + 2))):
            i, j = rng.choice(nb, 2, replace=False)
            b.add_edge(1, int(i), int(j), float(draw(0, 3)))
    below = nb
    for h in range(2, levels + 1):
        n_here = na if h == 2 else max(1, na // 2)
        u = draw(0, max_cost, (n_here, K + 1))
        u[:, K] = u[:, :K].max(axis=1) + draw(0, 3, n_here)  # Free is the truncation cost
        b.add_level(u)
        for c in range(n_here):
            size = int(rng.integers(1, min(below, 4) + 1))
            for i in rng.choice(below, size, replace=False):
                b.add_link(h, c, int(i), float(draw(0, max_weight)))
        if aux_edges and n_here >= 2 and rng.random() < 0.5:
            i, j = rng.choice(n_here, 2, replace=False)
            b.add_edge(h, int(i), int(j), float(draw(0, 2)))
        below = n_here
    return b.build()


def naive_energy(net, levels_labels):
    """Joint energy by direct summation over the per-level tables."""
    K = net.num_labels
    F = K
    total = 0.0
    for h, lv in enumerate(net.levels):
        x = levels_labels[h]
        for v in range(lv.unary.shape[0]):
            total += lv.unary[v, x[v]]
        for (i, j), lam in zip(lv.edges, lv.edge_weights):
            a, b = x[i], x[j]
            if a == b:
                continue
            total += lam / 2 if (a == F) != (b == F) else lam
        for (child, parent), k in zip(lv.links, lv.link_weights):
            p = x[parent]
            c = levels_labels[h - 1][child]
            if p != F and p != c:
                total += k
    return total


def all_labelings(net):
    """Every legal labeling, as per-level lists."""
    K = net.num_labels
    sizes = [lv.unary.shape[0] for lv in net.levels]
    choices = [range(K)] * sizes[0] + [range(K + 1)] * sum(sizes[1:])
    for flat in itertools.product(*choices):
        out, pos = [], 0
        for s in sizes:
            out.append(list(flat[pos:pos + s]))
            pos += s
        yield out


def naive_minimum(net):
    return min(naive_energy(net, x) for x in all_labelings(net))


def naive_higher_order(net, base):
    """min over auxiliary labels with the base fixed, by enumeration."""
    K = net.num_labels
    sizes = [lv.unary.shape[0] for lv in net.levels[1:]]
    best = np.inf
    for flat in itertools.product(range(K + 1), repeat=sum(sizes)):
        out, pos = [list(base)], 0
        for s in sizes:
            out.append(list(flat[pos:pos + s]))
            pos += s
        best = min(best, naive_energy(net, out))
    return best


def random_submodular_qpb(rng, n, m=None, allow_inf=True, integer=True):
    """``(unary (n,2), pairs (m,2), costs (m,4))`` with every pair submodular."""
    m = int(rng.integers(0, 2 * n + 1)) if m is None else m
    val = (lambda size: rng.integers(-5, 6, size=size).astype(float)) if integer else \
        (lambda size: rng.uniform(-5, 5, size=size))
    unary = val((n, 2))
    pairs = np.array([rng.choice(n, 2, replace=False) for _ in range(m)], dtype=np.int64).reshape(-1, 2) \
        if n >= 2 else np.zeros((0, 2), dtype=np.int64)
    costs = np.zeros((len(pairs), 4))
    for e in range(len(pairs)):
        a, b, c = val(3)
        slack = abs(val(1)[0])
        costs[e] = [a, b, c, b + c - a - slack]  # E00 + E11 <= E01 + E10
        if allow_inf and rng.random() < 0.15:
            costs[e, 1 + int(rng.integers(0, 2))] = np.inf
    return unary, pairs, costs


def qpb_brute(unary, pairs, costs, constant=0.0):
    n = unary.shape[0]
    best_e, best_x = np.inf, None
    for x in itertools.product((0, 1), repeat=n):
        e = constant + sum(unary[i, x[i]] for i in range(n))
        for (u, v), c in zip(pairs, costs):
            e += c[2 * x[u] + x[v]]
        if e < best_e:
            best_e, best_x = e, x
    return best_e, best_x
