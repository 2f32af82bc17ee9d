"""Exhaustive reference solvers.

These deliberately share nothing with the graph-cut path except the joint
energy function, so they can serve as independent checks.
"""
from __future__ import annotations

import numpy as np

from .energy import HierarchicalNetwork, Labeling, joint_energies
from .errors import OracleInfeasible, ParameterError

BRUTE_FORCE_BUDGET = 10**7
_CHUNK = 1 << 16


def _enumerate_min(network, options):
    """Lexicographically first minimiser over the product of per-variable option lists."""
    radix = np.array([len(o) for o in options], dtype=np.int64)
    total = int(np.prod(radix, dtype=object))
    table = np.full((len(options), int(radix.max(initial=1))), -1, dtype=np.int64)
    for v, o in enumerate(options):
        table[v, : len(o)] = o
    # place value of each digit, variable 0 most significant
    place = np.ones(len(options), dtype=np.int64)
    for v in range(len(options) - 2, -1, -1):
        place[v] = place[v + 1] * radix[v + 1]
    best_e, best_x = np.inf, None
    cols = np.arange(len(options))
    for lo in range(0, total, _CHUNK):
        idx = np.arange(lo, min(total, lo + _CHUNK), dtype=np.int64)
        digits = (idx[:, None] // place[None, :]) % radix[None, :]
        X = table[cols[None, :], digits]
        e = joint_energies(network, X)
        i = int(np.argmin(e))
        if e[i] < best_e:
            best_e, best_x = float(e[i]), X[i].copy()
    return best_x, best_e


def brute_force_map(network: HierarchicalNetwork, budget: int = BRUTE_FORCE_BUDGET):
    """Global minimiser over all labelings of all levels and its energy."""
    K = network.num_labels
    size = K ** network.num_base * (K + 1) ** (network.num_vars - network.num_base)
    if size > budget:
        raise OracleInfeasible(f"joint label space has {size} assignments (> {budget})")
    options = [list(network.allowed_labels(v)) for v in range(network.num_vars)]
    x, e = _enumerate_min(network, options)
    return Labeling.from_flat(network, x), e


def move_space(network: HierarchicalNetwork, labels, move: str, alpha=None, beta=None):
    """Per-variable candidate labels of one move, built directly from its definition."""
    F = network.free
    out = []
    for v, cur in enumerate(np.asarray(labels).tolist()):
        allowed = set(network.allowed_labels(v))
        if move == "expansion":
            opts = {cur, alpha}
        elif move == "swap":
            opts = {alpha, beta} if cur in (alpha, beta) else {cur}
        elif move == "range-expansion":
            opts = {cur, F, alpha}
        elif move == "range-swap":
            opts = {alpha, F, beta} if cur in (alpha, F, beta) else {cur}
        else:
            raise ParameterError(f"unknown move {move!r}")
        opts &= allowed
        opts.add(cur)
        out.append(sorted(opts))
    return out


def move_space_minimum(network: HierarchicalNetwork, labels, move: str, alpha=None, beta=None,
                       budget: int = BRUTE_FORCE_BUDGET):
    """Exhaustive minimum of the joint energy over one move's space."""
    options = move_space(network, labels, move, alpha, beta)
    size = int(np.prod([len(o) for o in options], dtype=object))
    if size > budget:
        raise OracleInfeasible(f"move space has {size} assignments (> {budget})")
    return _enumerate_min(network, options)


def majority_violations(network: HierarchicalNetwork, budget: int = BRUTE_FORCE_BUDGET, atol: float = 1e-12):
    """Exhaustively test the majority form of hierarchical consistency.

    For every full labeling with auxiliary variable ``c`` at base label ``l``,
    if that labeling is no worse than the same labeling with ``c`` set to
    Free, the children of ``c`` at ``l`` must carry strictly more than half of
    its link weight.  Returns the ``(flat variable, label)`` pairs for which
    some labeling breaks this.  The static per-variable check bounds only the
    label unaries, so it does not imply this property when the Free unary is
    large; the exhaustive test is the one the swap argument actually needs.
    """
    K, F = network.num_labels, network.free
    n = network.num_vars
    radix = np.where(network.free_allowed, K + 1, K).astype(np.int64)
    total = int(np.prod(radix, dtype=object))
    if total > budget:
        raise OracleInfeasible(f"joint label space has {total} assignments (> {budget})")
    place = np.ones(n, dtype=np.int64)
    for v in range(n - 2, -1, -1):
        place[v] = place[v + 1] * radix[v + 1]
    idx = np.arange(total, dtype=np.int64)
    X = (idx[:, None] // place[None, :]) % radix[None, :]
    E = joint_energies(network, X)
    bad = []
    for c in range(network.num_base, n):
        m = network.link_parent == c
        children, w = network.link_child[m], network.link_w[m]
        for l in range(K):
            rows = np.nonzero(X[:, c] == l)[0]
            e_free = E[rows + (F - l) * place[c]]
            share = ((X[np.ix_(rows, children)] == l) * w).sum(axis=1)
            if np.any((E[rows] <= e_free + atol) & (share <= 0.5 * w.sum())):
                bad.append((c, l))
    return bad
