"""st-mincut and the reductions that feed it.

Three layers:

* :func:`max_flow` -- Dinic's algorithm on a :class:`FlowGraph` whose
  terminal arcs are stored per node.
* :func:`minimize_qpb` -- exact minimisation of a submodular quadratic
  pseudo-boolean function by the standard additive reduction.
* :func:`minimize_chain` / :func:`ishikawa_minimize` -- variables with up to
  three ordered states, each encoded by two booleans ``b1 = [s >= 1]`` and
  ``b2 = [s >= 2]`` with the state ``b1 = 0, b2 = 1`` prohibited.  Any pairwise
  table that is submodular on the chain order (nonpositive mixed second
  differences) decomposes exactly into submodular boolean terms.

Cut convention: a node on the source side takes value 0.  Only nodes reachable
from the source in the final residual graph are source side, so a variable
whose two values cost the same ends up at 1.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .errors import InfeasibleError, NonSubmodularError, ParameterError

#: Relative slack used when testing submodularity of floating-point terms.
SUBMODULAR_RTOL = 1e-9


class FlowGraph:
    """Directed capacitated graph with implicit source and sink."""

    def __init__(self, num_nodes: int):
        self.num_nodes = int(num_nodes)
        self.source_cap = np.zeros(self.num_nodes)
        self.sink_cap = np.zeros(self.num_nodes)
        self._tail: list = []
        self._head: list = []
        self._cap: list = []
        self._rcap: list = []

    def add_tedge(self, i: int, cap_source: float, cap_sink: float):
        if cap_source < 0 or cap_sink < 0:
            raise ParameterError("terminal capacities must be >= 0")
        self.source_cap[i] += cap_source
        self.sink_cap[i] += cap_sink

    def add_edge(self, i: int, j: int, cap: float, rev_cap: float = 0.0):
        if cap < 0 or rev_cap < 0:
            raise ParameterError("arc capacities must be >= 0")
        if not (0 <= i < self.num_nodes and 0 <= j < self.num_nodes):
            raise ParameterError(f"arc ({i}, {j}) references a missing node")
        self._tail.append(i)
        self._head.append(j)
        self._cap.append(float(cap))
        self._rcap.append(float(rev_cap))

    def add_edges(self, tails, heads, caps, rev_caps=None):
        """Vectorised :meth:`add_edge`."""
        tails = np.asarray(tails, dtype=np.int64)
        caps = np.asarray(caps, dtype=float)
        rev_caps = np.zeros_like(caps) if rev_caps is None else np.asarray(rev_caps, dtype=float)
        if np.any(caps < 0) or np.any(rev_caps < 0):
            raise ParameterError("arc capacities must be >= 0")
        self._tail.extend(tails.tolist())
        self._head.extend(np.asarray(heads, dtype=np.int64).tolist())
        self._cap.extend(caps.tolist())
        self._rcap.extend(rev_caps.tolist())

    @property
    def arcs(self):
        return list(zip(self._tail, self._head, self._cap, self._rcap))

    def dump(self) -> str:
        """Plain-text arc list for troubleshooting."""
        lines = [f"nodes {self.num_nodes}"]
        for i in range(self.num_nodes):
            if self.source_cap[i] or self.sink_cap[i]:
                lines.append(f"t {i} {self.source_cap[i]!r} {self.sink_cap[i]!r}")
        for t, h, c, r in self.arcs:
            lines.append(f"a {t} {h} {c!r} {r!r}")
        return "\n".join(lines) + "\n"


def max_flow(graph: FlowGraph):
    """Maximum flow value and min-cut side per node (0 = source side, 1 = sink side).

    The graph itself is not modified, so one graph can be solved repeatedly.
    """
    n = graph.num_nodes
    S, T = n, n + 1
    cs = graph.source_cap.copy()
    ct = graph.sink_cap.copy()
    direct = np.minimum(cs, ct)
    flow = float(direct.sum())
    cs -= direct
    ct -= direct

    src = np.flatnonzero(cs > 0)
    snk = np.flatnonzero(ct > 0)
    tail = np.concatenate([np.asarray(graph._tail, dtype=np.int64), np.full(src.size, S), snk])
    head = np.concatenate([np.asarray(graph._head, dtype=np.int64), src, np.full(snk.size, T)])
    fwd = np.concatenate([np.asarray(graph._cap, dtype=float), cs[src], ct[snk]])
    bwd = np.concatenate([np.asarray(graph._rcap, dtype=float), np.zeros(src.size + snk.size)])
    finite = np.concatenate([fwd, bwd])
    scale = float(np.abs(finite).sum()) if finite.size else 0.0
    eps = 1e-13 * max(1.0, scale)

    # Arc 2e runs tail->head, 2e+1 is its reverse; sort all arcs by origin (CSR).
    m = tail.size
    origin = np.empty(2 * m, dtype=np.int64)
    origin[0::2], origin[1::2] = tail, head
    dest = np.empty(2 * m, dtype=np.int64)
    dest[0::2], dest[1::2] = head, tail
    capa = np.empty(2 * m)
    capa[0::2], capa[1::2] = fwd, bwd
    order = np.argsort(origin, kind="stable")
    where = np.empty(2 * m, dtype=np.int64)
    where[order] = np.arange(2 * m)
    rev = where[order ^ 1].tolist()
    to = dest[order].tolist()
    cap = capa[order].tolist()
    start = np.searchsorted(origin[order], np.arange(n + 3)).tolist()

    N = n + 2
    while True:
        level = [-1] * N
        level[S] = 0
        q = deque([S])
        while q:
            u = q.popleft()
            lu = level[u] + 1
            for a in range(start[u], start[u + 1]):
                v = to[a]
                if level[v] < 0 and cap[a] > eps:
                    level[v] = lu
                    q.append(v)
        if level[T] < 0:
            break
        it = start[:]
        path = []  # arc ids from S
        u = S
        while True:
            if u == T:
                f = min(cap[a] for a in path)
                cut = len(path)
                for idx, a in enumerate(path):
                    cap[a] -= f
                    cap[rev[a]] += f
                    if cut == len(path) and cap[a] <= eps:
                        cut = idx
                flow += f
                del path[cut:]
                u = to[path[-1]] if path else S
                continue
            a, end, want = it[u], start[u + 1], level[u] + 1
            while a < end and not (cap[a] > eps and level[to[a]] == want):
                a += 1
            it[u] = a
            if a < end:
                path.append(a)
                u = to[a]
            else:
                level[u] = -1
                if not path:
                    break
                a = path.pop()
                u = to[rev[a]]
                it[u] += 1

    side = [1] * N
    side[S] = 0
    q = deque([S])
    while q:
        u = q.popleft()
        for a in range(start[u], start[u + 1]):
            v = to[a]
            if side[v] and cap[a] > eps:
                side[v] = 0
                q.append(v)
    return flow, np.array(side[:n], dtype=np.uint8)


# -- quadratic pseudo-boolean functions --------------------------------------------------------


@dataclass(frozen=True)
class QpbProblem:
    """``E(x) = constant + sum_i unary[i, x_i] + sum_e pair_costs[e, 2 x_u + x_v]``.

    ``pair_costs`` columns are ``(00, 01, 10, 11)``; ``+inf`` is allowed in
    columns 01 and 10 to prohibit a state.
    """

    num_vars: int
    unary: np.ndarray
    pairs: np.ndarray
    pair_costs: np.ndarray
    constant: float = 0.0

    def __post_init__(self):
        u = np.asarray(self.unary, dtype=float).reshape(self.num_vars, 2)
        p = np.asarray(self.pairs, dtype=np.int64).reshape(-1, 2)
        c = np.asarray(self.pair_costs, dtype=float).reshape(-1, 4)
        object.__setattr__(self, "unary", u)
        object.__setattr__(self, "pairs", p)
        object.__setattr__(self, "pair_costs", c)
        if p.shape[0] != c.shape[0]:
            raise ParameterError("pairs and pair_costs lengths differ")
        if p.size and (p.min() < 0 or p.max() >= self.num_vars):
            raise ParameterError("pair references a missing variable")
        if not np.all(np.isfinite(u)):
            raise ParameterError("unary costs must be finite")
        if not (np.all(np.isfinite(c[:, [0, 3]])) and not np.any(np.isneginf(c))
                and not np.any(np.isnan(c))):
            raise ParameterError("only the 01 and 10 pair entries may be +inf")

    def energy(self, x) -> float:
        x = np.asarray(x, dtype=np.int64)
        e = self.constant + self.unary[np.arange(self.num_vars), x].sum()
        if self.pairs.size:
            e += self.pair_costs[np.arange(len(self.pairs)), 2 * x[self.pairs[:, 0]] + x[self.pairs[:, 1]]].sum()
        return float(e)


def check_submodular(problem: QpbProblem):
    c = problem.pair_costs
    if not c.size:
        return
    with np.errstate(invalid="ignore"):
        lhs = c[:, 0] + c[:, 3]
        rhs = c[:, 1] + c[:, 2]
        tol = SUBMODULAR_RTOL * (1.0 + np.abs(np.where(np.isfinite(c), c, 0)).sum(axis=1))
        bad = np.flatnonzero(np.isfinite(rhs) & (lhs > rhs + tol))
    if bad.size:
        e = int(bad[0])
        i, j = problem.pairs[e]
        raise NonSubmodularError(
            f"pair term {e} on ({i}, {j}) is not submodular: "
            f"E00 + E11 = {lhs[e]!r} > E01 + E10 = {rhs[e]!r}")


def build_graph(problem: QpbProblem):
    """Return ``(graph, constant)`` with ``cut(x) + constant == E(x)`` for every finite ``x``."""
    check_submodular(problem)
    n = problem.num_vars
    c = problem.pair_costs
    u, v = problem.pairs[:, 0], problem.pairs[:, 1]
    A, B, C, D = c[:, 0], c[:, 1], c[:, 2], c[:, 3]
    inf_b, inf_c = np.isinf(B), np.isinf(C)
    finite_mass = (np.abs(problem.unary).sum() + abs(problem.constant)
                   + np.abs(np.where(np.isfinite(c), c, 0)).sum())
    big = 2.0 * finite_mass + 1.0

    coef = problem.unary[:, 1] - problem.unary[:, 0]
    const = problem.constant + problem.unary[:, 0].sum() + A.sum()
    tails, heads, caps = [], [], []

    # 01 may be infinite (or nothing is): A + (C-A) x_u + (D-C) x_v + w (1-x_u) x_v
    m1 = ~inf_c
    with np.errstate(invalid="ignore"):
        w1 = np.where(inf_b, big, B + C - A - D)
    np.add.at(coef, u[m1], (C - A)[m1])
    np.add.at(coef, v[m1], (D - C)[m1])
    tails.append(u[m1]); heads.append(v[m1]); caps.append(np.maximum(w1[m1], 0.0))
    # 10 infinite, 01 finite: A + (B-A) x_v + (D-B) x_u + w x_u (1-x_v)
    m2 = inf_c & ~inf_b
    np.add.at(coef, v[m2], (B - A)[m2])
    np.add.at(coef, u[m2], (D - B)[m2])
    tails.append(v[m2]); heads.append(u[m2]); caps.append(np.full(m2.sum(), big))
    # both infinite: x_u == x_v forced; A + (D-A) x_u plus arcs both ways
    m3 = inf_b & inf_c
    np.add.at(coef, u[m3], (D - A)[m3])
    tails += [u[m3], v[m3]]; heads += [v[m3], u[m3]]; caps += [np.full(m3.sum(), big)] * 2

    g = FlowGraph(n)
    g.source_cap = np.maximum(coef, 0.0)
    g.sink_cap = np.maximum(-coef, 0.0)
    const += np.minimum(coef, 0.0).sum()
    t, h, w = np.concatenate(tails), np.concatenate(heads), np.concatenate(caps)
    keep = w > 0
    g.add_edges(t[keep], h[keep], w[keep])
    return g, float(const)


def minimize_qpb(problem: QpbProblem):
    """Global minimiser of a submodular QPB and its energy.

    Raises :class:`NonSubmodularError` for a non-submodular pair and
    :class:`InfeasibleError` when every assignment hits a prohibited state.
    """
    g, _ = build_graph(problem)
    _, side = max_flow(g)
    x = side.astype(np.uint8)
    e = problem.energy(x)
    if not np.isfinite(e):
        raise InfeasibleError("no assignment avoids every prohibited state")
    return x, e


# -- three-state chains -------------------------------------------------------------------------


def _chain_terms(unary, pairs, tables, live):
    """Decompose a chain problem into a :class:`QpbProblem` plus boolean ids."""
    n = unary.shape[0]
    live = np.asarray(live, dtype=bool).reshape(n, 2)
    bid = -np.ones((n, 2), dtype=np.int64)
    bid[live] = np.arange(int(live.sum()))
    nb = int(live.sum())

    coef = np.zeros((n, 2))
    const = float(unary[:, 0].sum())
    coef[:, 0] = unary[:, 1] - unary[:, 0]
    coef[:, 1] = unary[:, 2] - unary[:, 1]

    pu, pv = pairs[:, 0], pairs[:, 1]
    T = tables
    const += float(T[:, 0, 0].sum())
    np.add.at(coef[:, 0], pu, T[:, 1, 0] - T[:, 0, 0])
    np.add.at(coef[:, 1], pu, T[:, 2, 0] - T[:, 1, 0])
    np.add.at(coef[:, 0], pv, T[:, 0, 1] - T[:, 0, 0])
    np.add.at(coef[:, 1], pv, T[:, 0, 2] - T[:, 0, 1])
    W = T[:, 1:, 1:] - T[:, :-1, 1:] - T[:, 1:, :-1] + T[:, :-1, :-1]  # (m, 2, 2)

    scale = 1.0 + np.abs(T).reshape(len(T), -1).max(axis=1, initial=0.0) if len(T) else np.zeros(0)
    tol = SUBMODULAR_RTOL * scale
    if np.any(W > tol[:, None, None]):
        e = int(np.flatnonzero((W > tol[:, None, None]).any(axis=(1, 2)))[0])
        raise NonSubmodularError(
            f"pair term {e} on ({pu[e]}, {pv[e]}) is not submodular on the chain order: "
            f"mixed differences {W[e].tolist()}")
    dead_coef = np.abs(coef[~live])
    if dead_coef.size and dead_coef.max() > SUBMODULAR_RTOL * (1.0 + np.abs(unary).max()
                                                                + (np.abs(T).max() if T.size else 0.0)):
        raise ParameterError("a transition marked dead carries cost; its states must be identical")

    qu, qc = np.zeros((nb, 2)), []
    qu[:, 1] = coef[live]
    pp = []
    for a in (0, 1):
        for b in (0, 1):
            w = W[:, a, b]
            m = (w < -tol) & (bid[pu, a] >= 0) & (bid[pv, b] >= 0)
            if np.any(m):
                pp.append(np.stack([bid[pu[m], a], bid[pv[m], b]], axis=1))
                z = np.zeros(m.sum())
                qc.append(np.stack([z, z, z, w[m]], axis=1))
    both = np.flatnonzero(live.all(axis=1))
    if both.size:
        pp.append(np.stack([bid[both, 0], bid[both, 1]], axis=1))
        z = np.zeros(both.size)
        qc.append(np.stack([z, np.full(both.size, np.inf), z, z], axis=1))
    pairs_b = np.concatenate(pp) if pp else np.zeros((0, 2), dtype=np.int64)
    costs_b = np.concatenate(qc) if qc else np.zeros((0, 4))
    return QpbProblem(nb, qu, pairs_b, costs_b, const), bid


def chain_energy(unary, pairs, tables, states) -> float:
    s = np.asarray(states, dtype=np.int64)
    e = unary[np.arange(len(s)), s].sum()
    if len(pairs):
        e += tables[np.arange(len(pairs)), s[pairs[:, 0]], s[pairs[:, 1]]].sum()
    return float(e)


def minimize_chain(unary, pairs, tables, live=None):
    """Exact minimiser over per-variable 3-state chains.

    ``unary`` is ``(n, 3)`` (``+inf`` marks a forbidden state), ``pairs`` is
    ``(m, 2)``, ``tables`` is ``(m, 3, 3)`` indexed ``[state_u, state_v]``.
    ``live[v, a]`` says whether transition ``a -> a+1`` changes anything; a dead
    transition requires identical unary and table entries for both states and
    gets no boolean.  Returns ``(states, energy)``.
    """
    unary = np.array(unary, dtype=float).reshape(-1, 3)
    n = unary.shape[0]
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    tables = np.asarray(tables, dtype=float).reshape(-1, 3, 3)
    if not np.all(np.isfinite(tables)):
        raise ParameterError("pairwise chain tables must be finite")
    if live is None:
        live = np.ones((n, 2), dtype=bool)
    forbidden = np.isposinf(unary)
    if np.any(forbidden.all(axis=1)):
        raise InfeasibleError("a variable has every state forbidden")
    if np.any(forbidden):
        finite_mass = np.abs(unary[~forbidden]).sum() + np.abs(tables).sum()
        unary[forbidden] = 2.0 * finite_mass + 1.0
    qpb, bid = _chain_terms(unary, pairs, tables, live)
    x, _ = minimize_qpb(qpb)
    b = np.zeros((n, 2), dtype=np.int64)
    b[bid >= 0] = x[bid[bid >= 0]]
    states = np.where(b[:, 1] == 1, 2, np.where(b[:, 0] == 1, 1, 0))
    if np.any(forbidden[np.arange(n), states]):
        raise InfeasibleError("every assignment uses a forbidden state")
    return states, chain_energy(unary, pairs, tables, states)


def ishikawa_minimize(unary, pairs, diff_costs):
    """Exact minimiser for 3-level variables with convex pairwise costs.

    ``diff_costs[e]`` holds five values ``h(d)`` for ``d = s_u - s_v`` in
    ``-2..2`` and must be convex in ``d``.  Levels are 0, 1, 2 (e.g. alpha,
    Free, beta).  Returns ``(levels, energy)``.
    """
    h = np.asarray(diff_costs, dtype=float).reshape(-1, 5)
    second = h[:, :-2] + h[:, 2:] - 2 * h[:, 1:-1]
    bad = np.flatnonzero((second < -SUBMODULAR_RTOL * (1.0 + np.abs(h).max(axis=1, initial=0.0))[:, None]).any(axis=1))
    if bad.size:
        raise NonSubmodularError(f"pair term {int(bad[0])} is not convex in the level difference")
    s = np.arange(3)
    tables = h[:, (s[:, None] - s[None, :]) + 2]
    return minimize_chain(unary, pairs, tables)
