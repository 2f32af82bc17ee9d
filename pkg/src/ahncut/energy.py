"""Associative hierarchical network data model and energy evaluation.

Labels are plain integers: ``0..K-1`` are base labels and ``K`` is the Free
label.  Using ``K`` for Free means ``argmin`` over a cost row of length
``K + 1`` breaks ties toward the lowest base label and only then Free.

Variables at every level are also addressed by a *flat* index; level ``h``
(0-based) occupies ``offsets[h]:offsets[h + 1]``.  All solvers work on flat
integer arrays and convert to :class:`Labeling` at the API boundary.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import InvalidLabeling, OracleInfeasible, ParameterError, StructureError

#: Maximum number of joint assignments enumerated for one coupled auxiliary component.
ENUMERATION_BUDGET = 10**6

#: Absolute tolerance used by the validators.
ATOL = 1e-9


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Level:
    """One level of the hierarchy.

    ``unary`` always has ``K + 1`` columns.  On the base level the last column
    is a placeholder: Free is forbidden there and never read.  ``links`` is a
    ``(p, 2)`` array of ``(child, parent)`` pairs into the level below and this
    level; it is empty on the base level.
    """

    unary: np.ndarray
    edges: np.ndarray
    edge_weights: np.ndarray
    links: np.ndarray
    link_weights: np.ndarray

    @property
    def num_vars(self) -> int:
        return self.unary.shape[0]


class HierarchicalNetwork:
    """Immutable multi-level energy: unaries, half-Free Potts edges and Robust P^n links."""

    def __init__(self, num_labels: int, levels: Sequence[Level]):
        if num_labels < 1:
            raise ParameterError("num_labels must be positive")
        if not levels:
            raise StructureError("a network needs at least the base level")
        self.num_labels = int(num_labels)
        self.levels = tuple(levels)
        self._validate()
        self._flatten()

    # -- construction -------------------------------------------------------------

    def _validate(self):
        K = self.num_labels
        for h, lv in enumerate(self.levels):
            n = lv.num_vars
            if lv.unary.ndim != 2 or lv.unary.shape[1] != K + 1:
                raise StructureError(f"level {h + 1}: unary must have shape (n, {K + 1})")
            if not np.all(np.isfinite(lv.unary if h else lv.unary[:, :K])):
                raise ParameterError(f"level {h + 1}: unary costs must be finite")
            if lv.edges.size and (lv.edges.min() < 0 or lv.edges.max() >= n):
                raise StructureError(f"level {h + 1}: edge index out of range")
            if lv.edges.size and np.any(lv.edges[:, 0] == lv.edges[:, 1]):
                raise StructureError(f"level {h + 1}: self-loop edge")
            if np.any(lv.edge_weights < 0) or not np.all(np.isfinite(lv.edge_weights)):
                raise ParameterError(f"level {h + 1}: edge weights must be finite and >= 0")
            if h == 0:
                if lv.links.size:
                    raise StructureError("the base level cannot have parent links")
                continue
            below = self.levels[h - 1].num_vars
            if lv.links.size and (
                lv.links[:, 0].min() < 0 or lv.links[:, 0].max() >= below
                or lv.links[:, 1].min() < 0 or lv.links[:, 1].max() >= n
            ):
                raise StructureError(f"level {h + 1}: link index out of range")
            if np.any(lv.link_weights < 0) or not np.all(np.isfinite(lv.link_weights)):
                raise ParameterError(f"level {h + 1}: link weights must be finite and >= 0")
            if np.any(lv.unary[:, :K] > lv.unary[:, K:] + ATOL):
                raise ParameterError(f"level {h + 1}: per-label cost exceeds the Free (truncation) cost")

    def _flatten(self):
        sizes = [lv.num_vars for lv in self.levels]
        self.offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
        self.num_vars = int(self.offsets[-1])
        self.unary = _frozen(np.vstack([lv.unary for lv in self.levels]), float)
        allowed = np.ones(self.num_vars, dtype=bool)
        allowed[: sizes[0]] = False
        self.free_allowed = _frozen(allowed, bool)
        self.level_of = _frozen(np.repeat(np.arange(len(sizes)), sizes), np.int64)

        eu, ev, ew, lc, lp, lw = [], [], [], [], [], []
        for h, lv in enumerate(self.levels):
            off = self.offsets[h]
            eu.append(lv.edges[:, 0] + off)
            ev.append(lv.edges[:, 1] + off)
            ew.append(lv.edge_weights)
            if h:
                lc.append(lv.links[:, 0] + self.offsets[h - 1])
                lp.append(lv.links[:, 1] + off)
                lw.append(lv.link_weights)
        cat = lambda parts, dt: _frozen(np.concatenate(parts) if parts else np.zeros(0), dt)
        self.edge_u, self.edge_v, self.edge_w = cat(eu, np.int64), cat(ev, np.int64), cat(ew, float)
        self.link_child, self.link_parent, self.link_w = cat(lc, np.int64), cat(lp, np.int64), cat(lw, float)

    # -- conveniences ---------------------------------------------------------------

    @property
    def free(self) -> int:
        """Integer code of the Free label."""
        return self.num_labels

    @property
    def num_levels(self) -> int:
        return len(self.levels)

    @property
    def level_sizes(self) -> tuple[int, ...]:
        return tuple(lv.num_vars for lv in self.levels)

    @property
    def num_base(self) -> int:
        return self.levels[0].num_vars

    def allowed_labels(self, v: int) -> range:
        return range(self.num_labels + 1 if self.free_allowed[v] else self.num_labels)

    def __repr__(self):
        return f"HierarchicalNetwork(K={self.num_labels}, levels={self.level_sizes})"

    def __eq__(self, other):
        if not isinstance(other, HierarchicalNetwork):
            return NotImplemented
        if self.num_labels != other.num_labels or self.level_sizes != other.level_sizes:
            return False
        K = self.num_labels
        for h, (a, b) in enumerate(zip(self.levels, other.levels)):
            ua, ub = (a.unary, b.unary) if h else (a.unary[:, :K], b.unary[:, :K])
            if not (np.array_equal(ua, ub) and np.array_equal(a.edges, b.edges)
                    and np.array_equal(a.edge_weights, b.edge_weights)
                    and np.array_equal(a.links, b.links)
                    and np.array_equal(a.link_weights, b.link_weights)):
                return False
        return True

    __hash__ = None


class NetworkBuilder:
    """Incremental construction of a :class:`HierarchicalNetwork`.

    Levels are 1-based in this API, matching the text file format.

    >>> b = NetworkBuilder(2)
    >>> b.add_level([[1.0, 3.0]])
    1
    >>> b.build()
    HierarchicalNetwork(K=2, levels=(1,))
    """

    def __init__(self, num_labels: int):
        if num_labels < 1:
            raise ParameterError("num_labels must be positive")
        self.num_labels = num_labels
        self._unary: list[np.ndarray] = []
        self._edges: list[list] = []
        self._links: list[list] = []

    def add_level(self, unary) -> int:
        K = self.num_labels
        u = np.array(unary, dtype=float)
        if u.ndim != 2:
            raise StructureError("unary must be a 2-d array")
        if not self._unary:
            if u.shape[1] == K:
                u = np.hstack([u, np.zeros((u.shape[0], 1))])
            elif u.shape[1] != K + 1:
                raise StructureError(f"base unary needs {K} columns")
            u[:, K] = 0.0
        elif u.shape[1] != K + 1:
            raise StructureError(f"auxiliary unary needs {K + 1} columns")
        self._unary.append(u)
        self._edges.append([])
        self._links.append([])
        return len(self._unary)

    def add_clique(self, children, gammas, gamma_max, weights=1.0, level: int = 2) -> int:
        """Append a Robust P^n clique over ``children`` (indices on ``level - 1``)
        as a new auxiliary variable on ``level``; creates that level if needed.

        Returns the index of the new auxiliary variable.
        """
        weights = np.broadcast_to(np.asarray(weights, float), (len(children),))
        aux_unary, links = clique_to_pairwise(RobustPnClique(weights, gammas, gamma_max))
        if level == len(self._unary) + 1:
            self.add_level(np.zeros((0, self.num_labels + 1)))
        elif not 2 <= level <= len(self._unary):
            raise StructureError(f"cannot add a clique on level {level}")
        c = self._unary[level - 1].shape[0]
        self._unary[level - 1] = np.vstack([self._unary[level - 1], aux_unary[None, :]])
        for pos, k in links:
            self.add_link(level, c, int(children[pos]), k)
        return c

    def add_edge(self, level: int, i: int, j: int, lam: float):
        if lam < 0:
            raise ParameterError(f"edge weight must be >= 0, got {lam}")
        self._edges[level - 1].append((i, j, float(lam)))

    def add_link(self, level: int, parent: int, child: int, k: float):
        if level < 2:
            raise StructureError("links attach a parent at level >= 2")
        if k < 0:
            raise ParameterError(f"link weight must be >= 0, got {k}")
        self._links[level - 1].append((child, parent, float(k)))

    def build(self) -> HierarchicalNetwork:
        levels = []
        for u, e, l in zip(self._unary, self._edges, self._links):
            ea = np.array([(i, j) for i, j, _ in e], dtype=np.int64).reshape(-1, 2)
            ew = np.array([w for *_, w in e], dtype=float)
            la = np.array([(i, c) for i, c, _ in l], dtype=np.int64).reshape(-1, 2)
            lw = np.array([w for *_, w in l], dtype=float)
            levels.append(make_level(u, ea, ew, la, lw))
        return HierarchicalNetwork(self.num_labels, levels)


def make_level(unary, edges=(), edge_weights=(), links=(), link_weights=()) -> Level:
    return Level(
        unary=_frozen(unary, float),
        edges=_frozen(np.asarray(edges, dtype=np.int64).reshape(-1, 2), np.int64),
        edge_weights=_frozen(np.asarray(edge_weights, dtype=float).reshape(-1), float),
        links=_frozen(np.asarray(links, dtype=np.int64).reshape(-1, 2), np.int64),
        link_weights=_frozen(np.asarray(link_weights, dtype=float).reshape(-1), float),
    )


# -- labelings ----------------------------------------------------------------------


@dataclass(frozen=True)
class Labeling:
    """Label vectors, one per level (base first)."""

    levels: tuple

    def __post_init__(self):
        object.__setattr__(self, "levels", tuple(_frozen(x, np.int64) for x in self.levels))

    @classmethod
    def from_flat(cls, network: HierarchicalNetwork, flat) -> "Labeling":
        flat = np.asarray(flat)
        o = network.offsets
        return cls(tuple(flat[o[h]:o[h + 1]] for h in range(network.num_levels)))

    @property
    def base(self) -> np.ndarray:
        return self.levels[0]

    def flat(self) -> np.ndarray:
        return np.concatenate(self.levels).astype(np.int64)

    def __eq__(self, other):
        return isinstance(other, Labeling) and len(self.levels) == len(other.levels) and all(
            np.array_equal(a, b) for a, b in zip(self.levels, other.levels))

    __hash__ = None


def check_labeling(network: HierarchicalNetwork, labeling) -> np.ndarray:
    """Return the flat label array, raising on size mismatch or forbidden labels."""
    if isinstance(labeling, Labeling):
        if tuple(len(x) for x in labeling.levels) != network.level_sizes:
            raise StructureError(
                f"labeling sizes {tuple(len(x) for x in labeling.levels)} do not match "
                f"network levels {network.level_sizes}")
        flat = labeling.flat()
    else:
        flat = np.asarray(labeling, dtype=np.int64)
        if flat.shape != (network.num_vars,):
            raise StructureError(f"expected {network.num_vars} labels, got shape {flat.shape}")
    if flat.size and (flat.min() < 0 or flat.max() > network.free):
        raise InvalidLabeling("label out of range")
    bad = (flat == network.free) & ~network.free_allowed
    if np.any(bad):
        raise InvalidLabeling(f"Free label on base variable(s) {np.flatnonzero(bad).tolist()}")
    return flat


# -- pairwise cost functions -------------------------------------------------------


def edge_cost(a, b, lam, free):
    """Half-Free Potts intra-layer cost: 0 if equal, lam/2 if exactly one side is Free, lam otherwise."""
    a, b = np.asarray(a), np.asarray(b)
    one_free = (a == free) ^ (b == free)
    return np.where(a == b, 0.0, np.where(one_free, 0.5, 1.0)) * lam


def link_cost(child, parent, k, free):
    """Inter-layer cost: 0 if the parent is Free or agrees with the child, k otherwise."""
    child, parent = np.asarray(child), np.asarray(parent)
    return np.where((parent == free) | (parent == child), 0.0, 1.0) * k


def joint_energies(network: HierarchicalNetwork, X) -> np.ndarray:
    """Joint energy of every row of ``X`` (shape ``(M, num_vars)``), no validation."""
    X = np.asarray(X)
    F = network.free
    e = network.unary[np.arange(network.num_vars), X].sum(axis=1)
    if network.edge_w.size:
        e = e + edge_cost(X[:, network.edge_u], X[:, network.edge_v], network.edge_w, F).sum(axis=1)
    if network.link_w.size:
        e = e + link_cost(X[:, network.link_child], X[:, network.link_parent], network.link_w, F).sum(axis=1)
    return e


def eval_joint(network: HierarchicalNetwork, labeling) -> float:
    """Energy of a full labeling (all levels given explicitly)."""
    flat = check_labeling(network, labeling)
    return float(joint_energies(network, flat[None, :])[0])


# -- Robust P^n cliques ---------------------------------------------------------------


@dataclass(frozen=True)
class RobustPnClique:
    weights: np.ndarray
    gammas: np.ndarray
    gamma_max: float

    def __post_init__(self):
        w = _frozen(np.asarray(self.weights, float).reshape(-1), float)
        g = _frozen(np.asarray(self.gammas, float).reshape(-1), float)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "gammas", g)
        object.__setattr__(self, "gamma_max", float(self.gamma_max))
        if np.any(w < 0):
            raise ParameterError("clique weights must be >= 0")
        if np.any(g > self.gamma_max):
            raise ParameterError("gamma_l must not exceed gamma_max")

    @property
    def num_labels(self) -> int:
        return self.gammas.size


def robust_pn_value(clique: RobustPnClique, child_labels) -> float:
    x = np.asarray(child_labels)
    if x.shape != clique.weights.shape:
        raise StructureError("child label count does not match clique size")
    disagree = np.array([clique.weights[x != l].sum() for l in range(clique.num_labels)])
    return float(min(clique.gamma_max, (clique.gammas + disagree).min()))


def clique_to_pairwise(clique: RobustPnClique):
    """Auxiliary unary (``K + 1`` entries, Free last) and ``(member, weight)`` links."""
    unary = np.append(clique.gammas, clique.gamma_max)
    return unary, [(i, float(k)) for i, k in enumerate(clique.weights)]


# -- link reparameterisation --------------------------------------------------------------


@dataclass(frozen=True)
class ReparamTriple:
    """Tables over the extended label set (index ``K`` is Free)."""

    child_delta: np.ndarray
    parent_delta: np.ndarray
    phi: np.ndarray


def reparameterize_link(k: float, num_labels: int) -> ReparamTriple:
    if k < 0:
        raise ParameterError(f"link weight must be >= 0, got {k}")
    F = num_labels
    labels = np.arange(F + 1)
    phi = edge_cost(labels[:, None], labels[None, :], k, F)
    child = np.where(labels == F, k / 2, 0.0)
    return ReparamTriple(child_delta=child, parent_delta=-child, phi=phi)


def reparameterized_unary(network: HierarchicalNetwork) -> np.ndarray:
    """Unaries after folding every link's reparameterisation deltas in.

    With these unaries, every link becomes a half-Free Potts metric of weight ``k``
    and the total energy of every labeling is unchanged.  Base-level Free
    entries stay meaningless (forbidden).
    """
    u = np.array(network.unary, dtype=float)
    F = network.free
    half = network.link_w / 2
    np.add.at(u[:, F], network.link_parent, -half)
    np.add.at(u[:, F], network.link_child, half)
    return u


# -- validators ---------------------------------------------------------------------------


def check_metric(phi, atol: float = ATOL) -> bool:
    """True iff ``phi`` is nonnegative, symmetric, zero on the diagonal and
    satisfies the triangle inequality ``phi[x, z] <= phi[x, y] + phi[y, z]``.

    Zero off-diagonal entries are accepted so that a zero-weight edge still
    counts as metric.
    """
    p = np.asarray(phi, dtype=float)
    if p.ndim != 2 or p.shape[0] != p.shape[1]:
        return False
    if np.any(np.abs(np.diag(p)) > atol) or np.any(p < -atol):
        return False
    if not np.allclose(p, p.T, atol=atol, rtol=0):
        return False
    return bool(np.all(p[:, None, :] <= p[:, :, None] + p[None, :, :] + atol))


@dataclass(frozen=True)
class ConsistencyRow:
    level: int  # 1-based
    var: int
    lhs: float
    rhs: float
    worst_label: int

    @property
    def ok(self) -> bool:
        return self.lhs < self.rhs - ATOL


@dataclass(frozen=True)
class ConsistencyReport:
    rows: tuple = field(default_factory=tuple)

    @property
    def ok(self) -> bool:
        return all(r.ok for r in self.rows)

    @property
    def violations(self) -> list:
        return [r for r in self.rows if not r.ok]


def check_hierarchical_consistency(network: HierarchicalNetwork) -> ConsistencyReport:
    """Check, for every auxiliary variable and base label ``l``,

        unary(l) + sum of incident intra-layer edge maxima < 0.5 * sum of child weights.

    Equality counts as a violation.  The report lists one row per variable with
    the worst label.
    """
    K = network.num_labels
    n = network.num_vars
    edge_max = np.zeros(n)
    np.add.at(edge_max, network.edge_u, network.edge_w)
    np.add.at(edge_max, network.edge_v, network.edge_w)
    child_w = np.zeros(n)
    np.add.at(child_w, network.link_parent, network.link_w)
    rows = []
    for v in range(network.num_base, n):
        costs = network.unary[v, :K]
        worst = int(np.argmax(costs))
        h = int(network.level_of[v])
        rows.append(ConsistencyRow(h + 1, v - int(network.offsets[h]),
                                   float(costs[worst] + edge_max[v]), float(0.5 * child_w[v]), worst))
    return ConsistencyReport(tuple(rows))


def check_eq24_form(network: HierarchicalNetwork) -> bool:
    """Every intra-layer edge is the Potts-with-Free pattern.

    The data model stores a single nonnegative weight per edge, so this holds
    by construction; the check re-derives each edge table and verifies it.
    """
    F = network.free
    labels = np.arange(F + 1)
    for lam in np.unique(network.edge_w):
        table = edge_cost(labels[:, None], labels[None, :], lam, F)
        if lam < 0 or not check_metric(table):
            return False
    return True


# -- exact minimisation over auxiliaries -----------------------------------------------------


class _UnionFind:
    def __init__(self, n):
        self.parent = list(range(n))

    def find(self, a):
        while self.parent[a] != a:
            self.parent[a] = self.parent[self.parent[a]]
            a = self.parent[a]
        return a

    def union(self, a, b):
        a, b = self.find(a), self.find(b)
        if a != b:
            self.parent[max(a, b)] = min(a, b)


def _aux_factors(network, flat, movable):
    """Unary tables for the movable variables and merged pairwise tables between them,
    conditioned on the labels of every other variable."""
    F = network.free
    L = F + 1
    labels = np.arange(L)
    idx = np.flatnonzero(movable)
    pos = -np.ones(network.num_vars, dtype=np.int64)
    pos[idx] = np.arange(idx.size)
    U = np.array(network.unary[idx], dtype=float)
    U[~network.free_allowed[idx], F] = np.inf
    pairs: dict = {}

    def add_pair(a, b, table):
        if a > b:
            a, b, table = b, a, table.T
        key = (a, b)
        pairs[key] = pairs[key] + table if key in pairs else table

    def add(u, v, w, fn):
        for a, b, wt in zip(u.tolist(), v.tolist(), w.tolist()):
            pa, pb = pos[a], pos[b]
            if pa < 0 and pb < 0:
                continue
            if pa >= 0 and pb >= 0:
                add_pair(pa, pb, fn(labels[:, None], labels[None, :], wt, F))
            elif pa >= 0:
                U[pa] += fn(labels, flat[b], wt, F)
            else:
                U[pb] += fn(flat[a], labels, wt, F)

    add(network.edge_u, network.edge_v, network.edge_w, edge_cost)
    add(network.link_child, network.link_parent, network.link_w, link_cost)
    return idx, U, pairs


def _minimize_tree(nodes, U, adj, pairs):
    root = nodes[0]
    order, parent = [root], {root: None}
    for a in order:
        for b in adj[a]:
            if b not in parent:
                parent[b] = a
                order.append(b)
    belief = {a: U[a].copy() for a in nodes}
    choice = {}
    for a in reversed(order[1:]):
        p = parent[a]
        t = pairs[(a, p)] if (a, p) in pairs else pairs[(p, a)].T  # rows: a, cols: p
        m = belief[a][:, None] + t
        choice[a] = np.argmin(m, axis=0)
        belief[p] = belief[p] + m.min(axis=0)
    x = {root: int(np.argmin(belief[root]))}
    for a in order[1:]:
        x[a] = int(choice[a][x[parent[a]]])
    return x


def _minimize_enum(nodes, U, pairs, budget):
    L = U.shape[1]
    n = len(nodes)
    if L ** n > budget:
        raise OracleInfeasible(
            f"coupled auxiliary component of {n} variables needs {L}^{n} assignments (> {budget})")
    local = {a: i for i, a in enumerate(nodes)}
    grid = np.array(list(itertools.product(range(L), repeat=n)), dtype=np.int64).reshape(-1, n)
    e = np.zeros(grid.shape[0])
    for a in nodes:
        e += U[a][grid[:, local[a]]]
    for (a, b), t in pairs.items():
        if a in local and b in local:
            e += t[grid[:, local[a]], grid[:, local[b]]]
    best = grid[int(np.argmin(e))]
    return {a: int(best[local[a]]) for a in nodes}


def minimize_given(network: HierarchicalNetwork, flat, movable, budget: int = ENUMERATION_BUDGET) -> np.ndarray:
    """Exact joint minimiser over the variables in ``movable`` with all others fixed.

    Coupled components that form trees are solved by min-sum dynamic
    programming; cyclic components are enumerated if their joint space fits in
    ``budget``; otherwise :class:`OracleInfeasible` is raised.
    """
    flat = np.array(flat, dtype=np.int64)
    idx, U, pairs = _aux_factors(network, flat, np.asarray(movable, bool))
    m = idx.size
    uf = _UnionFind(m)
    adj = [[] for _ in range(m)]
    for a, b in pairs:
        uf.union(a, b)
        adj[a].append(b)
        adj[b].append(a)
    comps: dict = {}
    for a in range(m):
        comps.setdefault(uf.find(a), []).append(a)
    sol = {}
    for nodes in comps.values():
        if len(nodes) == 1:
            sol[nodes[0]] = int(np.argmin(U[nodes[0]]))
            continue
        n_edges = sum(len(adj[a]) for a in nodes) // 2
        if n_edges == len(nodes) - 1:
            sol.update(_minimize_tree(nodes, U, adj, pairs))
        else:
            sol.update(_minimize_enum(nodes, U, pairs, budget))
    for a, lab in sol.items():
        flat[idx[a]] = lab
    return flat


def eval_higher_order(network: HierarchicalNetwork, base_labels, budget: int = ENUMERATION_BUDGET):
    """Higher-order energy of a base labeling: the exact minimum of the joint
    energy over all auxiliary labelings, and one minimising labeling."""
    base = np.asarray(base_labels, dtype=np.int64)
    if base.shape != (network.num_base,):
        raise StructureError(f"expected {network.num_base} base labels, got shape {base.shape}")
    flat = np.full(network.num_vars, network.free, dtype=np.int64)
    flat[: network.num_base] = base
    check_labeling(network, flat)
    flat = minimize_given(network, flat, network.free_allowed, budget)
    return float(joint_energies(network, flat[None, :])[0]), Labeling.from_flat(network, flat)
