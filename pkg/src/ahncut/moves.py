"""Move-making minimisation of hierarchical energies.

Every graph-cut move here restricts each variable to an ordered chain of at
most three labels and hands the resulting problem to
:func:`ahncut.mincut.minimize_chain`:

============== ======================= =============================== ===========
move           base variable           auxiliary variable              energy form
============== ======================= =============================== ===========
expansion      (cur, alpha)            (cur, alpha)                    reparameterised
swap           (alpha, beta) if in set (alpha, beta) if in set         reparameterised
range-expansion (cur, alpha)           (cur, Free, alpha)              original
range-swap     (alpha, beta) if in set (alpha, Free, beta) if in set   original
============== ======================= =============================== ===========

An auxiliary variable currently at ``alpha`` or Free uses the chain
``(Free, alpha)`` in a range expansion.  Step functions never mutate their
input state.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from .energy import (
    HierarchicalNetwork,
    Labeling,
    check_labeling,
    check_metric,
    edge_cost,
    joint_energies,
    link_cost,
    minimize_given,
    reparameterized_unary,
)
from .errors import OracleInfeasible, ParameterError
from .mincut import minimize_chain

ALGORITHMS = ("expansion", "swap", "range-expansion", "range-swap", "icm")

#: Improvements smaller than this (relative to the energy scale) are treated as ties.
ACCEPT_RTOL = 1e-12


@dataclass(frozen=True)
class TraceRecord:
    sweep: int
    step: int
    algorithm: str
    alpha: int | None
    beta: int | None
    energy_before: float
    energy_after: float
    accepted: bool
    elapsed_micros: int = 0
    note: str = ""


@dataclass(frozen=True)
class MoveState:
    labels: np.ndarray  # flat, all levels
    energy: float
    iteration: int = 0
    sweep: int = 0
    trace: tuple = ()

    def __post_init__(self):
        a = np.array(self.labels, dtype=np.int64)
        a.setflags(write=False)
        object.__setattr__(self, "labels", a)

    def labeling(self, network: HierarchicalNetwork) -> Labeling:
        return Labeling.from_flat(network, self.labels)


def make_state(network: HierarchicalNetwork, labeling) -> MoveState:
    flat = check_labeling(network, labeling)
    return MoveState(flat, float(joint_energies(network, flat[None])[0]))


def _energy(network, flat) -> float:
    return float(joint_energies(network, np.asarray(flat)[None])[0])


def _improves(new: float, old: float) -> bool:
    return new < old - ACCEPT_RTOL * max(1.0, abs(old))


# -- the shared chain move -----------------------------------------------------------------


def _reparam_unary(network):
    u = getattr(network, "_reparam_unary", None)
    if u is None:
        u = reparameterized_unary(network)
        u.setflags(write=False)
        network._reparam_unary = u
    return u


def _chain_move(network, state, chains, live, form, name, alpha, beta, note=""):
    """Apply the optimal move over per-variable label chains."""
    t0 = time.perf_counter_ns()
    F = network.free
    cur = state.labels
    movable = live.any(axis=1)
    assert not np.any((chains == F) & ~network.free_allowed[:, None]), "Free offered to a base variable"

    if not movable.any():
        new, e_new = cur, state.energy
    else:
        unary_src = _reparam_unary(network) if form == "reparam" else network.unary
        unary = np.take_along_axis(unary_src, chains, axis=1)

        pairs, tables = [], []
        m = movable[network.edge_u] | movable[network.edge_v]
        if m.any():
            u, v, w = network.edge_u[m], network.edge_v[m], network.edge_w[m]
            pairs.append(np.stack([u, v], 1))
            tables.append(edge_cost(chains[u][:, :, None], chains[v][:, None, :], w[:, None, None], F))
        m = movable[network.link_child] | movable[network.link_parent]
        if m.any():
            c, p, k = network.link_child[m], network.link_parent[m], network.link_w[m]
            cost = edge_cost if form == "reparam" else link_cost
            pairs.append(np.stack([c, p], 1))
            tables.append(cost(chains[c][:, :, None], chains[p][:, None, :], k[:, None, None], F))
        pairs = np.concatenate(pairs) if pairs else np.zeros((0, 2), dtype=np.int64)
        tables = np.concatenate(tables) if tables else np.zeros((0, 3, 3))

        states, _ = minimize_chain(unary, pairs, tables, live)
        proposal = chains[np.arange(network.num_vars), states]
        e_prop = _energy(network, proposal)
        if _improves(e_prop, state.energy):
            new, e_new = proposal, e_prop
        else:
            new, e_new = cur, state.energy

    accepted = e_new < state.energy
    rec = TraceRecord(state.sweep, state.iteration, name, alpha, beta, state.energy, e_new, accepted,
                      (time.perf_counter_ns() - t0) // 1000, note)
    return MoveState(new, e_new, state.iteration + 1, state.sweep, state.trace + (rec,))


def _movable_mask(network, movable):
    if movable is None:
        return np.ones(network.num_vars, dtype=bool)
    return np.asarray(movable, dtype=bool)


def _check_label(network, lab, allow_free):
    top = network.free if allow_free else network.num_labels - 1
    if not 0 <= lab <= top:
        raise ParameterError(f"label {lab} outside 0..{top}")


# -- the four graph-cut steps ----------------------------------------------------------------


def alpha_expansion_step(network: HierarchicalNetwork, state: MoveState, alpha: int, movable=None) -> MoveState:
    """Optimal alpha-expansion on the reparameterised (metric) pairwise form."""
    _check_label(network, alpha, allow_free=False)
    cur = state.labels
    go = _movable_mask(network, movable) & (cur != alpha)
    chains = np.stack([cur, np.where(go, alpha, cur), np.where(go, alpha, cur)], axis=1)
    live = np.stack([go, np.zeros_like(go)], axis=1)
    return _chain_move(network, state, chains, live, "reparam", "expansion", alpha, None)


def alphabeta_swap_step(network: HierarchicalNetwork, state: MoveState, alpha: int, beta: int, movable=None) -> MoveState:
    """Optimal alpha-beta swap; ``alpha`` or ``beta`` may be the Free label."""
    _check_label(network, alpha, allow_free=True)
    _check_label(network, beta, allow_free=True)
    if alpha == beta:
        raise ParameterError("swap needs two distinct labels")
    a, b = min(alpha, beta), max(alpha, beta)
    cur = state.labels
    can = network.free_allowed | (b != network.free)
    go = _movable_mask(network, movable) & ((cur == a) | (cur == b)) & can
    chains = np.stack([np.where(go, a, cur), np.where(go, b, cur), np.where(go, b, cur)], axis=1)
    live = np.stack([go, np.zeros_like(go)], axis=1)
    return _chain_move(network, state, chains, live, "reparam", "swap", alpha, beta)


def range_expansion_step(network: HierarchicalNetwork, state: MoveState, alpha: int, movable=None) -> MoveState:
    """Every variable may keep its label, become Free (auxiliaries only) or take ``alpha``."""
    _check_label(network, alpha, allow_free=False)
    F = network.free
    cur = state.labels
    mov = _movable_mask(network, movable)
    aux = network.free_allowed & mov
    base = ~network.free_allowed & mov & (cur != alpha)
    low = np.where(aux & ((cur == alpha) | (cur == F)), F, cur)
    mid = np.where(aux, F, cur)
    top = np.where(aux | base, alpha, cur)
    chains = np.stack([low, mid, top], axis=1)
    live = np.stack([aux & (low != F), aux | base], axis=1)
    return _chain_move(network, state, chains, live, "original", "range-expansion", alpha, None)


def range_swap_step(network: HierarchicalNetwork, state: MoveState, alpha: int, beta: int, movable=None) -> MoveState:
    """Variables labelled ``alpha``, Free or ``beta`` may take any of the three.

    Transformational optimality is only guaranteed without intra-layer edges
    above the base level; otherwise the trace record carries a note.
    """
    _check_label(network, alpha, allow_free=False)
    _check_label(network, beta, allow_free=False)
    if alpha == beta:
        raise ParameterError("range swap needs two distinct labels")
    a, b = min(alpha, beta), max(alpha, beta)
    F = network.free
    cur = state.labels
    mov = _movable_mask(network, movable)
    part = mov & ((cur == a) | (cur == b) | (cur == F))
    aux = part & network.free_allowed
    base = part & ~network.free_allowed
    chains = np.stack([np.where(part, a, cur), np.where(aux, F, np.where(base, a, cur)),
                       np.where(part, b, cur)], axis=1)
    live = np.stack([aux, part], axis=1)
    aux_edges = bool(np.any(network.level_of[network.edge_u] > 0))
    note = "transformational optimality not guaranteed" if aux_edges else ""
    return _chain_move(network, state, chains, live, "original", "range-swap", alpha, beta, note)


# -- ICM ---------------------------------------------------------------------------------------


def _incidence(network):
    inc = getattr(network, "_incidence", None)
    if inc is None:
        inc = [[] for _ in range(network.num_vars)]
        for u, v, w in zip(network.edge_u.tolist(), network.edge_v.tolist(), network.edge_w.tolist()):
            inc[u].append((0, v, w))
            inc[v].append((0, u, w))
        for c, p, k in zip(network.link_child.tolist(), network.link_parent.tolist(), network.link_w.tolist()):
            inc[c].append((1, p, k))  # v is the child
            inc[p].append((2, c, k))  # v is the parent
        network._incidence = inc
    return inc


def _local_costs(network, x, v, inc):
    F = network.free
    labels = np.arange(F + 1)
    cost = np.array(network.unary[v], dtype=float)
    for kind, o, w in inc[v]:
        if kind == 0:
            cost += edge_cost(labels, x[o], w, F)
        elif kind == 1:
            cost += link_cost(labels, x[o], w, F)
        else:
            cost += link_cost(x[o], labels, w, F)
    if not network.free_allowed[v]:
        cost[F] = np.inf
    return cost


def icm_step(network: HierarchicalNetwork, state: MoveState, movable=None) -> MoveState:
    """One pass of greedy single-variable relabelling in flat index order."""
    t0 = time.perf_counter_ns()
    inc = _incidence(network)
    x = np.array(state.labels)
    for v in np.flatnonzero(_movable_mask(network, movable)).tolist():
        cost = _local_costs(network, x, v, inc)
        best = int(np.argmin(cost))
        if cost[best] < cost[x[v]] - ACCEPT_RTOL * max(1.0, abs(cost[x[v]])):
            x[v] = best
    e = _energy(network, x)
    if not _improves(e, state.energy):
        x, e = state.labels, state.energy
    rec = TraceRecord(state.sweep, state.iteration, "icm", None, None, state.energy, e, e < state.energy,
                      (time.perf_counter_ns() - t0) // 1000)
    return MoveState(x, e, state.iteration + 1, state.sweep, state.trace + (rec,))


# -- auxiliary collapse -------------------------------------------------------------------------


def collapse_auxiliaries(network: HierarchicalNetwork, state: MoveState) -> MoveState:
    """Set every auxiliary variable to its exact conditional minimiser given the base labels.

    Raises :class:`OracleInfeasible` if a coupled auxiliary component is too
    large to minimise exactly.
    """
    flat = minimize_given(network, state.labels, network.free_allowed)
    e = _energy(network, flat)
    if not e <= state.energy + ACCEPT_RTOL * max(1.0, abs(state.energy)):
        raise AssertionError("exact auxiliary minimisation increased the energy")
    if not _improves(e, state.energy):
        flat, e = state.labels, state.energy
    return replace(state, labels=flat, energy=e)


def descend_auxiliaries(network: HierarchicalNetwork, state: MoveState, max_sweeps: int = 50) -> MoveState:
    """Approximate auxiliary minimisation: range expansions plus ICM over
    auxiliary variables only, until a full pass brings no improvement."""
    aux = network.free_allowed
    s = replace(state, trace=())
    for _ in range(max_sweeps):
        before = s.energy
        for alpha in range(network.num_labels):
            s = range_expansion_step(network, s, alpha, movable=aux)
        s = icm_step(network, s, movable=aux)
        if not _improves(s.energy, before):
            break
    return replace(state, labels=s.labels, energy=s.energy)


def collapse_or_descend(network, state):
    """``(state, exact)``: exact collapse when feasible, otherwise approximate descent."""
    try:
        return collapse_auxiliaries(network, state), True
    except OracleInfeasible:
        return descend_auxiliaries(network, state), False


# -- the driver ----------------------------------------------------------------------------------


@dataclass(frozen=True)
class MoveResult:
    algorithm: str
    labeling: Labeling
    energy: float  # joint energy of ``labeling``
    higher_order_energy: float
    higher_order_labeling: Labeling
    higher_order_exact: bool
    sweeps: int
    converged: bool
    trace: tuple = field(default=(), repr=False)
    seconds: float = 0.0


def initial_labels(network: HierarchicalNetwork, init: str = "argmin", seed: int = 0) -> np.ndarray:
    """Base labels per ``init`` (``argmin``, ``uniform:<l>`` or ``random``); auxiliaries Free."""
    K = network.num_labels
    flat = np.full(network.num_vars, network.free, dtype=np.int64)
    nb = network.num_base
    if init == "argmin":
        flat[:nb] = np.argmin(network.unary[:nb, :K], axis=1)
    elif init.startswith("uniform:"):
        lab = int(init.split(":", 1)[1])
        if not 0 <= lab < K:
            raise ParameterError(f"uniform label {lab} outside 0..{K - 1}")
        flat[:nb] = lab
    elif init == "random":
        flat[:nb] = np.random.default_rng(seed).integers(0, K, size=nb)
    else:
        raise ParameterError(f"unknown init {init!r}")
    return flat


def _step_plan(network, algorithm):
    K, F = network.num_labels, network.free
    if algorithm in ("expansion", "range-expansion"):
        return [(a,) for a in range(K)]
    if algorithm == "swap":
        top = F + 1 if network.num_levels > 1 else K
        return [(a, b) for a in range(top) for b in range(a + 1, top)]
    if algorithm == "range-swap":
        return [(a, b) for a in range(K) for b in range(a + 1, K)]
    if algorithm == "icm":
        return [()]
    raise ParameterError(f"unknown algorithm {algorithm!r}; choose from {', '.join(ALGORITHMS)}")


STEPS = {
    "expansion": alpha_expansion_step,
    "swap": alphabeta_swap_step,
    "range-expansion": range_expansion_step,
    "range-swap": range_swap_step,
    "icm": icm_step,
}


def solve(network: HierarchicalNetwork, algorithm: str, max_iters: int = 500, seed: int = 0,
          init: str = "argmin", initial=None) -> MoveResult:
    """Cycle ``algorithm``'s steps until a full sweep brings no decrease or
    ``max_iters`` sweeps have run.

    ``initial`` (a :class:`Labeling` or flat array) overrides ``init``.
    """
    t0 = time.perf_counter()
    plan = _step_plan(network, algorithm)
    step = STEPS[algorithm]
    if algorithm in ("expansion", "swap"):
        labels = np.arange(network.free + 1)
        w = np.unique(np.concatenate([network.edge_w, network.link_w, [0.0]]))
        for lam in w:
            if not check_metric(edge_cost(labels[:, None], labels[None, :], lam, network.free)):
                raise ParameterError("reparameterised pairwise potential is not a metric")

    flat = initial_labels(network, init, seed) if initial is None else check_labeling(network, initial)
    state = make_state(network, flat)
    state, exact = collapse_or_descend(network, state)

    converged = False
    sweeps = 0
    while sweeps < max_iters:
        before = state.energy
        state = replace(state, sweep=sweeps)
        for args in plan:
            state = step(network, state, *args)
        sweeps += 1
        if not _improves(state.energy, before):
            converged = True
            break

    final, exact = collapse_or_descend(network, state)
    return MoveResult(
        algorithm=algorithm,
        labeling=state.labeling(network),
        energy=state.energy,
        higher_order_energy=final.energy,
        higher_order_labeling=final.labeling(network),
        higher_order_exact=exact,
        sweeps=sweeps,
        converged=converged,
        trace=state.trace,
        seconds=time.perf_counter() - t0,
    )


TRACE_HEADER = "sweep,step,algorithm,alpha,beta,energy_before,energy_after,accepted,elapsed_micros"


def format_trace(trace, network: HierarchicalNetwork, timing: bool = True) -> str:
    """CSV rendering of trace records; numbers use 9 significant digits."""
    F = network.free

    def lab(x):
        return "-" if x is None else ("F" if x == F else str(x))

    lines = [TRACE_HEADER]
    for r in trace:
        lines.append(",".join([
            str(r.sweep), str(r.step), r.algorithm, lab(r.alpha), lab(r.beta),
            f"{r.energy_before:.9g}", f"{r.energy_after:.9g}", str(int(r.accepted)),
            str(r.elapsed_micros if timing else 0),
        ]))
    return "\n".join(lines) + "\n"
