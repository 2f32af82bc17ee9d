"""Synthetic instance generators and the method-comparison harness.

Randomness comes from numpy's ``PCG64`` bit generator seeded with the generator spec's
``seed`` (``numpy.random.default_rng(seed)``); draws happen in a fixed order,
so a spec always yields the same network on every platform.
"""
from __future__ import annotations

import dataclasses
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .energy import HierarchicalNetwork, NetworkBuilder, check_hierarchical_consistency
from .errors import AHNError, OracleInfeasible, ParameterError
from .moves import solve
from .oracle import brute_force_map

KINDS = ("random_small", "grid_hierarchy")


@dataclass(frozen=True)
class GeneratorSpec:
    kind: str = "random_small"
    num_labels: int = 3
    seed: int = 0
    # random_small
    num_base: int = 6
    num_aux: int = 2
    edge_prob: float = 0.3
    max_clique: int = 4
    aux_edges: bool = False
    # grid_hierarchy
    width: int = 8
    height: int = 8
    partitions: int = 2
    segments: int = 4
    super_segments: int = 2
    regions: int = 6
    jitter: float = 0.3
    # cost ranges (integers, inclusive)
    unary_max: int = 5
    data_gap: int = 3
    potts_min: int = 0
    potts_max: int = 3
    weight_min: int = 1
    weight_max: int = 3
    gamma_max: int = 3
    truncation_max: int = 4
    aux_lambda_max: int = 2
    consistent: bool = True

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ParameterError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if self.num_labels < 1:
            raise ParameterError("num_labels must be positive")
        for name in ("unary_max", "data_gap", "potts_min", "potts_max", "weight_min", "weight_max",
                     "gamma_max", "truncation_max", "aux_lambda_max", "num_base", "num_aux",
                     "width", "height", "partitions", "segments", "super_segments", "regions"):
            if getattr(self, name) < 0:
                raise ParameterError(f"{name} must be >= 0")
        if self.potts_min > self.potts_max or self.weight_min > self.weight_max:
            raise ParameterError("range minimum exceeds maximum")
        if not 0 <= self.edge_prob <= 1 or not 0 <= self.jitter < 0.5:
            raise ParameterError("edge_prob must lie in [0, 1] and jitter in [0, 0.5)")

    @classmethod
    def from_text(cls, text: str) -> "GeneratorSpec":
        """Parse ``key = value`` lines (``#`` comments allowed)."""
        types = {f.name: f.type for f in dataclasses.fields(cls)}
        kw = {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ParameterError(f"line {lineno}: expected key = value")
            key, val = (s.strip() for s in line.split("=", 1))
            if key not in types:
                raise ParameterError(f"line {lineno}: unknown key {key!r}")
            t = types[key]
            try:
                if t in ("bool", bool):
                    if val.lower() not in ("1", "0", "true", "false", "yes", "no"):
                        raise ValueError(val)
                    kw[key] = val.lower() in ("1", "true", "yes")
                elif t in ("int", int):
                    kw[key] = int(val)
                elif t in ("float", float):
                    kw[key] = float(val)
                else:
                    kw[key] = val
            except ValueError:
                raise ParameterError(f"line {lineno}: bad value {val!r} for {key}") from None
        return cls(**kw)

    def to_text(self) -> str:
        return "".join(f"{f.name} = {getattr(self, f.name)}\n" for f in dataclasses.fields(self))


def generate(spec: GeneratorSpec) -> HierarchicalNetwork:
    rng = np.random.default_rng(spec.seed)
    if spec.kind == "random_small":
        net = _random_small(spec, rng)
    else:
        net = _grid_hierarchy(spec, rng)
    if spec.consistent and not check_hierarchical_consistency(net).ok:
        raise AssertionError("generator produced an inconsistent hierarchy")
    return net


def _ints(rng, lo, hi, size=None):
    return rng.integers(lo, hi + 1, size=size).astype(float)


def _aux_unary(rng, spec, K, child_weight, edge_load):
    """``K + 1`` costs for one auxiliary variable.

    With ``consistent`` set, every per-label cost plus the incident edge load
    stays strictly below half the total child weight.
    """
    top = spec.gamma_max
    if spec.consistent:
        top = min(top, math.ceil(child_weight / 2) - 1 - int(edge_load))
        if top < 0:
            raise AssertionError("edge load was not budgeted")
    g = _ints(rng, 0, top, K)
    return np.append(g, g.max() + _ints(rng, 0, spec.truncation_max))


def _budget_edges(rng, spec, pairs, child_w):
    """Integer aux-edge weights whose per-variable sum stays under a quarter of child weight."""
    load = np.zeros(len(child_w))
    out = []
    for a, b in pairs:
        lam = _ints(rng, 0, spec.aux_lambda_max)
        if spec.consistent:
            room = min(math.ceil(child_w[a] / 2) - 1 - load[a], math.ceil(child_w[b] / 2) - 1 - load[b])
            lam = float(max(0, min(lam, room // 2)))
        load[a] += lam
        load[b] += lam
        out.append(lam)
    return out, load


def _random_small(spec, rng):
    K, nb, na = spec.num_labels, spec.num_base, spec.num_aux
    if nb < 1:
        raise ParameterError("num_base must be >= 1")
    if spec.max_clique < 1:
        raise ParameterError("max_clique must be >= 1")
    b = NetworkBuilder(K)
    b.add_level(_ints(rng, 0, spec.unary_max, (nb, K)))
    for i in range(nb):
        for j in range(i + 1, nb):
            if rng.random() < spec.edge_prob:
                b.add_edge(1, i, j, _ints(rng, spec.potts_min, spec.potts_max))
    if na == 0:
        return b.build()
    wmin = max(spec.weight_min, 1) if spec.consistent else spec.weight_min
    cliques = []
    for _ in range(na):
        size = int(rng.integers(1, min(nb, spec.max_clique) + 1))
        members = np.sort(rng.choice(nb, size=size, replace=False))
        w = _ints(rng, wmin, max(wmin, spec.weight_max), size)
        cliques.append((members, w))
    child_w = np.array([w.sum() for _, w in cliques])
    pairs = []
    if spec.aux_edges:
        pairs = [(a, c) for a in range(na) for c in range(a + 1, na) if rng.random() < spec.edge_prob]
    lams, load = _budget_edges(rng, spec, pairs, child_w)
    b.add_level(np.array([_aux_unary(rng, spec, K, child_w[c], load[c]) for c in range(na)]))
    for c, (members, w) in enumerate(cliques):
        for i, k in zip(members.tolist(), w.tolist()):
            b.add_link(2, c, i, k)
    for (a, c), lam in zip(pairs, lams):
        b.add_edge(2, a, c, lam)
    return b.build()


def _block_bounds(rng, length, parts, jitter):
    """``parts + 1`` strictly increasing cut positions over ``[0, length]`` with jitter."""
    base = np.linspace(0, length, parts + 1)
    step = length / parts
    inner = base[1:-1] + rng.uniform(-jitter, jitter, parts - 1) * step
    cuts = np.concatenate([[0], np.round(inner), [length]]).astype(int)
    for i in range(1, parts):
        cuts[i] = min(max(cuts[i], cuts[i - 1] + 1), length - (parts - i))
    return cuts


def _grid_shape(n):
    rows = int(math.isqrt(n))
    while n % rows:
        rows -= 1
    return rows, n // rows


def _grid_hierarchy(spec, rng):
    K, W, H = spec.num_labels, spec.width, spec.height
    n = W * H
    if n < 1:
        raise ParameterError("grid must have at least one cell")
    if spec.partitions < 1 or spec.segments < 1:
        raise ParameterError("need at least one partition and one segment")
    rows, cols = _grid_shape(spec.segments)
    if rows > H or cols > W:
        raise ParameterError(f"{spec.segments} segments do not fit a {W}x{H} grid")
    nseg = spec.partitions * spec.segments
    if not 1 <= spec.super_segments <= nseg:
        raise ParameterError(f"super_segments must lie in 1..{nseg}")

    # piecewise-constant ground truth from nearest-seed regions
    nreg = max(1, spec.regions)
    seeds = np.stack([rng.uniform(0, W, nreg), rng.uniform(0, H, nreg)], axis=1)
    seed_label = rng.integers(0, K, nreg)
    yy, xx = np.mgrid[0:H, 0:W]
    d = (xx.ravel()[:, None] + 0.5 - seeds[:, 0]) ** 2 + (yy.ravel()[:, None] + 0.5 - seeds[:, 1]) ** 2
    truth = seed_label[np.argmin(d, axis=1)]

    unary = _ints(rng, 0, spec.unary_max, (n, K))
    unary += spec.data_gap
    unary[np.arange(n), truth] -= spec.data_gap
    b = NetworkBuilder(K)
    b.add_level(unary)
    idx = np.arange(n).reshape(H, W)
    grid_edges = np.concatenate([np.stack([idx[:, :-1].ravel(), idx[:, 1:].ravel()], 1),
                                 np.stack([idx[:-1].ravel(), idx[1:].ravel()], 1)])
    for (i, j), lam in zip(grid_edges.tolist(), _ints(rng, spec.potts_min, spec.potts_max, len(grid_edges)).tolist()):
        b.add_edge(1, i, j, lam)

    # level 2: overlapping jittered block partitions
    seg_of = []  # per segment: pixel indices
    seg_pos = []
    seg_pairs = []
    for p in range(spec.partitions):
        ycut = _block_bounds(rng, H, rows, spec.jitter)
        xcut = _block_bounds(rng, W, cols, spec.jitter)
        first = len(seg_of)
        for r in range(rows):
            for c in range(cols):
                pix = idx[ycut[r]:ycut[r + 1], xcut[c]:xcut[c + 1]].ravel()
                seg_of.append(pix)
                seg_pos.append(((xcut[c] + xcut[c + 1]) / 2, (ycut[r] + ycut[r + 1]) / 2))
                s = first + r * cols + c
                if c + 1 < cols:
                    seg_pairs.append((s, s + 1))
                if r + 1 < rows:
                    seg_pairs.append((s, s + cols))
    link_w = [_ints(rng, spec.weight_min if not spec.consistent else max(1, spec.weight_min),
                    max(1, spec.weight_max), len(pix)) for pix in seg_of]
    child_w = np.array([w.sum() for w in link_w])
    if not spec.aux_edges:
        seg_pairs = []
    lams, load = _budget_edges(rng, spec, seg_pairs, child_w)
    b.add_level(np.array([_aux_unary(rng, spec, K, child_w[s], load[s]) for s in range(nseg)]))
    for s, (pix, w) in enumerate(zip(seg_of, link_w)):
        for i, k in zip(pix.tolist(), w.tolist()):
            b.add_link(2, s, i, k)
    for (a, c), lam in zip(seg_pairs, lams):
        b.add_edge(2, a, c, lam)

    # level 3: contiguous groups of segments ordered by centroid
    order = sorted(range(nseg), key=lambda s: (seg_pos[s][0], seg_pos[s][1], s))
    groups = np.array_split(np.array(order), spec.super_segments)
    w3 = [_ints(rng, max(1, spec.weight_min), max(1, spec.weight_max), len(g)) for g in groups]
    b.add_level(np.array([_aux_unary(rng, spec, K, w.sum(), 0) for w in w3]))
    for g_idx, (g, w) in enumerate(zip(groups, w3)):
        for s, k in zip(sorted(g.tolist()), w.tolist()):
            b.add_link(3, g_idx, s, k)
    return b.build()


# -- comparison ---------------------------------------------------------------------------------


@dataclass(frozen=True)
class AlgorithmStats:
    algorithm: str
    instances: int
    wins: int
    mean_difference: float
    mean_ratio: float
    mean_seconds: float
    failures: int


@dataclass(frozen=True)
class ComparisonReport:
    stats: tuple
    instances: int
    reference: str  # "oracle", "best-found" or "mixed"
    energies: dict = field(default_factory=dict, repr=False)  # (instance, algorithm) -> energy or None

    def by_algorithm(self, name) -> AlgorithmStats:
        return next(s for s in self.stats if s.algorithm == name)

    def to_csv(self, timing: bool = True) -> str:
        """CSV with 9 significant digits; ``timing=False`` writes ``NA`` for the
        time column so that repeated runs are byte-identical."""
        lines = ["algorithm,instances,wins,mean_difference,mean_ratio,mean_seconds,failures,reference"]
        for s in self.stats:
            t = f"{s.mean_seconds:.9g}" if timing else "NA"
            lines.append(f"{s.algorithm},{s.instances},{s.wins},{s.mean_difference:.9g},{s.mean_ratio:.9g},"
                         f"{t},{s.failures},{self.reference}")
        return "\n".join(lines) + "\n"

    def to_table(self, timing: bool = True) -> str:
        head = f"{'algorithm':<16} {'wins':>6} {'E-Emin':>12} {'E/Emin':>12} {'time[s]':>10} {'fail':>5}"
        rows = [head, "-" * len(head)]
        for s in self.stats:
            t = f"{s.mean_seconds:>10.4g}" if timing else f"{'-':>10}"
            rows.append(f"{s.algorithm:<16} {s.wins:>6} {s.mean_difference:>12.6g} {s.mean_ratio:>12.6g} "
                        f"{t} {s.failures:>5}")
        rows.append(f"{self.instances} instances; E(min) from {self.reference}")
        return "\n".join(rows) + "\n"


def _ratio(e, ref):
    if ref > 0:
        return e / ref
    return 1.0 if e <= ref + 1e-9 else math.inf


def compare(networks, algorithms, max_iters: int = 500, seed: int = 0, init: str = "argmin",
            oracle_budget: int = 10**6, tol: float = 1e-9) -> ComparisonReport:
    """Run every algorithm on every network and aggregate final higher-order energies.

    Wins count instances where a method is no worse than every other method
    (ties count for all of them).  Differences and ratios are taken against
    the brute-force optimum when it fits ``oracle_budget``, otherwise against
    the best energy any method found.
    """
    networks = list(networks)
    if not networks:
        raise ParameterError("compare needs at least one network")
    if len(algorithms) < 2:
        raise ParameterError("compare needs at least two algorithms")
    energies, times = {}, {}
    refs = []
    for n_idx, net in enumerate(networks):
        for alg in algorithms:
            try:
                r = solve(net, alg, max_iters=max_iters, seed=seed, init=init)
                energies[(n_idx, alg)] = r.higher_order_energy
                times[(n_idx, alg)] = r.seconds
            except AHNError:
                energies[(n_idx, alg)] = None
        found = [e for a in algorithms if (e := energies[(n_idx, a)]) is not None]
        try:
            _, e_opt = brute_force_map(net, budget=oracle_budget)
            refs.append(("oracle", e_opt, min(found) if found else None))
        except OracleInfeasible:
            refs.append(("best-found", min(found) if found else None, min(found) if found else None))

    stats = []
    for alg in algorithms:
        wins, diffs, ratios, secs, fails = 0, [], [], [], 0
        for n_idx, (_, ref, best) in enumerate(refs):
            e = energies[(n_idx, alg)]
            if e is None:
                fails += 1
                continue
            wins += e <= best + tol * max(1.0, abs(best))
            diffs.append(e - ref)
            ratios.append(_ratio(e, ref))
            secs.append(times[(n_idx, alg)])
        mean = lambda xs: float(np.mean(xs)) if xs else math.nan
        stats.append(AlgorithmStats(alg, len(diffs), int(wins), mean(diffs), mean(ratios), mean(secs), fails))
    kinds = {k for k, *_ in refs}
    reference = kinds.pop() if len(kinds) == 1 else "mixed"
    return ComparisonReport(tuple(stats), len(networks), reference, energies)
