"""Reading and writing the line-oriented ``AHN 1`` network format.

::

    AHN 1
    LABELS K
    LEVELS H
    VARS h n                      # one per level, h from 1
    UNARY h i c_0 ... c_{K-1} [c_F]   # base level omits c_F
    EDGE h i j lambda
    LINK h c i k                  # parent c on level h, child i on level h-1

Indices in the file are 0-based, levels 1-based.  ``#`` starts a comment.
Variables without a UNARY line get all-zero costs.
"""
from __future__ import annotations

import os
import sys

import numpy as np

from .energy import HierarchicalNetwork, Labeling, make_level
from .errors import AHNError, ParseError

MAGIC = "AHN 1"


def fmt_float(x: float) -> str:
    """Shortest repr that round-trips exactly (platform independent)."""
    x = float(x)
    if x == int(x) and abs(x) < 1e15:
        return str(int(x))
    return repr(x)


def _number(tok, lineno, what):
    try:
        v = float(tok)
    except ValueError:
        raise ParseError(f"bad {what} {tok!r}", lineno) from None
    if not np.isfinite(v):
        raise ParseError(f"{what} must be finite", lineno)
    return v


def _index(tok, lineno, what, bound):
    try:
        v = int(tok)
    except ValueError:
        raise ParseError(f"bad {what} {tok!r}", lineno) from None
    if not 0 <= v < bound:
        raise ParseError(f"{what} {v} out of range [0, {bound})", lineno)
    return v


def parse_network(text: str) -> HierarchicalNetwork:
    K = H = None
    sizes: dict = {}
    unary: dict = {}
    unary_line: dict = {}
    edges: dict = {}
    links: dict = {}
    seen_magic = False

    def level(tok, lineno):
        if H is None:
            raise ParseError("LEVELS must precede level data", lineno)
        h = _index(tok, lineno, "level", H + 1)
        if h == 0:
            raise ParseError("levels are numbered from 1", lineno)
        return h

    def size(h, lineno):
        if h not in sizes:
            raise ParseError(f"VARS for level {h} must precede its data", lineno)
        return sizes[h]

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        if not seen_magic:
            if " ".join(tok) != MAGIC:
                raise ParseError(f"expected header {MAGIC!r}", lineno)
            seen_magic = True
            continue
        key, args = tok[0].upper(), tok[1:]
        if key == "LABELS":
            if len(args) != 1 or K is not None:
                raise ParseError("LABELS takes one value and appears once", lineno)
            K = _index(args[0], lineno, "label count", 10**9)
            if K < 1:
                raise ParseError("label count must be positive", lineno)
        elif key == "LEVELS":
            if len(args) != 1 or H is not None:
                raise ParseError("LEVELS takes one value and appears once", lineno)
            H = _index(args[0], lineno, "level count", 10**6)
            if H < 1:
                raise ParseError("level count must be positive", lineno)
        elif key == "VARS":
            if len(args) != 2:
                raise ParseError("VARS takes: h n", lineno)
            h = level(args[0], lineno)
            if h in sizes:
                raise ParseError(f"duplicate VARS for level {h}", lineno)
            sizes[h] = _index(args[1], lineno, "variable count", 10**9)
        elif key == "UNARY":
            if K is None:
                raise ParseError("LABELS must precede UNARY", lineno)
            if not args:
                raise ParseError("UNARY takes: h i costs...", lineno)
            h = level(args[0], lineno)
            i = _index(args[1] if len(args) > 1 else "", lineno, "variable", size(h, lineno))
            want = K if h == 1 else K + 1
            costs = args[2:]
            if len(costs) != want:
                raise ParseError(f"level {h} UNARY needs {want} costs, got {len(costs)}", lineno)
            if (h, i) in unary:
                raise ParseError(f"duplicate UNARY for level {h} variable {i}", lineno)
            unary[(h, i)] = [_number(c, lineno, "cost") for c in costs]
            unary_line[(h, i)] = lineno
        elif key == "EDGE":
            if len(args) != 4:
                raise ParseError("EDGE takes: h i j lambda", lineno)
            h = level(args[0], lineno)
            n = size(h, lineno)
            i = _index(args[1], lineno, "variable", n)
            j = _index(args[2], lineno, "variable", n)
            if i == j:
                raise ParseError("EDGE endpoints must differ", lineno)
            lam = _number(args[3], lineno, "lambda")
            if lam < 0:
                raise ParseError(f"negative lambda {lam}", lineno)
            edges.setdefault(h, []).append((i, j, lam))
        elif key == "LINK":
            if len(args) != 4:
                raise ParseError("LINK takes: h c i k", lineno)
            h = level(args[0], lineno)
            if h < 2:
                raise ParseError("LINK parent level must be >= 2", lineno)
            c = _index(args[1], lineno, "parent", size(h, lineno))
            i = _index(args[2], lineno, "child", size(h - 1, lineno))
            k = _number(args[3], lineno, "weight")
            if k < 0:
                raise ParseError(f"negative link weight {k}", lineno)
            links.setdefault(h, []).append((i, c, k))
        else:
            raise ParseError(f"unknown keyword {tok[0]!r}", lineno)

    if not seen_magic:
        raise ParseError(f"missing header {MAGIC!r}", 1)
    if K is None or H is None:
        raise ParseError("LABELS and LEVELS are required")
    missing = [h for h in range(1, H + 1) if h not in sizes]
    if missing:
        raise ParseError(f"missing VARS for level(s) {missing}")

    levels = []
    for h in range(1, H + 1):
        n = sizes[h]
        u = np.zeros((n, K + 1))
        for i in range(n):
            if (h, i) in unary:
                row = unary[(h, i)]
                u[i, : len(row)] = row
                if h > 1 and max(row[:K], default=0.0) > row[K]:
                    raise ParseError(f"per-label cost exceeds Free cost for level {h} variable {i}",
                                     unary_line[(h, i)])
        e = edges.get(h, [])
        lk = links.get(h, [])
        levels.append(make_level(u, [(i, j) for i, j, _ in e], [w for *_, w in e],
                                 [(i, c) for i, c, _ in lk], [w for *_, w in lk]))
    try:
        return HierarchicalNetwork(K, levels)
    except AHNError as exc:
        raise ParseError(str(exc)) from exc


def format_network(network: HierarchicalNetwork) -> str:
    K = network.num_labels
    out = [MAGIC, f"LABELS {K}", f"LEVELS {network.num_levels}"]
    for h, lv in enumerate(network.levels, start=1):
        out.append(f"VARS {h} {lv.num_vars}")
    for h, lv in enumerate(network.levels, start=1):
        width = K if h == 1 else K + 1
        for i in range(lv.num_vars):
            out.append(f"UNARY {h} {i} " + " ".join(fmt_float(c) for c in lv.unary[i, :width]))
        for (i, j), lam in zip(lv.edges.tolist(), lv.edge_weights.tolist()):
            out.append(f"EDGE {h} {i} {j} {fmt_float(lam)}")
        for (i, c), k in zip(lv.links.tolist(), lv.link_weights.tolist()):
            out.append(f"LINK {h} {c} {i} {fmt_float(k)}")
    return "\n".join(out) + "\n"


def read_network(path) -> HierarchicalNetwork:
    with open(path, encoding="utf-8") as fh:
        return parse_network(fh.read())


def write_network(network: HierarchicalNetwork, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(format_network(network))


# -- labeling files: one line per level, ``F`` for Free -------------------------------------


def format_labeling(network: HierarchicalNetwork, labeling: Labeling) -> str:
    F = network.free
    lines = []
    for x in labeling.levels:
        lines.append(" ".join("F" if v == F else str(int(v)) for v in x))
    return "\n".join(lines) + "\n"


def parse_labeling(network: HierarchicalNetwork, text: str) -> list[np.ndarray]:
    """Parse a labeling file; returns one array per line (base first).

    Fewer lines than levels is allowed (e.g. base only); callers decide.
    Lines are not skipped when empty, since a level may have no variables.
    """
    F = network.free
    rows = text.split("\n")
    if rows and rows[-1] == "":
        rows.pop()
    if len(rows) > network.num_levels:
        raise ParseError(f"{len(rows)} label lines for a {network.num_levels}-level network")
    out = []
    for lineno, line in enumerate(rows, start=1):
        vals = []
        for tok in line.split():
            if tok.upper() == "F":
                if lineno == 1:
                    raise ParseError("base variables cannot take the Free label", lineno)
                vals.append(F)
            else:
                vals.append(_index(tok, lineno, "label", F))
        if len(vals) != network.level_sizes[lineno - 1]:
            raise ParseError(f"level {lineno} needs {network.level_sizes[lineno - 1]} labels, "
                             f"got {len(vals)}", lineno)
        out.append(np.array(vals, dtype=np.int64))
    return out


def read_text(path) -> str:
    if path == "-":
        return sys.stdin.read()
    with open(os.fspath(path), encoding="utf-8") as fh:
        return fh.read()
