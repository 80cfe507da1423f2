"""A small weighted finite-state transducer engine.

Weights are negative natural-log probabilities: a path's weight is the sum
of its arc weights plus the final weight of its last state, and sets of
paths are combined with ``-log(sum(exp(-w)))``.

Labels are plain strings and :data:`EPSILON` is the empty string.

Algorithms only touch a machine through ``start``, ``num_states``,
``arcs(s)``, ``final(s)`` and ``matching(s, label)``, so on-demand machines
(see :class:`subseg.graphs.GrammarFst`) can be composed without being
materialised.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Iterator, NamedTuple, Sequence

from .errors import CyclicFstError, NoPathError, SubsegError, SymbolTableMismatch

EPSILON = ""
EPSILON_TEXT = "<eps>"

_INF = math.inf
_log1p = math.log1p
_exp = math.exp


class Arc(NamedTuple):
    ilabel: str
    olabel: str
    weight: float
    nextstate: int


def _arc_factory():
    new = tuple.__new__

    def make(ilabel, olabel, weight, nextstate):
        return new(Arc, (ilabel, olabel, weight, nextstate))
    return make


# NamedTuple's generated __new__ is a Python-level call; this skips it
_arc = _arc_factory()


def nlog_add(x: float, y: float) -> float:
    """Return ``-log(exp(-x) + exp(-y))`` without under/overflow."""
    if x > y:
        x, y = y, x
    if y == _INF:
        return x
    return x - _log1p(_exp(x - y))


def nlog_sum(weights: Iterable[float]) -> float:
    ws = list(weights)
    if not ws:
        return _INF
    m = min(ws)
    if m == _INF:
        return _INF
    return m - math.log(math.fsum(_exp(m - w) for w in ws))


class Wfst:
    """Explicit transducer with integer states and per-state arc lists."""

    def __init__(self, isyms: Iterable[str] | None = None, osyms: Iterable[str] | None = None):
        self.isyms = frozenset(isyms) if isyms is not None else None
        self.osyms = frozenset(osyms) if osyms is not None else None
        self.start: int | None = None
        self.finals: dict[int, float] = {}
        self._arcs: list[list[Arc]] = []
        self._index: list[dict[str, list[Arc]]] | None = None
        self._sorted = False
        self._accessible = False

    # -- construction -----------------------------------------------------

    def add_state(self) -> int:
        self._arcs.append([])
        self._index = None
        self._sorted = False
        self._accessible = False
        return len(self._arcs) - 1

    def set_start(self, state: int) -> None:
        self._check_state(state)
        self.start = state

    def set_final(self, state: int, weight: float = 0.0) -> None:
        self._check_state(state)
        _check_weight(weight)
        self.finals[state] = weight

    def add_arc(self, src: int, ilabel: str, olabel: str, weight: float, nextstate: int) -> None:
        self._check_state(src)
        self._check_state(nextstate)
        _check_weight(weight)
        self._arcs[src].append(Arc(ilabel, olabel, float(weight), nextstate))
        self._index = None
        self._sorted = False
        self._accessible = False

    def _check_state(self, state: int) -> None:
        if not 0 <= state < len(self._arcs):
            raise SubsegError(f"state {state} does not exist")

    # -- access -----------------------------------------------------------

    @property
    def num_states(self) -> int:
        return len(self._arcs)

    @property
    def num_arcs(self) -> int:
        return sum(len(row) for row in self._arcs)

    def states(self) -> range:
        return range(len(self._arcs))

    def arcs(self, state: int) -> Sequence[Arc]:
        return self._arcs[state]

    def final(self, state: int) -> float | None:
        return self.finals.get(state)

    def matching(self, state: int, label: str) -> Sequence[Arc]:
        """Arcs leaving ``state`` whose input label is ``label``."""
        if self._index is None:
            index = []
            for row in self._arcs:
                by_label: dict[str, list[Arc]] = {}
                for arc in row:
                    by_label.setdefault(arc.ilabel, []).append(arc)
                index.append(by_label)
            self._index = index
        return self._index[state].get(label, ())

    def is_acceptor(self) -> bool:
        return all(arc.ilabel == arc.olabel for row in self._arcs for arc in row)

    def __repr__(self) -> str:
        return f"<Wfst states={self.num_states} arcs={self.num_arcs} start={self.start}>"

    # -- text format --------------------------------------------------------

    def to_text(self) -> str:
        return to_text(self)

    @classmethod
    def from_text(cls, text: str) -> "Wfst":
        return from_text(text)


def _check_weight(weight: float) -> None:
    # rounding in -log(p) for p a hair above 1 gives tiny negatives
    if not math.isfinite(weight) or weight < -1e-9:
        raise SubsegError(f"weight {weight!r} is not a finite negative-log probability")


@dataclass(frozen=True)
class Path:
    labels: tuple[str, ...]
    weight: float

    @property
    def probability(self) -> float:
        return math.exp(-self.weight)


@dataclass(frozen=True)
class PathSet:
    """Distinct output label sequences with their weights."""

    paths: tuple[Path, ...]
    total: float

    def __len__(self) -> int:
        return len(self.paths)

    def __iter__(self) -> Iterator[Path]:
        return iter(self.paths)

    def as_dict(self) -> dict[tuple[str, ...], float]:
        return {p.labels: p.weight for p in self.paths}

    def labels(self) -> set[tuple[str, ...]]:
        return {p.labels for p in self.paths}

    def posteriors(self) -> dict[tuple[str, ...], float]:
        return {p.labels: math.exp(self.total - p.weight) for p in self.paths}


# ---------------------------------------------------------------------------
# composition


def compose(a, b) -> Wfst:
    """Compose ``a`` with ``b`` (``a`` applied first).

    Epsilon moves are sequenced: between two matched labels, ``a``'s
    epsilon-output moves happen before ``b``'s epsilon-input moves. This
    keeps one composed path per pair of component paths.
    """
    if a.osyms is not None and b.isyms is not None and a.osyms != b.isyms:
        raise SymbolTableMismatch("output symbols of the left machine differ from input symbols of the right")
    out = Wfst(a.isyms, b.osyms)
    if a.start is None or b.start is None:
        return out
    start = (a.start, b.start, 0)
    ids = {start: 0}
    queue = [start]
    rows = out._arcs
    rows.append([])
    finals = out.finals
    out.start = 0
    a_arcs, a_final = a.arcs, a.final
    b_match, b_final = b.matching, b.final
    make = _arc
    ids_get = ids.get

    i = 0
    while i < len(queue):
        sa, sb, filt = queue[i]
        row = rows[i]
        fa = a_final(sa)
        if fa is not None:
            fb = b_final(sb)
            if fb is not None:
                finals[i] = fa + fb
        for arc in a_arcs(sa):
            olabel = arc[1]
            if olabel == EPSILON:
                if filt:
                    continue
                key = (arc[3], sb, 0)
                sid = ids_get(key)
                if sid is None:
                    sid = ids[key] = len(queue)
                    queue.append(key)
                    rows.append([])
                row.append(make(arc[0], EPSILON, arc[2], sid))
                continue
            for barc in b_match(sb, olabel):
                key = (arc[3], barc[3], 0)
                sid = ids_get(key)
                if sid is None:
                    sid = ids[key] = len(queue)
                    queue.append(key)
                    rows.append([])
                row.append(make(arc[0], barc[1], arc[2] + barc[2], sid))
        for barc in b_match(sb, EPSILON):
            key = (sa, barc[3], 1)
            sid = ids_get(key)
            if sid is None:
                sid = ids[key] = len(queue)
                queue.append(key)
                rows.append([])
            row.append(make(EPSILON, barc[1], barc[2], sid))
        i += 1
    out._accessible = True
    return out


# ---------------------------------------------------------------------------
# structure


def _accessible(a) -> list[bool]:
    if getattr(a, "_accessible", False):
        return [True] * a.num_states
    seen = [False] * a.num_states
    if a.start is None:
        return seen
    seen[a.start] = True
    stack = [a.start]
    arcs = a.arcs
    while stack:
        s = stack.pop()
        for arc in arcs(s):
            t = arc[3]
            if not seen[t]:
                seen[t] = True
                stack.append(t)
    return seen


def _kahn(a, keep: Sequence[bool]) -> list[int]:
    """Topological order of the kept states; raises on a cycle."""
    n = a.num_states
    arcs = a.arcs
    indeg = [0] * n
    for s in range(n):
        if keep[s]:
            for arc in arcs(s):
                if keep[arc[3]]:
                    indeg[arc[3]] += 1
    todo = deque(s for s in range(n) if keep[s] and indeg[s] == 0)
    order = []
    while todo:
        s = todo.popleft()
        order.append(s)
        for arc in arcs(s):
            t = arc[3]
            if keep[t]:
                indeg[t] -= 1
                if indeg[t] == 0:
                    todo.append(t)
    if len(order) != sum(keep):
        raise CyclicFstError("machine has a cycle")
    return order


def topological_order(a) -> list[int]:
    """Topological order of the states reachable from the start."""
    if getattr(a, "_sorted", False):
        return list(range(a.num_states))
    return _kahn(a, _accessible(a))


def connect_topsort(a) -> Wfst:
    """Trim useless states and renumber the rest in topological order."""
    out = Wfst(a.isyms, a.osyms)
    n = a.num_states
    arcs, final = a.arcs, a.final
    access = _accessible(a)
    coaccess = [False] * n
    reverse: list[list[int]] = [[] for _ in range(n)]
    stack = []
    for s in range(n):
        if access[s]:
            for arc in arcs(s):
                reverse[arc[3]].append(s)
            if final(s) is not None:
                coaccess[s] = True
                stack.append(s)
    while stack:
        s = stack.pop()
        for p in reverse[s]:
            if not coaccess[p]:
                coaccess[p] = True
                stack.append(p)
    useful = [x and y for x, y in zip(access, coaccess)]
    if a.start is None or not useful[a.start]:
        return out
    order = _kahn(a, useful)
    renum = [-1] * n
    for i, s in enumerate(order):
        renum[s] = i
    rows = out._arcs
    make = _arc
    for s in order:
        row = []
        for arc in arcs(s):
            t = renum[arc[3]]
            if t >= 0:
                row.append(make(arc[0], arc[1], arc[2], t))
        rows.append(row)
        f = final(s)
        if f is not None:
            out.finals[renum[s]] = f
    out.start = renum[a.start]
    out._sorted = True
    return out


def project_output(a) -> Wfst:
    """Copy of ``a`` with every input label replaced by the output label."""
    out = Wfst(a.osyms, a.osyms)
    out.start = a.start
    out.finals = dict((s, a.final(s)) for s in range(a.num_states) if a.final(s) is not None)
    make = _arc
    out._arcs = [[arc if arc[0] == arc[1] else make(arc[1], arc[1], arc[2], arc[3]) for arc in a.arcs(s)]
                 for s in range(a.num_states)]
    out._sorted = getattr(a, "_sorted", False)
    return out


def remove_epsilon(a) -> Wfst:
    """Remove arcs labelled epsilon on both sides from an acyclic machine."""
    order = topological_order(a)
    n = a.num_states
    # closure[s]: states reachable from s by epsilon arcs, with log-summed weights
    closure: list[dict[int, float] | None] = [None] * n
    for s in reversed(order):
        cl = {s: 0.0}
        for arc in a.arcs(s):
            if arc.ilabel == EPSILON and arc.olabel == EPSILON:
                for t, w in closure[arc.nextstate].items():
                    w = arc.weight + w
                    cl[t] = nlog_add(cl[t], w) if t in cl else w
        closure[s] = cl
    out = Wfst(a.isyms, a.osyms)
    for _ in range(n):
        out._arcs.append([])
    out.start = a.start
    for s in order:
        row = out._arcs[s]
        final = None
        for t, w in closure[s].items():
            for arc in a.arcs(t):
                if arc.ilabel == EPSILON and arc.olabel == EPSILON:
                    continue
                row.append(Arc(arc.ilabel, arc.olabel, w + arc.weight, arc.nextstate))
            f = a.final(t)
            if f is not None:
                final = w + f if final is None else nlog_add(final, w + f)
        if final is not None:
            out.finals[s] = final
    return connect_topsort(out)


# ---------------------------------------------------------------------------
# path queries


def enumerate_paths(a) -> PathSet:
    """Every accepting path, keyed by output labels with epsilons dropped."""
    topological_order(a)
    merged: dict[tuple[str, ...], float] = {}
    if a.start is not None:
        stack = [(a.start, (), 0.0)]
        while stack:
            s, labels, w = stack.pop()
            f = a.final(s)
            if f is not None:
                total = w + f
                merged[labels] = nlog_add(merged[labels], total) if labels in merged else total
            for arc in reversed(a.arcs(s)):
                nl = labels + (arc.olabel,) if arc.olabel != EPSILON else labels
                stack.append((arc.nextstate, nl, w + arc.weight))
    paths = tuple(Path(k, v) for k, v in merged.items())
    return PathSet(paths, nlog_sum(p.weight for p in paths))


def shortest_distance(a, order: Sequence[int] | None = None) -> list[float]:
    """Forward log-summed distance from the start to every state."""
    if order is None:
        order = topological_order(a)
    alpha = [_INF] * a.num_states
    if a.start is None:
        return alpha
    alpha[a.start] = 0.0
    for s in order:
        d = alpha[s]
        if d == _INF:
            continue
        for arc in a.arcs(s):
            t = arc.nextstate
            w = d + arc.weight
            x = alpha[t]
            if x == _INF:
                alpha[t] = w
            elif w < x:
                alpha[t] = w - _log1p(_exp(w - x))
            else:
                alpha[t] = x - _log1p(_exp(x - w))
    return alpha


def forward_backward(a) -> tuple[list[list[float]], float]:
    """Arc posteriors (parallel to ``a.arcs(s)``) and the total weight."""
    order = topological_order(a)
    n = a.num_states
    alpha = shortest_distance(a, order)
    beta = [_INF] * n
    for s in reversed(order):
        f = a.final(s)
        acc = _INF if f is None else f
        for arc in a.arcs(s):
            w = arc.weight + beta[arc.nextstate]
            if w == _INF:
                continue
            if acc == _INF:
                acc = w
            elif w < acc:
                acc = w - _log1p(_exp(w - acc))
            else:
                acc = acc - _log1p(_exp(acc - w))
        beta[s] = acc
    total = beta[a.start] if a.start is not None else _INF
    posteriors: list[list[float]] = []
    for s in range(n):
        d = alpha[s]
        if d == _INF or total == _INF:
            posteriors.append([0.0] * len(a.arcs(s)))
            continue
        base = total - d
        posteriors.append([_exp(base - arc.weight - beta[arc.nextstate]) for arc in a.arcs(s)])
    return posteriors, total


def shortest_path(a) -> PathSet:
    """The single most probable path.

    Equal weights are resolved by the label sequence: fewer labels first,
    then code-point order.
    """
    order = topological_order(a)
    best: list[tuple | None] = [None] * a.num_states
    if a.start is None:
        raise NoPathError("machine has no accepting path")
    best[a.start] = (0.0, 0, ())
    winner = None
    for s in order:
        cur = best[s]
        if cur is None:
            continue
        d, k, labels = cur
        f = a.final(s)
        if f is not None:
            cand = (d + f, k, labels)
            if winner is None or cand < winner:
                winner = cand
        for arc in a.arcs(s):
            if arc.olabel != EPSILON:
                cand = (d + arc.weight, k + 1, labels + (arc.olabel,))
            else:
                cand = (d + arc.weight, k, labels)
            old = best[arc.nextstate]
            if old is None or cand < old:
                best[arc.nextstate] = cand
    if winner is None:
        raise NoPathError("machine has no accepting path")
    return PathSet((Path(winner[2], winner[0]),), winner[0])


class LazyComposition:
    """Forward-backward and best path over ``compose(a, b)``, built on the fly.

    ``a`` must be acyclic with no epsilon output labels and ``b`` must have
    no epsilon input labels; then the product states reachable from the
    start are visited in ``a``'s topological order and nothing is stored but
    the reachable product arcs. Results equal those of the materialised
    ``connect_topsort(compose(a, b))``.
    """

    def __init__(self, a, b):
        self.a, self.b = a, b
        order = topological_order(a)
        n = a.num_states
        self.order = order
        alpha: list[dict[int, float]] = [{} for _ in range(n)]
        # per a-state: (b-state, a-arc, b-arc, arc weight) for each product arc
        expanded: list[list[tuple]] = [[] for _ in range(n)]
        self.alpha, self.expanded = alpha, expanded
        if a.start is None or b.start is None:
            self.total = _INF
            return
        alpha[a.start][b.start] = 0.0
        a_arcs, b_match = a.arcs, b.matching
        for s in order:
            here = alpha[s]
            if not here:
                continue
            out = expanded[s]
            for sb, d in here.items():
                for arc in a_arcs(s):
                    if arc[1] == EPSILON:
                        raise SubsegError("left machine has epsilon output labels")
                    dest = alpha[arc[3]]
                    for barc in b_match(sb, arc[1]):
                        w = arc[2] + barc[2]
                        out.append((sb, arc, barc, w))
                        tb = barc[3]
                        x = dest.get(tb)
                        v = d + w
                        if x is None:
                            dest[tb] = v
                        elif v < x:
                            dest[tb] = v - _log1p(_exp(v - x))
                        else:
                            dest[tb] = x - _log1p(_exp(x - v))
        b_final = b.final
        ends = []
        for s, fa in ((s, a.final(s)) for s in order):
            if fa is None:
                continue
            for sb, d in alpha[s].items():
                fb = b_final(sb)
                if fb is not None:
                    ends.append(d + (fa + fb))
        self.total = nlog_sum(ends)

    def backward(self) -> list[dict[int, float]]:
        a, b = self.a, self.b
        beta: list[dict[int, float]] = [{} for _ in range(a.num_states)]
        b_final = b.final
        for s in reversed(self.order):
            here = self.alpha[s]
            if not here:
                continue
            fa = a.final(s)
            acc_by_state = beta[s]
            for sb in here:
                acc = _INF
                if fa is not None:
                    fb = b_final(sb)
                    if fb is not None:
                        acc = fa + fb
                acc_by_state[sb] = acc
            for sb, arc, barc, w in self.expanded[s]:
                v = w + beta[arc[3]][barc[3]]
                if v == _INF:
                    continue
                acc = acc_by_state[sb]
                if acc == _INF:
                    acc_by_state[sb] = v
                elif v < acc:
                    acc_by_state[sb] = v - _log1p(_exp(v - acc))
                else:
                    acc_by_state[sb] = acc - _log1p(_exp(acc - v))
        return beta

    def arc_posteriors(self) -> Iterator[tuple[int, Arc, Arc, float]]:
        """Yield ``(b_source_state, a_arc, b_arc, posterior)`` per product arc."""
        if self.total == _INF:
            return
        beta = self.backward()
        total = self.total
        for s in self.order:
            alpha_s = self.alpha[s]
            for sb, arc, barc, w in self.expanded[s]:
                yield sb, arc, barc, _exp(total - alpha_s[sb] - w - beta[arc[3]][barc[3]])

    def best_path(self) -> Path:
        """Same result and tie-breaking as :func:`shortest_path` on the product."""
        a, b = self.a, self.b
        if self.total == _INF:
            raise NoPathError("machine has no accepting path")
        best: list[dict[int, tuple]] = [{} for _ in range(a.num_states)]
        best[a.start][b.start] = (0.0, 0, ())
        winner = None
        b_final = b.final
        for s in self.order:
            here = best[s]
            if not here:
                continue
            fa = a.final(s)
            if fa is not None:
                for sb, (d, k, labels) in here.items():
                    fb = b_final(sb)
                    if fb is not None:
                        cand = (d + (fa + fb), k, labels)
                        if winner is None or cand < winner:
                            winner = cand
            for sb, arc, barc, w in self.expanded[s]:
                d, k, labels = here[sb]
                lab = barc[1]
                cand = (d + w, k + 1, labels + (lab,)) if lab != EPSILON else (d + w, k, labels)
                dest = best[arc[3]]
                old = dest.get(barc[3])
                if old is None or cand < old:
                    dest[barc[3]] = cand
        if winner is None:
            raise NoPathError("machine has no accepting path")
        return Path(winner[2], winner[0])


# ---------------------------------------------------------------------------
# text format


def _fmt_label(label: str) -> str:
    return EPSILON_TEXT if label == EPSILON else label


def _parse_label(field: str) -> str:
    return EPSILON if field == EPSILON_TEXT else field


def to_text(a) -> str:
    """AT&T-style listing; the first line's source state is the start."""
    if a.start is None:
        return ""
    lines = []
    order = [a.start] + [s for s in range(a.num_states) if s != a.start]
    for s in order:
        for arc in a.arcs(s):
            lines.append(f"{s}\t{arc.nextstate}\t{_fmt_label(arc.ilabel)}\t"
                         f"{_fmt_label(arc.olabel)}\t{arc.weight!r}")
        f = a.final(s)
        if f is not None:
            lines.append(f"{s}\t{f!r}")
    return "".join(line + "\n" for line in lines)


def from_text(text: str) -> Wfst:
    out = Wfst()
    pending_arcs = []
    pending_finals = []
    max_state = -1
    first = None
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        fields = line.split("\t")
        try:
            if len(fields) == 5:
                src, dst = int(fields[0]), int(fields[1])
                pending_arcs.append((src, _parse_label(fields[2]), _parse_label(fields[3]),
                                     float(fields[4]), dst))
                max_state = max(max_state, src, dst)
            elif len(fields) in (1, 2):
                src = int(fields[0])
                pending_finals.append((src, float(fields[1]) if len(fields) == 2 else 0.0))
                max_state = max(max_state, src)
            else:
                raise ValueError(f"expected 1, 2 or 5 fields, got {len(fields)}")
        except ValueError as exc:
            raise SubsegError(f"line {lineno}: {exc}") from None
        if first is None:
            first = int(fields[0])
    for _ in range(max_state + 1):
        out.add_state()
    if first is not None:
        out.set_start(first)
    for src, il, ol, w, dst in pending_arcs:
        out.add_arc(src, il, ol, w, dst)
    for s, w in pending_finals:
        out.set_final(s, w)
    return out
