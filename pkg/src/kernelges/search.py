"""Two-phase greedy equivalence search over CPDAGs.

Operator deltas are exact: a candidate's delta is the change in the total
graph score between the deterministic consistent extensions of the current
and the candidate CPDAG, so only families whose parent sets actually change
are re-scored (and the score cache makes repeats free). Accepted deltas
therefore telescope into the running total, which keeps every phase monotone
by construction.
"""

from dataclasses import dataclass
from itertools import combinations

from .graphs import Cpdag, GraphError, consistent_extension, pdag_to_cpdag
from .scores import OURS, ScoreCache, optimize_local_score


@dataclass(frozen=True)
class EdgeOperator:
    """Insert(x, y, T) adds x -> y and orients t - y as t -> y for t in T;
    Delete(x, y, H) removes the x/y edge and orients the H edges away from
    the deleted pair."""

    kind: str
    x: str
    y: str
    subset: tuple = ()
    delta: float = 0.0


@dataclass(frozen=True)
class GesStep:
    phase: str
    operator: EdgeOperator
    total_score: float


@dataclass
class GesResult:
    cpdag: Cpdag
    total_score: float
    steps: list
    score_kind: str
    families: dict


class _Scorer:
    def __init__(self, dataset, kind, cache):
        self.dataset = dataset
        self.kind = kind
        self.cache = cache if cache is not None else ScoreCache()

    def family(self, node, parents):
        return optimize_local_score(
            self.dataset, node, parents, kind=self.kind, cache=self.cache
        )

    def total(self, cpdag):
        pm = consistent_extension(cpdag).parent_map()
        return sum(self.family(v, pa).value for v, pa in pm.items())

    def delta(self, before_pm, after_cpdag):
        after_pm = consistent_extension(after_cpdag).parent_map()
        out = 0.0
        for node, parents in after_pm.items():
            if parents != before_pm[node]:
                out += self.family(node, parents).value
                out -= self.family(node, before_pm[node]).value
        return out


def _is_clique(g, nodes):
    nodes = list(nodes)
    return all(
        g.adjacent(a, b) for i, a in enumerate(nodes) for b in nodes[i + 1 :]
    )


def _semi_directed_reachable(g, src, dst, blocked):
    """True when a path src ~> dst exists using undirected edges or directed
    edges traversed forward, avoiding the blocked nodes."""
    if src in blocked:
        return False
    seen = {src}
    frontier = [src]
    while frontier:
        v = frontier.pop()
        for w in g.neighbors(v) | {b for a, b in g.directed if a == v}:
            if w in blocked or w in seen:
                continue
            if w == dst:
                return True
            seen.add(w)
            frontier.append(w)
    return False


def _insert_valid(g, x, y, subset):
    na = g.neighbors(y) & g.adjacencies(x)
    blocking = na | set(subset)
    if not _is_clique(g, blocking):
        return False
    return not _semi_directed_reachable(g, y, x, blocking)


def _delete_valid(g, x, y, subset):
    na = g.neighbors(y) & g.adjacencies(x)
    return _is_clique(g, na - set(subset))


def _insert_edits(g, x, y, subset):
    directed = set(g.directed) | {(x, y)} | {(t, y) for t in subset}
    dropped = {frozenset((t, y)) for t in subset}
    undirected = {e for e in g.undirected if frozenset(e) not in dropped}
    return Cpdag(g.nodes, frozenset(directed), frozenset(undirected))


def _delete_edits(g, x, y, subset):
    directed = set(g.directed) - {(x, y), (y, x)}
    undirected = {e for e in g.undirected if frozenset(e) != frozenset((x, y))}
    for h in subset:
        for tail, head in ((y, h), (x, h)):
            pair = frozenset((tail, head))
            if any(frozenset(e) == pair for e in undirected):
                undirected = {e for e in undirected if frozenset(e) != pair}
                directed.add((tail, head))
    return Cpdag(g.nodes, frozenset(directed), frozenset(undirected))


def apply_operator(g, op):
    """Apply a validated operator and re-complete to a CPDAG."""
    if op.kind == "insert":
        if g.adjacent(op.x, op.y):
            raise GraphError(f"insert endpoints {op.x}, {op.y} already adjacent")
        allowed = g.neighbors(op.y) - g.adjacencies(op.x) - {op.x}
        if not set(op.subset) <= allowed:
            raise GraphError(f"subset {op.subset} invalid for insert({op.x}, {op.y})")
        if not _insert_valid(g, op.x, op.y, op.subset):
            raise GraphError(f"insert({op.x}, {op.y}, {op.subset}) violates validity")
        return pdag_to_cpdag(_insert_edits(g, op.x, op.y, op.subset))
    if op.kind == "delete":
        if not (g.has_directed(op.x, op.y) or g.has_undirected(op.x, op.y)):
            raise GraphError(f"no deletable edge between {op.x} and {op.y}")
        na = g.neighbors(op.y) & g.adjacencies(op.x)
        if not set(op.subset) <= na:
            raise GraphError(f"subset {op.subset} invalid for delete({op.x}, {op.y})")
        if not _delete_valid(g, op.x, op.y, op.subset):
            raise GraphError(f"delete({op.x}, {op.y}, {op.subset}) violates validity")
        return pdag_to_cpdag(_delete_edits(g, op.x, op.y, op.subset))
    raise GraphError(f"unknown operator kind {op.kind!r}")


def _subsets(g, pool):
    pool = g.sorted_nodes(pool)
    for r in range(len(pool) + 1):
        yield from combinations(pool, r)


def enumerate_inserts(cpdag, dataset, kind=OURS, cache=None):
    """All valid insert operators with their exact score deltas.

    Candidates run over ordered non-adjacent pairs (x, y) and subsets T of
    y's undirected neighbors that are not adjacent to x; in the common case
    the delta reduces to the difference of two local family scores of y.
    """
    scorer = _Scorer(dataset, kind, cache)
    before_pm = consistent_extension(cpdag).parent_map()
    ops = []
    for x in cpdag.nodes:
        for y in cpdag.nodes:
            if x == y or cpdag.adjacent(x, y):
                continue
            pool = cpdag.neighbors(y) - cpdag.adjacencies(x) - {x}
            for subset in _subsets(cpdag, pool):
                if not _insert_valid(cpdag, x, y, subset):
                    continue
                after = pdag_to_cpdag(_insert_edits(cpdag, x, y, subset))
                delta = scorer.delta(before_pm, after)
                ops.append(EdgeOperator("insert", x, y, subset, delta))
    return ops


def enumerate_deletes(cpdag, dataset, kind=OURS, cache=None):
    """All valid delete operators with their exact score deltas.

    Directed edges are enumerated as (x, y) = (tail, head); undirected edges
    once, in canonical node order.
    """
    scorer = _Scorer(dataset, kind, cache)
    before_pm = consistent_extension(cpdag).parent_map()
    edges = sorted(cpdag.directed, key=lambda e: (cpdag.nodes.index(e[0]), cpdag.nodes.index(e[1])))
    edges += sorted(cpdag.undirected, key=lambda e: (cpdag.nodes.index(e[0]), cpdag.nodes.index(e[1])))
    ops = []
    for x, y in edges:
        na = cpdag.neighbors(y) & cpdag.adjacencies(x)
        for subset in _subsets(cpdag, na):
            if not _delete_valid(cpdag, x, y, subset):
                continue
            after = pdag_to_cpdag(_delete_edits(cpdag, x, y, subset))
            delta = scorer.delta(before_pm, after)
            ops.append(EdgeOperator("delete", x, y, subset, delta))
    return ops


def ges(dataset, kind=OURS, cache=None):
    """Forward-backward greedy search from the empty CPDAG.

    Each step applies the operator with the largest strictly positive delta
    (ties resolved by enumeration order, which is lexicographic in (x, y,
    subset)); a phase stops when no positive delta remains.
    """
    cache = cache if cache is not None else ScoreCache()
    scorer = _Scorer(dataset, kind, cache)
    g = Cpdag(dataset.names)
    total = scorer.total(g)
    steps = []
    for phase, enumerate_ops in (("forward", enumerate_inserts), ("backward", enumerate_deletes)):
        while True:
            best = None
            for op in enumerate_ops(g, dataset, kind=kind, cache=cache):
                if op.delta > 0 and (best is None or op.delta > best.delta):
                    best = op
            if best is None:
                break
            g = apply_operator(g, best)
            total += best.delta
            steps.append(GesStep(phase, best, total))
    families = {
        v: scorer.family(v, pa)
        for v, pa in consistent_extension(g).parent_map().items()
    }
    return GesResult(g, total, steps, kind, families)
