"""DAGs, CPDAGs and the PDAG completion machinery used by the search.

A Cpdag instance is structurally just a partially directed graph (directed
plus undirected edge sets); pdag_to_cpdag turns any extendable PDAG into the
completed representative of its equivalence class.
"""

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np


class GraphError(ValueError):
    """Invalid graph structure or operator."""


@dataclass(frozen=True)
class Dag:
    nodes: tuple
    edges: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "edges", frozenset(tuple(e) for e in self.edges))
        if len(set(self.nodes)) != len(self.nodes):
            raise GraphError("duplicate node names")
        known = set(self.nodes)
        for a, b in self.edges:
            if a not in known or b not in known:
                raise GraphError(f"edge ({a}, {b}) references unknown node")
            if a == b:
                raise GraphError(f"self loop on {a}")
        self.topological_order()  # raises on cycles

    def parents(self, node):
        return frozenset(a for a, b in self.edges if b == node)

    def children(self, node):
        return frozenset(b for a, b in self.edges if a == node)

    def topological_order(self):
        """Kahn's algorithm, picking the lowest-index ready node first."""
        in_deg = {v: 0 for v in self.nodes}
        for _, b in self.edges:
            in_deg[b] += 1
        order, ready = [], [v for v in self.nodes if in_deg[v] == 0]
        while ready:
            v = ready.pop(0)
            order.append(v)
            for w in sorted(self.children(v), key=self.nodes.index):
                in_deg[w] -= 1
                if in_deg[w] == 0:
                    ready.append(w)
            ready.sort(key=self.nodes.index)
        if len(order) != len(self.nodes):
            raise GraphError("graph contains a cycle")
        return tuple(order)

    def parent_map(self):
        return {v: tuple(sorted(self.parents(v), key=self.nodes.index)) for v in self.nodes}

    def to_cpdag(self):
        return dag_to_cpdag(self)


@dataclass(frozen=True)
class Cpdag:
    nodes: tuple
    directed: frozenset = field(default_factory=frozenset)
    undirected: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        if len(set(self.nodes)) != len(self.nodes):
            raise GraphError("duplicate node names")
        idx = {v: k for k, v in enumerate(self.nodes)}
        directed = frozenset(tuple(e) for e in self.directed)
        undirected = frozenset(
            (a, b) if idx[a] < idx[b] else (b, a) for a, b in self.undirected
        )
        object.__setattr__(self, "directed", directed)
        object.__setattr__(self, "undirected", undirected)
        seen = set()
        for a, b in list(directed) + list(undirected):
            if a not in idx or b not in idx:
                raise GraphError(f"edge ({a}, {b}) references unknown node")
            if a == b:
                raise GraphError(f"self loop on {a}")
            pair = frozenset((a, b))
            if pair in seen:
                raise GraphError(f"conflicting edges between {a} and {b}")
            seen.add(pair)

    @cached_property
    def _index(self):
        return {v: k for k, v in enumerate(self.nodes)}

    @cached_property
    def _adjacency(self):
        adj = {v: set() for v in self.nodes}
        for a, b in self.directed:
            adj[a].add(b)
            adj[b].add(a)
        for a, b in self.undirected:
            adj[a].add(b)
            adj[b].add(a)
        return adj

    @cached_property
    def _neighbor_map(self):
        nb = {v: set() for v in self.nodes}
        for a, b in self.undirected:
            nb[a].add(b)
            nb[b].add(a)
        return nb

    @cached_property
    def _parent_map(self):
        pa = {v: set() for v in self.nodes}
        for a, b in self.directed:
            pa[b].add(a)
        return pa

    def adjacent(self, a, b):
        return b in self._adjacency[a]

    def adjacencies(self, v):
        """All nodes connected to v by any edge."""
        return frozenset(self._adjacency[v])

    def neighbors(self, v):
        """Nodes connected to v by an undirected edge."""
        return frozenset(self._neighbor_map[v])

    def parents(self, v):
        return frozenset(self._parent_map[v])

    def has_directed(self, a, b):
        return (a, b) in self.directed

    def has_undirected(self, a, b):
        i = self._index
        pair = (a, b) if i[a] < i[b] else (b, a)
        return pair in self.undirected

    def num_adjacencies(self):
        return len(self.directed) + len(self.undirected)

    def sorted_nodes(self, items):
        return tuple(sorted(items, key=self._index.__getitem__))


def dag_to_cpdag(dag):
    """Completed representative of a DAG's Markov equivalence class.

    Orients the v-structures of the DAG and closes under the Meek rules;
    everything else stays undirected.
    """
    idx = {v: k for k, v in enumerate(dag.nodes)}
    adjacent = {frozenset(e) for e in dag.edges}
    directed = set()
    for c in dag.nodes:
        pa = sorted(dag.parents(c), key=idx.__getitem__)
        for i, a in enumerate(pa):
            for b in pa[i + 1 :]:
                if frozenset((a, b)) not in adjacent:
                    directed.add((a, c))
                    directed.add((b, c))
    undirected = set()
    for a, b in dag.edges:
        if (a, b) not in directed:
            pair = (a, b) if idx[a] < idx[b] else (b, a)
            undirected.add(pair)
    directed, undirected = _meek_closure(dag.nodes, directed, undirected)
    return Cpdag(dag.nodes, frozenset(directed), frozenset(undirected))


def _meek_closure(nodes, directed, undirected):
    """Close a pattern under Meek rules R1-R3, orienting undirected edges."""
    idx = {v: k for k, v in enumerate(nodes)}
    directed = set(directed)
    undirected = set(undirected)

    def adjacent(a, b):
        return (
            (a, b) in directed
            or (b, a) in directed
            or (a, b) in undirected
            or (b, a) in undirected
        )

    def should_orient(u, v):
        # R1: w -> u, u - v, w and v non-adjacent  =>  u -> v
        for w, t in directed:
            if t == u and w != v and not adjacent(w, v):
                return True
        # R2: u -> w -> v with u - v  =>  u -> v
        for w in nodes:
            if (u, w) in directed and (w, v) in directed:
                return True
        # R3: u - w1, u - w2, w1 -> v, w2 -> v, w1 and w2 non-adjacent  =>  u -> v
        into_v = [w for w, t in directed if t == v]
        linked = [
            w
            for w in into_v
            if (u, w) in undirected or (w, u) in undirected
        ]
        for i, w1 in enumerate(linked):
            for w2 in linked[i + 1 :]:
                if not adjacent(w1, w2):
                    return True
        return False

    changed = True
    while changed:
        changed = False
        for a, b in sorted(undirected, key=lambda e: (idx[e[0]], idx[e[1]])):
            if (a, b) not in undirected:
                continue
            for u, v in ((a, b), (b, a)):
                if should_orient(u, v):
                    undirected.discard((a, b))
                    directed.add((u, v))
                    changed = True
                    break
    return directed, undirected


def consistent_extension(g):
    """Deterministic consistent extension of a PDAG (Dor-Tarsi construction).

    Repeatedly takes the lowest-index node that has no outgoing directed edge
    and whose undirected neighbors are adjacent to all of its other
    neighbors, and orients that node's undirected edges into it. Raises
    GraphError when the PDAG admits no consistent extension.
    """
    alive = set(g.nodes)
    directed = set(g.directed)
    undirected = set(g.undirected)
    oriented = []

    def adjacent(a, b):
        return (
            (a, b) in directed
            or (b, a) in directed
            or (a, b) in undirected
            or (b, a) in undirected
        )

    while alive:
        chosen = None
        for x in g.nodes:
            if x not in alive:
                continue
            if any(a == x for a, _ in directed):
                continue
            und_nb = {b for a, b in undirected if a == x} | {
                a for a, b in undirected if b == x
            }
            adj = und_nb | {a for a, b in directed if b == x}
            if all(adjacent(u, w) for u in und_nb for w in adj if w != u):
                chosen = x
                break
        if chosen is None:
            raise GraphError("PDAG admits no consistent extension")
        for a, b in list(undirected):
            if chosen in (a, b):
                other = b if a == chosen else a
                oriented.append((other, chosen))
                undirected.discard((a, b))
        directed = {(a, b) for a, b in directed if a != chosen and b != chosen}
        alive.discard(chosen)
    return Dag(g.nodes, frozenset(g.directed) | frozenset(oriented))


def pdag_to_cpdag(g):
    """Complete a PDAG to the CPDAG of its equivalence class."""
    return dag_to_cpdag(consistent_extension(g))
